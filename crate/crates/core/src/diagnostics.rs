//! Certification diagnostics on computed trajectories: the energy balance,
//! the a-priori energy inequality, the weak-formulation identities, the
//! interface transmission defects, and the solution norms.
//!
//! One point deserves a note because it is load-bearing for every energy
//! check in this module. Multiplying the Galerkin equations by `p a_lk` and
//! `b_k'` and summing yields, with the half-weighted storage
//! `E = 1/2 (p |h|^2 + |u_t|^2 + |nu u_z|^2)`, the exact semidiscrete law
//!
//! ```text
//! dE/dt + p |sqrt(r) h_z|^2
//!    = p (r j, h_z) + (f, u_t) - (p/2) ((h^2)_z, u_t)
//! ```
//!
//! The last term is the magnetoelastic exchange between the field and the
//! medium; it cancels only under the full-weight storage `p |h|^2`. The
//! ledger therefore carries the exchange integral explicitly
//! (`transfer_cum`), and the balance residual below is exactly zero for an
//! exact solve of the truncated system.

use serde::Serialize;

use crate::basis::{self, build_basis};
use crate::error::{Error, Result};
use crate::galerkin::SpectralState;
use crate::timestepper::Trajectory;

/// Energy-ledger record at one sample: instantaneous storage terms plus
/// running time integrals of dissipation, work, and exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub t: f64,
    /// `p/2 |h|^2`.
    pub term_h: f64,
    /// `1/2 |u_t|^2`.
    pub term_ut: f64,
    /// `1/2 |nu u_z|^2`.
    pub term_uz: f64,
    /// `int_0^t p |sqrt(r) h_z|^2`.
    pub dissipation_cum: f64,
    /// `int_0^t p (r j, h_z)`.
    pub work_j_cum: f64,
    /// `int_0^t (f, u_t)`.
    pub work_f_cum: f64,
    /// `int_0^t -(p/2) ((h^2)_z, u_t)`: magnetoelastic exchange.
    pub transfer_cum: f64,
    /// `int_0^t p (r, j^2)` (data only).
    pub forcing_jsq_cum: f64,
    /// `int_0^t |f|^2` (data only).
    pub forcing_fsq_cum: f64,
}

impl EnergyRecord {
    pub fn total(&self) -> f64 {
        self.term_h + self.term_ut + self.term_uz
    }
}

/// Signed energy-balance defect at every sample:
/// `[E(t) - E(0)] + dissipation - work_j - work_f - transfer`.
/// Identically zero for an exact solve of the truncated system; what is
/// reported is integrator plus time-quadrature error.
pub fn energy_balance_residual(traj: &Trajectory) -> Vec<f64> {
    let e0 = traj.ledger.first().map(|r| r.total()).unwrap_or(0.0);
    traj.ledger
        .iter()
        .map(|r| {
            (r.total() - e0) + r.dissipation_cum
                - r.work_j_cum
                - r.work_f_cum
                - r.transfer_cum
        })
        .collect()
}

/// Per-sample sides of the a-priori energy inequality.
#[derive(Debug, Clone)]
pub struct EnergyInequality {
    pub times: Vec<f64>,
    /// `1/2 int (p h^2 + u_t^2 + nu^2 u_z^2)(t) + 1/2 int_0^t p r h_z^2`.
    pub lhs: Vec<f64>,
    /// `int (p h0^2 + u1^2 + nu^2 u0z^2) + int_0^t p r j^2 + 2 t int_0^t f^2`.
    pub rhs: Vec<f64>,
    /// `rhs - lhs`; nonnegative for a true weak solution.
    pub slack: Vec<f64>,
}

/// Evaluate the energy inequality on a trajectory. The initial-data terms
/// on the right-hand side are computed from the data fields themselves.
pub fn energy_inequality_slack(traj: &Trajectory) -> EnergyInequality {
    let asm = traj.assembled();
    let spec = &asm.spec;
    let p = spec.p;
    let init_terms = asm.grid.integrate(|z| {
        let h01 = spec.h01.eval(z);
        let h02 = spec.h02.eval(z);
        let u1 = spec.u1.eval(z);
        let u0z = spec.u0.eval_dz(z);
        let nu = spec.nu.eval(z);
        p * (h01 * h01 + h02 * h02) + u1 * u1 + nu * nu * u0z * u0z
    });

    let mut times = Vec::with_capacity(traj.ledger.len());
    let mut lhs = Vec::with_capacity(traj.ledger.len());
    let mut rhs = Vec::with_capacity(traj.ledger.len());
    let mut slack = Vec::with_capacity(traj.ledger.len());
    for r in &traj.ledger {
        let l = r.total() + 0.5 * r.dissipation_cum;
        let rr = init_terms + r.forcing_jsq_cum + 2.0 * r.t * r.forcing_fsq_cum;
        times.push(r.t);
        lhs.push(l);
        rhs.push(rr);
        slack.push(rr - l);
    }
    EnergyInequality { times, lhs, rhs, slack }
}

/// Smooth-in-time test factor `alpha(t)` (polynomial) with `alpha(T) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestAlpha {
    /// Coefficients of `alpha(t) = c0 + c1 t + c2 t^2 + ...`.
    pub coeffs: Vec<f64>,
}

impl TestAlpha {
    /// `(T - t)^power`.
    pub fn horizon_power(horizon: f64, power: u32) -> Self {
        // expand (T - t)^power by the binomial theorem
        let mut coeffs = vec![0.0; power as usize + 1];
        for (i, c) in coeffs.iter_mut().enumerate() {
            let binom = binomial(power as usize, i);
            *c = binom * horizon.powi(power as i32 - i as i32) * (-1.0f64).powi(i as i32);
        }
        Self { coeffs }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    pub fn eval_dt(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * t + c * i as f64;
        }
        acc
    }

    fn validate(&self, horizon: f64) -> Result<()> {
        let scale = self.coeffs.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        if self.eval(horizon).abs() > 1e-10 * scale {
            return Err(Error::Invalid(format!(
                "test factor must vanish at T = {horizon}, got alpha(T) = {}",
                self.eval(horizon)
            )));
        }
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Maximum absolute weak-formulation defects over a test family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct WeakResiduals {
    pub res_h1: f64,
    pub res_h2: f64,
    pub res_u: f64,
}

/// The default reproducible family: `alpha in {(T-t), (T-t)^2}`,
/// modes `k <= min(N, 16)`.
pub fn default_test_family(horizon: f64, n_modes: usize) -> Vec<(TestAlpha, usize)> {
    let mut family = Vec::new();
    for power in [1u32, 2] {
        for k in 0..n_modes.min(16) {
            family.push((TestAlpha::horizon_power(horizon, power), k));
        }
    }
    family
}

/// Assemble the weak-formulation identities with test functions
/// `alpha(t) psi_k(z)` and return the absolute defects. Mode indices beyond
/// the trajectory's basis are allowed: they probe the unresolved tail of
/// the flux balance.
pub fn weak_residual(
    traj: &Trajectory,
    family: &[(TestAlpha, usize)],
) -> Result<WeakResiduals> {
    let asm = traj.assembled();
    let spec = &asm.spec;
    let horizon = traj.horizon();
    let n_nodes = asm.grid.nodes().len();

    let mut max_k = 0;
    for (alpha, k) in family {
        alpha.validate(horizon)?;
        max_k = max_k.max(*k);
    }
    if family.is_empty() {
        return Ok(WeakResiduals::default());
    }

    // test-mode tables, possibly beyond the solution basis
    let ext = build_basis(max_k + 1)?;
    let psi: Vec<Vec<f64>> = (0..=max_k)
        .map(|k| asm.grid.nodes().iter().map(|&z| ext.eval(k, z)).collect())
        .collect();
    let dpsi: Vec<Vec<f64>> = (0..=max_k)
        .map(|k| asm.grid.nodes().iter().map(|&z| ext.eval_deriv(k, z)).collect())
        .collect();

    // initial-data pairings (from the data fields)
    let h01: Vec<f64> = asm.grid.nodes().iter().map(|&z| spec.h01.eval(z)).collect();
    let h02: Vec<f64> = asm.grid.nodes().iter().map(|&z| spec.h02.eval(z)).collect();
    let u1: Vec<f64> = asm.grid.nodes().iter().map(|&z| spec.u1.eval(z)).collect();

    let w = asm.grid.weights();
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n_nodes {
            acc += w[i] * a[i] * b[i];
        }
        acc
    };

    // accumulate the time integrals with a per-sample-interval Gauss rule
    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let mut acc_h1 = vec![0.0; family.len()];
    let mut acc_h2 = vec![0.0; family.len()];
    let mut acc_u = vec![0.0; family.len()];

    const GX: [f64; 3] = [0.11270166537925831, 0.5, 0.88729833462074169];
    const GW: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

    let mut buf = vec![0.0; n_nodes];
    for pair in times.windows(2) {
        let span = pair[1] - pair[0];
        for g in 0..3 {
            let s = pair[0] + span * GX[g];
            let wt = span * GW[g];
            let state = traj.dense_eval(s)?;
            let fields = asm.nodal_fields(&state);
            let (j1, j2, f) = asm.forcing_at(s);

            for (idx, (alpha, k)) in family.iter().enumerate() {
                let a = alpha.eval(s);
                let adot = alpha.eval_dt(s);
                // h_l identities
                for (acc, hv, hd, j) in [
                    (&mut acc_h1[idx], &fields.h1, &fields.h1z, &j1),
                    (&mut acc_h2[idx], &fields.h2, &fields.h2z, &j2),
                ] {
                    for i in 0..n_nodes {
                        buf[i] = -adot * hv[i] * psi[*k][i]
                            + a * (asm.r_nodes()[i] * hd[i]
                                - hv[i] * fields.ut[i]
                                - asm.r_nodes()[i] * j[i])
                                * dpsi[*k][i];
                    }
                    let mut term = 0.0;
                    for i in 0..n_nodes {
                        term += w[i] * buf[i];
                    }
                    *acc += wt * term;
                }
                // u identity: -u_t alpha' psi + nu^2 u_z alpha psi'
                //             + p (h^2)_z alpha psi - f alpha psi
                let mut term = 0.0;
                for i in 0..n_nodes {
                    let h2z = 2.0 * (fields.h1[i] * fields.h1z[i] + fields.h2[i] * fields.h2z[i]);
                    term += w[i]
                        * (-adot * fields.ut[i] * psi[*k][i]
                            + a * asm.nu2_nodes()[i] * fields.uz[i] * dpsi[*k][i]
                            + a * spec.p * h2z * psi[*k][i]
                            - a * f[i] * psi[*k][i]);
                }
                acc_u[idx] += wt * term;
            }
        }
    }

    let mut out = WeakResiduals::default();
    for (idx, (alpha, k)) in family.iter().enumerate() {
        let a0 = alpha.eval(0.0);
        let d_h1 = (acc_h1[idx] - a0 * dot(&h01, &psi[*k])).abs();
        let d_h2 = (acc_h2[idx] - a0 * dot(&h02, &psi[*k])).abs();
        let d_u = (acc_u[idx] - a0 * dot(&u1, &psi[*k])).abs();
        out.res_h1 = out.res_h1.max(d_h1);
        out.res_h2 = out.res_h2.max(d_h2);
        out.res_u = out.res_u.max(d_u);
    }
    Ok(out)
}

/// One measured jump: the raw one-sided difference at offsets `delta` and
/// `delta/2`, and the Richardson extrapolation toward `delta -> 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEstimate {
    pub coarse: f64,
    pub fine: f64,
    pub richardson: f64,
}

impl JumpEstimate {
    fn from_samples(coarse: f64, fine: f64) -> Self {
        Self { coarse, fine, richardson: 2.0 * fine - coarse }
    }
}

/// Transmission-condition defects at one breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakpointJumps {
    pub z: f64,
    /// `[h1]`, `[h2]`, `[u]`: continuity brackets (O(delta) for the smooth
    /// reconstruction).
    pub h1: JumpEstimate,
    pub h2: JumpEstimate,
    pub u: JumpEstimate,
    /// `[r (h1z - j1)]`, `[r (h2z - j2)]`: magnetic flux defects.
    pub flux_h1: JumpEstimate,
    pub flux_h2: JumpEstimate,
    /// `[nu^2 u_z]`: elastic flux defect.
    pub flux_u: JumpEstimate,
}

/// Jump diagnostics at every coefficient breakpoint at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpReport {
    pub t: f64,
    pub delta: f64,
    pub rows: Vec<BreakpointJumps>,
}

/// Evaluate the transmission brackets at `z_k +- delta` and `z_k +- delta/2`
/// and Richardson-extrapolate toward zero offset.
pub fn jump_report(traj: &Trajectory, t: f64, delta: f64) -> Result<JumpReport> {
    let asm = traj.assembled();
    let spec = &asm.spec;
    let breakpoints = spec.breakpoints();
    if breakpoints.is_empty() {
        return Ok(JumpReport { t, delta, rows: Vec::new() });
    }
    // half the smallest piece width, including the wrap-around piece
    let mut min_width = f64::INFINITY;
    let mut edges = vec![0.0];
    edges.extend_from_slice(&breakpoints);
    edges.push(1.0);
    for w in edges.windows(2) {
        min_width = min_width.min(w[1] - w[0]);
    }
    if !(delta > 0.0 && delta < 0.5 * min_width) {
        return Err(Error::Invalid(format!(
            "jump offset delta = {delta} outside (0, {})",
            0.5 * min_width
        )));
    }

    let state = traj.dense_eval(t)?;
    let basis = &asm.basis;

    let eval_side = |z: f64| -> [f64; 6] {
        let (h1, h1z) = basis::synthesize_at(&state.a1, basis, z);
        let (h2, h2z) = basis::synthesize_at(&state.a2, basis, z);
        let (u, uz) = basis::synthesize_at(&state.b, basis, z);
        let r = spec.r.eval(z);
        let nu = spec.nu.eval(z);
        let j1 = spec.j1.eval(t, z);
        let j2 = spec.j2.eval(t, z);
        [h1, h2, u, r * (h1z - j1), r * (h2z - j2), nu * nu * uz]
    };

    let mut rows = Vec::with_capacity(breakpoints.len());
    for &z in &breakpoints {
        let jumps_at = |d: f64| -> [f64; 6] {
            let right = eval_side(z + d);
            let left = eval_side(z - d);
            let mut out = [0.0; 6];
            for i in 0..6 {
                out[i] = right[i] - left[i];
            }
            out
        };
        let coarse = jumps_at(delta);
        let fine = jumps_at(0.5 * delta);
        rows.push(BreakpointJumps {
            z,
            h1: JumpEstimate::from_samples(coarse[0], fine[0]),
            h2: JumpEstimate::from_samples(coarse[1], fine[1]),
            u: JumpEstimate::from_samples(coarse[2], fine[2]),
            flux_h1: JumpEstimate::from_samples(coarse[3], fine[3]),
            flux_h2: JumpEstimate::from_samples(coarse[4], fine[4]),
            flux_u: JumpEstimate::from_samples(coarse[5], fine[5]),
        });
    }
    Ok(JumpReport { t, delta, rows })
}

/// Max over a time grid with three rounds of bracket refinement around the
/// sampled argmax (trajectories are continuous, so the essential supremum
/// is the max).
pub(crate) fn vrai_max(times: &[f64], f: &mut dyn FnMut(f64) -> f64) -> f64 {
    if times.is_empty() {
        return 0.0;
    }
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, &t) in times.iter().enumerate() {
        let v = f(t);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = times[best_i.saturating_sub(1)];
    let mut hi = times[(best_i + 1).min(times.len() - 1)];
    let mut best_t = times[best_i];
    for _ in 0..3 {
        for s in 1..=4 {
            let t = lo + (hi - lo) * s as f64 / 5.0;
            let v = f(t);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        let third = (hi - lo) / 3.0;
        lo = (best_t - third).max(lo);
        hi = (best_t + third).min(hi);
    }
    best
}

/// `sqrt(int_0^T f2(t) dt)` by a per-interval 3-point Gauss rule.
pub(crate) fn time_l2(times: &[f64], f2: &mut dyn FnMut(f64) -> f64) -> f64 {
    const GX: [f64; 3] = [0.11270166537925831, 0.5, 0.88729833462074169];
    const GW: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let mut acc = 0.0;
    for pair in times.windows(2) {
        let span = pair[1] - pair[0];
        for g in 0..3 {
            acc += span * GW[g] * f2(pair[0] + span * GX[g]);
        }
    }
    acc.max(0.0).sqrt()
}

fn state_at(traj: &Trajectory, t: f64) -> SpectralState {
    traj.dense_eval(t).expect("norm evaluation inside the trajectory span")
}

/// `V2` norm of the magnetic pair: `vrai max_t |h(t)|_2 + |h_z|_{2,Pi_T}`.
pub fn norm_v2_h(traj: &Trajectory) -> f64 {
    let asm = traj.assembled();
    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let sup = vrai_max(&times, &mut |t| {
        let st = state_at(traj, t);
        let (h1, _) = basis::synthesize(&st.a1, &asm.basis, &asm.grid).unwrap();
        let (h2, _) = basis::synthesize(&st.a2, &asm.basis, &asm.grid).unwrap();
        let mut acc = 0.0;
        for i in 0..h1.len() {
            acc += asm.grid.weights()[i] * (h1[i] * h1[i] + h2[i] * h2[i]);
        }
        acc.sqrt()
    });
    let l2z = time_l2(&times, &mut |t| {
        let st = state_at(traj, t);
        let (_, h1z) = basis::synthesize(&st.a1, &asm.basis, &asm.grid).unwrap();
        let (_, h2z) = basis::synthesize(&st.a2, &asm.basis, &asm.grid).unwrap();
        let mut acc = 0.0;
        for i in 0..h1z.len() {
            acc += asm.grid.weights()[i] * (h1z[i] * h1z[i] + h2z[i] * h2z[i]);
        }
        acc
    });
    sup + l2z
}

/// `W2^{1,1}` norm of the displacement: sum of the space-time `L2` norms of
/// `u`, `u_z`, `u_t`.
pub fn norm_w11_u(traj: &Trajectory) -> f64 {
    let asm = traj.assembled();
    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let sq = |sel: usize| {
        let mut f = |t: f64| {
            let st = state_at(traj, t);
            let (u, uz) = basis::synthesize(&st.b, &asm.basis, &asm.grid).unwrap();
            let (ut, _) = basis::synthesize(&st.bdot, &asm.basis, &asm.grid).unwrap();
            let field = match sel {
                0 => &u,
                1 => &uz,
                _ => &ut,
            };
            let mut acc = 0.0;
            for i in 0..field.len() {
                acc += asm.grid.weights()[i] * field[i] * field[i];
            }
            acc
        };
        time_l2(&times, &mut f)
    };
    sq(0) + sq(1) + sq(2)
}

/// Max over samples of the pointwise field magnitude `|h|`.
pub fn max_abs_h(traj: &Trajectory) -> f64 {
    let asm = traj.assembled();
    let mut best = 0.0f64;
    for st in &traj.samples {
        let (h1, _) = basis::synthesize(&st.a1, &asm.basis, &asm.grid).unwrap();
        let (h2, _) = basis::synthesize(&st.a2, &asm.basis, &asm.grid).unwrap();
        for i in 0..h1.len() {
            best = best.max((h1[i] * h1[i] + h2[i] * h2[i]).sqrt());
        }
    }
    best
}

/// Norm block of the serialized report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormsBlock {
    pub v2_h: f64,
    pub w11_u: f64,
    pub max_abs_h: f64,
}

/// JSON-shaped diagnostics with stable field names.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub times: Vec<f64>,
    pub eq24_residual: Vec<f64>,
    pub eq37_slack: Vec<f64>,
    pub jumps: Vec<BreakpointJumps>,
    pub weak_residual: WeakResiduals,
    pub norms: NormsBlock,
}

/// Build the full report: balance residual and inequality slack at every
/// sample, jump diagnostics at the final time, the default weak-residual
/// family, and the solution norms.
pub fn build_report(traj: &Trajectory, jump_delta: Option<f64>) -> Result<DiagnosticsReport> {
    let times: Vec<f64> = traj.ledger.iter().map(|r| r.t).collect();
    let eq24 = energy_balance_residual(traj);
    let eq37 = energy_inequality_slack(traj).slack;
    let jumps = match jump_delta {
        Some(delta) => jump_report(traj, traj.horizon(), delta)?.rows,
        None => Vec::new(),
    };
    let family = default_test_family(traj.horizon(), traj.assembled().n_modes());
    let weak = weak_residual(traj, &family)?;
    let norms = NormsBlock {
        v2_h: norm_v2_h(traj),
        w11_u: norm_w11_u(traj),
        max_abs_h: max_abs_h(traj),
    };
    Ok(DiagnosticsReport {
        times,
        eq24_residual: eq24,
        eq37_slack: eq37,
        jumps,
        weak_residual: weak,
        norms,
    })
}
