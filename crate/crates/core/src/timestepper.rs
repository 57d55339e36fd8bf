//! Adaptive time integration of the Galerkin system with dense output and
//! an attached energy ledger.
//!
//! The stiff part of the system is linear and mode-diagonal once the
//! coefficients are replaced by their means: the magnetic modes decay at
//! rate `r_mean w_k^2` and the elastic mode pairs rotate at frequency
//! `sqrt(mean(nu^2)) w_k`. Both schemes below exploit that structure:
//!
//! - `exp-rk3` (default): integrating-factor (Lawson) method that applies
//!   the mean-coefficient flow exactly and advances the remainder with the
//!   embedded Bogacki-Shampine 3(2) pair. On a pure mean-coefficient
//!   diffusion problem the remainder vanishes and the step size climbs
//!   straight to `dt_max`.
//! - `imex-ars3`: a two-stage, third-order SDIRK treatment of the same
//!   linear part (A-stable, diagonal solves) with explicit third-order
//!   treatment of the remainder and an embedded second-order error
//!   estimate.
//!
//! Step acceptance uses the usual mixed-tolerance weighted RMS norm. Every
//! accepted step contributes to the energy ledger by a 3-point Gauss rule
//! in time over the scheme's dense output.

use std::str::FromStr;
use std::sync::Arc;

use crate::diagnostics::EnergyRecord;
use crate::error::{Error, Result};
use crate::galerkin::{Assembled, LedgerRates, SpectralState, Workspace};

/// Stepping scheme identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Exponential Runge-Kutta of order 3 with an embedded second-order
    /// estimate (phi-function form).
    ExpRk3,
    /// ARS-type IMEX with a two-stage SDIRK implicit part, order 3(2).
    ImexArs3,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp-rk3" => Ok(Scheme::ExpRk3),
            "imex-ars3" => Ok(Scheme::ImexArs3),
            other => Err(Error::Invalid(format!(
                "unknown scheme '{other}' (expected exp-rk3 or imex-ars3)"
            ))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::ExpRk3 => write!(f, "exp-rk3"),
            Scheme::ImexArs3 => write!(f, "imex-ars3"),
        }
    }
}

/// Integrator tolerances and step bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub dt_init: f64,
    pub dt_max: f64,
    pub scheme: Scheme,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            dt_init: 1e-4,
            dt_max: 1e-2,
            scheme: Scheme::ExpRk3,
            max_steps: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        if !(self.dt_init > 0.0) || !(self.dt_max > 0.0) || self.dt_init > self.dt_max {
            return Err(Error::Invalid(format!(
                "step bounds must satisfy 0 < dt_init <= dt_max, got {} and {}",
                self.dt_init, self.dt_max
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Invalid("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Integration statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Mode-diagonal linear part: decay rates for the magnetic modes and
/// rotation frequencies for the elastic mode pairs.
#[derive(Debug, Clone)]
struct LinearOp {
    n: usize,
    /// `r_mean * w_k^2`.
    decay: Vec<f64>,
    /// `sqrt(mean(nu^2)) * w_k`.
    wave: Vec<f64>,
}

impl LinearOp {
    fn new(assembled: &Assembled) -> Self {
        let n = assembled.n_modes();
        let r = assembled.r_mean();
        let nu = assembled.nu2_mean().sqrt();
        let decay = (0..n).map(|k| r * assembled.basis.omega(k).powi(2)).collect();
        let wave = (0..n).map(|k| nu * assembled.basis.omega(k)).collect();
        Self { n, decay, wave }
    }

    /// `out = Lambda y`.
    fn apply(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            out[k] = -self.decay[k] * y[k];
            out[n + k] = -self.decay[k] * y[n + k];
            let b = y[2 * n + k];
            let bd = y[3 * n + k];
            out[2 * n + k] = bd;
            out[3 * n + k] = -self.wave[k] * self.wave[k] * b;
        }
    }

    /// Solve `(I - mu Lambda) x = rhs` (diagonal / 2x2 blocks).
    fn solve_shifted(&self, mu: f64, rhs: &[f64], out: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let denom = 1.0 + mu * self.decay[k];
            out[k] = rhs[k] / denom;
            out[n + k] = rhs[n + k] / denom;
            let w = self.wave[k];
            let det = 1.0 + mu * mu * w * w;
            let rb = rhs[2 * n + k];
            let rbd = rhs[3 * n + k];
            out[2 * n + k] = (rb + mu * rbd) / det;
            out[3 * n + k] = (-mu * w * w * rb + rbd) / det;
        }
    }

    /// Per-mode factors of `exp(s Lambda)`.
    fn exp_table(&self, s: f64) -> ModeMap {
        let scal = self.decay.iter().map(|&d| (-d * s).exp()).collect();
        let wave = self.wave.iter().map(|&w| rot(w, s)).collect();
        ModeMap { scal, wave }
    }

    /// Per-mode factors of `phi_k(s Lambda)` for `k = 1, 2, 3`. On the
    /// 2x2 wave blocks `A^2 = -w^2 I`, so each phi is `alpha I + beta s A`.
    fn phi_tables(&self, s: f64) -> [ModeMap; 3] {
        let mut out = [ModeMap::empty(), ModeMap::empty(), ModeMap::empty()];
        for &d in &self.decay {
            let (p1, p2, p3) = phi_scalar(-d * s);
            out[0].scal.push(p1);
            out[1].scal.push(p2);
            out[2].scal.push(p3);
        }
        for &w in &self.wave {
            let [(a1, b1), (a2, b2), (a3, b3)] = phi_wave(w * s);
            out[0].wave.push(wave_block(a1, b1, s, w));
            out[1].wave.push(wave_block(a2, b2, s, w));
            out[2].wave.push(wave_block(a3, b3, s, w));
        }
        out
    }
}

fn rot(w: f64, s: f64) -> [f64; 4] {
    if w == 0.0 {
        [1.0, s, 0.0, 1.0]
    } else {
        let (sin, cos) = (w * s).sin_cos();
        [cos, sin / w, -w * sin, cos]
    }
}

/// `alpha I + beta s A` with `A = [[0, 1], [-w^2, 0]]`.
fn wave_block(alpha: f64, beta: f64, s: f64, w: f64) -> [f64; 4] {
    [alpha, beta * s, -beta * s * w * w, alpha]
}

/// `(phi_1, phi_2, phi_3)(z)` for real `z <= 0`, stable across magnitudes.
fn phi_scalar(z: f64) -> (f64, f64, f64) {
    if z.abs() < 1.0 {
        // Taylor: phi_k(z) = sum_j z^j / (j + k)!
        let mut p1 = 0.0;
        let mut p2 = 0.0;
        let mut p3 = 0.0;
        let mut pow = 1.0;
        let mut fact = 1.0; // j!
        for j in 0..18u32 {
            if j > 0 {
                pow *= z;
                fact *= j as f64;
            }
            p1 += pow / (fact * (j as f64 + 1.0));
            p2 += pow / (fact * (j as f64 + 1.0) * (j as f64 + 2.0));
            p3 += pow / (fact * (j as f64 + 1.0) * (j as f64 + 2.0) * (j as f64 + 3.0));
        }
        (p1, p2, p3)
    } else {
        let em1 = z.exp_m1();
        let p1 = em1 / z;
        let p2 = (em1 - z) / (z * z);
        let p3 = (em1 - z - 0.5 * z * z) / (z * z * z);
        (p1, p2, p3)
    }
}

/// `(alpha_k, beta_k)` pairs of `phi_k` on a wave block, `k = 1, 2, 3`,
/// as functions of the rotation angle `s = w dt`.
fn phi_wave(s: f64) -> [(f64, f64); 3] {
    if s.abs() < 1.0 {
        // alpha_k = sum (-1)^m s^{2m} / (2m + k)!,
        // beta_k  = sum (-1)^m s^{2m} / (2m + 1 + k)!
        let mut coeffs = [0.0f64; 6];
        let s2 = s * s;
        let mut pow = 1.0;
        let mut fact = [0.0f64; 24];
        fact[0] = 1.0;
        for i in 1..24 {
            fact[i] = fact[i - 1] * i as f64;
        }
        for m in 0..10 {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            for k in 1..=3usize {
                coeffs[k - 1] += sign * pow / fact[2 * m + k];
                coeffs[k + 2] += sign * pow / fact[2 * m + 1 + k];
            }
            pow *= s2;
        }
        [(coeffs[0], coeffs[3]), (coeffs[1], coeffs[4]), (coeffs[2], coeffs[5])]
    } else {
        let (sin, cos) = s.sin_cos();
        let s2 = s * s;
        let a1 = sin / s;
        let b1 = (1.0 - cos) / s2;
        let a2 = b1;
        let b2 = (s - sin) / (s2 * s);
        let a3 = b2;
        let b3 = (cos - 1.0 + 0.5 * s2) / (s2 * s2);
        [(a1, b1), (a2, b2), (a3, b3)]
    }
}

/// Per-mode linear map: a scalar factor on each magnetic mode and a 2x2
/// block on each elastic mode pair.
struct ModeMap {
    scal: Vec<f64>,
    wave: Vec<[f64; 4]>,
}

impl ModeMap {
    fn empty() -> Self {
        Self { scal: Vec::new(), wave: Vec::new() }
    }

    /// `map3 = c1 map1 + c2 map2 + c3 map3` building a combined table.
    fn combine(maps: &[ModeMap; 3], c: [f64; 3]) -> ModeMap {
        let n = maps[0].scal.len();
        let mut scal = Vec::with_capacity(n);
        let mut wave = Vec::with_capacity(n);
        for k in 0..n {
            scal.push(c[0] * maps[0].scal[k] + c[1] * maps[1].scal[k] + c[2] * maps[2].scal[k]);
            let mut block = [0.0; 4];
            for (ci, map) in c.iter().zip(maps.iter()) {
                for (bi, mi) in block.iter_mut().zip(&map.wave[k]) {
                    *bi += ci * mi;
                }
            }
            wave.push(block);
        }
        ModeMap { scal, wave }
    }

    /// `out = M v`.
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.scal.len();
        for k in 0..n {
            out[k] = self.scal[k] * v[k];
            out[n + k] = self.scal[k] * v[n + k];
            let m = &self.wave[k];
            let b = v[2 * n + k];
            let bd = v[3 * n + k];
            out[2 * n + k] = m[0] * b + m[1] * bd;
            out[3 * n + k] = m[2] * b + m[3] * bd;
        }
    }

    /// `out += c * M v`.
    fn axpy(&self, c: f64, v: &[f64], out: &mut [f64]) {
        let n = self.scal.len();
        for k in 0..n {
            out[k] += c * self.scal[k] * v[k];
            out[n + k] += c * self.scal[k] * v[n + k];
            let m = &self.wave[k];
            let b = v[2 * n + k];
            let bd = v[3 * n + k];
            out[2 * n + k] += c * (m[0] * b + m[1] * bd);
            out[3 * n + k] += c * (m[2] * b + m[3] * bd);
        }
    }
}

/// One accepted step node of the dense skeleton.
#[derive(Debug, Clone)]
struct DenseNode {
    t: f64,
    y: Vec<f64>,
    /// Nonstiff remainder `N = R - Lambda y` at this node.
    n_part: Vec<f64>,
    /// Full derivative `R`.
    full: Vec<f64>,
}

/// Cumulative ledger integrals at a node.
#[derive(Debug, Clone, Copy, Default)]
struct LedgerCums {
    dissipation: f64,
    work_j: f64,
    work_f: f64,
    transfer: f64,
    forcing_jsq: f64,
    forcing_fsq: f64,
}

impl LedgerCums {
    fn add_rate(&mut self, w: f64, r: &LedgerRates) {
        self.dissipation += w * r.dissipation;
        self.work_j += w * r.work_j;
        self.work_f += w * r.work_f;
        self.transfer += w * r.transfer;
        self.forcing_jsq += w * r.forcing_jsq;
        self.forcing_fsq += w * r.forcing_fsq;
    }
}

/// Dense-output solution of one integration: accepted-step skeleton,
/// requested samples with per-sample energy records, and step statistics.
pub struct Trajectory {
    assembled: Arc<Assembled>,
    scheme: Scheme,
    lin: LinearOp,
    nodes: Vec<DenseNode>,
    node_cums: Vec<LedgerCums>,
    pub samples: Vec<SpectralState>,
    pub ledger: Vec<EnergyRecord>,
    pub stats: StepStats,
}

/// 3-point Gauss-Legendre rule on [0, 1] for the in-step time quadrature.
const GAUSS3_X: [f64; 3] = [0.11270166537925831, 0.5, 0.88729833462074169];
const GAUSS3_W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Integrate the assembled problem from `t = 0` to the problem horizon.
/// `output_times` are extra sample instants (the accepted steps are always
/// sampled); they must lie within `[0, T]`.
pub fn integrate(
    assembled: Arc<Assembled>,
    config: &IntegratorConfig,
    output_times: &[f64],
) -> Result<Trajectory> {
    config.validate()?;
    let horizon = assembled.spec.horizon;
    for &t in output_times {
        if !(0.0..=horizon * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
    }

    let lin = LinearOp::new(&assembled);
    let n4 = 4 * assembled.n_modes();
    let mut ws = Workspace::new(&assembled);
    let mut stats = StepStats::default();

    let mut scratch = StepScratch::new(n4);
    let mut y = assembled.init_state().to_flat();
    let mut t = 0.0;

    // derivative at t = 0
    let mut n0 = vec![0.0; n4];
    let mut full0 = vec![0.0; n4];
    eval_nonstiff(&assembled, &lin, 0.0, &y, &mut n0, &mut full0, &mut ws, &mut stats)?;

    let mut nodes =
        vec![DenseNode { t: 0.0, y: y.clone(), n_part: n0.clone(), full: full0.clone() }];
    let mut node_cums = vec![LedgerCums::default()];

    let mut dt = config.dt_init.min(horizon);
    let mut nonfinite_rejections = 0usize;

    while t < horizon * (1.0 - 1e-14) {
        if stats.accepted + stats.rejected >= config.max_steps {
            return Err(Error::MaxStepsExceeded { t, horizon, max_steps: config.max_steps });
        }
        let dt_floor = 1e-13 * t.max(1.0);
        if dt < dt_floor {
            if nonfinite_rejections > 0 {
                return Err(Error::NonFinite { t });
            }
            return Err(Error::StepSizeCollapse { t, dt });
        }
        let dt_step = dt.min(horizon - t);

        let attempt = match config.scheme {
            Scheme::ExpRk3 => step_exp_rk3(
                &assembled,
                &lin,
                t,
                &y,
                &n0,
                dt_step,
                &mut scratch,
                &mut ws,
                &mut stats,
            ),
            Scheme::ImexArs3 => step_imex_ars3(
                &assembled,
                &lin,
                t,
                &y,
                &n0,
                dt_step,
                &mut scratch,
                &mut ws,
                &mut stats,
            ),
        };

        match attempt {
            Ok(()) => {}
            Err(Error::NonFinite { .. }) => {
                // overshoot inside a stage: retry with a much smaller step
                stats.rejected += 1;
                nonfinite_rejections += 1;
                if nonfinite_rejections > 60 {
                    return Err(Error::NonFinite { t });
                }
                dt = dt_step * 0.25;
                continue;
            }
            Err(e) => return Err(e),
        }

        // estimator order: 2 for the embedded pair, 3 for step doubling
        let ctrl_exp = match config.scheme {
            Scheme::ExpRk3 => -1.0 / 3.0,
            Scheme::ImexArs3 => -1.0 / 4.0,
        };
        let err = weighted_error(&scratch.err_vec, &y, &scratch.y_new, config);
        if err <= 1.0 {
            nonfinite_rejections = 0;
            t += dt_step;
            y.copy_from_slice(&scratch.y_new);
            n0.copy_from_slice(&scratch.n_new);
            full0.copy_from_slice(&scratch.full_new);
            let node = DenseNode { t, y: y.clone(), n_part: n0.clone(), full: full0.clone() };
            let prev = nodes.last().unwrap();
            let mut cums = *node_cums.last().unwrap();
            accumulate_ledger(&assembled, &lin, config.scheme, prev, &node, node.t, &mut cums, &mut ws);
            nodes.push(node);
            node_cums.push(cums);
            stats.accepted += 1;

            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(ctrl_exp)).clamp(0.2, 5.0) };
            dt = (dt_step * grow).min(config.dt_max);
        } else {
            stats.rejected += 1;
            let shrink = (0.9 * err.powf(ctrl_exp)).clamp(0.1, 0.5);
            dt = dt_step * shrink;
        }
    }

    let mut traj = Trajectory {
        assembled,
        scheme: config.scheme,
        lin,
        nodes,
        node_cums,
        samples: Vec::new(),
        ledger: Vec::new(),
        stats,
    };
    traj.build_samples(output_times, &mut ws);
    Ok(traj)
}

struct StepScratch {
    y_new: Vec<f64>,
    n_new: Vec<f64>,
    full_new: Vec<f64>,
    err_vec: Vec<f64>,
    stage: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    tmp: Vec<f64>,
    l2: Vec<f64>,
    l3: Vec<f64>,
}

impl StepScratch {
    fn new(n4: usize) -> Self {
        Self {
            y_new: vec![0.0; n4],
            n_new: vec![0.0; n4],
            full_new: vec![0.0; n4],
            err_vec: vec![0.0; n4],
            stage: vec![0.0; n4],
            k2: vec![0.0; n4],
            k3: vec![0.0; n4],
            tmp: vec![0.0; n4],
            l2: vec![0.0; n4],
            l3: vec![0.0; n4],
        }
    }
}

/// `N(t, y) = R(t, y) - Lambda y` plus the full derivative.
#[allow(clippy::too_many_arguments)]
fn eval_nonstiff(
    assembled: &Assembled,
    lin: &LinearOp,
    t: f64,
    y: &[f64],
    n_out: &mut [f64],
    full_out: &mut [f64],
    ws: &mut Workspace,
    stats: &mut StepStats,
) -> Result<()> {
    assembled.rhs_flat(t, y, full_out, ws)?;
    stats.rhs_evals += 1;
    lin.apply(y, n_out);
    for i in 0..y.len() {
        n_out[i] = full_out[i] - n_out[i];
    }
    Ok(())
}

/// Exponential RK3 in phi-function form with stages at 0, 1/2, 1:
///
/// ```text
/// Y2 = E_{1/2} y + (dt/2) phi1(dt/2 L) N1
/// Y3 = E_1 y + dt phi1(dt L) (2 N2 - N1)
/// y1 = E_1 y + dt [ (phi1 - 3 phi2 + 4 phi3) N1
///                   + (4 phi2 - 8 phi3) N2 + (4 phi3 - phi2) N3 ]
/// err = dt (4 phi3 - phi2) (N1 - 2 N2 + N3)
/// ```
///
/// The kernels integrate the mean-coefficient flow exactly, so the local
/// error (and the estimate) is driven by the time variation of the slow
/// remainder alone; a constant remainder is propagated exactly.
#[allow(clippy::too_many_arguments)]
fn step_exp_rk3(
    assembled: &Assembled,
    lin: &LinearOp,
    t: f64,
    y: &[f64],
    n0: &[f64],
    dt: f64,
    s: &mut StepScratch,
    ws: &mut Workspace,
    stats: &mut StepStats,
) -> Result<()> {
    let e_half = lin.exp_table(0.5 * dt);
    let phi_half = lin.phi_tables(0.5 * dt);
    let e_full = lin.exp_table(dt);
    let phi = lin.phi_tables(dt);
    let w1 = ModeMap::combine(&phi, [1.0, -3.0, 4.0]);
    let w2 = ModeMap::combine(&phi, [0.0, 4.0, -8.0]);
    let w3 = ModeMap::combine(&phi, [0.0, -1.0, 4.0]);

    // Y2 = E_{1/2} y + dt/2 phi1(dt/2 L) N1
    e_half.apply(y, &mut s.stage);
    phi_half[0].axpy(0.5 * dt, n0, &mut s.stage);
    let stage = s.stage.clone();
    eval_nonstiff(assembled, lin, t + 0.5 * dt, &stage, &mut s.k2, &mut s.tmp, ws, stats)?;

    // Y3 = E_1 y + dt phi1(dt L) (2 N2 - N1)
    for i in 0..y.len() {
        s.tmp[i] = 2.0 * s.k2[i] - n0[i];
    }
    e_full.apply(y, &mut s.stage);
    let diff = s.tmp.clone();
    phi[0].axpy(dt, &diff, &mut s.stage);
    let stage = s.stage.clone();
    eval_nonstiff(assembled, lin, t + dt, &stage, &mut s.k3, &mut s.tmp, ws, stats)?;

    // combination step
    e_full.apply(y, &mut s.y_new);
    w1.axpy(dt, n0, &mut s.y_new);
    w2.axpy(dt, &s.k2, &mut s.y_new);
    w3.axpy(dt, &s.k3, &mut s.y_new);

    // error estimate: second difference of the remainder
    for i in 0..y.len() {
        s.tmp[i] = n0[i] - 2.0 * s.k2[i] + s.k3[i];
    }
    s.err_vec.fill(0.0);
    let second_diff = s.tmp.clone();
    w3.axpy(dt, &second_diff, &mut s.err_vec);

    // remainder and full derivative at the new node (next step's N1)
    let y_new = s.y_new.clone();
    eval_nonstiff(assembled, lin, t + dt, &y_new, &mut s.n_new, &mut s.full_new, ws, stats)?;
    Ok(())
}

/// ARS(2,3,3)-type IMEX kernel: two SDIRK stages with
/// gamma = (3 + sqrt(3))/6 on the linear part and third-order explicit
/// weights on the remainder. `n_start` must hold `N(t, y)`.
fn ars3_kernel(
    assembled: &Assembled,
    lin: &LinearOp,
    t: f64,
    y: &[f64],
    n_start: &[f64],
    dt: f64,
    s: &mut StepScratch,
    ws: &mut Workspace,
    stats: &mut StepStats,
) -> Result<Vec<f64>> {
    let gamma = (3.0 + 3.0f64.sqrt()) / 6.0;
    let mu = gamma * dt;

    // U2: (I - mu L) U2 = y + gamma dt N1
    for i in 0..y.len() {
        s.tmp[i] = y[i] + mu * n_start[i];
    }
    lin.solve_shifted(mu, &s.tmp, &mut s.stage);
    lin.apply(&s.stage, &mut s.l2);
    let stage = s.stage.clone();
    eval_nonstiff(assembled, lin, t + gamma * dt, &stage, &mut s.k2, &mut s.tmp, ws, stats)?;

    // U3: (I - mu L) U3 = y + dt[(gamma-1) N1 + 2(1-gamma) N2 + (1-2 gamma) L2]
    for i in 0..y.len() {
        s.tmp[i] = y[i]
            + dt * ((gamma - 1.0) * n_start[i]
                + 2.0 * (1.0 - gamma) * s.k2[i]
                + (1.0 - 2.0 * gamma) * s.l2[i]);
    }
    lin.solve_shifted(mu, &s.tmp, &mut s.stage);
    lin.apply(&s.stage, &mut s.l3);
    let stage = s.stage.clone();
    eval_nonstiff(assembled, lin, t + (1.0 - gamma) * dt, &stage, &mut s.k3, &mut s.tmp, ws, stats)?;

    // y1 = y + dt/2 (N2 + N3 + L2 + L3)
    let mut out = vec![0.0; y.len()];
    for i in 0..y.len() {
        out[i] = y[i] + 0.5 * dt * (s.k2[i] + s.k3[i] + s.l2[i] + s.l3[i]);
    }
    Ok(out)
}

/// One adaptive IMEX step by step doubling: one full kernel step against
/// two half steps; the Richardson difference estimates the local error of
/// the propagated two-half-step solution (order 3, estimate order 4).
#[allow(clippy::too_many_arguments)]
fn step_imex_ars3(
    assembled: &Assembled,
    lin: &LinearOp,
    t: f64,
    y: &[f64],
    n0: &[f64],
    dt: f64,
    s: &mut StepScratch,
    ws: &mut Workspace,
    stats: &mut StepStats,
) -> Result<()> {
    let y_full = ars3_kernel(assembled, lin, t, y, n0, dt, s, ws, stats)?;
    let y_half = ars3_kernel(assembled, lin, t, y, n0, 0.5 * dt, s, ws, stats)?;
    let mut n_half = vec![0.0; y.len()];
    let mut full_half = vec![0.0; y.len()];
    eval_nonstiff(assembled, lin, t + 0.5 * dt, &y_half, &mut n_half, &mut full_half, ws, stats)?;
    let y_two = ars3_kernel(assembled, lin, t + 0.5 * dt, &y_half, &n_half, 0.5 * dt, s, ws, stats)?;

    // local extrapolation: propagate the two-half-step solution
    for i in 0..y.len() {
        s.err_vec[i] = (y_two[i] - y_full[i]) / 7.0;
        s.y_new[i] = y_two[i];
    }
    let y_new = s.y_new.clone();
    eval_nonstiff(assembled, lin, t + dt, &y_new, &mut s.n_new, &mut s.full_new, ws, stats)?;
    Ok(())
}

fn weighted_error(err: &[f64], y0: &[f64], y1: &[f64], config: &IntegratorConfig) -> f64 {
    let mut acc = 0.0;
    for i in 0..err.len() {
        let scale = config.abs_tol + config.rel_tol * y0[i].abs().max(y1[i].abs());
        let e = err[i] / scale;
        acc += e * e;
    }
    (acc / err.len() as f64).sqrt()
}

/// Accumulate the ledger integrals from `node0.t` to `t_end <= node1.t`
/// with a 3-point Gauss rule in time on the dense output.
#[allow(clippy::too_many_arguments)]
fn accumulate_ledger(
    assembled: &Assembled,
    lin: &LinearOp,
    scheme: Scheme,
    node0: &DenseNode,
    node1: &DenseNode,
    t_end: f64,
    cums: &mut LedgerCums,
    ws: &mut Workspace,
) {
    let span = t_end - node0.t;
    if span <= 0.0 {
        return;
    }
    for g in 0..3 {
        let s = node0.t + span * GAUSS3_X[g];
        let y = dense_between(lin, scheme, node0, node1, s);
        let rates = assembled.ledger_rates(s, &y, ws);
        cums.add_rate(span * GAUSS3_W[g], &rates);
    }
}

/// Scheme dense output between two consecutive nodes.
fn dense_between(
    lin: &LinearOp,
    scheme: Scheme,
    node0: &DenseNode,
    node1: &DenseNode,
    s: f64,
) -> Vec<f64> {
    let dt = node1.t - node0.t;
    let tau = s - node0.t;
    let theta = tau / dt;
    let h00 = (1.0 + 2.0 * theta) * (1.0 - theta) * (1.0 - theta);
    let h10 = theta * (1.0 - theta) * (1.0 - theta);
    let h01 = theta * theta * (3.0 - 2.0 * theta);
    let h11 = theta * theta * (theta - 1.0);
    let n = lin.n;
    let mut out = vec![0.0; 4 * n];

    match scheme {
        Scheme::ImexArs3 => {
            // plain cubic Hermite on the state
            for i in 0..4 * n {
                out[i] = h00 * node0.y[i]
                    + dt * h10 * node0.full[i]
                    + h01 * node1.y[i]
                    + dt * h11 * node1.full[i];
            }
        }
        Scheme::ExpRk3 => {
            // Hermite in the integrating-factor variable: exact for the
            // mean-coefficient linear flow. The backward factor
            // `exp(d (dt - tau))` grows with the mode stiffness, so modes
            // with `d dt` beyond a couple of e-folds instead use an
            // endpoint-corrected exponential-Euler interpolant.
            for k in 0..n {
                let d = lin.decay[k];
                for part in [k, n + k] {
                    if d * dt <= 2.0 {
                        let ef = (-d * tau).exp();
                        let eb = (d * (dt - tau)).exp();
                        out[part] = h00 * ef * node0.y[part]
                            + dt * h10 * ef * node0.n_part[part]
                            + h01 * eb * node1.y[part]
                            + dt * h11 * eb * node1.n_part[part];
                    } else {
                        // y(tau) = e^{-d tau} y0 + tau phi1(-d tau) N(theta),
                        // nudged linearly so the right endpoint is exact
                        let interp = |s: f64, th: f64| -> f64 {
                            let nv =
                                (1.0 - th) * node0.n_part[part] + th * node1.n_part[part];
                            let (p1, _, _) = phi_scalar(-d * s);
                            (-d * s).exp() * node0.y[part] + s * p1 * nv
                        };
                        let end_defect = node1.y[part] - interp(dt, 1.0);
                        out[part] = interp(tau, theta) + theta * end_defect;
                    }
                }
                let w = lin.wave[k];
                let rf = rot(w, tau);
                let rb = rot(w, tau - dt);
                let b0 = node0.y[2 * n + k];
                let bd0 = node0.y[3 * n + k];
                let nb0 = node0.n_part[2 * n + k];
                let nbd0 = node0.n_part[3 * n + k];
                let b1 = node1.y[2 * n + k];
                let bd1 = node1.y[3 * n + k];
                let nb1 = node1.n_part[2 * n + k];
                let nbd1 = node1.n_part[3 * n + k];
                out[2 * n + k] = h00 * (rf[0] * b0 + rf[1] * bd0)
                    + dt * h10 * (rf[0] * nb0 + rf[1] * nbd0)
                    + h01 * (rb[0] * b1 + rb[1] * bd1)
                    + dt * h11 * (rb[0] * nb1 + rb[1] * nbd1);
                out[3 * n + k] = h00 * (rf[2] * b0 + rf[3] * bd0)
                    + dt * h10 * (rf[2] * nb0 + rf[3] * nbd0)
                    + h01 * (rb[2] * b1 + rb[3] * bd1)
                    + dt * h11 * (rb[2] * nb1 + rb[3] * nbd1);
            }
        }
    }
    out
}

impl Trajectory {
    pub fn assembled(&self) -> &Arc<Assembled> {
        &self.assembled
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn horizon(&self) -> f64 {
        self.nodes.last().map(|n| n.t).unwrap_or(0.0)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Times of the accepted-step skeleton.
    pub fn node_times(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.t).collect()
    }

    /// State at any `t` in `[0, T]` by the scheme's dense-output
    /// interpolant; node times return the stored states exactly.
    pub fn dense_eval(&self, t: f64) -> Result<SpectralState> {
        let horizon = self.horizon();
        if !(-1e-12..=horizon + 1e-12 * horizon.max(1.0)).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        let t = t.clamp(0.0, horizon);
        let idx = match self.locate(t) {
            Located::Node(i) => {
                return Ok(SpectralState::from_flat(self.nodes[i].t, &self.nodes[i].y))
            }
            Located::Interval(i) => i,
        };
        let y = dense_between(&self.lin, self.scheme, &self.nodes[idx], &self.nodes[idx + 1], t);
        Ok(SpectralState::from_flat(t, &y))
    }

    /// Cumulative ledger integrals at any `t`.
    fn cums_at(&self, t: f64, ws: &mut Workspace) -> LedgerCums {
        match self.locate(t) {
            Located::Node(i) => self.node_cums[i],
            Located::Interval(i) => {
                let mut cums = self.node_cums[i];
                accumulate_ledger(
                    &self.assembled,
                    &self.lin,
                    self.scheme,
                    &self.nodes[i],
                    &self.nodes[i + 1],
                    t,
                    &mut cums,
                    ws,
                );
                cums
            }
        }
    }

    fn locate(&self, t: f64) -> Located {
        let eps = 1e-12 * self.horizon().max(1.0);
        let i = self.nodes.partition_point(|n| n.t < t - eps);
        if i < self.nodes.len() && (self.nodes[i].t - t).abs() <= eps {
            return Located::Node(i);
        }
        Located::Interval(i - 1)
    }

    fn build_samples(&mut self, output_times: &[f64], ws: &mut Workspace) {
        let eps = 1e-12 * self.horizon().max(1.0);
        let mut times: Vec<f64> = self.nodes.iter().map(|n| n.t).collect();
        times.extend(output_times.iter().copied());
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() <= eps);

        let mut samples = Vec::with_capacity(times.len());
        let mut ledger = Vec::with_capacity(times.len());
        for &t in &times {
            let state = self.dense_eval(t).expect("sample time inside span");
            let terms = self.assembled.energy(&state);
            let cums = self.cums_at(t, ws);
            ledger.push(EnergyRecord {
                t,
                term_h: terms.term_h,
                term_ut: terms.term_ut,
                term_uz: terms.term_uz,
                dissipation_cum: cums.dissipation,
                work_j_cum: cums.work_j,
                work_f_cum: cums.work_f,
                transfer_cum: cums.transfer,
                forcing_jsq_cum: cums.forcing_jsq,
                forcing_fsq_cum: cums.forcing_fsq,
            });
            samples.push(state);
        }
        self.samples = samples;
        self.ledger = ledger;
    }
}

enum Located {
    Node(usize),
    Interval(usize),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{PiecewiseCoefficient, TrigPhase, TrigPoly};
    use crate::galerkin::{assemble, InitialField, ProblemSpec};

    fn integrate_spec(
        spec: ProblemSpec,
        n: usize,
        config: &IntegratorConfig,
        output: &[f64],
    ) -> Trajectory {
        let asm = Arc::new(assemble(spec, n, (2 * n).max(8), 12).unwrap());
        integrate(asm, config, output).unwrap()
    }

    #[test]
    fn zero_problem_stays_zero() {
        let spec = ProblemSpec::quiescent(1.0);
        let traj = integrate_spec(spec, 16, &IntegratorConfig::default(), &[]);
        assert_eq!(traj.stats.rejected, 0);
        let last = traj.samples.last().unwrap();
        assert!((last.t - 1.0).abs() < 1e-14);
        assert!(last.a1.iter().chain(&last.bdot).all(|&v| v == 0.0));
    }

    #[test]
    fn constant_steady_state_is_preserved() {
        let mut spec = ProblemSpec::quiescent(1.0);
        spec.h01 = InitialField::Piecewise(PiecewiseCoefficient::constant(2.0));
        let traj = integrate_spec(spec, 8, &IntegratorConfig::default(), &[]);
        let first = &traj.samples[0];
        let last = traj.samples.last().unwrap();
        for k in 0..8 {
            assert!((last.a1[k] - first.a1[k]).abs() <= 1e-10 * first.a1[0].abs());
        }
        assert_eq!(traj.stats.rejected, 0);
    }

    fn heat_spec() -> ProblemSpec {
        let mut spec = ProblemSpec::quiescent(0.1);
        spec.p = 0.0;
        spec.allow_zero_p = true;
        spec.h01 = InitialField::Trig(TrigPoly { terms: vec![(1.0, 1, TrigPhase::Cos)] });
        spec
    }

    #[test]
    fn heat_decay_matches_closed_form_exp_rk3() {
        let config =
            IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, ..IntegratorConfig::default() };
        let traj = integrate_spec(heat_spec(), 8, &config, &[]);
        let last = traj.samples.last().unwrap();
        let expected = (1.0 / 2.0f64.sqrt()) * (-4.0 * std::f64::consts::PI.powi(2) * 0.1).exp();
        assert!(
            (last.a1[1] - expected).abs() <= 1e-8,
            "a1 = {}, closed form {expected}",
            last.a1[1]
        );
    }

    #[test]
    fn heat_decay_matches_closed_form_imex_ars3() {
        let config = IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            scheme: Scheme::ImexArs3,
            ..IntegratorConfig::default()
        };
        let traj = integrate_spec(heat_spec(), 8, &config, &[]);
        let last = traj.samples.last().unwrap();
        let expected = (1.0 / 2.0f64.sqrt()) * (-4.0 * std::f64::consts::PI.powi(2) * 0.1).exp();
        assert!(
            (last.a1[1] - expected).abs() <= 1e-8,
            "a1 = {}, closed form {expected}",
            last.a1[1]
        );
    }

    #[test]
    fn dense_eval_between_samples_on_heat_test() {
        let config =
            IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, ..IntegratorConfig::default() };
        let traj = integrate_spec(heat_spec(), 8, &config, &[]);
        let times = traj.node_times();
        for w in times.windows(2).take(40) {
            let mid = 0.5 * (w[0] + w[1]);
            let st = traj.dense_eval(mid).unwrap();
            let expected =
                (1.0 / 2.0f64.sqrt()) * (-4.0 * std::f64::consts::PI.powi(2) * mid).exp();
            assert!(
                (st.a1[1] - expected).abs() <= 1e-6,
                "at t = {mid}: {} vs {expected}",
                st.a1[1]
            );
        }
    }

    #[test]
    fn dense_eval_endpoints_exact() {
        let traj = integrate_spec(heat_spec(), 8, &IntegratorConfig::default(), &[]);
        let st0 = traj.dense_eval(0.0).unwrap();
        assert_eq!(st0.a1, traj.samples[0].a1);
        let st1 = traj.dense_eval(0.1).unwrap();
        assert_eq!(st1.a1, traj.samples.last().unwrap().a1);
        assert!(traj.dense_eval(0.2).is_err());
        assert!(traj.dense_eval(-0.05).is_err());
    }

    #[test]
    fn pure_diffusion_reaches_dt_max_without_collapse() {
        // r constant: the nonstiff remainder vanishes and exp-rk3 should
        // stride at dt_max even at N = 64
        let mut spec = heat_spec();
        spec.horizon = 1.0;
        let config =
            IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, ..IntegratorConfig::default() };
        let traj = integrate_spec(spec, 64, &config, &[]);
        // dt_max = 1e-2 over T = 1 needs only ~100 steps plus ramp-up
        assert!(traj.stats.accepted <= 130, "took {} steps", traj.stats.accepted);
        assert_eq!(traj.stats.rejected, 0);
    }

    #[test]
    fn integration_is_deterministic() {
        let mut spec = ProblemSpec::quiescent(0.3);
        spec.r = PiecewiseCoefficient::new(vec![0.4], vec![vec![0.8], vec![1.9]]).unwrap();
        spec.h01 = InitialField::Trig(TrigPoly { terms: vec![(0.5, 1, TrigPhase::Cos)] });
        spec.u1 = InitialField::Trig(TrigPoly { terms: vec![(0.3, 2, TrigPhase::Sin)] });
        let config = IntegratorConfig::default();
        let a = integrate_spec(spec.clone(), 12, &config, &[0.1234]);
        let b = integrate_spec(spec, 12, &config, &[0.1234]);
        assert_eq!(a.samples.len(), b.samples.len());
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            for (x, y) in sa.a1.iter().zip(&sb.a1) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in sa.bdot.iter().zip(&sb.bdot) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn dissipation_is_nondecreasing() {
        let mut spec = ProblemSpec::quiescent(0.5);
        spec.r = PiecewiseCoefficient::new(vec![0.5], vec![vec![0.7], vec![1.6]]).unwrap();
        spec.h01 = InitialField::Trig(TrigPoly {
            terms: vec![(0.5, 1, TrigPhase::Cos), (0.2, 2, TrigPhase::Sin)],
        });
        spec.u1 = InitialField::Trig(TrigPoly { terms: vec![(0.3, 1, TrigPhase::Sin)] });
        let traj = integrate_spec(spec, 12, &IntegratorConfig::default(), &[]);
        let mut prev = 0.0;
        for rec in &traj.ledger {
            assert!(
                rec.dissipation_cum >= prev - 1e-15,
                "dissipation decreased at t = {}",
                rec.t
            );
            prev = rec.dissipation_cum;
        }
        assert!(prev > 0.0);
    }

    #[test]
    fn output_times_are_sampled() {
        let traj = integrate_spec(heat_spec(), 8, &IntegratorConfig::default(), &[0.0371, 0.05]);
        for target in [0.0371, 0.05] {
            assert!(
                traj.samples.iter().any(|s| (s.t - target).abs() < 1e-12),
                "missing sample at {target}"
            );
        }
        assert_eq!(traj.samples.len(), traj.ledger.len());
        let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(times[0], 0.0);
        assert!((times.last().unwrap() - 0.1).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        let c = IntegratorConfig { rel_tol: 0.0, ..IntegratorConfig::default() };
        assert!(c.validate().is_err());
        let c = IntegratorConfig { dt_init: 1.0, dt_max: 0.1, ..IntegratorConfig::default() };
        assert!(c.validate().is_err());
        let c = IntegratorConfig { max_steps: 0, ..IntegratorConfig::default() };
        assert!(c.validate().is_err());
        assert!("exp-rk3".parse::<Scheme>().is_ok());
        assert!("imex-ars3".parse::<Scheme>().is_ok());
        assert!("rk4".parse::<Scheme>().is_err());
    }

    #[test]
    fn phi_scalar_recurrence_and_continuity() {
        // phi_{k+1}(z) = (phi_k(z) - 1/k!) / z, checked where the
        // recurrence itself is well conditioned
        for &z in &[-40.0, -5.0, -1.5, -0.999, -0.3] {
            let (p1, p2, p3) = phi_scalar(z);
            let p1_rec = z.exp_m1() / z;
            assert!((p1 - p1_rec).abs() <= 1e-13 * p1.abs().max(1.0), "phi1({z})");
            assert!((p2 - (p1 - 1.0) / z).abs() <= 1e-12 * p2.abs().max(1e-3), "phi2({z})");
            assert!((p3 - (p2 - 0.5) / z).abs() <= 1e-11 * p3.abs().max(1e-3), "phi3({z})");
        }
        // small arguments against the leading Taylor terms
        let z = -1e-6;
        let (p1, p2, p3) = phi_scalar(z);
        assert!((p1 - (1.0 + z / 2.0 + z * z / 6.0)).abs() < 1e-15);
        assert!((p2 - (0.5 + z / 6.0 + z * z / 24.0)).abs() < 1e-15);
        assert!((p3 - (1.0 / 6.0 + z / 24.0 + z * z / 120.0)).abs() < 1e-15);
        // continuity across the |z| = 1 switch
        let below = phi_scalar(-0.9999999);
        let above = phi_scalar(-1.0000001);
        assert!((below.0 - above.0).abs() < 1e-7 * below.0.abs());
        assert!((below.2 - above.2).abs() < 1e-7 * below.2.abs());
    }

    #[test]
    fn phi_wave_matches_closed_forms() {
        // closed forms are well conditioned away from zero
        for &s in &[0.999f64, 1.001, 2.5, 4.0] {
            let [(a1, b1), (a2, b2), (a3, b3)] = phi_wave(s);
            let s2 = s * s;
            assert!((a1 - s.sin() / s).abs() < 1e-12, "alpha1({s})");
            assert!((b1 - (1.0 - s.cos()) / s2).abs() < 1e-12, "beta1({s})");
            // structural chain: alpha_{k+1} = beta_k
            assert!((a2 - b1).abs() < 1e-12);
            assert!((a3 - b2).abs() < 1e-12);
            assert!((b2 - (s - s.sin()) / (s2 * s)).abs() < 1e-11, "beta2({s})");
            assert!((b3 - (s.cos() - 1.0 + 0.5 * s2) / (s2 * s2)).abs() < 1e-9, "beta3({s})");
        }
        // small arguments against the leading Taylor terms
        let s = 1e-4;
        let [(a1, b1), (_, b2), (_, b3)] = phi_wave(s);
        let s2 = s * s;
        assert!((a1 - (1.0 - s2 / 6.0)).abs() < 1e-14);
        assert!((b1 - (0.5 - s2 / 24.0)).abs() < 1e-14);
        assert!((b2 - (1.0 / 6.0 - s2 / 120.0)).abs() < 1e-14);
        assert!((b3 - (1.0 / 24.0 - s2 / 720.0)).abs() < 1e-14);
    }

    #[test]
    fn max_steps_is_enforced() {
        let mut spec = ProblemSpec::quiescent(1.0);
        spec.h01 = InitialField::Trig(TrigPoly { terms: vec![(0.5, 2, TrigPhase::Cos)] });
        let asm = Arc::new(assemble(spec, 8, 16, 12).unwrap());
        let config = IntegratorConfig { max_steps: 3, ..IntegratorConfig::default() };
        match integrate(asm, &config, &[]) {
            Err(Error::MaxStepsExceeded { .. }) => {}
            Err(other) => panic!("expected MaxStepsExceeded, got {other}"),
            Ok(_) => panic!("expected MaxStepsExceeded, integration succeeded"),
        }
    }
}
