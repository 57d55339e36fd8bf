//! Coefficient-perturbation stability ladders: solve a sequence of
//! perturbed instances shrinking geometrically toward a base instance and
//! track both sides of the quantitative stability estimate
//!
//! ```text
//! vrai max_t { p |v|^2 + |w_t|^2 + 2 |nu w_z|^2 } + 2 p r0 |v_z|^2_{2,Pi}
//!   <= C { |(r_m - r) h_z|^2 + |r_m j_m - r j|^2 } + |f_m - f|^2
//!      + 2 p |v(0)|^2 + 2 |w_t(0)|^2 + 2 |nu w_z(0)|^2
//! ```
//!
//! with `v = h_m - h`, `w = u_m - u`. The constant is not known, so the
//! harness reports both aggregates (the right-hand side with unit constant)
//! and the caller asserts decay and ratio boundedness.

use std::str::FromStr;
use std::sync::Arc;

use crate::basis;
use crate::coefficients::{ForcingField, ForcingTerm, PiecewiseCoefficient, TimeProfile, TrigPhase, TrigPoly};
use crate::diagnostics::{time_l2, vrai_max};
use crate::error::{Error, Result};
use crate::galerkin::{assemble, Assembled, FieldSource, InitialField, ProblemSpec};
use crate::timestepper::{integrate, IntegratorConfig, Trajectory};

use super::{diff_fields, uniform_times};

/// Which datum of the instance the ladder perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbTarget {
    R,
    J,
    F,
    H0,
    U0,
    U1,
}

impl FromStr for PerturbTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" => Ok(Self::R),
            "j" => Ok(Self::J),
            "f" => Ok(Self::F),
            "h0" => Ok(Self::H0),
            "u0" => Ok(Self::U0),
            "u1" => Ok(Self::U1),
            other => Err(Error::Invalid(format!(
                "unknown perturbation target '{other}' (expected r, j, f, h0, u0, u1)"
            ))),
        }
    }
}

impl std::fmt::Display for PerturbTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::R => "r",
            Self::J => "j",
            Self::F => "f",
            Self::H0 => "h0",
            Self::U0 => "u0",
            Self::U1 => "u1",
        };
        write!(f, "{s}")
    }
}

/// Measured sides of the stability estimate at one rung.
#[derive(Debug, Clone, Copy)]
pub struct StabilityRung {
    pub rung: usize,
    /// Perturbation amplitude at this rung.
    pub eps: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Smooth bump `16 z^2 (1 - z)^2`, used as the spatial shape of forcing
/// perturbations.
fn bump() -> PiecewiseCoefficient {
    PiecewiseCoefficient::new(vec![], vec![vec![0.0, 0.0, 16.0, -32.0, 16.0]]).unwrap()
}

fn shift_coefficient(c: &PiecewiseCoefficient, eps: f64) -> PiecewiseCoefficient {
    let pieces = c
        .pieces()
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p[0] += eps;
            p
        })
        .collect();
    PiecewiseCoefficient::new(c.breakpoints().to_vec(), pieces).unwrap()
}

fn add_forcing_term(src: &FieldSource, eps: f64) -> Result<FieldSource> {
    let term = ForcingTerm { time: TimeProfile::Poly(vec![eps]), space: bump() };
    match src {
        FieldSource::Zero => Ok(FieldSource::Separable(ForcingField { terms: vec![term] })),
        FieldSource::Separable(field) => {
            let mut field = field.clone();
            field.terms.push(term);
            Ok(FieldSource::Separable(field))
        }
        FieldSource::Analytic(_) => {
            Err(Error::Invalid("cannot perturb an analytic forcing field".into()))
        }
    }
}

fn add_trig(initial: &InitialField, eps: f64, mode: u32, phase: TrigPhase) -> Result<InitialField> {
    match initial {
        InitialField::Zero => {
            Ok(InitialField::Trig(TrigPoly { terms: vec![(eps, mode, phase)] }))
        }
        InitialField::Trig(p) => {
            let mut p = p.clone();
            p.terms.push((eps, mode, phase));
            Ok(InitialField::Trig(p))
        }
        InitialField::Piecewise(_) => Err(Error::Invalid(
            "perturbation ladders need trigonometric initial data".into(),
        )),
    }
}

fn perturbed_spec(base: &ProblemSpec, target: PerturbTarget, eps: f64) -> Result<ProblemSpec> {
    let mut spec = base.clone();
    match target {
        PerturbTarget::R => spec.r = shift_coefficient(&base.r, eps),
        PerturbTarget::J => spec.j1 = add_forcing_term(&base.j1, eps)?,
        PerturbTarget::F => spec.f = add_forcing_term(&base.f, eps)?,
        PerturbTarget::H0 => spec.h01 = add_trig(&base.h01, eps, 1, TrigPhase::Cos)?,
        PerturbTarget::U0 => spec.u0 = add_trig(&base.u0, eps, 1, TrigPhase::Cos)?,
        PerturbTarget::U1 => spec.u1 = add_trig(&base.u1, eps, 1, TrigPhase::Sin)?,
    }
    Ok(spec)
}

/// Run the geometric ladder `eps_m = amplitude * ratio^m`, `m = 0..rungs`,
/// solving base and rungs at the same discretization and integrator
/// configuration.
pub fn stability_experiment(
    base: &ProblemSpec,
    target: PerturbTarget,
    amplitude: f64,
    rungs: usize,
    ratio: f64,
    n: usize,
    config: &IntegratorConfig,
) -> Result<Vec<StabilityRung>> {
    if !(amplitude > 0.0) || !(ratio > 0.0 && ratio < 1.0) || rungs == 0 {
        return Err(Error::Invalid(
            "ladder needs amplitude > 0, 0 < ratio < 1, and at least one rung".into(),
        ));
    }
    let panels = basis::default_panels_per_piece(n);
    let asm_base =
        Arc::new(assemble(base.clone(), n, panels, basis::DEFAULT_QUAD_ORDER)?);
    let times = uniform_times(base.horizon, 48);
    let traj_base = integrate(asm_base.clone(), config, &times)?;

    let mut out = Vec::with_capacity(rungs);
    for m in 0..rungs {
        let eps = amplitude * ratio.powi(m as i32);
        let spec_m = perturbed_spec(base, target, eps)?;
        let asm_m = Arc::new(assemble(spec_m, n, panels, basis::DEFAULT_QUAD_ORDER)?);
        if asm_m.grid.nodes().len() != asm_base.grid.nodes().len() {
            return Err(Error::Invalid(
                "perturbation changed the quadrature grid; ladder norms need matching nodes"
                    .into(),
            ));
        }
        let traj_m = integrate(asm_m.clone(), config, &times)?;
        let (lhs, rhs) = sides(&traj_base, &traj_m, &asm_base, &asm_m, &times)?;
        out.push(StabilityRung { rung: m, eps, lhs, rhs });
    }
    Ok(out)
}

fn sides(
    base: &Trajectory,
    pert: &Trajectory,
    asm_base: &Assembled,
    asm_m: &Assembled,
    times: &[f64],
) -> Result<(f64, f64)> {
    let w = asm_base.grid.weights();
    let n_nodes = w.len();
    let p = asm_base.spec.p;
    let quad = |v: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n_nodes {
            acc += w[i] * v[i] * v[i];
        }
        acc
    };

    // vrai max of p|v|^2 + |w_t|^2 + 2 |nu w_z|^2 (base nu; the refined
    // estimate keeps nu unperturbed)
    let mut inst = |t: f64| -> f64 {
        let d = diff_fields(pert, base, asm_base, t);
        let mut nu_wz = 0.0;
        for i in 0..n_nodes {
            nu_wz += w[i] * asm_base.nu2_nodes()[i] * d.wz[i] * d.wz[i];
        }
        p * (quad(&d.v1) + quad(&d.v2)) + quad(&d.wt) + 2.0 * nu_wz
    };
    let sup = vrai_max(times, &mut inst);
    let vz_l2 = time_l2(times, &mut |t| {
        let d = diff_fields(pert, base, asm_base, t);
        quad(&d.v1z) + quad(&d.v2z)
    });
    let lhs = sup + 2.0 * p * asm_base.r_min() * vz_l2 * vz_l2;

    // right-hand side aggregates with unit constant
    let dr: Vec<f64> =
        asm_m.r_nodes().iter().zip(asm_base.r_nodes()).map(|(a, b)| a - b).collect();
    let r_hz = time_l2(times, &mut |t| {
        let st = base.dense_eval(t).unwrap();
        let (_, h1z) = basis::synthesize(&st.a1, &asm_base.basis, &asm_base.grid).unwrap();
        let (_, h2z) = basis::synthesize(&st.a2, &asm_base.basis, &asm_base.grid).unwrap();
        let mut acc = 0.0;
        for i in 0..n_nodes {
            acc += w[i] * dr[i] * dr[i] * (h1z[i] * h1z[i] + h2z[i] * h2z[i]);
        }
        acc
    });
    let rj = time_l2(times, &mut |t| {
        let (j1m, j2m, _) = asm_m.forcing_at(t);
        let (j1, j2, _) = asm_base.forcing_at(t);
        let mut acc = 0.0;
        for i in 0..n_nodes {
            let d1 = asm_m.r_nodes()[i] * j1m[i] - asm_base.r_nodes()[i] * j1[i];
            let d2 = asm_m.r_nodes()[i] * j2m[i] - asm_base.r_nodes()[i] * j2[i];
            acc += w[i] * (d1 * d1 + d2 * d2);
        }
        acc
    });
    let df = time_l2(times, &mut |t| {
        let (_, _, fm) = asm_m.forcing_at(t);
        let (_, _, f) = asm_base.forcing_at(t);
        let mut acc = 0.0;
        for i in 0..n_nodes {
            let d = fm[i] - f[i];
            acc += w[i] * d * d;
        }
        acc
    });

    let d0 = diff_fields(pert, base, asm_base, 0.0);
    let mut nu_wz0 = 0.0;
    for i in 0..n_nodes {
        nu_wz0 += w[i] * asm_base.nu2_nodes()[i] * d0.wz[i] * d0.wz[i];
    }
    let rhs = p * (r_hz * r_hz + rj * rj)
        + df * df
        + 2.0 * p * (quad(&d0.v1) + quad(&d0.v2))
        + 2.0 * quad(&d0.wt)
        + 2.0 * nu_wz0;
    Ok((lhs, rhs))
}
