//! Manufactured solutions: closed-form exact fields with reverse-engineered
//! forcing, used as error oracles for the solver.
//!
//! An exact field is a finite sum `sum_i amp_i tau_i(t) sigma_i(z)` with
//! `tau` an exponential or trigonometric time factor and `sigma` a single
//! spatial harmonic. Everything needed downstream (all partial derivatives
//! and the periodic antiderivative in `z`) then has a closed form. Given
//! exact `(h, u)` the forcing follows from the field equations:
//!
//! ```text
//! f   = u_tt - (nu^2 u_z)_z + p (h^2)_z
//! r j = r h_z - h u_t - W,  W = periodic antiderivative of h_t
//! ```
//!
//! The antiderivative exists only when the spatial mean of `h_t` vanishes,
//! which is enforced at construction: every mean (m = 0) term must carry a
//! constant time factor.

use std::sync::Arc;

use crate::basis;
use crate::coefficients::{PiecewiseCoefficient, TrigPhase, TrigPoly};
use crate::diagnostics::{time_l2, vrai_max};
use crate::error::{Error, Result};
use crate::galerkin::{assemble_default, Assembled, FieldSource, InitialField, ProblemSpec};
use crate::timestepper::{integrate, IntegratorConfig, Trajectory};

/// Smooth scalar factor of `t` with two derivatives in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeFactor {
    One,
    /// `exp(a t)`.
    Exp(f64),
    /// `cos(a t)`.
    Cos(f64),
    /// `sin(a t)`.
    Sin(f64),
}

impl TimeFactor {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeFactor::One => 1.0,
            TimeFactor::Exp(a) => (a * t).exp(),
            TimeFactor::Cos(a) => (a * t).cos(),
            TimeFactor::Sin(a) => (a * t).sin(),
        }
    }

    fn d1(&self, t: f64) -> f64 {
        match *self {
            TimeFactor::One => 0.0,
            TimeFactor::Exp(a) => a * (a * t).exp(),
            TimeFactor::Cos(a) => -a * (a * t).sin(),
            TimeFactor::Sin(a) => a * (a * t).cos(),
        }
    }

    fn d2(&self, t: f64) -> f64 {
        match *self {
            TimeFactor::One => 0.0,
            TimeFactor::Exp(a) => a * a * (a * t).exp(),
            TimeFactor::Cos(a) => -a * a * (a * t).cos(),
            TimeFactor::Sin(a) => -a * a * (a * t).sin(),
        }
    }
}

/// One separable term `amp * tau(t) * {cos|sin}(2 pi m z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub amp: f64,
    pub time: TimeFactor,
    pub mode: u32,
    pub phase: TrigPhase,
}

/// Closed-form space-time field as a finite sum of separable terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigField {
    pub terms: Vec<TrigTerm>,
}

impl TrigField {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    fn sigma(term: &TrigTerm, z: f64) -> f64 {
        let arg = std::f64::consts::TAU * term.mode as f64 * z;
        match term.phase {
            TrigPhase::Cos => arg.cos(),
            TrigPhase::Sin => arg.sin(),
        }
    }

    fn sigma_dz(term: &TrigTerm, z: f64) -> f64 {
        let w = std::f64::consts::TAU * term.mode as f64;
        let arg = w * z;
        match term.phase {
            TrigPhase::Cos => -w * arg.sin(),
            TrigPhase::Sin => w * arg.cos(),
        }
    }

    fn sigma_dzz(term: &TrigTerm, z: f64) -> f64 {
        let w = std::f64::consts::TAU * term.mode as f64;
        -w * w * Self::sigma(term, z)
    }

    /// Zero-mean antiderivative of `sigma` (undefined for `m = 0`).
    fn sigma_anti(term: &TrigTerm, z: f64) -> f64 {
        let w = std::f64::consts::TAU * term.mode as f64;
        let arg = w * z;
        match term.phase {
            TrigPhase::Cos => arg.sin() / w,
            TrigPhase::Sin => -arg.cos() / w,
        }
    }

    pub fn eval(&self, t: f64, z: f64) -> f64 {
        self.terms.iter().map(|tm| tm.amp * tm.time.eval(t) * Self::sigma(tm, z)).sum()
    }

    pub fn dt(&self, t: f64, z: f64) -> f64 {
        self.terms.iter().map(|tm| tm.amp * tm.time.d1(t) * Self::sigma(tm, z)).sum()
    }

    pub fn dtt(&self, t: f64, z: f64) -> f64 {
        self.terms.iter().map(|tm| tm.amp * tm.time.d2(t) * Self::sigma(tm, z)).sum()
    }

    pub fn dz(&self, t: f64, z: f64) -> f64 {
        self.terms.iter().map(|tm| tm.amp * tm.time.eval(t) * Self::sigma_dz(tm, z)).sum()
    }

    pub fn dzz(&self, t: f64, z: f64) -> f64 {
        self.terms.iter().map(|tm| tm.amp * tm.time.eval(t) * Self::sigma_dzz(tm, z)).sum()
    }

    pub fn dtz(&self, t: f64, z: f64) -> f64 {
        self.terms.iter().map(|tm| tm.amp * tm.time.d1(t) * Self::sigma_dz(tm, z)).sum()
    }

    /// `W(t, z)`: the zero-mean 1-periodic antiderivative in `z` of the
    /// time derivative of this field. Requires every `m = 0` term to be
    /// time-constant (checked by `validate_mean_constancy`).
    pub fn dt_antiderivative(&self, t: f64, z: f64) -> f64 {
        self.terms
            .iter()
            .filter(|tm| tm.mode != 0)
            .map(|tm| tm.amp * tm.time.d1(t) * Self::sigma_anti(tm, z))
            .sum()
    }

    /// The mean of the time derivative must vanish for the `j`-recovery to
    /// be well posed.
    pub fn validate_mean_constancy(&self) -> Result<()> {
        for tm in &self.terms {
            if tm.mode == 0 && tm.time != TimeFactor::One && tm.amp != 0.0 {
                return Err(Error::Invalid(
                    "mean mode of an exact h-field must be constant in time".into(),
                ));
            }
        }
        Ok(())
    }

    /// Snapshot at time `t` as a trigonometric polynomial in `z`.
    pub fn at_time(&self, t: f64) -> TrigPoly {
        TrigPoly {
            terms: self
                .terms
                .iter()
                .map(|tm| (tm.amp * tm.time.eval(t), tm.mode, tm.phase))
                .collect(),
        }
    }

    /// Time-derivative snapshot at time `t`.
    pub fn dt_at_time(&self, t: f64) -> TrigPoly {
        TrigPoly {
            terms: self
                .terms
                .iter()
                .map(|tm| (tm.amp * tm.time.d1(t), tm.mode, tm.phase))
                .collect(),
        }
    }
}

/// Exact fields plus smooth coefficients; the forcing is derived.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub p: f64,
    /// Smooth (single-piece) positive coefficients.
    pub r: PiecewiseCoefficient,
    pub nu: PiecewiseCoefficient,
    pub h1: TrigField,
    pub h2: TrigField,
    pub u: TrigField,
}

impl ManufacturedCase {
    pub fn validate(&self) -> Result<()> {
        if !self.r.breakpoints().is_empty() || !self.nu.breakpoints().is_empty() {
            return Err(Error::Invalid(
                "manufactured coefficients must be smooth (no breakpoints)".into(),
            ));
        }
        self.r.verify_positive("r")?;
        self.nu.verify_positive("nu")?;
        self.h1.validate_mean_constancy()?;
        self.h2.validate_mean_constancy()?;
        Ok(())
    }

    /// Derived current component `j_l = h_lz - (h_l u_t + W_l) / r`.
    pub fn j(&self, component: usize, t: f64, z: f64) -> f64 {
        let h = if component == 0 { &self.h1 } else { &self.h2 };
        let w = h.dt_antiderivative(t, z);
        h.dz(t, z) - (h.eval(t, z) * self.u.dt(t, z) + w) / self.r.eval(z)
    }

    /// Derived body force `f = u_tt - (nu^2 u_z)_z + p (h^2)_z`.
    pub fn f(&self, t: f64, z: f64) -> f64 {
        let nu = self.nu.eval(z);
        let nu_dz = self.nu.eval_dz(z);
        let h2_dz = 2.0
            * (self.h1.eval(t, z) * self.h1.dz(t, z) + self.h2.eval(t, z) * self.h2.dz(t, z));
        self.u.dtt(t, z) - 2.0 * nu * nu_dz * self.u.dz(t, z) - nu * nu * self.u.dzz(t, z)
            + self.p * h2_dz
    }

    /// Build the problem instance: derived analytic forcing, exact initial
    /// data, horizon `T`.
    pub fn problem_spec(&self, horizon: f64) -> ProblemSpec {
        let case1 = Arc::new(self.clone());
        let case2 = case1.clone();
        let case3 = case1.clone();
        ProblemSpec {
            p: self.p,
            allow_zero_p: false,
            r: self.r.clone(),
            nu: self.nu.clone(),
            j1: FieldSource::analytic(move |t, z| case1.j(0, t, z)),
            j2: FieldSource::analytic(move |t, z| case2.j(1, t, z)),
            f: FieldSource::analytic(move |t, z| case3.f(t, z)),
            h01: InitialField::Trig(self.h1.at_time(0.0)),
            h02: InitialField::Trig(self.h2.at_time(0.0)),
            u0: InitialField::Trig(self.u.at_time(0.0)),
            u1: InitialField::Trig(self.u.dt_at_time(0.0)),
            horizon,
        }
    }
}

/// The worked single-harmonic decay case:
/// `h1 = exp(-t) cos(2 pi z)`, `h2 = u = 0`, `r = nu = p = 1`.
pub fn single_decay() -> ManufacturedCase {
    ManufacturedCase {
        name: "single-decay",
        p: 1.0,
        r: PiecewiseCoefficient::constant(1.0),
        nu: PiecewiseCoefficient::constant(1.0),
        h1: TrigField {
            terms: vec![TrigTerm {
                amp: 1.0,
                time: TimeFactor::Exp(-1.0),
                mode: 1,
                phase: TrigPhase::Cos,
            }],
        },
        h2: TrigField::zero(),
        u: TrigField::zero(),
    }
}

/// The three-case smooth verification suite.
pub fn acceptance_suite() -> Vec<ManufacturedCase> {
    let t = |amp: f64, time: TimeFactor, mode: u32, phase: TrigPhase| TrigTerm {
        amp,
        time,
        mode,
        phase,
    };
    vec![
        ManufacturedCase {
            name: "mix-decay",
            p: 1.0,
            r: PiecewiseCoefficient::constant(1.0),
            nu: PiecewiseCoefficient::constant(1.0),
            h1: TrigField {
                terms: vec![
                    t(0.5, TimeFactor::Exp(-1.0), 1, TrigPhase::Cos),
                    t(0.2, TimeFactor::Exp(-2.0), 3, TrigPhase::Cos),
                ],
            },
            h2: TrigField {
                terms: vec![
                    t(0.4, TimeFactor::Exp(-1.0), 1, TrigPhase::Sin),
                    t(0.1, TimeFactor::Exp(-1.5), 5, TrigPhase::Sin),
                ],
            },
            u: TrigField {
                terms: vec![
                    t(0.3, TimeFactor::Cos(2.0), 1, TrigPhase::Sin),
                    t(0.1, TimeFactor::Sin(3.0), 3, TrigPhase::Cos),
                ],
            },
        },
        ManufacturedCase {
            name: "varying-r",
            p: 1.0,
            // r(z) = 0.8 + 0.8 z (1 - z), kept close to its mean so the
            // explicit fluctuation stays gentle
            r: PiecewiseCoefficient::new(vec![], vec![vec![0.8, 0.8, -0.8]]).unwrap(),
            nu: PiecewiseCoefficient::constant(1.3),
            h1: TrigField {
                terms: vec![
                    t(0.3, TimeFactor::One, 0, TrigPhase::Cos),
                    t(0.4, TimeFactor::Cos(1.0), 1, TrigPhase::Cos),
                ],
            },
            h2: TrigField { terms: vec![t(0.3, TimeFactor::Sin(1.3), 2, TrigPhase::Sin)] },
            u: TrigField {
                terms: vec![
                    t(0.25, TimeFactor::Sin(2.0), 1, TrigPhase::Cos),
                    t(0.1, TimeFactor::Cos(1.0), 2, TrigPhase::Sin),
                ],
            },
        },
        ManufacturedCase {
            name: "multi-mode",
            p: 1.2,
            r: PiecewiseCoefficient::constant(1.5),
            // nu(z) = 1 + 0.4 z (1 - z)
            nu: PiecewiseCoefficient::new(vec![], vec![vec![1.0, 0.4, -0.4]]).unwrap(),
            h1: TrigField {
                terms: vec![
                    t(0.5, TimeFactor::Exp(-0.5), 1, TrigPhase::Sin),
                    t(0.2, TimeFactor::Cos(2.0), 2, TrigPhase::Cos),
                ],
            },
            h2: TrigField { terms: vec![t(0.25, TimeFactor::Exp(-1.0), 5, TrigPhase::Cos)] },
            u: TrigField { terms: vec![t(0.2, TimeFactor::Cos(1.5), 3, TrigPhase::Sin)] },
        },
    ]
}

/// Error report of one manufactured run.
pub struct ManufacturedErrors {
    /// `L2`-in-space error of `(h1, h2)` at the final time.
    pub l2_h_final: f64,
    /// `L2`-in-space error of `u` at the final time.
    pub l2_u_final: f64,
    /// Combined final error `sqrt(|dh|^2 + |du|^2)`.
    pub l2_final: f64,
    /// `V2` norm of the `h`-error over the whole slab.
    pub v2_h_err: f64,
    /// `W2^{1,1}` norm of the `u`-error over the whole slab.
    pub w11_u_err: f64,
    pub trajectory: Trajectory,
}

/// Solve the manufactured case at mode count `n` and report the errors
/// against the exact fields.
pub fn manufactured_run(
    case: &ManufacturedCase,
    n: usize,
    config: &IntegratorConfig,
    horizon: f64,
) -> Result<ManufacturedErrors> {
    case.validate()?;
    let spec = case.problem_spec(horizon);
    let assembled = Arc::new(assemble_default(spec, n)?);
    let output: Vec<f64> = (0..=32).map(|i| horizon * i as f64 / 32.0).collect();
    let traj = integrate(assembled.clone(), config, &output)?;

    let (l2_h_final, l2_u_final, l2_final, v2_h_err, w11_u_err) =
        errors_against_exact(case, &traj, &assembled);
    Ok(ManufacturedErrors { l2_h_final, l2_u_final, l2_final, v2_h_err, w11_u_err, trajectory: traj })
}

/// `(l2_h_final, l2_u_final, l2_final, v2_h_err, w11_u_err)` of a computed
/// trajectory against the exact case fields.
pub fn errors_against_exact(
    case: &ManufacturedCase,
    traj: &Trajectory,
    asm: &Assembled,
) -> (f64, f64, f64, f64, f64) {
    let nodes = asm.grid.nodes().to_vec();
    let weights = asm.grid.weights().to_vec();
    let horizon = traj.horizon();

    // field-difference nodal evaluation at time t
    let diff_h_sq = |t: f64| -> (f64, f64) {
        let st = traj.dense_eval(t).unwrap();
        let (h1, h1z) = basis::synthesize(&st.a1, &asm.basis, &asm.grid).unwrap();
        let (h2, h2z) = basis::synthesize(&st.a2, &asm.basis, &asm.grid).unwrap();
        let mut val = 0.0;
        let mut grad = 0.0;
        for i in 0..nodes.len() {
            let d1 = h1[i] - case.h1.eval(t, nodes[i]);
            let d2 = h2[i] - case.h2.eval(t, nodes[i]);
            let g1 = h1z[i] - case.h1.dz(t, nodes[i]);
            let g2 = h2z[i] - case.h2.dz(t, nodes[i]);
            val += weights[i] * (d1 * d1 + d2 * d2);
            grad += weights[i] * (g1 * g1 + g2 * g2);
        }
        (val, grad)
    };
    let diff_u_sq = |t: f64| -> (f64, f64, f64) {
        let st = traj.dense_eval(t).unwrap();
        let (u, uz) = basis::synthesize(&st.b, &asm.basis, &asm.grid).unwrap();
        let (ut, _) = basis::synthesize(&st.bdot, &asm.basis, &asm.grid).unwrap();
        let mut sv = 0.0;
        let mut sz = 0.0;
        let mut st_ = 0.0;
        for i in 0..nodes.len() {
            let dv = u[i] - case.u.eval(t, nodes[i]);
            let dz = uz[i] - case.u.dz(t, nodes[i]);
            let dt = ut[i] - case.u.dt(t, nodes[i]);
            sv += weights[i] * dv * dv;
            sz += weights[i] * dz * dz;
            st_ += weights[i] * dt * dt;
        }
        (sv, sz, st_)
    };

    let (h_sq, _) = diff_h_sq(horizon);
    let (u_sq, _, _) = diff_u_sq(horizon);
    let l2_h_final = h_sq.sqrt();
    let l2_u_final = u_sq.sqrt();
    let l2_final = (h_sq + u_sq).sqrt();

    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let v2_h_err = vrai_max(&times, &mut |t| diff_h_sq(t).0.sqrt())
        + time_l2(&times, &mut |t| diff_h_sq(t).1);
    let w11_u_err = time_l2(&times, &mut |t| diff_u_sq(t).0)
        + time_l2(&times, &mut |t| diff_u_sq(t).1)
        + time_l2(&times, &mut |t| diff_u_sq(t).2);

    (l2_h_final, l2_u_final, l2_final, v2_h_err, w11_u_err)
}
