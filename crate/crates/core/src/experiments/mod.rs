//! Verification experiment harnesses: manufactured solutions, mode-count
//! refinement, coefficient-perturbation stability ladders, uniqueness
//! cross-checks, the independent finite-difference oracle, and the
//! randomized instance suite.

pub mod convergence;
pub mod fd_oracle;
pub mod manufactured;
pub mod stability;
pub mod suite;
pub mod uniqueness;

pub use convergence::{convergence_study, ConvergencePair, ConvergenceStudy};
pub use fd_oracle::{fd_oracle, FdSolution};
pub use manufactured::{
    acceptance_suite, manufactured_run, single_decay, ManufacturedCase, ManufacturedErrors,
    TimeFactor, TrigField, TrigTerm,
};
pub use stability::{stability_experiment, PerturbTarget, StabilityRung};
pub use suite::random_instance;
pub use uniqueness::{uniqueness_crosscheck, UniquenessReport};

use crate::basis;
use crate::galerkin::Assembled;
use crate::timestepper::Trajectory;

pub(crate) fn uniform_times(horizon: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|i| horizon * i as f64 / intervals as f64).collect()
}

/// Synthesize a coefficient vector on the grid of `asm`, zero-padding to
/// its mode count (the trigonometric bases are nested).
pub(crate) fn padded_synth(coeffs: &[f64], asm: &Assembled) -> (Vec<f64>, Vec<f64>) {
    if coeffs.len() == asm.n_modes() {
        return basis::synthesize(coeffs, &asm.basis, &asm.grid).unwrap();
    }
    let mut padded = coeffs.to_vec();
    padded.resize(asm.n_modes(), 0.0);
    basis::synthesize(&padded, &asm.basis, &asm.grid).unwrap()
}

/// Nodal differences of two trajectories at one instant, on the grid of
/// `asm` (which must be the finer of the two discretizations).
pub(crate) struct DiffFields {
    pub v1: Vec<f64>,
    pub v1z: Vec<f64>,
    pub v2: Vec<f64>,
    pub v2z: Vec<f64>,
    pub w: Vec<f64>,
    pub wz: Vec<f64>,
    pub wt: Vec<f64>,
}

pub(crate) fn diff_fields(a: &Trajectory, b: &Trajectory, asm: &Assembled, t: f64) -> DiffFields {
    let sa = a.dense_eval(t).expect("time inside span");
    let sb = b.dense_eval(t).expect("time inside span");
    let (a_h1, a_h1z) = padded_synth(&sa.a1, asm);
    let (b_h1, b_h1z) = padded_synth(&sb.a1, asm);
    let (a_h2, a_h2z) = padded_synth(&sa.a2, asm);
    let (b_h2, b_h2z) = padded_synth(&sb.a2, asm);
    let (a_u, a_uz) = padded_synth(&sa.b, asm);
    let (b_u, b_uz) = padded_synth(&sb.b, asm);
    let (a_ut, _) = padded_synth(&sa.bdot, asm);
    let (b_ut, _) = padded_synth(&sb.bdot, asm);
    let sub =
        |x: Vec<f64>, y: Vec<f64>| -> Vec<f64> { x.into_iter().zip(y).map(|(p, q)| p - q).collect() };
    DiffFields {
        v1: sub(a_h1, b_h1),
        v1z: sub(a_h1z, b_h1z),
        v2: sub(a_h2, b_h2),
        v2z: sub(a_h2z, b_h2z),
        w: sub(a_u, b_u),
        wz: sub(a_uz, b_uz),
        wt: sub(a_ut, b_ut),
    }
}

/// `V2` norm of the `h`-difference and `W2^{1,1}` norm of the
/// `u`-difference between two trajectories over `[0, T]`.
pub(crate) fn diff_norms(
    a: &Trajectory,
    b: &Trajectory,
    asm: &Assembled,
    times: &[f64],
) -> (f64, f64) {
    let quad = |v: &[f64]| -> f64 {
        let w = asm.grid.weights();
        let mut acc = 0.0;
        for i in 0..v.len() {
            acc += w[i] * v[i] * v[i];
        }
        acc
    };
    let v2 = crate::diagnostics::vrai_max(times, &mut |t| {
        let d = diff_fields(a, b, asm, t);
        (quad(&d.v1) + quad(&d.v2)).sqrt()
    }) + crate::diagnostics::time_l2(times, &mut |t| {
        let d = diff_fields(a, b, asm, t);
        quad(&d.v1z) + quad(&d.v2z)
    });
    let w11 = crate::diagnostics::time_l2(times, &mut |t| {
        let d = diff_fields(a, b, asm, t);
        quad(&d.w)
    }) + crate::diagnostics::time_l2(times, &mut |t| {
        let d = diff_fields(a, b, asm, t);
        quad(&d.wz)
    }) + crate::diagnostics::time_l2(times, &mut |t| {
        let d = diff_fields(a, b, asm, t);
        quad(&d.wt)
    });
    (v2, w11)
}

/// Final-time agreement between a spectral trajectory and the
/// finite-difference oracle, measured cell-wise in `L2`.
#[derive(Debug, Clone, Copy)]
pub struct OracleComparison {
    pub l2_h1: f64,
    pub l2_h2: f64,
    pub l2_u: f64,
    /// Largest of the three component discrepancies.
    pub max_l2: f64,
}

pub fn compare_with_fd(traj: &Trajectory, fd: &FdSolution) -> OracleComparison {
    let asm = traj.assembled();
    let state = traj.samples.last().expect("nonempty trajectory");
    let m = fd.centers.len();
    let dz = 1.0 / m as f64;
    let mut s_h1 = 0.0;
    let mut s_h2 = 0.0;
    let mut s_u = 0.0;
    for (i, &z) in fd.centers.iter().enumerate() {
        let (h1, _) = basis::synthesize_at(&state.a1, &asm.basis, z);
        let (h2, _) = basis::synthesize_at(&state.a2, &asm.basis, z);
        let (u, _) = basis::synthesize_at(&state.b, &asm.basis, z);
        s_h1 += dz * (h1 - fd.h1[i]).powi(2);
        s_h2 += dz * (h2 - fd.h2[i]).powi(2);
        s_u += dz * (u - fd.u[i]).powi(2);
    }
    let (l2_h1, l2_h2, l2_u) = (s_h1.sqrt(), s_h2.sqrt(), s_u.sqrt());
    OracleComparison { l2_h1, l2_h2, l2_u, max_l2: l2_h1.max(l2_h2).max(l2_u) }
}
