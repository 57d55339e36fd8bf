//! Independent finite-difference discretization for cross-validation.
//!
//! Conservative second-order scheme on a staggered periodic grid: unknowns
//! at the `M` cell centers, fluxes at the faces, with harmonic-mean face
//! coefficients so that the discrete fluxes `r h_z` and `nu^2 u_z` stay
//! continuous across coefficient interfaces by construction. Interfaces
//! must land on faces. Time stepping is a second-order
//! predictor-corrector: Crank-Nicolson on the diffusion and wave operators
//! (cyclic tridiagonal solves), explicit midpoint on transport, coupling,
//! and forcing. Nothing here shares code with the spectral path.

use crate::error::{Error, Result};
use crate::galerkin::ProblemSpec;

/// Nodal solution of the oracle at the final time.
#[derive(Debug, Clone)]
pub struct FdSolution {
    /// Cell centers `(i + 1/2) / M`.
    pub centers: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub u: Vec<f64>,
    pub ut: Vec<f64>,
    pub steps: usize,
}

/// Solve the instance with `m_cells` cells and fixed step `dt`.
/// Breakpoints must align with cell faces; the transport Courant number is
/// checked every step and violations are reported, never corrected.
pub fn fd_oracle(spec: &ProblemSpec, m_cells: usize, dt: f64) -> Result<FdSolution> {
    spec.validate()?;
    if m_cells < 8 {
        return Err(Error::Invalid("the oracle needs at least 8 cells".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Invalid("dt must be positive".into()));
    }
    let m = m_cells;
    let delta = 1.0 / m as f64;
    for &b in &spec.breakpoints() {
        let scaled = b * m as f64;
        if (scaled - scaled.round()).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "breakpoint {b} does not align with a face of the {m}-cell grid"
            )));
        }
    }

    let centers: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) * delta).collect();
    let r_c: Vec<f64> = centers.iter().map(|&z| spec.r.eval(z)).collect();
    let nu2_c: Vec<f64> = centers.iter().map(|&z| spec.nu.eval(z).powi(2)).collect();

    // harmonic-mean face coefficients; face i sits between cells i-1 and i
    let face = |c: &[f64], i: usize| -> f64 {
        let a = c[(i + m - 1) % m];
        let b = c[i % m];
        2.0 * a * b / (a + b)
    };
    let r_face: Vec<f64> = (0..m).map(|i| face(&r_c, i)).collect();
    let nu2_face: Vec<f64> = (0..m).map(|i| face(&nu2_c, i)).collect();

    let mut h1: Vec<f64> = centers.iter().map(|&z| spec.h01.eval(z)).collect();
    let mut h2: Vec<f64> = centers.iter().map(|&z| spec.h02.eval(z)).collect();
    let mut u: Vec<f64> = centers.iter().map(|&z| spec.u0.eval(z)).collect();
    let mut ut: Vec<f64> = centers.iter().map(|&z| spec.u1.eval(z)).collect();

    // diffusion operators D x = d/dz (coef dx/dz) as cyclic tridiagonals
    let diff_op = |coef: &[f64], x: &[f64], out: &mut [f64]| {
        for i in 0..m {
            let up = coef[(i + 1) % m] * (x[(i + 1) % m] - x[i]);
            let down = coef[i] * (x[i] - x[(i + m - 1) % m]);
            out[i] = (up - down) / (delta * delta);
        }
    };

    // nonstiff parts
    let nonstiff_h = |h: &[f64], ut: &[f64], j: &[f64], out: &mut [f64]| {
        // d/dz of the face-averaged transport and current fluxes
        let rest = |i: usize| -> f64 {
            let il = (i + m - 1) % m;
            let ir = i % m;
            -0.5 * (h[il] * ut[il] + h[ir] * ut[ir])
                - 0.5 * (r_c[il] * j[il] + r_c[ir] * j[ir])
        };
        for i in 0..m {
            out[i] = (rest(i + 1) - rest(i)) / delta;
        }
    };
    let nonstiff_u = |h1: &[f64], h2: &[f64], f: &[f64], p: f64, out: &mut [f64]| {
        let hsq = |i: usize| -> f64 {
            let il = (i + m - 1) % m;
            let ir = i % m;
            0.5 * (h1[il] * h1[il] + h2[il] * h2[il] + h1[ir] * h1[ir] + h2[ir] * h2[ir])
        };
        for i in 0..m {
            out[i] = -p * (hsq(i + 1) - hsq(i)) / delta + f[i];
        }
    };

    // (I - c D) solver bands
    let bands = |coef: &[f64], c: f64| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut sub = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut sup = vec![0.0; m];
        for i in 0..m {
            let lo = c * coef[i] / (delta * delta);
            let hi = c * coef[(i + 1) % m] / (delta * delta);
            sub[i] = -lo;
            sup[i] = -hi;
            diag[i] = 1.0 + lo + hi;
        }
        (sub, diag, sup)
    };

    let eval_forcing = |t: f64| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let j1: Vec<f64> = centers.iter().map(|&z| spec.j1.eval(t, z)).collect();
        let j2: Vec<f64> = centers.iter().map(|&z| spec.j2.eval(t, z)).collect();
        let f: Vec<f64> = centers.iter().map(|&z| spec.f.eval(t, z)).collect();
        (j1, j2, f)
    };

    let horizon = spec.horizon;
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut nh1 = vec![0.0; m];
    let mut nh2 = vec![0.0; m];
    let mut nu_ = vec![0.0; m];
    let mut dwork = vec![0.0; m];

    while t < horizon * (1.0 - 1e-12) {
        let step = dt.min(horizon - t);
        // transport Courant check
        let vmax = ut.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let courant = step * vmax / delta;
        if courant > 1.0 {
            return Err(Error::CflViolation { t, courant });
        }

        let (j1, j2, f) = eval_forcing(t);
        let (j1m, j2m, fm) = eval_forcing(t + 0.5 * step);

        // predictor: backward-Euler half step in the stiff parts
        let (sub_h, diag_h, sup_h) = bands(&r_face, 0.5 * step);
        nonstiff_h(&h1, &ut, &j1, &mut nh1);
        nonstiff_h(&h2, &ut, &j2, &mut nh2);
        let mut rhs1 = vec![0.0; m];
        let mut rhs2 = vec![0.0; m];
        for i in 0..m {
            rhs1[i] = h1[i] + 0.5 * step * nh1[i];
            rhs2[i] = h2[i] + 0.5 * step * nh2[i];
        }
        let h1_mid = solve_cyclic_tridiag(&sub_h, &diag_h, &sup_h, &rhs1);
        let h2_mid = solve_cyclic_tridiag(&sub_h, &diag_h, &sup_h, &rhs2);

        let (sub_u, diag_u, sup_u) = bands(&nu2_face, 0.25 * step * step);
        nonstiff_u(&h1, &h2, &f, spec.p, &mut nu_);
        diff_op(&nu2_face, &u, &mut dwork);
        let mut rhs_ut = vec![0.0; m];
        for i in 0..m {
            rhs_ut[i] = ut[i] + 0.5 * step * (dwork[i] + nu_[i]);
        }
        let ut_mid = solve_cyclic_tridiag(&sub_u, &diag_u, &sup_u, &rhs_ut);
        let mut u_mid = vec![0.0; m];
        for i in 0..m {
            u_mid[i] = u[i] + 0.5 * step * ut_mid[i];
        }

        // corrector: Crank-Nicolson stiff parts, midpoint nonstiff parts
        nonstiff_h(&h1_mid, &ut_mid, &j1m, &mut nh1);
        nonstiff_h(&h2_mid, &ut_mid, &j2m, &mut nh2);
        diff_op(&r_face, &h1, &mut dwork);
        for i in 0..m {
            rhs1[i] = h1[i] + 0.5 * step * dwork[i] + step * nh1[i];
        }
        diff_op(&r_face, &h2, &mut dwork);
        for i in 0..m {
            rhs2[i] = h2[i] + 0.5 * step * dwork[i] + step * nh2[i];
        }
        let h1_new = solve_cyclic_tridiag(&sub_h, &diag_h, &sup_h, &rhs1);
        let h2_new = solve_cyclic_tridiag(&sub_h, &diag_h, &sup_h, &rhs2);

        nonstiff_u(&h1_mid, &h2_mid, &fm, spec.p, &mut nu_);
        diff_op(&nu2_face, &u, &mut dwork);
        let mut rhs_ut = vec![0.0; m];
        for i in 0..m {
            rhs_ut[i] = ut[i] + step * dwork[i] + step * nu_[i];
        }
        diff_op(&nu2_face, &ut, &mut dwork);
        for i in 0..m {
            rhs_ut[i] += 0.25 * step * step * dwork[i];
        }
        let ut_new = solve_cyclic_tridiag(&sub_u, &diag_u, &sup_u, &rhs_ut);
        for i in 0..m {
            u[i] += 0.5 * step * (ut[i] + ut_new[i]);
        }
        h1 = h1_new;
        h2 = h2_new;
        ut = ut_new;

        if h1.iter().chain(&h2).chain(&u).chain(&ut).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }

        t += step;
        steps += 1;
        if steps > 100_000_000 {
            return Err(Error::MaxStepsExceeded { t, horizon, max_steps: steps });
        }
    }

    Ok(FdSolution { centers, h1, h2, u, ut, steps })
}

/// Solve a cyclic tridiagonal system `sub[i] x[i-1] + diag[i] x[i] +
/// sup[i] x[i+1] = rhs[i]` (indices mod `M`) by Sherman-Morrison over a
/// Thomas sweep.
pub fn solve_cyclic_tridiag(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    assert!(m >= 3);
    let alpha = sub[0]; // A[0][m-1]
    let beta = sup[m - 1]; // A[m-1][0]
    let gamma = -diag[0];

    let mut diag_mod = diag.to_vec();
    diag_mod[0] -= gamma;
    diag_mod[m - 1] -= beta * alpha / gamma;

    let y = solve_tridiag(sub, &diag_mod, sup, rhs);
    let mut uvec = vec![0.0; m];
    uvec[0] = gamma;
    uvec[m - 1] = beta;
    let q = solve_tridiag(sub, &diag_mod, sup, &uvec);

    let vy = y[0] + alpha * y[m - 1] / gamma;
    let vq = q[0] + alpha * q[m - 1] / gamma;
    let fact = vy / (1.0 + vq);
    y.iter().zip(&q).map(|(yi, qi)| yi - fact * qi).collect()
}

/// Plain Thomas sweep for a non-cyclic tridiagonal system; `sub[0]` and
/// `sup[m-1]` are ignored.
fn solve_tridiag(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..m {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / denom;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; m];
    x[m - 1] = d[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}
