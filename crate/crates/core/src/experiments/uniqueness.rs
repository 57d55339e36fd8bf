//! Uniqueness cross-check: solve the same instance with two different
//! integrator configurations and measure the solution distance in the
//! `V2` and `W2^{1,1}` norms. Both runs converge to the same trajectory,
//! so the distance must stay within the combined tolerance budget.

use std::sync::Arc;

use crate::basis;
use crate::diagnostics;
use crate::error::Result;
use crate::galerkin::{assemble, ProblemSpec};
use crate::timestepper::{integrate, IntegratorConfig};

use super::{diff_norms, uniform_times};

#[derive(Debug, Clone, Copy)]
pub struct UniquenessReport {
    /// `V2` norm of the `h`-difference between the two runs.
    pub diff_v2_h: f64,
    /// `W2^{1,1}` norm of the `u`-difference.
    pub diff_w11_u: f64,
    /// Solution scale: combined norms of the first run.
    pub scale: f64,
    /// `rel_tol_a + rel_tol_b`.
    pub tol_budget: f64,
}

impl UniquenessReport {
    /// Largest normalized disagreement relative to the solution scale.
    pub fn normalized(&self) -> f64 {
        (self.diff_v2_h + self.diff_w11_u) / self.scale
    }
}

/// Solve with both configurations on the same discretization and compare.
pub fn uniqueness_crosscheck(
    spec: &ProblemSpec,
    config_a: &IntegratorConfig,
    config_b: &IntegratorConfig,
    n: usize,
) -> Result<UniquenessReport> {
    let panels = basis::default_panels_per_piece(n);
    let asm = Arc::new(assemble(spec.clone(), n, panels, basis::DEFAULT_QUAD_ORDER)?);
    let times = uniform_times(spec.horizon, 48);
    let traj_a = integrate(asm.clone(), config_a, &times)?;
    let traj_b = integrate(asm.clone(), config_b, &times)?;

    let (diff_v2_h, diff_w11_u) = diff_norms(&traj_a, &traj_b, &asm, &times);
    let scale = (diagnostics::norm_v2_h(&traj_a) + diagnostics::norm_w11_u(&traj_a)).max(1e-9);
    Ok(UniquenessReport {
        diff_v2_h,
        diff_w11_u,
        scale,
        tol_budget: config_a.rel_tol + config_b.rel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{TrigPhase, TrigPoly};
    use crate::galerkin::InitialField;
    use crate::timestepper::Scheme;

    #[test]
    fn zero_data_runs_agree_exactly() {
        let spec = ProblemSpec::quiescent(0.3);
        let a = IntegratorConfig::default();
        let b = IntegratorConfig { scheme: Scheme::ImexArs3, ..IntegratorConfig::default() };
        let report = uniqueness_crosscheck(&spec, &a, &b, 8).unwrap();
        assert_eq!(report.diff_v2_h, 0.0);
        assert_eq!(report.diff_w11_u, 0.0);
    }

    #[test]
    fn cross_scheme_agreement_within_budget() {
        let mut spec = ProblemSpec::quiescent(0.25);
        spec.h01 = InitialField::Trig(TrigPoly { terms: vec![(0.4, 1, TrigPhase::Cos)] });
        spec.u1 = InitialField::Trig(TrigPoly { terms: vec![(0.2, 1, TrigPhase::Sin)] });
        let a = IntegratorConfig { rel_tol: 1e-8, abs_tol: 1e-10, ..IntegratorConfig::default() };
        let b = IntegratorConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            scheme: Scheme::ImexArs3,
            ..IntegratorConfig::default()
        };
        let report = uniqueness_crosscheck(&spec, &a, &b, 8).unwrap();
        assert!(
            report.diff_v2_h + report.diff_w11_u <= 10.0 * report.tol_budget * report.scale,
            "difference {} + {} exceeds budget {} * scale {}",
            report.diff_v2_h,
            report.diff_w11_u,
            10.0 * report.tol_budget,
            report.scale
        );
    }
}
