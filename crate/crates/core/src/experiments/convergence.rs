//! Mode-count refinement: Cauchy differences between solutions at
//! consecutive mode counts, co-projected onto the finer basis.

use std::sync::Arc;

use crate::basis;
use crate::error::{Error, Result};
use crate::galerkin::{assemble, ProblemSpec};
use crate::timestepper::{integrate, IntegratorConfig};

use super::{diff_norms, uniform_times};

/// Difference between the solutions at two consecutive mode counts.
#[derive(Debug, Clone, Copy)]
pub struct ConvergencePair {
    pub n_coarse: usize,
    pub n_fine: usize,
    /// `V2` norm of the `h`-difference.
    pub diff_v2_h: f64,
    /// `W2^{1,1}` norm of the `u`-difference.
    pub diff_w11_u: f64,
}

impl ConvergencePair {
    pub fn combined(&self) -> f64 {
        self.diff_v2_h + self.diff_w11_u
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub pairs: Vec<ConvergencePair>,
}

/// Solve the same instance at every mode count in `n_list` (increasing)
/// and measure the pairwise solution differences.
pub fn convergence_study(
    spec: &ProblemSpec,
    n_list: &[usize],
    config: &IntegratorConfig,
) -> Result<ConvergenceStudy> {
    if n_list.len() < 2 {
        return Err(Error::Invalid("a refinement study needs at least two mode counts".into()));
    }
    if !n_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Invalid("mode counts must be strictly increasing".into()));
    }

    let times = uniform_times(spec.horizon, 48);
    let mut trajectories = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let panels = basis::default_panels_per_piece(n);
        let asm = Arc::new(assemble(spec.clone(), n, panels, basis::DEFAULT_QUAD_ORDER)?);
        trajectories.push(integrate(asm, config, &times)?);
    }

    let mut pairs = Vec::with_capacity(n_list.len() - 1);
    for i in 0..n_list.len() - 1 {
        let fine = &trajectories[i + 1];
        let asm_fine = fine.assembled().clone();
        let (diff_v2_h, diff_w11_u) = diff_norms(&trajectories[i], fine, &asm_fine, &times);
        pairs.push(ConvergencePair {
            n_coarse: n_list[i],
            n_fine: n_list[i + 1],
            diff_v2_h,
            diff_w11_u,
        });
    }
    Ok(ConvergenceStudy { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::PiecewiseCoefficient;
    use crate::galerkin::InitialField;

    #[test]
    fn steady_state_differences_vanish() {
        let mut spec = ProblemSpec::quiescent(0.3);
        spec.h01 = InitialField::Piecewise(PiecewiseCoefficient::constant(1.1));
        let study =
            convergence_study(&spec, &[4, 8], &IntegratorConfig::default()).unwrap();
        for pair in &study.pairs {
            assert!(pair.diff_v2_h < 1e-11, "v2 diff {}", pair.diff_v2_h);
            assert!(pair.diff_w11_u < 1e-11, "w11 diff {}", pair.diff_w11_u);
        }
    }

    #[test]
    fn rejects_non_increasing_list() {
        let spec = ProblemSpec::quiescent(0.3);
        assert!(convergence_study(&spec, &[8, 8], &IntegratorConfig::default()).is_err());
        assert!(convergence_study(&spec, &[8], &IntegratorConfig::default()).is_err());
    }
}
