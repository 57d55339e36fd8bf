//! Trigonometric fundamental system on the torus and the breakpoint-aligned
//! composite Gauss-Legendre quadrature used for every inner product.
//!
//! The basis is `psi_1 = 1`, `psi_{2j} = sqrt(2) cos(2 pi j z)`,
//! `psi_{2j+1} = sqrt(2) sin(2 pi j z)`: orthonormal in `L2(0,1)`, orthogonal
//! in `W2^1(0,1)`, and periodic in value and derivative at the endpoints.
//! Discontinuous coefficients make single-rule quadrature useless, so the
//! grid splits `[0,1)` at every coefficient breakpoint and over-integrates
//! each smooth piece with composite panels; products of basis modes and
//! piecewise polynomials are then integrated essentially exactly.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Index layout of one basis mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModeKind {
    Constant,
    Cos,
    Sin,
}

/// The first `N` modes of the trigonometric fundamental system.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinBasis {
    kinds: Vec<ModeKind>,
    freqs: Vec<u32>,
}

/// Build the basis with exactly `n` modes in the fixed order
/// `{1, cos, sin, cos, sin, ...}`.
pub fn build_basis(n: usize) -> Result<GalerkinBasis> {
    if n == 0 {
        return Err(Error::Invalid("basis needs at least one mode".into()));
    }
    let mut kinds = Vec::with_capacity(n);
    let mut freqs = Vec::with_capacity(n);
    for k in 0..n {
        if k == 0 {
            kinds.push(ModeKind::Constant);
            freqs.push(0);
        } else if k % 2 == 1 {
            kinds.push(ModeKind::Cos);
            freqs.push(((k + 1) / 2) as u32);
        } else {
            kinds.push(ModeKind::Sin);
            freqs.push((k / 2) as u32);
        }
    }
    Ok(GalerkinBasis { kinds, freqs })
}

impl GalerkinBasis {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Integer frequency `j` of mode `k` (0 for the constant mode).
    pub fn freq(&self, k: usize) -> u32 {
        self.freqs[k]
    }

    /// Angular frequency `2 pi j` of mode `k`.
    pub fn omega(&self, k: usize) -> f64 {
        TAU * self.freqs[k] as f64
    }

    /// Largest integer frequency present.
    pub fn max_freq(&self) -> u32 {
        self.freqs.iter().copied().max().unwrap_or(0)
    }

    /// `psi_k(z)`. The phase `j z` is reduced mod 1 before scaling by
    /// `2 pi`, which keeps the endpoint conditions exact at `z = 0, 1`.
    pub fn eval(&self, k: usize, z: f64) -> f64 {
        match self.kinds[k] {
            ModeKind::Constant => 1.0,
            ModeKind::Cos => SQRT2 * (TAU * reduced_phase(self.freqs[k], z)).cos(),
            ModeKind::Sin => SQRT2 * (TAU * reduced_phase(self.freqs[k], z)).sin(),
        }
    }

    /// `psi_k'(z)`.
    pub fn eval_deriv(&self, k: usize, z: f64) -> f64 {
        let w = self.omega(k);
        match self.kinds[k] {
            ModeKind::Constant => 0.0,
            ModeKind::Cos => -SQRT2 * w * (TAU * reduced_phase(self.freqs[k], z)).sin(),
            ModeKind::Sin => SQRT2 * w * (TAU * reduced_phase(self.freqs[k], z)).cos(),
        }
    }
}

fn reduced_phase(freq: u32, z: f64) -> f64 {
    (freq as f64 * z).rem_euclid(1.0)
}

/// Composite Gauss-Legendre rule over `[0, 1)` whose panel endpoints contain
/// every coefficient breakpoint, with cached basis tables at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    panels: Vec<(f64, f64)>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `psi[k][i]` = mode `k` at node `i`.
    psi: Vec<Vec<f64>>,
    /// `dpsi[k][i]` = mode-`k` derivative at node `i`.
    dpsi: Vec<Vec<f64>>,
}

/// Default panels per smooth piece: enough over-integration to suppress
/// aliasing of the quadratic nonlinearities at mode count `n`.
pub fn default_panels_per_piece(n_modes: usize) -> usize {
    (2 * n_modes).max(8)
}

/// Default Gauss order per panel.
pub const DEFAULT_QUAD_ORDER: usize = 12;

/// Build the composite grid: each smooth piece between consecutive
/// breakpoints (plus the interval ends) is split into `panels_per_piece`
/// equal panels carrying a `q`-point Gauss-Legendre rule, and the basis
/// tables are cached at every node.
pub fn build_grid(
    breakpoints: &[f64],
    panels_per_piece: usize,
    q: usize,
    basis: &GalerkinBasis,
) -> Result<QuadratureGrid> {
    for w in breakpoints.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Invalid(format!(
                "grid breakpoints not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
    }
    if breakpoints.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
        return Err(Error::Invalid("grid breakpoints must lie in (0, 1)".into()));
    }
    if panels_per_piece == 0 {
        return Err(Error::Invalid("panels_per_piece must be at least 1".into()));
    }
    if q < 2 {
        return Err(Error::Invalid("Gauss order must be at least 2".into()));
    }

    let (gx, gw) = gauss_legendre(q);

    let mut edges = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(0.0);
    edges.extend_from_slice(breakpoints);
    edges.push(1.0);

    let mut panels = Vec::new();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for piece in edges.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        for s in 0..panels_per_piece {
            let pa = a + (b - a) * s as f64 / panels_per_piece as f64;
            let pb = a + (b - a) * (s + 1) as f64 / panels_per_piece as f64;
            panels.push((pa, pb));
            let half = 0.5 * (pb - pa);
            let mid = 0.5 * (pa + pb);
            for i in 0..q {
                nodes.push(mid + half * gx[i]);
                weights.push(half * gw[i]);
            }
        }
    }

    let psi = (0..basis.len())
        .map(|k| nodes.iter().map(|&z| basis.eval(k, z)).collect())
        .collect();
    let dpsi = (0..basis.len())
        .map(|k| nodes.iter().map(|&z| basis.eval_deriv(k, z)).collect())
        .collect();

    Ok(QuadratureGrid { panels, nodes, weights, psi, dpsi })
}

impl QuadratureGrid {
    pub fn panels(&self) -> &[(f64, f64)] {
        &self.panels
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_modes(&self) -> usize {
        self.psi.len()
    }

    pub fn psi(&self, k: usize) -> &[f64] {
        &self.psi[k]
    }

    pub fn dpsi(&self, k: usize) -> &[f64] {
        &self.dpsi[k]
    }

    /// Cached mode-value table, one row per mode.
    pub fn psi_rows(&self) -> &[Vec<f64>] {
        &self.psi
    }

    /// Cached mode-derivative table, one row per mode.
    pub fn dpsi_rows(&self) -> &[Vec<f64>] {
        &self.dpsi
    }

    /// Integrate a function over one period. Sequential left-to-right node
    /// order with Neumaier compensation: deterministic and accurate to the
    /// last ulp for smooth integrands.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        let mut comp = 0.0;
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            let term = w * f(*z);
            let next = acc + term;
            if acc.abs() >= term.abs() {
                comp += (acc - next) + term;
            } else {
                comp += (term - next) + acc;
            }
            acc = next;
        }
        acc + comp
    }

    /// Integrate nodal values over one period (same summation scheme).
    pub fn integrate_nodal(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nodes.len());
        let mut acc = 0.0;
        let mut comp = 0.0;
        for (v, w) in values.iter().zip(&self.weights) {
            let term = w * v;
            let next = acc + term;
            if acc.abs() >= term.abs() {
                comp += (acc - next) + term;
            } else {
                comp += (term - next) + acc;
            }
            acc = next;
        }
        acc + comp
    }
}

/// Pointwise `sum_k c_k psi_k` and `sum_k c_k psi_k'` at every grid node.
pub fn synthesize(
    coeffs: &[f64],
    basis: &GalerkinBasis,
    grid: &QuadratureGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if coeffs.len() != basis.len() || basis.len() > grid.n_modes() {
        return Err(Error::LengthMismatch { expected: grid.n_modes(), got: coeffs.len() });
    }
    let mut values = vec![0.0; grid.nodes.len()];
    let mut derivs = vec![0.0; grid.nodes.len()];
    synth_into(coeffs, &mut values, &grid.psi);
    synth_into(coeffs, &mut derivs, &grid.dpsi);
    Ok((values, derivs))
}

pub(crate) fn synth_into(coeffs: &[f64], out: &mut [f64], table: &[Vec<f64>]) {
    out.fill(0.0);
    for (k, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let row = &table[k];
        for (o, t) in out.iter_mut().zip(row) {
            *o += c * t;
        }
    }
}

/// Synthesized value and derivative at an arbitrary point.
pub fn synthesize_at(coeffs: &[f64], basis: &GalerkinBasis, z: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut d = 0.0;
    for (k, &c) in coeffs.iter().enumerate() {
        v += c * basis.eval(k, z);
        d += c * basis.eval_deriv(k, z);
    }
    (v, d)
}

/// `c_k = integral of v * psi_k` via the grid quadrature.
pub fn project(nodal: &[f64], basis: &GalerkinBasis, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    if nodal.len() != grid.nodes.len() || basis.len() > grid.n_modes() {
        return Err(Error::LengthMismatch { expected: grid.nodes.len(), got: nodal.len() });
    }
    Ok(project_table(nodal, basis.len(), grid, &grid.psi))
}

/// `c_k = integral of v * psi_k'` via the grid quadrature.
pub fn project_deriv(
    nodal: &[f64],
    basis: &GalerkinBasis,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    if nodal.len() != grid.nodes.len() || basis.len() > grid.n_modes() {
        return Err(Error::LengthMismatch { expected: grid.nodes.len(), got: nodal.len() });
    }
    Ok(project_table(nodal, basis.len(), grid, &grid.dpsi))
}

pub(crate) fn project_table(
    nodal: &[f64],
    n_modes: usize,
    grid: &QuadratureGrid,
    table: &[Vec<f64>],
) -> Vec<f64> {
    let mut out = vec![0.0; n_modes];
    for (k, o) in out.iter_mut().enumerate() {
        let row = &table[k];
        let mut acc = 0.0;
        for i in 0..nodal.len() {
            acc += grid.weights[i] * nodal[i] * row[i];
        }
        *o = acc;
    }
    out
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, _, d) = legendre_pair(n, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        // At the root, w = 2 (1 - z^2) / (n P_{n-1}(z))^2 avoids the
        // P_n-cancellation in the derivative formula.
        let (_, pm1, _) = legendre_pair(n, z);
        let nf = n as f64;
        let wi = 2.0 * (1.0 - z * z) / (nf * pm1 * (nf * pm1));
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
        let (_, pm1, _) = legendre_pair(n, 0.0);
        let nf = n as f64;
        w[n / 2] = 2.0 / (nf * pm1 * (nf * pm1));
    }
    (x, w)
}

/// `(P_n(x), P_{n-1}(x), P_n'(x))` by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, p0, d)
}
