//! 1-periodic piecewise-polynomial coefficient fields, separable forcing
//! terms, and the nondimensionalization of the physical constants.
//!
//! A coefficient lives on the torus `[0, 1)` split into half-open cells
//! `[z_k, z_{k+1})` by its jump points; inside each cell it is a polynomial
//! in the local coordinate `z - z_k`. Evaluation is right-continuous at the
//! jump points and 1-periodic by exact reduction of the argument mod 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 1-periodic scalar field, smooth on each cell between its jump points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseCoefficient {
    /// Jump locations `0 < z_1 < ... < z_m < 1`.
    breakpoints: Vec<f64>,
    /// `m + 1` polynomials, coefficients in the local variable `z - z_k`
    /// (constant term first). Piece `k` covers `[z_k, z_{k+1})` with
    /// `z_0 = 0`, `z_{m+1} = 1`.
    pieces: Vec<Vec<f64>>,
}

impl PiecewiseCoefficient {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Vec<f64>>) -> Result<Self> {
        for w in breakpoints.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Invalid(format!(
                    "breakpoints not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for &z in &breakpoints {
            if !(z > 0.0 && z < 1.0) || !z.is_finite() {
                return Err(Error::Invalid(format!(
                    "breakpoint {z} outside the open interval (0, 1)"
                )));
            }
        }
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::Invalid(format!(
                "{} breakpoints require {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                pieces.len()
            )));
        }
        for (k, piece) in pieces.iter().enumerate() {
            if piece.is_empty() {
                return Err(Error::Invalid(format!("piece {k} has no coefficients")));
            }
            if piece.iter().any(|c| !c.is_finite()) {
                return Err(Error::Invalid(format!("piece {k} has a non-finite coefficient")));
            }
        }
        Ok(Self { breakpoints, pieces })
    }

    /// Constant field.
    pub fn constant(value: f64) -> Self {
        Self { breakpoints: Vec::new(), pieces: vec![vec![value]] }
    }

    /// Parse the structured-text document `{"breakpoints": [...], "pieces": [[...], ...]}`.
    pub fn parse(document: &str) -> Result<Self> {
        let doc: CoefficientDoc =
            serde_json::from_str(document).map_err(|e| Error::Schema(e.to_string()))?;
        Self::new(doc.breakpoints, doc.pieces)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Vec<f64>] {
        &self.pieces
    }

    /// Left endpoint of piece `k` (`z_0 = 0`).
    fn piece_start(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.breakpoints[k - 1]
        }
    }

    /// Right endpoint of piece `k` (`z_{m+1} = 1`).
    fn piece_end(&self, k: usize) -> f64 {
        if k == self.breakpoints.len() {
            1.0
        } else {
            self.breakpoints[k]
        }
    }

    fn piece_index(&self, frac: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= frac)
    }

    /// Value at any real `z`; the argument is reduced mod 1 (exact fmod
    /// arithmetic) and the piece containing the fraction is evaluated,
    /// right-continuously at the jump points.
    pub fn eval(&self, z: f64) -> f64 {
        let frac = z.rem_euclid(1.0);
        // rem_euclid(1.0) can return exactly 1.0 when z is a tiny negative
        // number; fold it back onto the torus.
        let frac = if frac >= 1.0 { 0.0 } else { frac };
        let k = self.piece_index(frac);
        horner(&self.pieces[k], frac - self.piece_start(k))
    }

    /// Classical derivative inside the piece containing `frac(z)`; the jump
    /// points carry the right-limit derivative.
    pub fn eval_dz(&self, z: f64) -> f64 {
        let frac = z.rem_euclid(1.0);
        let frac = if frac >= 1.0 { 0.0 } else { frac };
        let k = self.piece_index(frac);
        horner_derivative(&self.pieces[k], frac - self.piece_start(k))
    }

    /// One-sided limits at a point `z` in `[0,1)`: `(left, right)`.
    /// The left limit at a piece boundary comes from the closure of the
    /// preceding piece; at `z = 0` it wraps to the value at `1^-`.
    pub fn one_sided(&self, z: f64) -> (f64, f64) {
        let frac = z.rem_euclid(1.0);
        let frac = if frac >= 1.0 { 0.0 } else { frac };
        let k = self.piece_index(frac);
        let right = horner(&self.pieces[k], frac - self.piece_start(k));
        let left = if frac == self.piece_start(k) {
            let left_piece = if k == 0 { self.pieces.len() - 1 } else { k - 1 };
            let width = self.piece_end(left_piece) - self.piece_start(left_piece);
            horner(&self.pieces[left_piece], width)
        } else {
            right
        };
        (left, right)
    }

    /// Infimum and supremum over one period, computed per piece on the
    /// piece closure by dense sampling plus local refinement of the
    /// sampled extrema.
    pub fn bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (k, piece) in self.pieces.iter().enumerate() {
            let a = self.piece_start(k);
            let b = self.piece_end(k);
            let (plo, phi) = poly_bounds(piece, b - a);
            lo = lo.min(plo);
            hi = hi.max(phi);
        }
        (lo, hi)
    }

    /// Bounds of a positivity-constrained field (`r`, `nu`): errors when the
    /// minimum is not strictly positive.
    pub fn verify_positive(&self, name: &str) -> Result<(f64, f64)> {
        let (lo, hi) = self.bounds();
        if lo <= 0.0 {
            return Err(Error::NonPositiveCoefficient { name: name.to_string(), min: lo });
        }
        Ok((lo, hi))
    }

    /// Exact integral over one period (polynomial antiderivatives per piece).
    pub fn mean(&self) -> f64 {
        let mut total = 0.0;
        for (k, piece) in self.pieces.iter().enumerate() {
            let width = self.piece_end(k) - self.piece_start(k);
            let mut acc = 0.0;
            for (i, &c) in piece.iter().enumerate() {
                acc += c * width.powi(i as i32 + 1) / (i as f64 + 1.0);
            }
            total += acc;
        }
        total
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CoefficientDoc {
    #[serde(default)]
    breakpoints: Vec<f64>,
    pieces: Vec<Vec<f64>>,
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

fn horner_derivative(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for (i, &c) in coeffs.iter().enumerate().skip(1).rev() {
        acc = acc * x + c * i as f64;
    }
    acc
}

/// Min/max of a polynomial (local coordinates) over `[0, width]`:
/// 513 samples, then golden-section refinement around every sampled
/// local extremum.
fn poly_bounds(coeffs: &[f64], width: f64) -> (f64, f64) {
    const SAMPLES: usize = 512;
    let xs: Vec<f64> = (0..=SAMPLES).map(|i| width * i as f64 / SAMPLES as f64).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| horner(coeffs, x)).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &vs {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    for i in 1..SAMPLES {
        let interior_min = vs[i] < vs[i - 1] && vs[i] < vs[i + 1];
        let interior_max = vs[i] > vs[i - 1] && vs[i] > vs[i + 1];
        if interior_min {
            lo = lo.min(golden_extremum(coeffs, xs[i - 1], xs[i + 1], true));
        }
        if interior_max {
            hi = hi.max(golden_extremum(coeffs, xs[i - 1], xs[i + 1], false));
        }
    }
    (lo, hi)
}

fn golden_extremum(coeffs: &[f64], mut a: f64, mut b: f64, minimize: bool) -> f64 {
    const PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - PHI * (b - a);
    let mut x2 = a + PHI * (b - a);
    let sign = if minimize { 1.0 } else { -1.0 };
    let mut f1 = sign * horner(coeffs, x1);
    let mut f2 = sign * horner(coeffs, x2);
    for _ in 0..60 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - PHI * (b - a);
            f1 = sign * horner(coeffs, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + PHI * (b - a);
            f2 = sign * horner(coeffs, x2);
        }
    }
    sign * f1.min(f2)
}

/// Smooth scalar profile in time for one separable forcing term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum TimeProfile {
    /// `params = [a]`: `exp(a t)`.
    Exp(Vec<f64>),
    /// `params = [c0, c1, ...]`: `c0 + c1 t + ...`.
    Poly(Vec<f64>),
    /// `params = [w, phi]`: `cos(w t + phi)`.
    Trig(Vec<f64>),
}

impl TimeProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            TimeProfile::Exp(p) if p.len() == 1 => Ok(()),
            TimeProfile::Exp(p) => Err(Error::Schema(format!(
                "exp time profile takes 1 parameter, got {}",
                p.len()
            ))),
            TimeProfile::Poly(p) if !p.is_empty() => Ok(()),
            TimeProfile::Poly(_) => {
                Err(Error::Schema("poly time profile needs at least one coefficient".into()))
            }
            TimeProfile::Trig(p) if p.len() == 2 => Ok(()),
            TimeProfile::Trig(p) => Err(Error::Schema(format!(
                "trig time profile takes 2 parameters [w, phi], got {}",
                p.len()
            ))),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Exp(p) => (p[0] * t).exp(),
            TimeProfile::Poly(p) => horner(p, t),
            TimeProfile::Trig(p) => (p[0] * t + p[1]).cos(),
        }
    }
}

/// Forcing field as a finite sum of separable terms
/// `sum_i time_i(t) * space_i(z)`; 1-periodic in `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingField {
    pub terms: Vec<ForcingTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingTerm {
    pub time: TimeProfile,
    pub space: PiecewiseCoefficient,
}

impl ForcingField {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    /// Parse `{"terms": [{"time": {...}, "space": {...}}]}`.
    pub fn parse(document: &str) -> Result<Self> {
        let field: ForcingField =
            serde_json::from_str(document).map_err(|e| Error::Schema(e.to_string()))?;
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        for term in &self.terms {
            term.time.validate()?;
            // re-run the coefficient invariants (the field may come from serde)
            PiecewiseCoefficient::new(
                term.space.breakpoints.clone(),
                term.space.pieces.clone(),
            )?;
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, z: f64) -> f64 {
        self.terms.iter().map(|term| term.time.eval(t) * term.space.eval(z)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Breakpoints of all spatial factors, for grid alignment.
    pub fn all_breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for term in &self.terms {
            out.extend_from_slice(term.space.breakpoints());
        }
        out
    }
}

/// Finite real trigonometric polynomial `sum_i amp_i * {cos|sin}(2 pi m_i z)`;
/// used for smooth initial data and perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    /// `(amplitude, integer mode m, phase)`; `m = 0` with `Cos` is a constant.
    pub terms: Vec<(f64, u32, TrigPhase)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrigPhase {
    Cos,
    Sin,
}

impl TrigPoly {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let mut acc = 0.0;
        for &(amp, m, phase) in &self.terms {
            let arg = std::f64::consts::TAU * m as f64 * z;
            acc += amp
                * match phase {
                    TrigPhase::Cos => arg.cos(),
                    TrigPhase::Sin => arg.sin(),
                };
        }
        acc
    }

    pub fn eval_dz(&self, z: f64) -> f64 {
        let mut acc = 0.0;
        for &(amp, m, phase) in &self.terms {
            let w = std::f64::consts::TAU * m as f64;
            let arg = w * z;
            acc += amp
                * match phase {
                    TrigPhase::Cos => -w * arg.sin(),
                    TrigPhase::Sin => w * arg.cos(),
                };
        }
        acc
    }
}

/// Characteristic physical constants of the medium, all strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Magnetic permeability.
    pub mu_e: f64,
    /// Characteristic length.
    pub length: f64,
    /// Characteristic velocity.
    pub v0: f64,
    /// Electrical conductivity.
    pub sigma: f64,
    /// Characteristic magnetic field.
    pub h0: f64,
    /// Mass density.
    pub rho: f64,
    /// Longitudinal elastic wave speed.
    pub upsilon: f64,
}

/// The three dimensionless numbers of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimensionless {
    /// Magnetic viscosity `1 / (mu_e L V0 sigma)`.
    pub r: f64,
    /// Magnetoelastic coupling `mu_e H0^2 / (2 rho V0^2)`.
    pub p: f64,
    /// Elastic wave speed `upsilon / V0`.
    pub nu: f64,
}

/// Nondimensionalize the physical constants.
pub fn nondimensionalize(pc: &PhysicalConstants) -> Result<Dimensionless> {
    let fields = [
        ("mu_e", pc.mu_e),
        ("length", pc.length),
        ("v0", pc.v0),
        ("sigma", pc.sigma),
        ("h0", pc.h0),
        ("rho", pc.rho),
        ("upsilon", pc.upsilon),
    ];
    for (name, v) in fields {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Invalid(format!("physical constant {name} must be positive and finite, got {v}")));
        }
    }
    Ok(Dimensionless {
        r: 1.0 / (pc.mu_e * pc.length * pc.v0 * pc.sigma),
        p: pc.mu_e * pc.h0 * pc.h0 / (2.0 * pc.rho * pc.v0 * pc.v0),
        nu: pc.upsilon / pc.v0,
    })
}

/// Merge breakpoint lists into a sorted, deduplicated set.
pub fn merge_breakpoints(lists: &[&[f64]]) -> Vec<f64> {
    let mut all: Vec<f64> = lists.iter().flat_map(|l| l.iter().copied()).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    all
}
