//! Problem assembly and the Galerkin ODE system.
//!
//! Expanding `h_l` and `u` in the first `N` basis modes turns the PDE system
//! into the ODE system for the coefficient vectors `a_l`, `b`:
//!
//! ```text
//! a_lk' = (-r h_lz + h_l u_t + r j_l, psi_k')
//! b_k'' = (-nu^2 u_z + p h^2, psi_k') + (f, psi_k)
//! ```
//!
//! The nonlinear terms are formed pointwise at the quadrature nodes and
//! projected against the derivative modes; nothing is ever convolved in
//! spectral space, so discontinuous `r`, `nu` cost nothing extra. All sums
//! run in a fixed sequential order, keeping every evaluation bit-for-bit
//! reproducible.

use std::sync::Arc;

use crate::basis::{
    self, build_basis, build_grid, project_table, synth_into, GalerkinBasis, QuadratureGrid,
};
use crate::coefficients::{merge_breakpoints, ForcingField, PiecewiseCoefficient, TrigPoly};
use crate::error::{Error, Result};

/// A time-and-space forcing term on the right-hand side.
#[derive(Clone)]
pub enum FieldSource {
    Zero,
    /// Finite sum of separable `time(t) * space(z)` terms.
    Separable(ForcingField),
    /// Closed-form field, used by the manufactured-solution machinery.
    Analytic(AnalyticField),
}

/// Shared closure `(t, z) -> value`.
#[derive(Clone)]
pub struct AnalyticField(pub Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl std::fmt::Debug for FieldSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldSource::Zero => write!(f, "Zero"),
            FieldSource::Separable(field) => write!(f, "Separable({} terms)", field.terms.len()),
            FieldSource::Analytic(_) => write!(f, "Analytic"),
        }
    }
}

impl FieldSource {
    pub fn analytic(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        FieldSource::Analytic(AnalyticField(Arc::new(f)))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            FieldSource::Zero => true,
            FieldSource::Separable(field) => field.is_zero(),
            FieldSource::Analytic(_) => false,
        }
    }

    pub fn eval(&self, t: f64, z: f64) -> f64 {
        match self {
            FieldSource::Zero => 0.0,
            FieldSource::Separable(field) => field.eval(t, z),
            FieldSource::Analytic(AnalyticField(f)) => f(t, z),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            FieldSource::Separable(field) => field.all_breakpoints(),
            _ => Vec::new(),
        }
    }
}

/// Initial-data field: piecewise-polynomial or a trigonometric polynomial.
#[derive(Debug, Clone)]
pub enum InitialField {
    Zero,
    Piecewise(PiecewiseCoefficient),
    Trig(TrigPoly),
}

impl InitialField {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            InitialField::Zero => 0.0,
            InitialField::Piecewise(c) => c.eval(z),
            InitialField::Trig(p) => p.eval(z),
        }
    }

    /// Piecewise-classical spatial derivative.
    pub fn eval_dz(&self, z: f64) -> f64 {
        match self {
            InitialField::Zero => 0.0,
            InitialField::Piecewise(c) => c.eval_dz(z),
            InitialField::Trig(p) => p.eval_dz(z),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            InitialField::Piecewise(c) => c.breakpoints().to_vec(),
            _ => Vec::new(),
        }
    }
}

/// Full problem instance: coupling constant, coefficients, forcing,
/// initial data, and the time horizon.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    /// Magnetoelastic coupling; positive, except in the flag-gated
    /// diagnostic mode below.
    pub p: f64,
    /// Accept `p = 0`, which decouples the magnetic subsystem and admits
    /// closed-form heat-kernel tests.
    pub allow_zero_p: bool,
    pub r: PiecewiseCoefficient,
    pub nu: PiecewiseCoefficient,
    pub j1: FieldSource,
    pub j2: FieldSource,
    pub f: FieldSource,
    pub h01: InitialField,
    pub h02: InitialField,
    pub u0: InitialField,
    pub u1: InitialField,
    /// Time horizon `T`.
    pub horizon: f64,
}

impl ProblemSpec {
    /// A quiescent instance with constant unit coefficients.
    pub fn quiescent(horizon: f64) -> Self {
        Self {
            p: 1.0,
            allow_zero_p: false,
            r: PiecewiseCoefficient::constant(1.0),
            nu: PiecewiseCoefficient::constant(1.0),
            j1: FieldSource::Zero,
            j2: FieldSource::Zero,
            f: FieldSource::Zero,
            h01: InitialField::Zero,
            h02: InitialField::Zero,
            u0: InitialField::Zero,
            u1: InitialField::Zero,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p.is_finite() || self.p < 0.0 || (self.p == 0.0 && !self.allow_zero_p) {
            return Err(Error::Invalid(format!(
                "the coupling p must be positive (got {}); p = 0 requires the diagnostic flag",
                self.p
            )));
        }
        self.r.verify_positive("r")?;
        self.nu.verify_positive("nu")?;
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Invalid(format!(
                "horizon T must be positive, got {}",
                self.horizon
            )));
        }
        for (name, src) in [("j1", &self.j1), ("j2", &self.j2), ("f", &self.f)] {
            if let FieldSource::Separable(field) = src {
                field.validate().map_err(|e| Error::Invalid(format!("forcing {name}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Merged jump points of every coefficient in the instance.
    pub fn breakpoints(&self) -> Vec<f64> {
        let j1 = self.j1.breakpoints();
        let j2 = self.j2.breakpoints();
        let f = self.f.breakpoints();
        let h01 = self.h01.breakpoints();
        let h02 = self.h02.breakpoints();
        let u0 = self.u0.breakpoints();
        let u1 = self.u1.breakpoints();
        merge_breakpoints(&[
            self.r.breakpoints(),
            self.nu.breakpoints(),
            &j1,
            &j2,
            &f,
            &h01,
            &h02,
            &u0,
            &u1,
        ])
    }
}

/// Galerkin coefficients of `(h1, h2, u, u_t)` at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub t: f64,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub b: Vec<f64>,
    pub bdot: Vec<f64>,
}

impl SpectralState {
    pub fn zero(t: f64, n: usize) -> Self {
        Self { t, a1: vec![0.0; n], a2: vec![0.0; n], b: vec![0.0; n], bdot: vec![0.0; n] }
    }

    pub fn n_modes(&self) -> usize {
        self.a1.len()
    }

    pub fn is_finite(&self) -> bool {
        self.a1.iter().chain(&self.a2).chain(&self.b).chain(&self.bdot).all(|v| v.is_finite())
    }

    /// Flatten into `[a1 | a2 | b | bdot]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(4 * self.n_modes());
        y.extend_from_slice(&self.a1);
        y.extend_from_slice(&self.a2);
        y.extend_from_slice(&self.b);
        y.extend_from_slice(&self.bdot);
        y
    }

    pub fn from_flat(t: f64, y: &[f64]) -> Self {
        let n = y.len() / 4;
        Self {
            t,
            a1: y[..n].to_vec(),
            a2: y[n..2 * n].to_vec(),
            b: y[2 * n..3 * n].to_vec(),
            bdot: y[3 * n..].to_vec(),
        }
    }
}

/// Time derivative of a spectral state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub da1: Vec<f64>,
    pub da2: Vec<f64>,
    pub db: Vec<f64>,
    pub dbdot: Vec<f64>,
}

/// Instantaneous quadratic energy terms of the state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyTerms {
    /// `p/2 * |h|^2`.
    pub term_h: f64,
    /// `1/2 * |u_t|^2`.
    pub term_ut: f64,
    /// `1/2 * |nu u_z|^2`.
    pub term_uz: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.term_h + self.term_ut + self.term_uz
    }
}

/// Instantaneous rates feeding the time-integrated energy ledger.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LedgerRates {
    /// `p * integral r (h1z^2 + h2z^2)`.
    pub dissipation: f64,
    /// `p * integral r (j . h_z)`.
    pub work_j: f64,
    /// `integral f u_t`.
    pub work_f: f64,
    /// `-(p/2) * integral (h^2)_z u_t`: the magnetoelastic exchange that the
    /// half-weighted storage terms do not absorb.
    pub transfer: f64,
    /// `p * integral r (j1^2 + j2^2)` (pure data, for the energy inequality).
    pub forcing_jsq: f64,
    /// `integral f^2` (pure data).
    pub forcing_fsq: f64,
}

/// Everything the solver needs, precomputed: basis, quadrature grid,
/// coefficient values at the nodes, and compiled forcing terms.
pub struct Assembled {
    pub spec: ProblemSpec,
    pub basis: GalerkinBasis,
    pub grid: QuadratureGrid,
    r_nodes: Vec<f64>,
    nu2_nodes: Vec<f64>,
    r_mean: f64,
    nu2_mean: f64,
    r_min: f64,
    j1: CompiledForcing,
    j2: CompiledForcing,
    f: CompiledForcing,
}

enum CompiledForcing {
    Zero,
    Separable(Vec<(crate::coefficients::TimeProfile, Vec<f64>)>),
    Analytic(AnalyticField),
}

impl CompiledForcing {
    fn compile(src: &FieldSource, nodes: &[f64]) -> Self {
        match src {
            FieldSource::Zero => CompiledForcing::Zero,
            FieldSource::Separable(field) if field.is_zero() => CompiledForcing::Zero,
            FieldSource::Separable(field) => CompiledForcing::Separable(
                field
                    .terms
                    .iter()
                    .map(|term| {
                        (term.time.clone(), nodes.iter().map(|&z| term.space.eval(z)).collect())
                    })
                    .collect(),
            ),
            FieldSource::Analytic(f) => CompiledForcing::Analytic(f.clone()),
        }
    }

    /// Fill `out` with nodal values at time `t`; returns false when the
    /// source is identically zero (out untouched).
    fn eval_into(&self, t: f64, nodes: &[f64], out: &mut [f64]) -> bool {
        match self {
            CompiledForcing::Zero => false,
            CompiledForcing::Separable(terms) => {
                out.fill(0.0);
                for (profile, space) in terms {
                    let amp = profile.eval(t);
                    for (o, s) in out.iter_mut().zip(space) {
                        *o += amp * s;
                    }
                }
                true
            }
            CompiledForcing::Analytic(AnalyticField(f)) => {
                for (o, &z) in out.iter_mut().zip(nodes) {
                    *o = f(t, z);
                }
                true
            }
        }
    }
}

/// Scratch buffers for right-hand-side assembly; one per integration.
pub struct Workspace {
    h1v: Vec<f64>,
    h1d: Vec<f64>,
    h2v: Vec<f64>,
    h2d: Vec<f64>,
    ud: Vec<f64>,
    utv: Vec<f64>,
    j1: Vec<f64>,
    j2: Vec<f64>,
    f: Vec<f64>,
    integrand: Vec<f64>,
}

impl Workspace {
    pub fn new(assembled: &Assembled) -> Self {
        let n = assembled.grid.nodes().len();
        Self {
            h1v: vec![0.0; n],
            h1d: vec![0.0; n],
            h2v: vec![0.0; n],
            h2d: vec![0.0; n],
            ud: vec![0.0; n],
            utv: vec![0.0; n],
            j1: vec![0.0; n],
            j2: vec![0.0; n],
            f: vec![0.0; n],
            integrand: vec![0.0; n],
        }
    }
}

/// Nodal reconstructions of all fields of one state.
#[derive(Debug, Clone)]
pub struct NodalFields {
    pub h1: Vec<f64>,
    pub h1z: Vec<f64>,
    pub h2: Vec<f64>,
    pub h2z: Vec<f64>,
    pub u: Vec<f64>,
    pub uz: Vec<f64>,
    pub ut: Vec<f64>,
    pub utz: Vec<f64>,
}

/// Assemble a validated problem at mode count `n_modes` with the given
/// quadrature resolution.
pub fn assemble(
    spec: ProblemSpec,
    n_modes: usize,
    panels_per_piece: usize,
    q: usize,
) -> Result<Assembled> {
    spec.validate()?;
    let basis = build_basis(n_modes)?;
    let grid = build_grid(&spec.breakpoints(), panels_per_piece, q, &basis)?;

    let r_nodes: Vec<f64> = grid.nodes().iter().map(|&z| spec.r.eval(z)).collect();
    let nu2_nodes: Vec<f64> = grid.nodes().iter().map(|&z| spec.nu.eval(z).powi(2)).collect();
    let r_mean = spec.r.mean();
    let nu2_mean = grid.integrate_nodal(&nu2_nodes);
    let (r_min, _) = spec.r.bounds();

    let j1 = CompiledForcing::compile(&spec.j1, grid.nodes());
    let j2 = CompiledForcing::compile(&spec.j2, grid.nodes());
    let f = CompiledForcing::compile(&spec.f, grid.nodes());

    Ok(Assembled { spec, basis, grid, r_nodes, nu2_nodes, r_mean, nu2_mean, r_min, j1, j2, f })
}

/// Assemble with the default quadrature resolution
/// (`max(8, 2 n_modes)` panels per piece, Gauss order 12).
pub fn assemble_default(spec: ProblemSpec, n_modes: usize) -> Result<Assembled> {
    let panels = basis::default_panels_per_piece(n_modes);
    assemble(spec, n_modes, panels, basis::DEFAULT_QUAD_ORDER)
}

impl Assembled {
    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    /// Mean of `r` over one period (exact).
    pub fn r_mean(&self) -> f64 {
        self.r_mean
    }

    /// Mean of `nu^2` over one period.
    pub fn nu2_mean(&self) -> f64 {
        self.nu2_mean
    }

    /// Infimum of `r` (`r_0` in the energy estimates).
    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_nodes(&self) -> &[f64] {
        &self.r_nodes
    }

    pub fn nu2_nodes(&self) -> &[f64] {
        &self.nu2_nodes
    }

    /// Nodal values of the current components `j = (j1, j2)` and of `f`.
    pub fn forcing_at(&self, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.grid.nodes().len();
        let mut j1 = vec![0.0; n];
        let mut j2 = vec![0.0; n];
        let mut f = vec![0.0; n];
        self.j1.eval_into(t, self.grid.nodes(), &mut j1);
        self.j2.eval_into(t, self.grid.nodes(), &mut j2);
        self.f.eval_into(t, self.grid.nodes(), &mut f);
        (j1, j2, f)
    }

    /// Spectral state at `t = 0`: Fourier coefficients of the initial data.
    pub fn init_state(&self) -> SpectralState {
        let nodes = self.grid.nodes();
        let proj = |field: &InitialField| -> Vec<f64> {
            match field {
                InitialField::Zero => vec![0.0; self.basis.len()],
                _ => {
                    let nodal: Vec<f64> = nodes.iter().map(|&z| field.eval(z)).collect();
                    basis::project(&nodal, &self.basis, &self.grid).expect("node count matches")
                }
            }
        };
        SpectralState {
            t: 0.0,
            a1: proj(&self.spec.h01),
            a2: proj(&self.spec.h02),
            b: proj(&self.spec.u0),
            bdot: proj(&self.spec.u1),
        }
    }

    /// Right-hand side of the Galerkin system at the given state.
    pub fn rhs(&self, state: &SpectralState) -> Result<StateDerivative> {
        let n = self.n_modes();
        if state.n_modes() != n {
            return Err(Error::LengthMismatch { expected: n, got: state.n_modes() });
        }
        let y = state.to_flat();
        let mut dy = vec![0.0; 4 * n];
        let mut ws = Workspace::new(self);
        self.rhs_flat(state.t, &y, &mut dy, &mut ws)?;
        Ok(StateDerivative {
            da1: dy[..n].to_vec(),
            da2: dy[n..2 * n].to_vec(),
            db: dy[2 * n..3 * n].to_vec(),
            dbdot: dy[3 * n..].to_vec(),
        })
    }

    /// Flat-vector right-hand side used by the integrator. Layout
    /// `[a1 | a2 | b | bdot]`.
    pub(crate) fn rhs_flat(
        &self,
        t: f64,
        y: &[f64],
        dy: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<()> {
        let n = self.n_modes();
        let (a1, rest) = y.split_at(n);
        let (a2, rest) = rest.split_at(n);
        let (b, bdot) = rest.split_at(n);

        synth_into(a1, &mut ws.h1v, self.grid.psi_rows());
        synth_into(a1, &mut ws.h1d, self.grid.dpsi_rows());
        synth_into(a2, &mut ws.h2v, self.grid.psi_rows());
        synth_into(a2, &mut ws.h2d, self.grid.dpsi_rows());
        synth_into(b, &mut ws.ud, self.grid.dpsi_rows());
        synth_into(bdot, &mut ws.utv, self.grid.psi_rows());

        let nodes = self.grid.nodes();
        let has_j1 = self.j1.eval_into(t, nodes, &mut ws.j1);
        let has_j2 = self.j2.eval_into(t, nodes, &mut ws.j2);
        let has_f = self.f.eval_into(t, nodes, &mut ws.f);
        let p = self.spec.p;

        // h1 equation
        for i in 0..nodes.len() {
            let j = if has_j1 { ws.j1[i] } else { 0.0 };
            ws.integrand[i] =
                -self.r_nodes[i] * ws.h1d[i] + ws.h1v[i] * ws.utv[i] + self.r_nodes[i] * j;
        }
        let da1 = project_table(&ws.integrand, n, &self.grid, self.grid.dpsi_rows());
        dy[..n].copy_from_slice(&da1);

        // h2 equation
        for i in 0..nodes.len() {
            let j = if has_j2 { ws.j2[i] } else { 0.0 };
            ws.integrand[i] =
                -self.r_nodes[i] * ws.h2d[i] + ws.h2v[i] * ws.utv[i] + self.r_nodes[i] * j;
        }
        let da2 = project_table(&ws.integrand, n, &self.grid, self.grid.dpsi_rows());
        dy[n..2 * n].copy_from_slice(&da2);

        // u equation
        dy[2 * n..3 * n].copy_from_slice(bdot);
        for i in 0..nodes.len() {
            ws.integrand[i] =
                -self.nu2_nodes[i] * ws.ud[i] + p * (ws.h1v[i] * ws.h1v[i] + ws.h2v[i] * ws.h2v[i]);
        }
        let mut dbdot = project_table(&ws.integrand, n, &self.grid, self.grid.dpsi_rows());
        if has_f {
            let fb = project_table(&ws.f, n, &self.grid, self.grid.psi_rows());
            for (d, fk) in dbdot.iter_mut().zip(&fb) {
                *d += fk;
            }
        }
        dy[3 * n..].copy_from_slice(&dbdot);

        if dy.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        Ok(())
    }

    /// Instantaneous energy terms, evaluated by quadrature.
    pub fn energy(&self, state: &SpectralState) -> EnergyTerms {
        let n_nodes = self.grid.nodes().len();
        let mut buf = vec![0.0; n_nodes];
        let w = self.grid.weights();

        synth_into(&state.a1, &mut buf, self.grid.psi_rows());
        let mut hh = 0.0;
        for i in 0..n_nodes {
            hh += w[i] * buf[i] * buf[i];
        }
        synth_into(&state.a2, &mut buf, self.grid.psi_rows());
        for i in 0..n_nodes {
            hh += w[i] * buf[i] * buf[i];
        }
        synth_into(&state.bdot, &mut buf, self.grid.psi_rows());
        let mut utut = 0.0;
        for i in 0..n_nodes {
            utut += w[i] * buf[i] * buf[i];
        }
        synth_into(&state.b, &mut buf, self.grid.dpsi_rows());
        let mut nuzz = 0.0;
        for i in 0..n_nodes {
            nuzz += w[i] * self.nu2_nodes[i] * buf[i] * buf[i];
        }
        EnergyTerms { term_h: 0.5 * self.spec.p * hh, term_ut: 0.5 * utut, term_uz: 0.5 * nuzz }
    }

    /// Instantaneous ledger rates at a flat state.
    pub(crate) fn ledger_rates(&self, t: f64, y: &[f64], ws: &mut Workspace) -> LedgerRates {
        let n = self.n_modes();
        let (a1, rest) = y.split_at(n);
        let (a2, rest) = rest.split_at(n);
        let (_b, bdot) = rest.split_at(n);

        synth_into(a1, &mut ws.h1v, self.grid.psi_rows());
        synth_into(a1, &mut ws.h1d, self.grid.dpsi_rows());
        synth_into(a2, &mut ws.h2v, self.grid.psi_rows());
        synth_into(a2, &mut ws.h2d, self.grid.dpsi_rows());
        synth_into(bdot, &mut ws.utv, self.grid.psi_rows());

        let nodes = self.grid.nodes();
        let has_j1 = self.j1.eval_into(t, nodes, &mut ws.j1);
        let has_j2 = self.j2.eval_into(t, nodes, &mut ws.j2);
        let has_f = self.f.eval_into(t, nodes, &mut ws.f);
        let p = self.spec.p;
        let w = self.grid.weights();

        let mut rates = LedgerRates::default();
        for i in 0..nodes.len() {
            let r = self.r_nodes[i];
            let j1 = if has_j1 { ws.j1[i] } else { 0.0 };
            let j2 = if has_j2 { ws.j2[i] } else { 0.0 };
            let f = if has_f { ws.f[i] } else { 0.0 };
            rates.dissipation += w[i] * r * (ws.h1d[i] * ws.h1d[i] + ws.h2d[i] * ws.h2d[i]);
            rates.work_j += w[i] * r * (j1 * ws.h1d[i] + j2 * ws.h2d[i]);
            rates.work_f += w[i] * f * ws.utv[i];
            rates.transfer += w[i] * (ws.h1v[i] * ws.h1d[i] + ws.h2v[i] * ws.h2d[i]) * ws.utv[i];
            rates.forcing_jsq += w[i] * r * (j1 * j1 + j2 * j2);
            rates.forcing_fsq += w[i] * f * f;
        }
        rates.dissipation *= p;
        rates.work_j *= p;
        rates.transfer *= -p;
        rates.forcing_jsq *= p;
        rates
    }

    /// All nodal field reconstructions of a state.
    pub fn nodal_fields(&self, state: &SpectralState) -> NodalFields {
        let (h1, h1z) = basis::synthesize(&state.a1, &self.basis, &self.grid).unwrap();
        let (h2, h2z) = basis::synthesize(&state.a2, &self.basis, &self.grid).unwrap();
        let (u, uz) = basis::synthesize(&state.b, &self.basis, &self.grid).unwrap();
        let (ut, utz) = basis::synthesize(&state.bdot, &self.basis, &self.grid).unwrap();
        NodalFields { h1, h1z, h2, h2z, u, uz, ut, utz }
    }
}
