//! Structured-text documents for runs and studies, and their conversion to
//! the core types. The documents are serde mirrors of the on-disk JSON;
//! every number round-trips exactly.

use serde::{Deserialize, Serialize};

use emel_core::coefficients::{ForcingField, PiecewiseCoefficient, TrigPhase, TrigPoly};
use emel_core::galerkin::{FieldSource, InitialField, ProblemSpec};
use emel_core::timestepper::{IntegratorConfig, Scheme};

use crate::CliError;

/// Top-level run configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigDoc {
    pub problem: ProblemDoc,
    pub discretization: DiscretizationDoc,
    #[serde(default)]
    pub integrator: IntegratorDoc,
    #[serde(default)]
    pub outputs: OutputsDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub p: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_zero_p: bool,
    pub r: CoefficientDoc,
    pub nu: CoefficientDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j1: Option<ForcingDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j2: Option<ForcingDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<ForcingDoc>,
    #[serde(default, rename = "h0_1", skip_serializing_if = "Option::is_none")]
    pub h0_1: Option<InitialDoc>,
    #[serde(default, rename = "h0_2", skip_serializing_if = "Option::is_none")]
    pub h0_2: Option<InitialDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<InitialDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1: Option<InitialDoc>,
    #[serde(rename = "T")]
    pub horizon: f64,
}

/// `{"breakpoints": [...], "pieces": [[c0, c1, ...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientDoc {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<Vec<f64>>,
}

impl CoefficientDoc {
    pub fn build(&self) -> Result<PiecewiseCoefficient, CliError> {
        PiecewiseCoefficient::new(self.breakpoints.clone(), self.pieces.clone())
            .map_err(CliError::validation)
    }
}

/// `{"terms": [{"time": {"kind": ..., "params": [...]}, "space": {...}}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForcingDoc {
    pub terms: Vec<ForcingTermDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForcingTermDoc {
    pub time: emel_core::coefficients::TimeProfile,
    pub space: CoefficientDoc,
}

impl ForcingDoc {
    fn build(&self) -> Result<FieldSource, CliError> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            term.time.validate().map_err(CliError::validation)?;
            terms.push(emel_core::coefficients::ForcingTerm {
                time: term.time.clone(),
                space: term.space.build()?,
            });
        }
        Ok(FieldSource::Separable(ForcingField { terms }))
    }
}

/// Initial-data field: `{"piecewise": {...}}` or
/// `{"trig": [[amp, mode, "cos"|"sin"], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialDoc {
    Piecewise(CoefficientDoc),
    Trig(Vec<(f64, u32, TrigPhase)>),
}

impl InitialDoc {
    fn build(&self) -> Result<InitialField, CliError> {
        match self {
            InitialDoc::Piecewise(doc) => Ok(InitialField::Piecewise(doc.build()?)),
            InitialDoc::Trig(terms) => {
                Ok(InitialField::Trig(TrigPoly { terms: terms.clone() }))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationDoc {
    pub n_modes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panels_per_piece: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_order: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorDoc {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_dt_init")]
    pub dt_init: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_rel_tol() -> f64 {
    1e-8
}
fn default_abs_tol() -> f64 {
    1e-10
}
fn default_dt_init() -> f64 {
    1e-4
}
fn default_dt_max() -> f64 {
    1e-2
}
fn default_scheme() -> String {
    "exp-rk3".to_string()
}
fn default_max_steps() -> usize {
    1_000_000
}

impl Default for IntegratorDoc {
    fn default() -> Self {
        Self {
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            dt_init: default_dt_init(),
            dt_max: default_dt_max(),
            scheme: default_scheme(),
            max_steps: default_max_steps(),
        }
    }
}

impl IntegratorDoc {
    pub fn build(&self) -> Result<IntegratorConfig, CliError> {
        let scheme: Scheme = self.scheme.parse().map_err(CliError::validation)?;
        let config = IntegratorConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            dt_init: self.dt_init,
            dt_max: self.dt_max,
            scheme,
            max_steps: self.max_steps,
        };
        config.validate().map_err(CliError::validation)?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsDoc {
    /// Extra sample instants written to the CSVs.
    #[serde(default)]
    pub sample_times: Vec<f64>,
    /// One-sided offset of the jump diagnostics; omitted disables them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_delta: Option<f64>,
}

impl ProblemDoc {
    pub fn build(&self) -> Result<ProblemSpec, CliError> {
        let build_forcing = |doc: &Option<ForcingDoc>| -> Result<FieldSource, CliError> {
            match doc {
                None => Ok(FieldSource::Zero),
                Some(d) => d.build(),
            }
        };
        let build_initial = |doc: &Option<InitialDoc>| -> Result<InitialField, CliError> {
            match doc {
                None => Ok(InitialField::Zero),
                Some(d) => d.build(),
            }
        };
        let spec = ProblemSpec {
            p: self.p,
            allow_zero_p: self.allow_zero_p,
            r: self.r.build()?,
            nu: self.nu.build()?,
            j1: build_forcing(&self.j1)?,
            j2: build_forcing(&self.j2)?,
            f: build_forcing(&self.f)?,
            h01: build_initial(&self.h0_1)?,
            h02: build_initial(&self.h0_2)?,
            u0: build_initial(&self.u0)?,
            u1: build_initial(&self.u1)?,
            horizon: self.horizon,
        };
        spec.validate().map_err(CliError::validation)?;
        Ok(spec)
    }
}

impl RunConfigDoc {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Canonical serialized form used for hashing and echoing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Content hash of the canonical form (first 16 hex digits).
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }
}
