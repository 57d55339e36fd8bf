//! `emel study`: verification campaigns driven by a JSON manifest.
//! Per-rung rows are flushed to `rungs.csv` as they are produced, and a
//! summary with one pass/fail entry per assertion decides the exit code.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use emel_core::experiments::{
    compare_with_fd, convergence_study, fd_oracle, stability_experiment, uniqueness_crosscheck,
    PerturbTarget,
};
use emel_core::galerkin::ProblemSpec;
use emel_core::timestepper::IntegratorConfig;

use crate::config::{IntegratorDoc, ProblemDoc};
use crate::run::fmt;
use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ManifestDoc {
    Convergence {
        problem: ProblemRef,
        n_list: Vec<usize>,
        #[serde(default)]
        integrator: IntegratorDoc,
    },
    Stability {
        problem: ProblemRef,
        targets: Vec<String>,
        amplitude: f64,
        rungs: usize,
        ratio: f64,
        n_modes: usize,
        #[serde(default)]
        integrator: IntegratorDoc,
        /// Per-rung decay bound on the LHS (halving the perturbation must
        /// shrink the LHS at least this much).
        #[serde(default = "default_decay_factor")]
        decay_factor: f64,
        /// Bound on LHS / RHS across rungs.
        #[serde(default = "default_ratio_bound")]
        ratio_bound: f64,
    },
    Uniqueness {
        problem: ProblemRef,
        n_modes: usize,
        #[serde(default)]
        integrator: IntegratorDoc,
        integrator_b: IntegratorDoc,
        #[serde(default = "default_budget_factor")]
        budget_factor: f64,
    },
    Oracle {
        problem: ProblemRef,
        n_modes: usize,
        cells: usize,
        dt: f64,
        #[serde(default)]
        integrator: IntegratorDoc,
        #[serde(default = "default_l2_bound")]
        l2_bound: f64,
    },
}

fn default_decay_factor() -> f64 {
    0.55
}
fn default_ratio_bound() -> f64 {
    10.0
}
fn default_budget_factor() -> f64 {
    10.0
}
fn default_l2_bound() -> f64 {
    1e-3
}

/// Inline problem document or a reference into the seeded random suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ProblemRef {
    Random { random_instance: usize },
    Inline(Box<ProblemDoc>),
}

impl ProblemRef {
    fn build(&self, seed: u64) -> Result<ProblemSpec, CliError> {
        match self {
            ProblemRef::Inline(doc) => doc.build(),
            ProblemRef::Random { random_instance } => {
                Ok(emel_core::experiments::random_instance(seed, *random_instance))
            }
        }
    }
}

#[derive(Serialize)]
struct Assertion {
    name: String,
    value: f64,
    bound: f64,
    pass: bool,
}

#[derive(Serialize)]
struct Summary {
    kind: String,
    pass: bool,
    assertions: Vec<Assertion>,
}

struct RungWriter {
    file: fs::File,
}

impl RungWriter {
    fn new(path: &Path, header: &str) -> Result<Self, CliError> {
        let mut file = fs::File::create(path)
            .map_err(|e| CliError::Runtime(format!("create {}: {e}", path.display())))?;
        writeln!(file, "{header}")
            .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))?;
        Ok(Self { file })
    }

    /// Write one row and flush immediately so partial results survive a
    /// later failure.
    fn row(&mut self, cells: &[String]) -> Result<(), CliError> {
        writeln!(self.file, "{}", cells.join(","))
            .and_then(|_| self.file.flush())
            .map_err(|e| CliError::Runtime(format!("write study row: {e}")))
    }
}

pub fn cmd_study(
    manifest_path: &Path,
    out_parent: &Path,
    seed: u64,
    threads: usize,
) -> Result<bool, CliError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| {
        CliError::Validation(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let manifest: ManifestDoc =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("manifest: {e}")))?;

    let hash = {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(text.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    };
    let dir = out_parent.join(&hash);
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let rungs_path = dir.join("rungs.csv");

    let summary = match manifest {
        ManifestDoc::Convergence { problem, n_list, integrator } => {
            let spec = problem.build(seed)?;
            let config = integrator.build()?;
            run_convergence(&spec, &n_list, &config, &rungs_path)?
        }
        ManifestDoc::Stability {
            problem,
            targets,
            amplitude,
            rungs,
            ratio,
            n_modes,
            integrator,
            decay_factor,
            ratio_bound,
        } => {
            let spec = problem.build(seed)?;
            let config = integrator.build()?;
            let targets: Vec<PerturbTarget> = targets
                .iter()
                .map(|t| t.parse().map_err(CliError::validation))
                .collect::<Result<_, _>>()?;
            run_stability(
                &spec,
                &targets,
                amplitude,
                rungs,
                ratio,
                n_modes,
                &config,
                decay_factor,
                ratio_bound,
                threads,
                &rungs_path,
            )?
        }
        ManifestDoc::Uniqueness { problem, n_modes, integrator, integrator_b, budget_factor } => {
            let spec = problem.build(seed)?;
            let a = integrator.build()?;
            let b = integrator_b.build()?;
            run_uniqueness(&spec, n_modes, &a, &b, budget_factor, &rungs_path)?
        }
        ManifestDoc::Oracle { problem, n_modes, cells, dt, integrator, l2_bound } => {
            let spec = problem.build(seed)?;
            let config = integrator.build()?;
            run_oracle(&spec, n_modes, cells, dt, &config, l2_bound, &rungs_path)?
        }
    };

    let pass = summary.pass;
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Runtime(format!("serialize summary: {e}")))?;
    fs::write(dir.join("summary.json"), text + "\n")
        .map_err(|e| CliError::Runtime(format!("write summary: {e}")))?;
    println!("{}", dir.display());
    for a in &summary.assertions {
        println!(
            "  {}: {} (value {:.3e}, bound {:.3e})",
            a.name,
            if a.pass { "pass" } else { "FAIL" },
            a.value,
            a.bound
        );
    }
    Ok(pass)
}

fn run_convergence(
    spec: &ProblemSpec,
    n_list: &[usize],
    config: &IntegratorConfig,
    rungs_path: &Path,
) -> Result<Summary, CliError> {
    let mut writer = RungWriter::new(rungs_path, "n_coarse,n_fine,diff_v2_h,diff_w11_u")?;
    let study = convergence_study(spec, n_list, config).map_err(crate::solver_error)?;
    for pair in &study.pairs {
        writer.row(&[
            pair.n_coarse.to_string(),
            pair.n_fine.to_string(),
            fmt(pair.diff_v2_h),
            fmt(pair.diff_w11_u),
        ])?;
    }
    let mut assertions = Vec::new();
    let mut pass = true;
    for w in study.pairs.windows(2) {
        let ok = w[1].combined() < w[0].combined();
        pass &= ok;
        assertions.push(Assertion {
            name: format!("cauchy decrease {}->{}", w[0].n_fine, w[1].n_fine),
            value: w[1].combined(),
            bound: w[0].combined(),
            pass: ok,
        });
    }
    Ok(Summary { kind: "convergence".into(), pass, assertions })
}

#[allow(clippy::too_many_arguments)]
fn run_stability(
    spec: &ProblemSpec,
    targets: &[PerturbTarget],
    amplitude: f64,
    rungs: usize,
    ratio: f64,
    n_modes: usize,
    config: &IntegratorConfig,
    decay_factor: f64,
    ratio_bound: f64,
    threads: usize,
    rungs_path: &Path,
) -> Result<Summary, CliError> {
    let mut writer = RungWriter::new(rungs_path, "target,rung,eps,lhs,rhs")?;

    // independent ladders fan out across worker threads; results are
    // merged back in manifest order
    let mut results: Vec<Option<Result<Vec<emel_core::experiments::StabilityRung>, String>>> =
        (0..targets.len()).map(|_| None).collect();
    let workers = threads.max(1).min(targets.len().max(1));
    std::thread::scope(|scope| {
        let chunks: Vec<Vec<usize>> =
            (0..workers).map(|w| (w..targets.len()).step_by(workers).collect()).collect();
        let mut handles = Vec::new();
        for chunk in chunks {
            let spec = spec.clone();
            let config = *config;
            let targets = targets.to_vec();
            handles.push(scope.spawn(move || {
                chunk
                    .into_iter()
                    .map(|i| {
                        let res = stability_experiment(
                            &spec, targets[i], amplitude, rungs, ratio, n_modes, &config,
                        )
                        .map_err(|e| e.to_string());
                        (i, res)
                    })
                    .collect::<Vec<_>>()
            }));
        }
        for handle in handles {
            for (i, res) in handle.join().expect("ladder worker panicked") {
                results[i] = Some(res);
            }
        }
    });

    let mut assertions = Vec::new();
    let mut pass = true;
    for (target, slot) in targets.iter().zip(results) {
        let ladder = slot.expect("ladder ran").map_err(CliError::Runtime)?;
        for rung in &ladder {
            writer.row(&[
                target.to_string(),
                rung.rung.to_string(),
                fmt(rung.eps),
                fmt(rung.lhs),
                fmt(rung.rhs),
            ])?;
        }
        for pair in ladder.windows(2) {
            let decay = pair[1].lhs / pair[0].lhs.max(f64::MIN_POSITIVE);
            let ok = decay <= decay_factor;
            pass &= ok;
            assertions.push(Assertion {
                name: format!("{target} decay rung {}", pair[1].rung),
                value: decay,
                bound: decay_factor,
                pass: ok,
            });
        }
        let worst_ratio = ladder
            .iter()
            .map(|r| r.lhs / r.rhs.max(f64::MIN_POSITIVE))
            .fold(0.0f64, f64::max);
        let ok = worst_ratio <= ratio_bound;
        pass &= ok;
        assertions.push(Assertion {
            name: format!("{target} lhs/rhs bounded"),
            value: worst_ratio,
            bound: ratio_bound,
            pass: ok,
        });
    }
    Ok(Summary { kind: "stability".into(), pass, assertions })
}

fn run_uniqueness(
    spec: &ProblemSpec,
    n_modes: usize,
    a: &IntegratorConfig,
    b: &IntegratorConfig,
    budget_factor: f64,
    rungs_path: &Path,
) -> Result<Summary, CliError> {
    let mut writer = RungWriter::new(rungs_path, "diff_v2_h,diff_w11_u,scale,tol_budget")?;
    let report = uniqueness_crosscheck(spec, a, b, n_modes).map_err(crate::solver_error)?;
    writer.row(&[
        fmt(report.diff_v2_h),
        fmt(report.diff_w11_u),
        fmt(report.scale),
        fmt(report.tol_budget),
    ])?;
    let value = report.diff_v2_h + report.diff_w11_u;
    let bound = budget_factor * report.tol_budget * report.scale;
    let pass = value <= bound;
    Ok(Summary {
        kind: "uniqueness".into(),
        pass,
        assertions: vec![Assertion { name: "solution agreement".into(), value, bound, pass }],
    })
}

fn run_oracle(
    spec: &ProblemSpec,
    n_modes: usize,
    cells: usize,
    dt: f64,
    config: &IntegratorConfig,
    l2_bound: f64,
    rungs_path: &Path,
) -> Result<Summary, CliError> {
    let mut writer = RungWriter::new(rungs_path, "l2_h1,l2_h2,l2_u")?;
    let assembled = std::sync::Arc::new(
        emel_core::galerkin::assemble_default(spec.clone(), n_modes)
            .map_err(CliError::validation)?,
    );
    let traj = emel_core::timestepper::integrate(assembled, config, &[])
        .map_err(crate::solver_error)?;
    let fd = fd_oracle(spec, cells, dt).map_err(crate::solver_error)?;
    let cmp = compare_with_fd(&traj, &fd);
    writer.row(&[fmt(cmp.l2_h1), fmt(cmp.l2_h2), fmt(cmp.l2_u)])?;
    let pass = cmp.max_l2 <= l2_bound;
    Ok(Summary {
        kind: "oracle".into(),
        pass,
        assertions: vec![Assertion {
            name: "spectral vs finite-difference".into(),
            value: cmp.max_l2,
            bound: l2_bound,
            pass,
        }],
    })
}
