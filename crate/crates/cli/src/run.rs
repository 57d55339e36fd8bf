//! `emel run`: solve one instance and write the artifacts into a
//! content-addressed run directory.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use emel_core::basis;
use emel_core::diagnostics::{self, DiagnosticsReport};
use emel_core::galerkin::{assemble, SpectralState};
use emel_core::timestepper::{integrate, Trajectory};

use crate::config::RunConfigDoc;
use crate::CliError;

/// Full 17-significant-digit decimal: round-trips f64 exactly.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct RunReport {
    config_hash: String,
    config: serde_json::Value,
    status: String,
    summary: Option<RunSummary>,
    error: Option<String>,
}

#[derive(Serialize)]
struct RunSummary {
    samples: usize,
    steps_accepted: usize,
    steps_rejected: usize,
    rhs_evals: usize,
    norms: diagnostics::NormsBlock,
    eq24_max_abs: f64,
    eq37_min_slack: f64,
}

pub fn cmd_run(config_path: &Path, out_parent: &Path) -> Result<bool, CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", config_path.display())))?;
    let doc = RunConfigDoc::parse(&text)?;

    // validate and assemble everything before any artifact is written
    let spec = doc.problem.build()?;
    let n = doc.discretization.n_modes;
    if n == 0 {
        return Err(CliError::Validation("n_modes must be at least 1".into()));
    }
    let panels =
        doc.discretization.panels_per_piece.unwrap_or_else(|| basis::default_panels_per_piece(n));
    let q = doc.discretization.quad_order.unwrap_or(basis::DEFAULT_QUAD_ORDER);
    let integrator = doc.integrator.build()?;
    for &t in &doc.outputs.sample_times {
        if !(0.0..=spec.horizon).contains(&t) {
            return Err(CliError::Validation(format!(
                "sample time {t} outside the horizon [0, {}]",
                spec.horizon
            )));
        }
    }
    let assembled = Arc::new(assemble(spec, n, panels, q).map_err(CliError::validation)?);

    let hash = doc.hash();
    let run_dir = out_parent.join(&hash);
    fs::create_dir_all(&run_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", run_dir.display())))?;

    let config_echo: serde_json::Value =
        serde_json::from_str(&doc.canonical_json()).expect("round-trip");

    let traj = match integrate(assembled, &integrator, &doc.outputs.sample_times) {
        Ok(traj) => traj,
        Err(e) => {
            // no trajectory artifacts on solver failure, only the report
            let report = RunReport {
                config_hash: hash.clone(),
                config: config_echo,
                status: "solver-error".into(),
                summary: None,
                error: Some(e.to_string()),
            };
            write_json(&run_dir.join("report.json"), &report)?;
            return Err(CliError::Runtime(e.to_string()));
        }
    };

    write_trajectory_csv(&run_dir.join("trajectory.csv"), &traj)?;
    write_energy_csv(&run_dir.join("energy.csv"), &traj)?;

    let diag = diagnostics::build_report(&traj, doc.outputs.jump_delta)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(&run_dir.join("diagnostics.json"), &diag)?;

    let report = RunReport {
        config_hash: hash.clone(),
        config: config_echo,
        status: "ok".into(),
        summary: Some(summarize(&traj, &diag)),
        error: None,
    };
    write_json(&run_dir.join("report.json"), &report)?;

    println!("{}", run_dir.display());
    Ok(true)
}

fn summarize(traj: &Trajectory, diag: &DiagnosticsReport) -> RunSummary {
    RunSummary {
        samples: traj.samples.len(),
        steps_accepted: traj.stats.accepted,
        steps_rejected: traj.stats.rejected,
        rhs_evals: traj.stats.rhs_evals,
        norms: diag.norms,
        eq24_max_abs: diag.eq24_residual.iter().fold(0.0f64, |m, r| m.max(r.abs())),
        eq37_min_slack: diag.eq37_slack.iter().fold(f64::INFINITY, |m, s| m.min(*s)),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n")
        .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let n = traj.assembled().n_modes();
    let mut out = String::new();
    out.push('t');
    for prefix in ["a1", "a2", "b", "bdot"] {
        for k in 0..n {
            out.push_str(&format!(",{prefix}_{k}"));
        }
    }
    out.push('\n');
    for st in &traj.samples {
        out.push_str(&fmt(st.t));
        for block in [&st.a1, &st.a2, &st.b, &st.bdot] {
            for &v in block.iter() {
                out.push(',');
                out.push_str(&fmt(v));
            }
        }
        out.push('\n');
    }
    write_atomic(path, &out)
}

pub fn write_energy_csv(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut out = String::from(
        "t,term_h,term_ut,term_uz,dissipation_cum,work_j_cum,work_f_cum,transfer_cum,forcing_jsq_cum,forcing_fsq_cum\n",
    );
    for rec in &traj.ledger {
        let row = [
            rec.t,
            rec.term_h,
            rec.term_ut,
            rec.term_uz,
            rec.dissipation_cum,
            rec.work_j_cum,
            rec.work_f_cum,
            rec.transfer_cum,
            rec.forcing_jsq_cum,
            rec.forcing_fsq_cum,
        ];
        let cells: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_atomic(path, &out)
}

fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    let mut file = fs::File::create(path)
        .map_err(|e| CliError::Runtime(format!("create {}: {e}", path.display())))?;
    file.write_all(content.as_bytes())
        .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))
}

/// Parse a trajectory CSV back into sample states (used by reconstruct).
pub fn parse_trajectory_csv(text: &str) -> Result<(usize, Vec<SpectralState>), CliError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| CliError::Validation("empty CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"t") || (cols.len() - 1) % 4 != 0 {
        return Err(CliError::Validation("malformed trajectory CSV header".into()));
    }
    let n = (cols.len() - 1) / 4;
    let mut states = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut values = Vec::with_capacity(cols.len());
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                CliError::Validation(format!("malformed number '{cell}' on row {}", lineno + 2))
            })?;
            values.push(v);
        }
        if values.len() != 1 + 4 * n {
            return Err(CliError::Validation(format!(
                "row {} has {} columns, expected {}",
                lineno + 2,
                values.len(),
                1 + 4 * n
            )));
        }
        states.push(SpectralState {
            t: values[0],
            a1: values[1..=n].to_vec(),
            a2: values[n + 1..=2 * n].to_vec(),
            b: values[2 * n + 1..=3 * n].to_vec(),
            bdot: values[3 * n + 1..=4 * n].to_vec(),
        });
    }
    if states.is_empty() {
        return Err(CliError::Validation("trajectory CSV has no data rows".into()));
    }
    Ok((n, states))
}
