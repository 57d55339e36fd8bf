//! `emel reconstruct`: synthesize plot-ready nodal fields from a
//! trajectory CSV on a uniform grid.

use std::fs;
use std::path::Path;

use emel_core::basis::{build_basis, synthesize_at};
use emel_core::galerkin::SpectralState;

use crate::run::{fmt, parse_trajectory_csv};
use crate::CliError;

pub fn cmd_reconstruct(
    trajectory: &Path,
    times: &[f64],
    resolution: usize,
    out: Option<&Path>,
) -> Result<bool, CliError> {
    if times.is_empty() {
        return Err(CliError::Validation("at least one time is required".into()));
    }
    if resolution == 0 {
        return Err(CliError::Validation("resolution must be at least 1".into()));
    }
    let text = fs::read_to_string(trajectory)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", trajectory.display())))?;
    let (n, states) = parse_trajectory_csv(&text)?;
    let basis = build_basis(n).map_err(CliError::validation)?;
    let horizon = states.last().unwrap().t;

    let mut csv = String::from("t,z,h1,h2,u,u_t,u_z\n");
    for &t in times {
        if !(0.0..=horizon * (1.0 + 1e-12)).contains(&t) {
            return Err(CliError::Validation(format!(
                "time {t} outside the trajectory span [0, {horizon}]"
            )));
        }
        let state = state_at(&states, t);
        for i in 0..resolution {
            let z = i as f64 / resolution as f64;
            let (h1, _) = synthesize_at(&state.a1, &basis, z);
            let (h2, _) = synthesize_at(&state.a2, &basis, z);
            let (u, uz) = synthesize_at(&state.b, &basis, z);
            let (ut, _) = synthesize_at(&state.bdot, &basis, z);
            let cells = [t, z, h1, h2, u, ut, uz].map(fmt);
            csv.push_str(&cells.join(","));
            csv.push('\n');
        }
    }

    match out {
        Some(path) => fs::write(path, csv)
            .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(true)
}

/// Sample at the requested time: the matching row if one exists, linear
/// interpolation between the bracketing rows otherwise.
fn state_at(states: &[SpectralState], t: f64) -> SpectralState {
    let eps = 1e-9 * states.last().unwrap().t.max(1.0);
    if let Some(hit) = states.iter().find(|s| (s.t - t).abs() <= eps) {
        return hit.clone();
    }
    let hi = states.partition_point(|s| s.t < t).min(states.len() - 1);
    let lo = hi.saturating_sub(1);
    let (s0, s1) = (&states[lo], &states[hi]);
    let theta = if s1.t > s0.t { (t - s0.t) / (s1.t - s0.t) } else { 0.0 };
    let lerp = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + theta * (y - x)).collect()
    };
    SpectralState {
        t,
        a1: lerp(&s0.a1, &s1.a1),
        a2: lerp(&s0.a2, &s1.a2),
        b: lerp(&s0.b, &s1.b),
        bdot: lerp(&s0.bdot, &s1.bdot),
    }
}
