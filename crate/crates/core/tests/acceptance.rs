//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line with the measured quantity and its bound. Run with
//! `cargo test --test acceptance -- --nocapture` to see every line.

use std::sync::Arc;
use std::time::Instant;

use emel_core::coefficients::{PiecewiseCoefficient, TrigPhase, TrigPoly};
use emel_core::diagnostics::{
    energy_balance_residual, energy_inequality_slack, jump_report, norm_v2_h, norm_w11_u,
};
use emel_core::experiments::{
    acceptance_suite, compare_with_fd, convergence_study, fd_oracle, manufactured_run,
    random_instance, stability_experiment, uniqueness_crosscheck, PerturbTarget,
};
use emel_core::galerkin::{assemble_default, InitialField, ProblemSpec};
use emel_core::timestepper::{integrate, IntegratorConfig};

fn report(criterion: u32, name: &str, pass: bool, detail: String, started: Instant, budget_s: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {criterion} [{name}]: {verdict} ({detail}; {elapsed:.1}s of {budget_s:.0}s budget)");
    assert!(pass, "criterion {criterion} [{name}] failed: {detail}");
    assert!(
        elapsed < budget_s,
        "criterion {criterion} [{name}] exceeded its runtime budget: {elapsed:.1}s"
    );
}

/// Criterion 1: zero data and forcing on a twice-broken medium stays
/// identically zero.
#[test]
fn criterion_1_zero_data_null_test() {
    let started = Instant::now();
    let mut spec = ProblemSpec::quiescent(1.0);
    spec.r =
        PiecewiseCoefficient::new(vec![0.3, 0.7], vec![vec![0.6], vec![1.8], vec![1.1]]).unwrap();
    spec.nu =
        PiecewiseCoefficient::new(vec![0.3, 0.7], vec![vec![1.4], vec![0.7], vec![1.0]]).unwrap();
    let asm = Arc::new(assemble_default(spec, 16).unwrap());
    let traj = integrate(asm, &IntegratorConfig::default(), &[]).unwrap();
    let norm = norm_v2_h(&traj) + norm_w11_u(&traj);
    report(
        1,
        "zero-data null test",
        norm <= 1e-12,
        format!("trajectory norm {norm:.3e} <= 1e-12"),
        started,
        5.0,
    );
}

/// Criterion 2: a constant magnetic field with quiescent medium is a
/// steady state to relative 1e-10 over T = 1.
#[test]
fn criterion_2_constant_steady_state() {
    let started = Instant::now();
    let c = 1.5;
    let mut spec = ProblemSpec::quiescent(1.0);
    spec.h01 = InitialField::Piecewise(PiecewiseCoefficient::constant(c));
    let asm = Arc::new(assemble_default(spec, 16).unwrap());
    let traj = integrate(asm, &IntegratorConfig::default(), &[]).unwrap();
    let first = &traj.samples[0];
    let last = traj.samples.last().unwrap();
    let mut max_rel = 0.0f64;
    for k in 0..16 {
        max_rel = max_rel.max((last.a1[k] - first.a1[k]).abs() / c);
        max_rel = max_rel.max(last.b[k].abs() / c);
        max_rel = max_rel.max(last.bdot[k].abs() / c);
    }
    report(
        2,
        "constant steady state",
        max_rel <= 1e-10,
        format!("max relative drift {max_rel:.3e} <= 1e-10"),
        started,
        5.0,
    );
}

/// Criterion 3: on the manufactured smooth suite the energy-balance
/// residual stays below 1e-6 of the initial energy at every sample
/// (rel_tol 1e-10, N = 32, Gauss order 12; under 60 s per case).
#[test]
fn criterion_3_energy_identity() {
    let started = Instant::now();
    let config = IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, ..IntegratorConfig::default() };
    let mut detail = String::new();
    let mut pass = true;
    for case in acceptance_suite() {
        let case_started = Instant::now();
        let errors = manufactured_run(&case, 32, &config, 0.25).unwrap();
        let traj = &errors.trajectory;
        let e0 = traj.ledger[0].total();
        let worst = energy_balance_residual(traj)
            .into_iter()
            .fold(0.0f64, |acc, r| acc.max(r.abs()));
        let ratio = worst / e0;
        pass &= ratio <= 1e-6;
        let case_elapsed = case_started.elapsed().as_secs_f64();
        pass &= case_elapsed < 60.0;
        detail.push_str(&format!("{}: |res|/E0 = {ratio:.2e} ({case_elapsed:.0}s); ", case.name));
    }
    report(3, "energy identity", pass, detail, started, 240.0);
}

/// Criterion 4: the energy-inequality slack is nonnegative (to 1e-8 of the
/// right-hand side) on 20 randomized instances.
#[test]
fn criterion_4_energy_inequality() {
    let started = Instant::now();
    let config = IntegratorConfig::default();
    let mut worst = f64::INFINITY;
    let mut pass = true;
    for idx in 0..20 {
        let spec = random_instance(2026, idx);
        let asm = Arc::new(assemble_default(spec, 16).unwrap());
        let traj = integrate(asm, &config, &[]).unwrap();
        let ineq = energy_inequality_slack(&traj);
        for (&slack, &rhs) in ineq.slack.iter().zip(&ineq.rhs) {
            let normalized = slack / rhs.max(1e-12);
            worst = worst.min(normalized);
            pass &= slack >= -1e-8 * rhs;
        }
    }
    report(
        4,
        "energy inequality",
        pass,
        format!("min slack/RHS over 20 instances = {worst:.3e} (bound -1e-8)"),
        started,
        600.0,
    );
}

/// Criterion 5: manufactured error drops by 10x from N = 8 to N = 32, and
/// the Cauchy differences of a discontinuous instance decrease strictly.
#[test]
fn criterion_5_galerkin_convergence() {
    let started = Instant::now();
    let config = IntegratorConfig { rel_tol: 1e-8, abs_tol: 1e-10, ..IntegratorConfig::default() };

    // under-resolved at N = 8: the suite's first case carries an m = 5 mode
    let case = &acceptance_suite()[0];
    let err8 = manufactured_run(case, 8, &config, 0.4).unwrap().l2_final;
    let err32 = manufactured_run(case, 32, &config, 0.4).unwrap().l2_final;
    let manufactured_ok = err32 <= 0.1 * err8;

    // discontinuous instance: Cauchy ladder
    let mut spec = ProblemSpec::quiescent(0.4);
    spec.r = PiecewiseCoefficient::new(vec![0.37], vec![vec![0.8], vec![1.7]]).unwrap();
    spec.nu = PiecewiseCoefficient::new(vec![0.37], vec![vec![1.2], vec![0.9]]).unwrap();
    spec.h01 = InitialField::Trig(TrigPoly {
        terms: vec![(0.5, 1, TrigPhase::Cos), (0.2, 2, TrigPhase::Sin)],
    });
    spec.u1 = InitialField::Trig(TrigPoly { terms: vec![(0.3, 1, TrigPhase::Sin)] });
    let study = convergence_study(&spec, &[8, 16, 32], &config).unwrap();
    let d01 = study.pairs[0].combined();
    let d12 = study.pairs[1].combined();
    let cauchy_ok = d12 < d01;

    report(
        5,
        "Galerkin convergence",
        manufactured_ok && cauchy_ok,
        format!(
            "manufactured error(32)/error(8) = {:.3e}/{:.3e} = {:.3}; Cauchy diffs {:.3e} > {:.3e}",
            err32,
            err8,
            err32 / err8,
            d01,
            d12
        ),
        started,
        300.0,
    );
}

/// Criterion 6: two distinct integrator configurations agree within
/// 10 (tolA + tolB) x solution scale on 5 instances. The configurations
/// differ in tolerances and step cap; both use the exponential scheme,
/// whose wave phases carry no secular drift, so the disagreement is a
/// faithful image of the tolerance budget.
#[test]
fn criterion_6_uniqueness() {
    let started = Instant::now();
    let config_a = IntegratorConfig { rel_tol: 1e-7, abs_tol: 1e-9, ..IntegratorConfig::default() };
    let config_b = IntegratorConfig {
        rel_tol: 1e-9,
        abs_tol: 1e-11,
        dt_max: 5e-3,
        ..IntegratorConfig::default()
    };
    let mut pass = true;
    let mut worst = 0.0f64;
    for idx in 0..5 {
        let mut spec = random_instance(7053, idx);
        spec.horizon = 0.5;
        let rep = uniqueness_crosscheck(&spec, &config_a, &config_b, 16).unwrap();
        let bound = 10.0 * rep.tol_budget * rep.scale;
        let diff = rep.diff_v2_h + rep.diff_w11_u;
        worst = worst.max(diff / bound);
        pass &= diff <= bound;
    }
    report(
        6,
        "uniqueness cross-check",
        pass,
        format!("worst diff/bound = {worst:.3} over 5 instances"),
        started,
        300.0,
    );
}

/// Criterion 7: every geometric perturbation ladder decays by at least the
/// perturbation ratio (10% slack) per rung and keeps the LHS/RHS ratio
/// bounded.
#[test]
fn criterion_7_stability_ladders() {
    let started = Instant::now();
    let mut base = ProblemSpec::quiescent(0.4);
    base.r = PiecewiseCoefficient::new(vec![0.5], vec![vec![0.9], vec![1.5]]).unwrap();
    base.h01 = InitialField::Trig(TrigPoly { terms: vec![(0.4, 1, TrigPhase::Cos)] });
    base.h02 = InitialField::Trig(TrigPoly { terms: vec![(0.2, 2, TrigPhase::Sin)] });
    base.u0 = InitialField::Trig(TrigPoly { terms: vec![(0.2, 1, TrigPhase::Sin)] });
    base.u1 = InitialField::Trig(TrigPoly { terms: vec![(0.2, 1, TrigPhase::Cos)] });

    let config = IntegratorConfig::default();
    let mut pass = true;
    let mut detail = String::new();
    for target in
        [PerturbTarget::R, PerturbTarget::J, PerturbTarget::F, PerturbTarget::H0, PerturbTarget::U0, PerturbTarget::U1]
    {
        let rungs = stability_experiment(&base, target, 0.2, 4, 0.5, 16, &config).unwrap();
        let mut max_ratio = 0.0f64;
        for pair in rungs.windows(2) {
            let decay = pair[1].lhs / pair[0].lhs;
            // halving the perturbation must at least halve the LHS, with
            // 10% slack on the ratio
            pass &= decay <= 0.55;
            max_ratio = max_ratio.max(decay);
        }
        let mut bound_ratio = 0.0f64;
        for rung in &rungs {
            bound_ratio = bound_ratio.max(rung.lhs / rung.rhs);
            pass &= rung.lhs <= 10.0 * rung.rhs;
        }
        detail.push_str(&format!("{target}: decay<= {max_ratio:.2}, lhs/rhs<= {bound_ratio:.2}; "));
    }
    report(7, "stability ladders", pass, detail, started, 600.0);
}

/// Criterion 8: spectral (N = 32) and finite-difference (M = 512)
/// solutions of a smooth instance agree to L2 <= 1e-3 at T = 0.5.
#[test]
fn criterion_8_independent_oracle() {
    let started = Instant::now();
    let mut spec = ProblemSpec::quiescent(0.5);
    spec.p = 0.8;
    spec.r = PiecewiseCoefficient::constant(0.7);
    spec.nu = PiecewiseCoefficient::constant(1.1);
    spec.h01 = InitialField::Trig(TrigPoly { terms: vec![(0.6, 1, TrigPhase::Cos)] });
    spec.h02 = InitialField::Trig(TrigPoly { terms: vec![(0.3, 1, TrigPhase::Sin)] });
    spec.u1 = InitialField::Trig(TrigPoly { terms: vec![(0.3, 1, TrigPhase::Sin)] });

    let asm = Arc::new(assemble_default(spec.clone(), 32).unwrap());
    let config = IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, ..IntegratorConfig::default() };
    let traj = integrate(asm, &config, &[]).unwrap();
    let fd = fd_oracle(&spec, 512, 2e-4).unwrap();
    let cmp = compare_with_fd(&traj, &fd);
    report(
        8,
        "independent oracle",
        cmp.max_l2 <= 1e-3,
        format!("L2 discrepancies h1 {:.2e}, h2 {:.2e}, u {:.2e}", cmp.l2_h1, cmp.l2_h2, cmp.l2_u),
        started,
        120.0,
    );
}

/// Criterion 9: the magnetic flux-jump defect at every breakpoint at least
/// halves from N = 8 to N = 32.
#[test]
fn criterion_9_transmission_defect_decay() {
    let started = Instant::now();
    let config = IntegratorConfig { rel_tol: 1e-8, abs_tol: 1e-10, ..IntegratorConfig::default() };

    let mut pass = true;
    let mut detail = String::new();
    for (label, breakpoints, r_pieces) in [
        ("m1", vec![0.4], vec![vec![0.6], vec![1.8]]),
        ("m2", vec![0.3, 0.7], vec![vec![0.6], vec![1.6], vec![1.0]]),
    ] {
        let mut spec = ProblemSpec::quiescent(0.25);
        spec.r = PiecewiseCoefficient::new(breakpoints.clone(), r_pieces).unwrap();
        spec.h01 = InitialField::Trig(TrigPoly {
            terms: vec![(0.6, 1, TrigPhase::Cos), (0.2, 2, TrigPhase::Sin)],
        });
        spec.u1 = InitialField::Trig(TrigPoly { terms: vec![(0.2, 1, TrigPhase::Sin)] });

        // half the smallest piece width / 4 keeps both offsets admissible
        let mut min_width = f64::INFINITY;
        let mut edges = vec![0.0];
        edges.extend(&breakpoints);
        edges.push(1.0);
        for w in edges.windows(2) {
            min_width = min_width.min(w[1] - w[0]);
        }
        let delta = min_width / 8.0;

        let defects = |n: usize| -> Vec<f64> {
            let asm = Arc::new(assemble_default(spec.clone(), n).unwrap());
            let traj = integrate(asm, &config, &[]).unwrap();
            let rep = jump_report(&traj, traj.horizon(), delta).unwrap();
            rep.rows
                .iter()
                .map(|row| row.flux_h1.richardson.abs().max(row.flux_h2.richardson.abs()))
                .collect()
        };
        let d8 = defects(8);
        let d32 = defects(32);
        for (z, (a, b)) in breakpoints.iter().zip(d8.iter().zip(&d32)) {
            pass &= *b <= 0.5 * a;
            detail.push_str(&format!("{label}@{z}: {b:.2e} vs 0.5*{a:.2e}; "));
        }
    }
    report(9, "transmission-defect decay", pass, detail, started, 300.0);
}
