//! End-to-end acceptance runs: the three-player chain plant in all six
//! synthesis modes, plus the solver-independent property suites. Each test
//! prints a one-line summary; run with `-- --nocapture` to see the measured
//! numbers next to their reference values.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use hinf_core::delay::StructuredFir;
use hinf_core::factorizations::{co_inner_outer, inner_outer, nehari_fit, spectral_factor};
use hinf_core::norms::{hankel_norm, hinf_norm};
use hinf_core::realization::{MixedSystem, RealizationSS};
use hinf_core::riccati::{solve_gdare, GdareProblem};
use hinf_core::synthesis::{
    synthesize, ModelMatchData, StructureMode, SynthesisOptions, SynthesisReport,
};
use hinf_core::{grid, linalg, lmi, tol};
use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fi_data() -> ModelMatchData {
    common::chain_plant().full_information().unwrap()
}

fn of_data() -> ModelMatchData {
    common::chain_plant().output_feedback().unwrap()
}

fn run(data: &ModelMatchData, mode: &StructureMode) -> SynthesisReport {
    synthesize(data, mode, &SynthesisOptions::default()).unwrap()
}

// The six chain runs are shared across tests; whichever test needs one first
// pays for it.
static FI_CENTRALIZED: OnceLock<SynthesisReport> = OnceLock::new();
static FI_DISTRIBUTED: OnceLock<SynthesisReport> = OnceLock::new();
static FI_DELAYED: OnceLock<SynthesisReport> = OnceLock::new();
static OF_CENTRALIZED: OnceLock<SynthesisReport> = OnceLock::new();
static OF_DISTRIBUTED: OnceLock<SynthesisReport> = OnceLock::new();
static OF_DELAYED: OnceLock<SynthesisReport> = OnceLock::new();

fn fi_centralized() -> &'static SynthesisReport {
    FI_CENTRALIZED.get_or_init(|| run(&fi_data(), &StructureMode::Centralized))
}

fn fi_distributed() -> &'static SynthesisReport {
    FI_DISTRIBUTED.get_or_init(|| {
        let c = common::chain_constraint_full_information();
        run(&fi_data(), &StructureMode::Distributed(c))
    })
}

fn fi_delayed() -> &'static SynthesisReport {
    FI_DELAYED.get_or_init(|| {
        let c = common::chain_constraint_full_information();
        run(&fi_data(), &StructureMode::DelayedOnly(c))
    })
}

fn of_centralized() -> &'static SynthesisReport {
    OF_CENTRALIZED.get_or_init(|| run(&of_data(), &StructureMode::Centralized))
}

fn of_distributed() -> &'static SynthesisReport {
    OF_DISTRIBUTED.get_or_init(|| {
        let c = common::chain_constraint_output_feedback();
        run(&of_data(), &StructureMode::Distributed(c))
    })
}

fn of_delayed() -> &'static SynthesisReport {
    OF_DELAYED.get_or_init(|| {
        let c = common::chain_constraint_output_feedback();
        run(&of_data(), &StructureMode::DelayedOnly(c))
    })
}

fn random_stable(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    m: usize,
    with_d: bool,
) -> RealizationSS {
    let mut a = DMatrix::zeros(n, n);
    a.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    let rho = linalg::spectral_radius(&a);
    if rho > 0.0 {
        a *= 0.82 / rho.max(0.82);
    }
    let mut b = DMatrix::zeros(n, m);
    b.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    let mut c = DMatrix::zeros(p, n);
    c.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    let mut d = DMatrix::zeros(p, m);
    if with_d {
        d.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    }
    RealizationSS::new(a, b, c, d).unwrap()
}

fn scaled_identity(k: usize, s: f64) -> linalg::CMatrix {
    linalg::CMatrix::identity(k, k) * Complex::new(s, 0.0)
}

#[test]
fn chain_full_information_centralized_level() {
    let start = Instant::now();
    let report = run(&fi_data(), &StructureMode::Centralized);
    let elapsed = start.elapsed().as_secs_f64();
    let gamma = report.gamma;
    assert!(
        (gamma - 0.9772).abs() < 0.005,
        "level {gamma:.6} is off the reference 0.9772 +/- 0.005"
    );
    assert!(elapsed < 60.0, "run took {elapsed:.1}s, budget is 60s");
    println!(
        "chain full-information centralized: PASS (gamma {gamma:.4}, reference 0.9772 +/- 0.005, {elapsed:.1}s)"
    );
    let _ = FI_CENTRALIZED.get_or_init(|| report);
}

#[test]
fn chain_full_information_distributed_level() {
    let report = fi_distributed();
    let gamma = report.gamma;
    assert!(
        (gamma - 0.9772).abs() < 0.01,
        "level {gamma:.6} is off the reference 0.9772 +/- 0.01"
    );
    println!(
        "chain full-information distributed: PASS (gamma {gamma:.4}, reference 0.9772 +/- 0.01)"
    );
}

#[test]
fn chain_full_information_delayed_level() {
    let report = fi_delayed();
    let gamma = report.gamma;
    assert!(
        (gamma - 1.6856).abs() < 0.01,
        "level {gamma:.6} is off the reference 1.6856 +/- 0.01"
    );
    println!("chain full-information delayed: PASS (gamma {gamma:.4}, reference 1.6856 +/- 0.01)");
}

#[test]
fn chain_output_feedback_levels() {
    let cases = [
        (of_centralized(), 1.502),
        (of_distributed(), 1.515),
        (of_delayed(), 2.213),
    ];
    for (report, reference) in cases {
        let gamma = report.gamma;
        assert!(
            (gamma - reference).abs() < 0.02,
            "{} level {gamma:.6} is off the reference {reference} +/- 0.02",
            report.mode
        );
    }
    println!(
        "chain output-feedback: PASS (centralized {:.4} / distributed {:.4} / delayed {:.4} vs 1.502 / 1.515 / 2.213 +/- 0.02)",
        cases[0].0.gamma, cases[1].0.gamma, cases[2].0.gamma
    );
}

#[test]
fn every_controller_passes_an_independent_closed_loop_audit() {
    let plant = common::chain_plant();
    let block = |b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>| {
        RealizationSS::new(plant.a.clone(), b.clone(), c.clone(), d.clone()).unwrap()
    };
    let p11 = block(&plant.b1, &plant.c1, &plant.d11);
    let p12 = block(&plant.b2, &plant.c1, &plant.d12);
    let p21 = block(&plant.b1, &plant.c2, &plant.d21);
    let p22 = block(&plant.b2, &plant.c2, &plant.d22);

    // Full information: the measurement is the exogenous input itself, so
    // the loop is open and the closed loop is T1 + T2 K.
    for report in [fi_centralized(), fi_distributed(), fi_delayed()] {
        let tcl = p11.add(&p12.series(&report.controller).unwrap()).unwrap();
        let norm = hinf_norm(&tcl).unwrap().value;
        assert!(
            norm <= report.gamma + 1e-3,
            "full-information {}: audited norm {norm:.6} vs level {:.6}",
            report.mode,
            report.gamma
        );
    }

    // Output feedback: close the measurement loop around K from scratch.
    for report in [of_centralized(), of_distributed(), of_delayed()] {
        let k = &report.controller;
        let loop_inv = RealizationSS::identity(3)
            .sub(&p22.series(k).unwrap())
            .unwrap()
            .invert()
            .unwrap();
        let tcl = p11
            .add(
                &p12.series(k)
                    .unwrap()
                    .series(&loop_inv)
                    .unwrap()
                    .series(&p21)
                    .unwrap(),
            )
            .unwrap();
        let norm = hinf_norm(&tcl).unwrap().value;
        assert!(
            norm <= report.gamma + 1e-3,
            "output-feedback {}: audited norm {norm:.6} vs level {:.6}",
            report.mode,
            report.gamma
        );
    }

    // The leading taps of Q must respect the structure exactly — the
    // construction never touches masked entries, so zero means zero.
    let cfi = common::chain_constraint_full_information();
    let cof = common::chain_constraint_output_feedback();
    for (report, constraint) in [(fi_distributed(), &cfi), (of_distributed(), &cof)] {
        let taps = report.q.markov(constraint.horizon()).taps;
        assert_eq!(
            constraint.masked_violation(&taps),
            0.0,
            "{} distributed prefix leaks across the masks",
            report.mode
        );
    }
    for report in [fi_delayed(), of_delayed()] {
        let taps = report.q.markov(2).taps;
        let worst = taps.iter().map(linalg::max_abs).fold(0.0_f64, f64::max);
        assert_eq!(
            worst, 0.0,
            "delayed parameter has a nonzero tap ahead of the horizon"
        );
    }
    println!("closed-loop audit: PASS (six controllers re-verified from K alone, masks exact)");
}

#[test]
fn factorization_residuals_stay_small_across_random_plants() {
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let thetas = grid::uniform(tol::ORACLE_GRID);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let n = 1 + trial % 5;
        let m = 1 + trial % 2;
        let p = m + 1 + trial % 2;

        // Inner-outer: isometry of the inner factor and exact product.
        let g = random_stable(&mut rng, n, p, m, true);
        let io = inner_outer(&g).unwrap();
        for &theta in &thetas {
            let ui = io.inner.evaluate(theta).unwrap();
            let uo = io.outer.evaluate(theta).unwrap();
            let gv = g.evaluate(theta).unwrap();
            let iso = ui.adjoint() * &ui - scaled_identity(m, 1.0);
            worst = worst
                .max(linalg::sigma_max_complex(&iso))
                .max(linalg::sigma_max_complex(&(ui * uo - gv)));
        }

        // Co-dual: co-isometry on the other side and exact product.
        let h = random_stable(&mut rng, n, m, p, true);
        let co = co_inner_outer(&h).unwrap();
        for &theta in &thetas {
            let vci = co.co_inner.evaluate(theta).unwrap();
            let vco = co.co_outer.evaluate(theta).unwrap();
            let hv = h.evaluate(theta).unwrap();
            let iso = &vci * vci.adjoint() - scaled_identity(m, 1.0);
            worst = worst
                .max(linalg::sigma_max_complex(&iso))
                .max(linalg::sigma_max_complex(&(vco * vci - hv)));
        }

        // Spectral identity: M~M + F~F = gamma^2 I.
        let f = random_stable(&mut rng, n, m, m, true);
        let gamma = 1.1 * hinf_norm(&f).unwrap().value;
        let mf = spectral_factor(&MixedSystem::from_stable(f.clone()).unwrap(), gamma).unwrap();
        for &theta in &thetas {
            let mv = mf.evaluate(theta).unwrap();
            let fv = f.evaluate(theta).unwrap();
            let ident = mv.adjoint() * &mv + fv.adjoint() * &fv - scaled_identity(m, gamma * gamma);
            worst = worst.max(linalg::sigma_max_complex(&ident) / (gamma * gamma));
        }
    }
    assert!(worst < 1e-7, "worst factorization residual {worst:.3e}");
    println!("factorization residuals: PASS (50 plants, worst {worst:.1e} < 1e-7)");
}

#[test]
fn nehari_errors_are_uniformly_all_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(701);
    let thetas = grid::uniform(tol::ORACLE_GRID);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let n = 1 + trial % 5;
        let p = 1 + trial % 3;
        let m = 1 + (trial / 3) % 2;
        let g = random_stable(&mut rng, n, p, m, false);
        let hankel = hankel_norm(&g).unwrap();
        let bound = hankel * (1.2 + 0.4 * rng.random::<f64>());
        let q = nehari_fit(&g, bound).unwrap();
        let k = p.min(m);
        for &theta in &thetas {
            let err = g.evaluate(theta).unwrap().adjoint() - q.evaluate(theta).unwrap();
            let gram = if err.nrows() <= err.ncols() {
                &err * err.adjoint()
            } else {
                err.adjoint() * &err
            };
            let dev = linalg::sigma_max_complex(&(gram - scaled_identity(k, bound * bound)))
                / (bound * bound);
            worst = worst.max(dev);
        }
    }
    assert!(worst < 1e-6, "worst all-pass defect {worst:.3e}");
    println!("nehari all-pass: PASS (20 systems, worst defect {worst:.1e} < 1e-6)");
}

#[test]
fn certificate_and_gramian_hankel_tests_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(801);
    let targets = [0.3, 0.8, 0.97, 1.03, 1.3, 2.0];
    let mut checked = 0;
    while checked < 20 {
        let n = 1 + checked % 4;
        let p = 1 + checked % 2;
        let m = 1 + (checked / 2) % 2;
        let g = random_stable(&mut rng, n, p, m, false);
        let h0 = hankel_norm(&g).unwrap();
        if h0 < 1e-6 {
            continue;
        }
        // The Hankel norm is linear in C; steer it to both sides of the
        // decision boundary, well clear of the band where the verdicts may
        // legitimately differ.
        let target = targets[checked % targets.len()];
        let scaled = RealizationSS::new(
            g.a().clone(),
            g.b().clone(),
            g.c() * (target / h0),
            DMatrix::zeros(p, m),
        )
        .unwrap();
        let h = hankel_norm(&scaled).unwrap();
        if (h - 1.0).abs() < 1e-4 {
            continue;
        }
        let out = lmi::hankel_feasibility(scaled.a(), scaled.b(), scaled.c(), &[]).unwrap();
        assert_eq!(
            out.feasible,
            h < 1.0,
            "verdicts disagree at hankel norm {h:.6}"
        );
        checked += 1;
    }
    println!("certificate vs gramian: PASS (20 systems, verdicts agree)");
}

#[test]
fn structured_prefixes_leave_the_residue_untouched() {
    // The part of T1 outside the range of the inner factor cannot be moved
    // by any parameter — in particular not by a masked FIR prefix.
    let data = fi_data();
    let constraint = common::chain_constraint_full_information();
    let io = inner_outer(&data.t2).unwrap();
    let pi = io.inner.times_conj(&io.inner).unwrap();
    let y = MixedSystem::from_stable(data.t1.clone())
        .unwrap()
        .sub(&pi.right_mul(&data.t1).unwrap())
        .unwrap();
    let thetas = grid::uniform(tol::ORACLE_GRID);
    let y_vals: Vec<_> = thetas.iter().map(|&t| y.evaluate(t).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(901);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let params: Vec<f64> = (0..constraint.free_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let v = StructuredFir::from_params(&constraint, &params)
            .unwrap()
            .to_realization()
            .unwrap();
        let t1_mod = data.t1.sub(&data.t2.series(&v).unwrap()).unwrap();
        let y_mod = MixedSystem::from_stable(t1_mod.clone())
            .unwrap()
            .sub(&pi.right_mul(&t1_mod).unwrap())
            .unwrap();
        for (&theta, yv) in thetas.iter().zip(&y_vals) {
            let diff = y_mod.evaluate(theta).unwrap() - yv;
            worst = worst.max(linalg::sigma_max_complex(&diff));
        }
    }
    assert!(
        worst < 1e-8,
        "residue moved by {worst:.3e} under a structured prefix"
    );
    println!("residue invariance: PASS (10 structured prefixes, worst drift {worst:.1e} < 1e-8)");
}

#[test]
fn riccati_solutions_certify_with_tiny_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst_res: f64 = 0.0;
    let mut worst_rho: f64 = 0.0;
    for trial in 0..40 {
        let n = 1 + trial % 4;
        let m = 1 + trial % 2;
        // Jointly positive cost keeps every instance solvable, including the
        // handful with an unstable state matrix.
        let mut l = DMatrix::<f64>::zeros(n + m, n + m);
        l.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let hform = l.transpose() * &l + DMatrix::identity(n + m, n + m) * 0.05;
        let qm = hform.view((0, 0), (n, n)).into_owned();
        let s = hform.view((0, n), (n, m)).into_owned();
        let r = hform.view((n, n), (m, m)).into_owned();
        let mut a = DMatrix::<f64>::zeros(n, n);
        a.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let rho_target = if trial % 5 == 0 { 1.15 } else { 0.2 + 0.7 * rng.random::<f64>() };
        let rho = linalg::spectral_radius(&a);
        if rho > 0.0 {
            a *= rho_target / rho;
        }
        let mut b = DMatrix::<f64>::zeros(n, m);
        b.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let sol = solve_gdare(&GdareProblem::new(a, b, qm, r, s).unwrap()).unwrap();
        assert!(
            sol.residual < 1e-10,
            "trial {trial}: residual {:.3e}",
            sol.residual
        );
        assert!(
            sol.closed_loop_radius < 1.0,
            "trial {trial}: closed-loop radius {:.6}",
            sol.closed_loop_radius
        );
        worst_res = worst_res.max(sol.residual);
        worst_rho = worst_rho.max(sol.closed_loop_radius);
    }
    println!(
        "riccati certification: PASS (40 instances, worst residual {worst_res:.1e} < 1e-10, worst closed-loop radius {worst_rho:.3} < 1)"
    );
}
