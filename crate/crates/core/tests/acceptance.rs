//! Acceptance suite.
//!
//! One test per acceptance criterion, each printing a single
//! `[criterion NN] PASS/FAIL` line (run with `--nocapture` to see them).
//! Expensive simulations are shared between criteria through `OnceLock`.
//!
//! Criteria 11, 12 (traffic half) and 15 (stationarity half) encode
//! published target values that could not be reconciled with the published
//! model constants; the tests assert them as stated and fail honestly.
//! The analysis lives next to each test.

use mrfv::config::{CustomProblem, ProblemConfig};
use mrfv::driver::{run, RunConfig, RunMode, RunReport, ToleranceSpec};
use mrfv::fv::{
    cfl_number, divergence_theta, dt_from_cfl, first_order_step, EoFlux, UniformField,
};
use mrfv::harness::{convergence_study, error_norms};
use mrfv::model::{
    make_sedimentation_example1, make_traffic_example2, BoundaryKind, ProblemSpec, TrafficParams,
};
use mrfv::rk::{embedded_candidates, rk3_step};
use mrfv::tree::{predict, project, MrTree};
use mrfv::xrng::SplitMix64;
use std::sync::OnceLock;
use std::time::Instant;

const EX1_EPSILON: f64 = 5.16e-5;
const EX2_EPSILON: f64 = 1.33e-5;

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[criterion {criterion}] {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion}: {detail}");
}

fn random_field(spec: &ProblemSpec, level: u32, seed: u64) -> UniformField {
    let mut rng = SplitMix64::new(seed);
    let mut f = UniformField::constant(spec, level, 0.0);
    for v in f.values.iter_mut() {
        *v = rng.range(0.0, spec.u_max);
    }
    f
}

// -- shared expensive runs --------------------------------------------------

/// Example 1, adaptive mesh, L = 11, Δt = λ h_L with λ = 20 s/m, to the
/// nominal steady state at t = 12000 s; grading asserted every step.
fn ex1_mr_full() -> &'static RunReport {
    static CELL: OnceLock<RunReport> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut cfg = RunConfig::new(
            ProblemConfig::named("sedimentation-ex1"),
            11,
            RunMode::Mr,
            12000.0,
        );
        cfg.snapshot_times = vec![2000.0, 9000.0, 11500.0, 12000.0];
        cfg.tolerance = Some(ToleranceSpec::Epsilon(EX1_EPSILON));
        cfg.time.lambda = Some(20.0);
        cfg.check_grading = true;
        run(&cfg).expect("Example 1 adaptive run")
    })
}

/// Example 2, adaptive mesh, L = 10, fixed step at CFL 1/2, to t = 0.4 h.
fn ex2_mr_full() -> &'static RunReport {
    static CELL: OnceLock<RunReport> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut cfg = RunConfig::new(ProblemConfig::named("traffic-ex2"), 10, RunMode::Mr, 0.4);
        cfg.snapshot_times = vec![0.2, 0.4];
        cfg.tolerance = Some(ToleranceSpec::Epsilon(EX2_EPSILON));
        cfg.time.cfl0 = Some(0.5);
        cfg.check_grading = true;
        run(&cfg).expect("Example 2 adaptive run")
    })
}

fn ex1_base_2000(level: u32) -> RunConfig {
    let mut cfg = RunConfig::new(
        ProblemConfig::named("sedimentation-ex1"),
        level,
        RunMode::Fv,
        2000.0,
    );
    cfg.snapshot_times = vec![2000.0];
    cfg.time.cfl0 = Some(0.5);
    cfg
}

fn fv11_2000() -> &'static RunReport {
    static CELL: OnceLock<RunReport> = OnceLock::new();
    CELL.get_or_init(|| run(&ex1_base_2000(11)).expect("FV L=11"))
}

fn fv10_2000() -> &'static RunReport {
    static CELL: OnceLock<RunReport> = OnceLock::new();
    CELL.get_or_init(|| run(&ex1_base_2000(10)).expect("FV L=10"))
}

fn mr_2000(level: u32) -> RunReport {
    let mut cfg = ex1_base_2000(level);
    cfg.mode = RunMode::Mr;
    cfg.tolerance = Some(ToleranceSpec::Epsilon(EX1_EPSILON));
    cfg.time.cfl0 = None;
    cfg.time.lambda = Some(20.0);
    run(&cfg).expect("MR run")
}

fn mr11_2000() -> &'static RunReport {
    static CELL: OnceLock<RunReport> = OnceLock::new();
    CELL.get_or_init(|| mr_2000(11))
}

fn mr10_2000() -> &'static RunReport {
    static CELL: OnceLock<RunReport> = OnceLock::new();
    CELL.get_or_init(|| mr_2000(10))
}

fn ref12_2000() -> &'static RunReport {
    static CELL: OnceLock<RunReport> = OnceLock::new();
    CELL.get_or_init(|| run(&ex1_base_2000(12)).expect("reference L=12"))
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_01_transform_roundtrip_exactness() {
    let start = Instant::now();
    let spec = make_sedimentation_example1();
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let field = random_field(&spec, 10, 0xC0FFEE + seed);
        let tree = MrTree::encode(&field, spec.boundary, 0.0);
        let back = tree.decode();
        let scale = field.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in field.values.iter().zip(back.values.iter()) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "01",
        worst <= 1e-13 && elapsed < 1.0,
        &format!("decode∘encode max rel err {worst:.2e} (bound 1e-13) on 100 fields in {elapsed:.2} s"),
    );
}

#[test]
fn criterion_02_projection_prediction_consistency() {
    let mut rng = SplitMix64::new(2024);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (a, b, c) = (
            rng.range(-1.0, 1.0),
            rng.range(-1.0, 1.0),
            rng.range(-1.0, 1.0),
        );
        let (c0, c1) = predict(a, b, c);
        worst = worst.max((project(c0, c1) - b).abs());
    }
    verdict(
        "02",
        worst <= 1e-15,
        &format!("project∘predict identity defect {worst:.2e} over 10^4 neighbourhoods"),
    );
}

#[test]
fn criterion_03_detail_polynomial_exactness() {
    // Cell averages of a quadratic; prediction order r = 3 reproduces them,
    // so all details with an interior prediction stencil vanish. (The two
    // boundary stencils per level are one-sided extrapolations and are not
    // part of the order claim.)
    let spec = make_sedimentation_example1();
    let level = 7;
    let mut field = UniformField::constant(&spec, level, 0.0);
    let prim = |x: f64| 0.7 * x + 0.15 * x * x - 0.4 * x * x * x / 3.0;
    for j in 0..field.cells() {
        let a = field.x_origin + j as f64 * field.dx;
        field.values[j] = (prim(a + field.dx) - prim(a)) / field.dx;
    }
    let scale = field.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tree = MrTree::encode(&field, BoundaryKind::ZeroFlux, 0.0);
    let mut worst = 0.0f64;
    for l in 1..=level {
        let parents = 1usize << (l - 1);
        for j in (0..1usize << l).step_by(2) {
            let parent = j / 2;
            if parent == 0 || parent == parents - 1 {
                continue;
            }
            worst = worst.max(tree.node(l, j).unwrap().detail.abs());
        }
    }
    verdict(
        "03",
        worst <= 1e-12 * scale,
        &format!("max detail {worst:.2e} on cell-averaged quadratic (bound {:.2e})", 1e-12 * scale),
    );
}

#[test]
fn criterion_04_engquist_osher_consistency_and_monotonicity() {
    let mut detail = String::new();
    let mut pass = true;
    for spec in [make_sedimentation_example1(), make_traffic_example2()] {
        let eo = EoFlux::new(&spec);
        let b_sup = (0..=4000)
            .map(|i| spec.flux(spec.u_max * i as f64 / 4000.0))
            .fold(0.0f64, f64::max);
        let mut rng = SplitMix64::new(404);
        let mut worst = 0.0f64;
        for i in 0..=1000 {
            let u = if i <= 900 {
                spec.u_max * i as f64 / 900.0
            } else {
                rng.range(0.0, spec.u_max)
            };
            worst = worst.max((eo.value(u, u) - spec.flux(u)).abs());
        }
        pass &= worst <= 1e-6 * b_sup;

        // Monotonicity signs by finite differences on a 50×50 grid.
        let eps = spec.u_max * 1e-7;
        let mut mono = true;
        for i in 0..50 {
            for k in 0..50 {
                let u = spec.u_max * (i as f64 + 0.5) / 50.0;
                let v = spec.u_max * (k as f64 + 0.5) / 50.0;
                mono &= eo.value(u + eps, v) - eo.value(u - eps, v) >= -1e-12 * b_sup;
                mono &= eo.value(u, v + eps) - eo.value(u, v - eps) <= 1e-12 * b_sup;
            }
        }
        pass &= mono;
        detail.push_str(&format!(
            "{}: consistency {worst:.2e} / bound {:.2e}, monotone {mono}; ",
            spec.name(),
            1e-6 * b_sup
        ));
    }
    verdict("04", pass, &detail);
}

#[test]
fn criterion_05_first_order_monotonicity_and_maximum_principle() {
    let spec = make_sedimentation_example1();
    let eo = EoFlux::new(&spec);
    let dx = 1.0 / 128.0;
    let dt = dt_from_cfl(&spec, dx, 0.5);
    assert!(cfl_number(&spec, dx, dt) <= 0.5 + 1e-12);

    // Order preservation on 100 random ordered pairs.
    let mut order_ok = true;
    for seed in 0..100u64 {
        let mut rng = SplitMix64::new(7000 + seed);
        let mut lo = UniformField::constant(&spec, 7, 0.0);
        let mut hi = lo.clone();
        for j in 0..lo.cells() {
            let a = rng.range(0.0, 1.0);
            let b = rng.range(0.0, 1.0);
            lo.values[j] = a.min(b);
            hi.values[j] = a.max(b);
        }
        let lo1 = first_order_step(&spec, &eo, &lo, dt, 0.0).unwrap();
        let hi1 = first_order_step(&spec, &eo, &hi, dt, 0.0).unwrap();
        for j in 0..lo1.cells() {
            order_ok &= lo1.values[j] <= hi1.values[j] + 1e-14;
        }
    }

    // Discrete maximum principle on the periodic twin of the same model.
    let periodic = periodic_sedimentation_twin();
    let eo_p = EoFlux::new(&periodic);
    let mut bounds_ok = true;
    for seed in 0..20u64 {
        let mut field = random_field(&periodic, 7, 9000 + seed);
        let (min0, max0) = min_max(&field.values);
        let dt_p = dt_from_cfl(&periodic, field.dx, 0.5);
        for step in 0..50 {
            field = first_order_step(&periodic, &eo_p, &field, dt_p, step as f64 * dt_p).unwrap();
        }
        let (min_n, max_n) = min_max(&field.values);
        bounds_ok &= min_n >= min0 - 1e-12 && max_n <= max0 + 1e-12;
    }
    verdict(
        "05",
        order_ok && bounds_ok,
        &format!("monotone on 100 ordered pairs: {order_ok}; max principle on periodic runs: {bounds_ok}"),
    );
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// The sedimentation model functions on a periodic domain (for properties
/// that only hold without boundary source terms).
fn periodic_sedimentation_twin() -> ProblemSpec {
    // b(u)/v_inf = u(1-u)^5 expanded;  a has the gel-point cutoff built in.
    let custom = CustomProblem {
        u_max: 1.0,
        domain: (0.0, 1.0),
        boundary: BoundaryKind::Periodic,
        flux_poly: vec![0.0, 1e-4, -5e-4, 1e-3, -1e-3, 5e-4, -1e-4],
        flux_table: Vec::new(),
        diffusion_poly: poly_scale(&binomial_poly(5, 5), 0.0368445839),
        a_table: Vec::new(),
        u_c: 0.1,
    };
    ProblemConfig {
        name: "custom".into(),
        initial: None,
        custom: Some(custom),
    }
    .build()
    .unwrap()
}

/// Coefficients of u^m (1-u)^k, ascending.
fn binomial_poly(m: usize, k: usize) -> Vec<f64> {
    let mut coeffs = vec![0.0; m + k + 1];
    let mut binom = 1.0f64;
    for j in 0..=k {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        coeffs[m + j] = sign * binom;
        binom *= (k - j) as f64 / (j + 1) as f64;
    }
    coeffs
}

fn poly_scale(p: &[f64], s: f64) -> Vec<f64> {
    p.iter().map(|c| c * s).collect()
}

#[test]
fn criterion_06_conservation_over_full_runs() {
    let d1 = ex1_mr_full().mass_drift();
    let d2 = ex2_mr_full().mass_drift();
    verdict(
        "06",
        d1 <= 1e-10 && d2 <= 1e-10,
        &format!("mass drift: Example 1 (t=12000 s) {d1:.2e}, Example 2 (t=0.4 h) {d2:.2e} (bound 1e-10)"),
    );
}

#[test]
fn criterion_07_adaptive_uniform_coherence() {
    // Thresholding disabled: the tree carries the full grid and must
    // reproduce the uniform solver step for step.
    let spec = make_sedimentation_example1();
    let eo = EoFlux::new(&spec);
    let level = 7;
    let mut field = UniformField::from_initial(&spec, level);
    let dt = dt_from_cfl(&spec, field.dx, 0.5);

    let full = MrTree::encode(&field, spec.boundary, 0.0);
    let mut tree = full;
    let mut worst = 0.0f64;
    let mut t = 0.0;
    for _ in 0..100 {
        // Uniform step.
        let mut div_fv = |tt: f64, u: &[f64]| -> Vec<f64> {
            let probe = UniformField {
                values: u.to_vec(),
                level,
                dx: field.dx,
                x_origin: field.x_origin,
            };
            divergence_theta(&spec, &eo, &probe, 0.5, tt)
        };
        field.values = rk3_step(&mut div_fv, &field.values, dt, t);

        // Adaptive step on the full tree.
        tree.ensure_stencils();
        let leaves = tree.leaves();
        assert_eq!(leaves.len(), field.cells());
        let state = tree.leaf_values(&leaves);
        let next = {
            let tree_ref = &mut tree;
            let leaves_ref = &leaves;
            let mut div_mr = |tt: f64, u: &[f64]| -> Vec<f64> {
                tree_ref.set_leaf_values(leaves_ref, u);
                tree_ref.sync_from_leaves();
                tree_ref
                    .leaf_divergence(&spec, &eo, 0.5, leaves_ref, tt)
                    .unwrap()
            };
            rk3_step(&mut div_mr, &state, dt, t)
        };
        tree.set_leaf_values(&leaves, &next);
        tree.update_tree();
        t += dt;

        let scale = field.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in field.values.iter().zip(next.iter()) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    verdict(
        "07",
        worst <= 1e-12,
        &format!("full-tree vs uniform per-step max rel deviation {worst:.2e} over 100 steps"),
    );
}

#[test]
fn criterion_08_grading_invariant_through_full_run() {
    // The Example 1 run executes with per-step grading assertions enabled;
    // reaching the final time means the invariant held after every update.
    let report = ex1_mr_full();
    verdict(
        "08",
        (report.snapshots.last().unwrap().t - 12000.0).abs() < 1e-9,
        &format!(
            "grading asserted on all {} structural updates of the Example 1 run",
            report.steps
        ),
    );
}

#[test]
fn criterion_09_embedded_error_order_scaling() {
    // Smooth sub-critical traffic state: the flux is linear there and the
    // divergence acts linearly, so δ is exactly cubic in Δt up to limiter
    // switching noise.
    let spec = make_traffic_example2();
    let eo = EoFlux::new(&spec);
    let level = 8;
    let mut field = UniformField::constant(&spec, level, 0.0);
    for j in 0..field.cells() {
        let x = field.center(j);
        field.values[j] = 8.0 + 7.0 * (0.2 * std::f64::consts::PI * x).sin();
    }
    let dx = field.dx;
    let mut divergence = |t: f64, u: &[f64]| -> Vec<f64> {
        let probe = UniformField { values: u.to_vec(), level, dx, x_origin: 0.0 };
        divergence_theta(&spec, &eo, &probe, 0.5, t)
    };
    let mut delta = |dt: f64| -> f64 {
        let (hat, check) = embedded_candidates(&mut divergence, &field.values, dt, 0.0);
        hat.iter()
            .zip(check.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    };
    let dt = dt_from_cfl(&spec, dx, 0.25);
    let d1 = delta(dt);
    let d2 = delta(0.5 * dt);
    let ratio = d1 / d2;
    verdict(
        "09",
        (6.0..=10.0).contains(&ratio),
        &format!("delta(dt)/delta(dt/2) = {ratio:.2} (target 8 ± 2)"),
    );
}

#[test]
fn criterion_10_convergence_rate() {
    // Asserted as published (fitted L¹ order in [0.45, 0.75], around the
    // quoted 0.6). The faithfully implemented scheme measures α_L1 ≈ 1.2
    // on this experiment — it converges *faster* than the published rate —
    // and the same holds when the datum's empty zero-interval [2/8, 1/4]
    // is read as [2/8, 3/8] (α ≈ 1.24). A TVD-limited scheme smearing
    // isolated shocks over O(1) cells gives L¹ order ~1; the published
    // 0.6 sits nearer the theoretical worst case of monotone first-order
    // smearing and could not be reproduced with this discretization.
    let start = Instant::now();
    let problem = ProblemConfig::named("sedimentation-rough");
    let report = convergence_study(
        &problem,
        &[7, 8, 9, 10],
        11,
        &[4000.0, 9000.0, 12000.0],
        0.5,
    )
    .expect("convergence study");
    let alpha = report.alpha_l1;
    verdict(
        "10",
        (0.45..=0.75).contains(&alpha),
        &format!(
            "fitted alpha_L1 = {alpha:.3} (target [0.45, 0.75]); alpha_L2 = {:.3}, alpha_Linf = {:.3}; {:.0} s",
            report.alpha_l2,
            report.alpha_linf,
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_11_rkf_step_size_fixed_point() {
    // As published: N_L = 128, δ_desired = 5e-4, initial CFL ∈ {0.1, 0.5,
    // 0.75, 1.0}; the controller should land on the same step size for all
    // starts and that value should be 0.0621 s ± 20%.
    //
    // The mutual-agreement half holds. The published value does not: with
    // the stated model constants the measured truncation-error estimate at
    // Δt = 0.0621 s is ~6e-13 — nine orders below δ_desired under any norm
    // of û - ǔ — so the controller grows the step until the CFL ceiling
    // (or, without one, the diffusive stability boundary at ~5 s). The
    // published step-size table is internally inconsistent (its initial-Δt
    // column is not proportional to its CFL column), and no unit or norm
    // convention reconciles it; see the repository notes.
    let mut finals = Vec::new();
    for cfl in [0.1, 0.5, 0.75, 1.0] {
        let mut cfg = RunConfig::new(
            ProblemConfig::named("sedimentation-ex1"),
            7,
            RunMode::FvRkf,
            4000.0,
        );
        cfg.time.cfl0 = Some(cfl);
        cfg.time.delta_desired = 5e-4;
        let report = run(&cfg).expect("RKF run");
        finals.push(report.final_dt);
    }
    let (lo, hi) = min_max(&finals);
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let mutual = (hi - lo) / mean <= 0.02;
    let value_ok = finals.iter().all(|&dt| (dt - 0.0621).abs() / 0.0621 <= 0.20);
    verdict(
        "11",
        mutual && value_ok,
        &format!(
            "final dt = {finals:.4?}: mutual agreement within 2%: {mutual}; within ±20% of 0.0621 s: {value_ok}"
        ),
    );
}

#[test]
fn criterion_12_compression_rates() {
    // Example 1 reproduces the published compression. Example 2 is asserted
    // as published; the published value is not reachable jointly with the
    // published tolerance under the written coarsening rule (details
    // thresholded per level, deletion requiring node and sons deletable) —
    // the same machinery that matches Example 1 yields μ ≈ 2.4 here.
    let mu1 = ex1_mr_full().snapshot_at(2000.0).unwrap().mu;
    let mu2 = ex2_mr_full().snapshot_at(0.2).unwrap().mu;
    let pass1 = (12.0..=20.0).contains(&mu1);
    let pass2 = (4.5..=7.5).contains(&mu2);
    verdict(
        "12",
        pass1 && pass2,
        &format!(
            "Example 1 mu(2000 s) = {mu1:.2} in [12, 20]: {pass1}; Example 2 mu(0.2 h) = {mu2:.2} in [4.5, 7.5]: {pass2}"
        ),
    );
}

#[test]
fn criterion_13_speedup_ordering() {
    let fv = fv11_2000();
    let mr = mr11_2000();
    let mrrkf = {
        let mut cfg = ex1_base_2000(11);
        cfg.mode = RunMode::MrRkf;
        cfg.tolerance = Some(ToleranceSpec::Epsilon(EX1_EPSILON));
        cfg.time.delta_desired = 5e-4;
        // The published adaptive-step runs ride well past the formal CFL
        // bound computed with the global ‖a‖_∞ (their step settles at
        // ~3.5× the fixed step); the degenerate diffusion is inactive on
        // the fine cells, so this is stable. The hard ceiling is a config
        // knob; 4.0 reproduces that regime (step settles at 0.0265 s).
        cfg.time.cfl_ceiling = 4.0;
        run(&cfg).expect("MR+RKF run")
    };
    let v_mr = fv.cpu_seconds / mr.cpu_seconds;
    let v_mrrkf = fv.cpu_seconds / mrrkf.cpu_seconds;
    verdict(
        "13",
        v_mr > 2.0 && v_mrrkf > v_mr,
        &format!(
            "V(MR) = {v_mr:.2} (> 2), V(MR+RKF) = {v_mrrkf:.2} (> V(MR)); cpu: FV {:.1} s, MR {:.1} s, MR+RKF {:.1} s",
            fv.cpu_seconds, mr.cpu_seconds, mrrkf.cpu_seconds
        ),
    );
}

#[test]
fn criterion_14_error_order_preservation() {
    let reference = ref12_2000();
    let mut detail = String::new();
    let mut pass = true;
    for (fv, mr, level) in [
        (fv10_2000(), mr10_2000(), 10u32),
        (fv11_2000(), mr11_2000(), 11u32),
    ] {
        let projected = reference.snapshots[0].field.project_to(level);
        let e_fv = error_norms(&fv.snapshots[0].field, &projected).unwrap().l1;
        let e_mr = error_norms(&mr.snapshots[0].field, &fv.snapshots[0].field)
            .unwrap()
            .l1;
        let ok = e_mr <= 10.0 * e_fv;
        pass &= ok;
        detail.push_str(&format!(
            "L={level}: |MR-FV|_1 = {e_mr:.2e} vs 10·|FV-ref|_1 = {:.2e} ({}); ",
            10.0 * e_fv,
            if ok { "ok" } else { "exceeded" }
        ));
    }
    verdict("14", pass, &detail);
}

#[test]
fn criterion_15_qualitative_physics() {
    // Example 1: compacted sediment layer above the gel point at the
    // bottom, and stationarity at t = 12000 s with relative change ≤ 1e-4
    // over the last 500 s — asserted as published. The measured change is
    // ~1.2e-2: the model's own consolidation time constant (~1500 s) has
    // not decayed to 1e-4 by t = 12000 (it does by t ≈ 20000, where the
    // profile also matches the analytic steady state); the published
    // stationarity statement is qualitative.
    let ex1 = ex1_mr_full();
    let s115 = ex1.snapshot_at(11500.0).unwrap();
    let s120 = ex1.snapshot_at(12000.0).unwrap();
    let change = error_norms(&s115.field, &s120.field).unwrap().l1;
    let scale: f64 = s120.field.values.iter().map(|v| v.abs()).sum::<f64>() * s120.field.dx;
    let rel_change = change / scale;
    let stationary = rel_change <= 1e-4;
    let u_c = 0.1;
    let bottom = *s120.field.values.last().unwrap();
    let compacted = bottom > u_c;

    // Example 2 during the red phase: jam upstream, drained downstream.
    let ex2 = ex2_mr_full();
    let snap = ex2.snapshot_at(0.2).unwrap();
    let j_light = snap.field.cells() / 2;
    let upstream = snap.field.values[j_light - 1];
    let downstream = snap.field.values[j_light];
    let u_max = 220.0;
    let queue = upstream >= 0.95 * u_max;
    let drained = downstream < TrafficParams::default().u_c();

    verdict(
        "15",
        stationary && compacted && queue && drained,
        &format!(
            "Ex1 stationarity rel change {rel_change:.2e} (≤ 1e-4: {stationary}), bottom u = {bottom:.3} > u_c: {compacted}; \
             Ex2 red phase u(5-) = {upstream:.1} ≥ 209: {queue}, u(5+) = {downstream:.2} < u_c: {drained}"
        ),
    );
}
