//! Benchmark harness: error norms against reference solutions,
//! convergence-rate estimation, experiment matrices, the factor-C sweep and
//! CSV emission.
//!
//! Errors are always measured between fields on a common grid: the finer
//! solution is projected down by repeated pairwise averaging (never
//! interpolated). Reported "normalized" errors divide each norm by the same
//! norm of the reference so that problems with different solution scales
//! produce comparable tables.

use crate::config::ProblemConfig;
use crate::driver::{run, reference_tolerance, RunConfig, RunMode, RunReport, ToleranceSpec};
use crate::fv::UniformField;
use crate::tree::speedup;
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Errors in the three norms; `l1` and `l2` are Δx-weighted.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorTriple {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// `(Δx Σ|a-b|, sqrt(Δx Σ(a-b)²), max|a-b|)` on a common grid.
pub fn error_norms(a: &UniformField, b: &UniformField) -> Result<ErrorTriple> {
    if a.level != b.level || a.values.len() != b.values.len() {
        return Err(Error::LevelMismatch { left: a.level, right: b.level });
    }
    let dx = a.dx;
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    let mut linf = 0.0f64;
    for (x, y) in a.values.iter().zip(b.values.iter()) {
        let d = (x - y).abs();
        l1 += d;
        l2 += d * d;
        linf = linf.max(d);
    }
    Ok(ErrorTriple { l1: dx * l1, l2: (dx * l2).sqrt(), linf })
}

/// Norms of a field against zero (used for normalisation).
fn field_norms(a: &UniformField) -> ErrorTriple {
    let zero = UniformField {
        values: vec![0.0; a.values.len()],
        level: a.level,
        dx: a.dx,
        x_origin: a.x_origin,
    };
    error_norms(a, &zero).expect("same grid")
}

/// Error norms divided by the same norms of the reference.
pub fn normalized_error_norms(a: &UniformField, reference: &UniformField) -> Result<ErrorTriple> {
    let raw = error_norms(a, reference)?;
    let scale = field_norms(reference);
    Ok(ErrorTriple {
        l1: raw.l1 / scale.l1.max(1e-300),
        l2: raw.l2 / scale.l2.max(1e-300),
        linf: raw.linf / scale.linf.max(1e-300),
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Result of a grid-convergence study.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub levels: Vec<u32>,
    pub reference_level: u32,
    pub times: Vec<f64>,
    /// `errors[ti][li]` = error of level `levels[li]` vs the projected
    /// reference at time `times[ti]`.
    pub errors: Vec<Vec<ErrorTriple>>,
    /// Fitted convergence order per norm: error ∝ 2^(-α L).
    pub alpha_l1: f64,
    pub alpha_l2: f64,
    pub alpha_linf: f64,
}

/// Run the fixed-step RK3 finite-volume scheme on a ladder of grids against
/// a fine reference and fit the convergence order per norm.
pub fn convergence_study(
    problem: &ProblemConfig,
    levels: &[u32],
    reference_level: u32,
    t_list: &[f64],
    cfl: f64,
) -> Result<ConvergenceReport> {
    assert!(levels.len() >= 2, "need at least two levels for a fit");
    assert!(levels.iter().all(|&l| l < reference_level));
    let t_final = t_list.iter().cloned().fold(0.0, f64::max);

    let make = |level: u32| -> RunConfig {
        let mut cfg = RunConfig::new(problem.clone(), level, RunMode::Fv, t_final);
        cfg.snapshot_times = t_list.to_vec();
        cfg.time.cfl0 = Some(cfl);
        cfg
    };
    let mut runs: Vec<RunReport> = Vec::new();
    for &l in levels {
        runs.push(run(&make(l))?);
    }
    let reference = run(&make(reference_level))?;

    let mut errors = Vec::new();
    for (ti, &t) in t_list.iter().enumerate() {
        let ref_field = &reference.snapshots[reference
            .snapshots
            .iter()
            .position(|s| (s.t - t).abs() <= 1e-9 * t.max(1.0))
            .expect("reference snapshot")]
        .field;
        let mut row = Vec::new();
        for (li, &l) in levels.iter().enumerate() {
            let coarse = &runs[li].snapshots[ti].field;
            let projected = ref_field.project_to(l);
            row.push(error_norms(coarse, &projected)?);
        }
        errors.push(row);
    }

    // Fit log2(error) against the level, pooling every (time, level) sample;
    // error ∝ 2^(-α L) gives slope -α.
    let fit = |pick: &dyn Fn(&ErrorTriple) -> f64| -> f64 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for row in &errors {
            for (li, e) in row.iter().enumerate() {
                let v = pick(e);
                if v > 0.0 {
                    xs.push(levels[li] as f64);
                    ys.push(v.log2());
                }
            }
        }
        if xs.len() < 2 {
            return f64::NAN;
        }
        -fit_slope(&xs, &ys)
    };

    let alpha_l1 = fit(&|e| e.l1);
    let alpha_l2 = fit(&|e| e.l2);
    let alpha_linf = fit(&|e| e.linf);
    Ok(ConvergenceReport {
        levels: levels.to_vec(),
        reference_level,
        times: t_list.to_vec(),
        errors,
        alpha_l1,
        alpha_l2,
        alpha_linf,
    })
}

/// One row of an experiment table.
#[derive(Clone, Debug)]
pub struct TableRow {
    pub method: String,
    pub level: u32,
    pub t: f64,
    pub v: f64,
    pub mu: f64,
    pub errors: ErrorTriple,
}

#[derive(Clone, Debug)]
pub struct TableReport {
    pub rows: Vec<TableRow>,
    pub reference_level: u32,
}

/// Run every config of the matrix plus the reference (finest-grid FV),
/// then assemble rows `(method, V, μ, normalized errors)` per snapshot
/// time. `V` is measured against the FV run of the same level within the
/// matrix (1 for the FV rows themselves, reference CPU otherwise).
pub fn table_run(matrix: &[RunConfig], reference: &RunConfig) -> Result<TableReport> {
    for cfg in matrix {
        if (cfg.t_final - reference.t_final).abs() > 1e-12 * reference.t_final {
            return Err(Error::Config("matrix configs must share t_final".into()));
        }
    }
    let ref_report = run(reference)?;
    let reports = run_matrix(matrix)?;

    let mut rows = Vec::new();
    for (cfg, rep) in matrix.iter().zip(reports.iter()) {
        // Speed-up baseline: the FV run at the same level, if present.
        let baseline_cpu = matrix
            .iter()
            .zip(reports.iter())
            .find(|(c, _)| c.mode == RunMode::Fv && c.level == cfg.level)
            .map(|(_, r)| r.cpu_seconds)
            .unwrap_or(ref_report.cpu_seconds);
        // A method measured against itself has V = 1 by definition (the
        // clock's 10 ms granularity would otherwise yield 0/0 on tiny runs).
        let v = if baseline_cpu == rep.cpu_seconds {
            1.0
        } else {
            speedup(baseline_cpu, rep.cpu_seconds)
        };
        for snap in &rep.snapshots {
            let ref_snap = ref_report
                .snapshot_at(snap.t)
                .ok_or_else(|| Error::Config(format!("reference lacks snapshot at t={}", snap.t)))?;
            let projected = ref_snap.field.project_to(cfg.level);
            let errors = normalized_error_norms(&snap.field, &projected)?;
            rows.push(TableRow {
                method: cfg.mode.label().to_string(),
                level: cfg.level,
                t: snap.t,
                v,
                mu: snap.mu,
                errors,
            });
        }
    }
    Ok(TableReport { rows, reference_level: reference.level })
}

/// Run independent configs on a small worker pool; the worker count comes
/// from the `MRFV_WORKERS` environment variable (default 1: deterministic
/// single-thread timings).
pub fn run_matrix(matrix: &[RunConfig]) -> Result<Vec<RunReport>> {
    let workers: usize = std::env::var("MRFV_WORKERS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    if workers <= 1 || matrix.len() <= 1 {
        return matrix.iter().map(run).collect();
    }
    let mut results: Vec<Option<Result<RunReport>>> = (0..matrix.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(matrix.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= matrix.len() {
                    break;
                }
                let out = run(&matrix[i]);
                slots.lock().unwrap()[i] = Some(out);
            });
        }
    });
    results.into_iter().map(|r| r.expect("worker filled slot")).collect()
}

/// One cell of the factor-C sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub level: u32,
    pub c: f64,
    pub epsilon_r: f64,
    pub mu: f64,
    pub v: f64,
    pub mr_error_l1: f64,
    pub fv_error_l1: f64,
    /// Error within twice the FV-vs-reference error at the same level.
    pub acceptable: bool,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Largest acceptable C per level.
    pub best_c: Vec<(u32, Option<f64>)>,
    pub reference_level: u32,
}

/// Sweep the tolerance factor C over a set of levels: for every `(L, C)`
/// pair run the adaptive scheme, compare its error against the uniform FV
/// solution at the same level, and flag the values of C that keep the
/// adaptive error within a factor 2 of the FV discretization error.
pub fn factor_c_sweep(
    problem: &ProblemConfig,
    l_list: &[u32],
    c_list: &[f64],
    alpha: f64,
    t_final: f64,
    reference_level: u32,
    base: &RunConfig,
) -> Result<SweepReport> {
    let spec = problem.build()?;
    let make = |level: u32, mode: RunMode, tol: Option<ToleranceSpec>| -> RunConfig {
        let mut cfg = base.clone();
        cfg.problem = problem.clone();
        cfg.level = level;
        cfg.mode = mode;
        cfg.t_final = t_final;
        cfg.snapshot_times = vec![t_final];
        cfg.tolerance = tol;
        cfg
    };
    let reference = run(&make(reference_level, RunMode::Fv, None))?;
    let ref_field = &reference.snapshots[0].field;

    let mut rows = Vec::new();
    let mut best_c = Vec::new();
    for &level in l_list {
        let fv = run(&make(level, RunMode::Fv, None))?;
        let fv_err = error_norms(&fv.snapshots[0].field, &ref_field.project_to(level))?.l1;
        let mut best = None;
        for &c in c_list {
            let eps = reference_tolerance(c, alpha, level, &spec).epsilon_r;
            let mr = run(&make(level, RunMode::Mr, Some(ToleranceSpec::Epsilon(eps))))?;
            let snap = &mr.snapshots[0];
            let mr_err = error_norms(&snap.field, &ref_field.project_to(level))?.l1;
            let acceptable = mr_err <= 2.0 * fv_err.max(1e-300);
            if acceptable && best.is_none_or(|b| c > b) {
                best = Some(c);
            }
            rows.push(SweepRow {
                level,
                c,
                epsilon_r: eps,
                mu: snap.mu,
                v: speedup(fv.cpu_seconds, mr.cpu_seconds),
                mr_error_l1: mr_err,
                fv_error_l1: fv_err,
                acceptable,
            });
        }
        best_c.push((level, best));
    }
    Ok(SweepReport { rows, best_c, reference_level })
}

// ---------------------------------------------------------------------------
// CSV / manifest emission
// ---------------------------------------------------------------------------

/// 17 significant digits, enough to reproduce any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn time_tag(t: f64) -> String {
    format!("{t}").replace('.', "p")
}

/// Write the run's artifacts into `out_dir`:
/// `solution_<t>.csv`, `leaves_<t>.csv`, `dt_trace.csv`, `metrics.csv` and
/// the resolved-config manifest `run.json`.
pub fn emit_outputs(report: &RunReport, config: &RunConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    for snap in &report.snapshots {
        let mut csv = String::from("x,u\n");
        for (j, &u) in snap.field.values.iter().enumerate() {
            let x = snap.field.center(j);
            let _ = writeln!(csv, "{},{}", fmt_f64(x), fmt_f64(u));
        }
        write_file(&out_dir.join(format!("solution_{}.csv", time_tag(snap.t))), &csv)?;

        if let Some(leaves) = &snap.leaves {
            let mut csv = String::from("level,index,center_x,dx,value\n");
            for &(l, j, x, dx, v) in leaves {
                let _ = writeln!(csv, "{l},{j},{},{},{}", fmt_f64(x), fmt_f64(dx), fmt_f64(v));
            }
            write_file(&out_dir.join(format!("leaves_{}.csv", time_tag(snap.t))), &csv)?;
        }
    }

    let mut csv = String::from("step,t,dt,delta_old\n");
    for s in &report.dt_trace {
        let _ = writeln!(csv, "{},{},{},{}", s.step, fmt_f64(s.t), fmt_f64(s.dt), fmt_f64(s.delta));
    }
    write_file(&out_dir.join("dt_trace.csv"), &csv)?;

    let mut csv = String::from("method,level,steps,v,mu,mass_drift\n");
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{}",
        report.mode.label(),
        report.level,
        report.steps,
        fmt_f64(1.0),
        fmt_f64(report.mu_mean),
        fmt_f64(report.mass_drift()),
    );
    write_file(&out_dir.join("metrics.csv"), &csv)?;

    let manifest = serde_json::to_string_pretty(config)
        .map_err(|e| Error::Config(format!("manifest serialisation failed: {e}")))?;
    write_file(&out_dir.join("run.json"), &manifest)?;
    Ok(())
}

/// Write a convergence report as CSV.
pub fn emit_convergence(report: &ConvergenceReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut csv = String::from("t,level,cells,l1,l2,linf\n");
    for (ti, &t) in report.times.iter().enumerate() {
        for (li, &l) in report.levels.iter().enumerate() {
            let e = report.errors[ti][li];
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                fmt_f64(t),
                l,
                1u64 << l,
                fmt_f64(e.l1),
                fmt_f64(e.l2),
                fmt_f64(e.linf)
            );
        }
    }
    let _ = writeln!(
        csv,
        "# alpha_l1 = {:.4}, alpha_l2 = {:.4}, alpha_linf = {:.4}, reference_level = {}",
        report.alpha_l1, report.alpha_l2, report.alpha_linf, report.reference_level
    );
    write_file(&out_dir.join("convergence.csv"), &csv)
}

/// Write an experiment table as CSV.
pub fn emit_table(report: &TableReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut csv = String::from("method,level,t,v,mu,l1,l2,linf\n");
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.level,
            fmt_f64(r.t),
            fmt_f64(r.v),
            fmt_f64(r.mu),
            fmt_f64(r.errors.l1),
            fmt_f64(r.errors.l2),
            fmt_f64(r.errors.linf)
        );
    }
    write_file(&out_dir.join("table.csv"), &csv)
}

/// Write a factor-C sweep as CSV.
pub fn emit_sweep(report: &SweepReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut csv = String::from("level,c,epsilon_r,mu,v,mr_l1,fv_l1,acceptable\n");
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.level,
            fmt_f64(r.c),
            fmt_f64(r.epsilon_r),
            fmt_f64(r.mu),
            fmt_f64(r.v),
            fmt_f64(r.mr_error_l1),
            fmt_f64(r.fv_error_l1),
            r.acceptable
        );
    }
    for (l, c) in &report.best_c {
        let _ = writeln!(csv, "# level {l}: largest acceptable C = {c:?}");
    }
    write_file(&out_dir.join("sweep.csv"), &csv)
}

/// Summarise a table report for the terminal.
pub fn format_table(report: &TableReport) -> String {
    let mut s = format!(
        "{:<8} {:>5} {:>12} {:>8} {:>8} {:>12} {:>12} {:>12}\n",
        "method", "L", "t", "V", "mu", "L1", "L2", "Linf"
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:<8} {:>5} {:>12.5} {:>8.2} {:>8.2} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.method, r.level, r.t, r.v, r.mu, r.errors.l1, r.errors.l2, r.errors.linf
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{RunConfig, RunMode};
    use crate::model::make_sedimentation_example1;
    use crate::xrng::SplitMix64;

    fn field_from(vals: &[f64], dx: f64) -> UniformField {
        UniformField {
            values: vals.to_vec(),
            level: (vals.len() as f64).log2() as u32,
            dx,
            x_origin: 0.0,
        }
    }

    #[test]
    fn error_norms_basics() {
        let a = field_from(&[1.0, 2.0, 3.0, 4.0], 0.25);
        let same = error_norms(&a, &a).unwrap();
        assert_eq!(same, ErrorTriple { l1: 0.0, l2: 0.0, linf: 0.0 });

        // A single-cell difference of height 1 on Δx = 1/4.
        let mut b = a.clone();
        b.values[2] += 1.0;
        let e = error_norms(&a, &b).unwrap();
        assert!((e.l1 - 0.25).abs() < 1e-15);
        assert!((e.l2 - 0.5).abs() < 1e-15);
        assert!((e.linf - 1.0).abs() < 1e-15);

        // Symmetry.
        let e2 = error_norms(&b, &a).unwrap();
        assert_eq!(e, e2);
    }

    #[test]
    fn error_norms_triangle_inequality() {
        let mut rng = SplitMix64::new(2);
        for _ in 0..50 {
            let mk = |rng: &mut SplitMix64| {
                field_from(
                    &(0..8).map(|_| rng.next_f64()).collect::<Vec<_>>(),
                    0.125,
                )
            };
            let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let ab = error_norms(&a, &b).unwrap();
            let bc = error_norms(&b, &c).unwrap();
            let ac = error_norms(&a, &c).unwrap();
            assert!(ac.l1 <= ab.l1 + bc.l1 + 1e-14);
            assert!(ac.l2 <= ab.l2 + bc.l2 + 1e-14);
            assert!(ac.linf <= ab.linf + bc.linf + 1e-14);
        }
    }

    #[test]
    fn level_mismatch_is_an_error() {
        let a = field_from(&[1.0, 2.0], 0.5);
        let b = field_from(&[1.0, 2.0, 3.0, 4.0], 0.25);
        assert!(matches!(error_norms(&a, &b), Err(Error::LevelMismatch { .. })));
    }

    #[test]
    fn slope_fit_recovers_exact_line() {
        let xs: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.6 * x).collect();
        assert!((fit_slope(&xs, &ys) + 0.6).abs() < 1e-12);
    }

    #[test]
    fn convergence_study_on_identical_solver_is_degenerate() {
        // Stationary constant datum on the periodic problem: every level
        // agrees exactly and the fit is skipped (NaN).
        let problem = ProblemConfig::named("traffic-ex2").with_constant_initial(30.0);
        let report =
            convergence_study(&problem, &[4, 5], 6, &[1e-3], 0.45).unwrap();
        for row in &report.errors {
            for e in row {
                assert!(e.l1 < 1e-12, "unexpected error {}", e.l1);
            }
        }
        assert!(report.alpha_l1.is_nan());
    }

    #[test]
    fn convergence_of_smooth_solution_is_at_least_first_order() {
        // Smooth solution staying above the diffusion breakpoints (the
        // heat-like regime): the scheme is formally higher order there and
        // the fitted L1 slope clears 1.
        let problem = ProblemConfig {
            name: "traffic-ex2".into(),
            initial: Some(crate::config::InitialConfig::Sine {
                mean: 120.0,
                amplitude: 30.0,
                k: 0.2,
            }),
            custom: None,
        };
        let report = convergence_study(&problem, &[5, 6, 7], 9, &[0.02], 0.4).unwrap();
        assert!(
            report.alpha_l1 >= 1.0,
            "smooth-problem alpha_l1 = {}",
            report.alpha_l1
        );
    }

    #[test]
    fn table_run_fv_against_itself() {
        // Degenerate matrix: the FV config compared with a reference at the
        // same level reports zero errors, V = 1 and mu = 1.
        let mut cfg = RunConfig::new(ProblemConfig::named("traffic-ex2"), 5, RunMode::Fv, 2e-3);
        cfg.snapshot_times = vec![2e-3];
        cfg.time.cfl0 = Some(0.4);
        let report = table_run(std::slice::from_ref(&cfg), &cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert_eq!(row.errors.l1, 0.0);
        assert_eq!(row.errors.linf, 0.0);
        assert_eq!(row.v, 1.0);
        assert_eq!(row.mu, 1.0);
    }

    #[test]
    fn projection_of_reference_uses_pairwise_means() {
        let spec = make_sedimentation_example1();
        let mut fine = UniformField::constant(&spec, 5, 0.0);
        for j in 0..fine.cells() {
            fine.values[j] = j as f64;
        }
        let coarse = fine.project_to(3);
        assert_eq!(coarse.cells(), 8);
        // Mean of 4 consecutive integers.
        assert!((coarse.values[0] - 1.5).abs() < 1e-14);
        assert!((coarse.values[7] - 29.5).abs() < 1e-14);
    }
}
