//! Simulation driver: runs a configured problem in one of four modes and
//! collects snapshots, step-size traces and compression metrics.
//!
//! Modes:
//!
//! * `FV` — finite volumes on the uniform finest grid, fixed time step;
//! * `FV_RKF` — same grid, embedded RK3(2) step control;
//! * `MR` — fully adaptive multiresolution tree, fixed time step;
//! * `MR_RKF` — adaptive tree and adaptive time step.
//!
//! The multiresolution threshold is either given explicitly (`ε_R`) or
//! derived from a factor `C` and the scheme's convergence order α through
//! the reference tolerance
//!
//! ```text
//! ε_R = C · 2^{-(α+1)L} / (|I| ‖b'‖_∞ + 2^L ‖a‖_∞),
//! ```
//!
//! which balances the accumulated thresholding error against the
//! discretization error of the finest grid. Level tolerances scale as
//! `ε_l = 2^{l-L} ε_R`.

use crate::config::ProblemConfig;
use crate::cputime::CpuStopwatch;
use crate::fv::{cfl_number, divergence_theta, dt_from_cfl, EoFlux, UniformField};
use crate::model::ProblemSpec;
use crate::rk::{rk3_step, rkf_step, RkfController};
use crate::tree::{LeafRow, MrTree};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunMode {
    Fv,
    FvRkf,
    Mr,
    MrRkf,
}

impl RunMode {
    pub fn is_adaptive_mesh(self) -> bool {
        matches!(self, RunMode::Mr | RunMode::MrRkf)
    }

    pub fn is_adaptive_time(self) -> bool {
        matches!(self, RunMode::FvRkf | RunMode::MrRkf)
    }

    pub fn label(self) -> &'static str {
        match self {
            RunMode::Fv => "FV",
            RunMode::FvRkf => "FV+RKF",
            RunMode::Mr => "MR",
            RunMode::MrRkf => "MR+RKF",
        }
    }
}

/// How the multiresolution threshold is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ToleranceSpec {
    /// Explicit reference tolerance ε_R.
    Epsilon(f64),
    /// Factor C with convergence order α, through [`reference_tolerance`].
    FactorC { c: f64, alpha: f64 },
}

/// Time-stepping parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeConfig {
    /// Explicit initial (or fixed) step.
    pub dt0: Option<f64>,
    /// Initial (or fixed) step via a CFL number on the finest grid.
    pub cfl0: Option<f64>,
    /// Fixed step as `λ · h_L` (expert override: no CFL check).
    pub lambda: Option<f64>,
    /// Target truncation error per step for the RKF controller.
    pub delta_desired: f64,
    pub s0: f64,
    pub s_min: f64,
    /// Hard CFL ceiling for the adaptive controller.
    pub cfl_ceiling: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            dt0: None,
            cfl0: None,
            lambda: None,
            delta_desired: 1e-3,
            s0: 0.1,
            s_min: 0.01,
            cfl_ceiling: 1.0,
        }
    }
}

/// A complete run description. This is the unit the configuration file,
/// the CLI overrides and the `run.json` manifest all mirror.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    /// Maximum multiresolution level L; the finest grid has 2^L cells.
    pub level: u32,
    pub mode: RunMode,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    pub tolerance: Option<ToleranceSpec>,
    pub time: TimeConfig,
    /// MUSCL limiter parameter θ.
    pub theta: f64,
    /// Assert the tree grading invariant after every update (debugging and
    /// acceptance runs; off by default).
    #[serde(default)]
    pub check_grading: bool,
}

impl RunConfig {
    pub fn new(problem: ProblemConfig, level: u32, mode: RunMode, t_final: f64) -> Self {
        RunConfig {
            problem,
            level,
            mode,
            t_final,
            snapshot_times: Vec::new(),
            tolerance: None,
            time: TimeConfig::default(),
            theta: 0.5,
            check_grading: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=20).contains(&self.level) {
            return Err(Error::Config(format!("level {} outside [1, 20]", self.level)));
        }
        if !self.t_final.is_finite() || self.t_final <= 0.0 {
            return Err(Error::Config("t_final must be positive".into()));
        }
        let mut prev = 0.0;
        for &t in &self.snapshot_times {
            if t < 0.0 || t > self.t_final + 1e-12 * self.t_final {
                return Err(Error::Config(format!(
                    "snapshot time {t} outside [0, {}]",
                    self.t_final
                )));
            }
            if t < prev {
                return Err(Error::Config("snapshot times must be sorted".into()));
            }
            prev = t;
        }
        if self.mode.is_adaptive_mesh() && self.tolerance.is_none() {
            return Err(Error::Config(
                "multiresolution modes need either epsilon or factor C".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.theta) {
            return Err(Error::Config("theta must lie in [0, 2]".into()));
        }
        Ok(())
    }
}

/// Reference tolerance derived from the factor C.
#[derive(Clone, Copy, Debug)]
pub struct ReferenceTolerance {
    pub epsilon_r: f64,
    pub c: f64,
    pub alpha: f64,
    pub level: u32,
    pub domain_size: f64,
    pub lipschitz_b: f64,
    pub sup_a: f64,
}

/// `ε_R = C 2^{-(α+1)L} / (|I| ‖b'‖_∞ + 2^L ‖a‖_∞)` with the numerically
/// computed suprema of the problem.
pub fn reference_tolerance(c: f64, alpha: f64, level: u32, spec: &ProblemSpec) -> ReferenceTolerance {
    assert!(c > 0.0 && alpha > 0.0);
    let size = spec.domain_length();
    let denom = size * spec.lipschitz_b + 2f64.powi(level as i32) * spec.sup_a;
    let epsilon_r = c * 2f64.powf(-(alpha + 1.0) * level as f64) / denom;
    ReferenceTolerance {
        epsilon_r,
        c,
        alpha,
        level,
        domain_size: size,
        lipschitz_b: spec.lipschitz_b,
        sup_a: spec.sup_a,
    }
}

/// A captured solution state.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub field: UniformField,
    /// Compression rate at capture time (1 for uniform-grid modes).
    pub mu: f64,
    /// Leaf rows `(level, index, center_x, dx, value)`; `None` in FV modes.
    pub leaves: Option<Vec<LeafRow>>,
}

#[derive(Clone, Copy, Debug)]
pub struct DtSample {
    pub step: u64,
    pub t: f64,
    pub dt: f64,
    pub delta: f64,
}

/// Everything a finished run reports.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub mode: RunMode,
    pub level: u32,
    pub epsilon_r: f64,
    pub steps: u64,
    /// CPU seconds of the main loop (snapshot decoding excluded).
    pub cpu_seconds: f64,
    pub snapshots: Vec<Snapshot>,
    pub dt_trace: Vec<DtSample>,
    /// Controller step size at the end of the run (fixed step in fixed modes).
    pub final_dt: f64,
    pub initial_mass: f64,
    pub final_mass: f64,
    /// Mean compression rate over the recorded trace (1 in FV modes).
    pub mu_mean: f64,
}

impl RunReport {
    /// Relative mass drift over the whole run.
    pub fn mass_drift(&self) -> f64 {
        (self.final_mass - self.initial_mass).abs() / self.initial_mass.abs().max(1e-300)
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    /// Relative spread (max-min over mean) of the step size across the last
    /// `fraction` of recorded steps.
    pub fn dt_oscillation(&self, fraction: f64) -> f64 {
        let n = self.dt_trace.len();
        if n == 0 {
            return 0.0;
        }
        let start = ((1.0 - fraction) * n as f64) as usize;
        let tail = &self.dt_trace[start.min(n - 1)..];
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for s in tail {
            lo = lo.min(s.dt);
            hi = hi.max(s.dt);
            sum += s.dt;
        }
        (hi - lo) / (sum / tail.len() as f64)
    }
}

fn resolve_epsilon(config: &RunConfig, spec: &ProblemSpec) -> f64 {
    match config.tolerance {
        Some(ToleranceSpec::Epsilon(e)) => e,
        Some(ToleranceSpec::FactorC { c, alpha }) => {
            reference_tolerance(c, alpha, config.level, spec).epsilon_r
        }
        None => 0.0,
    }
}

fn fixed_dt(config: &RunConfig, spec: &ProblemSpec, h: f64) -> Result<f64> {
    if let Some(lambda) = config.time.lambda {
        // Expert override Δt = λ h_L; the formal CFL number with the global
        // suprema may exceed 1/2 here, stability rests on the problem's
        // degeneracy and the adaptive grid.
        return Ok(lambda * h);
    }
    let dt = match (config.time.dt0, config.time.cfl0) {
        (Some(dt0), _) => dt0,
        (None, Some(cfl)) => dt_from_cfl(spec, h, cfl),
        (None, None) => dt_from_cfl(spec, h, 0.5),
    };
    let cfl = cfl_number(spec, h, dt);
    if cfl > 0.5 * (1.0 + 1e-9) {
        return Err(Error::CflViolation { cfl, limit: 0.5 });
    }
    Ok(dt)
}

fn initial_adaptive_dt(config: &RunConfig, spec: &ProblemSpec, h: f64) -> f64 {
    if let Some(dt0) = config.time.dt0 {
        dt0
    } else if let Some(lambda) = config.time.lambda {
        lambda * h
    } else {
        dt_from_cfl(spec, h, config.time.cfl0.unwrap_or(0.5))
    }
}

/// Events the main loop must land on exactly: snapshot times and `t_final`.
fn event_times(config: &RunConfig) -> Vec<f64> {
    let mut events = config.snapshot_times.clone();
    if events.last().is_none_or(|&t| t < config.t_final) {
        events.push(config.t_final);
    }
    events
}

const TRACE_CAP: usize = 200_000;

struct TraceRecorder {
    stride: u64,
    dt_trace: Vec<DtSample>,
    mu_sum: f64,
    mu_count: u64,
}

impl TraceRecorder {
    fn new(estimated_steps: f64) -> Self {
        let stride = (estimated_steps / TRACE_CAP as f64).ceil().max(1.0) as u64;
        TraceRecorder { stride, dt_trace: Vec::new(), mu_sum: 0.0, mu_count: 0 }
    }

    fn record(&mut self, step: u64, t: f64, dt: f64, delta: f64, mu: f64, force: bool) {
        self.mu_sum += mu;
        self.mu_count += 1;
        if force || step.is_multiple_of(self.stride) {
            self.dt_trace.push(DtSample { step, t, dt, delta });
        }
    }

    fn mu_mean(&self) -> f64 {
        if self.mu_count == 0 {
            1.0
        } else {
            self.mu_sum / self.mu_count as f64
        }
    }
}

/// Execute a run.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let spec = config.problem.build()?;
    match config.mode {
        RunMode::Fv | RunMode::FvRkf => run_uniform(config, &spec),
        RunMode::Mr | RunMode::MrRkf => run_adaptive(config, &spec),
    }
}

fn run_uniform(config: &RunConfig, spec: &ProblemSpec) -> Result<RunReport> {
    let eo = EoFlux::new(spec);
    let mut field = UniformField::from_initial(spec, config.level);
    let h = field.dx;
    let theta = config.theta;
    let adaptive = config.mode.is_adaptive_time();

    let mut controller = if adaptive {
        let dt0 = initial_adaptive_dt(config, spec, h);
        Some(
            RkfController::new(dt0, config.time.delta_desired)
                .with_limits(config.time.s0, config.time.s_min)
                .with_dt_max(dt_from_cfl(spec, h, config.time.cfl_ceiling)),
        )
    } else {
        None
    };
    let dt_fixed = if adaptive { 0.0 } else { fixed_dt(config, spec, h)? };

    let est_steps = config.t_final
        / if adaptive { controller.as_ref().unwrap().dt } else { dt_fixed };
    let mut rec = TraceRecorder::new(est_steps);
    let mut snapshots = Vec::new();
    let initial_mass = field.mass();
    let mut t = 0.0;
    let mut step: u64 = 0;
    let mut sw = CpuStopwatch::new();

    let spec_ref = spec;
    let mut divergence = |t: f64, u: &[f64]| -> Vec<f64> {
        let probe = UniformField {
            values: u.to_vec(),
            level: config.level,
            dx: h,
            x_origin: field.x_origin,
        };
        divergence_theta(spec_ref, &eo, &probe, theta, t)
    };

    sw.start();
    for &event in &event_times(config) {
        if event <= 0.0 {
            sw.pause();
            snapshots.push(capture_uniform(&field, event));
            sw.start();
            continue;
        }
        while t < event * (1.0 - 1e-14) {
            let remaining = event - t;
            let (dt, landing) = match &controller {
                Some(ctl) => {
                    if ctl.dt >= remaining {
                        (remaining, true)
                    } else {
                        (ctl.dt, false)
                    }
                }
                None => (dt_fixed.min(remaining), dt_fixed >= remaining),
            };
            let mut delta = 0.0;
            let next = if landing || !adaptive {
                // Landing steps bypass the controller so a shortened step
                // cannot pollute the step-size trace.
                rk3_step(&mut divergence, &field.values, dt, t)
            } else {
                let ctl = controller.as_mut().unwrap();
                let (next, d) = rkf_step(&mut divergence, &field.values, ctl, t);
                delta = d;
                next
            };
            field.values = next;
            step += 1;
            t = if landing { event } else { t + dt };
            if !field.all_finite() {
                return Err(Error::NonFinite {
                    context: format!("{} step {step}", config.mode.label()),
                    t,
                });
            }
            let dt_now = controller.as_ref().map_or(dt_fixed, |c| c.dt);
            rec.record(step, t, dt_now, delta, 1.0, false);
        }
        if config.snapshot_times.iter().any(|&s| (s - event).abs() < 1e-12 * event.max(1.0))
            || (event - config.t_final).abs() < 1e-12 * config.t_final
        {
            sw.pause();
            snapshots.push(capture_uniform(&field, event));
            sw.start();
        }
    }
    sw.pause();

    let final_dt = controller.as_ref().map_or(dt_fixed, |c| c.dt);
    if let Some(last) = rec.dt_trace.last().copied() {
        if last.step != step {
            rec.dt_trace.push(DtSample { step, t, dt: final_dt, delta: 0.0 });
        }
    }
    Ok(RunReport {
        mode: config.mode,
        level: config.level,
        epsilon_r: 0.0,
        steps: step,
        cpu_seconds: sw.seconds(),
        snapshots,
        dt_trace: std::mem::take(&mut rec.dt_trace),
        final_dt,
        initial_mass,
        final_mass: field.mass(),
        mu_mean: 1.0,
    })
}

fn capture_uniform(field: &UniformField, t: f64) -> Snapshot {
    Snapshot { t, field: field.clone(), mu: 1.0, leaves: None }
}

fn run_adaptive(config: &RunConfig, spec: &ProblemSpec) -> Result<RunReport> {
    let eo = EoFlux::new(spec);
    let epsilon_r = resolve_epsilon(config, spec);
    // Details are thresholded relative to the solution scale: the tree
    // compares |d| against ε_l · u_max. For a unit-scale problem the two
    // readings coincide; for the traffic problem (u_max = 220) an absolute
    // reading would make the published tolerances ~10^2 too strict to
    // coarsen anything.
    let mut tree = MrTree::from_initial(spec, config.level, epsilon_r * spec.u_max);
    let h = tree.dx_at(config.level);
    let theta = config.theta;
    let adaptive = config.mode.is_adaptive_time();

    let mut controller = if adaptive {
        let dt0 = initial_adaptive_dt(config, spec, h);
        Some(
            RkfController::new(dt0, config.time.delta_desired)
                .with_limits(config.time.s0, config.time.s_min)
                .with_dt_max(dt_from_cfl(spec, h, config.time.cfl_ceiling)),
        )
    } else {
        None
    };
    let dt_fixed = if adaptive { 0.0 } else { fixed_dt(config, spec, h)? };

    let est_steps = config.t_final
        / if adaptive { controller.as_ref().unwrap().dt } else { dt_fixed };
    let mut rec = TraceRecorder::new(est_steps);
    let mut snapshots = Vec::new();
    let initial_mass = tree.mass();
    let mut t = 0.0;
    let mut step: u64 = 0;
    let mut sw = CpuStopwatch::new();

    sw.start();
    for &event in &event_times(config) {
        if event <= 0.0 {
            sw.pause();
            snapshots.push(capture_tree(&tree, event));
            sw.start();
            continue;
        }
        while t < event * (1.0 - 1e-14) {
            tree.ensure_stencils();
            if config.check_grading {
                tree.assert_graded()?;
            }
            let leaves = tree.leaves();
            let state = tree.leaf_values(&leaves);

            let remaining = event - t;
            let (dt, landing) = match &controller {
                Some(ctl) => {
                    if ctl.dt >= remaining {
                        (remaining, true)
                    } else {
                        (ctl.dt, false)
                    }
                }
                None => (dt_fixed.min(remaining), dt_fixed >= remaining),
            };

            let mut delta = 0.0;
            {
                let tree_ref = &mut tree;
                let leaves_ref = &leaves;
                let mut divergence = |tt: f64, u: &[f64]| -> Vec<f64> {
                    tree_ref.set_leaf_values(leaves_ref, u);
                    tree_ref.sync_from_leaves();
                    tree_ref
                        .leaf_divergence(spec, &eo, theta, leaves_ref, tt)
                        .expect("stencils ensured before the step")
                };
                let next = if landing || !adaptive {
                    rk3_step(&mut divergence, &state, dt, t)
                } else {
                    let ctl = controller.as_mut().unwrap();
                    let (next, d) = rkf_step(&mut divergence, &state, ctl, t);
                    delta = d;
                    next
                };
                tree.set_leaf_values(&leaves, &next);
            }
            step += 1;
            t = if landing { event } else { t + dt };
            if !tree.all_leaves_finite() {
                return Err(Error::NonFinite {
                    context: format!("{} step {step}", config.mode.label()),
                    t,
                });
            }
            tree.update_tree();
            if config.check_grading {
                tree.ensure_stencils();
                tree.assert_graded()?;
            }
            let dt_now = controller.as_ref().map_or(dt_fixed, |c| c.dt);
            rec.record(step, t, dt_now, delta, tree.compression_rate(), false);
        }
        if config.snapshot_times.iter().any(|&s| (s - event).abs() < 1e-12 * event.max(1.0))
            || (event - config.t_final).abs() < 1e-12 * config.t_final
        {
            sw.pause();
            snapshots.push(capture_tree(&tree, event));
            sw.start();
        }
    }
    sw.pause();

    let final_dt = controller.as_ref().map_or(dt_fixed, |c| c.dt);
    if let Some(last) = rec.dt_trace.last().copied() {
        if last.step != step {
            rec.dt_trace.push(DtSample { step, t, dt: final_dt, delta: 0.0 });
        }
    }
    let mu_mean = rec.mu_mean();
    Ok(RunReport {
        mode: config.mode,
        level: config.level,
        epsilon_r,
        steps: step,
        cpu_seconds: sw.seconds(),
        snapshots,
        dt_trace: std::mem::take(&mut rec.dt_trace),
        final_dt,
        initial_mass,
        final_mass: tree.mass(),
        mu_mean,
    })
}

fn capture_tree(tree: &MrTree, t: f64) -> Snapshot {
    Snapshot {
        t,
        field: tree.decode(),
        mu: tree.compression_rate(),
        leaves: Some(tree.leaf_dump()),
    }
}
