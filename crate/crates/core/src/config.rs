//! Run configuration: problem selection, the structured-text config file
//! and the JSON manifest.
//!
//! Config files are plain `key = value` lines grouped in `[section]`
//! headers (`#` starts a comment):
//!
//! ```text
//! [problem]
//! name = sedimentation-ex1
//!
//! [run]
//! mode = mr
//! level = 11
//! t_final = 12000
//! snapshots = 2000 9000 12000
//!
//! [tolerance]
//! epsilon = 5.16e-5
//!
//! [time]
//! lambda = 20
//! ```
//!
//! CLI flags override file values. The resolved configuration is emitted
//! next to the run outputs as `run.json` and parses back to an identical
//! [`RunConfig`].

use crate::driver::{RunConfig, RunMode, TimeConfig, ToleranceSpec};
use crate::model::{
    make_sedimentation_example1, make_sedimentation_rough, make_traffic_example2, BoundaryKind,
    ProblemBuilder, ProblemSpec,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Initial-datum override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialConfig {
    Constant { value: f64 },
    /// Piecewise constant: `values[k]` on `(edges[k-1], edges[k])` with
    /// implicit outer edges at the domain boundary.
    Steps { values: Vec<f64>, edges: Vec<f64> },
    /// `mean + amplitude · sin(k π x)`.
    Sine { mean: f64, amplitude: f64, k: f64 },
}

impl InitialConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut it = text.split_whitespace();
        match it.next() {
            Some("constant") => {
                let v = parse_f64(it.next().ok_or_else(|| bad("constant needs a value"))?)?;
                Ok(InitialConfig::Constant { value: v })
            }
            Some("steps") => {
                let nums: Vec<f64> = it.map(parse_f64).collect::<Result<_>>()?;
                if nums.len().is_multiple_of(2) || nums.is_empty() {
                    return Err(bad("steps needs v0 x1 v1 x2 v2 …"));
                }
                let mut values = vec![nums[0]];
                let mut edges = Vec::new();
                for pair in nums[1..].chunks(2) {
                    edges.push(pair[0]);
                    values.push(pair[1]);
                }
                Ok(InitialConfig::Steps { values, edges })
            }
            Some("sine") => {
                let nums: Vec<f64> = it.map(parse_f64).collect::<Result<_>>()?;
                if nums.len() != 3 {
                    return Err(bad("sine needs mean amplitude k"));
                }
                Ok(InitialConfig::Sine { mean: nums[0], amplitude: nums[1], k: nums[2] })
            }
            other => Err(bad(&format!("unknown initial datum {other:?}"))),
        }
    }

    fn unparse(&self) -> String {
        match self {
            InitialConfig::Constant { value } => format!("constant {value}"),
            InitialConfig::Steps { values, edges } => {
                let mut s = format!("steps {}", values[0]);
                for (e, v) in edges.iter().zip(values[1..].iter()) {
                    s.push_str(&format!(" {e} {v}"));
                }
                s
            }
            InitialConfig::Sine { mean, amplitude, k } => {
                format!("sine {mean} {amplitude} {k}")
            }
        }
    }
}

/// A config-defined problem: polynomial or tabulated model functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomProblem {
    pub u_max: f64,
    pub domain: (f64, f64),
    pub boundary: BoundaryKind,
    /// Ascending coefficients of `b(u)` (used on `[0, u_max]`).
    #[serde(default)]
    pub flux_poly: Vec<f64>,
    /// Piecewise-linear `b` as `(u, b)` knots; overrides `flux_poly`.
    #[serde(default)]
    pub flux_table: Vec<(f64, f64)>,
    /// Ascending coefficients of `a(u)` above the gel point `u_c`.
    #[serde(default)]
    pub diffusion_poly: Vec<f64>,
    /// Piecewise-linear `A` as `(u, A)` knots; overrides `diffusion_poly`.
    #[serde(default)]
    pub a_table: Vec<(f64, f64)>,
    #[serde(default)]
    pub u_c: f64,
}

fn poly_eval(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
}

fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

fn poly_integral(coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    out.extend(coeffs.iter().enumerate().map(|(k, &c)| c / (k + 1) as f64));
    out
}

fn table_eval(table: &[(f64, f64)], u: f64) -> f64 {
    if table.is_empty() {
        return 0.0;
    }
    if u <= table[0].0 {
        return table[0].1;
    }
    for w in table.windows(2) {
        if u <= w[1].0 {
            let s = (u - w[0].0) / (w[1].0 - w[0].0);
            return w[0].1 * (1.0 - s) + w[1].1 * s;
        }
    }
    table[table.len() - 1].1
}

fn table_slope(table: &[(f64, f64)], u: f64) -> f64 {
    if table.len() < 2 {
        return 0.0;
    }
    for w in table.windows(2) {
        if u <= w[1].0 {
            return (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        }
    }
    let w = &table[table.len() - 2..];
    (w[1].1 - w[0].1) / (w[1].0 - w[0].0)
}

impl CustomProblem {
    fn build(&self, name: &str) -> Result<ProblemSpec> {
        if self.flux_poly.is_empty() && self.flux_table.is_empty() {
            return Err(bad("custom problem needs flux_poly or flux_table"));
        }
        let mut b = ProblemBuilder::new(name, self.u_max, self.domain, self.boundary);
        if !self.flux_table.is_empty() {
            let table = self.flux_table.clone();
            let table2 = table.clone();
            b = b.flux(move |u| table_eval(&table, u), move |u| table_slope(&table2, u));
        } else {
            let poly = self.flux_poly.clone();
            let dpoly = poly_derivative(&poly);
            b = b.flux(move |u| poly_eval(&poly, u), move |u| poly_eval(&dpoly, u));
        }
        if !self.a_table.is_empty() {
            let table = self.a_table.clone();
            let table2 = table.clone();
            b = b
                .diffusion(move |u| table_slope(&table, u).max(0.0))
                .integrated_diffusion(move |u| table_eval(&table2, u));
        } else {
            let u_c = self.u_c;
            let apoly = self.diffusion_poly.clone();
            let int = poly_integral(&apoly);
            let int_uc = poly_eval(&int, u_c);
            let apoly2 = apoly.clone();
            b = b
                .diffusion(move |u| if u > u_c { poly_eval(&apoly2, u) } else { 0.0 })
                .integrated_diffusion(move |u| {
                    if u > u_c {
                        poly_eval(&int, u) - int_uc
                    } else {
                        0.0
                    }
                })
                .breakpoint(u_c);
        }
        Ok(b.initial(|_| 0.0).build())
    }
}

/// Problem selection: a named preset or a custom definition, plus an
/// optional initial-datum override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomProblem>,
}

impl ProblemConfig {
    pub fn named(name: &str) -> Self {
        ProblemConfig { name: name.to_string(), initial: None, custom: None }
    }

    pub fn with_constant_initial(mut self, value: f64) -> Self {
        self.initial = Some(InitialConfig::Constant { value });
        self
    }

    /// Inviscid test problem (`a ≡ 0`): concave flux `b(u) = u(1-u)`.
    pub fn hyperbolic_test_problem() -> Self {
        ProblemConfig {
            name: "custom".into(),
            initial: Some(InitialConfig::Constant { value: 0.5 }),
            custom: Some(CustomProblem {
                u_max: 1.0,
                domain: (0.0, 1.0),
                boundary: BoundaryKind::Periodic,
                flux_poly: vec![0.0, 1.0, -1.0],
                flux_table: Vec::new(),
                diffusion_poly: Vec::new(),
                a_table: Vec::new(),
                u_c: 0.0,
            }),
        }
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        let spec = match self.name.as_str() {
            "sedimentation-ex1" => make_sedimentation_example1(),
            "sedimentation-rough" => make_sedimentation_rough(),
            "traffic-ex2" => make_traffic_example2(),
            "custom" => {
                let custom = self
                    .custom
                    .as_ref()
                    .ok_or_else(|| bad("problem 'custom' needs a custom definition"))?;
                custom.build("custom")?
            }
            other => {
                return Err(bad(&format!(
                    "unknown problem '{other}' (expected sedimentation-ex1, \
                     sedimentation-rough, traffic-ex2 or custom)"
                )))
            }
        };
        Ok(match &self.initial {
            None => spec,
            Some(InitialConfig::Constant { value }) => {
                let v = *value;
                spec.with_initial("constant", move |_| v)
                    .with_initial_mean(move |_, _| v)
            }
            Some(InitialConfig::Sine { mean, amplitude, k }) => {
                let (mean, amp, k) = (*mean, *amplitude, *k);
                let omega = k * std::f64::consts::PI;
                spec.with_initial("sine", move |x| mean + amp * (omega * x).sin())
                    .with_initial_mean(move |a, b| {
                        let prim = |x: f64| mean * x - amp / omega * (omega * x).cos();
                        (prim(b) - prim(a)) / (b - a)
                    })
            }
            Some(InitialConfig::Steps { values, edges }) => {
                let values = values.clone();
                let edges = edges.clone();
                let values2 = values.clone();
                let edges2 = edges.clone();
                let value_at = move |x: f64| {
                    let k = edges.iter().take_while(|&&e| x >= e).count();
                    values[k]
                };
                spec.with_initial("steps", value_at).with_initial_mean(move |a, b| {
                    // Exact mean of the piecewise-constant datum.
                    let mut mass = 0.0;
                    let mut lo = a;
                    for (k, &e) in edges2.iter().enumerate() {
                        if e <= a {
                            continue;
                        }
                        if e >= b {
                            break;
                        }
                        mass += values2[k] * (e - lo);
                        lo = e;
                    }
                    let k = edges2.iter().take_while(|&&e| lo >= e).count();
                    mass += values2[k] * (b - lo);
                    mass / (b - a)
                })
            }
        })
    }
}

// ---------------------------------------------------------------------------
// key = value config files
// ---------------------------------------------------------------------------

fn bad(msg: &str) -> Error {
    Error::Config(msg.to_string())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| bad(&format!("not a number: '{s}'")))
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut current = String::from("run");
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            current = line[1..line.len() - 1].trim().to_string();
            out.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(&format!("line {}: expected key = value", lineno + 1)))?;
        out.entry(current.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn parse_mode(s: &str) -> Result<RunMode> {
    match s.to_ascii_lowercase().as_str() {
        "fv" => Ok(RunMode::Fv),
        "fv-rkf" | "fv_rkf" | "fvrkf" => Ok(RunMode::FvRkf),
        "mr" => Ok(RunMode::Mr),
        "mr-rkf" | "mr_rkf" | "mrrkf" => Ok(RunMode::MrRkf),
        other => Err(bad(&format!("unknown mode '{other}'"))),
    }
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(parse_f64)
        .collect()
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let v = parse_f64_list(s)?;
    if v.len() != 2 {
        return Err(bad(&format!("expected two numbers, got '{s}'")));
    }
    Ok((v[0], v[1]))
}

fn parse_knots(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split_whitespace()
        .map(|tok| {
            let (a, b) = tok
                .split_once(':')
                .ok_or_else(|| bad(&format!("expected u:value knot, got '{tok}'")))?;
            Ok((parse_f64(a)?, parse_f64(b)?))
        })
        .collect()
}

/// Parse a configuration file's text into a [`RunConfig`].
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let sections = parse_sections(text)?;
    let empty = BTreeMap::new();
    let problem_sec = sections.get("problem").unwrap_or(&empty);
    let run_sec = sections.get("run").unwrap_or(&empty);
    let tol_sec = sections.get("tolerance").unwrap_or(&empty);
    let time_sec = sections.get("time").unwrap_or(&empty);

    let name = problem_sec
        .get("name")
        .cloned()
        .unwrap_or_else(|| "sedimentation-ex1".to_string());
    let initial = problem_sec
        .get("initial")
        .map(|s| InitialConfig::parse(s))
        .transpose()?;
    let custom = if name == "custom" {
        Some(CustomProblem {
            u_max: parse_f64(problem_sec.get("u_max").ok_or_else(|| bad("custom needs u_max"))?)?,
            domain: parse_pair(
                problem_sec.get("domain").ok_or_else(|| bad("custom needs domain"))?,
            )?,
            boundary: match problem_sec.get("boundary").map(String::as_str) {
                Some("periodic") => BoundaryKind::Periodic,
                Some("zero-flux") | None => BoundaryKind::ZeroFlux,
                Some(other) => return Err(bad(&format!("unknown boundary '{other}'"))),
            },
            flux_poly: problem_sec
                .get("flux_poly")
                .map(|s| parse_f64_list(s))
                .transpose()?
                .unwrap_or_default(),
            flux_table: problem_sec
                .get("flux_table")
                .map(|s| parse_knots(s))
                .transpose()?
                .unwrap_or_default(),
            diffusion_poly: problem_sec
                .get("diffusion_poly")
                .map(|s| parse_f64_list(s))
                .transpose()?
                .unwrap_or_default(),
            a_table: problem_sec
                .get("a_table")
                .map(|s| parse_knots(s))
                .transpose()?
                .unwrap_or_default(),
            u_c: problem_sec.get("u_c").map(|s| parse_f64(s)).transpose()?.unwrap_or(0.0),
        })
    } else {
        None
    };

    let mode = parse_mode(run_sec.get("mode").map(String::as_str).unwrap_or("fv"))?;
    let level: u32 = run_sec
        .get("level")
        .map(|s| s.parse().map_err(|_| bad("level must be an integer")))
        .transpose()?
        .unwrap_or(8);
    let t_final = run_sec
        .get("t_final")
        .map(|s| parse_f64(s))
        .transpose()?
        .ok_or_else(|| bad("run.t_final is required"))?;
    let snapshot_times = run_sec
        .get("snapshots")
        .map(|s| parse_f64_list(s))
        .transpose()?
        .unwrap_or_default();
    let theta = run_sec.get("theta").map(|s| parse_f64(s)).transpose()?.unwrap_or(0.5);

    let tolerance = match (tol_sec.get("epsilon"), tol_sec.get("factor_c")) {
        (Some(e), None) => Some(ToleranceSpec::Epsilon(parse_f64(e)?)),
        (None, Some(c)) => Some(ToleranceSpec::FactorC {
            c: parse_f64(c)?,
            alpha: tol_sec.get("alpha").map(|s| parse_f64(s)).transpose()?.unwrap_or(0.6),
        }),
        (None, None) => None,
        (Some(_), Some(_)) => {
            return Err(bad("give either tolerance.epsilon or tolerance.factor_c, not both"))
        }
    };

    let mut time = TimeConfig::default();
    if let Some(v) = time_sec.get("dt0") {
        time.dt0 = Some(parse_f64(v)?);
    }
    if let Some(v) = time_sec.get("cfl0") {
        time.cfl0 = Some(parse_f64(v)?);
    }
    if let Some(v) = time_sec.get("lambda") {
        time.lambda = Some(parse_f64(v)?);
    }
    if let Some(v) = time_sec.get("delta_desired") {
        time.delta_desired = parse_f64(v)?;
    }
    if let Some(v) = time_sec.get("s0") {
        time.s0 = parse_f64(v)?;
    }
    if let Some(v) = time_sec.get("s_min") {
        time.s_min = parse_f64(v)?;
    }
    if let Some(v) = time_sec.get("cfl_ceiling") {
        time.cfl_ceiling = parse_f64(v)?;
    }

    let config = RunConfig {
        problem: ProblemConfig { name, initial, custom },
        level,
        mode,
        t_final,
        snapshot_times,
        tolerance,
        time,
        theta,
        check_grading: false,
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Render a [`RunConfig`] back into the config-file format.
pub fn unparse_config(config: &RunConfig) -> String {
    let mut s = String::new();
    s.push_str("[problem]\n");
    s.push_str(&format!("name = {}\n", config.problem.name));
    if let Some(init) = &config.problem.initial {
        s.push_str(&format!("initial = {}\n", init.unparse()));
    }
    if let Some(c) = &config.problem.custom {
        s.push_str(&format!("u_max = {}\n", c.u_max));
        s.push_str(&format!("domain = {} {}\n", c.domain.0, c.domain.1));
        s.push_str(&format!("boundary = {}\n", c.boundary));
        if !c.flux_poly.is_empty() {
            s.push_str(&format!("flux_poly = {}\n", join_f64(&c.flux_poly)));
        }
        if !c.flux_table.is_empty() {
            s.push_str(&format!("flux_table = {}\n", join_knots(&c.flux_table)));
        }
        if !c.diffusion_poly.is_empty() {
            s.push_str(&format!("diffusion_poly = {}\n", join_f64(&c.diffusion_poly)));
        }
        if !c.a_table.is_empty() {
            s.push_str(&format!("a_table = {}\n", join_knots(&c.a_table)));
        }
        s.push_str(&format!("u_c = {}\n", c.u_c));
    }
    s.push_str("\n[run]\n");
    s.push_str(&format!("mode = {}\n", mode_str(config.mode)));
    s.push_str(&format!("level = {}\n", config.level));
    s.push_str(&format!("t_final = {}\n", config.t_final));
    if !config.snapshot_times.is_empty() {
        s.push_str(&format!("snapshots = {}\n", join_f64(&config.snapshot_times)));
    }
    s.push_str(&format!("theta = {}\n", config.theta));
    match config.tolerance {
        Some(ToleranceSpec::Epsilon(e)) => {
            s.push_str(&format!("\n[tolerance]\nepsilon = {e}\n"));
        }
        Some(ToleranceSpec::FactorC { c, alpha }) => {
            s.push_str(&format!("\n[tolerance]\nfactor_c = {c}\nalpha = {alpha}\n"));
        }
        None => {}
    }
    s.push_str("\n[time]\n");
    if let Some(v) = config.time.dt0 {
        s.push_str(&format!("dt0 = {v}\n"));
    }
    if let Some(v) = config.time.cfl0 {
        s.push_str(&format!("cfl0 = {v}\n"));
    }
    if let Some(v) = config.time.lambda {
        s.push_str(&format!("lambda = {v}\n"));
    }
    s.push_str(&format!("delta_desired = {}\n", config.time.delta_desired));
    s.push_str(&format!("s0 = {}\n", config.time.s0));
    s.push_str(&format!("s_min = {}\n", config.time.s_min));
    s.push_str(&format!("cfl_ceiling = {}\n", config.time.cfl_ceiling));
    s
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn join_knots(knots: &[(f64, f64)]) -> String {
    knots.iter().map(|(u, v)| format!("{u}:{v}")).collect::<Vec<_>>().join(" ")
}

pub fn mode_str(mode: RunMode) -> &'static str {
    match mode {
        RunMode::Fv => "fv",
        RunMode::FvRkf => "fv-rkf",
        RunMode::Mr => "mr",
        RunMode::MrRkf => "mr-rkf",
    }
}
