//! Continuous problem definitions.
//!
//! The solver targets 1-D strongly degenerate parabolic equations
//!
//! ```text
//! u_t + b(u)_x = A(u)_xx,      A(u) = ∫_0^u a(s) ds,
//! ```
//!
//! where the convective flux `b` is Lipschitz and vanishes outside
//! `(0, u_max)`, and the diffusion coefficient `a` is bounded, non-negative
//! and may vanish on whole solution intervals (typically `[0, u_c]` for a
//! critical value `u_c`). Two initial-boundary value problems are supported:
//! zero-flux boundaries (batch sedimentation in a closed column) and periodic
//! boundaries (traffic on a circular road).
//!
//! Everything the discrete layers need is packaged in [`ProblemSpec`]:
//! pure scalar functions plus numerically computed bounds `‖b'‖_∞` and
//! `‖a‖_∞` that enter the CFL condition and the threshold tolerance.

use crate::quad::adaptive_simpson;
use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

/// Boundary treatment of the initial-boundary value problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    /// Total flux `b(u) - A(u)_x` vanishes at both walls.
    ZeroFlux,
    /// `u(x_a, t) = u(x_b, t)`; indices wrap modulo the cell count.
    Periodic,
}

impl fmt::Display for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryKind::ZeroFlux => write!(f, "zero-flux"),
            BoundaryKind::Periodic => write!(f, "periodic"),
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type MeanFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type ModulatorFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Number of equispaced samples used for the numerically computed
/// suprema `‖b'‖_∞` and `‖a‖_∞`.
pub const SUP_SAMPLES: usize = 100_000;

/// A complete continuous problem: model functions, domain, boundary kind
/// and initial datum.
///
/// All evaluation methods clamp their argument to `[0, u_max]` so that
/// limiter over/undershoot at machine precision cannot leave the model's
/// domain of definition.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    flux: ScalarFn,
    flux_derivative: ScalarFn,
    diffusion: ScalarFn,
    integrated_diffusion: ScalarFn,
    initial: ScalarFn,
    initial_mean: Option<MeanFn>,
    flux_modulator: Option<ModulatorFn>,
    /// Maximum solution value; `b` vanishes outside `(0, u_max)`.
    pub u_max: f64,
    /// Spatial interval `[x_a, x_b]`.
    pub domain: (f64, f64),
    pub boundary: BoundaryKind,
    /// Sampled supremum of `|b'|` over `[0, u_max]`.
    pub lipschitz_b: f64,
    /// Sampled supremum of `a` over `[0, u_max]`.
    pub sup_a: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("u_max", &self.u_max)
            .field("domain", &self.domain)
            .field("boundary", &self.boundary)
            .field("lipschitz_b", &self.lipschitz_b)
            .field("sup_a", &self.sup_a)
            .finish()
    }
}

impl ProblemSpec {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Domain length `|I| = x_b - x_a`.
    pub fn domain_length(&self) -> f64 {
        self.domain.1 - self.domain.0
    }

    fn clamp(&self, u: f64) -> f64 {
        u.clamp(0.0, self.u_max)
    }

    /// Convective flux `b(u)`.
    pub fn flux(&self, u: f64) -> f64 {
        (self.flux)(self.clamp(u))
    }

    /// `b'(u)`, continuous one-sided values at kinks.
    pub fn flux_prime(&self, u: f64) -> f64 {
        (self.flux_derivative)(self.clamp(u))
    }

    /// Diffusion coefficient `a(u) = A'(u)`.
    pub fn diffusion(&self, u: f64) -> f64 {
        (self.diffusion)(self.clamp(u))
    }

    /// Integrated diffusion `A(u) = ∫_0^u a`, evaluated at `clamp(u, 0, u_max)`.
    pub fn integrated_diffusion(&self, u: f64) -> f64 {
        (self.integrated_diffusion)(self.clamp(u))
    }

    /// Initial datum `u_0(x)`.
    pub fn initial_datum(&self, x: f64) -> f64 {
        (self.initial)(x)
    }

    /// Mean of `u_0` over the cell `[a, b]`; exact where the preset supplies
    /// a closed-form primitive, adaptive quadrature otherwise.
    pub fn initial_cell_average(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return self.initial_datum(a);
        }
        match &self.initial_mean {
            Some(m) => m(a, b),
            None => {
                let f = &self.initial;
                adaptive_simpson(&|x| f(x), a, b, 1e-13 * (b - a).max(1.0)) / (b - a)
            }
        }
    }

    /// Interface flux modulator `S(x, t) ∈ [0, 1]`; identity when absent.
    pub fn modulator(&self, x: f64, t: f64) -> f64 {
        match &self.flux_modulator {
            Some(s) => s(x, t),
            None => 1.0,
        }
    }

    pub fn has_modulator(&self) -> bool {
        self.flux_modulator.is_some()
    }

    /// Replace the initial datum (the exact-mean closure is dropped unless
    /// a new one is supplied through [`ProblemSpec::with_initial_mean`]).
    pub fn with_initial<F>(mut self, name_suffix: &str, u0: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.name = format!("{}:{}", self.name, name_suffix);
        self.initial = Arc::new(u0);
        self.initial_mean = None;
        self
    }

    pub fn with_initial_mean<F>(mut self, mean: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.initial_mean = Some(Arc::new(mean));
        self
    }
}

/// Builder for [`ProblemSpec`]; presets and config-defined custom problems
/// both go through here so the sampled suprema are computed uniformly.
pub struct ProblemBuilder {
    name: String,
    u_max: f64,
    domain: (f64, f64),
    boundary: BoundaryKind,
    flux: ScalarFn,
    flux_derivative: ScalarFn,
    diffusion: ScalarFn,
    integrated_diffusion: Option<ScalarFn>,
    initial: ScalarFn,
    initial_mean: Option<MeanFn>,
    flux_modulator: Option<ModulatorFn>,
    /// Structural points of `a` (gel points, formula switches) that the
    /// fallback integral table must resolve exactly.
    breakpoints: Vec<f64>,
}

impl ProblemBuilder {
    pub fn new(name: &str, u_max: f64, domain: (f64, f64), boundary: BoundaryKind) -> Self {
        assert!(u_max > 0.0, "u_max must be positive");
        assert!(domain.1 > domain.0, "domain must have positive length");
        ProblemBuilder {
            name: name.to_string(),
            u_max,
            domain,
            boundary,
            flux: Arc::new(|_| 0.0),
            flux_derivative: Arc::new(|_| 0.0),
            diffusion: Arc::new(|_| 0.0),
            integrated_diffusion: None,
            initial: Arc::new(|_| 0.0),
            initial_mean: None,
            flux_modulator: None,
            breakpoints: Vec::new(),
        }
    }

    pub fn flux<F, G>(mut self, b: F, b_prime: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.flux = Arc::new(b);
        self.flux_derivative = Arc::new(b_prime);
        self
    }

    pub fn diffusion<F>(mut self, a: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.diffusion = Arc::new(a);
        self
    }

    /// Closed form for `A(u)`; when omitted, `A` is built once by adaptive
    /// quadrature of `a`, memoized on a 4096-interval lookup table with
    /// linear interpolation (breakpoints are forced onto the knot grid).
    pub fn integrated_diffusion<F>(mut self, big_a: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.integrated_diffusion = Some(Arc::new(big_a));
        self
    }

    pub fn initial<F>(mut self, u0: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.initial = Arc::new(u0);
        self
    }

    pub fn initial_mean<F>(mut self, mean: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.initial_mean = Some(Arc::new(mean));
        self
    }

    pub fn flux_modulator<F>(mut self, s: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.flux_modulator = Some(Arc::new(s));
        self
    }

    pub fn breakpoint(mut self, u: f64) -> Self {
        self.breakpoints.push(u);
        self
    }

    pub fn build(self) -> ProblemSpec {
        let u_max = self.u_max;
        let lipschitz_b = sampled_sup(|u| (self.flux_derivative)(u).abs(), u_max, &self.breakpoints);
        let sup_a = sampled_sup(|u| (self.diffusion)(u), u_max, &self.breakpoints);
        let integrated = match self.integrated_diffusion {
            Some(f) => f,
            None => {
                let table = CumulativeTable::build(self.diffusion.as_ref(), u_max, &self.breakpoints);
                Arc::new(move |u| table.eval(u)) as ScalarFn
            }
        };
        ProblemSpec {
            name: self.name,
            flux: self.flux,
            flux_derivative: self.flux_derivative,
            diffusion: self.diffusion,
            integrated_diffusion: integrated,
            initial: self.initial,
            initial_mean: self.initial_mean,
            flux_modulator: self.flux_modulator,
            u_max,
            domain: self.domain,
            boundary: self.boundary,
            lipschitz_b,
            sup_a,
        }
    }
}

fn sampled_sup<F: Fn(f64) -> f64>(f: F, u_max: f64, breakpoints: &[f64]) -> f64 {
    let n = SUP_SAMPLES;
    let mut sup = 0.0f64;
    for i in 0..n {
        let u = u_max * i as f64 / (n - 1) as f64;
        sup = sup.max(f(u));
    }
    // One-sided limits at structural points (gel points, formula switches)
    // so a jump cannot slip between two grid samples.
    let delta = u_max * 1e-12;
    for &b in breakpoints {
        for u in [b - delta, b, b + delta] {
            if (0.0..=u_max).contains(&u) {
                sup = sup.max(f(u));
            }
        }
    }
    sup
}

/// Cumulative integral of `a` on a uniform knot grid with forced breakpoints,
/// evaluated by linear interpolation.
struct CumulativeTable {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl CumulativeTable {
    const INTERVALS: usize = 4096;

    fn build(a: &(dyn Fn(f64) -> f64 + Send + Sync), u_max: f64, breakpoints: &[f64]) -> Self {
        let mut knots: Vec<f64> = (0..=Self::INTERVALS)
            .map(|i| u_max * i as f64 / Self::INTERVALS as f64)
            .collect();
        for &b in breakpoints {
            if b > 0.0 && b < u_max {
                knots.push(b);
            }
        }
        knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
        knots.dedup();
        let mut values = Vec::with_capacity(knots.len());
        let mut acc = 0.0;
        values.push(0.0);
        for w in knots.windows(2) {
            acc += adaptive_simpson(&|u| a(u), w[0], w[1], 1e-12 * u_max.max(1.0));
            values.push(acc);
        }
        CumulativeTable { knots, values }
    }

    fn eval(&self, u: f64) -> f64 {
        let n = self.knots.len();
        if u <= self.knots[0] {
            return self.values[0];
        }
        if u >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let idx = match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&u).unwrap())
        {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let (k0, k1) = (self.knots[idx], self.knots[idx + 1]);
        let w = (u - k0) / (k1 - k0);
        self.values[idx] * (1.0 - w) + self.values[idx + 1] * w
    }
}

/// Evaluate `A(clamp(u, 0, u_max))` for `spec`.
pub fn eval_integrated_diffusion(spec: &ProblemSpec, u: f64) -> f64 {
    spec.integrated_diffusion(u)
}

// ---------------------------------------------------------------------------
// Batch sedimentation preset
// ---------------------------------------------------------------------------

/// Parameters of the sedimentation-consolidation model.
///
/// Hindered settling flux `b(u) = v_inf · u · (u_max - u)^K` on `(0, u_max)`,
/// effective solid stress `σ_e(u) = σ_0 [(u/u_c)^β - 1]` for `u > u_c`
/// (zero at and below the gel point), and
/// `a(u) = b(u) σ_e'(u) / (Δρ · g · u)`.
#[derive(Clone, Copy, Debug)]
pub struct SedimentationParams {
    /// Settling velocity of a single particle (m/s).
    pub v_inf: f64,
    /// Hindrance exponent K.
    pub settling_exponent: u32,
    /// Maximum solids volume fraction.
    pub u_max: f64,
    /// Stress scale σ_0 (Pa).
    pub sigma0: f64,
    /// Gel point (critical concentration).
    pub u_c: f64,
    /// Stress exponent β.
    pub stress_exponent: u32,
    /// Solid-fluid density difference (kg/m³).
    pub delta_rho: f64,
    /// Gravity (m/s²).
    pub gravity: f64,
    /// Column depth H (m).
    pub depth: f64,
}

impl Default for SedimentationParams {
    fn default() -> Self {
        SedimentationParams {
            v_inf: 1.0e-4,
            settling_exponent: 5,
            u_max: 1.0,
            sigma0: 1.0,
            u_c: 0.1,
            stress_exponent: 6,
            delta_rho: 1660.0,
            gravity: 9.81,
            depth: 1.0,
        }
    }
}

impl SedimentationParams {
    /// `a(u) = c_a · u^(β-1) (u_max-u)^K` above the gel point with
    /// `c_a = v_inf σ_0 β / (Δρ g u_c^β)`.
    fn diffusion_scale(&self) -> f64 {
        self.v_inf * self.sigma0 * self.stress_exponent as f64
            / (self.delta_rho * self.gravity * self.u_c.powi(self.stress_exponent as i32))
    }
}

/// Batch sedimentation of an initially homogeneous suspension (`u_0 ≡ 0.08`)
/// in a closed column of depth 1 m; zero-flux boundaries.
pub fn make_sedimentation_example1() -> ProblemSpec {
    sedimentation_with_initial(SedimentationParams::default(), 0.08)
}

/// Sedimentation problem with a constant initial concentration.
pub fn sedimentation_with_initial(p: SedimentationParams, u0: f64) -> ProblemSpec {
    sedimentation_builder(p)
        .initial(move |_| u0)
        .initial_mean(move |_, _| u0)
        .build()
}

/// Sedimentation problem with the rough piecewise-constant datum used for
/// convergence-rate estimation: `u_0 = 0` on
/// `[0, 1/8] ∪ [5/8, 3/4] ∪ [7/8, 1]` and `u_0 = 0.1` otherwise.
pub fn make_sedimentation_rough() -> ProblemSpec {
    let plateaus: [(f64, f64); 2] = [(0.125, 0.625), (0.75, 0.875)];
    sedimentation_builder(SedimentationParams::default())
        .initial(move |x| {
            if plateaus.iter().any(|&(a, b)| x > a && x < b) {
                0.1
            } else {
                0.0
            }
        })
        .initial_mean(move |a, b| {
            let mut mass = 0.0;
            for &(lo, hi) in &plateaus {
                let overlap = (b.min(hi) - a.max(lo)).max(0.0);
                mass += 0.1 * overlap;
            }
            mass / (b - a)
        })
        .build()
}

fn sedimentation_builder(p: SedimentationParams) -> ProblemBuilder {
    let u_max = p.u_max;
    let v_inf = p.v_inf;
    let kk = p.settling_exponent as i32;
    let u_c = p.u_c;
    let beta = p.stress_exponent as i32;
    let c_a = p.diffusion_scale();

    // Closed-form primitive of u^(β-1) (u_max - u)^K for integer exponents:
    // expand (u_max - u)^K binomially and integrate term by term.
    let primitive = poly_primitive(beta - 1, kk, u_max);
    let a_of = move |u: f64| {
        if u > u_c && u < u_max {
            c_a * u.powi(beta - 1) * (u_max - u).powi(kk)
        } else {
            0.0
        }
    };
    let prim_at_uc = primitive(u_c);
    ProblemBuilder::new("sedimentation-ex1", u_max, (0.0, p.depth), BoundaryKind::ZeroFlux)
        .flux(
            move |u| {
                if u > 0.0 && u < u_max {
                    v_inf * u * (u_max - u).powi(kk)
                } else {
                    0.0
                }
            },
            move |u| {
                // Interior-limit values at the endpoints.
                if (0.0..=u_max).contains(&u) {
                    v_inf * (u_max - u).powi(kk - 1) * (u_max - (kk as f64 + 1.0) * u)
                } else {
                    0.0
                }
            },
        )
        .diffusion(a_of)
        .integrated_diffusion(move |u| {
            if u <= u_c {
                0.0
            } else {
                c_a * (primitive(u.min(u_max)) - prim_at_uc)
            }
        })
        .breakpoint(u_c)
}

/// Primitive of `u^m (u_max - u)^k` as a closure (coefficients prepared
/// once, Horner evaluation afterwards).
///
/// The symmetric case `m = k` expands around the midpoint,
/// `(u_max²/4 - y²)^k` with `y = u - u_max/2`, which avoids the severe
/// cancellation the plain binomial expansion suffers near `u_max`; other
/// exponent pairs use the binomial form.
fn poly_primitive(m: i32, k: i32, u_max: f64) -> impl Fn(f64) -> f64 + Send + Sync + Copy {
    const MAX_TERMS: usize = 24;
    assert!((k as usize) < MAX_TERMS, "flux exponent too large");
    let mut coeffs = [0.0f64; MAX_TERMS];
    let symmetric = m == k;
    let mut binom = 1.0f64;
    #[allow(clippy::needless_range_loop)]
    for j in 0..=k as usize {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        coeffs[j] = if symmetric {
            let q = 0.25 * u_max * u_max;
            sign * binom * q.powi(k - j as i32) / (2 * j + 1) as f64
        } else {
            sign * binom * u_max.powi(k - j as i32) / (m + j as i32 + 1) as f64
        };
        binom *= (k - j as i32) as f64 / (j + 1) as f64;
    }
    let terms = k as usize + 1;
    move |u: f64| {
        if symmetric {
            // P = y Σ c_j (y²)^j with y = u - u_max/2.
            let y = u - 0.5 * u_max;
            let y2 = y * y;
            let mut acc = 0.0;
            for j in (0..terms).rev() {
                acc = acc * y2 + coeffs[j];
            }
            acc * y
        } else {
            // P = u^(m+1) Σ c_j u^j.
            let mut acc = 0.0;
            for j in (0..terms).rev() {
                acc = acc * u + coeffs[j];
            }
            acc * u.powi(m + 1)
        }
    }
}

// ---------------------------------------------------------------------------
// Traffic preset
// ---------------------------------------------------------------------------

/// Parameters of the diffusively corrected kinematic traffic model with the
/// Dick-Greenberg velocity `V(u) = min{1, Θ ln(u_max/u)}`.
///
/// Drivers' anticipation activates above the critical density
/// `u_c = u_max e^(-1/Θ)`; the anticipation length is
/// `L_ã(u) = max{v(u)²/(2ã), L_min}` and
/// `a(u) = -u v_max V'(u) (L_ã(u) + τ v_max u V'(u))` above `u_c`.
#[derive(Clone, Copy, Debug)]
pub struct TrafficParams {
    /// Free speed (mph).
    pub v_max: f64,
    /// Jam density (cars/mi).
    pub u_max: f64,
    /// Dick-Greenberg constant Θ.
    pub theta: f64,
    /// Reaction time (h).
    pub tau: f64,
    /// Deceleration ã (mi/h²).
    pub a_tilde: f64,
    /// Minimal anticipation distance (mi).
    pub l_min: f64,
    /// Road length (mi).
    pub road_length: f64,
    /// Traffic light position (mi).
    pub light_position: f64,
}

/// 9.81 m/s² expressed in mi/h².
pub const GRAVITY_MI_H2: f64 = 9.81 * 3600.0 * 3600.0 / 1609.344;

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams {
            v_max: 70.0,
            u_max: 220.0,
            theta: E / 7.0,
            tau: 2.0 / 3600.0,
            a_tilde: 0.1 * GRAVITY_MI_H2,
            l_min: 0.05,
            road_length: 10.0,
            light_position: 5.0,
        }
    }
}

impl TrafficParams {
    /// Critical density `u_c = u_max e^(-1/Θ)`.
    pub fn u_c(&self) -> f64 {
        self.u_max * (-1.0 / self.theta).exp()
    }

    /// Density above which the braking distance falls below `L_min`.
    pub fn u_star(&self) -> f64 {
        let k = self.v_max * self.theta;
        let v_star = (2.0 * self.a_tilde * self.l_min).sqrt();
        self.u_max * (-v_star / k).exp()
    }
}

/// Is the traffic light red? Red phase: `t mod 1 h ∈ [0.125, 0.375]`.
pub fn traffic_light_is_red(t: f64) -> bool {
    let phase = t.rem_euclid(1.0);
    (0.125..=0.375).contains(&phase)
}

/// Traffic on a 10 mi circular road with a traffic light at 5 mi and the
/// smooth initial density `u_0(x) = 50 (1 + sin(0.4 π x))`; periodic
/// boundaries.
pub fn make_traffic_example2() -> ProblemSpec {
    let p = TrafficParams::default();
    let light_x = p.light_position;
    traffic_builder(p)
        .initial(|x| 50.0 * (1.0 + (0.4 * PI * x).sin()))
        .initial_mean(|a, b| {
            // Primitive: 50x - 50/(0.4π) cos(0.4πx).
            let prim = |x: f64| 50.0 * x - 50.0 / (0.4 * PI) * (0.4 * PI * x).cos();
            (prim(b) - prim(a)) / (b - a)
        })
        .flux_modulator(move |x, t| {
            if (x - light_x).abs() < 1e-9 && traffic_light_is_red(t) {
                0.0
            } else {
                1.0
            }
        })
        .build()
}

fn traffic_builder(p: TrafficParams) -> ProblemBuilder {
    let u_max = p.u_max;
    let v_max = p.v_max;
    let u_c = p.u_c();
    let u_star = p.u_star();
    // k = v_max Θ; for the Dick-Greenberg branch v(u) = k ln(u_max/u).
    let k = v_max * p.theta;
    let two_a = 2.0 * p.a_tilde;
    let kt = k * p.tau; // τ v_max Θ
    let l_min = p.l_min;

    let anticipation = move |u: f64| {
        let v = k * (u_max / u).ln();
        (v * v / two_a).max(l_min)
    };
    // a(u) = k (L_ã(u) - kτ) for u_c < u ≤ u_max.
    let a_of = move |u: f64| {
        if u > u_c && u <= u_max {
            k * (anticipation(u) - kt)
        } else {
            0.0
        }
    };

    // A(u) on (u_c, u*]: (k³/2ã) ∫ ln²(u_max/s) ds - k²τ (u - u_c), using
    // the primitive s (w² + 2w + 2) with w = ln(u_max/s).
    let g_of = move |s: f64| {
        let w = (u_max / s).ln();
        s * (w * w + 2.0 * w + 2.0)
    };
    let coeff = k * k * k / two_a;
    let lin = k * k * p.tau;
    let g_uc = g_of(u_c);
    let a_mid = move |u: f64| coeff * (g_of(u) - g_uc) - lin * (u - u_c);
    let a_at_star = a_mid(u_star);
    let tail_slope = k * (l_min - kt);
    let big_a = move |u: f64| {
        let u = u.min(u_max);
        if u <= u_c {
            0.0
        } else if u <= u_star {
            a_mid(u)
        } else {
            a_at_star + tail_slope * (u - u_star)
        }
    };

    ProblemBuilder::new(
        "traffic-ex2",
        u_max,
        (0.0, p.road_length),
        BoundaryKind::Periodic,
    )
    .flux(
        move |u| {
            if u <= 0.0 || u >= u_max {
                0.0
            } else if u <= u_c {
                v_max * u
            } else {
                k * u * (u_max / u).ln()
            }
        },
        move |u| {
            if u < 0.0 || u > u_max {
                0.0
            } else if u <= u_c {
                v_max
            } else {
                k * ((u_max / u).ln() - 1.0)
            }
        },
    )
    .diffusion(a_of)
    .integrated_diffusion(big_a)
    .breakpoint(u_c)
    .breakpoint(u_star)
}

// ---------------------------------------------------------------------------
// Initial-datum regularity
// ---------------------------------------------------------------------------

/// Discrete regularity functional of the initial datum:
/// `M(J) = Σ_m |A(u⁰_{m+1}) - 2 A(u⁰_m) + A(u⁰_{m-1})| / Δx`
/// over the cell averages `u⁰` on a `J`-cell grid.
pub fn regularity_functional(spec: &ProblemSpec, j_cells: usize) -> f64 {
    let (xa, xb) = spec.domain;
    let dx = (xb - xa) / j_cells as f64;
    let averages: Vec<f64> = (0..j_cells)
        .map(|j| {
            let a = xa + j as f64 * dx;
            spec.initial_cell_average(a, a + dx)
        })
        .collect();
    let a_vals: Vec<f64> = averages
        .iter()
        .map(|&u| spec.integrated_diffusion(u))
        .collect();
    let mut sum = 0.0;
    for m in 1..j_cells - 1 {
        sum += (a_vals[m + 1] - 2.0 * a_vals[m] + a_vals[m - 1]).abs();
    }
    sum / dx
}

/// Check whether the regularity functional stays bounded as the grid is
/// refined: evaluates `M(J)` on the ladder `J, 2J, 4J, 8J` and reports
/// whether the trend is non-increasing within 10%. Returns the flag and the
/// finest-grid value of `M`.
pub fn check_initial_regularity(spec: &ProblemSpec, j_cells: usize) -> (bool, f64) {
    assert!(j_cells >= 4, "need at least 4 cells");
    let ladder = [j_cells, 2 * j_cells, 4 * j_cells, 8 * j_cells];
    let ms: Vec<f64> = ladder.iter().map(|&j| regularity_functional(spec, j)).collect();
    let scale = ms.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let mut bounded = true;
    for w in ms.windows(2) {
        if w[1] > 1.10 * w[0] + 1e-12 * scale {
            bounded = false;
        }
    }
    (bounded, ms[ms.len() - 1])
}
