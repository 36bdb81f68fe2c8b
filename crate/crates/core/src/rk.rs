//! Fixed-step TVD-RK3 and embedded RK3(2) time stepping.
//!
//! Both methods share the three stages
//!
//! ```text
//! κ1 = Δt L(t, u),   κ2 = Δt L(t + Δt, u + κ1),   κ3 = Δt L(t + Δt/2, u + κ1/4 + κ2/4),
//! ```
//!
//! combined with the third-order weights `b̂ = (1/6, 1/6, 2/3)` (the
//! optimal SSP/TVD-RK3 scheme) or the second-order companion
//! `b̌ = (1/2, 1/2, 0)`. The difference of the two candidates estimates the
//! temporal truncation error,
//!
//! ```text
//! δ_old = ‖û - ǔ‖_∞ = ‖Σ (b̂_i - b̌_i) κ_i‖_∞ ~ Δt³,
//! ```
//!
//! which drives the step-size update `Δt_new = Δt (δ_desired/δ_old)^{1/3}`,
//! limited so that the relative change per step never exceeds
//! `S(t, Δt)/2` with `S(t, Δt) = (S_0 - S_min) e^{-t/Δt} + S_min`:
//! initially 10% variation is allowed, later only 1%. The three stages are
//! recomputed every step; the scheme deliberately does not reuse the last
//! stage as the next step's first one.

/// Butcher data of the embedded RK3(2) pair.
pub struct ButcherRk32;

impl ButcherRk32 {
    pub const C: [f64; 3] = [0.0, 1.0, 0.5];
    pub const A21: f64 = 1.0;
    pub const A31: f64 = 0.25;
    pub const A32: f64 = 0.25;
    /// Third-order propagation weights.
    pub const B_HAT: [f64; 3] = [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0];
    /// Second-order companion weights.
    pub const B_CHECK: [f64; 3] = [0.5, 0.5, 0.0];
    /// Order of the propagating scheme.
    pub const P: u32 = 3;
}

/// State of the adaptive step-size controller.
#[derive(Clone, Debug)]
pub struct RkfController {
    /// Current step size.
    pub dt: f64,
    /// Target truncation error per step.
    pub delta_desired: f64,
    pub s0: f64,
    pub s_min: f64,
    /// Elapsed simulation time.
    pub t: f64,
    /// Optional hard ceiling on the step (CFL guard).
    pub dt_max: Option<f64>,
}

impl RkfController {
    pub fn new(dt0: f64, delta_desired: f64) -> Self {
        assert!(dt0 > 0.0 && delta_desired > 0.0);
        RkfController {
            dt: dt0,
            delta_desired,
            s0: 0.1,
            s_min: 0.01,
            t: 0.0,
            dt_max: None,
        }
    }

    pub fn with_limits(mut self, s0: f64, s_min: f64) -> Self {
        self.s0 = s0;
        self.s_min = s_min;
        self
    }

    pub fn with_dt_max(mut self, dt_max: f64) -> Self {
        self.dt_max = Some(dt_max);
        self.dt = self.dt.min(dt_max);
        self
    }

    /// Step limiter `S(t, Δt)` with this controller's constants.
    pub fn limiter(&self, t: f64, dt_old: f64) -> f64 {
        limiter(t, dt_old, self.s0, self.s_min)
    }
}

/// `S(t, Δt) = (S_0 - S_min) e^{-t/Δt} + S_min`.
pub fn limiter(t: f64, dt_old: f64, s0: f64, s_min: f64) -> f64 {
    debug_assert!(dt_old > 0.0);
    (s0 - s_min) * (-t / dt_old).exp() + s_min
}

/// Step-size update rule.
///
/// The uncapped candidate `Δt (δ_desired/δ_old)^{1/p}` is returned whenever
/// its relative change stays within `S(t, Δt)/2`; otherwise the change is
/// capped at that fraction (in both directions). `δ_old = 0` maps to the
/// capped growth branch.
pub fn new_dt(
    dt_old: f64,
    delta_old: f64,
    delta_desired: f64,
    t: f64,
    p: u32,
    s0: f64,
    s_min: f64,
) -> f64 {
    debug_assert!(dt_old > 0.0 && delta_desired > 0.0);
    let s_half = 0.5 * limiter(t, dt_old, s0, s_min);
    let candidate = if delta_old > 0.0 {
        dt_old * (delta_desired / delta_old).powf(1.0 / p as f64)
    } else {
        f64::INFINITY
    };
    let rel = (candidate - dt_old).abs() / dt_old;
    if rel <= s_half {
        candidate
    } else if candidate > dt_old {
        dt_old * (1.0 + s_half)
    } else {
        dt_old * (1.0 - s_half)
    }
}

fn stage_state(u: &[f64], parts: &[(&[f64], f64)]) -> Vec<f64> {
    let mut out = u.to_vec();
    for (k, w) in parts {
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += w * v;
        }
    }
    out
}

/// The three shared stages `κ_i` for step `Δt` starting at `(t, u)`.
pub fn rk_stages<D>(div: &mut D, u: &[f64], dt: f64, t: f64) -> [Vec<f64>; 3]
where
    D: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let scale = |mut v: Vec<f64>| {
        for x in v.iter_mut() {
            *x *= dt;
        }
        v
    };
    let k1 = scale(div(t + ButcherRk32::C[0] * dt, u));
    let s2 = stage_state(u, &[(&k1, ButcherRk32::A21)]);
    let k2 = scale(div(t + ButcherRk32::C[1] * dt, &s2));
    let s3 = stage_state(u, &[(&k1, ButcherRk32::A31), (&k2, ButcherRk32::A32)]);
    let k3 = scale(div(t + ButcherRk32::C[2] * dt, &s3));
    [k1, k2, k3]
}

/// One fixed step of the third-order scheme.
pub fn rk3_step<D>(div: &mut D, u: &[f64], dt: f64, t: f64) -> Vec<f64>
where
    D: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let [k1, k2, k3] = rk_stages(div, u, dt, t);
    let b = ButcherRk32::B_HAT;
    stage_state(u, &[(&k1, b[0]), (&k2, b[1]), (&k3, b[2])])
}

/// Both embedded candidates `(û, ǔ)` from shared stages.
pub fn embedded_candidates<D>(div: &mut D, u: &[f64], dt: f64, t: f64) -> (Vec<f64>, Vec<f64>)
where
    D: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let [k1, k2, k3] = rk_stages(div, u, dt, t);
    let bh = ButcherRk32::B_HAT;
    let bc = ButcherRk32::B_CHECK;
    let hat = stage_state(u, &[(&k1, bh[0]), (&k2, bh[1]), (&k3, bh[2])]);
    let check = stage_state(u, &[(&k1, bc[0]), (&k2, bc[1]), (&k3, bc[2])]);
    (hat, check)
}

/// One adaptive step: advances with the third-order candidate, measures
/// `δ_old = ‖û - ǔ‖_∞` and updates the controller's step size for the step
/// after next. Returns the new state and `δ_old`.
pub fn rkf_step<D>(div: &mut D, u: &[f64], ctl: &mut RkfController, t: f64) -> (Vec<f64>, f64)
where
    D: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let dt = ctl.dt;
    let (hat, check) = embedded_candidates(div, u, dt, t);
    let delta_old = hat
        .iter()
        .zip(check.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let t_after = t + dt;
    let mut next = new_dt(dt, delta_old, ctl.delta_desired, t_after, ButcherRk32::P, ctl.s0, ctl.s_min);
    if let Some(cap) = ctl.dt_max {
        next = next.min(cap);
    }
    ctl.dt = next;
    ctl.t = t_after;
    (hat, delta_old)
}
