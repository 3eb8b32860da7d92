//! Spectrally positive alpha-stable Lévy processes.
//!
//! The process `X` has Laplace exponent `psi(lambda) = c_plus * lambda^alpha`
//! in the convention `E[exp(-lambda X_t)] = exp(t psi(lambda))`, so it has
//! only upward jumps and oscillates. Increments are drawn exactly with the
//! Chambers-Mallows-Stuck construction; paths are Euler grids of exact
//! increments, either on a fixed step or on an adaptive, scale-aware step.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    pub c_plus: f64,
}

impl StableParams {
    pub fn new(alpha: f64, c_plus: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(invalid(format!("alpha must lie in (1, 2], got {alpha}")));
        }
        if !(c_plus > 0.0 && c_plus.is_finite()) {
            return Err(invalid(format!("c_plus must be positive, got {c_plus}")));
        }
        Ok(Self { alpha, c_plus })
    }

    /// Default scale for a given index: `c_plus = 1`, except the Brownian
    /// case `alpha = 2` which uses `c_plus = 1/2`.
    pub fn with_alpha(alpha: f64) -> Result<Self> {
        let c_plus = if alpha == 2.0 { 0.5 } else { 1.0 };
        Self::new(alpha, c_plus)
    }

    pub fn brownian() -> Self {
        Self { alpha: 2.0, c_plus: 0.5 }
    }

    pub fn psi(&self, lambda: f64) -> Result<f64> {
        psi(self, lambda)
    }

    pub fn sampler(&self) -> StableSampler {
        StableSampler::new(self)
    }
}

pub fn psi(params: &StableParams, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(invalid(format!("psi needs lambda >= 0, got {lambda}")));
    }
    Ok(params.c_plus * lambda.powf(params.alpha))
}

/// Right inverse `Phi(q) = (q / c_plus)^(1/alpha)` of `psi`.
pub fn phi_inverse(params: &StableParams, q: f64) -> Result<f64> {
    if !(q >= 0.0) {
        return Err(invalid(format!("phi_inverse needs q >= 0, got {q}")));
    }
    Ok((q / params.c_plus).powf(1.0 / params.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    DriftsUp,
    Oscillates,
    DriftsDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub phi_zero: f64,
}

/// Long-run behaviour from the sign of `psi'(0+)`.
pub fn classify_regime(params: &StableParams) -> RegimeReport {
    // psi'(0+) = alpha c_plus 0^(alpha - 1) = 0 for alpha > 1.
    let slope = params.alpha * params.c_plus * 0f64.powf(params.alpha - 1.0);
    classify_from_slope(slope, || phi_inverse(params, 0.0).unwrap_or(0.0))
}

/// Trichotomy from the right derivative of the exponent at zero and the
/// largest root of the exponent.
pub fn classify_from_slope(slope_at_zero: f64, largest_root: impl Fn() -> f64) -> RegimeReport {
    if slope_at_zero < 0.0 {
        RegimeReport { regime: Regime::DriftsUp, phi_zero: largest_root() }
    } else if slope_at_zero == 0.0 {
        RegimeReport { regime: Regime::Oscillates, phi_zero: 0.0 }
    } else {
        RegimeReport { regime: Regime::DriftsDown, phi_zero: 0.0 }
    }
}

/// Exact sampler for increments of `X`.
///
/// For `alpha < 2` an increment over `dt` is `sigma(dt) * S` with `S` a
/// standard totally right-skewed stable variable (`beta = 1`, zero location)
/// and `sigma(dt)^alpha = c_plus * dt * |cos(pi alpha / 2)|`. For `alpha = 2`
/// the increment is Gaussian with variance `2 c_plus dt`.
#[derive(Debug, Clone, Copy)]
pub struct StableSampler {
    alpha: f64,
    /// Scale of a unit-time increment.
    unit_scale: f64,
    b: f64,
    s: f64,
}

impl StableSampler {
    pub fn new(params: &StableParams) -> Self {
        let alpha = params.alpha;
        if alpha == 2.0 {
            return Self { alpha, unit_scale: (2.0 * params.c_plus).sqrt(), b: 0.0, s: 1.0 };
        }
        let tan = (FRAC_PI_2 * alpha).tan();
        let unit_scale = (params.c_plus * (FRAC_PI_2 * alpha).cos().abs()).powf(1.0 / alpha);
        Self {
            alpha,
            unit_scale,
            b: tan.atan() / alpha,
            s: (1.0 + tan * tan).powf(1.0 / (2.0 * alpha)),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Scale of a unit-time increment (the standard deviation when `alpha = 2`).
    pub fn unit_scale(&self) -> f64 {
        self.unit_scale
    }

    /// Standardized draw (unit-time increment).
    #[inline]
    pub fn standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.alpha == 2.0 {
            let z: f64 = StandardNormal.sample(rng);
            return self.unit_scale * z;
        }
        let v = PI * (rng.random::<f64>() - 0.5);
        let w: f64 = Exp1.sample(rng);
        let a = self.alpha;
        let av = a * (v + self.b);
        let x = self.s * av.sin() / v.cos().powf(1.0 / a)
            * ((v - av).cos() / w).powf((1.0 - a) / a);
        self.unit_scale * x
    }

    /// Increment of `X` over a step of length `dt`.
    #[inline]
    pub fn increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        dt.powf(1.0 / self.alpha) * self.standard(rng)
    }
}

/// One draw of `X_dt - X_0`.
pub fn sample_increment<R: Rng + ?Sized>(params: &StableParams, dt: f64, rng: &mut R) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    Ok(StableSampler::new(params).increment(dt, rng))
}

/// A discretized càdlàg trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Grid index at which the path was absorbed or killed.
    pub kill_index: Option<usize>,
}

impl Path {
    pub fn new(times: Vec<f64>, values: Vec<f64>, kill_index: Option<usize>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(invalid("path needs matching, non-empty time and value grids"));
        }
        if times[0] != 0.0 {
            return Err(invalid("path time grid must start at 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("path time grid must be strictly increasing"));
        }
        if let Some(k) = kill_index {
            if k >= times.len() {
                return Err(invalid("kill index beyond the path grid"));
            }
        }
        Ok(Self { times, values, kill_index })
    }

    pub fn constant(value: f64, horizon: f64, dt: f64) -> Result<Self> {
        let n = grid_len(horizon, dt)?;
        let times = (0..n).map(|k| k as f64 * dt).collect();
        Self::new(times, vec![value; n], None)
    }

    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of grid points consumers may read (up to and including the kill).
    pub fn live_len(&self) -> usize {
        self.kill_index.map_or(self.times.len(), |k| k + 1)
    }

    pub fn live_times(&self) -> &[f64] {
        &self.times[..self.live_len()]
    }

    pub fn live_values(&self) -> &[f64] {
        &self.values[..self.live_len()]
    }

    pub fn end_time(&self) -> f64 {
        self.times[self.live_len() - 1]
    }

    pub fn last_value(&self) -> f64 {
        self.values[self.live_len() - 1]
    }

    pub fn is_killed(&self) -> bool {
        self.kill_index.is_some()
    }

    /// The live part of the path up to time `t`, ending with an interpolated knot at `t`.
    pub fn truncated(&self, t: f64) -> Option<Path> {
        let end = self.value_at(t)?;
        let times = self.live_times();
        let k = times.partition_point(|&s| s < t);
        let mut ts = times[..k].to_vec();
        let mut vs = self.live_values()[..k].to_vec();
        ts.push(t);
        vs.push(end);
        Some(Path { times: ts, values: vs, kill_index: None })
    }

    /// Value at time `t` by linear interpolation between knots.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let times = self.live_times();
        let values = self.live_values();
        interpolate(times, values, t)
    }
}

pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] || x.is_nan() {
        return None;
    }
    let k = xs.partition_point(|&v| v <= x);
    if k == xs.len() {
        return Some(ys[xs.len() - 1]);
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    let w = (x - x0) / (x1 - x0);
    Some(ys[k - 1] + w * (ys[k] - ys[k - 1]))
}

fn grid_len(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= dt) || !horizon.is_finite() {
        return Err(invalid(format!("horizon {horizon} must be at least dt {dt}")));
    }
    Ok((horizon / dt + 1e-9).floor() as usize + 1)
}

/// Plain Euler grid `times[k] = k dt` with exact stable increments.
pub fn simulate_path<R: Rng + ?Sized>(
    params: &StableParams,
    x0: f64,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Path> {
    let n = grid_len(horizon, dt)?;
    let sampler = params.sampler();
    let scale = dt.powf(1.0 / params.alpha);
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut x = x0;
    times.push(0.0);
    values.push(x);
    for k in 1..n {
        x += scale * sampler.standard(rng);
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("path value at step {k} is {x}")));
        }
        times.push(k as f64 * dt);
        values.push(x);
    }
    Ok(Path { times, values, kill_index: None })
}

/// Step-size policy for path generation.
///
/// `Adaptive` chooses `dt = eps * d^alpha` clamped to `[dt_min, dt_max]`,
/// where `d` is the distance from the current value to the nearest watched
/// level. Increments over such a step are of order `eps^(1/alpha) d`, so
/// level crossings are resolved in relative terms at every scale; the floor
/// `dt_min` lets the path actually reach a level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    Fixed { dt: f64 },
    Adaptive { eps: f64, dt_min: f64, dt_max: f64 },
}

impl StepRule {
    pub fn adaptive(eps: f64, dt_min: f64, dt_max: f64) -> Self {
        StepRule::Adaptive { eps, dt_min, dt_max }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepRule::Fixed { dt } if dt > 0.0 && dt.is_finite() => Ok(()),
            StepRule::Adaptive { eps, dt_min, dt_max }
                if eps > 0.0 && dt_min > 0.0 && dt_max >= dt_min =>
            {
                Ok(())
            }
            _ => Err(invalid(format!("invalid step rule {self:?}"))),
        }
    }

    #[inline]
    pub fn step(&self, alpha: f64, distance: f64) -> f64 {
        match *self {
            StepRule::Fixed { dt } => dt,
            StepRule::Adaptive { eps, dt_min, dt_max } => {
                (eps * distance.abs().powf(alpha)).clamp(dt_min, dt_max)
            }
        }
    }
}

/// Termination rules for [`simulate_stopped`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stopping {
    /// Kill at the first grid value `<=` this level; the overshoot is
    /// replaced by the linearly interpolated crossing point.
    pub kill_at_or_below: Option<f64>,
    /// Stop at the first grid value `>=` this level (kept as simulated).
    pub stop_at_or_above: Option<f64>,
    /// Time horizon of the underlying process.
    pub horizon: f64,
    /// Stop once `int_0^t ds / X_s` (trapezoid) reaches this value.
    pub clock_horizon: Option<f64>,
    /// Additional levels that steer the adaptive step. The path may cross
    /// them, so their distance is floored at `WATCH_RESOLUTION * |level|`.
    pub watch_levels: Vec<f64>,
    pub max_steps: usize,
}

/// Relative resolution of the adaptive step at a watch level.
pub const WATCH_RESOLUTION: f64 = 0.05;

impl Stopping {
    /// Distance from `x` to the nearest level that steers the adaptive step.
    pub fn level_distance(&self, x: f64, hard_levels: &[f64]) -> f64 {
        let hard = hard_levels
            .iter()
            .chain(self.kill_at_or_below.iter())
            .chain(self.stop_at_or_above.iter())
            .fold(f64::INFINITY, |d, &l| d.min((x - l).abs()));
        self.watch_levels
            .iter()
            .fold(hard, |d, &l| d.min((x - l).abs().max(WATCH_RESOLUTION * l.abs())))
    }
}

impl Default for Stopping {
    fn default() -> Self {
        Self {
            kill_at_or_below: None,
            stop_at_or_above: None,
            horizon: f64::INFINITY,
            clock_horizon: None,
            watch_levels: Vec::new(),
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathEnd {
    Horizon,
    Killed,
    Exited,
    ClockHorizon,
    StepCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppedPath {
    pub path: Path,
    pub end: PathEnd,
}

/// Simulate `X` from `x0` under a step rule until one of the stopping rules fires.
pub fn simulate_stopped<R: Rng + ?Sized>(
    params: &StableParams,
    x0: f64,
    rule: &StepRule,
    stop: &Stopping,
    rng: &mut R,
) -> Result<StoppedPath> {
    rule.validate()?;
    let sampler = params.sampler();
    let alpha = params.alpha;
    let inv_alpha = 1.0 / alpha;
    let mut times = vec![0.0];
    let mut values = vec![x0];
    if let Some(level) = stop.kill_at_or_below {
        if x0 <= level {
            return Ok(StoppedPath { path: Path { times, values, kill_index: Some(0) }, end: PathEnd::Killed });
        }
    }
    if let Some(level) = stop.stop_at_or_above {
        if x0 >= level {
            return Ok(StoppedPath { path: Path { times, values, kill_index: None }, end: PathEnd::Exited });
        }
    }
    let fixed_dt = match rule {
        StepRule::Fixed { dt } => Some(*dt),
        StepRule::Adaptive { .. } => None,
    };

    let mut t = 0.0;
    let mut x = x0;
    let mut clock = 0.0;
    let mut steps = 0usize;
    let end = loop {
        if steps >= stop.max_steps {
            break PathEnd::StepCap;
        }
        let remaining = stop.horizon - t;
        if stop.horizon.is_finite() && remaining <= 1e-12 * stop.horizon.max(1.0) {
            break PathEnd::Horizon;
        }
        let dist = stop.level_distance(x, &[]);
        let mut dt = rule.step(alpha, dist).min(remaining);
        if let (Some(limit), StepRule::Adaptive { dt_min, .. }) = (stop.clock_horizon, rule) {
            // keep the last step from overshooting the clock horizon by much
            dt = dt.min(((limit - clock) * x).max(*dt_min));
        }
        // keep the grid strictly increasing in floating point
        dt = dt.max(4.0 * f64::EPSILON * t);
        let mut t_next = t + dt;
        if let Some(h) = fixed_dt {
            t_next = ((steps + 1) as f64 * h).min(stop.horizon);
        }
        // the clock below must match the one recomputed from the stored grid
        dt = t_next - t;
        let x_next = x + dt.powf(inv_alpha) * sampler.standard(rng);
        steps += 1;
        if !x_next.is_finite() {
            return Err(Error::NonFinite(format!("value {x_next} at time {t_next}")));
        }
        if let Some(level) = stop.kill_at_or_below {
            if x_next <= level {
                let frac = (x - level) / (x - x_next);
                times.push((t + frac * dt).max(t.next_up()));
                values.push(level);
                let k = times.len() - 1;
                return Ok(StoppedPath { path: Path { times, values, kill_index: Some(k) }, end: PathEnd::Killed });
            }
        }
        times.push(t_next);
        values.push(x_next);
        if let Some(level) = stop.stop_at_or_above {
            if x_next >= level {
                break PathEnd::Exited;
            }
        }
        if let Some(limit) = stop.clock_horizon {
            clock += 0.5 * dt * (1.0 / x + 1.0 / x_next);
            if clock >= limit {
                break PathEnd::ClockHorizon;
            }
        }
        t = t_next;
        x = x_next;
    };
    Ok(StoppedPath { path: Path { times, values, kill_index: None }, end })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Below,
    Above,
}

/// First grid index whose value is `<= level` (below) or `>= level` (above).
pub fn first_passage(path: &Path, level: f64, direction: Direction) -> Option<(usize, f64)> {
    let values = path.live_values();
    let hit = match direction {
        Direction::Below => values.iter().position(|&v| v <= level),
        Direction::Above => values.iter().position(|&v| v >= level),
    };
    hit.map(|k| (k, path.times[k]))
}

/// Pointwise negation `-X`.
pub fn dual_path(path: &Path) -> Path {
    Path {
        times: path.times.clone(),
        values: path.values.iter().map(|v| -v).collect(),
        kill_index: path.kill_index,
    }
}
