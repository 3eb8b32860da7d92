//! The two Lamperti transformations on discretized paths.
//!
//! The CB-Lamperti map time-changes a spectrally positive path `X` by the
//! inverse of `A_t = int_0^t ds / X_s`; the result `Y = X o theta` is a
//! CB-process. The pssMp map writes a positive self-similar process as
//! `x exp(xi)` run on the clock of the exponential functional of `xi`.
//!
//! Transformed paths are kept on the image of the base grid: knot `k` of the
//! output sits at time `A` of knot `k` of the base and carries the same value.
//! [`resample`] produces a uniform output grid when one is wanted.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::stable_levy::{interpolate, simulate_stopped, Path, PathEnd, StableParams, StepRule, Stopping};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangedPath {
    pub base: Path,
    /// Clock value at every live knot of the base path.
    pub clock_values: Vec<f64>,
    pub output: Path,
    /// Absorption (extinction) time on the output scale.
    pub absorbed: Option<f64>,
}

impl TimeChangedPath {
    pub fn is_absorbed(&self) -> bool {
        self.absorbed.is_some()
    }

    /// Last time at which the output is defined by simulation.
    pub fn end_time(&self) -> f64 {
        self.output.end_time()
    }

    /// Output value at time `t`; zero after absorption, `None` past an unabsorbed end.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        if let Some(big_t) = self.absorbed {
            if t >= big_t {
                return Some(0.0);
            }
        }
        self.output.value_at(t)
    }

    /// `theta(t)`: the base time at which the clock reaches `t`.
    pub fn base_time_at(&self, t: f64) -> Option<f64> {
        interpolate(&self.clock_values, self.base.live_times(), t)
    }

    /// `Y_{(T - r)-}` for an absorbed path; `None` when `r >= T`.
    pub fn reversed_value_at(&self, r: f64) -> Option<f64> {
        let big_t = self.absorbed?;
        if !(r >= 0.0) || r >= big_t {
            return None;
        }
        self.output.value_at(big_t - r)
    }
}

/// `A` at every live knot of `base`, by the trapezoid rule on `1/X`.
///
/// On a final segment that ends at 0 (the kill) the trapezoid diverges; there
/// the path is taken to leave `x` along `x (1 - s/L)^(1/alpha)`, the
/// self-similar profile of a stable path creeping into 0, which contributes
/// `L alpha / ((alpha - 1) x)`.
pub fn cb_clock(base: &Path, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(invalid(format!("alpha must lie in (1, 2], got {alpha}")));
    }
    let times = base.live_times();
    let values = base.live_values();
    if !(values[0] > 0.0) {
        return Err(invalid(format!("the CB clock needs x0 > 0, got {}", values[0])));
    }
    let mut clock = Vec::with_capacity(times.len());
    clock.push(0.0);
    let mut a = 0.0;
    let last = times.len() - 1;
    for k in 1..times.len() {
        let (x0, x1) = (values[k - 1], values[k]);
        let h = times[k] - times[k - 1];
        if k == last && base.kill_index == Some(k) && x1 <= 0.0 {
            a += h * alpha / ((alpha - 1.0) * x0);
        } else if x1 > 0.0 {
            a += 0.5 * h * (1.0 / x0 + 1.0 / x1);
        } else {
            return Err(invalid(format!("base path reaches {x1} at knot {k} before its kill index")));
        }
        clock.push(a);
    }
    Ok(clock)
}

/// CB-Lamperti transform of a path killed at its first passage below 0.
pub fn cb_time_change(base: &Path, alpha: f64) -> Result<TimeChangedPath> {
    let clock = cb_clock(base, alpha)?;
    let absorbed = match base.kill_index {
        Some(k) if base.values[k] <= 0.0 => Some(clock[k]),
        _ => None,
    };
    let mut values = base.live_values().to_vec();
    if absorbed.is_some() {
        *values.last_mut().expect("non-empty path") = 0.0;
    }
    let kill = absorbed.map(|_| values.len() - 1);
    let output = Path::new(clock.clone(), values, kill)?;
    Ok(TimeChangedPath { base: base.clone(), clock_values: clock, output, absorbed })
}

/// Uniform grid `k dt_out` by linear interpolation; an absorbed path gets a
/// final knot at its absorption time.
pub fn resample(path: &Path, dt_out: f64) -> Result<Path> {
    if !(dt_out > 0.0 && dt_out.is_finite()) {
        return Err(invalid(format!("dt_out must be positive, got {dt_out}")));
    }
    let end = path.end_time();
    let n = (end / dt_out + 1e-9).floor() as usize;
    let mut times = Vec::with_capacity(n + 2);
    let mut values = Vec::with_capacity(n + 2);
    for k in 0..=n {
        let t = (k as f64 * dt_out).min(end);
        if times.last().is_some_and(|&last| t <= last) {
            continue;
        }
        times.push(t);
        values.push(path.value_at(t).expect("inside the grid"));
    }
    let mut kill = None;
    if path.is_killed() {
        if times.last().is_some_and(|&last| end > last) {
            times.push(end);
            values.push(path.last_value());
        }
        kill = Some(times.len() - 1);
    }
    Path::new(times, values, kill)
}

/// `(e^(beta b) - e^(beta a)) / (beta (b - a))`, the mean of `e^(beta xi)` along a linear segment.
fn exp_segment_mean(beta: f64, a: f64, b: f64) -> f64 {
    let d = beta * (b - a);
    let base = (beta * a).exp();
    if d.abs() < 1e-12 {
        base * (1.0 + 0.5 * d)
    } else {
        base * d.exp_m1() / d
    }
}

/// pssMp of the given index: `X_t = x exp(xi_{zeta(t x^-index)})`.
///
/// The exponential functional is integrated exactly along the linear
/// interpolation of `xi`, which makes [`levy_from_pssmp`] its exact inverse.
/// A killed `xi` sends the output to 0 at the kill knot.
pub fn pssmp_from_levy(xi_path: &Path, x: f64, index: f64) -> Result<TimeChangedPath> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(format!("pssMp start must be positive, got {x}")));
    }
    if !(index > 0.0 && index.is_finite()) {
        return Err(invalid(format!("self-similarity index must be positive, got {index}")));
    }
    let times = xi_path.live_times();
    let xi = xi_path.live_values();
    let scale = x.powf(index);
    let mut clock = Vec::with_capacity(times.len());
    clock.push(0.0);
    let mut acc = 0.0;
    for k in 1..times.len() {
        acc += (times[k] - times[k - 1]) * exp_segment_mean(index, xi[k - 1], xi[k]);
        clock.push(scale * acc);
    }
    let mut values: Vec<f64> = xi.iter().map(|v| x * v.exp()).collect();
    let absorbed = xi_path.kill_index.map(|k| clock[k]);
    if absorbed.is_some() {
        *values.last_mut().expect("non-empty path") = 0.0;
    }
    let kill = absorbed.map(|_| values.len() - 1);
    let output = Path::new(clock.clone(), values, kill)?;
    Ok(TimeChangedPath { base: xi_path.clone(), clock_values: clock, output, absorbed })
}

/// The Lévy process `xi = log(Y / Y_0)` behind a pssMp path, on its own clock
/// `s(t) = int_0^t Y_0^index / Y_u^index du`.
///
/// A kill knot with value `<= 0` (extinction, `xi = -infinity`) is dropped.
pub fn levy_from_pssmp(y_path: &Path, index: f64) -> Result<Path> {
    if !(index > 0.0 && index.is_finite()) {
        return Err(invalid(format!("self-similarity index must be positive, got {index}")));
    }
    let mut n = y_path.live_len();
    if y_path.kill_index.is_some() && y_path.last_value() <= 0.0 {
        n -= 1;
    }
    if n == 0 {
        return Err(invalid("pssMp path has no positive values"));
    }
    let times = &y_path.times[..n];
    let ys = &y_path.values[..n];
    if let Some(k) = ys.iter().position(|&v| !(v > 0.0)) {
        return Err(invalid(format!("pssMp path value {} at knot {k} is not positive", ys[k])));
    }
    let x0 = ys[0];
    let xi: Vec<f64> = ys.iter().map(|v| (v / x0).ln()).collect();
    let mut s = Vec::with_capacity(n);
    s.push(0.0);
    let mut acc = 0.0;
    for k in 1..n {
        acc += (times[k] - times[k - 1]) / exp_segment_mean(index, xi[k - 1], xi[k]);
        s.push(acc);
    }
    let s = s.into_iter().map(|v| v / x0.powf(index)).collect();
    Path::new(s, xi, None)
}

/// Mirror a grid path about its end time: knot `i` of the result is knot
/// `K - i` of the input at time `T - t_{K-i}`.
///
/// Between knots the paths are linear, so left and right limits at a knot
/// agree and the mirrored knot values are the left limits `Y_{(T-t)-}`.
pub fn reverse_grid(path: &Path) -> Result<Path> {
    let times = path.live_times();
    let values = path.live_values();
    let big_t = path.end_time();
    let rt = times.iter().rev().map(|t| big_t - t).collect();
    let rv = values.iter().rev().copied().collect();
    Path::new(rt, rv, None)
}

/// `(Y_{(T - t)-}, t <= T)` for an absorbed path: starts at 0, ends at `Y_0`.
pub fn reverse_path(path: &TimeChangedPath) -> Result<Path> {
    if !path.is_absorbed() {
        return Err(invalid("time reversal needs a path absorbed at a finite time"));
    }
    reverse_grid(&path.output)
}

/// `int_0^t Y_s ds` by the trapezoid rule on the output grid, for `t` up to
/// the end of the path. The final segment of an absorbed path contributes its
/// base-time length, which is its exact progeny.
pub fn total_progeny(path: &TimeChangedPath, t: f64) -> Result<f64> {
    let times = path.output.live_times();
    let values = path.output.live_values();
    if !(t >= 0.0) || t > path.end_time() {
        return Err(invalid(format!("progeny horizon {t} outside [0, {}]", path.end_time())));
    }
    let last = times.len() - 1;
    let mut acc = 0.0;
    for k in 1..times.len() {
        let (t0, t1) = (times[k - 1], times[k]);
        if t0 >= t {
            break;
        }
        if k == last && path.is_absorbed() && t >= t1 {
            acc += path.base.times[k] - path.base.times[k - 1];
            break;
        }
        let (y0, mut y1, mut hi) = (values[k - 1], values[k], t1);
        if t < t1 {
            y1 = y0 + (y1 - y0) * (t - t0) / (t1 - t0);
            hi = t;
        }
        acc += 0.5 * (hi - t0) * (y0 + y1);
    }
    Ok(acc)
}

/// Simulate the CB-process from `x0` through its Lamperti representation:
/// `X` is killed at 0 and the other stopping rules act on `X`.
pub fn simulate_cb<R: Rng + ?Sized>(
    params: &StableParams,
    x0: f64,
    rule: &StepRule,
    stop: &Stopping,
    rng: &mut R,
) -> Result<(TimeChangedPath, PathEnd)> {
    if !(x0 > 0.0) {
        return Err(invalid(format!("CB start must be positive, got {x0}")));
    }
    let mut stop = stop.clone();
    stop.kill_at_or_below = Some(0.0);
    let run = simulate_stopped(params, x0, rule, &stop, rng)?;
    if run.end == PathEnd::StepCap {
        return Err(Error::Estimation(format!("CB path from {x0} hit the step cap of {}", stop.max_steps)));
    }
    Ok((cb_time_change(&run.path, params.alpha)?, run.end))
}

/// `Y_t` from a CB path that was stopped at clock horizon `t` or absorbed before it.
pub fn cb_value_at_horizon(path: &TimeChangedPath, end: PathEnd, t: f64) -> Result<f64> {
    match end {
        PathEnd::Killed => Ok(if path.absorbed.is_some_and(|a| a <= t) { 0.0 } else { path.value_at(t).unwrap_or(0.0) }),
        PathEnd::ClockHorizon => path
            .value_at(t)
            .ok_or_else(|| Error::Estimation(format!("clock horizon {t} beyond the simulated path"))),
        other => Err(Error::Estimation(format!("CB path ended by {other:?} before clock {t}"))),
    }
}
