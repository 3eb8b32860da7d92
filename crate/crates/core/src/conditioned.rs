//! Conditioned processes by Doob h-transform weighting and by rejection.
//!
//! The oscillating stable process killed at its first passage below 0 has
//! harmonic functions `h(x) = x` (spectrally positive side, and the CB-process)
//! and `h(x) = W(x)`, proportional to `x^(alpha-1)` (spectrally negative dual).
//! Weighting a killed path by `h(X_H) / h(x)` gives the conditioned law up to
//! the horizon `H`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::closed_forms::qs_norm;
use crate::error::{invalid, Error, Result};
use crate::lamperti::{cb_clock, cb_value_at_horizon, simulate_cb};
use crate::mc::{effective_sample_size, map_paths, MCEstimate};
use crate::rng::PathRng;
use crate::stable_levy::{dual_path, interpolate, simulate_stopped, Path, PathEnd, StableParams, StepRule, Stopping};

/// Default effective-sample-size floor below which an estimate is flagged.
pub const DEFAULT_ESS_FLOOR: f64 = 100.0;

/// Tail multiple used to bound `h(y) / h(x)` in the per-step rejection sampler.
const RATIO_BOUND_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HKind {
    /// Spectrally positive `X`, `h(x) = x`.
    SpPositive,
    /// Spectrally negative dual `-X`, `h(x) = x^(alpha-1)`.
    SnDual,
    /// CB-process `Y`, `h(x) = x`; the horizon is on the CB time scale.
    Cb,
}

impl HKind {
    pub fn h(&self, params: &StableParams, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            HKind::SpPositive | HKind::Cb => x,
            HKind::SnDual => x.powf(params.alpha - 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub functional_value: f64,
    pub weight: f64,
    /// Not killed before the horizon.
    pub alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HEstimate {
    pub estimate: MCEstimate,
    pub ess: f64,
    /// `ess` reached the floor.
    pub reliable: bool,
    pub alive_fraction: f64,
}

/// One killed path and its h-weight; the functional sees the path up to the
/// horizon (`X` for `SpPositive`, `-X` for `SnDual`, `Y` for `Cb`).
/// `watch` lists levels (in the same coordinates) the functional looks at.
#[allow(clippy::too_many_arguments)]
pub fn weighted_sample<R: Rng + ?Sized>(
    kind: HKind,
    params: &StableParams,
    x: f64,
    horizon: f64,
    functional: &(dyn Fn(&Path) -> f64 + Sync),
    watch: &[f64],
    rule: &StepRule,
    rng: &mut R,
) -> Result<WeightedSample> {
    if !(x > 0.0) {
        return Err(invalid(format!("conditioned start must be positive, got {x}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive and finite, got {horizon}")));
    }
    let dead = WeightedSample { functional_value: 0.0, weight: 0.0, alive: false };
    let path = match kind {
        HKind::SpPositive => {
            let stop = Stopping { kill_at_or_below: Some(0.0), horizon, watch_levels: watch.to_vec(), ..Stopping::default() };
            let run = simulate_stopped(params, x, rule, &stop, rng)?;
            match run.end {
                PathEnd::Horizon => run.path,
                PathEnd::Killed => return Ok(dead),
                other => return Err(Error::Estimation(format!("path ended by {other:?}"))),
            }
        }
        HKind::SnDual => {
            // -X is killed below 0 exactly when X starting from -x passes above 0
            let watch_levels = watch.iter().map(|l| -l).collect();
            let stop = Stopping { stop_at_or_above: Some(0.0), horizon, watch_levels, ..Stopping::default() };
            let run = simulate_stopped(params, -x, rule, &stop, rng)?;
            match run.end {
                PathEnd::Horizon => dual_path(&run.path),
                PathEnd::Exited => return Ok(dead),
                other => return Err(Error::Estimation(format!("path ended by {other:?}"))),
            }
        }
        HKind::Cb => {
            let stop = Stopping { clock_horizon: Some(horizon), watch_levels: watch.to_vec(), ..Stopping::default() };
            let (tc, end) = simulate_cb(params, x, rule, &stop, rng)?;
            match end {
                PathEnd::ClockHorizon => tc
                    .output
                    .truncated(horizon)
                    .ok_or_else(|| Error::Estimation("CB path shorter than its clock horizon".into()))?,
                PathEnd::Killed => return Ok(dead),
                other => return Err(Error::Estimation(format!("path ended by {other:?}"))),
            }
        }
    };
    let weight = kind.h(params, path.last_value()) / kind.h(params, x);
    Ok(WeightedSample { functional_value: functional(&path), weight, alive: true })
}

/// `E^up[F] = E[F h(X_H) / h(x) ; H < tau_0^-]`, averaged over `n_paths`.
#[allow(clippy::too_many_arguments)]
pub fn h_transform_estimate(
    kind: HKind,
    params: &StableParams,
    x: f64,
    horizon: f64,
    functional: &(dyn Fn(&Path) -> f64 + Sync),
    watch: &[f64],
    n_paths: usize,
    rule: &StepRule,
    seed: u64,
) -> Result<HEstimate> {
    let samples =
        map_paths(n_paths, seed, |_, rng| weighted_sample(kind, params, x, horizon, functional, watch, rule, rng))?;
    summarize_weighted(&samples, seed, DEFAULT_ESS_FLOOR)
}

/// Estimate, ESS and reliability flag from weighted samples.
pub fn summarize_weighted(samples: &[WeightedSample], seed: u64, ess_floor: f64) -> Result<HEstimate> {
    let products: Vec<f64> = samples.iter().map(|s| s.functional_value * s.weight).collect();
    let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    let ess = effective_sample_size(&weights);
    let alive = samples.iter().filter(|s| s.alive).count();
    Ok(HEstimate {
        estimate: MCEstimate::from_samples(&products, seed)?,
        ess,
        reliable: ess >= ess_floor,
        alive_fraction: alive as f64 / samples.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedPath {
    pub path: Path,
    pub end: PathEnd,
    /// Proposals whose `h` ratio exceeded the rejection bound (accepted outright).
    pub bound_exceeded: usize,
    pub proposals: usize,
}

/// Path of the h-transformed process by per-step rejection.
///
/// Each step proposes an increment of the unconditioned process, discards
/// proposals at or below 0, and accepts `y` with probability
/// `h(y) / (M h(x))`, where `M` bounds the ratio over increments up to eight
/// unit scales. The accepted law of a step is the killed transition reweighted
/// by `h` and renormalized, so the chain is exactly Markov. The bound only
/// holds when the proposal has a light upper tail: the dual for every index,
/// the spectrally positive process for `alpha = 2` only.
pub fn simulate_conditioned<R: Rng + ?Sized>(
    kind: HKind,
    params: &StableParams,
    x0: f64,
    rule: &StepRule,
    stop: &Stopping,
    rng: &mut R,
) -> Result<ConditionedPath> {
    rule.validate()?;
    let sign = match kind {
        HKind::SnDual => -1.0,
        HKind::SpPositive if params.alpha == 2.0 => 1.0,
        HKind::SpPositive => {
            return Err(invalid("rejection sampling of the positive side needs alpha = 2 (heavy upward jumps)"));
        }
        HKind::Cb => return Err(invalid("simulate the conditioned CB-process as a time-changed SpPositive path")),
    };
    if !(x0 > 0.0) {
        return Err(invalid(format!("conditioned start must be positive, got {x0}")));
    }
    if stop.kill_at_or_below.is_some() {
        return Err(invalid("a conditioned path is never killed"));
    }
    let sampler = params.sampler();
    let alpha = params.alpha;
    let sigma = sampler.unit_scale();
    let mut times = vec![0.0];
    let mut values = vec![x0];
    let (mut t, mut x, mut clock) = (0.0, x0, 0.0);
    let (mut exceeded, mut proposals) = (0usize, 0usize);
    let end = loop {
        if times.len() > stop.max_steps {
            break PathEnd::StepCap;
        }
        if stop.stop_at_or_above.is_some_and(|l| x >= l) {
            break PathEnd::Exited;
        }
        if stop.clock_horizon.is_some_and(|l| clock >= l) {
            break PathEnd::ClockHorizon;
        }
        let remaining = stop.horizon - t;
        if stop.horizon.is_finite() && remaining <= 1e-12 * stop.horizon.max(1.0) {
            break PathEnd::Horizon;
        }
        let dist = stop.level_distance(x, &[0.0]);
        let mut dt = rule.step(alpha, dist).min(remaining);
        if let (Some(limit), StepRule::Adaptive { dt_min, .. }) = (stop.clock_horizon, rule) {
            dt = dt.min(((limit - clock) * x).max(*dt_min));
        }
        dt = dt.max(4.0 * f64::EPSILON * t);
        let scale = dt.powf(1.0 / alpha);
        let hx = kind.h(params, x);
        let bound = kind.h(params, x + RATIO_BOUND_SIGMAS * sigma * scale) / hx;
        let mut tries = 0usize;
        let y = loop {
            tries += 1;
            if tries > 1_000_000 {
                return Err(Error::Estimation(format!("rejection sampler stalled at x = {x}")));
            }
            let y = x + sign * scale * sampler.standard(rng);
            if !(y > 0.0) {
                continue;
            }
            if !y.is_finite() {
                return Err(Error::NonFinite(format!("conditioned value {y} at time {t}")));
            }
            let ratio = kind.h(params, y) / hx;
            if ratio > bound {
                exceeded += 1;
                break y;
            }
            if rng.random::<f64>() * bound < ratio {
                break y;
            }
        };
        proposals += tries;
        let t_next = t + dt;
        clock += 0.5 * (t_next - t) * (1.0 / x + 1.0 / y);
        t = t_next;
        x = y;
        times.push(t);
        values.push(x);
    };
    Ok(ConditionedPath { path: Path { times, values, kill_index: None }, end, bound_exceeded: exceeded, proposals })
}

/// Last grid index with value `<= level`, if any.
pub fn last_index_at_or_below(values: &[f64], level: f64) -> Option<usize> {
    values.iter().rposition(|&v| v <= level)
}

/// Reversed-time marginal of the time-changed conditioned dual: the value of
/// `X o theta` at clock `r` when `r < A_{sigma_y}`, `None` otherwise.
///
/// The dual has no upward jumps, so the last passage below `y` is a crossing
/// of `y`; it is located on the grid and its clock value interpolated.
/// The path is run from `x0` (a proxy for 0) until it exits above
/// `exit_level`, from where it returns below `y` with probability of order
/// `(alpha - 1) y / exit_level`.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_dual_marginal(
    params: &StableParams,
    x0: f64,
    y: f64,
    exit_level: f64,
    r: f64,
    rule: &StepRule,
    rng: &mut PathRng,
) -> Result<Option<f64>> {
    if !(exit_level > y && y > x0) {
        return Err(invalid(format!("need x0 < y < exit level, got {x0}, {y}, {exit_level}")));
    }
    let stop = Stopping { stop_at_or_above: Some(exit_level), watch_levels: vec![y], ..Stopping::default() };
    let run = simulate_conditioned(HKind::SnDual, params, x0, rule, &stop, rng)?;
    if run.end != PathEnd::Exited {
        return Err(Error::Estimation(format!("conditioned dual ended by {:?}", run.end)));
    }
    let values = &run.path.values;
    let clock = cb_clock(&run.path, params.alpha)?;
    let k = last_index_at_or_below(values, y).expect("the path starts below y");
    let sigma_clock = if k + 1 < values.len() {
        let w = (y - values[k]) / (values[k + 1] - values[k]);
        clock[k] + w * (clock[k + 1] - clock[k])
    } else {
        clock[k]
    };
    if r >= sigma_clock {
        return Ok(None);
    }
    Ok(interpolate(&clock, values, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    /// `E_x[exp(-lambda Y_t / c_t) | T_0^- > t]`.
    pub estimate: MCEstimate,
    /// Fraction of paths alive at `t`, estimating `P_x(T_0^- > t)`.
    pub acceptance: MCEstimate,
    pub accepted: usize,
}

/// Rejection estimator of the survival-conditioned Laplace functional, for
/// several `lambda` on the same paths.
#[allow(clippy::too_many_arguments)]
pub fn survival_conditioned_laplace_many(
    params: &StableParams,
    x: f64,
    t: f64,
    lambdas: &[f64],
    n_paths: usize,
    rule: &StepRule,
    seed: u64,
) -> Result<Vec<SurvivalEstimate>> {
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(invalid("lambda must be positive"));
    }
    let ct = qs_norm(params, t)?;
    let stop = Stopping { clock_horizon: Some(t), ..Stopping::default() };
    let ys = map_paths(n_paths, seed, |_, rng| {
        let (tc, end) = simulate_cb(params, x, rule, &stop, rng)?;
        let y = cb_value_at_horizon(&tc, end, t)?;
        Ok(if end == PathEnd::ClockHorizon && y > 0.0 { Some(y) } else { None })
    })?;
    let alive: Vec<f64> = ys.iter().map(|y| if y.is_some() { 1.0 } else { 0.0 }).collect();
    let acceptance = MCEstimate::from_samples(&alive, seed)?;
    let accepted: Vec<f64> = ys.iter().flatten().copied().collect();
    if accepted.len() < 2 {
        return Err(Error::Estimation(format!(
            "{} of {n_paths} paths survived to t = {t}; survival probability estimate {:.3e}",
            accepted.len(),
            acceptance.mean
        )));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let vals: Vec<f64> = accepted.iter().map(|y| (-lambda * y / ct).exp()).collect();
            Ok(SurvivalEstimate { estimate: MCEstimate::from_samples(&vals, seed)?, acceptance, accepted: accepted.len() })
        })
        .collect()
}

/// Single-`lambda` form of [`survival_conditioned_laplace_many`].
pub fn survival_conditioned_laplace(
    params: &StableParams,
    x: f64,
    t: f64,
    lambda: f64,
    n_paths: usize,
    rule: &StepRule,
    seed: u64,
) -> Result<SurvivalEstimate> {
    Ok(survival_conditioned_laplace_many(params, x, t, &[lambda], n_paths, rule, seed)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupLastPassage {
    pub z: Vec<f64>,
    pub probabilities: Vec<MCEstimate>,
    /// Least-squares fit `p = intercept - kappa y / z`.
    pub intercept: f64,
    pub kappa: f64,
    pub r_squared: f64,
    /// Bound on the probability of a return below `y` after the exit level.
    pub return_bound: f64,
    pub bound_exceeded: usize,
}

/// `P^up(sup_{s <= U_y} Y_s <= z)` for the CB-process conditioned on
/// non-extinction and started near 0, where `U_y` is the last passage below `y`.
///
/// The sup and the last passage are invariant under the Lamperti time change,
/// so they are read off the conditioned spectrally positive path, simulated by
/// rejection (`alpha = 2` only) from `x0` until it exits above `exit_level`.
#[allow(clippy::too_many_arguments)]
pub fn cbi_sup_before_last_passage(
    params: &StableParams,
    y: f64,
    z: &[f64],
    x0: f64,
    exit_level: f64,
    n_paths: usize,
    rule: &StepRule,
    seed: u64,
) -> Result<SupLastPassage> {
    if z.iter().any(|&v| !(v >= y)) || !(y > 0.0) {
        return Err(invalid("need z >= y > 0 on the whole grid"));
    }
    if z.len() < 2 {
        return Err(invalid("the shape fit needs at least two z values"));
    }
    let zmax = z.iter().copied().fold(y, f64::max);
    if !(exit_level > zmax && x0 < y && x0 > 0.0) {
        return Err(invalid("need 0 < x0 < y <= z < exit level"));
    }
    let mut watch = vec![y];
    watch.extend_from_slice(z);
    let stop = Stopping { stop_at_or_above: Some(exit_level), watch_levels: watch, ..Stopping::default() };
    let runs = map_paths(n_paths, seed, |_, rng| {
        let run = simulate_conditioned(HKind::SpPositive, params, x0, rule, &stop, rng)?;
        if run.end != PathEnd::Exited {
            return Err(Error::Estimation(format!("conditioned path ended by {:?}", run.end)));
        }
        let v = &run.path.values;
        let k = last_index_at_or_below(v, y).expect("the path starts below y");
        let sup = v[..=k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((sup, run.bound_exceeded))
    })?;
    let probabilities = z
        .iter()
        .map(|&zz| {
            let ind: Vec<f64> = runs.iter().map(|r| if r.0 <= zz { 1.0 } else { 0.0 }).collect();
            MCEstimate::from_samples(&ind, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = z.iter().map(|zz| y / zz).collect();
    let ps: Vec<f64> = probabilities.iter().map(|p| p.mean).collect();
    let (intercept, slope, r_squared) = least_squares(&xs, &ps);
    Ok(SupLastPassage {
        z: z.to_vec(),
        probabilities,
        intercept,
        kappa: -slope,
        r_squared,
        return_bound: y / exit_level,
        bound_exceeded: runs.iter().map(|r| r.1).sum(),
    })
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, R^2)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (a, b, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{cbi_exact_laplace, extinction_cdf};
    use crate::rng::path_rng;

    fn rule() -> StepRule {
        StepRule::adaptive(0.03, 1e-15, f64::INFINITY)
    }

    #[test]
    fn h_functions() {
        let p = StableParams::new(1.5, 1.0).unwrap();
        assert_eq!(HKind::SpPositive.h(&p, 4.0), 4.0);
        assert_eq!(HKind::SnDual.h(&p, 4.0), 2.0);
        assert_eq!(HKind::Cb.h(&p, -1.0), 0.0);
    }

    #[test]
    fn mass_is_preserved() {
        let p = StableParams::brownian();
        for kind in [HKind::SpPositive, HKind::SnDual, HKind::Cb] {
            for &h in &[0.5, 2.0] {
                let e = h_transform_estimate(kind, &p, 1.0, h, &|_| 1.0, &[], 4000, &rule(), 9).unwrap();
                assert!((e.estimate.mean - 1.0).abs() < 4.0 * e.estimate.stderr, "{kind:?} H={h}: {:?}", e.estimate);
                assert!(e.reliable);
            }
        }
    }

    #[test]
    fn cb_weighting_matches_exact_laplace() {
        let p = StableParams::new(1.5, 1.0).unwrap();
        let f = |path: &Path| (-path.last_value()).exp();
        let e = h_transform_estimate(HKind::Cb, &p, 1.0, 0.5, &f, &[], 4000, &rule(), 3).unwrap();
        let exact = cbi_exact_laplace(&p, 1.0, 0.5, 1.0).unwrap();
        assert!((e.estimate.mean - exact).abs() < 4.0 * e.estimate.stderr + 0.01, "{:?} vs {exact}", e.estimate);
    }

    #[test]
    fn dead_paths_have_zero_weight() {
        let p = StableParams::new(1.5, 1.0).unwrap();
        for i in 0..200 {
            let mut rng = path_rng(1, i);
            let s = weighted_sample(HKind::SnDual, &p, 0.2, 5.0, &|_| 7.0, &[], &rule(), &mut rng).unwrap();
            if !s.alive {
                assert_eq!(s.weight, 0.0);
                assert_eq!(s.functional_value, 0.0);
            }
        }
    }

    #[test]
    fn conditioned_paths_stay_positive() {
        let p = StableParams::new(1.5, 1.0).unwrap();
        let stop = Stopping { stop_at_or_above: Some(50.0), ..Stopping::default() };
        for i in 0..50 {
            let mut rng = path_rng(2, i);
            let run = simulate_conditioned(HKind::SnDual, &p, 1e-6, &rule(), &stop, &mut rng).unwrap();
            assert_eq!(run.end, PathEnd::Exited);
            assert!(run.path.values.iter().all(|&v| v > 0.0));
            assert_eq!(run.bound_exceeded, 0);
        }
        assert!(simulate_conditioned(HKind::SpPositive, &p, 1.0, &rule(), &stop, &mut path_rng(0, 0)).is_err());
    }

    #[test]
    fn conditioned_dual_exit_probability() {
        // P^up_x(hit b before dropping below a) for BM conditioned up (Bessel-3):
        // (1/a - 1/x) / (1/a - 1/b) after the h-transform of the exit problem.
        let p = StableParams::brownian();
        let (a, x, b) = (0.5, 1.0, 2.0);
        let stop = Stopping { stop_at_or_above: Some(b), watch_levels: vec![a], ..Stopping::default() };
        let hits = map_paths(4000, 8, |_, rng| {
            let run = simulate_conditioned(HKind::SnDual, &p, x, &rule(), &stop, rng)?;
            Ok(if run.path.values.iter().all(|&v| v > a) { 1.0 } else { 0.0 })
        })
        .unwrap();
        let e = MCEstimate::from_samples(&hits, 8).unwrap();
        // P_x(hit b before a) h(b)/h(x) = ((x-a)/(b-a)) (b/x)
        let exact = (x - a) / (b - a) * b / x;
        assert!((e.mean - exact).abs() < 4.0 * e.stderr + 0.01, "{e:?} vs {exact}");
    }

    #[test]
    fn acceptance_rate_is_survival_probability() {
        let p = StableParams::new(1.5, 1.0).unwrap();
        let s = survival_conditioned_laplace(&p, 1.0, 1.0, 1.0, 4000, &rule(), 4).unwrap();
        let surv = 1.0 - extinction_cdf(&p, 1.0, 1.0).unwrap();
        assert!((s.acceptance.mean - surv).abs() < 4.0 * s.acceptance.stderr + 2e-3);
        let tiny = survival_conditioned_laplace(&p, 1.0, 1.0, 1e-9, 500, &rule(), 4).unwrap();
        assert!(tiny.estimate.mean > 1.0 - 1e-6);
    }

    #[test]
    fn least_squares_recovers_a_line() {
        let xs = [0.1, 0.2, 0.5, 0.9];
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 2.0 * x).collect();
        let (a, b, r2) = least_squares(&xs, &ys);
        assert!((a - 1.0).abs() < 1e-12 && (b + 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
