//! Exact distributional formulas for the stable CB-process, its conditioned
//! versions and the Lévy processes of their Lamperti representations.
//!
//! Every Monte Carlo check in [`crate::verify`] compares against a function
//! from this module.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate, integrate_with_breaks};
use crate::special_functions::{gamma, mittag_leffler, mittag_leffler_derivative, scale_w, scale_z};
use crate::stable_levy::StableParams;

/// Absolute tolerance of every quadrature in this module.
pub const QUAD_TOL: f64 = 1e-10;
const QUAD_MAX_INTERVALS: usize = 4_000;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be nonnegative and finite, got {v}")))
    }
}

/// `u_t(lambda) = [c_plus (alpha-1) t + lambda^-(alpha-1)]^(-1/(alpha-1))`.
pub fn u_t(params: &StableParams, t: f64, lambda: f64) -> Result<f64> {
    check_nonneg("t", t)?;
    check_positive("lambda", lambda)?;
    let b = params.alpha - 1.0;
    if t == 0.0 {
        return Ok(lambda);
    }
    Ok((params.c_plus * b * t + lambda.powf(-b)).powf(-1.0 / b))
}

/// `u_t(infinity) = [c_plus (alpha-1) t]^(-1/(alpha-1))`, the extinction rate.
pub fn u_t_infinity(params: &StableParams, t: f64) -> Result<f64> {
    check_positive("t", t)?;
    let b = params.alpha - 1.0;
    Ok((params.c_plus * b * t).powf(-1.0 / b))
}

/// `E_x[exp(-lambda Y_t)] = exp(-x u_t(lambda))`.
pub fn cb_laplace(params: &StableParams, x: f64, t: f64, lambda: f64) -> Result<f64> {
    check_nonneg("x", x)?;
    let u = u_t(params, t, lambda)?;
    Ok((-x * u).exp())
}

/// `P_x(T_0^- <= t)`.
pub fn extinction_cdf(params: &StableParams, x: f64, t: f64) -> Result<f64> {
    check_positive("x", x)?;
    if t <= 0.0 {
        if t.is_nan() {
            return Err(invalid("t is NaN"));
        }
        return Ok(0.0);
    }
    Ok((-x * u_t_infinity(params, t)?).exp())
}

/// `P_x(T_0^- > t)` without cancellation for large `t`.
pub fn survival_probability(params: &StableParams, x: f64, t: f64) -> Result<f64> {
    check_positive("x", x)?;
    if t <= 0.0 {
        return Ok(1.0);
    }
    Ok(-(-x * u_t_infinity(params, t)?).exp_m1())
}

/// Density of `I = I((alpha-1) xi)`, the derivative of `extinction_cdf(x = 1, .)`.
pub fn frechet_density(params: &StableParams, s: f64) -> Result<f64> {
    check_positive("s", s)?;
    let b = params.alpha - 1.0;
    let k = params.c_plus * b * s;
    let tail = k.powf(-1.0 / b);
    if !tail.is_finite() {
        return Ok(0.0);
    }
    Ok(params.c_plus * k.powf(-params.alpha / b) * (-tail).exp())
}

/// `P(I > t) ~ (c_plus (alpha-1) t)^(-1/(alpha-1))` as `t -> infinity`.
pub fn tail_i_asymptotic(params: &StableParams, t: f64) -> Result<f64> {
    check_positive("t", t)?;
    u_t_infinity(params, t)
}

/// Mean of `-xi` fixed by the normalization of the entrance law.
pub fn canonical_m(params: &StableParams) -> f64 {
    params.c_plus * (params.alpha - 1.0) * gamma(params.alpha)
}

/// Entrance law of the time-changed conditioned dual started at 0:
/// `(c_plus/m) int_0^inf x^(-(2a-1)/(a-1)) f((t c_plus (a-1)/x)^(1/(a-1))) exp(-x^(-1/(a-1))) dx`,
/// the law of `(t / I)^(1/(alpha-1))` tilted by `1/I`, with `I` the exponential functional.
///
/// Evaluated after the substitution `u = x^(-1/(alpha-1))`, which turns the
/// integral into `(c_plus (alpha-1)/m) int_0^inf u^(alpha-1) f((t c_plus (alpha-1))^(1/(alpha-1)) u) e^(-u) du`.
pub fn entrance_law_expectation<F: Fn(f64) -> f64>(
    params: &StableParams,
    m: f64,
    t: f64,
    f: F,
) -> Result<f64> {
    entrance_law_with_breaks(params, m, t, f, &[])
}

fn entrance_law_with_breaks<F: Fn(f64) -> f64>(
    params: &StableParams,
    m: f64,
    t: f64,
    f: F,
    breaks_in_z: &[f64],
) -> Result<f64> {
    check_positive("m", m)?;
    check_positive("t", t)?;
    let b = params.alpha - 1.0;
    let scale = (t * params.c_plus * b).powf(1.0 / b);
    let g = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        u.powf(b) * f(scale * u) * (-u).exp()
    };
    // Beyond u = 100 the weight u^(alpha-1) e^-u is below 1e-41.
    let upper = 100.0;
    let breaks: Vec<f64> = breaks_in_z
        .iter()
        .filter(|&&z| z > 0.0)
        .map(|&z| z / scale)
        .collect();
    let q = integrate_with_breaks(g, 0.0, upper, &breaks, QUAD_TOL, QUAD_MAX_INTERVALS)?;
    Ok(params.c_plus * b / m * q.value)
}

/// Entrance-law probability of `{Z_t <= a}`.
pub fn entrance_law_cdf(params: &StableParams, m: f64, t: f64, a: f64) -> Result<f64> {
    entrance_law_with_breaks(params, m, t, |z| if z <= a { 1.0 } else { 0.0 }, &[a])
}

/// `E^(up)[exp(-lambda Y_t)]` for the CBI-process started at 0.
pub fn cbi_entrance_laplace(params: &StableParams, t: f64, lambda: f64) -> Result<f64> {
    check_nonneg("t", t)?;
    check_nonneg("lambda", lambda)?;
    let b = params.alpha - 1.0;
    Ok((1.0 + params.c_plus * b * t * lambda.powf(b)).powf(-params.alpha / b))
}

/// `E_x^(up)[exp(-lambda Y_t)] = exp(-x u_t(lambda)) psi(u_t(lambda)) / psi(lambda)`.
pub fn cbi_exact_laplace(params: &StableParams, x: f64, t: f64, lambda: f64) -> Result<f64> {
    check_nonneg("x", x)?;
    let u = u_t(params, t, lambda)?;
    Ok((-x * u).exp() * (u / lambda).powf(params.alpha))
}

/// Normalization `c_t = [c_plus (alpha-1) t]^(1/(alpha-1))` of the quasi-stationary limits.
pub fn qs_norm(params: &StableParams, t: f64) -> Result<f64> {
    Ok(1.0 / u_t_infinity(params, t)?)
}

/// `lim_t E_x[exp(-lambda Y_t / c_t) | T_0^- > t] = 1 - [1 + lambda^-(alpha-1)]^(-1/(alpha-1))`.
pub fn qs_limit(params: &StableParams, lambda: f64) -> Result<f64> {
    check_positive("lambda", lambda)?;
    let b = params.alpha - 1.0;
    let eps = lambda.powf(-b);
    Ok(-(-(eps.ln_1p()) / b).exp_m1())
}

/// `lim_t E_x^(up)[exp(-lambda Y_t / c_t)] = [lambda^(alpha-1) + 1]^(-alpha/(alpha-1))`.
pub fn cbi_qs_limit(params: &StableParams, lambda: f64) -> Result<f64> {
    check_positive("lambda", lambda)?;
    let b = params.alpha - 1.0;
    Ok((lambda.powf(b) + 1.0).powf(-params.alpha / b))
}

/// Ratio `u_t(lambda / c_t) / u_t(infinity)`; tends to `1 - qs_limit(lambda)`.
pub fn qs_ratio(params: &StableParams, t: f64, lambda: f64) -> Result<f64> {
    let ct = qs_norm(params, t)?;
    Ok(u_t(params, t, lambda / ct)? / u_t_infinity(params, t)?)
}

/// Exact `E_x[exp(-lambda Y_t / c_t) | T_0^- > t]` at finite `t`.
pub fn survival_conditioned_laplace_exact(params: &StableParams, x: f64, t: f64, lambda: f64) -> Result<f64> {
    check_positive("x", x)?;
    let ct = qs_norm(params, t)?;
    let a = -x * u_t(params, t, lambda / ct)?;
    let b = -x * u_t_infinity(params, t)?;
    // (e^a - e^b) / (1 - e^b)
    Ok((a.exp_m1() - b.exp_m1()) / -b.exp_m1())
}

/// `P_x(inf_{t <= U_y} Y_t >= z) = W(y - z) / W(y)` for `z <= y`.
pub fn cor1_infimum_law(params: &StableParams, y: f64, z: f64) -> Result<f64> {
    check_positive("y", y)?;
    if z.is_nan() {
        return Err(invalid("z is NaN"));
    }
    if z > y {
        return Ok(0.0);
    }
    if z <= 0.0 {
        return Ok(1.0);
    }
    Ok(((y - z) / y).powf(params.alpha - 1.0))
}

/// `P(inf_{t <= D_u} xi_t >= v) = (1 - e^(v-u))^(alpha-1)` for `v < u < 0`.
pub fn prop3_infimum_law(alpha: f64, u: f64, v: f64) -> Result<f64> {
    if !(u < 0.0 && v < u) {
        return Err(invalid(format!("need v < u < 0, got u = {u}, v = {v}")));
    }
    Ok((-(v - u).exp_m1()).powf(alpha - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitBranch {
    /// `E_x[exp(-q int_0^{T_a^+} Y) ; T_a^+ < T_0^-]`
    #[serde(rename = "i")]
    UpFirst,
    /// `E_x[exp(-q int_0^{T_0^-} Y) ; T_0^- < T_a^+]`
    #[serde(rename = "ii")]
    ExtinctFirst,
}

/// Two-sided exit of the CB-process with the total progeny as discount.
pub fn thm2_exit(params: &StableParams, x: f64, a: f64, q: f64, branch: ExitBranch) -> Result<f64> {
    check_positive("x", x)?;
    if !(a >= x) || !a.is_finite() {
        return Err(invalid(format!("need a >= x, got a = {a}, x = {x}")));
    }
    check_nonneg("q", q)?;
    let w_ratio = scale_w(params, q, a - x)? / scale_w(params, q, a)?;
    Ok(match branch {
        ExitBranch::ExtinctFirst => w_ratio,
        ExitBranch::UpFirst => scale_z(params, q, a - x)? - w_ratio * scale_z(params, q, a)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpFunctionalBranch {
    /// Discounted up to the first passage of `xi` above `a`, on `{S_a^+ < inf}`.
    #[serde(rename = "expflp1")]
    BeforePassage,
    /// Discounted over the whole lifetime, on `{S_a^+ = inf}`.
    #[serde(rename = "expflp2")]
    NoPassage,
}

/// Laplace transforms of exponential functionals `int e^(alpha xi_s) ds` of `xi`.
///
/// `q` enters the Mittag-Leffler functions as `q / c_plus`; for
/// `c_plus = 1` these are the plain Mittag-Leffler expressions.
pub fn thm7_exp_functional(params: &StableParams, a: f64, q: f64, branch: ExpFunctionalBranch) -> Result<f64> {
    check_positive("a", a)?;
    check_positive("q", q)?;
    let al = params.alpha;
    let qq = q / params.c_plus;
    let inner = qq * a.exp_m1().powf(al);
    let outer = qq * (al * a).exp();
    let factor = (-(-a).exp_m1()).powf(al - 1.0);
    let d_inner = mittag_leffler_derivative(al, inner)?.value;
    let d_outer = mittag_leffler_derivative(al, outer)?.value;
    Ok(match branch {
        ExpFunctionalBranch::NoPassage => factor * d_inner / d_outer,
        ExpFunctionalBranch::BeforePassage => {
            let e_inner = mittag_leffler(al, inner)?.value;
            let e_outer = mittag_leffler(al, outer)?.value;
            e_inner - factor * d_inner * e_outer / d_outer
        }
    })
}

/// `E[exp(-lambda/I*) / I*] = m* (alpha-1) (1 + c_plus (alpha-1) lambda^(alpha-1))^(-alpha/(alpha-1))`.
pub fn cor4_expn(params: &StableParams, m_star: f64, lambda: f64) -> Result<f64> {
    check_positive("m_star", m_star)?;
    Ok(m_star * (params.alpha - 1.0) * cbi_entrance_laplace(params, 1.0, lambda)?)
}

/// `P^(up)(sup_{s <= U_y^-} Y_s <= z) = 1 - y / (m* z)`.
pub fn prop4_sup_law(m_star: f64, y: f64, z: f64) -> Result<f64> {
    check_positive("m_star", m_star)?;
    check_positive("y", y)?;
    if !(z >= y) {
        return Err(invalid(format!("need z >= y, got y = {y}, z = {z}")));
    }
    if m_star * z < y {
        return Err(Error::Range(format!(
            "1 - y/(m* z) is negative for m* = {m_star}, y = {y}, z = {z}"
        )));
    }
    Ok(1.0 - y / (m_star * z))
}

/// Laplace exponents of `xi` and `xi*`, the Lévy processes behind the
/// killed and the conditioned stable process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiExponents {
    pub alpha: f64,
    /// Mean of `-xi`.
    pub m: f64,
    /// Mean of `xi*`.
    pub m_star: f64,
}

impl XiExponents {
    pub fn new(alpha: f64, m: f64, m_star: f64) -> Result<Self> {
        check_positive("m", m)?;
        check_positive("m_star", m_star)?;
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(invalid(format!("alpha must lie in (1, 2], got {alpha}")));
        }
        Ok(Self { alpha, m, m_star })
    }

    /// `m = c_plus (alpha-1) Gamma(alpha)`, `m* = 1`.
    pub fn canonical(params: &StableParams) -> Self {
        Self { alpha: params.alpha, m: canonical_m(params), m_star: 1.0 }
    }

    pub fn psi(&self, lambda: f64) -> Result<f64> {
        xi_exponent(self.alpha, self.m, lambda)
    }

    pub fn psi_star(&self, lambda: f64) -> Result<f64> {
        xi_star_exponent(self.alpha, self.m_star, lambda)
    }
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// `m Gamma(s + alpha) / (Gamma(s) Gamma(alpha))` with exact zeros at the poles of `Gamma(s)`.
fn gamma_ratio_exponent(alpha: f64, scale: f64, s: f64) -> Result<f64> {
    if s.is_nan() {
        return Err(invalid("exponent argument is NaN"));
    }
    if is_nonpositive_integer(s + alpha) {
        return Err(Error::Range(format!("pole of Gamma({}) in the numerator", s + alpha)));
    }
    if is_nonpositive_integer(s) {
        return Ok(0.0);
    }
    Ok(scale * gamma(s + alpha) / (gamma(s) * gamma(alpha)))
}

/// `Psi(lambda) = m Gamma(lambda + alpha) / (Gamma(lambda) Gamma(alpha))`.
pub fn xi_exponent(alpha: f64, m: f64, lambda: f64) -> Result<f64> {
    gamma_ratio_exponent(alpha, m, lambda)
}

/// `Psi*(lambda) = m* Gamma(lambda - 1 + alpha) / (Gamma(lambda - 1) Gamma(alpha))`.
pub fn xi_star_exponent(alpha: f64, m_star: f64, lambda: f64) -> Result<f64> {
    gamma_ratio_exponent(alpha, m_star, lambda - 1.0)
}

/// Numerical `int_0^upper f`, exposed for tests and the CLI.
pub fn quad(f: impl Fn(f64) -> f64, lower: f64, upper: f64) -> Result<f64> {
    Ok(integrate(f, lower, upper, QUAD_TOL, QUAD_MAX_INTERVALS)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_to_infinity;

    fn p15() -> StableParams {
        StableParams::new(1.5, 1.0).unwrap()
    }

    /// Solve `int_u^lambda dv / psi(v) = t` for `u` by bisection on the
    /// quadrature of `1/psi` (independent of the explicit solution).
    fn u_t_oracle(params: &StableParams, t: f64, lambda: f64) -> f64 {
        let lhs = |u: f64| integrate(|v| 1.0 / params.psi(v).unwrap(), u, lambda, 1e-13, 2000).unwrap().value;
        let (mut lo, mut hi) = (1e-12, lambda);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if lhs(mid) > t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn u_t_examples() {
        assert_eq!(u_t(&p15(), 0.0, 7.0).unwrap(), 7.0);
        let b = StableParams::brownian();
        assert!((u_t(&b, 2.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((u_t_oracle(&b, 2.0, 1.0) - 0.5).abs() < 1e-9);
        assert!((u_t(&p15(), 0.7, 2.0).unwrap() - u_t_oracle(&p15(), 0.7, 2.0)).abs() < 1e-9);
        let s = u_t(&p15(), 1.0, u_t(&p15(), 2.0, 2.0).unwrap()).unwrap();
        assert!((u_t(&p15(), 3.0, 2.0).unwrap() - s).abs() < 1e-12 * s);
        assert!(u_t(&p15(), 0.0, 0.0).is_err());
    }

    #[test]
    fn cb_laplace_examples() {
        let b = StableParams::brownian();
        assert_eq!(cb_laplace(&p15(), 0.0, 3.0, 1.0).unwrap(), 1.0);
        assert!((cb_laplace(&b, 1.0, 2.0, 1.0).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((cb_laplace(&p15(), 1.0, 0.0, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn extinction_examples() {
        let b = StableParams::brownian();
        assert!((extinction_cdf(&b, 1.0, 2.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!((extinction_cdf(&p15(), 1.0, 1.0).unwrap() - (-4f64).exp()).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 1..100 {
            let c = extinction_cdf(&p15(), 1.0, 0.1 * k as f64).unwrap();
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn frechet_density_normalized_and_matches_cdf() {
        for &(a, c) in &[(1.5, 1.0), (1.3, 0.5), (2.0, 0.5)] {
            let p = StableParams::new(a, c).unwrap();
            let total = integrate_to_infinity(|s| if s > 0.0 { frechet_density(&p, s).unwrap() } else { 0.0 }, 0.0, 1e-12, 4000)
                .unwrap();
            assert!((total.value - 1.0).abs() < 1e-8, "alpha={a}: {}", total.value);
            for &s in &[0.2, 0.7, 1.3, 4.0] {
                let h = 1e-5;
                let fd = (extinction_cdf(&p, 1.0, s + h).unwrap() - extinction_cdf(&p, 1.0, s - h).unwrap()) / (2.0 * h);
                assert!((fd - frechet_density(&p, s).unwrap()).abs() < 1e-8);
            }
        }
        assert!(frechet_density(&p15(), 1e-6).unwrap() < 1e-12);
    }

    #[test]
    fn entrance_law_normalization() {
        for &(a, c) in &[(1.5, 1.0), (1.3, 1.0), (2.0, 0.5), (1.8, 0.5)] {
            let p = StableParams::new(a, c).unwrap();
            let m = canonical_m(&p);
            let total = entrance_law_expectation(&p, m, 0.3, |_| 1.0).unwrap();
            assert!((total - 1.0).abs() < 1e-8, "alpha={a}");
        }
    }

    /// Entrance law in the original variable, integrated directly.
    fn entrance_oracle(p: &StableParams, m: f64, t: f64, f: impl Fn(f64) -> f64) -> f64 {
        let b = p.alpha - 1.0;
        let g = |x: f64| {
            if x <= 0.0 {
                return 0.0;
            }
            let w = x.powf(-(2.0 * p.alpha - 1.0) / b) * (-x.powf(-1.0 / b)).exp();
            if w == 0.0 {
                0.0
            } else {
                w * f((t * p.c_plus * b / x).powf(1.0 / b))
            }
        };
        p.c_plus / m * integrate_to_infinity(g, 0.0, 1e-12, 4000).unwrap().value
    }

    #[test]
    fn entrance_law_identity_function() {
        let p = p15();
        let m = canonical_m(&p);
        let direct = entrance_law_expectation(&p, m, 1.0, |z| z).unwrap();
        let oracle = entrance_oracle(&p, m, 1.0, |z| z);
        assert!(direct > 0.0);
        assert!((direct - oracle).abs() < 1e-7, "{direct} vs {oracle}");
        // smooth bounded test function
        let direct = entrance_law_expectation(&p, m, 0.4, |z| (-z).exp()).unwrap();
        let oracle = entrance_oracle(&p, m, 0.4, |z| (-z).exp());
        assert!((direct - oracle).abs() < 1e-8);
    }

    #[test]
    fn entrance_law_time_scaling() {
        // Z_t has the law of t^(1/(alpha-1)) Z_1, so P(Z_t <= a) = P(Z_{t/k} <= a k^(-1/(alpha-1))).
        for &alpha in &[1.5, 1.3, 2.0] {
            let p = StableParams::new(alpha, 0.7).unwrap();
            let m = canonical_m(&p);
            for &(t, a, k) in &[(1.0, 0.5, 2.0), (0.05, 0.01, 5.0), (3.0, 2.0, 0.5)] {
                let lhs = entrance_law_cdf(&p, m, t, a).unwrap();
                let rhs = entrance_law_cdf(&p, m, t / k, a * k.powf(-1.0 / (alpha - 1.0))).unwrap();
                assert!((lhs - rhs).abs() < 1e-8, "alpha={alpha}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn entrance_law_at_two_is_the_cbi_entrance_law() {
        let p = StableParams::new(2.0, 0.5).unwrap();
        let m = canonical_m(&p);
        for &(t, lambda) in &[(0.3, 1.0), (2.0, 0.25)] {
            let e = entrance_law_expectation(&p, m, t, |z| (-lambda * z).exp()).unwrap();
            assert!((e - cbi_entrance_laplace(&p, t, lambda).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn cbi_laplace_examples() {
        let b = StableParams::brownian();
        assert_eq!(cbi_entrance_laplace(&p15(), 0.0, 3.0).unwrap(), 1.0);
        assert!((cbi_entrance_laplace(&b, 2.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((cbi_exact_laplace(&b, 0.0, 2.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((cbi_exact_laplace(&p15(), 1.3, 0.0, 0.7).unwrap() - (-1.3f64 * 0.7).exp()).abs() < 1e-15);
        let lim = cbi_exact_laplace(&p15(), 1e-300, 1.0, 1.0).unwrap();
        assert!((lim - cbi_entrance_laplace(&p15(), 1.0, 1.0).unwrap()).abs() < 1e-12);
        let mut prev = 1.0;
        for k in 1..50 {
            let v = cbi_exact_laplace(&p15(), 1.0, 1.0, 0.1 * k as f64).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn quasi_stationary_examples() {
        let b = StableParams::brownian();
        assert!((qs_limit(&b, 1.0).unwrap() - 0.5).abs() < 1e-15);
        // Laplace transform of a law without an atom at 0: -> 1 as lambda -> 0, -> 0 as lambda -> inf
        assert!(qs_limit(&p15(), 1e-8).unwrap() > 1.0 - 1e-4);
        assert!(qs_limit(&p15(), 1e8).unwrap() < 1e-3);
        assert!((cbi_qs_limit(&b, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((cbi_qs_limit(&p15(), 1e-12).unwrap() - 1.0).abs() < 1e-5);
        let t = 1e6;
        let ct = qs_norm(&p15(), t).unwrap();
        let finite = cbi_exact_laplace(&p15(), 1.0, t, 1.0 / ct).unwrap();
        assert!((finite - cbi_qs_limit(&p15(), 1.0).unwrap()).abs() < 1e-3);
        for &lambda in &[0.5, 1.0, 2.0] {
            let r = qs_ratio(&p15(), 1e6, lambda).unwrap();
            assert!((1.0 - r - qs_limit(&p15(), lambda).unwrap()).abs() < 1e-4);
        }
    }

    #[test]
    fn infimum_laws() {
        assert!((cor1_infimum_law(&p15(), 1.0, 0.5).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(cor1_infimum_law(&p15(), 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(cor1_infimum_law(&p15(), 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(cor1_infimum_law(&p15(), 1.0, 2.0).unwrap(), 0.0);
        let v = prop3_infimum_law(1.5, -1.0, -2.0).unwrap();
        assert!((v - (1.0 - (-1f64).exp()).sqrt()).abs() < 1e-15);
        // (1 - e^-1)^(1/2) = 0.795060 to six places
        assert!((v - 0.795_060).abs() < 1e-6);
        assert!((prop3_infimum_law(1.5, -1.0, -60.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(prop3_infimum_law(1.5, -1.0, -1.0 - 1e-12).unwrap() < 1e-5);
        assert!(prop3_infimum_law(1.5, -1.0, -0.5).is_err());
        assert!(prop3_infimum_law(1.5, 0.5, -0.5).is_err());
    }

    #[test]
    fn thm2_examples() {
        let b = StableParams::brownian();
        let ii = thm2_exit(&b, 1.0, 2.0, 0.0, ExitBranch::ExtinctFirst).unwrap();
        assert!((ii - 0.5).abs() < 1e-15);
        let i = thm2_exit(&b, 1.0, 2.0, 0.0, ExitBranch::UpFirst).unwrap();
        assert!((i - 0.5).abs() < 1e-15);
        for &(a, c) in &[(1.3, 1.0), (1.5, 1.0), (2.0, 0.5)] {
            let p = StableParams::new(a, c).unwrap();
            for &(x, lvl) in &[(1.0, 2.0), (1.0, 4.0), (0.3, 1.0)] {
                let s0 = thm2_exit(&p, x, lvl, 0.0, ExitBranch::UpFirst).unwrap()
                    + thm2_exit(&p, x, lvl, 0.0, ExitBranch::ExtinctFirst).unwrap();
                assert_eq!(s0, 1.0);
                for &q in &[0.1, 0.5, 1.0] {
                    if q / c * lvl.powf(a) > crate::special_functions::ML_ARGUMENT_LIMIT {
                        assert!(thm2_exit(&p, x, lvl, q, ExitBranch::UpFirst).is_err());
                        continue;
                    }
                    let s = thm2_exit(&p, x, lvl, q, ExitBranch::UpFirst).unwrap()
                        + thm2_exit(&p, x, lvl, q, ExitBranch::ExtinctFirst).unwrap();
                    assert!(s <= 1.0 && s > 0.0, "alpha={a} q={q}: {s}");
                }
            }
        }
        assert!(thm2_exit(&b, 2.0, 1.0, 0.0, ExitBranch::UpFirst).is_err());
    }

    #[test]
    fn thm7_matches_thm2_under_substitution() {
        let p = p15();
        let e1 = thm7_exp_functional(&p, 1.0, 0.7, ExpFunctionalBranch::BeforePassage).unwrap();
        let t1 = thm2_exit(&p, 1.0, 1f64.exp(), 0.7, ExitBranch::UpFirst).unwrap();
        assert!((e1 - t1).abs() < 1e-10);
        let e2 = thm7_exp_functional(&p, 1.0, 0.7, ExpFunctionalBranch::NoPassage).unwrap();
        let t2 = thm2_exit(&p, 1.0, 1f64.exp(), 0.7, ExitBranch::ExtinctFirst).unwrap();
        assert!((e2 - t2).abs() < 1e-10);
        // x != 1: discount q x^alpha, level a = log(b/x)
        let p2 = StableParams::new(1.8, 0.5).unwrap();
        let (x, lvl, q) = (0.6f64, 1.5f64, 0.4f64);
        let e = thm7_exp_functional(&p2, (lvl / x).ln(), q * x.powf(1.8), ExpFunctionalBranch::BeforePassage).unwrap();
        let t = thm2_exit(&p2, x, lvl, q, ExitBranch::UpFirst).unwrap();
        assert!((e - t).abs() < 1e-10);
    }

    #[test]
    fn thm7_limits() {
        let p = p15();
        let mut prev = 0.0;
        for a in 1..=10 {
            let v = thm7_exp_functional(&p, a as f64, 1e-6, ExpFunctionalBranch::NoPassage).unwrap();
            assert!(v > prev && v <= 1.0);
            prev = v;
        }
        for &a in &[0.5, 1.0, 2.0] {
            let s = thm7_exp_functional(&p, a, 1e-8, ExpFunctionalBranch::BeforePassage).unwrap()
                + thm7_exp_functional(&p, a, 1e-8, ExpFunctionalBranch::NoPassage).unwrap();
            assert!((s - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn cor4_and_prop4() {
        let p = p15();
        assert!((cor4_expn(&p, 2.0, 0.0).unwrap() - 2.0 * 0.5).abs() < 1e-15);
        for &l in &[0.1, 1.0, 3.0, 10.0] {
            let r = cor4_expn(&p, 2.0, l).unwrap() / cbi_entrance_laplace(&p, 1.0, l).unwrap();
            assert!((r - 1.0).abs() < 1e-12);
        }
        assert!(cor4_expn(&p, 2.0, 1e12).unwrap() < 1e-9);
        assert_eq!(prop4_sup_law(1.0, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(prop4_sup_law(1.0, 1.0, 2.0).unwrap(), 0.5);
        assert!(prop4_sup_law(1.0, 1.0, 1e12).unwrap() > 1.0 - 1e-11);
        assert!(prop4_sup_law(0.5, 1.0, 1.5).is_err());
        assert!(prop4_sup_law(1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn xi_exponents() {
        let p = p15();
        let xi = XiExponents::canonical(&p);
        assert_eq!(xi.psi(-1.0).unwrap(), 0.0);
        assert_eq!(xi.psi(0.0).unwrap(), 0.0);
        assert_eq!(xi.psi_star(1.0).unwrap(), 0.0);
        assert_eq!(xi.psi_star(0.0).unwrap(), 0.0);
        let ratios: Vec<f64> = [2.0, 2.5, 3.0].iter().map(|&l| xi.psi(l - 1.0).unwrap() / xi.psi_star(l).unwrap()).collect();
        for r in &ratios {
            assert!((r - xi.m / xi.m_star).abs() < 1e-12);
        }
        assert!(xi.psi(-1.5).is_err());
        // Psi'(0) = m: the mean of -xi
        let h = 1e-6;
        let d = (xi.psi(h).unwrap() - xi.psi(-h).unwrap()) / (2.0 * h);
        assert!((d - xi.m).abs() < 1e-6);
    }

    #[test]
    fn tail_asymptotics() {
        let p = p15();
        for &(t, tol) in &[(1e6, 1e-3), (1e8, 1e-4)] {
            let ratio = survival_probability(&p, 1.0, t).unwrap() / tail_i_asymptotic(&p, t).unwrap();
            assert!((ratio - 1.0).abs() < tol);
        }
        assert!(tail_i_asymptotic(&p, 2.0).unwrap() < tail_i_asymptotic(&p, 1.0).unwrap());
    }

    #[test]
    fn normalization_ledger() {
        let p = StableParams::new(1.7, 0.8).unwrap();
        assert!((canonical_m(&p) - 0.8 * 0.7 * gamma(1.7)).abs() < 1e-15);
    }
}
