//! Gamma and Mittag-Leffler functions, and the scale functions of the stable process.
//!
//! For `psi(lambda) = c_plus lambda^alpha` the scale functions are
//!
//! ```text
//! W^(q)(x) = (alpha / c_plus) x^(alpha-1) E'_alpha((q / c_plus) x^alpha)
//! Z^(q)(x) = E_alpha((q / c_plus) x^alpha)
//! ```
//!
//! for `x >= 0`, obtained from the `c_plus = 1` forms through
//! `1 / (c_plus lambda^alpha - q) = (1 / c_plus) / (lambda^alpha - q / c_plus)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stable_levy::StableParams;

/// Largest `|x|` accepted by the Mittag-Leffler power series.
pub const ML_ARGUMENT_LIMIT: f64 = 30.0;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(z: f64) -> f64 {
    // z is the shifted argument x - 1
    let mut s = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        s += c / (z + i as f64);
    }
    s
}

/// Gamma function (Lanczos, g = 7) with reflection for `x < 1/2`.
pub fn gamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 && x == x.floor() {
        return f64::NAN;
    }
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    if x > 171.7 {
        return f64::INFINITY;
    }
    if x == x.floor() && x <= 23.0 {
        // exact factorials
        return (1..x as u64).fold(1.0, |acc, k| acc * k as f64);
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * lanczos_sum(z)
}

/// `ln |Gamma(x)|`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / (PI * x).sin().abs()).ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecialFnResult {
    pub value: f64,
    /// Bound on the series truncation error plus a rounding allowance.
    pub abs_error_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Series {
    Function,
    Derivative,
}

/// `n`-th term of the series for `E_alpha` or `E'_alpha`.
fn ml_term(alpha: f64, x: f64, n: usize, kind: Series) -> f64 {
    let nf = n as f64;
    let (power, log_coeff) = match kind {
        Series::Function => (n, 0.0),
        Series::Derivative => {
            if n == 0 {
                return 0.0;
            }
            (n - 1, nf.ln())
        }
    };
    if power == 0 {
        return log_coeff.exp() / gamma(1.0 + alpha * nf);
    }
    if x == 0.0 {
        return 0.0;
    }
    let sign = if x < 0.0 && power % 2 == 1 { -1.0 } else { 1.0 };
    sign * (log_coeff + power as f64 * x.abs().ln() - ln_gamma(1.0 + alpha * nf)).exp()
}

fn ml_series(alpha: f64, x: f64, kind: Series) -> Result<SpecialFnResult> {
    if !(alpha > 0.0) {
        return Err(invalid(format!("Mittag-Leffler index must be positive, got {alpha}")));
    }
    if !x.is_finite() || x.abs() > ML_ARGUMENT_LIMIT {
        return Err(Error::Range(format!(
            "Mittag-Leffler argument {x} outside |x| <= {ML_ARGUMENT_LIMIT}"
        )));
    }
    let first = if kind == Series::Derivative { 1 } else { 0 };
    if x == 0.0 {
        return Ok(SpecialFnResult { value: ml_term(alpha, x, first, kind), abs_error_estimate: 0.0 });
    }
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    let mut prev = 0.0f64;
    let mut n = first;
    loop {
        let t = ml_term(alpha, x, n, kind);
        sum += t;
        abs_sum += t.abs();
        // Past the peak the term ratios decrease monotonically, so the tail
        // is dominated by a geometric series with the current ratio.
        if n > first + 1 && t.abs() < prev {
            let ratio = t.abs() / prev;
            let next = ml_term(alpha, x, n + 1, kind).abs();
            let tail = next / (1.0 - ratio);
            if tail <= 1e-17 * sum.abs().max(1e-300) || next == 0.0 {
                let rounding = 4.0 * f64::EPSILON * abs_sum;
                return Ok(SpecialFnResult { value: sum, abs_error_estimate: tail + rounding });
            }
        }
        prev = t.abs();
        n += 1;
        if n > 10_000 {
            return Err(Error::Range(format!("Mittag-Leffler series did not settle at x = {x}")));
        }
    }
}

/// `E_alpha(x) = sum_n x^n / Gamma(1 + alpha n)`.
pub fn mittag_leffler(alpha: f64, x: f64) -> Result<SpecialFnResult> {
    ml_series(alpha, x, Series::Function)
}

/// Term-wise derivative `E'_alpha(x) = sum_{n>=1} n x^(n-1) / Gamma(1 + alpha n)`.
pub fn mittag_leffler_derivative(alpha: f64, x: f64) -> Result<SpecialFnResult> {
    ml_series(alpha, x, Series::Derivative)
}

/// Partial sum with a fixed number of terms (used to audit truncation bounds).
pub fn mittag_leffler_partial(alpha: f64, x: f64, terms: usize, derivative: bool) -> f64 {
    let kind = if derivative { Series::Derivative } else { Series::Function };
    let first = usize::from(derivative);
    (first..first + terms).map(|n| ml_term(alpha, x, n, kind)).sum()
}

/// The `q`-scale function `W^(q)`; zero on the negative half-line.
pub fn scale_w(params: &StableParams, q: f64, x: f64) -> Result<f64> {
    if !(q >= 0.0) {
        return Err(invalid(format!("scale function needs q >= 0, got {q}")));
    }
    if x.is_nan() {
        return Err(invalid("scale function argument is NaN"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let (a, c) = (params.alpha, params.c_plus);
    if q == 0.0 {
        return Ok(x.powf(a - 1.0) / (c * gamma(a)));
    }
    let d = mittag_leffler_derivative(a, q / c * x.powf(a))?;
    Ok(a / c * x.powf(a - 1.0) * d.value)
}

/// `Z^(q)(x) = 1 + q int_0^x W^(q)(y) dy`; equal to 1 for `x <= 0`.
pub fn scale_z(params: &StableParams, q: f64, x: f64) -> Result<f64> {
    if !(q >= 0.0) {
        return Err(invalid(format!("scale function needs q >= 0, got {q}")));
    }
    if x.is_nan() {
        return Err(invalid("scale function argument is NaN"));
    }
    if x <= 0.0 || q == 0.0 {
        return Ok(1.0);
    }
    let e = mittag_leffler(params.alpha, q / params.c_plus * x.powf(params.alpha))?;
    Ok(e.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    #[test]
    fn gamma_reference_values() {
        assert!((gamma(1.5) - PI.sqrt() / 2.0).abs() < 1e-14);
        let mut fact = 1.0;
        for n in 1..20u32 {
            assert!((gamma(n as f64) - fact).abs() <= 1e-12 * fact, "Gamma({n})");
            fact *= n as f64;
        }
        // non-integer arguments through the Lanczos sum
        assert!((gamma(7.5) / (6.5 * 5.5 * 4.5 * 3.5 * 2.5 * 1.5 * PI.sqrt() / 2.0) - 1.0).abs() < 1e-13);
        assert!((gamma(-0.5) + 2.0 * PI.sqrt()).abs() < 1e-12);
        assert!(gamma(0.0).is_nan() && gamma(-2.0).is_nan());
        assert!((ln_gamma(50.5) - gamma(50.5).ln()).abs() < 1e-10);
    }

    #[test]
    fn mittag_leffler_closed_cases() {
        let e1 = mittag_leffler(1.0, 1.0).unwrap();
        assert!((e1.value - 1f64.exp()).abs() < 1e-14);
        let e2 = mittag_leffler(2.0, 1.0).unwrap();
        assert!((e2.value - 1f64.cosh()).abs() < 1e-14);
        let d2 = mittag_leffler_derivative(2.0, 1.0).unwrap();
        assert!((d2.value - 1f64.sinh() / 2.0).abs() < 1e-14);
        // E_2(-x) = cos(sqrt x)
        let neg = mittag_leffler(2.0, -9.0).unwrap();
        assert!((neg.value - 3f64.cos()).abs() < 1e-12);
        assert!(matches!(mittag_leffler(1.5, 31.0), Err(Error::Range(_))));
        assert!(mittag_leffler_derivative(1.5, f64::NAN).is_err());
    }

    #[test]
    fn derivative_at_zero() {
        let d = mittag_leffler_derivative(1.5, 0.0).unwrap();
        assert!((d.value - 1.0 / gamma(2.5)).abs() < 1e-15);
        assert_eq!(mittag_leffler(1.3, 0.0).unwrap().value, 1.0);
    }

    #[test]
    fn truncation_bound_is_honored() {
        for &alpha in &[1.1, 1.5, 2.0] {
            for &x in &[0.3, 2.0, 11.0, 29.0, -7.0] {
                for derivative in [false, true] {
                    let r = if derivative {
                        mittag_leffler_derivative(alpha, x).unwrap()
                    } else {
                        mittag_leffler(alpha, x).unwrap()
                    };
                    let long = mittag_leffler_partial(alpha, x, 400, derivative);
                    assert!(
                        (long - r.value).abs() <= r.abs_error_estimate,
                        "alpha={alpha} x={x} d={derivative}: {} vs {long} bound {}",
                        r.value,
                        r.abs_error_estimate
                    );
                }
            }
        }
    }

    #[test]
    fn scale_w_examples() {
        let b = StableParams::brownian();
        assert!((scale_w(&b, 0.0, 1.0).unwrap() - 2.0).abs() < 1e-14);
        let p = StableParams::new(1.5, 1.0).unwrap();
        assert!((scale_w(&p, 0.0, 1.0).unwrap() - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-12);
        assert_eq!(scale_w(&p, 5.0, -1.0).unwrap(), 0.0);
        // q > 0 route agrees with the q = 0 closed form as q -> 0
        let small = scale_w(&p, 1e-12, 2.0).unwrap();
        assert!((small - scale_w(&p, 0.0, 2.0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn scale_w_laplace_identity_q0() {
        // int_0^inf e^{-lambda x} W(x) dx = 1 / psi(lambda) for lambda = 3
        let p = StableParams::new(1.5, 1.0).unwrap();
        let lambda = 3.0;
        let q = integrate(|x| (-lambda * x).exp() * scale_w(&p, 0.0, x).unwrap(), 0.0, 40.0, 1e-12, 2000).unwrap();
        assert!((q.value - 1.0 / p.psi(lambda).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn scale_z_examples() {
        let p = StableParams::new(1.5, 1.0).unwrap();
        assert_eq!(scale_z(&p, 0.0, 3.7).unwrap(), 1.0);
        assert_eq!(scale_z(&p, 2.0, -1.0).unwrap(), 1.0);
        let p2 = StableParams::new(2.0, 1.0).unwrap();
        assert!((scale_z(&p2, 1.0, 1.0).unwrap() - 1f64.cosh()).abs() < 1e-14);
    }

    #[test]
    fn scale_z_matches_integral_of_w() {
        let p = StableParams::new(1.5, 1.0).unwrap();
        let q = 2.0;
        for k in 1..=12 {
            let x = 0.25 * k as f64;
            let int = integrate(|y| scale_w(&p, q, y).unwrap(), 0.0, x, 1e-13, 2000).unwrap();
            let lhs = scale_z(&p, q, x).unwrap();
            assert!((lhs - (1.0 + q * int.value)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn scale_w_monotone() {
        for &(a, c) in &[(1.3, 1.0), (1.5, 0.5), (2.0, 0.5)] {
            let p = StableParams::new(a, c).unwrap();
            for &q in &[0.0, 0.5, 2.0] {
                let mut prev = 0.0;
                for k in 0..=200 {
                    let x = 2.5 * k as f64 / 200.0;
                    let w = scale_w(&p, q, x).unwrap();
                    assert!(w >= prev, "alpha={a} q={q} x={x}");
                    prev = w;
                }
            }
        }
    }
}
