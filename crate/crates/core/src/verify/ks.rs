//! Kolmogorov-Smirnov statistics with asymptotic p-values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest sample accepted by the KS routines.
pub const KS_MIN_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(l) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 l^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// P-value for statistic `d` at effective size `n_eff`, with the Stephens
/// small-sample correction `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) d`.
fn p_value(d: f64, n_eff: f64) -> f64 {
    let r = n_eff.sqrt();
    kolmogorov_q((r + 0.12 + 0.11 / r) * d)
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: KS_MIN_SAMPLES, got: samples.len() });
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Estimation("KS sample contains NaN".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample KS test of `samples` against the distribution function `cdf`.
///
/// Samples may be `+inf` (censored or absent values); they sit above every
/// finite point of the CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let v = sorted(samples)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        // treat ties as one jump of the empirical CDF
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let f = if v[i].is_finite() { cdf(v[i]) } else { 1.0 };
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Estimation(format!("cdf returned {f} at {}", v[i])));
        }
        let below = i as f64 / n;
        let upto = (j + 1) as f64 / n;
        d = d.max((f - below).abs()).max((upto - f).abs());
        i = j + 1;
    }
    Ok(KsResult { statistic: d, p_value: p_value(d, n) })
}

/// Two-sample KS test; symmetric in its arguments.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i].total_cmp(&b[j]).is_le() { a[i] } else { b[j] };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult { statistic: d, p_value: p_value(d, na * nb / (na + nb)) })
}
