//! Goodness-of-fit statistics shared by the Monte-Carlo suites.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Significance level used by every suite.
pub const ALPHA: f64 = 0.05;

/// Asymptotic one-sample KS critical coefficient at 5%.
pub const KS_COEFF_5PCT: f64 = 1.358;

/// Shrink factor applied when the reference distribution's parameter was
/// estimated from the same sample.
pub const ESTIMATED_PARAM_FACTOR: f64 = 0.886;

/// Kolmogorov–Smirnov statistic `sup |F_n(x) - F(x)|` of `sorted` against
/// a continuous CDF. `sorted` must be ascending.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Critical value at 5% for a sample of `n` against a fully specified CDF.
pub fn ks_critical_known(n: usize) -> f64 {
    KS_COEFF_5PCT / (n as f64).sqrt()
}

/// Critical value at 5% when the rate was fitted from the sample.
pub fn ks_critical_estimated(n: usize) -> f64 {
    ESTIMATED_PARAM_FACTOR * ks_critical_known(n)
}

/// Sup-distance between the empirical CDF of `sorted` and `cdf`,
/// evaluated at every sample point from both sides. Identical to
/// [`ks_statistic`]; named for use as a plain distance.
pub fn sup_cdf_gap<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    ks_statistic(sorted, cdf)
}

/// Pearson chi-square outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub critical: f64,
    pub p_value: f64,
    pub passed: bool,
}

/// Pearson chi-square of observed counts against expected counts
/// (same length, expected all positive). `fitted_params` reduces the
/// degrees of freedom.
pub fn chi_square(observed: &[u64], expected: &[f64], fitted_params: usize, alpha: f64) -> ChiSquareReport {
    assert_eq!(observed.len(), expected.len());
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum();
    let dof = observed.len().saturating_sub(1 + fitted_params).max(1);
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    let critical = dist.inverse_cdf(1.0 - alpha);
    let p_value = 1.0 - dist.cdf(statistic);
    ChiSquareReport { statistic, degrees_of_freedom: dof, critical, p_value, passed: statistic < critical }
}

/// Chi-square test that `counts` are uniform over their cells.
pub fn chi_square_uniform(counts: &[u64], alpha: f64) -> ChiSquareReport {
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    chi_square(counts, &vec![e; counts.len()], 0, alpha)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Spearman rank correlation of two equal-length sequences (average ranks
/// for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    let ma = mean(&ra);
    let mb = mean(&rb);
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    num / (da * db).sqrt()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod unit {
    use super::*;

    #[test]
    fn ks_of_perfect_grid_is_half_step() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn chi_square_flags_skew() {
        let r = chi_square_uniform(&[250, 250, 250, 250], 0.05);
        assert!(r.passed && r.statistic == 0.0);
        assert!((r.critical - 7.814727903).abs() < 1e-6);
        let r = chi_square_uniform(&[400, 200, 200, 200], 0.05);
        assert!(!r.passed);
    }

    #[test]
    fn spearman_perfect_order() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[0.1, 0.5, 0.7, 9.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
    }
}
