use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{arg_err, Error, Result};

/// Largest `n` for which [`wilcoxon_signed_rank`] enumerates the exact null.
pub const WILCOXON_EXACT_MAX_N: usize = 15;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Sample Pearson correlation.
///
/// When exactly one input is constant there is no measurable linear
/// association and `0.0` is returned; both constant is an error.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(arg_err!("pearson_r: lengths {} and {} differ", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(arg_err!("pearson_r needs at least 2 pairs, got {}", x.len()));
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    match (sxx > 0.0, syy > 0.0) {
        (false, false) => Err(Error::UndefinedCorrelation("both sequences are constant".into())),
        (true, true) => Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)),
        _ => Ok(0.0),
    }
}

pub fn r_squared(r: f64) -> f64 {
    r * r
}

/// Bonferroni-adjusted p-value for `m` comparisons.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W-)` over the nonzero differences.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Number of nonzero differences used.
    pub n: usize,
    pub exact: bool,
}

/// Average ranks of `values` (1-based), doubled so that midranks stay integral.
fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1, average doubled = (i+1)+(j+1)
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Paired two-sided Wilcoxon signed-rank test.
///
/// Zero differences are dropped and ties get midranks. Up to
/// [`WILCOXON_EXACT_MAX_N`] nonzero pairs the null distribution is
/// enumerated over all sign assignments; above that a normal approximation
/// with tie correction is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(arg_err!("wilcoxon: lengths {} and {} differ", a.len(), b.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::DegenerateTest("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks2 = doubled_midranks(&abs);
    let total2: u64 = ranks2.iter().sum();
    let plus2: u64 = diffs.iter().zip(&ranks2).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let w2 = plus2.min(total2 - plus2);
    let statistic = w2 as f64 / 2.0;

    if n <= WILCOXON_EXACT_MAX_N {
        let mut extreme = 0u64;
        for mask in 0u32..(1u32 << n) {
            let s: u64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks2[i]).sum();
            if s.min(total2 - s) <= w2 {
                extreme += 1;
            }
        }
        let p = (extreme as f64 / (1u64 << n) as f64).min(1.0);
        return Ok(WilcoxonResult { statistic, p_value: p, n, exact: true });
    }

    let nf = n as f64;
    let mu = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks2.clone();
    sorted.sort_unstable();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (statistic - mu) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * normal.cdf(z)).min(1.0)
    };
    Ok(WilcoxonResult { statistic, p_value: p, n, exact: false })
}

/// One-sample Kolmogorov–Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64, mean: f64, sigma: f64) -> f64 {
    Normal::new(mean, sigma).expect("sigma must be positive").cdf(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_affine() {
        let x = [0.3, 1.0, 2.5, -4.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson_r(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &z).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_hand_value() {
        // cov = (1.5·1.5 + 0.5·(-0.5)... ) computed by hand: r = 4/5
        let r = pearson_r(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn pearson_constant_inputs() {
        assert!(matches!(pearson_r(&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn wilcoxon_identical_is_degenerate() {
        let a = [1.0, 2.0, 3.0];
        assert!(matches!(wilcoxon_signed_rank(&a, &a), Err(Error::DegenerateTest(_))));
    }

    #[test]
    fn wilcoxon_all_positive_n5() {
        let a = [2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 1.0, 1.0, 1.0, 1.0];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 2.0 / 32.0);
        assert!(r.exact);
    }

    #[test]
    fn wilcoxon_symmetric_differences() {
        let a = [1.0, -1.0, 2.0, -2.0, 3.0, -3.0];
        let b = [0.0; 6];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn wilcoxon_normal_branch_is_sane() {
        let a: Vec<f64> = (0..40).map(|i| i as f64 * 0.1 + 0.5).collect();
        let b: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!r.exact);
        assert!(r.p_value < 1e-6);
        let sym: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (i / 2 + 1) as f64).collect();
        let r = wilcoxon_signed_rank(&sym, &vec![0.0; 40]).unwrap();
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn bonferroni_caps_at_one() {
        assert_eq!(bonferroni(0.01, 5), 0.05);
        assert_eq!(bonferroni(0.4, 5), 1.0);
    }

    #[test]
    fn midranks_with_ties() {
        assert_eq!(doubled_midranks(&[3.0, 1.0, 3.0, 2.0]), vec![7, 2, 7, 4]);
    }
}
