//! Small statistical helpers shared by the analysis code and the test
//! oracles: Pearson chi-square goodness of fit and correlation coefficients.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Result of a Pearson chi-square goodness-of-fit test.
#[derive(Clone, Copy, Debug)]
pub struct Chi2Report {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl Chi2Report {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Pearson chi-square test of observed counts against expected counts.
///
/// Bins with expected counts below `min_expected` are pooled into one bin
/// (standard practice to keep the chi-square approximation valid). Expected
/// counts are rescaled so both lists total the observed sum.
pub fn chi_square_gof(observed: &[u64], expected: &[f64], min_expected: f64) -> Chi2Report {
    assert_eq!(observed.len(), expected.len());
    let n_obs: f64 = observed.iter().map(|&o| o as f64).sum();
    let n_exp: f64 = expected.iter().sum();
    assert!(n_exp > 0.0, "expected counts are all zero");
    let scale = n_obs / n_exp;

    let mut statistic = 0.0;
    let mut bins_used = 0usize;
    let mut pooled_obs = 0.0;
    let mut pooled_exp = 0.0;
    for (&o, &e) in observed.iter().zip(expected.iter()) {
        let e = e * scale;
        if e < min_expected {
            pooled_obs += o as f64;
            pooled_exp += e;
        } else {
            let d = o as f64 - e;
            statistic += d * d / e;
            bins_used += 1;
        }
    }
    if pooled_exp >= min_expected.min(1.0) && pooled_exp > 0.0 {
        let d = pooled_obs - pooled_exp;
        statistic += d * d / pooled_exp;
        bins_used += 1;
    }

    let dof = bins_used.saturating_sub(1).max(1);
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    let p_value = 1.0 - dist.cdf(statistic);
    Chi2Report {
        statistic,
        dof,
        p_value,
    }
}

/// Pearson correlation coefficient; None when either input has zero variance.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if n < 2.0 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Median of a slice (by copy).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_accepts_matching_counts() {
        let expected = vec![100.0, 200.0, 300.0, 400.0];
        let observed = vec![105u64, 190, 310, 395];
        let r = chi_square_gof(&observed, &expected, 5.0);
        assert!(r.passes(0.01), "p = {}", r.p_value);
    }

    #[test]
    fn chi2_rejects_wrong_distribution() {
        let expected = vec![250.0, 250.0, 250.0, 250.0];
        let observed = vec![400u64, 100, 400, 100];
        let r = chi_square_gof(&observed, &expected, 5.0);
        assert!(!r.passes(0.01));
    }

    #[test]
    fn correlation_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        assert!((pearson_correlation(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c = [4.0, 3.0, 2.0, 1.0];
        assert!((pearson_correlation(&a, &c).unwrap() + 1.0).abs() < 1e-12);
        let flat = [5.0, 5.0, 5.0, 5.0];
        assert!(pearson_correlation(&a, &flat).is_none());
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
