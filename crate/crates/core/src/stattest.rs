//! Calibrated statistical test helpers used by the verification harness.
//!
//! Monte Carlo acceptance throughout the crate is "within 3 standard
//! errors"; trend claims use one-sided tests at p < 0.01.

use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 2, "need at least two samples");
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// |sample_mean - target| in units of the standard error.
pub fn z_score(mean: f64, se: f64, target: f64) -> f64 {
    (mean - target).abs() / se
}

/// Two-ensemble z-score: |m1 - m2| / sqrt(se1^2 + se2^2).
pub fn z_score_two(m1: f64, se1: f64, m2: f64, se2: f64) -> f64 {
    (m1 - m2).abs() / (se1 * se1 + se2 * se2).sqrt()
}

/// Chi-square goodness-of-fit p-value for observed counts against expected
/// counts (same total). Degrees of freedom: `len - 1`.
pub fn chi_square_gof_p(observed: &[f64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .filter(|(_, e)| **e > 0.0)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let dof = observed.len().saturating_sub(1).max(1) as f64;
    let chi = ChiSquared::new(dof).expect("valid dof");
    1.0 - chi.cdf(stat)
}

/// One-sided exact binomial p-value: P(Bin(n, p0) >= k).
pub fn binomial_p_at_least(k: u64, n: u64, p0: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let b = Binomial::new(p0, n).expect("valid binomial");
    1.0 - b.cdf(k - 1)
}

/// One-sided sign test that the paired values decreased: p-value for
/// observing at least the seen number of decreases under the fair-coin
/// null. Ties are dropped.
pub fn sign_test_decrease_p(before: &[f64], after: &[f64]) -> f64 {
    assert_eq!(before.len(), after.len());
    let mut n = 0u64;
    let mut dec = 0u64;
    for (b, a) in before.iter().zip(after) {
        if a < b {
            dec += 1;
            n += 1;
        } else if a > b {
            n += 1;
        }
    }
    if n == 0 {
        return 1.0;
    }
    binomial_p_at_least(dec, n, 0.5)
}

/// One-sided two-proportion test that `k2/n2 > k1/n1` (normal
/// approximation with pooled variance); returns the p-value.
pub fn proportion_increase_p(k1: u64, n1: u64, k2: u64, n2: u64) -> f64 {
    let p1 = k1 as f64 / n1 as f64;
    let p2 = k2 as f64 / n2 as f64;
    let pooled = (k1 + k2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        return if p2 > p1 { 0.0 } else { 1.0 };
    }
    let z = (p2 - p1) / se;
    1.0 - normal_cdf(z)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

/// Kolmogorov-Smirnov distance between an empirical sample and a reference
/// CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i as f64 + 1.0) / n).abs());
    }
    d
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < sa.len() && j < sb.len() {
        if sa[i] <= sb[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
