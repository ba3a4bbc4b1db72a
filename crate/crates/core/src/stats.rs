//! Summary statistics and Welch's unequal-variance t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Normal quantile used for the reported 95% interval (mean ± 1.96·sem).
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sem: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: values.len(),
        });
    }
    let n = values.len();
    let mean = mean(values);
    let sem = (sample_variance(values) / n as f64).sqrt();
    Ok(Summary {
        n,
        mean,
        sem,
        ci95_low: mean - Z_95 * sem,
        ci95_high: mean + Z_95 * sem,
    })
}

/// Like [`summarize`], but a single value yields `sem = 0`.
pub fn summarize_lenient(values: &[f64]) -> Option<Summary> {
    match values.len() {
        0 => None,
        1 => Some(Summary {
            n: 1,
            mean: values[0],
            sem: 0.0,
            ci95_low: values[0],
            ci95_high: values[0],
        }),
        _ => summarize(values).ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::TooFewValues { needed: 2, got: s.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;

    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if diff == 0.0 {
            WelchResult { t: 0.0, df, p: 1.0 }
        } else {
            WelchResult {
                t: diff.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }

    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchResult { t, df, p })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
    let sy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
    cov / (sx * sy)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn summarize_examples() {
        let s = summarize(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((s.mean, s.sem), (5.0, 0.0));
        let s = summarize(&[0.0, 10.0]).unwrap();
        assert_relative_eq!(s.mean, 5.0, max_relative = 1e-9);
        assert_relative_eq!(s.sem, 5.0, max_relative = 1e-9);
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_relative_eq!(s.mean, 2.5, max_relative = 1e-9);
        // sqrt(5/3)/2
        assert_relative_eq!(s.sem, 0.6454972243679028, max_relative = 1e-9);
        assert_relative_eq!(s.ci95_high - s.mean, 1.96 * s.sem, max_relative = 1e-12);
        assert!(matches!(summarize(&[1.0]), Err(Error::TooFewValues { .. })));
    }

    #[test]
    fn welch_identical_samples() {
        let r = welch_t(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_relative_eq!(r.p, 1.0, max_relative = 1e-9);
        let r = welch_t(&[4.0, 4.0], &[4.0, 4.0, 4.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
    }

    #[test]
    fn welch_against_hand_values() {
        // Means 12 and 2, variances 4 and 1, n = 3 each:
        // t = 10 / sqrt(5/3), df = (5/3)^2 / ((4/3)^2/2 + (1/3)^2/2) = 50/17.
        let r = welch_t(&[10.0, 12.0, 14.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(r.t, 10.0 / (5.0f64 / 3.0).sqrt(), max_relative = 1e-9);
        assert_relative_eq!(r.df, 50.0 / 17.0, max_relative = 1e-9);
        // Reference p from an independent t-distribution implementation.
        assert!((r.p - 0.004797999699128054).abs() < 1e-6);

        let r = welch_t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2.0, 4.0, 4.0, 9.0]).unwrap();
        assert_relative_eq!(r.t, -0.7453559924999299, max_relative = 1e-9);
        assert_relative_eq!(r.df, 4.5870597513297655, max_relative = 1e-9);
        assert!((r.p - 0.49245169934576205).abs() < 1e-6);
    }

    #[test]
    fn welch_needs_two_per_sample() {
        assert!(welch_t(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    proptest! {
        #[test]
        fn welch_antisymmetry(
            a in prop::collection::vec(-100.0f64..100.0, 2..20),
            b in prop::collection::vec(-100.0f64..100.0, 2..20),
        ) {
            let ab = welch_t(&a, &b).unwrap();
            let ba = welch_t(&b, &a).unwrap();
            prop_assert!((ab.t + ba.t).abs() <= 1e-9 * ab.t.abs().max(1.0));
            prop_assert!((ab.p - ba.p).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }
    }
}
