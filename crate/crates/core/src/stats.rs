//! Summary statistics used by the diagnostics and the experiment harness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn mean<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().copied().sum::<T>() / T::from_count(xs.len()))
}

/// Sample standard deviation (n − 1 denominator); zero for a single value.
pub fn sample_std<T: Real>(xs: &[T]) -> Option<T> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(T::zero());
    }
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Some((ss / T::from_count(xs.len() - 1)).sqrt())
}

/// Mean with a normal-approximation 95% interval, `mean ± 1.96·s/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi<T> {
    pub mean: T,
    pub lo: T,
    pub hi: T,
    pub n: usize,
}

pub fn mean_ci95<T: Real>(xs: &[T]) -> Option<MeanCi<T>> {
    let m = mean(xs)?;
    let s = sample_std(xs)?;
    let half = T::lit(1.96) * s / T::from_count(xs.len()).sqrt();
    Some(MeanCi {
        mean: m,
        lo: m - half,
        hi: m + half,
        n: xs.len(),
    })
}

/// Average ranks (1-based), ties share the mean of their positions.
pub fn average_ranks<T: Real>(xs: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| {
        xs[a]
            .partial_cmp(&xs[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut ranks = vec![T::zero(); xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = T::from_count(i + j + 2) / T::lit(2.0);
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson<T: Real>(x: &[T], y: &[T]) -> Option<T> {
    let mx = mean(x)?;
    let my = mean(y)?;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == T::zero() || syy == T::zero() {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one()))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman_rho<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateInput("need at least two points"));
    }
    pearson(&average_ranks(x), &average_ranks(y)).ok_or(Error::DegenerateInput("constant input"))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateInput("need at least two points"));
    }
    if x.iter().chain(y).any(|&v| !(v > T::zero())) {
        return Err(Error::DegenerateInput("log-log fit needs positive values"));
    }
    let lx: Vec<T> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<T> = y.iter().map(|v| v.ln()).collect();
    let mx = mean(&lx).unwrap();
    let my = mean(&ly).unwrap();
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (&a, &b) in lx.iter().zip(&ly) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    if sxx == T::zero() {
        return Err(Error::DegenerateInput("all x values equal"));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert_eq!(
            spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0
        );
        assert_eq!(
            spearman_rho(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(),
            -1.0
        );
        // d = (-1, 1, -1, 1): 1 - 6·4 / (4·15) = 0.6
        let r = spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6f64).abs() < 1e-12);
    }

    #[test]
    fn spearman_degenerate_and_ties() {
        assert!(matches!(
            spearman_rho(&[1.0, 2.0], &[5.0, 5.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(spearman_rho(&[1.0], &[1.0]).is_err());
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
        let r = spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(r > 0.9 && r <= 1.0);
    }

    #[test]
    fn ci_by_hand() {
        let xs = [1.0, 2.0, 4.0];
        let ci = mean_ci95(&xs).unwrap();
        let m = 7.0 / 3.0;
        let s = (((1.0 - m) * (1.0f64 - m) + (2.0 - m) * (2.0 - m) + (4.0 - m) * (4.0 - m)) / 2.0)
            .sqrt();
        assert!((ci.mean - m).abs() < 1e-15);
        assert!((ci.hi - (m + 1.96 * s / 3f64.sqrt())).abs() < 1e-14);
        assert!((ci.lo - (m - 1.96 * s / 3f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn slope_of_inverse_sqrt() {
        let n = [500.0, 1581.0, 5000.0, 15811.0];
        let y: Vec<f64> = n.iter().map(|v: &f64| 3.7 / v.sqrt()).collect();
        assert!((loglog_slope(&n, &y).unwrap() + 0.5).abs() < 1e-6);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }
}
