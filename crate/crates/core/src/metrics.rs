//! Evaluation quantities: predictive regret, clean risk, direction error and
//! learner-side regret and mistake rates.

use serde::{Deserialize, Serialize};

use crate::environment::{optimal_arm, sample_context, ContextSet, ProblemInstance};
use crate::error::{Error, Result};
use crate::learners::InteractionRecord;
use crate::linalg::dot;
use crate::policy::argmax_arm;
use crate::rng::RngStream;
use crate::scalar::Real;

/// Number of evaluation contexts used when nothing else is configured.
pub const DEFAULT_EVAL_SIZE: usize = 5000;

/// Fresh i.i.d. contexts for estimating population quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSet<T> {
    contexts: Vec<ContextSet<T>>,
}

impl<T: Real> EvaluationSet<T> {
    pub fn new(contexts: Vec<ContextSet<T>>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { contexts })
    }

    /// `size` contexts drawn from `stream`, which must not be a training stream.
    pub fn sample(inst: &ProblemInstance<T>, size: usize, stream: &RngStream) -> Result<Self> {
        Self::new((0..size).map(|t| sample_context(inst, t, stream)).collect())
    }

    pub fn contexts(&self) -> &[ContextSet<T>] {
        &self.contexts
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyScores<T> {
    pub predictive_regret: T,
    pub clean_risk: T,
}

/// Predictive regret and clean risk of `argmax ⟨x, θ⟩` in one pass.
pub fn score_policy<T: Real>(
    theta: &[T],
    inst: &ProblemInstance<T>,
    eval: &EvaluationSet<T>,
) -> PolicyScores<T> {
    let star = inst.theta_star();
    let mut regret = T::zero();
    let mut mistakes = 0usize;
    for c in eval.contexts() {
        let best = optimal_arm(inst, c);
        let chosen = argmax_arm(theta, c);
        if chosen != best {
            mistakes += 1;
            regret += dot(c.feature(best), star) - dot(c.feature(chosen), star);
        }
    }
    let n = T::from_count(eval.len());
    PolicyScores {
        predictive_regret: regret / n,
        clean_risk: T::from_count(mistakes) / n,
    }
}

/// Mean noiseless reward gap between the optimal arm and the policy's arm.
pub fn predictive_regret<T: Real>(
    theta: &[T],
    inst: &ProblemInstance<T>,
    eval: &EvaluationSet<T>,
) -> T {
    score_policy(theta, inst, eval).predictive_regret
}

/// Fraction of contexts where the policy's arm is not the optimal arm.
pub fn clean_risk<T: Real>(theta: &[T], inst: &ProblemInstance<T>, eval: &EvaluationSet<T>) -> T {
    score_policy(theta, inst, eval).clean_risk
}

/// `‖θ̃/‖θ̃‖ − θ*/‖θ*‖‖₂`, in `[0, 2]`.
pub fn direction_error<T: Real>(theta_tilde: &[T], theta_star: &[T]) -> Result<T> {
    let floor = T::lit(1e-15);
    let a = crate::linalg::norm(theta_tilde);
    let b = crate::linalg::norm(theta_star);
    if !(a >= floor) || !(b >= floor) {
        return Err(Error::ZeroVector);
    }
    let mut s = T::zero();
    for (&x, &y) in theta_tilde.iter().zip(theta_star) {
        let diff = x / a - y / b;
        s += diff * diff;
    }
    Ok(s.sqrt().min(T::lit(2.0)))
}

/// Fraction of rounds in `[start, end)` where the learner missed the optimal arm.
pub fn windowed_error_rate<T: Real>(
    log: &[InteractionRecord<T>],
    start: usize,
    end: usize,
) -> Result<T> {
    if start >= end || end > log.len() {
        return Err(Error::InvalidWindow {
            start,
            end,
            len: log.len(),
        });
    }
    let mut mistakes = 0usize;
    for r in &log[start..end] {
        let best = r.optimal_arm.ok_or_else(|| {
            Error::InvalidArgument(format!("round {} carries no optimal arm", r.round))
        })?;
        if r.chosen_arm != best {
            mistakes += 1;
        }
    }
    Ok(T::from_count(mistakes) / T::from_count(end - start))
}

/// Running sum of instantaneous regret `⟨x_{a*}, θ*⟩ − ⟨x_{a_t}, θ*⟩`.
pub fn cumulative_regret<T: Real>(
    inst: &ProblemInstance<T>,
    log: &[InteractionRecord<T>],
) -> Vec<T> {
    let star = inst.theta_star();
    let mut total = T::zero();
    log.iter()
        .map(|r| {
            let best = r
                .optimal_arm
                .unwrap_or_else(|| optimal_arm(inst, &r.context));
            total +=
                dot(r.context.feature(best), star) - dot(r.context.feature(r.chosen_arm), star);
            total
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Normalize;
    use crate::linalg::Vector;
    use crate::rng::{standard_normal, Purpose};
    use rand::Rng;

    fn instance(d: usize, k: usize, seed: u64) -> ProblemInstance<f64> {
        ProblemInstance::sample(
            d,
            k,
            0.1,
            Normalize::Cap,
            &RngStream::derive(seed, Purpose::Theta),
        )
        .unwrap()
    }

    #[test]
    fn optimal_policy_has_zero_regret_and_risk() {
        let inst = instance(5, 10, 1);
        let eval =
            EvaluationSet::sample(&inst, 500, &RngStream::derive(1, Purpose::Evaluation)).unwrap();
        assert_eq!(predictive_regret(inst.theta_star(), &inst, &eval), 0.0);
        assert_eq!(clean_risk(inst.theta_star(), &inst, &eval), 0.0);
    }

    #[test]
    fn reversed_policy_on_antipodal_pairs() {
        let inst = instance(4, 2, 2);
        let mut rng = RngStream::new(2, 2).rng();
        let mut contexts = Vec::new();
        let mut expected = 0.0;
        for t in 0..300 {
            let raw: Vec<f64> = (0..4).map(|_| standard_normal(&mut rng)).collect();
            let n = crate::linalg::norm(&raw).max(1.0);
            let x: Vec<f64> = raw.iter().map(|v| v / n).collect();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            expected += 2.0 * dot(&x, inst.theta_star()).abs();
            contexts.push(ContextSet::from_features(t, &[&x, &neg]).unwrap());
        }
        expected /= 300.0;
        let eval = EvaluationSet::new(contexts).unwrap();
        let reversed = inst.theta_star().scaled(-1.0);
        assert!((predictive_regret(&reversed, &inst, &eval) - expected).abs() < 1e-12);
    }

    #[test]
    fn regret_bounded_by_twice_risk() {
        let inst = instance(6, 8, 3);
        let eval =
            EvaluationSet::sample(&inst, 1000, &RngStream::derive(3, Purpose::Evaluation)).unwrap();
        let mut rng = RngStream::new(3, 4).rng();
        for _ in 0..200 {
            let theta: Vec<f64> = (0..6).map(|_| standard_normal(&mut rng)).collect();
            let s = score_policy(&theta, &inst, &eval);
            assert!(s.predictive_regret >= 0.0 && s.predictive_regret <= 2.0);
            assert!(s.predictive_regret <= 2.0 * s.clean_risk);
            assert_eq!(s, score_policy(&theta, &inst, &eval));
        }
    }

    #[test]
    fn random_policy_antipodal_risk_is_half() {
        let mut total = 0.0;
        let seeds = 200;
        for seed in 0..seeds {
            let inst = instance(3, 2, seed);
            let mut rng = RngStream::new(seed, 9).rng();
            let contexts: Vec<_> = (0..50)
                .map(|t| {
                    let raw: Vec<f64> = (0..3).map(|_| standard_normal(&mut rng)).collect();
                    let n = crate::linalg::norm(&raw).max(1.0);
                    let x: Vec<f64> = raw.iter().map(|v| v / n).collect();
                    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
                    ContextSet::from_features(t, &[&x, &neg]).unwrap()
                })
                .collect();
            let eval = EvaluationSet::new(contexts).unwrap();
            let theta: Vec<f64> = (0..3).map(|_| standard_normal(&mut rng)).collect();
            total += clean_risk(&theta, &inst, &eval);
        }
        let mean = total / seeds as f64;
        assert!((mean - 0.5).abs() < 0.08, "{mean}");
    }

    #[test]
    fn direction_error_cases() {
        let star = [0.6f64, 0.8];
        assert!(direction_error(&[4.2, 5.6], &star).unwrap() < 1e-15);
        assert!((direction_error(&[-0.6, -0.8], &star).unwrap() - 2.0).abs() < 1e-15);
        assert!((direction_error(&[0.8, -0.6], &star).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            direction_error(&[0.0, 1e-16], &star),
            Err(Error::ZeroVector)
        );
    }

    #[test]
    fn direction_error_scale_invariant() {
        let mut rng = RngStream::new(6, 6).rng();
        for _ in 0..100 {
            let a: Vec<f64> = (0..5).map(|_| standard_normal(&mut rng)).collect();
            let b: Vec<f64> = (0..5).map(|_| standard_normal(&mut rng)).collect();
            let c = rng.random_range(0.01..100.0);
            let base = direction_error(&a, &b).unwrap();
            let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
            assert!((direction_error(&scaled, &b).unwrap() - base).abs() < 1e-12);
            let scaled_b: Vec<f64> = b.iter().map(|v| v * c).collect();
            assert!((direction_error(&a, &scaled_b).unwrap() - base).abs() < 1e-12);
        }
    }

    fn record(chosen: usize, optimal: usize) -> InteractionRecord<f64> {
        InteractionRecord {
            round: 0,
            context: ContextSet::from_features(0, &[&[0.1], &[0.2], &[0.3]]).unwrap(),
            chosen_arm: chosen,
            reward: None,
            optimal_arm: Some(optimal),
        }
    }

    #[test]
    fn windowed_error_rates() {
        let oracle: Vec<_> = (0..10).map(|i| record(i % 3, i % 3)).collect();
        assert_eq!(windowed_error_rate(&oracle, 0, 10).unwrap(), 0.0);
        let log: Vec<_> = (0..10).map(|i| record(i % 3, 1)).collect();
        assert_eq!(windowed_error_rate(&log, 0, 1).unwrap(), 1.0);
        let mistakes = log.iter().filter(|r| r.chosen_arm != 1).count();
        assert_eq!(
            windowed_error_rate(&log, 0, 10).unwrap(),
            mistakes as f64 / 10.0
        );
        assert!(windowed_error_rate(&log, 5, 5).is_err());
        assert!(windowed_error_rate(&log, 0, 11).is_err());
    }

    #[test]
    fn cumulative_regret_counts_gaps() {
        let inst = ProblemInstance::new(Vector::basis(1, 0), 3, 0.0, Normalize::Cap).unwrap();
        let log = vec![record(0, 2), record(2, 2), record(1, 2)];
        let r = cumulative_regret(&inst, &log);
        assert!((r[0] - 0.2).abs() < 1e-15);
        assert!((r[1] - 0.2).abs() < 1e-15);
        assert!((r[2] - 0.3).abs() < 1e-15);
    }
}
