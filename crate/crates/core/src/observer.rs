//! Reward-free two-phase suffix imitation.
//!
//! The observer drops the first `T` records of a log (burn-in) and fits a
//! linear argmax policy to the remaining learner actions by minimizing the
//! regularized conditional softmax loss, a convex surrogate of the 0–1
//! imitation error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::environment::ContextSet;
use crate::error::{Error, Result};
use crate::learners::InteractionRecord;
use crate::linalg::Vector;
use crate::optim::{minimize, Direction, OptimConfig, StepRule};
use crate::policy::{argmax_arm, softmax_nll_and_grad};
use crate::scalar::Real;

/// What the observer is allowed to see of one round.
///
/// There is deliberately no reward or optimal-arm field on this type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverRecord<'a, T> {
    pub round: usize,
    pub context: &'a ContextSet<T>,
    pub chosen_arm: usize,
}

/// Strips rewards and optimal arms from a log.
pub fn project_observer_view<T>(log: &[InteractionRecord<T>]) -> Vec<ObserverRecord<'_, T>> {
    log.iter()
        .map(|r| ObserverRecord {
            round: r.round,
            context: &r.context,
            chosen_arm: r.chosen_arm,
        })
        .collect()
}

/// Default exponent grid for the hindsight sweep.
pub const DEFAULT_SWEEP_GRID: [f64; 12] =
    [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BurnInSchedule {
    /// Keep every record.
    Naive,
    /// `T(N) = ⌊N^alpha⌋`.
    RuleBased {
        alpha: f64,
    },
    Fixed {
        t_fixed: usize,
    },
    /// Pick `T = ⌊N^α⌋` in hindsight over `grid`.
    OracleSweep {
        grid: Vec<f64>,
    },
}

impl Default for BurnInSchedule {
    fn default() -> Self {
        BurnInSchedule::RuleBased { alpha: 0.9 }
    }
}

impl BurnInSchedule {
    pub fn burn_in_length(&self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::InvalidSchedule("horizon must be positive".into()));
        }
        match self {
            BurnInSchedule::Naive => Ok(0),
            BurnInSchedule::RuleBased { alpha } => rule_based_length(*alpha, n),
            BurnInSchedule::Fixed { t_fixed } => Ok((*t_fixed).min(n - 1)),
            BurnInSchedule::OracleSweep { .. } => Err(Error::InvalidSchedule(
                "the oracle sweep selects its burn-in in hindsight".into(),
            )),
        }
    }
}

/// `⌊N^alpha⌋` clamped to `[0, N − 1]`; `alpha = 0` means no burn-in.
pub fn rule_based_length(alpha: f64, n: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidSchedule(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidSchedule("horizon must be positive".into()));
    }
    if alpha == 0.0 {
        return Ok(0);
    }
    let raw = (n as f64).powf(alpha);
    let mut t = raw.floor();
    // powf can land a hair below an exact integer power.
    if (t + 1.0) - raw <= 1e-9 * raw {
        t += 1.0;
    }
    Ok((t as usize).min(n - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(deserialize = "T: Real + Deserialize<'de>")
)]
pub struct FitConfig<T> {
    /// L2 strength.
    pub lambda: T,
    pub max_iters: usize,
    pub grad_tol: T,
    pub step_rule: StepRule,
    pub step_size: T,
    pub direction: Direction,
}

impl<T: Real> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::lit(1e-4),
            max_iters: 5000,
            grad_tol: T::lit(1e-6),
            step_rule: StepRule::Backtracking,
            step_size: T::one(),
            direction: Direction::Lbfgs { memory: 10 },
        }
    }
}

impl<T: Real> FitConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.step_size > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "step size must be > 0, got {}",
                self.step_size
            )));
        }
        Ok(())
    }

    fn optim(&self) -> OptimConfig<T> {
        OptimConfig {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            step_rule: self.step_rule,
            step_size: self.step_size,
            direction: self.direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta<T> {
    pub iterations: usize,
    pub final_loss: T,
    pub grad_norm: T,
    pub converged: bool,
    pub burn_in: usize,
    pub suffix_len: usize,
    pub loss_trace: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverPolicy<T> {
    pub theta_tilde: Vector<T>,
    pub meta: FitMeta<T>,
}

impl<T: Real> ObserverPolicy<T> {
    pub fn act(&self, c: &ContextSet<T>) -> usize {
        argmax_arm(&self.theta_tilde, c)
    }
}

fn suffix<'v, 'a, T>(
    view: &'v [ObserverRecord<'a, T>],
    burn_in: usize,
) -> Result<&'v [ObserverRecord<'a, T>]> {
    if burn_in >= view.len() {
        return Err(Error::EmptySuffix {
            burn_in,
            total: view.len(),
        });
    }
    Ok(&view[burn_in..])
}

/// Fits `θ̃` on records `burn_in..` starting from `θ = 0`.
pub fn fit_observer<T: Real>(
    view: &[ObserverRecord<'_, T>],
    burn_in: usize,
    cfg: &FitConfig<T>,
) -> Result<ObserverPolicy<T>> {
    cfg.validate()?;
    let data = suffix(view, burn_in)?;
    let d = data[0].context.dim();
    let out = minimize(
        |theta| {
            softmax_nll_and_grad(
                theta,
                data.iter().map(|r| (r.context, r.chosen_arm)),
                cfg.lambda,
            )
        },
        Vector::zeros(d),
        &cfg.optim(),
    )?;
    Ok(ObserverPolicy {
        theta_tilde: out.x,
        meta: FitMeta {
            iterations: out.iterations,
            final_loss: out.loss,
            grad_norm: out.grad_norm,
            converged: out.converged,
            burn_in,
            suffix_len: data.len(),
            loss_trace: out.trace,
        },
    })
}

/// Fraction of suffix rounds where `argmax ⟨x, θ⟩` differs from the logged action.
pub fn empirical_imitation_risk<T: Real>(
    theta: &[T],
    view: &[ObserverRecord<'_, T>],
    burn_in: usize,
) -> Result<T> {
    let data = suffix(view, burn_in)?;
    let misses = data
        .iter()
        .filter(|r| argmax_arm(theta, r.context) != r.chosen_arm)
        .count();
    Ok(T::from_count(misses) / T::from_count(data.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<T> {
    pub alpha: f64,
    pub burn_in: usize,
    pub metric: T,
    pub policy: ObserverPolicy<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSweep<T> {
    pub best_alpha: f64,
    pub best_index: usize,
    pub points: Vec<SweepPoint<T>>,
}

impl<T> OracleSweep<T> {
    pub fn best(&self) -> &SweepPoint<T> {
        &self.points[self.best_index]
    }
}

/// Fits one policy per exponent in `grid` and keeps the one minimizing `eval`.
///
/// Exponents mapping to the same burn-in length share a single fit. Ties on
/// the metric go to the earliest grid entry.
pub fn oracle_sweep<T, E>(
    view: &[ObserverRecord<'_, T>],
    grid: &[f64],
    cfg: &FitConfig<T>,
    mut eval: E,
) -> Result<OracleSweep<T>>
where
    T: Real,
    E: FnMut(&ObserverPolicy<T>) -> Result<T>,
{
    if grid.is_empty() {
        return Err(Error::InvalidSchedule("sweep grid is empty".into()));
    }
    let n = view.len();
    let mut fits: BTreeMap<usize, (ObserverPolicy<T>, T)> = BTreeMap::new();
    let mut points = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let burn_in = rule_based_length(alpha, n)?;
        if let std::collections::btree_map::Entry::Vacant(slot) = fits.entry(burn_in) {
            let policy = fit_observer(view, burn_in, cfg)?;
            let metric = eval(&policy)?;
            slot.insert((policy, metric));
        }
        let (policy, metric) = &fits[&burn_in];
        points.push(SweepPoint {
            alpha,
            burn_in,
            metric: *metric,
            policy: policy.clone(),
        });
    }
    let mut best_index = 0;
    for (i, p) in points.iter().enumerate() {
        if p.metric < points[best_index].metric {
            best_index = i;
        }
    }
    Ok(OracleSweep {
        best_alpha: points[best_index].alpha,
        best_index,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_context, Normalize, ProblemInstance};
    use crate::learners::{run_episode, Algorithm, EpisodeStreams, LearnerConfig};
    use crate::linalg::{dot, norm};
    use crate::rng::{standard_normal, Purpose, RngStream};
    use rand::Rng;

    fn owned_view<'a, T: Copy>(
        contexts: &'a [ContextSet<T>],
        labels: &[usize],
    ) -> Vec<ObserverRecord<'a, T>> {
        contexts
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (c, &a))| ObserverRecord {
                round: i,
                context: c,
                chosen_arm: a,
            })
            .collect()
    }

    #[test]
    fn schedule_lengths() {
        assert_eq!(
            BurnInSchedule::RuleBased { alpha: 0.9 }
                .burn_in_length(10_000)
                .unwrap(),
            3981
        );
        assert_eq!(BurnInSchedule::Naive.burn_in_length(777).unwrap(), 0);
        assert_eq!(
            BurnInSchedule::RuleBased { alpha: 1.0 }
                .burn_in_length(100)
                .unwrap(),
            99
        );
        assert_eq!(
            BurnInSchedule::RuleBased { alpha: 0.5 }
                .burn_in_length(100)
                .unwrap(),
            10
        );
        assert_eq!(
            BurnInSchedule::Fixed { t_fixed: 500 }
                .burn_in_length(100)
                .unwrap(),
            99
        );
        assert_eq!(
            BurnInSchedule::Fixed { t_fixed: 5 }
                .burn_in_length(100)
                .unwrap(),
            5
        );
        assert!(matches!(
            BurnInSchedule::RuleBased { alpha: 1.2 }.burn_in_length(100),
            Err(Error::InvalidSchedule(_))
        ));
        assert!(BurnInSchedule::RuleBased { alpha: -0.1 }
            .burn_in_length(100)
            .is_err());
        assert!(BurnInSchedule::OracleSweep { grid: vec![0.5] }
            .burn_in_length(100)
            .is_err());
    }

    #[test]
    fn schedule_is_below_horizon() {
        for n in 1..300 {
            for a in DEFAULT_SWEEP_GRID {
                assert!(rule_based_length(a, n).unwrap() < n);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn schedule_monotone_in_alpha(n in 2usize..1_000_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(rule_based_length(lo, n).unwrap() <= rule_based_length(hi, n).unwrap());
        }
    }

    fn small_log(seed: u64, n: usize) -> (ProblemInstance<f64>, Vec<InteractionRecord<f64>>) {
        let inst = ProblemInstance::sample(
            4,
            6,
            0.1,
            Normalize::Cap,
            &RngStream::derive(seed, Purpose::Theta),
        )
        .unwrap();
        let ep = run_episode(
            &inst,
            &LearnerConfig::standard(Algorithm::LinTs, 0.1, 4),
            n,
            &EpisodeStreams::from_seed(seed),
        )
        .unwrap();
        (inst, ep.records)
    }

    #[test]
    fn projection_preserves_order_and_actions() {
        let (_, log) = small_log(1, 50);
        let view = project_observer_view(&log);
        assert_eq!(view.len(), log.len());
        for (v, r) in view.iter().zip(&log) {
            assert_eq!(v.chosen_arm, r.chosen_arm);
            assert_eq!(v.round, r.round);
            assert!(std::ptr::eq(v.context, &r.context));
        }
    }

    #[test]
    fn empty_suffix_errors() {
        let (_, log) = small_log(1, 10);
        let view = project_observer_view(&log);
        assert!(matches!(
            fit_observer(&view, 10, &FitConfig::default()),
            Err(Error::EmptySuffix { .. })
        ));
        assert!(matches!(
            empirical_imitation_risk(&[0.0; 4], &view, 10),
            Err(Error::EmptySuffix { .. })
        ));
    }

    #[test]
    fn separable_fit_aligns_with_signal() {
        let x = [0.6, 0.0, 0.8];
        let neg = [-0.6, 0.0, -0.8];
        let contexts: Vec<_> = (0..40)
            .map(|t| {
                let pos = t % 3;
                let rows: Vec<&[f64]> = (0..3)
                    .map(|i| if i == pos { &x[..] } else { &neg[..] })
                    .collect();
                ContextSet::from_features(t, &rows).unwrap()
            })
            .collect();
        let labels: Vec<usize> = (0..40).map(|t| t % 3).collect();
        let view = owned_view(&contexts, &labels);
        let fit = fit_observer(&view, 0, &FitConfig::default()).unwrap();
        let cos = dot(&fit.theta_tilde, &x) / norm(&fit.theta_tilde);
        assert!(cos > 0.99, "{cos}");
    }

    #[test]
    fn heavy_regularization_shrinks_theta() {
        let (_, log) = small_log(2, 200);
        let view = project_observer_view(&log);
        let cfg = FitConfig {
            lambda: 1e6,
            ..FitConfig::default()
        };
        let fit = fit_observer(&view, 0, &cfg).unwrap();
        assert!(fit.theta_tilde.norm() < 1e-3);
    }

    #[test]
    fn noiseless_labels_are_reproduced() {
        let teacher = [0.8, -0.6];
        let inst =
            ProblemInstance::new(Vector::from_slice(&teacher), 2, 0.0, Normalize::Cap).unwrap();
        let stream = RngStream::new(4, 5);
        let contexts: Vec<_> = (0..50).map(|t| sample_context(&inst, t, &stream)).collect();
        let labels: Vec<usize> = contexts.iter().map(|c| argmax_arm(&teacher, c)).collect();
        let view = owned_view(&contexts, &labels);
        let fit = fit_observer(&view, 0, &FitConfig::default()).unwrap();
        let agree = contexts
            .iter()
            .filter(|c| fit.act(c) == argmax_arm(&teacher, c))
            .count();
        assert!(agree >= 49, "{agree}");
    }

    #[test]
    fn backtracking_trace_is_monotone() {
        let (_, log) = small_log(3, 300);
        let view = project_observer_view(&log);
        for direction in [Direction::Gradient, Direction::Lbfgs { memory: 10 }] {
            let cfg = FitConfig {
                direction,
                max_iters: 300,
                ..FitConfig::default()
            };
            let fit = fit_observer(&view, 20, &cfg).unwrap();
            assert!(fit.meta.loss_trace.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(fit.meta.suffix_len, 280);
            assert_eq!(fit.meta.burn_in, 20);
        }
    }

    #[test]
    fn lbfgs_converges_on_logged_data() {
        let (_, log) = small_log(5, 1000);
        let view = project_observer_view(&log);
        let fit = fit_observer(&view, 100, &FitConfig::default()).unwrap();
        assert!(fit.meta.converged, "grad norm {}", fit.meta.grad_norm);
        assert!(fit.meta.grad_norm <= 1e-6);
    }

    #[test]
    fn surrogate_objective_is_convex_along_chords() {
        let (_, log) = small_log(6, 200);
        let view = project_observer_view(&log);
        let samples = || view.iter().map(|r| (r.context, r.chosen_arm));
        let loss = |t: &[f64]| softmax_nll_and_grad(t, samples(), 1e-4).unwrap().0;
        let mut rng = RngStream::new(6, 1).rng();
        for _ in 0..50 {
            let a: Vec<f64> = (0..4)
                .map(|_| 3.0 * standard_normal::<f64, _>(&mut rng))
                .collect();
            let b: Vec<f64> = (0..4)
                .map(|_| 3.0 * standard_normal::<f64, _>(&mut rng))
                .collect();
            let t: f64 = rng.random_range(0.01..0.99);
            let mid: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| t * x + (1.0 - t) * y)
                .collect();
            assert!(loss(&mid) <= t * loss(&a) + (1.0 - t) * loss(&b) + 1e-10);
        }
    }

    #[test]
    fn erm_beats_random_candidates() {
        let (_, log) = small_log(7, 1500);
        let view = project_observer_view(&log);
        let fit = fit_observer(&view, 100, &FitConfig::default()).unwrap();
        let fitted = empirical_imitation_risk(&fit.theta_tilde, &view, 100).unwrap();
        let mut rng = RngStream::new(7, 2).rng();
        for _ in 0..100 {
            let cand: Vector<f64> = crate::environment::sample_theta_star(4, &mut rng).unwrap();
            assert!(fitted <= empirical_imitation_risk(&cand, &view, 100).unwrap() + 1e-9);
        }
    }

    #[test]
    fn imitation_risk_cases() {
        let (_, log) = small_log(8, 100);
        let view = project_observer_view(&log);
        // A context where argmax of theta is known replays its own label.
        let c = ContextSet::from_features(0, &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let one = [ObserverRecord {
            round: 0,
            context: &c,
            chosen_arm: 0,
        }];
        assert_eq!(empirical_imitation_risk(&[1.0, 0.0], &one, 0).unwrap(), 0.0);
        assert_eq!(empirical_imitation_risk(&[0.0, 1.0], &one, 0).unwrap(), 1.0);
        let r = empirical_imitation_risk(&[0.1, 0.2, 0.3, 0.4], &view, 0).unwrap();
        assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn random_labels_risk_concentrates() {
        let inst =
            ProblemInstance::sample(3, 5, 0.1, Normalize::Cap, &RngStream::new(9, 0)).unwrap();
        let stream = RngStream::new(9, 1);
        let contexts: Vec<_> = (0..10_000)
            .map(|t| sample_context(&inst, t, &stream))
            .collect();
        let mut rng = RngStream::new(9, 2).rng();
        let labels: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..5)).collect();
        let view = owned_view(&contexts, &labels);
        let r = empirical_imitation_risk(&[0.3, -0.2, 0.9], &view, 0).unwrap();
        let p: f64 = 0.8;
        assert!(
            (r - p).abs() <= 3.0 * (p * (1.0 - p) / 10_000.0).sqrt(),
            "{r}"
        );
    }

    #[test]
    fn sweep_selects_argmin() {
        let (inst, log) = small_log(10, 400);
        let view = project_observer_view(&log);
        let cfg = FitConfig::default();
        let naive = oracle_sweep(&view, &[0.0], &cfg, |_| Ok(0.0)).unwrap();
        assert_eq!(naive.points.len(), 1);
        assert_eq!(naive.points[0].burn_in, 0);
        assert_eq!(naive.best().policy, fit_observer(&view, 0, &cfg).unwrap());

        let star = inst.theta_star().clone();
        let sweep = oracle_sweep(&view, &[0.0, 0.5, 0.9], &cfg, |p| {
            crate::metrics::direction_error(&p.theta_tilde, &star)
        })
        .unwrap();
        assert_eq!(sweep.points.len(), 3);
        let min = sweep
            .points
            .iter()
            .map(|p| p.metric)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(sweep.best().metric, min);
        assert!(oracle_sweep(&view, &[], &cfg, |_| Ok(0.0)).is_err());
        assert!(oracle_sweep(&view, &[1.5], &cfg, |_| Ok(0.0)).is_err());
    }
}
