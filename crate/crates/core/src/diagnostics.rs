//! Diagnostics of how predictable the learner's behavior becomes over time.
//!
//! Two views: per-bin imitation accuracy (a fresh observer fit inside each
//! time bin, scored on held-out samples from that bin), and the agreement of
//! a single late-phase observer with the log across the whole trajectory.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observer::{fit_observer, FitConfig, ObserverRecord};
use crate::policy::argmax_arm;
use crate::rng::RngStream;
use crate::scalar::Real;
use crate::stats::{mean, mean_ci95, spearman_rho, MeanCi};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_SPLIT: f64 = 0.8;
pub const DEFAULT_TAIL_FRAC: f64 = 0.3;
pub const DEFAULT_WINDOW: usize = 500;
pub const MIN_TEST_SAMPLES: usize = 10;

/// Number of leading/trailing bins that make up the "early" and "late" groups.
fn edge_count(j: usize) -> usize {
    ((3 * j) / 10).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictability<T> {
    pub bin_accuracies: Vec<T>,
    /// `None` when every bin has the same accuracy.
    pub spearman_r: Option<T>,
    pub early_late_gap: T,
}

/// Splits the log into `bins` equal time bins (the last absorbs the remainder).
pub fn time_bins<'v, 'a, T>(
    view: &'v [ObserverRecord<'a, T>],
    bins: usize,
) -> Vec<&'v [ObserverRecord<'a, T>]> {
    let size = view.len() / bins;
    (0..bins)
        .map(|b| {
            let end = if b + 1 == bins {
                view.len()
            } else {
                (b + 1) * size
            };
            &view[b * size..end]
        })
        .collect()
}

pub fn predictability_diagnostic<T: Real>(
    view: &[ObserverRecord<'_, T>],
    bins: usize,
    split: f64,
    cfg: &FitConfig<T>,
    stream: &RngStream,
) -> Result<Predictability<T>> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 bins, got {bins}"
        )));
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split must lie in (0, 1), got {split}"
        )));
    }
    let mut accs = Vec::with_capacity(bins);
    for (b, bin) in time_bins(view, bins).into_iter().enumerate() {
        let n_train = (split * bin.len() as f64).round() as usize;
        let n_test = bin.len().saturating_sub(n_train);
        if n_test < MIN_TEST_SAMPLES || n_train == 0 {
            return Err(Error::BinTooSmall {
                bin: b,
                test_samples: n_test,
                required: MIN_TEST_SAMPLES,
            });
        }
        let mut order: Vec<usize> = (0..bin.len()).collect();
        order.shuffle(&mut stream.round(b as u64));
        let train: Vec<ObserverRecord<'_, T>> = order[..n_train].iter().map(|&i| bin[i]).collect();
        let policy = fit_observer(&train, 0, cfg)?;
        let hits = order[n_train..]
            .iter()
            .filter(|&&i| argmax_arm(&policy.theta_tilde, bin[i].context) == bin[i].chosen_arm)
            .count();
        accs.push(T::from_count(hits) / T::from_count(n_test));
    }
    Ok(summarize_bins(accs))
}

fn summarize_bins<T: Real>(accs: Vec<T>) -> Predictability<T> {
    let idx: Vec<T> = (0..accs.len()).map(T::from_count).collect();
    let spearman_r = spearman_rho(&idx, &accs).ok();
    Predictability {
        early_late_gap: edge_gap(&accs),
        spearman_r,
        bin_accuracies: accs,
    }
}

/// Mean of the last 30% of entries minus the mean of the first 30%.
fn edge_gap<T: Real>(xs: &[T]) -> T {
    let e = edge_count(xs.len());
    mean(&xs[xs.len() - e..]).unwrap_or_else(T::zero) - mean(&xs[..e]).unwrap_or_else(T::zero)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateGeneralization<T> {
    /// `(window_start, agreement)` over consecutive non-overlapping windows.
    pub agreement_curve: Vec<(usize, T)>,
    pub late_early_gap: T,
    pub tail_start: usize,
}

pub fn late_policy_generalization<T: Real>(
    view: &[ObserverRecord<'_, T>],
    tail_frac: f64,
    window: usize,
    cfg: &FitConfig<T>,
) -> Result<LateGeneralization<T>> {
    if !(tail_frac > 0.0 && tail_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tail fraction must lie in (0, 1), got {tail_frac}"
        )));
    }
    if window < 10 {
        return Err(Error::InvalidArgument(format!(
            "window must be at least 10, got {window}"
        )));
    }
    let n = view.len();
    if n < window {
        return Err(Error::InvalidWindow {
            start: 0,
            end: window,
            len: n,
        });
    }
    let tail_len = ((tail_frac * n as f64).round() as usize).clamp(1, n);
    let tail_start = n - tail_len;
    let policy = fit_observer(view, tail_start, cfg)?;

    let mut curve = Vec::new();
    let mut early = Vec::new();
    let mut late = Vec::new();
    let mut start = 0;
    while start + window <= n {
        let w = &view[start..start + window];
        let hits = w
            .iter()
            .filter(|r| argmax_arm(&policy.theta_tilde, r.context) == r.chosen_arm)
            .count();
        let agreement = T::from_count(hits) / T::from_count(window);
        // Classify by window center against the 30% / 70% marks.
        let center2 = 2 * start + window;
        if center2 * 10 < 2 * 3 * n {
            early.push(agreement);
        } else if center2 * 10 >= 2 * 7 * n {
            late.push(agreement);
        }
        curve.push((start, agreement));
        start += window;
    }
    let gap = match (mean(&late), mean(&early)) {
        (Some(l), Some(e)) => l - e,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "window {window} too coarse to form early and late groups over {n} rounds"
            )))
        }
    };
    Ok(LateGeneralization {
        agreement_curve: curve,
        late_early_gap: gap,
        tail_start,
    })
}

/// Both diagnostics for one seed.
pub type SeedDiagnostics<T> = (Predictability<T>, LateGeneralization<T>);

/// Seed-level aggregate of both diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport<T> {
    pub seeds: usize,
    /// Seed mean of each bin's accuracy.
    pub bin_accuracies: Vec<T>,
    /// Spearman correlation of the seed-averaged accuracy curve with bin index.
    pub spearman_r: T,
    /// Per-seed correlations; `None` where a seed's curve is constant.
    pub spearman_per_seed: Vec<Option<T>>,
    pub early_late_gap: MeanCi<T>,
    pub agreement_curve: Vec<(usize, T)>,
    pub late_early_agreement_gap: MeanCi<T>,
}

impl<T: Real> DiagnosticsReport<T> {
    pub fn aggregate(per_seed: &[SeedDiagnostics<T>]) -> Result<Self> {
        let Some(first) = per_seed.first() else {
            return Err(Error::EmptyDataset);
        };
        let bins = first.0.bin_accuracies.len();
        let windows = first.1.agreement_curve.len();
        if per_seed
            .iter()
            .any(|(p, l)| p.bin_accuracies.len() != bins || l.agreement_curve.len() != windows)
        {
            return Err(Error::InvalidArgument(
                "seeds disagree on bin or window layout".into(),
            ));
        }
        let column_mean = |f: &dyn Fn(&SeedDiagnostics<T>) -> T| {
            per_seed.iter().map(f).sum::<T>() / T::from_count(per_seed.len())
        };
        let bin_accuracies: Vec<T> = (0..bins)
            .map(|b| column_mean(&|s| s.0.bin_accuracies[b]))
            .collect();
        let agreement_curve = (0..windows)
            .map(|w| {
                (
                    first.1.agreement_curve[w].0,
                    column_mean(&|s| s.1.agreement_curve[w].1),
                )
            })
            .collect();
        let idx: Vec<T> = (0..bins).map(T::from_count).collect();
        let spearman_r = spearman_rho(&idx, &bin_accuracies)?;
        let gaps: Vec<T> = per_seed.iter().map(|s| s.0.early_late_gap).collect();
        let agreement_gaps: Vec<T> = per_seed.iter().map(|s| s.1.late_early_gap).collect();
        Ok(Self {
            seeds: per_seed.len(),
            spearman_per_seed: per_seed.iter().map(|s| s.0.spearman_r).collect(),
            bin_accuracies,
            spearman_r,
            early_late_gap: mean_ci95(&gaps).ok_or(Error::EmptyDataset)?,
            agreement_curve,
            late_early_agreement_gap: mean_ci95(&agreement_gaps).ok_or(Error::EmptyDataset)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_context, ContextSet, Normalize, ProblemInstance};
    use crate::rng::Purpose;

    fn stationary(seed: u64, n: usize) -> (Vec<ContextSet<f64>>, Vec<usize>) {
        let inst = ProblemInstance::sample(
            5,
            8,
            0.1,
            Normalize::Cap,
            &RngStream::derive(seed, Purpose::Theta),
        )
        .unwrap();
        let stream = RngStream::derive(seed, Purpose::Contexts);
        let teacher = inst.theta_star().clone();
        let contexts: Vec<_> = (0..n).map(|t| sample_context(&inst, t, &stream)).collect();
        let labels = contexts.iter().map(|c| argmax_arm(&teacher, c)).collect();
        (contexts, labels)
    }

    fn view<'a>(c: &'a [ContextSet<f64>], l: &[usize]) -> Vec<ObserverRecord<'a, f64>> {
        c.iter()
            .zip(l)
            .enumerate()
            .map(|(round, (context, &chosen_arm))| ObserverRecord {
                round,
                context,
                chosen_arm,
            })
            .collect()
    }

    #[test]
    fn bins_cover_the_log() {
        let (c, l) = stationary(1, 1003);
        let v = view(&c, &l);
        let bins = time_bins(&v, 10);
        assert_eq!(bins.len(), 10);
        assert_eq!(bins.iter().map(|b| b.len()).sum::<usize>(), 1003);
        assert_eq!(bins[9].len(), 103);
        assert_eq!(edge_count(10), 3);
        assert_eq!(edge_count(2), 1);
    }

    #[test]
    fn stationary_behavior_has_no_trend() {
        let mut gaps = Vec::new();
        let mut agreement_gaps = Vec::new();
        for seed in 0..5 {
            let (c, l) = stationary(seed, 2000);
            let v = view(&c, &l);
            let cfg = FitConfig::default();
            let p = predictability_diagnostic(
                &v,
                10,
                0.8,
                &cfg,
                &RngStream::derive(seed, Purpose::Split),
            )
            .unwrap();
            assert!(p.bin_accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
            gaps.push(p.early_late_gap);
            let g = late_policy_generalization(&v, 0.3, 100, &cfg).unwrap();
            assert!(g
                .agreement_curve
                .iter()
                .all(|(_, a)| (0.0..=1.0).contains(a)));
            agreement_gaps.push(g.late_early_gap);
        }
        let m = mean(&gaps).unwrap();
        assert!(m.abs() < 0.05, "{m}");
        let m = mean(&agreement_gaps).unwrap();
        assert!(m.abs() < 0.05, "{m}");
    }

    #[test]
    fn small_bins_are_rejected() {
        let (c, l) = stationary(2, 200);
        let v = view(&c, &l);
        let err =
            predictability_diagnostic(&v, 10, 0.8, &FitConfig::default(), &RngStream::new(0, 0))
                .unwrap_err();
        assert!(matches!(
            err,
            Error::BinTooSmall {
                bin: 0,
                test_samples: 4,
                ..
            }
        ));
        assert!(predictability_diagnostic(
            &v,
            1,
            0.8,
            &FitConfig::default(),
            &RngStream::new(0, 0)
        )
        .is_err());
        assert!(predictability_diagnostic(
            &v,
            2,
            1.0,
            &FitConfig::default(),
            &RngStream::new(0, 0)
        )
        .is_err());
    }

    #[test]
    fn window_layout() {
        let (c, l) = stationary(3, 1000);
        let v = view(&c, &l);
        let cfg = FitConfig::default();
        let g = late_policy_generalization(&v, 0.3, 100, &cfg).unwrap();
        assert_eq!(g.tail_start, 700);
        let starts: Vec<usize> = g.agreement_curve.iter().map(|w| w.0).collect();
        assert_eq!(starts, (0..10).map(|i| i * 100).collect::<Vec<_>>());
        assert!(late_policy_generalization(&v, 0.3, 5, &cfg).is_err());
        assert!(late_policy_generalization(&v, 0.0, 100, &cfg).is_err());
    }

    #[test]
    fn gap_on_a_drifting_log() {
        // Labels are random early and follow a fixed teacher late.
        let (c, mut l) = stationary(4, 2000);
        let mut rng = RngStream::new(4, 9).rng();
        for a in l.iter_mut().take(1000) {
            *a = rand::Rng::random_range(&mut rng, 0..8);
        }
        let v = view(&c, &l);
        let cfg = FitConfig::default();
        let p = predictability_diagnostic(&v, 10, 0.8, &cfg, &RngStream::new(4, 1)).unwrap();
        assert!(p.early_late_gap > 0.3, "{:?}", p);
        assert!(p.spearman_r.unwrap() > 0.5);
        let g = late_policy_generalization(&v, 0.3, 100, &cfg).unwrap();
        assert!(g.late_early_gap > 0.3);
    }

    #[test]
    fn aggregate_matches_hand_computation() {
        let mk = |accs: Vec<f64>, agree: Vec<f64>, gap: f64| {
            (
                Predictability {
                    early_late_gap: edge_gap(&accs),
                    spearman_r: None,
                    bin_accuracies: accs,
                },
                LateGeneralization {
                    agreement_curve: agree
                        .into_iter()
                        .enumerate()
                        .map(|(i, a)| (i * 10, a))
                        .collect(),
                    late_early_gap: gap,
                    tail_start: 0,
                },
            )
        };
        let seeds = vec![
            mk(vec![0.1, 0.2, 0.4], vec![0.5, 0.7], 0.2),
            mk(vec![0.3, 0.2, 0.6], vec![0.5, 0.9], 0.4),
        ];
        let rep = DiagnosticsReport::aggregate(&seeds).unwrap();
        assert_eq!(rep.seeds, 2);
        approx::assert_abs_diff_eq!(rep.bin_accuracies[0], 0.2, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(rep.bin_accuracies[2], 0.5, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(rep.spearman_r, 3f64.sqrt() / 2.0, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(rep.agreement_curve[1].1, 0.8, epsilon = 1e-15);
        // gaps 0.3 and 0.3: zero-width interval.
        approx::assert_abs_diff_eq!(rep.early_late_gap.mean, 0.3, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(
            rep.early_late_gap.hi - rep.early_late_gap.lo,
            0.0,
            epsilon = 1e-12
        );
        // gaps 0.2, 0.4: s = √0.02, half width 1.96·s/√2 = 0.196.
        approx::assert_abs_diff_eq!(
            rep.late_early_agreement_gap.hi,
            0.3 + 0.196,
            epsilon = 1e-12
        );
        assert!(DiagnosticsReport::<f64>::aggregate(&[]).is_err());
    }
}
