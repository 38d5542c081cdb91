//! Brute-force check of the Massart transfer inequality on finite problems.
//!
//! A finite instance has `m` contexts with explicit probabilities and one
//! optimal arm per context. The noisy label keeps the optimal arm with
//! probability `1 − η` and otherwise moves to one of the `K − 1` wrong arms
//! uniformly. For each deterministic policy `π` (all `K^m` of them) we check
//!
//! `R_noisy(π) − R_noisy(π*) ≥ (1 − 2η) · R(π)`.
//!
//! The arithmetic is generic so the same check runs over exact rationals and
//! over floats (with a caller-supplied slack).

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num};
use rand::Rng;

use crate::error::{Error, Result};

/// Field-like scalar for the transfer check: `Ratio<i64>`, `f64`, ...
pub trait CheckScalar: Num + Clone + PartialOrd + FromPrimitive + Debug {}
impl<T: Num + Clone + PartialOrd + FromPrimitive + Debug> CheckScalar for T {}

pub const MAX_CONTEXTS: usize = 4;
pub const MAX_ARMS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteInstance<T> {
    probs: Vec<T>,
    optimal: Vec<usize>,
    arms: usize,
}

impl<T: CheckScalar> FiniteInstance<T> {
    pub fn new(probs: Vec<T>, optimal: Vec<usize>, arms: usize) -> Result<Self> {
        let m = probs.len();
        if m == 0 || m > MAX_CONTEXTS {
            return Err(Error::InvalidArgument(format!(
                "need 1..={MAX_CONTEXTS} contexts, got {m}"
            )));
        }
        if !(2..=MAX_ARMS).contains(&arms) {
            return Err(Error::InvalidArgument(format!(
                "need 2..={MAX_ARMS} arms, got {arms}"
            )));
        }
        if optimal.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: optimal.len(),
            });
        }
        if optimal.iter().any(|&a| a >= arms) {
            return Err(Error::InvalidArgument("optimal arm out of range".into()));
        }
        if probs.iter().any(|p| *p < T::zero()) {
            return Err(Error::InvalidArgument(
                "context probabilities must be non-negative".into(),
            ));
        }
        let total = probs.iter().cloned().fold(T::zero(), |a, b| a + b);
        if total <= T::zero() {
            return Err(Error::InvalidArgument(
                "context probabilities sum to zero".into(),
            ));
        }
        // Normalize so callers may pass unnormalized weights.
        let probs = probs.into_iter().map(|p| p / total.clone()).collect();
        Ok(Self {
            probs,
            optimal,
            arms,
        })
    }

    pub fn contexts(&self) -> usize {
        self.probs.len()
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn optimal(&self) -> &[usize] {
        &self.optimal
    }

    /// Every deterministic map context → arm, in lexicographic order.
    pub fn policies(&self) -> Vec<Vec<usize>> {
        let m = self.contexts();
        let count = self.arms.pow(m as u32);
        (0..count)
            .map(|mut code| {
                (0..m)
                    .map(|_| {
                        let a = code % self.arms;
                        code /= self.arms;
                        a
                    })
                    .collect()
            })
            .collect()
    }

    /// `P(label = b | context i)` under the uniform-wrong channel.
    pub fn label_prob(&self, eta: &T, context: usize, b: usize) -> T {
        if b == self.optimal[context] {
            T::one() - eta.clone()
        } else {
            eta.clone() / from_usize::<T>(self.arms - 1)
        }
    }

    /// `Pr[π(x) ≠ a*]`.
    pub fn clean_risk(&self, policy: &[usize]) -> T {
        self.probs
            .iter()
            .zip(policy.iter().zip(&self.optimal))
            .filter(|(_, (a, s))| a != s)
            .fold(T::zero(), |acc, (p, _)| acc + p.clone())
    }

    /// `Pr[π(x) ≠ â]`, summing the channel over every label outcome.
    pub fn noisy_risk(&self, eta: &T, policy: &[usize]) -> T {
        let mut total = T::zero();
        for (i, p) in self.probs.iter().enumerate() {
            for b in 0..self.arms {
                if b != policy[i] {
                    total = total + p.clone() * self.label_prob(eta, i, b);
                }
            }
        }
        total
    }
}

fn from_usize<T: CheckScalar>(n: usize) -> T {
    T::from_usize(n).expect("small count representable")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport<T> {
    pub policies: Vec<Vec<usize>>,
    pub lhs_per_policy: Vec<T>,
    pub rhs_per_policy: Vec<T>,
    pub holds: bool,
}

impl<T: CheckScalar> TransferReport<T> {
    /// Index of the first policy violating the inequality, if any.
    pub fn first_violation(&self, slack: &T) -> Option<usize> {
        self.lhs_per_policy
            .iter()
            .zip(&self.rhs_per_policy)
            .position(|(l, r)| l.clone() + slack.clone() < *r)
    }
}

/// Exact check: no slack.
pub fn massart_transfer_check<T: CheckScalar>(
    eta: &T,
    inst: &FiniteInstance<T>,
) -> Result<TransferReport<T>> {
    massart_transfer_check_with_slack(eta, inst, &T::zero())
}

pub fn massart_transfer_check_with_slack<T: CheckScalar>(
    eta: &T,
    inst: &FiniteInstance<T>,
    slack: &T,
) -> Result<TransferReport<T>> {
    let half = T::one() / from_usize::<T>(2);
    if *eta < T::zero() || *eta >= half {
        return Err(Error::InvalidEta(format!("{eta:?}")));
    }
    let two = from_usize::<T>(2);
    let factor = T::one() - two * eta.clone();
    let base = inst.noisy_risk(eta, inst.optimal());
    let policies = inst.policies();
    let mut lhs = Vec::with_capacity(policies.len());
    let mut rhs = Vec::with_capacity(policies.len());
    for pi in &policies {
        lhs.push(inst.noisy_risk(eta, pi) - base.clone());
        rhs.push(factor.clone() * inst.clean_risk(pi));
    }
    let mut report = TransferReport {
        policies,
        lhs_per_policy: lhs,
        rhs_per_policy: rhs,
        holds: false,
    };
    report.holds = report.first_violation(slack).is_none();
    Ok(report)
}

/// The noise levels exercised by the verification suites, as `(num, den)`.
pub const ETA_GRID: [(i64, i64); 6] = [(0, 1), (1, 10), (1, 5), (3, 10), (2, 5), (49, 100)];

/// A random instance with integer weights in `1..=100`, shared by both scalar paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomInstanceSpec {
    pub weights: Vec<i64>,
    pub optimal: Vec<usize>,
    pub arms: usize,
}

impl RandomInstanceSpec {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let m = rng.random_range(1..=MAX_CONTEXTS);
        let arms = rng.random_range(2..=MAX_ARMS);
        Self {
            weights: (0..m).map(|_| rng.random_range(1..=100)).collect(),
            optimal: (0..m).map(|_| rng.random_range(0..arms)).collect(),
            arms,
        }
    }

    pub fn exact(&self) -> Result<FiniteInstance<Ratio<i64>>> {
        FiniteInstance::new(
            self.weights
                .iter()
                .map(|&w| Ratio::from_integer(w))
                .collect(),
            self.optimal.clone(),
            self.arms,
        )
    }

    pub fn float(&self) -> Result<FiniteInstance<f64>> {
        FiniteInstance::new(
            self.weights.iter().map(|&w| w as f64).collect(),
            self.optimal.clone(),
            self.arms,
        )
    }
}
