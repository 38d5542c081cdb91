//! Reward-aware online learners (LinUCB and linear Thompson sampling) that
//! generate the interaction logs the observer later imitates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{
    optimal_arm, realize_reward, sample_context, ContextSet, ProblemInstance,
};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, dot, sherman_morrison_in_place, Matrix, Vector};
use crate::policy::argmax_arm;
use crate::rng::{standard_normal, Purpose, RngStream};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    LinUcb,
    LinTs,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LinUcb => "linucb",
            Algorithm::LinTs => "lints",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linucb" => Ok(Algorithm::LinUcb),
            "lints" => Ok(Algorithm::LinTs),
            other => Err(Error::InvalidArgument(format!(
                "unknown algorithm {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig<T> {
    pub algorithm: Algorithm,
    /// Confidence width for LinUCB.
    pub alpha_ucb: T,
    /// Posterior inflation for LinTS.
    pub nu: T,
    /// Initial design matrix is `ridge · I`.
    pub ridge: T,
}

impl<T: Real> LearnerConfig<T> {
    /// `α_UCB = 0.1`, `ν = σ²·d`, unit ridge.
    pub fn standard(algorithm: Algorithm, sigma: T, d: usize) -> Self {
        Self {
            algorithm,
            alpha_ucb: T::lit(0.1),
            nu: sigma * sigma * T::from_count(d),
            ridge: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "ridge must be > 0, got {}",
                self.ridge
            )));
        }
        match self.algorithm {
            Algorithm::LinUcb if !(self.alpha_ucb > T::zero()) => Err(Error::InvalidArgument(
                format!("alpha_ucb must be > 0, got {}", self.alpha_ucb),
            )),
            Algorithm::LinTs if !(self.nu > T::zero()) => Err(Error::InvalidArgument(format!(
                "nu must be > 0, got {}",
                self.nu
            ))),
            _ => Ok(()),
        }
    }
}

/// Ridge-regression sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState<T> {
    v: Matrix<T>,
    v_inv: Matrix<T>,
    b: Vector<T>,
    theta_hat: Vector<T>,
    t: usize,
    ridge: T,
}

const AUDIT_EVERY: usize = 1000;

impl<T: Real> LearnerState<T> {
    pub fn new(d: usize, ridge: T) -> Result<Self> {
        if !(ridge > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "ridge must be > 0, got {ridge}"
            )));
        }
        Ok(Self {
            v: Matrix::scaled_identity(d, ridge),
            v_inv: Matrix::scaled_identity(d, T::one() / ridge),
            b: Vector::zeros(d),
            theta_hat: Vector::zeros(d),
            t: 0,
            ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.dim()
    }

    pub fn design(&self) -> &Matrix<T> {
        &self.v
    }

    pub fn design_inverse(&self) -> &Matrix<T> {
        &self.v_inv
    }

    pub fn response(&self) -> &Vector<T> {
        &self.b
    }

    pub fn theta_hat(&self) -> &Vector<T> {
        &self.theta_hat
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    /// Adds one observation `(x, r)`.
    pub fn update(&mut self, x: &[T], r: T) {
        self.v.add_outer(T::one(), x);
        sherman_morrison_in_place(&mut self.v_inv, x);
        self.b.axpy(r, x);
        self.theta_hat = self.v_inv.mul_vec(&self.b);
        self.t += 1;
        if cfg!(debug_assertions) && self.t.is_multiple_of(AUDIT_EVERY) {
            self.audit_inverse();
        }
    }

    fn audit_inverse(&self) {
        let Ok(prod) = self.v_inv.matmul(&self.v) else {
            return;
        };
        let drift = prod.sub(&Matrix::identity(self.dim())).frobenius_norm();
        let tol = T::epsilon().sqrt() * T::from_count(self.dim().max(1));
        debug_assert!(drift <= tol, "maintained inverse drifted by {drift}");
    }

    /// UCB score `⟨x, θ̂⟩ + α √(xᵀ V⁻¹ x)`.
    pub fn ucb_score(&self, x: &[T], alpha_ucb: T) -> T {
        dot(x, &self.theta_hat) + alpha_ucb * self.v_inv.quad_form(x).max(T::zero()).sqrt()
    }

    pub fn linucb_select(&self, c: &ContextSet<T>, alpha_ucb: T) -> usize {
        assert!(!c.is_empty(), "selection over an empty context set");
        let mut best = 0;
        let mut best_score = self.ucb_score(c.feature(0), alpha_ucb);
        for i in 1..c.len() {
            let s = self.ucb_score(c.feature(i), alpha_ucb);
            if s > best_score {
                best = i;
                best_score = s;
            }
        }
        best
    }

    /// Draws `θ̃ ~ N(θ̂, ν V⁻¹)` using a Cholesky factor of the maintained inverse.
    pub fn posterior_sample<R: Rng + ?Sized>(&self, nu: T, rng: &mut R) -> Result<Vector<T>> {
        let factor = cholesky(&self.v_inv)?;
        let z: Vec<T> = (0..self.dim())
            .map(|_| standard_normal::<T, _>(rng))
            .collect();
        let mut sample = self.theta_hat.clone();
        sample.axpy(nu.sqrt(), &factor.mul_lower(&z));
        Ok(sample)
    }

    pub fn lints_select<R: Rng + ?Sized>(
        &self,
        c: &ContextSet<T>,
        nu: T,
        rng: &mut R,
    ) -> Result<usize> {
        let sample = self.posterior_sample(nu, rng)?;
        Ok(argmax_arm(&sample, c))
    }
}

/// One logged round. Reward and optimal arm are evaluation-only fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord<T> {
    pub round: usize,
    pub context: ContextSet<T>,
    pub chosen_arm: usize,
    pub reward: Option<T>,
    pub optimal_arm: Option<usize>,
}

/// Streams consumed by one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeStreams {
    pub contexts: RngStream,
    pub rewards: RngStream,
    pub policy: RngStream,
}

impl EpisodeStreams {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            contexts: RngStream::derive(seed, Purpose::Contexts),
            rewards: RngStream::derive(seed, Purpose::Rewards),
            policy: RngStream::derive(seed, Purpose::Policy),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Episode<T> {
    pub records: Vec<InteractionRecord<T>>,
    pub learner: LearnerState<T>,
}

/// Runs `n` rounds of select → reward → update.
pub fn run_episode<T: Real>(
    inst: &ProblemInstance<T>,
    cfg: &LearnerConfig<T>,
    n: usize,
    streams: &EpisodeStreams,
) -> Result<Episode<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "episode length must be positive".into(),
        ));
    }
    cfg.validate()?;
    let mut state = LearnerState::new(inst.dim(), cfg.ridge)?;
    let mut records = Vec::with_capacity(n);
    for t in 0..n {
        let context = sample_context(inst, t, &streams.contexts);
        let chosen = match cfg.algorithm {
            Algorithm::LinUcb => state.linucb_select(&context, cfg.alpha_ucb),
            Algorithm::LinTs => {
                state.lints_select(&context, cfg.nu, &mut streams.policy.round(t as u64))?
            }
        };
        let x = context.feature(chosen);
        let reward = realize_reward(inst, x, &mut streams.rewards.round(t as u64));
        state.update(x, reward);
        records.push(InteractionRecord {
            round: t,
            chosen_arm: chosen,
            reward: Some(reward),
            optimal_arm: Some(optimal_arm(inst, &context)),
            context,
        });
    }
    Ok(Episode {
        records,
        learner: state,
    })
}
