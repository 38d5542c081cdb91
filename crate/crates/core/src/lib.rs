//! Linear contextual bandit learners and a reward-free observer that recovers
//! their policy by imitating the suffix of the interaction log.
//!
//! All numeric kernels are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common case. The transfer-inequality
//! checker in [`massart`] additionally runs over exact rationals.

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod environment;
pub mod error;
pub mod learners;
pub mod linalg;
pub mod massart;
pub mod metrics;
pub mod observer;
pub mod optim;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use environment::{ContextSet, Normalize, ProblemInstance};
pub use error::{Error, Result};
pub use learners::{
    run_episode, Algorithm, Episode, EpisodeStreams, InteractionRecord, LearnerConfig, LearnerState,
};
pub use linalg::{Matrix, Vector};
pub use metrics::{direction_error, EvaluationSet, PolicyScores};
pub use observer::{
    fit_observer, project_observer_view, BurnInSchedule, FitConfig, ObserverPolicy, ObserverRecord,
};
pub use rng::{Purpose, RngStream};
pub use scalar::Real;

pub type Vector64 = Vector<f64>;
pub type Matrix64 = Matrix<f64>;
pub type ContextSet64 = ContextSet<f64>;
pub type ProblemInstance64 = ProblemInstance<f64>;
pub type LearnerConfig64 = LearnerConfig<f64>;
pub type FitConfig64 = FitConfig<f64>;
pub type Episode64 = Episode<f64>;

pub type Vector32 = Vector<f32>;
pub type ProblemInstance32 = ProblemInstance<f32>;
pub type FitConfig32 = FitConfig<f32>;

/// Exact rational scalar for the transfer checker.
pub type Rational = num_rational::Ratio<i64>;
