//! Synthetic linear bandit environment: hidden unit-norm parameter, Gaussian
//! contexts capped to the unit ball, and Gaussian reward noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Vector};
use crate::policy::argmax_arm;
use crate::rng::{standard_normal, RngStream};
use crate::scalar::Real;

/// Norm slack allowed on feature vectors.
pub const FEATURE_NORM_SLACK: f64 = 1e-12;

/// One round's feasible arms and their feature vectors.
///
/// Features are stored row-major (`len() × dim()`); position `i` corresponds to
/// `arm_ids()[i]`, and arm ids are strictly increasing so positional order is
/// arm-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSet<T> {
    round: usize,
    arm_ids: Vec<usize>,
    dim: usize,
    features: Vec<T>,
}

impl<T: Real> ContextSet<T> {
    pub fn new(round: usize, arm_ids: Vec<usize>, dim: usize, features: Vec<T>) -> Result<Self> {
        if features.len() != arm_ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: arm_ids.len() * dim,
                actual: features.len(),
            });
        }
        if arm_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidContext(
                "arm ids must be distinct and increasing".into(),
            ));
        }
        let limit = T::one() + T::lit(FEATURE_NORM_SLACK).max(T::epsilon() * T::lit(16.0));
        if dim > 0 {
            for (i, x) in features.chunks_exact(dim).enumerate() {
                let n = norm(x);
                if !(n <= limit) {
                    return Err(Error::InvalidContext(format!(
                        "feature of arm {} has norm {n}",
                        arm_ids[i]
                    )));
                }
            }
        }
        Ok(Self {
            round,
            arm_ids,
            dim,
            features,
        })
    }

    /// Context with arm ids `0..features.len()`.
    pub fn from_features(round: usize, features: &[&[T]]) -> Result<Self> {
        let dim = features.first().map_or(0, |f| f.len());
        let mut flat = Vec::with_capacity(features.len() * dim);
        for f in features {
            if f.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: f.len(),
                });
            }
            flat.extend_from_slice(f);
        }
        Self::new(round, (0..features.len()).collect(), dim, flat)
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn len(&self) -> usize {
        self.arm_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arm_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arm_ids(&self) -> &[usize] {
        &self.arm_ids
    }

    #[inline]
    pub fn feature(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> impl Iterator<Item = &[T]> {
        self.features.chunks_exact(self.dim.max(1))
    }

    /// Flat row-major feature storage.
    pub fn raw_features(&self) -> &[T] {
        &self.features
    }

    /// Mean reward `⟨x_i, θ⟩` of every arm.
    pub fn values(&self, theta: &[T]) -> Vec<T> {
        self.features().map(|x| dot(x, theta)).collect()
    }
}

/// How raw Gaussian features are brought into the unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    /// Divide by `max(1, ‖raw‖)`.
    #[default]
    Cap,
    /// Divide by `‖raw‖`, placing every arm on the sphere.
    Project,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibleSetMode {
    /// Every round offers all `K` arms.
    #[default]
    AllArms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance<T> {
    theta_star: Vector<T>,
    arms: usize,
    sigma: T,
    normalize: Normalize,
    feasible_set_mode: FeasibleSetMode,
}

impl<T: Real> ProblemInstance<T> {
    pub fn new(theta_star: Vector<T>, arms: usize, sigma: T, normalize: Normalize) -> Result<Self> {
        if theta_star.dim() == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if arms == 0 {
            return Err(Error::InvalidArgument(
                "number of arms must be positive".into(),
            ));
        }
        if !(sigma >= T::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma must be >= 0, got {sigma}"
            )));
        }
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
        if (theta_star.norm() - T::one()).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "theta_star must have unit norm, got {}",
                theta_star.norm()
            )));
        }
        Ok(Self {
            theta_star,
            arms,
            sigma,
            normalize,
            feasible_set_mode: FeasibleSetMode::AllArms,
        })
    }

    /// Instance with `θ*` drawn uniformly from the unit sphere.
    pub fn sample(
        d: usize,
        arms: usize,
        sigma: T,
        normalize: Normalize,
        stream: &RngStream,
    ) -> Result<Self> {
        let theta = sample_theta_star(d, &mut stream.rng())?;
        Self::new(theta, arms, sigma, normalize)
    }

    pub fn theta_star(&self) -> &Vector<T> {
        &self.theta_star
    }

    pub fn dim(&self) -> usize {
        self.theta_star.dim()
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn normalize(&self) -> Normalize {
        self.normalize
    }

    pub fn feasible_set_mode(&self) -> FeasibleSetMode {
        self.feasible_set_mode
    }
}

/// Uniform draw from the unit sphere in `R^d` (normalized standard Gaussian).
pub fn sample_theta_star<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vector<T>> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    loop {
        let raw: Vector<T> = (0..d)
            .map(|_| standard_normal::<T, _>(rng))
            .collect::<Vec<_>>()
            .into();
        if let Ok(unit) = raw.normalized() {
            return Ok(unit);
        }
    }
}

/// Context set for round `t`; determined entirely by `(stream, t)`.
pub fn sample_context<T: Real>(
    inst: &ProblemInstance<T>,
    t: usize,
    stream: &RngStream,
) -> ContextSet<T> {
    let d = inst.dim();
    let k = inst.arms();
    let mut rng = stream.round(t as u64);
    let mut features = Vec::with_capacity(k * d);
    for _ in 0..k {
        let start = features.len();
        features.extend((0..d).map(|_| standard_normal::<T, _>(&mut rng)));
        let raw = &mut features[start..];
        let n = norm(raw);
        let scale = match inst.normalize() {
            Normalize::Cap => n.max(T::one()),
            Normalize::Project if n > T::zero() => n,
            Normalize::Project => T::one(),
        };
        for v in raw.iter_mut() {
            *v /= scale;
        }
    }
    ContextSet {
        round: t,
        arm_ids: (0..k).collect(),
        dim: d,
        features,
    }
}

/// Noisy reward `⟨x, θ*⟩ + ε`, `ε ~ N(0, σ²)`.
pub fn realize_reward<T: Real, R: Rng + ?Sized>(
    inst: &ProblemInstance<T>,
    x: &[T],
    rng: &mut R,
) -> T {
    let mean = dot(x, inst.theta_star());
    if inst.sigma() == T::zero() {
        return mean;
    }
    mean + inst.sigma() * standard_normal::<T, _>(rng)
}

/// Position of the best arm under `θ*` (lowest index on ties).
pub fn optimal_arm<T: Real>(inst: &ProblemInstance<T>, c: &ContextSet<T>) -> usize {
    argmax_arm(inst.theta_star(), c)
}

/// Smallest best-minus-second-best value over the given contexts.
pub fn minimum_gap<T: Real>(inst: &ProblemInstance<T>, contexts: &[ContextSet<T>]) -> Result<T> {
    if contexts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut gap = T::infinity();
    for c in contexts {
        if c.len() < 2 {
            return Err(Error::InvalidContext(format!(
                "round {} has fewer than two arms",
                c.round()
            )));
        }
        let (mut best, mut second) = (T::neg_infinity(), T::neg_infinity());
        for x in c.features() {
            let v = dot(x, inst.theta_star());
            if v > best {
                second = best;
                best = v;
            } else if v > second {
                second = v;
            }
        }
        gap = gap.min(best - second);
    }
    Ok(gap)
}
