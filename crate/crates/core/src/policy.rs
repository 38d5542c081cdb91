//! Linear argmax policies and the conditional softmax surrogate loss.

use crate::environment::ContextSet;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Vector};
use crate::scalar::Real;

/// `argmax_a ⟨x_a, θ⟩` over the feasible arms; the lowest position wins ties.
///
/// # Panics
/// If `c` is empty.
pub fn argmax_arm<T: Real>(theta: &[T], c: &ContextSet<T>) -> usize {
    assert!(!c.is_empty(), "argmax over an empty context set");
    let mut best = 0;
    let mut best_value = dot(c.feature(0), theta);
    for i in 1..c.len() {
        let v = dot(c.feature(i), theta);
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Mean conditional softmax negative log-likelihood plus `λ/2 ‖θ‖²`, and its gradient.
///
/// `samples` yields `(context, label)` pairs where `label` is a position in the
/// context. Logits are shifted by their maximum before exponentiation.
pub fn softmax_nll_and_grad<'a, T, I>(theta: &[T], samples: I, lambda: T) -> Result<(T, Vector<T>)>
where
    T: Real,
    I: IntoIterator<Item = (&'a ContextSet<T>, usize)>,
{
    let d = theta.len();
    let mut loss = T::zero();
    let mut grad = Vector::zeros(d);
    let mut logits: Vec<T> = Vec::new();
    let mut n = 0usize;
    for (c, label) in samples {
        if c.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: c.dim(),
            });
        }
        if label >= c.len() {
            return Err(Error::InvalidArgument(format!(
                "label {label} outside a context of {} arms",
                c.len()
            )));
        }
        logits.clear();
        logits.extend(c.features().map(|x| dot(x, theta)));
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            z += *l;
        }
        loss += z.ln() + max - dot(c.feature(label), theta);
        let inv_z = T::one() / z;
        for (i, &w) in logits.iter().enumerate() {
            axpy(&mut grad, w * inv_z, c.feature(i));
        }
        axpy(&mut grad, -T::one(), c.feature(label));
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let inv_n = T::one() / T::from_count(n);
    let reg = T::lit(0.5) * lambda * dot(theta, theta);
    for (g, &t) in grad.iter_mut().zip(theta) {
        *g = *g * inv_n + lambda * t;
    }
    Ok((loss * inv_n + reg, grad))
}
