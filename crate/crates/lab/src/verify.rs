//! Self-checks behind `icb-lab verify`: the transfer inequality, the
//! regret/risk bound and the numerical kernels.

use icb_core::environment::sample_theta_star;
use icb_core::linalg::{cholesky, sherman_morrison_in_place, Matrix};
use icb_core::massart::{
    massart_transfer_check, massart_transfer_check_with_slack, RandomInstanceSpec, ETA_GRID,
};
use icb_core::metrics::score_policy;
use icb_core::observer::rule_based_length;
use icb_core::policy::softmax_nll_and_grad;
use icb_core::rng::standard_normal;
use icb_core::{
    run_episode, Algorithm, ContextSet, EpisodeStreams, EvaluationSet, LearnerConfig, Normalize,
    ProblemInstance, Rational, RngStream,
};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn failed(name: &'static str, err: impl std::fmt::Display) -> Check {
    check(name, false, format!("error: {err}"))
}

pub fn schedule_arithmetic() -> Check {
    match rule_based_length(0.9, 10_000) {
        Ok(t) => check("schedule", t == 3981, format!("T(10000; 0.9) = {t}")),
        Err(e) => failed("schedule", e),
    }
}

/// Every deterministic policy of `instances` random finite problems, at every
/// noise level, in exact rationals and in floats with `1e-12` slack.
pub fn transfer_inequality(instances: usize, seed: u64) -> Check {
    let mut rng = RngStream::new(seed, 0x6d61_7373).rng();
    let mut checked = 0usize;
    let mut violations = 0usize;
    for _ in 0..instances {
        let spec = RandomInstanceSpec::sample(&mut rng);
        let (exact, float) = match (spec.exact(), spec.float()) {
            (Ok(e), Ok(f)) => (e, f),
            (Err(e), _) | (_, Err(e)) => return failed("transfer", e),
        };
        for (num, den) in ETA_GRID {
            let re = massart_transfer_check(&Rational::new(num, den), &exact);
            let rf = massart_transfer_check_with_slack(&(num as f64 / den as f64), &float, &1e-12);
            match (re, rf) {
                (Ok(re), Ok(rf)) => {
                    checked += re.policies.len();
                    violations += usize::from(!re.holds) + usize::from(!rf.holds);
                }
                (Err(e), _) | (_, Err(e)) => return failed("transfer", e),
            }
        }
    }
    check(
        "transfer",
        violations == 0,
        format!(
            "{instances} instances x {} noise levels, {checked} policies, {violations} violations",
            ETA_GRID.len()
        ),
    )
}

/// `predictive_regret ≤ 2 · clean_risk` for random parameter vectors.
pub fn regret_risk_bound(thetas: usize, contexts: usize, seed: u64) -> Check {
    let run = || -> icb_core::Result<(usize, f64)> {
        let inst =
            ProblemInstance::<f64>::sample(10, 20, 0.1, Normalize::Cap, &RngStream::new(seed, 1))?;
        let eval = EvaluationSet::sample(&inst, contexts, &RngStream::new(seed, 2))?;
        let mut rng = RngStream::new(seed, 3).rng();
        let mut violations = 0;
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..thetas {
            let scale: f64 = rng.random_range(0.01..10.0);
            let theta = sample_theta_star::<f64, _>(10, &mut rng)?.scaled(scale);
            let s = score_policy(&theta, &inst, &eval);
            worst = worst.max(s.predictive_regret - 2.0 * s.clean_risk);
            if s.predictive_regret > 2.0 * s.clean_risk {
                violations += 1;
            }
        }
        Ok((violations, worst))
    };
    match run() {
        Ok((v, worst)) => check(
            "regret_vs_risk",
            v == 0,
            format!("{thetas} parameters on {contexts} contexts, {v} violations, max(regret - 2 risk) = {worst:.3e}"),
        ),
        Err(e) => failed("regret_vs_risk", e),
    }
}

/// Worst relative error of the softmax gradient against central differences.
pub fn softmax_gradient(instances: usize, seed: u64) -> (usize, f64) {
    let mut rng = RngStream::new(seed, 0x6772_6164).rng();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..instances {
        let d = rng.random_range(2..8);
        let k = rng.random_range(2..6);
        let m = rng.random_range(1..6);
        let contexts: Vec<ContextSet<f64>> = (0..m)
            .map(|t| {
                let rows: Vec<Vec<f64>> = (0..k)
                    .map(|_| {
                        let raw: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
                        let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
                        raw.iter().map(|v| v / n).collect()
                    })
                    .collect();
                let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
                ContextSet::from_features(t, &refs).expect("unit-ball rows")
            })
            .collect();
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        let theta: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
        let lambda = 1e-4;
        let f = |t: &[f64]| {
            softmax_nll_and_grad(t, contexts.iter().zip(labels.iter().copied()), lambda)
                .map(|r| r.0)
        };
        let Ok((_, grad)) =
            softmax_nll_and_grad(&theta, contexts.iter().zip(labels.iter().copied()), lambda)
        else {
            failures += 1;
            continue;
        };
        let mut fd = vec![0.0; d];
        for j in 0..d {
            let mut p = theta.clone();
            let mut q = theta.clone();
            p[j] += h;
            q[j] -= h;
            fd[j] = (f(&p).unwrap() - f(&q).unwrap()) / (2.0 * h);
        }
        let diff = grad
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(diff / scale);
    }
    (failures, worst)
}

/// Worst relative Frobenius error of a rank-one-updated inverse against a
/// Cholesky-based direct inverse, over `updates` updates at dimension `d`.
pub fn sherman_morrison_drift(d: usize, updates: usize, seed: u64) -> icb_core::Result<f64> {
    let mut rng = RngStream::new(seed, 0x736d).rng();
    let mut v = Matrix::<f64>::identity(d);
    let mut inv = Matrix::<f64>::identity(d);
    let mut worst: f64 = 0.0;
    for _ in 0..updates {
        let raw: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
        let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        let x: Vec<f64> = raw.iter().map(|r| r / n).collect();
        v.add_outer(1.0, &x);
        sherman_morrison_in_place(&mut inv, &x);
        let direct = cholesky(&v)?.inverse();
        worst = worst.max(inv.sub(&direct).frobenius_norm() / direct.frobenius_norm());
    }
    Ok(worst)
}

pub fn numerical_kernels() -> Check {
    let (failures, grad) = softmax_gradient(100, 7);
    let sm = match sherman_morrison_drift(20, 100, 7) {
        Ok(v) => v,
        Err(e) => return failed("kernels", e),
    };
    check(
        "kernels",
        failures == 0 && grad <= 1e-6 && sm <= 1e-8,
        format!("softmax gradient rel. error {grad:.2e}, Sherman-Morrison rel. error {sm:.2e}"),
    )
}

/// Two episodes from the same seed agree record for record.
pub fn replay_determinism() -> Check {
    let run = || -> icb_core::Result<bool> {
        let inst =
            ProblemInstance::<f64>::sample(5, 10, 0.1, Normalize::Cap, &RngStream::new(3, 1))?;
        let mut same = true;
        for algo in [Algorithm::LinUcb, Algorithm::LinTs] {
            let cfg = LearnerConfig::standard(algo, 0.1, 5);
            let a = run_episode(&inst, &cfg, 300, &EpisodeStreams::from_seed(3))?;
            let b = run_episode(&inst, &cfg, 300, &EpisodeStreams::from_seed(3))?;
            same &= a.records == b.records && a.learner.theta_hat() == b.learner.theta_hat();
        }
        Ok(same)
    };
    match run() {
        Ok(same) => check(
            "replay",
            same,
            "two episodes per learner from one seed".into(),
        ),
        Err(e) => failed("replay", e),
    }
}

pub fn run_all() -> Vec<Check> {
    vec![
        schedule_arithmetic(),
        regret_risk_bound(2000, 1000, 11),
        transfer_inequality(100, 5),
        numerical_kernels(),
        replay_determinism(),
    ]
}
