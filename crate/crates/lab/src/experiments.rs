//! The five experiment drivers.
//!
//! Every driver fans out over seeds (and horizons) on a bounded rayon pool and
//! returns rows sorted into a canonical order, so the output never depends on
//! scheduling.

use std::time::Instant;

use icb_core::diagnostics::{
    late_policy_generalization, predictability_diagnostic, DiagnosticsReport,
};
use icb_core::massart::{
    massart_transfer_check, massart_transfer_check_with_slack, RandomInstanceSpec,
};
use icb_core::metrics::{cumulative_regret, score_policy};
use icb_core::observer::{oracle_sweep, rule_based_length};
use icb_core::stats::{loglog_slope, mean};
use icb_core::{
    direction_error, fit_observer, project_observer_view, run_episode, BurnInSchedule, Episode,
    EpisodeStreams, EvaluationSet, ObserverPolicy, ObserverRecord, ProblemInstance, Purpose,
    Rational, RngStream,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind, OracleMetric};
use crate::error::{LabError, Result};
use crate::output::ResultRow;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "ICB_LAB_THREADS";

/// `alpha` written for rows that have no burn-in exponent (the learner itself).
pub const NO_ALPHA: f64 = -1.0;

/// Strategy suffixes of the `algorithm` column in comparison and rate rows.
pub const STRATEGIES: [&str; 4] = ["learner", "naive", "rule_based", "oracle"];

pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            LabError::invalid(
                THREADS_ENV,
                format!("expected a positive integer, got `{v}`"),
            )
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| LabError::invalid(THREADS_ENV, e.to_string()))
}

fn in_pool<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    worker_pool()?.install(f)
}

/// Everything derived from one seed at one horizon.
pub struct SeedRun {
    pub seed: u64,
    pub instance: ProblemInstance<f64>,
    pub eval: EvaluationSet<f64>,
    pub episode: Episode<f64>,
    pub episode_ms: f64,
}

/// The instance and evaluation set depend only on the seed, and the episode
/// streams are counter based, so shorter horizons replay prefixes of longer ones.
pub fn seed_run(cfg: &ExperimentConfig, seed: u64, n: usize) -> Result<SeedRun> {
    let instance = ProblemInstance::sample(
        cfg.d,
        cfg.k,
        cfg.sigma,
        cfg.normalize,
        &RngStream::derive(seed, Purpose::Theta),
    )?;
    let eval = EvaluationSet::sample(
        &instance,
        cfg.eval_size,
        &RngStream::derive(seed, Purpose::Evaluation),
    )?;
    let start = Instant::now();
    let episode = run_episode(
        &instance,
        &cfg.learner_config(),
        n,
        &EpisodeStreams::from_seed(seed),
    )?;
    Ok(SeedRun {
        seed,
        instance,
        eval,
        episode,
        episode_ms: elapsed_ms(start),
    })
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

impl SeedRun {
    pub fn horizon(&self) -> usize {
        self.episode.records.len()
    }

    pub fn learner_regret(&self) -> f64 {
        cumulative_regret(&self.instance, &self.episode.records)
            .last()
            .copied()
            .unwrap_or(0.0)
    }

    pub fn view(&self) -> Vec<ObserverRecord<'_, f64>> {
        project_observer_view(&self.episode.records)
    }

    fn row(
        &self,
        cfg: &ExperimentConfig,
        algorithm: String,
        alpha: f64,
        burn_in: usize,
        theta: &[f64],
        wall_ms: f64,
    ) -> Result<ResultRow> {
        let scores = score_policy(theta, &self.instance, &self.eval);
        Ok(ResultRow {
            experiment: cfg.experiment.name().to_string(),
            seed: self.seed,
            algorithm,
            d: cfg.d,
            k: cfg.k,
            n: self.horizon(),
            alpha,
            t: burn_in,
            l: self.horizon() - burn_in,
            pred_regret: scores.predictive_regret,
            dir_error: direction_error(theta, self.instance.theta_star())?,
            clean_risk: scores.clean_risk,
            learner_regret: self.learner_regret(),
            wall_ms,
        })
    }

    pub fn learner_row(&self, cfg: &ExperimentConfig, algorithm: String) -> Result<ResultRow> {
        self.row(
            cfg,
            algorithm,
            NO_ALPHA,
            0,
            self.episode.learner.theta_hat(),
            self.episode_ms,
        )
    }

    pub fn observer_row(
        &self,
        cfg: &ExperimentConfig,
        algorithm: String,
        alpha: f64,
        policy: &ObserverPolicy<f64>,
        wall_ms: f64,
    ) -> Result<ResultRow> {
        self.row(
            cfg,
            algorithm,
            alpha,
            policy.meta.burn_in,
            &policy.theta_tilde,
            wall_ms,
        )
    }

    fn oracle_value(
        &self,
        metric: OracleMetric,
        policy: &ObserverPolicy<f64>,
    ) -> icb_core::Result<f64> {
        match metric {
            OracleMetric::DirError => {
                direction_error(&policy.theta_tilde, self.instance.theta_star())
            }
            OracleMetric::PredRegret => {
                Ok(score_policy(&policy.theta_tilde, &self.instance, &self.eval).predictive_regret)
            }
        }
    }
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (a.n, a.seed, &a.algorithm)
            .cmp(&(b.n, b.seed, &b.algorithm))
            .then(a.alpha.total_cmp(&b.alpha))
    });
}

/// One row per `(seed, α)` in the sweep grid.
pub fn run_burnin_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let algorithm = cfg.learner.algorithm.name().to_string();
    let mut rows: Vec<ResultRow> = in_pool(|| {
        let per_seed: Vec<Vec<ResultRow>> = cfg
            .seeds
            .par_iter()
            .map(|&seed| {
                let run = seed_run(cfg, seed, cfg.n)?;
                let view = run.view();
                let mut rows = Vec::with_capacity(cfg.sweep.grid.len());
                for &alpha in &cfg.sweep.grid {
                    let start = Instant::now();
                    let burn_in = rule_based_length(alpha, cfg.n)?;
                    let policy = fit_observer(&view, burn_in, &cfg.fit)?;
                    rows.push(run.observer_row(
                        cfg,
                        algorithm.clone(),
                        alpha,
                        &policy,
                        elapsed_ms(start),
                    )?);
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        Ok(per_seed.into_iter().flatten().collect())
    })?;
    sort_rows(&mut rows);
    Ok(rows)
}

fn rule_based_alpha(schedule: &BurnInSchedule) -> f64 {
    match schedule {
        BurnInSchedule::RuleBased { alpha } => *alpha,
        _ => 0.9,
    }
}

/// Learner, naive, rule-based and oracle rows for one seed at one horizon.
fn strategy_rows(cfg: &ExperimentConfig, seed: u64, n: usize) -> Result<Vec<ResultRow>> {
    let run = seed_run(cfg, seed, n)?;
    let view = run.view();
    let algo = cfg.learner.algorithm.name();
    let label = |s: &str| format!("{algo}/{s}");
    let mut rows = vec![run.learner_row(cfg, label("learner"))?];

    let start = Instant::now();
    let naive = fit_observer(&view, 0, &cfg.fit)?;
    rows.push(run.observer_row(cfg, label("naive"), 0.0, &naive, elapsed_ms(start))?);

    let alpha = rule_based_alpha(&cfg.schedule);
    let start = Instant::now();
    let rule = fit_observer(&view, rule_based_length(alpha, n)?, &cfg.fit)?;
    rows.push(run.observer_row(cfg, label("rule_based"), alpha, &rule, elapsed_ms(start))?);

    let grid = match &cfg.schedule {
        BurnInSchedule::OracleSweep { grid } => grid.clone(),
        _ => cfg.sweep.grid.clone(),
    };
    let metric = cfg.oracle_metric();
    let start = Instant::now();
    let sweep = oracle_sweep(&view, &grid, &cfg.fit, |p| run.oracle_value(metric, p))?;
    let best = sweep.best();
    rows.push(run.observer_row(
        cfg,
        label("oracle"),
        best.alpha,
        &best.policy,
        elapsed_ms(start),
    )?);
    Ok(rows)
}

fn run_strategies(cfg: &ExperimentConfig, grid: &[usize]) -> Result<Vec<ResultRow>> {
    let tasks: Vec<(usize, u64)> = grid
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let mut rows: Vec<ResultRow> = in_pool(|| {
        let nested: Vec<Vec<ResultRow>> = tasks
            .par_iter()
            .map(|&(n, seed)| strategy_rows(cfg, seed, n))
            .collect::<Result<_>>()?;
        Ok(nested.into_iter().flatten().collect())
    })?;
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn run_learner_vs_observer(cfg: &ExperimentConfig, n_grid: &[usize]) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    crate::config::check_grid("n_grid", n_grid)?;
    run_strategies(cfg, n_grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub strategy: String,
    pub n_grid: Vec<usize>,
    pub mean_pred_regret: Vec<f64>,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudy {
    pub rows: Vec<ResultRow>,
    pub fits: Vec<RateFit>,
}

impl RateStudy {
    pub fn fit(&self, strategy: &str) -> Option<&RateFit> {
        self.fits.iter().find(|f| f.strategy == strategy)
    }
}

pub fn run_rate_study(cfg: &ExperimentConfig, n_grid: &[usize]) -> Result<RateStudy> {
    cfg.validate()?;
    crate::config::check_grid("n_grid", n_grid)?;
    crate::config::check_decades(n_grid)?;
    let rows = run_strategies(cfg, n_grid)?;
    let fits = rate_fits(&rows, n_grid)?;
    Ok(RateStudy { rows, fits })
}

/// Log-log slope of the seed-mean predictive regret against `N`, per observer strategy.
pub fn rate_fits(rows: &[ResultRow], n_grid: &[usize]) -> Result<Vec<RateFit>> {
    let mut fits = Vec::new();
    for strategy in ["rule_based", "oracle"] {
        let means: Vec<f64> = n_grid
            .iter()
            .map(|&n| {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.n == n && r.strategy() == Some(strategy))
                    .map(|r| r.pred_regret)
                    .collect();
                mean(&vals).unwrap_or(f64::NAN)
            })
            .collect();
        let xs: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
        let slope = loglog_slope(&xs, &means)?;
        fits.push(RateFit {
            strategy: strategy.to_string(),
            n_grid: n_grid.to_vec(),
            mean_pred_regret: means,
            slope,
        });
    }
    Ok(fits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRun {
    /// One learner row per seed.
    pub rows: Vec<ResultRow>,
    pub per_seed: Vec<(
        u64,
        icb_core::diagnostics::Predictability<f64>,
        icb_core::diagnostics::LateGeneralization<f64>,
    )>,
    pub report: DiagnosticsReport<f64>,
}

pub fn run_diagnostics(cfg: &ExperimentConfig) -> Result<DiagnosticsRun> {
    cfg.validate()?;
    let dg = cfg.diagnostics.clone();
    let algorithm = cfg.learner.algorithm.name().to_string();
    let mut per_seed = in_pool(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let run = seed_run(cfg, seed, cfg.n)?;
                let view = run.view();
                let split = RngStream::derive(seed, Purpose::Split);
                let pred = predictability_diagnostic(&view, dg.bins, dg.split, &cfg.fit, &split)?;
                let late = late_policy_generalization(&view, dg.tail_frac, dg.window, &cfg.fit)?;
                Ok((run.learner_row(cfg, algorithm.clone())?, (seed, pred, late)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    per_seed.sort_by_key(|(_, (seed, _, _))| *seed);
    let (mut rows, per_seed): (Vec<_>, Vec<_>) = per_seed.into_iter().unzip();
    sort_rows(&mut rows);
    let pairs: Vec<_> = per_seed
        .iter()
        .map(|(_, p, l)| (p.clone(), l.clone()))
        .collect();
    let report = DiagnosticsReport::aggregate(&pairs)?;
    Ok(DiagnosticsRun {
        rows,
        per_seed,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub seed: u64,
    pub instance: usize,
    pub eta: f64,
    pub contexts: usize,
    pub arms: usize,
    pub policies: usize,
    pub holds_exact: bool,
    pub holds_float: bool,
    /// Smallest `lhs − rhs` over policies, in the float path.
    pub min_margin: f64,
}

/// Closest fraction with denominator 1000 to `eta`, so the exact path sees
/// the same noise level as the config.
fn eta_rational(eta: f64) -> Rational {
    Rational::new((eta * 1000.0).round() as i64, 1000)
}

pub fn run_transfer_check(cfg: &ExperimentConfig) -> Result<Vec<TransferRow>> {
    cfg.validate()?;
    let t = &cfg.transfer;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let mut rng = RngStream::derive(seed, Purpose::Evaluation).rng();
        for instance in 0..t.instances {
            let spec = RandomInstanceSpec::sample(&mut rng);
            let exact = spec.exact()?;
            let float = spec.float()?;
            for &eta in &t.etas {
                let re = massart_transfer_check(&eta_rational(eta), &exact)?;
                let rf = massart_transfer_check_with_slack(&eta, &float, &t.slack)?;
                let min_margin = rf
                    .lhs_per_policy
                    .iter()
                    .zip(&rf.rhs_per_policy)
                    .map(|(l, r)| l - r)
                    .fold(f64::INFINITY, f64::min);
                rows.push(TransferRow {
                    seed,
                    instance,
                    eta,
                    contexts: spec.weights.len(),
                    arms: spec.arms,
                    policies: re.policies.len(),
                    holds_exact: re.holds,
                    holds_float: rf.holds,
                    min_margin,
                });
            }
        }
    }
    Ok(rows)
}

/// Rows produced by the configured experiment, for the row-based experiments.
pub fn run_rows(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    match cfg.experiment {
        ExperimentKind::BurninSweep => run_burnin_sweep(cfg),
        ExperimentKind::LearnerVsObserver => run_learner_vs_observer(cfg, &cfg.comparison_grid()),
        ExperimentKind::RateStudy => Ok(run_rate_study(cfg, &cfg.rate_grid())?.rows),
        ExperimentKind::Diagnostics => Ok(run_diagnostics(cfg)?.rows),
        ExperimentKind::TransferCheck => Ok(Vec::new()),
    }
}
