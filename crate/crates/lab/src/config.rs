//! Experiment configuration: a TOML file with one section per component,
//! every field overridable from the command line.

use std::path::{Path, PathBuf};

use icb_core::observer::DEFAULT_SWEEP_GRID;
use icb_core::{Algorithm, BurnInSchedule, FitConfig, LearnerConfig, Normalize};
use serde::{Deserialize, Serialize};

use crate::error::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BurninSweep,
    LearnerVsObserver,
    RateStudy,
    Diagnostics,
    TransferCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::BurninSweep,
        ExperimentKind::LearnerVsObserver,
        ExperimentKind::RateStudy,
        ExperimentKind::Diagnostics,
        ExperimentKind::TransferCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::BurninSweep => "burnin_sweep",
            ExperimentKind::LearnerVsObserver => "learner_vs_observer",
            ExperimentKind::RateStudy => "rate_study",
            ExperimentKind::Diagnostics => "diagnostics",
            ExperimentKind::TransferCheck => "transfer_check",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::invalid("experiment", format!("unknown experiment `{s}`")))
    }
}

/// Quantity the hindsight oracle minimizes when picking its burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMetric {
    DirError,
    PredRegret,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSection {
    pub algorithm: Algorithm,
    pub alpha_ucb: f64,
    /// Posterior inflation; `σ²·d` when absent.
    pub nu: Option<f64>,
    pub ridge: f64,
}

impl Default for LearnerSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::LinTs,
            alpha_ucb: 0.1,
            nu: None,
            ridge: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub grid: Vec<f64>,
    /// Defaults to the metric each experiment reports on.
    pub oracle_metric: Option<OracleMetric>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            grid: DEFAULT_SWEEP_GRID.to_vec(),
            oracle_metric: None,
        }
    }
}

pub const DEFAULT_COMPARISON_GRID: [usize; 5] = [500, 1000, 2000, 5000, 10_000];
pub const DEFAULT_RATE_GRID: [usize; 4] = [500, 1581, 5000, 15_811];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    /// Horizon grid; when absent the comparison and rate studies use their own defaults.
    pub n_grid: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub bins: usize,
    pub split: f64,
    pub tail_frac: f64,
    pub window: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        use icb_core::diagnostics as dg;
        Self {
            bins: dg::DEFAULT_BINS,
            split: dg::DEFAULT_SPLIT,
            tail_frac: dg::DEFAULT_TAIL_FRAC,
            window: dg::DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    pub instances: usize,
    pub etas: Vec<f64>,
    pub slack: f64,
}

impl Default for TransferSection {
    fn default() -> Self {
        Self {
            instances: 100,
            etas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.49],
            slack: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub d: usize,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    pub sigma: f64,
    pub normalize: Normalize,
    pub seeds: Vec<u64>,
    pub eval_size: usize,
    pub output_dir: PathBuf,
    pub learner: LearnerSection,
    pub schedule: BurnInSchedule,
    pub fit: FitConfig<f64>,
    pub sweep: SweepSection,
    pub study: StudySection,
    pub diagnostics: DiagnosticsSection,
    pub transfer: TransferSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::BurninSweep,
            d: 50,
            k: 200,
            n: 10_000,
            sigma: 0.1,
            normalize: Normalize::Cap,
            seeds: (1..=20).collect(),
            eval_size: icb_core::metrics::DEFAULT_EVAL_SIZE,
            output_dir: PathBuf::from("results"),
            learner: LearnerSection::default(),
            schedule: BurnInSchedule::default(),
            fit: FitConfig::default(),
            sweep: SweepSection::default(),
            study: StudySection::default(),
            diagnostics: DiagnosticsSection::default(),
            transfer: TransferSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn learner_config(&self) -> LearnerConfig<f64> {
        let mut cfg = LearnerConfig::standard(self.learner.algorithm, self.sigma, self.d);
        cfg.alpha_ucb = self.learner.alpha_ucb;
        cfg.ridge = self.learner.ridge;
        if let Some(nu) = self.learner.nu {
            cfg.nu = nu;
        }
        cfg
    }

    pub fn comparison_grid(&self) -> Vec<usize> {
        self.study
            .n_grid
            .clone()
            .unwrap_or_else(|| DEFAULT_COMPARISON_GRID.to_vec())
    }

    pub fn rate_grid(&self) -> Vec<usize> {
        self.study
            .n_grid
            .clone()
            .unwrap_or_else(|| DEFAULT_RATE_GRID.to_vec())
    }

    pub fn oracle_metric(&self) -> OracleMetric {
        self.sweep.oracle_metric.unwrap_or(match self.experiment {
            ExperimentKind::RateStudy => OracleMetric::PredRegret,
            _ => OracleMetric::DirError,
        })
    }

    /// Checks every field, reporting the first offending one by name.
    pub fn validate(&self) -> Result<(), LabError> {
        if self.experiment == ExperimentKind::TransferCheck {
            return self.validate_transfer();
        }
        if self.d == 0 {
            return Err(LabError::invalid("d", "must be positive"));
        }
        if self.k == 0 {
            return Err(LabError::invalid("K", "must be positive"));
        }
        if self.n < 2 {
            return Err(LabError::invalid("N", "must be at least 2"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(LabError::invalid(
                "sigma",
                format!("must be finite and >= 0, got {}", self.sigma),
            ));
        }
        if self.seeds.is_empty() {
            return Err(LabError::invalid("seeds", "at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(LabError::invalid("seeds", "seeds must be distinct"));
        }
        if self.eval_size == 0 {
            return Err(LabError::invalid("eval_size", "must be positive"));
        }
        self.learner_config()
            .validate()
            .map_err(|e| LabError::invalid("learner", e.to_string()))?;
        self.fit
            .validate()
            .map_err(|e| LabError::invalid("fit", e.to_string()))?;
        if self.fit.max_iters == 0 {
            return Err(LabError::invalid("fit.max_iters", "must be positive"));
        }
        match &self.schedule {
            BurnInSchedule::RuleBased { alpha } if !(0.0..=1.0).contains(alpha) => {
                return Err(LabError::invalid(
                    "schedule.alpha",
                    format!("must lie in [0, 1], got {alpha}"),
                ));
            }
            BurnInSchedule::OracleSweep { grid } if grid.is_empty() => {
                return Err(LabError::invalid("schedule.grid", "must not be empty"));
            }
            _ => {}
        }
        if self.sweep.grid.is_empty() {
            return Err(LabError::invalid("sweep.grid", "must not be empty"));
        }
        if let Some(a) = self.sweep.grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(LabError::invalid(
                "sweep.grid",
                format!("exponent {a} outside [0, 1]"),
            ));
        }
        match self.experiment {
            ExperimentKind::LearnerVsObserver => {
                check_grid("study.n_grid", &self.comparison_grid())?
            }
            ExperimentKind::RateStudy => {
                let grid = self.rate_grid();
                check_grid("study.n_grid", &grid)?;
                check_decades(&grid)?;
            }
            ExperimentKind::Diagnostics => {
                let dg = &self.diagnostics;
                if dg.bins < 2 {
                    return Err(LabError::invalid("diagnostics.bins", "must be at least 2"));
                }
                if !(dg.split > 0.0 && dg.split < 1.0) {
                    return Err(LabError::invalid("diagnostics.split", "must lie in (0, 1)"));
                }
                if !(dg.tail_frac > 0.0 && dg.tail_frac < 1.0) {
                    return Err(LabError::invalid(
                        "diagnostics.tail_frac",
                        "must lie in (0, 1)",
                    ));
                }
                if dg.window < 10 || dg.window > self.n {
                    return Err(LabError::invalid(
                        "diagnostics.window",
                        "must lie in [10, N]",
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn validate_transfer(&self) -> Result<(), LabError> {
        let t = &self.transfer;
        if t.instances == 0 {
            return Err(LabError::invalid("transfer.instances", "must be positive"));
        }
        if t.etas.is_empty() {
            return Err(LabError::invalid("transfer.etas", "must not be empty"));
        }
        if let Some(e) = t.etas.iter().find(|e| !(**e >= 0.0 && **e < 0.5)) {
            return Err(LabError::invalid(
                "transfer.etas",
                format!("noise level {e} outside [0, 1/2)"),
            ));
        }
        if !(t.slack >= 0.0) {
            return Err(LabError::invalid("transfer.slack", "must be >= 0"));
        }
        if self.seeds.is_empty() {
            return Err(LabError::invalid("seeds", "at least one seed is required"));
        }
        Ok(())
    }
}

pub fn check_grid(field: &'static str, grid: &[usize]) -> Result<(), LabError> {
    if grid.is_empty() {
        return Err(LabError::invalid(field, "must not be empty"));
    }
    if grid.iter().any(|&n| n < 2) {
        return Err(LabError::invalid(field, "every horizon must be at least 2"));
    }
    Ok(())
}

/// Minimum span of a rate grid, in decades of `N`.
pub const MIN_RATE_DECADES: f64 = 1.5;

pub fn check_decades(grid: &[usize]) -> Result<(), LabError> {
    let lo = *grid.iter().min().expect("non-empty") as f64;
    let hi = *grid.iter().max().expect("non-empty") as f64;
    let span = (hi / lo).log10();
    // 15811/500 is 10^1.49999...; allow rounding of the endpoints.
    if grid.len() < 2 || span < MIN_RATE_DECADES - 1e-4 {
        return Err(LabError::InsufficientGrid {
            points: grid.len(),
            decades: span,
        });
    }
    Ok(())
}

/// Command-line overrides, applied on top of the file (or the defaults).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub sigma: Option<f64>,
    pub algorithm: Option<Algorithm>,
    pub alpha_ucb: Option<f64>,
    pub nu: Option<f64>,
    pub schedule: Option<ScheduleKind>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub eval_size: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Naive,
    RuleBased,
    Fixed,
    Oracle,
}

impl std::str::FromStr for ScheduleKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(ScheduleKind::Naive),
            "rule_based" | "rule-based" => Ok(ScheduleKind::RuleBased),
            "fixed" => Ok(ScheduleKind::Fixed),
            "oracle" | "oracle_sweep" => Ok(ScheduleKind::Oracle),
            _ => Err(LabError::invalid(
                "schedule",
                format!("unknown schedule `{s}`"),
            )),
        }
    }
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<(), LabError> {
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(o.experiment, self.experiment);
        set!(o.d, self.d);
        set!(o.k, self.k);
        set!(o.n, self.n);
        set!(o.sigma, self.sigma);
        set!(o.algorithm, self.learner.algorithm);
        set!(o.alpha_ucb, self.learner.alpha_ucb);
        set!(o.lambda, self.fit.lambda);
        set!(o.seeds, self.seeds);
        set!(o.eval_size, self.eval_size);
        set!(o.out, self.output_dir);
        if o.nu.is_some() {
            self.learner.nu = o.nu;
        }
        if let Some(kind) = o.schedule {
            self.schedule = match kind {
                ScheduleKind::Naive => BurnInSchedule::Naive,
                ScheduleKind::RuleBased => BurnInSchedule::RuleBased {
                    alpha: o.alpha.unwrap_or(0.9),
                },
                ScheduleKind::Fixed => {
                    let t = o.alpha.ok_or_else(|| {
                        LabError::invalid("alpha", "fixed schedule takes its length via --alpha")
                    })?;
                    if t < 0.0 || t.fract() != 0.0 {
                        return Err(LabError::invalid(
                            "alpha",
                            "fixed burn-in length must be a non-negative integer",
                        ));
                    }
                    BurnInSchedule::Fixed {
                        t_fixed: t as usize,
                    }
                }
                ScheduleKind::Oracle => BurnInSchedule::OracleSweep {
                    grid: self.sweep.grid.clone(),
                },
            };
        } else if let Some(alpha) = o.alpha {
            match &mut self.schedule {
                BurnInSchedule::RuleBased { alpha: a } => *a = alpha,
                _ => self.schedule = BurnInSchedule::RuleBased { alpha },
            }
        }
        Ok(())
    }
}

/// Parses `1..20`, `1..=20`, or a comma-separated list.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, LabError> {
    let bad = || {
        LabError::invalid(
            "seeds",
            format!("cannot parse `{s}` (use `1,2,3` or `1..=20`)"),
        )
    };
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (b, inclusive) = match b.strip_prefix('=') {
            Some(rest) => (rest, true),
            None => (b, false),
        };
        let lo: u64 = a.trim().parse().map_err(|_| bad())?;
        let hi: u64 = b.trim().parse().map_err(|_| bad())?;
        let hi = if inclusive {
            hi
        } else {
            hi.checked_sub(1).ok_or_else(bad)?
        };
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let c = ExperimentConfig::default();
        assert_eq!((c.d, c.k, c.n), (50, 200, 10_000));
        assert_eq!(c.sigma, 0.1);
        assert_eq!(c.learner.alpha_ucb, 0.1);
        let l = c.learner_config();
        assert!((l.nu - 0.01 * 50.0).abs() < 1e-15);
        assert_eq!(c.fit.lambda, 1e-4);
        assert_eq!(c.seeds, (1..=20).collect::<Vec<_>>());
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_sections() {
        let text = r#"
            experiment = "rate_study"
            d = 10
            K = 20
            seeds = [1, 2]

            [learner]
            algorithm = "linucb"
            alpha_ucb = 0.5

            [schedule]
            kind = "rule_based"
            alpha = 0.7

            [fit]
            lambda = 0.01

            [study]
            n_grid = [500, 1581, 5000, 15811]
        "#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.experiment, ExperimentKind::RateStudy);
        assert_eq!((c.d, c.k, c.n), (10, 20, 10_000));
        assert_eq!(c.learner.algorithm, Algorithm::LinUcb);
        assert_eq!(c.schedule, BurnInSchedule::RuleBased { alpha: 0.7 });
        assert_eq!(c.fit.lambda, 0.01);
        assert_eq!(c.fit.max_iters, 5000);
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("dd = 3").is_err());
        assert!(ExperimentConfig::from_toml_str("[learner]\nalgo = \"lints\"").is_err());
    }

    type Mutation = Box<dyn Fn(&mut ExperimentConfig)>;

    #[test]
    fn validation_names_the_field() {
        let cases: Vec<(&str, Mutation)> = vec![
            ("d", Box::new(|c| c.d = 0)),
            ("K", Box::new(|c| c.k = 0)),
            ("sigma", Box::new(|c| c.sigma = -1.0)),
            ("seeds", Box::new(|c| c.seeds = vec![])),
            ("seeds", Box::new(|c| c.seeds = vec![3, 3])),
            ("eval_size", Box::new(|c| c.eval_size = 0)),
            (
                "schedule.alpha",
                Box::new(|c| c.schedule = BurnInSchedule::RuleBased { alpha: 1.5 }),
            ),
            ("sweep.grid", Box::new(|c| c.sweep.grid = vec![0.5, 2.0])),
            ("fit", Box::new(|c| c.fit.lambda = -1.0)),
        ];
        for (field, mutate) in cases {
            let mut c = ExperimentConfig::default();
            mutate(&mut c);
            match c.validate() {
                Err(LabError::InvalidConfig { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: {other:?}"),
            }
        }
    }

    #[test]
    fn rate_grid_needs_enough_decades() {
        let mut c = ExperimentConfig {
            experiment: ExperimentKind::RateStudy,
            ..ExperimentConfig::default()
        };
        c.validate().unwrap();
        c.study.n_grid = Some(vec![1000]);
        assert!(matches!(
            c.validate(),
            Err(LabError::InsufficientGrid { points: 1, .. })
        ));
        c.study.n_grid = Some(DEFAULT_COMPARISON_GRID.to_vec());
        assert!(matches!(
            c.validate(),
            Err(LabError::InsufficientGrid { .. })
        ));
    }

    #[test]
    fn overrides_apply() {
        let mut c = ExperimentConfig::default();
        c.apply(&Overrides {
            d: Some(7),
            k: Some(9),
            algorithm: Some(Algorithm::LinUcb),
            schedule: Some(ScheduleKind::RuleBased),
            alpha: Some(0.5),
            seeds: Some(vec![4]),
            nu: Some(2.0),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!((c.d, c.k), (7, 9));
        assert_eq!(c.schedule, BurnInSchedule::RuleBased { alpha: 0.5 });
        assert_eq!(c.learner_config().nu, 2.0);
        c.apply(&Overrides {
            schedule: Some(ScheduleKind::Fixed),
            alpha: Some(30.0),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(c.schedule, BurnInSchedule::Fixed { t_fixed: 30 });
        assert!(c
            .apply(&Overrides {
                schedule: Some(ScheduleKind::Fixed),
                alpha: Some(0.5),
                ..Overrides::default()
            })
            .is_err());
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seed_list("1..=3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seed_list("1..3").unwrap(), vec![1, 2]);
        assert_eq!(parse_seed_list("5, 7,9").unwrap(), vec![5, 7, 9]);
        assert!(parse_seed_list("a").is_err());
        assert!(parse_seed_list("3..=1").is_err());
    }
}
