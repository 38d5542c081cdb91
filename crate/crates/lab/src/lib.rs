//! Experiment harness: configuration, seed fan-out over a bounded worker
//! pool, and persistence of rows, summaries and run manifests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod verify;

use std::path::Path;

use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::Result;
use crate::output::{emit_results, ensure_dir, write_json, write_table, RunManifest};

pub use config::Overrides;
pub use error::LabError;
pub use output::ResultRow;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const DIAGNOSTICS_REPORT_FILE: &str = "diagnostics.json";
pub const TRANSFER_FILE: &str = "transfer.csv";
pub const RATE_FILE: &str = "rate_fit.json";

/// One line of the long-format diagnostics table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiagnosticsPoint {
    /// `bin_accuracy` or `agreement`.
    pub series: String,
    pub seed: u64,
    pub index: usize,
    /// First round covered by the bin or window.
    pub start: usize,
    pub value: f64,
}

/// Runs the configured experiment into `cfg.output_dir`.
///
/// The manifest is written before any computation and rewritten with the
/// final status, so a crashed run still leaves its configuration behind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_path();
    ensure_dir(dir)?;
    let mut manifest = RunManifest::start(cfg);
    manifest.write(dir)?;
    match execute(cfg, dir, &mut manifest) {
        Ok(()) => {
            manifest.finish(None);
            manifest.write(dir)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.finish(Some(e.to_string()));
            // Best effort: the original error matters more than a second IO failure.
            let _ = manifest.write(dir);
            Err(e)
        }
    }
}

fn execute(cfg: &ExperimentConfig, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    match cfg.experiment {
        ExperimentKind::BurninSweep => {
            let rows = experiments::run_burnin_sweep(cfg)?;
            emit_results(&rows, manifest, dir)
        }
        ExperimentKind::LearnerVsObserver => {
            let rows = experiments::run_learner_vs_observer(cfg, &cfg.comparison_grid())?;
            emit_results(&rows, manifest, dir)
        }
        ExperimentKind::RateStudy => {
            let study = experiments::run_rate_study(cfg, &cfg.rate_grid())?;
            write_json(&dir.join(RATE_FILE), &study.fits)?;
            manifest.outputs.push(RATE_FILE.into());
            manifest.derived = json!({ "rate_fits": study.fits });
            emit_results(&study.rows, manifest, dir)
        }
        ExperimentKind::Diagnostics => {
            let run = experiments::run_diagnostics(cfg)?;
            let mut points = Vec::new();
            for (seed, pred, late) in &run.per_seed {
                let bin = cfg.n / cfg.diagnostics.bins;
                for (i, a) in pred.bin_accuracies.iter().enumerate() {
                    points.push(DiagnosticsPoint {
                        series: "bin_accuracy".into(),
                        seed: *seed,
                        index: i,
                        start: i * bin,
                        value: *a,
                    });
                }
                for (i, (start, a)) in late.agreement_curve.iter().enumerate() {
                    points.push(DiagnosticsPoint {
                        series: "agreement".into(),
                        seed: *seed,
                        index: i,
                        start: *start,
                        value: *a,
                    });
                }
            }
            write_table(&dir.join(DIAGNOSTICS_FILE), &points)?;
            write_json(&dir.join(DIAGNOSTICS_REPORT_FILE), &run.report)?;
            manifest.outputs.extend([
                DIAGNOSTICS_FILE.to_string(),
                DIAGNOSTICS_REPORT_FILE.to_string(),
            ]);
            manifest.derived = json!({
                "spearman_r": run.report.spearman_r,
                "early_late_gap": run.report.early_late_gap,
                "late_early_agreement_gap": run.report.late_early_agreement_gap,
            });
            emit_results(&run.rows, manifest, dir)
        }
        ExperimentKind::TransferCheck => {
            let rows = experiments::run_transfer_check(cfg)?;
            write_table(&dir.join(TRANSFER_FILE), &rows)?;
            manifest.outputs.push(TRANSFER_FILE.into());
            let all_hold = rows.iter().all(|r| r.holds_exact && r.holds_float);
            manifest.derived = json!({ "checks": rows.len(), "all_hold": all_hold });
            emit_results(&[], manifest, dir)?;
            if !all_hold {
                return Err(LabError::CheckFailed(
                    "transfer inequality violated on at least one instance".into(),
                ));
            }
            Ok(())
        }
    }
}
