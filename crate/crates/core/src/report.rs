//! Plot-ready CSV tables and the JSON report bundle.
//!
//! All CSV output is comma-separated with a header row and LF line endings.
//! Raw metric values are written with shortest round-trip formatting; only
//! the method-comparison table rounds, and it rounds values that are stored
//! unrounded in the bundle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::{BeforeAfter, CurvePoint, SweepResult};
use crate::ingest::RecordStore;
use crate::metrics::{response_distribution, MetricError};
use crate::model::{CorrectionTerm, EvalResult, Method, RunConfig};
use crate::transfer::{Heatmap, SummaryRow, TransferOutcome};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("record store is empty")]
    EmptyStore,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, ReportError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Fixed-point formatting that never prints a negative zero.
pub fn fixed(value: f64, decimals: usize, signed: bool) -> String {
    if value.is_nan() {
        return "NA".to_string();
    }
    let s = if signed {
        format!("{value:+.decimals$}")
    } else {
        format!("{value:.decimals$}")
    };
    if s.trim_start_matches(['+', '-']).chars().all(|c| c == '0' || c == '.') {
        return format!("{:.decimals$}", 0.0);
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub model: String,
    pub dataset: String,
    pub prompt_format: String,
    pub label: String,
    pub proportion: f64,
    pub uniform_reference: f64,
}

/// Uncorrected response distribution of every condition in the store.
pub fn label_distribution_rows(store: &RecordStore) -> Result<Vec<DistributionRow>, ReportError> {
    if store.is_empty() {
        return Err(ReportError::EmptyStore);
    }
    let mut rows = Vec::new();
    for group in store.groups() {
        let run = group.run();
        let dist = response_distribution(group, &CorrectionTerm::identity(group.space()))?;
        let reference = 1.0 / group.arity() as f64;
        for (label, &p) in group.space().labels().iter().zip(dist.proportions()) {
            rows.push(DistributionRow {
                model: run.model_id.clone(),
                dataset: run.dataset_id.clone(),
                prompt_format: run.prompt_format.to_string(),
                label: label.clone(),
                proportion: p,
                uniform_reference: reference,
            });
        }
    }
    Ok(rows)
}

pub fn label_distribution_csv(rows: &[DistributionRow]) -> Result<String, ReportError> {
    csv_table(
        &[
            "model",
            "dataset",
            "prompt_format",
            "label",
            "proportion",
            "uniform_reference",
        ],
        rows.iter().map(|r| {
            vec![
                r.model.clone(),
                r.dataset.clone(),
                r.prompt_format.clone(),
                r.label.clone(),
                r.proportion.to_string(),
                r.uniform_reference.to_string(),
            ]
        }),
    )
}

/// Baseline and per-method deltas for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run: RunConfig,
    pub baseline_accuracy: f64,
    pub baseline_tvd: f64,
    /// (delta accuracy, delta tvd) per method.
    pub deltas: BTreeMap<Method, (f64, f64)>,
}

impl ComparisonRow {
    pub fn new(run: RunConfig, baseline: &EvalResult) -> Self {
        Self {
            run,
            baseline_accuracy: baseline.accuracy,
            baseline_tvd: baseline.tvd,
            deltas: BTreeMap::new(),
        }
    }

    pub fn with_report(mut self, report: &BeforeAfter) -> Self {
        self.deltas
            .insert(report.method, (report.delta_accuracy, report.delta_tvd));
        self
    }
}

/// Groups before/after reports by condition, in first-seen order.
pub fn comparison_rows(reports: &[BeforeAfter]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = Vec::new();
    for r in reports {
        match rows.iter_mut().find(|row| row.run == r.run) {
            Some(row) => {
                row.deltas.insert(r.method, (r.delta_accuracy, r.delta_tvd));
            }
            None => rows.push(ComparisonRow::new(r.run.clone(), &r.baseline).with_report(r)),
        }
    }
    rows
}

pub const COMPARISON_HEADER: [&str; 10] = [
    "dataset",
    "model",
    "baseline_acc",
    "baseline_tvd",
    "cc_dacc",
    "cc_dtvd",
    "bc_dacc",
    "bc_dtvd",
    "rbcorr_dacc",
    "rbcorr_dtvd",
];

/// Accuracy in percent at one decimal, TVD at three, deltas signed, absent
/// methods as `NA`.
pub fn method_comparison_csv(rows: &[ComparisonRow]) -> Result<String, ReportError> {
    csv_table(
        &COMPARISON_HEADER,
        rows.iter().map(|r| {
            let mut cells = vec![
                r.run.dataset_id.clone(),
                r.run.model_id.clone(),
                fixed(r.baseline_accuracy * 100.0, 1, false),
                fixed(r.baseline_tvd, 3, false),
            ];
            for m in [Method::Cc, Method::Bc, Method::Rbcorr] {
                match r.deltas.get(&m) {
                    Some(&(da, dt)) => {
                        cells.push(fixed(da * 100.0, 1, true));
                        cells.push(fixed(dt, 3, true));
                    }
                    None => cells.extend(["NA".to_string(), "NA".to_string()]),
                }
            }
            cells
        }),
    )
}

/// One row per iteration of each sweep result.
pub fn sweep_csv(results: &[SweepResult]) -> Result<String, ReportError> {
    csv_table(
        &[
            "model",
            "dataset",
            "prompt_format",
            "method",
            "size",
            "iteration",
            "seed",
            "accuracy",
            "tvd",
            "baseline_accuracy",
            "baseline_tvd",
        ],
        results.iter().flat_map(|r| {
            r.per_iteration.iter().map(move |it| {
                vec![
                    r.run.model_id.clone(),
                    r.run.dataset_id.clone(),
                    r.run.prompt_format.to_string(),
                    r.method.to_string(),
                    r.size.to_string(),
                    it.iteration.to_string(),
                    it.seed.to_string(),
                    it.accuracy.to_string(),
                    it.tvd.to_string(),
                    it.baseline_accuracy.to_string(),
                    it.baseline_tvd.to_string(),
                ]
            })
        }),
    )
}

pub fn curve_csv(points: &[CurvePoint]) -> Result<String, ReportError> {
    csv_table(
        &[
            "size",
            "conditions",
            "mean_accuracy",
            "mean_q1",
            "mean_q3",
            "mean_baseline_accuracy",
        ],
        points.iter().map(|p| {
            vec![
                p.size.to_string(),
                p.conditions.to_string(),
                p.mean_accuracy.to_string(),
                p.mean_q1.to_string(),
                p.mean_q3.to_string(),
                p.mean_baseline_accuracy.to_string(),
            ]
        }),
    )
}

pub fn transfer_summary_csv(rows: &[SummaryRow]) -> Result<String, ReportError> {
    csv_table(
        &[
            "modality",
            "total_pairs",
            "successes",
            "success_rate",
            "mean_delta_acc_success",
            "mean_delta_tvd_success",
            "mean_delta_acc_all",
            "mean_delta_tvd_all",
        ],
        rows.iter().map(|r| {
            vec![
                r.modality.to_string(),
                r.total_pairs.to_string(),
                r.successes.to_string(),
                opt(r.success_rate),
                opt(r.mean_delta_acc_success),
                opt(r.mean_delta_tvd_success),
                opt(r.mean_delta_acc_all),
                opt(r.mean_delta_tvd_all),
            ]
        }),
    )
}

pub fn transfer_outcomes_csv(outcomes: &[TransferOutcome]) -> Result<String, ReportError> {
    csv_table(
        &[
            "modality",
            "source",
            "target",
            "delta_acc",
            "delta_tvd",
            "same_cond_delta_acc",
            "same_cond_delta_tvd",
            "success",
            "reason",
        ],
        outcomes.iter().map(|o| {
            vec![
                o.pair.modality.to_string(),
                o.pair.source.key(),
                o.pair.target.key(),
                o.delta_acc.to_string(),
                o.delta_tvd.to_string(),
                o.same_cond_delta_acc.to_string(),
                o.same_cond_delta_tvd.to_string(),
                o.success.to_string(),
                serde_json::to_value(o.reason)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
            ]
        }),
    )
}

/// Long-format heatmap: one row per (source, target) cell.
pub fn heatmap_csv(map: &Heatmap) -> Result<String, ReportError> {
    csv_table(
        &["source", "target", "delta_acc", "delta_tvd"],
        map.cells.iter().map(|c| {
            vec![
                c.source.clone(),
                c.target.clone(),
                c.delta_acc.to_string(),
                c.delta_tvd.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub run: RunConfig,
    pub baseline: EvalResult,
    #[serde(default)]
    pub methods: Vec<BeforeAfter>,
    #[serde(default)]
    pub sweeps: Vec<SweepResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSection {
    pub outcomes: Vec<TransferOutcome>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub toolkit_version: String,
    /// Seconds since the Unix epoch.
    pub generated_at: u64,
    pub seeds: Vec<u64>,
    pub conditions: Vec<ConditionReport>,
    #[serde(default)]
    pub transfer: Option<TransferSection>,
}

impl ReportBundle {
    pub fn new(generated_at: u64) -> Self {
        Self {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            generated_at,
            seeds: Vec::new(),
            conditions: Vec::new(),
            transfer: None,
        }
    }

    /// Records a before/after report under its condition.
    pub fn add_method(&mut self, report: BeforeAfter) {
        self.note_seed(report.base_seed);
        match self.conditions.iter_mut().find(|c| c.run == report.run) {
            Some(c) => c.methods.push(report),
            None => self.conditions.push(ConditionReport {
                run: report.run.clone(),
                baseline: report.baseline.clone(),
                methods: vec![report],
                sweeps: Vec::new(),
            }),
        }
    }

    pub fn add_condition(&mut self, run: RunConfig, baseline: EvalResult) {
        if !self.conditions.iter().any(|c| c.run == run) {
            self.conditions.push(ConditionReport {
                run,
                baseline,
                methods: Vec::new(),
                sweeps: Vec::new(),
            });
        }
    }

    /// Records a sweep result under an existing condition.
    pub fn add_sweep(&mut self, result: SweepResult) -> bool {
        self.note_seed(result.base_seed);
        match self.conditions.iter_mut().find(|c| c.run == result.run) {
            Some(c) => {
                c.sweeps.push(result);
                true
            }
            None => false,
        }
    }

    pub fn set_transfer(&mut self, outcomes: Vec<TransferOutcome>, summary: Vec<SummaryRow>) {
        self.transfer = Some(TransferSection { outcomes, summary });
    }

    pub fn note_seed(&mut self, seed: u64) {
        if !self.seeds.contains(&seed) {
            self.seeds.push(seed);
        }
    }

    pub fn comparison_rows(&self) -> Vec<ComparisonRow> {
        self.conditions
            .iter()
            .map(|c| {
                c.methods
                    .iter()
                    .fold(ComparisonRow::new(c.run.clone(), &c.baseline), |row, m| {
                        row.with_report(m)
                    })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(s)?)
    }
}
