//! Applying correction terms estimated under one run configuration to
//! another, and scoring whether the same-condition improvement survives.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correction::{evaluation_indices, sample_calibration};
use crate::experiments::{median, method_term, split_metrics, ExperimentError};
use crate::model::{CorrectionTerm, Method, RecordGroup, RunConfig};

/// Fraction of the same-condition gains a transfer must keep.
pub const PRESERVATION_THRESHOLD: f64 = 0.8;
/// Absolute slack on the preservation comparisons, so that boundary cases
/// written in decimal (0.08 vs 0.8 * 0.10) are not decided by rounding.
pub const PRESERVATION_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_TRANSFER_SIZE: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    CrossDataset,
    CrossModel,
    CrossPrompt,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Self::CrossDataset, Self::CrossModel, Self::CrossPrompt];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CrossDataset => "cross_dataset",
            Self::CrossModel => "cross_model",
            Self::CrossPrompt => "cross_prompt",
        }
    }

    /// Whether `source -> target` is a valid pair for this modality.
    fn admits(self, s: &RunConfig, t: &RunConfig) -> bool {
        if s == t {
            return false;
        }
        let same_model = s.model_id == t.model_id && s.model_family == t.model_family;
        let same_dataset = s.dataset_id == t.dataset_id && s.question_type == t.question_type;
        let same_prompt = s.prompt_format == t.prompt_format;
        match self {
            Self::CrossDataset => {
                same_model && same_prompt && s.dataset_id != t.dataset_id && s.question_type == t.question_type
            }
            Self::CrossModel => {
                same_dataset && same_prompt && s.model_id != t.model_id && s.model_family == t.model_family
            }
            Self::CrossPrompt => same_model && same_dataset && !same_prompt,
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "cross_dataset" | "dataset" => Ok(Self::CrossDataset),
            "cross_model" | "model" => Ok(Self::CrossModel),
            "cross_prompt" | "prompt" => Ok(Self::CrossPrompt),
            other => Err(format!("unknown modality '{other}'")),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransferError {
    #[error("invalid {modality} pair {source_key} -> {target_key}")]
    InvalidPair {
        modality: Modality,
        source_key: String,
        target_key: String,
    },
    #[error("option spaces differ: {0:?} vs {1:?}")]
    SpaceIncompatible(Vec<String>, Vec<String>),
    #[error("record group for {0} does not match the pair")]
    MissingCondition(String),
    #[error("heatmap grid incomplete; missing cells: {0:?}")]
    IncompleteGrid(Vec<(String, String)>),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferPair {
    pub source: RunConfig,
    pub target: RunConfig,
    pub modality: Modality,
}

impl TransferPair {
    pub fn new(source: RunConfig, target: RunConfig, modality: Modality) -> Result<Self, TransferError> {
        if !modality.admits(&source, &target) {
            return Err(TransferError::InvalidPair {
                modality,
                source_key: source.key(),
                target_key: target.key(),
            });
        }
        Ok(Self {
            source,
            target,
            modality,
        })
    }

    /// Skips the pair invariants. Used for self-transfer checks, where a
    /// condition's own term is routed through the transfer path.
    pub fn new_unchecked(source: RunConfig, target: RunConfig, modality: Modality) -> Self {
        Self {
            source,
            target,
            modality,
        }
    }
}

/// All ordered valid pairs among `configs` for one modality.
pub fn enumerate_pairs(configs: &[RunConfig], modality: Modality) -> Vec<TransferPair> {
    let mut pairs = Vec::new();
    for s in configs {
        for t in configs {
            if modality.admits(s, t) {
                pairs.push(TransferPair {
                    source: s.clone(),
                    target: t.clone(),
                    modality,
                });
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessReason {
    Preserved,
    InsufficientPreservation,
    /// Same-condition correction did not improve both accuracy and TVD, so
    /// there is nothing to preserve.
    NoSameConditionImprovement,
}

/// Applies the 80% preservation rule to median deltas.
pub fn score_transfer(
    delta_acc: f64,
    delta_tvd: f64,
    same_delta_acc: f64,
    same_delta_tvd: f64,
) -> (bool, SuccessReason) {
    if !(same_delta_acc > 0.0 && same_delta_tvd < 0.0) {
        return (false, SuccessReason::NoSameConditionImprovement);
    }
    let acc_ok = delta_acc >= PRESERVATION_THRESHOLD * same_delta_acc - PRESERVATION_TOLERANCE;
    let tvd_ok = -delta_tvd >= PRESERVATION_THRESHOLD * -same_delta_tvd - PRESERVATION_TOLERANCE;
    if acc_ok && tvd_ok {
        (true, SuccessReason::Preserved)
    } else {
        (false, SuccessReason::InsufficientPreservation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferOutcome {
    pub pair: TransferPair,
    pub delta_acc: f64,
    pub delta_tvd: f64,
    pub same_cond_delta_acc: f64,
    pub same_cond_delta_tvd: f64,
    pub success: bool,
    pub reason: SuccessReason,
}

struct TransferIteration {
    transfer: (f64, f64),
    same: (f64, f64),
    baseline: (f64, f64),
}

fn transfer_iteration(
    source: &RecordGroup,
    target: &RecordGroup,
    method: Method,
    size: usize,
    seed: u64,
) -> Result<TransferIteration, ExperimentError> {
    let src_sample = sample_calibration(source, size, seed)?;
    let src_eval = evaluation_indices(source, Some(&src_sample));
    let src_term = method_term(source, method, &src_sample, &src_eval)?;

    let tgt_sample = sample_calibration(target, size, seed)?;
    let tgt_eval = evaluation_indices(target, Some(&tgt_sample));
    if tgt_eval.is_empty() {
        return Err(ExperimentError::InvalidConfig(format!(
            "calibration size {size} leaves no evaluation items"
        )));
    }
    let same_term = method_term(target, method, &tgt_sample, &tgt_eval)?;
    Ok(TransferIteration {
        transfer: split_metrics(target, &tgt_eval, &src_term)?,
        same: split_metrics(target, &tgt_eval, &same_term)?,
        baseline: split_metrics(target, &tgt_eval, &CorrectionTerm::identity(target.space()))?,
    })
}

/// Runs `n_iter` iterations with seeds `base_seed + k`, each sampling both the
/// source and the target with the same seed, and compares median deltas.
pub fn run_transfer(
    pair: &TransferPair,
    source: &RecordGroup,
    target: &RecordGroup,
    method: Method,
    size: usize,
    n_iter: usize,
    base_seed: u64,
) -> Result<TransferOutcome, TransferError> {
    if source.run() != &pair.source {
        return Err(TransferError::MissingCondition(pair.source.key()));
    }
    if target.run() != &pair.target {
        return Err(TransferError::MissingCondition(pair.target.key()));
    }
    if source.space() != target.space() {
        return Err(TransferError::SpaceIncompatible(
            source.space().labels().to_vec(),
            target.space().labels().to_vec(),
        ));
    }
    if n_iter == 0 {
        return Err(ExperimentError::InvalidConfig("iteration count must be positive".into()).into());
    }
    let iterations = crate::experiments::par_map(n_iter, |k| {
        transfer_iteration(source, target, method, size, base_seed.wrapping_add(k as u64))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let med = |f: &dyn Fn(&TransferIteration) -> f64| median(&iterations.iter().map(f).collect::<Vec<_>>());
    let base_acc = med(&|it| it.baseline.0);
    let base_tvd = med(&|it| it.baseline.1);
    let delta_acc = med(&|it| it.transfer.0) - base_acc;
    let delta_tvd = med(&|it| it.transfer.1) - base_tvd;
    let same_cond_delta_acc = med(&|it| it.same.0) - base_acc;
    let same_cond_delta_tvd = med(&|it| it.same.1) - base_tvd;
    let (success, reason) = score_transfer(delta_acc, delta_tvd, same_cond_delta_acc, same_cond_delta_tvd);
    Ok(TransferOutcome {
        pair: pair.clone(),
        delta_acc,
        delta_tvd,
        same_cond_delta_acc,
        same_cond_delta_tvd,
        success,
        reason,
    })
}

/// Per-modality aggregate. Averages are `None` when there is nothing to average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub modality: Modality,
    pub total_pairs: usize,
    pub successes: usize,
    pub success_rate: Option<f64>,
    pub mean_delta_acc_success: Option<f64>,
    pub mean_delta_tvd_success: Option<f64>,
    pub mean_delta_acc_all: Option<f64>,
    pub mean_delta_tvd_all: Option<f64>,
}

fn mean_of<'a>(xs: impl Iterator<Item = &'a TransferOutcome>, f: impl Fn(&TransferOutcome) -> f64) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), o| (s + f(o), n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One row per modality, always in the order dataset, model, prompt.
pub fn transfer_summary(outcomes: &[TransferOutcome]) -> Vec<SummaryRow> {
    Modality::ALL
        .iter()
        .map(|&modality| {
            let all: Vec<&TransferOutcome> = outcomes.iter().filter(|o| o.pair.modality == modality).collect();
            let ok: Vec<&TransferOutcome> = all.iter().copied().filter(|o| o.success).collect();
            SummaryRow {
                modality,
                total_pairs: all.len(),
                successes: ok.len(),
                success_rate: (!all.is_empty()).then(|| ok.len() as f64 / all.len() as f64),
                mean_delta_acc_success: mean_of(ok.iter().copied(), |o| o.delta_acc),
                mean_delta_tvd_success: mean_of(ok.iter().copied(), |o| o.delta_tvd),
                mean_delta_acc_all: mean_of(all.iter().copied(), |o| o.delta_acc),
                mean_delta_tvd_all: mean_of(all.iter().copied(), |o| o.delta_tvd),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub source: String,
    pub target: String,
    pub delta_acc: f64,
    pub delta_tvd: f64,
}

/// Square source x target grid; the diagonal holds same-condition deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub labels: Vec<String>,
    pub cells: Vec<HeatCell>,
}

impl Heatmap {
    pub fn get(&self, source: &str, target: &str) -> Option<&HeatCell> {
        self.cells.iter().find(|c| c.source == source && c.target == target)
    }

    /// Row-major matrix of accuracy deltas.
    pub fn delta_acc_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.labels.len();
        self.cells
            .chunks(n)
            .map(|row| row.iter().map(|c| c.delta_acc).collect())
            .collect()
    }
}

pub fn transfer_heatmap(configs: &[RunConfig], outcomes: &[TransferOutcome]) -> Result<Heatmap, TransferError> {
    let labels: Vec<String> = configs.iter().map(RunConfig::key).collect();
    let mut cells = Vec::with_capacity(configs.len() * configs.len());
    let mut missing = Vec::new();
    for (si, s) in configs.iter().enumerate() {
        for (ti, t) in configs.iter().enumerate() {
            let found = if si == ti {
                outcomes
                    .iter()
                    .find(|o| &o.pair.target == t)
                    .map(|o| (o.same_cond_delta_acc, o.same_cond_delta_tvd))
            } else {
                outcomes
                    .iter()
                    .find(|o| &o.pair.source == s && &o.pair.target == t)
                    .map(|o| (o.delta_acc, o.delta_tvd))
            };
            match found {
                Some((delta_acc, delta_tvd)) => cells.push(HeatCell {
                    source: labels[si].clone(),
                    target: labels[ti].clone(),
                    delta_acc,
                    delta_tvd,
                }),
                None => missing.push((labels[si].clone(), labels[ti].clone())),
            }
        }
    }
    if !missing.is_empty() {
        return Err(TransferError::IncompleteGrid(missing));
    }
    Ok(Heatmap { labels, cells })
}
