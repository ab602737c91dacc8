//! Synthetic record groups with a known injected option bias.
//!
//! The unbiased signal gives the gold option a fixed margin over every other
//! option and rotates that pattern across gold classes, so the per-option
//! means of the unbiased scores are equal. Under that condition subtracting
//! full-group per-option means removes any additive bias vector exactly,
//! which makes these groups a ground-truth oracle for the correction code.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::respond_dense;
use crate::model::{
    argmax, CorrectionTerm, LogProbRecord, PromptFormat, QuestionType, RecordGroup, RunConfig, TermError,
    ValidationError,
};

/// Unbiased log-probability of the gold option.
const GOLD_LOGPROB: f64 = -3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub run: RunConfig,
    pub n_per_class: usize,
    /// Log-probability gap favoring the gold option.
    pub signal_margin: f64,
    /// Standard deviation of the zero-mean Gaussian noise on each option.
    pub noise_sigma: f64,
    /// Additive per-option bias in canonical label order.
    pub bias: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

impl SyntheticSpec {
    /// Spec with a generic `synthetic` run configuration.
    pub fn new(
        question_type: QuestionType,
        n_per_class: usize,
        signal_margin: f64,
        noise_sigma: f64,
        bias: Vec<f64>,
        seed: u64,
    ) -> Self {
        let format = match question_type {
            QuestionType::ThreeChoice => PromptFormat::InstructionOnly,
            _ => PromptFormat::Zeroshot,
        };
        Self {
            run: RunConfig::new("synthetic", "synthetic", "synthetic", format, question_type),
            n_per_class,
            signal_margin,
            noise_sigma,
            bias,
            seed,
        }
    }

    pub fn with_run(mut self, run: RunConfig) -> Self {
        self.run = run;
        self
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let arity = self.run.question_type.arity();
        let bad = |m: &str| Err(SyntheticError::InvalidSpec(m.to_string()));
        if self.n_per_class == 0 {
            return bad("n_per_class must be positive");
        }
        if !(self.signal_margin.is_finite() && self.signal_margin > 0.0) {
            return bad("signal_margin must be finite and positive");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if self.bias.len() != arity {
            return Err(SyntheticError::InvalidSpec(format!(
                "bias has {} entries, option space has {arity}",
                self.bias.len()
            )));
        }
        if self.bias.iter().any(|b| !b.is_finite()) {
            return bad("bias entries must be finite");
        }
        self.run.validate()?;
        Ok(())
    }
}

/// Unbiased scores retained alongside a generated group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub item_ids: Vec<String>,
    pub unbiased: Vec<Vec<f64>>,
}

/// Generates `n_per_class` items per gold label, interleaved by class.
pub fn generate(spec: &SyntheticSpec) -> Result<(Vec<LogProbRecord>, SyntheticTruth), SyntheticError> {
    spec.validate()?;
    let space = spec.run.option_space();
    let arity = space.arity();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| SyntheticError::InvalidSpec(e.to_string()))?;
    let total = spec.n_per_class * arity;
    let mut records = Vec::with_capacity(total);
    let mut truth = SyntheticTruth {
        item_ids: Vec::with_capacity(total),
        unbiased: Vec::with_capacity(total),
    };
    for i in 0..spec.n_per_class {
        for gold in 0..arity {
            let unbiased: Vec<f64> = (0..arity)
                .map(|j| {
                    let signal = if j == gold {
                        GOLD_LOGPROB
                    } else {
                        GOLD_LOGPROB - spec.signal_margin
                    };
                    if spec.noise_sigma > 0.0 {
                        signal + noise.sample(&mut rng)
                    } else {
                        signal
                    }
                })
                .collect();
            let biased: Vec<f64> = unbiased.iter().zip(&spec.bias).map(|(u, b)| u + b).collect();
            let item_id = format!("{}-{i:06}-{}", spec.run.dataset_id, space.label(gold));
            records.push(LogProbRecord {
                item_id: item_id.clone(),
                run: spec.run.clone(),
                option_logprobs: space.to_map(&biased),
                raw_variants: None,
                gold_label: space.label(gold).to_string(),
                is_content_free: false,
                missing_variants: Vec::new(),
            });
            truth.item_ids.push(item_id);
            truth.unbiased.push(unbiased);
        }
    }
    Ok((records, truth))
}

pub fn generate_group(spec: &SyntheticSpec) -> Result<(RecordGroup, SyntheticTruth), SyntheticError> {
    let (records, truth) = generate(spec)?;
    Ok((RecordGroup::new(spec.run.clone(), records)?, truth))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("truth metadata has {truth} items, group has {group}")]
    LengthMismatch { truth: usize, group: usize },
    #[error("item {index}: group id '{group}' does not match truth id '{truth}'")]
    IdMismatch { index: usize, group: String, truth: String },
    #[error(transparent)]
    Term(#[from] TermError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub n: usize,
    pub agreements: usize,
    pub disagreeing_items: Vec<String>,
    pub agreement_rate: f64,
}

/// Compares corrected responses with the argmax of the unbiased scores.
pub fn oracle_check(
    group: &RecordGroup,
    truth: &SyntheticTruth,
    term: &CorrectionTerm,
) -> Result<OracleReport, OracleError> {
    if truth.unbiased.len() != group.len() || truth.item_ids.len() != group.len() {
        return Err(OracleError::LengthMismatch {
            truth: truth.unbiased.len(),
            group: group.len(),
        });
    }
    let offsets = term.dense(group.space())?;
    let mut agreements = 0;
    let mut disagreeing_items = Vec::new();
    for i in 0..group.len() {
        if group.item_id(i) != truth.item_ids[i] {
            return Err(OracleError::IdMismatch {
                index: i,
                group: group.item_id(i).to_string(),
                truth: truth.item_ids[i].clone(),
            });
        }
        if respond_dense(group.scores(i), &offsets) == argmax(&truth.unbiased[i]) {
            agreements += 1;
        } else {
            disagreeing_items.push(group.item_id(i).to_string());
        }
    }
    let n = group.len();
    Ok(OracleReport {
        n,
        agreements,
        disagreeing_items,
        agreement_rate: if n == 0 { 1.0 } else { agreements as f64 / n as f64 },
    })
}
