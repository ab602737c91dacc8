//! Core domain types: option spaces, run configurations, log-probability
//! records, correction terms and evaluation results.
//!
//! Every label-indexed quantity in the crate uses the canonical order of its
//! [`OptionSpace`]: index `i` always means the same label for a given
//! [`QuestionType`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    TwoChoice,
    ThreeChoice,
    FourChoice,
}

impl QuestionType {
    pub const ALL: [QuestionType; 3] = [Self::TwoChoice, Self::ThreeChoice, Self::FourChoice];

    pub fn arity(self) -> usize {
        match self {
            Self::TwoChoice => 2,
            Self::ThreeChoice => 3,
            Self::FourChoice => 4,
        }
    }

    /// The fixed canonical option space for this question type.
    pub fn option_space(self) -> OptionSpace {
        let labels: &[&str] = match self {
            Self::TwoChoice => &["Yes", "No"],
            Self::ThreeChoice => &["0", "1", "2"],
            Self::FourChoice => &["A", "B", "C", "D"],
        };
        OptionSpace {
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TwoChoice => "two_choice",
            Self::ThreeChoice => "three_choice",
            Self::FourChoice => "four_choice",
        }
    }

    pub fn from_arity(arity: usize) -> Option<Self> {
        match arity {
            2 => Some(Self::TwoChoice),
            3 => Some(Self::ThreeChoice),
            4 => Some(Self::FourChoice),
            _ => None,
        }
    }
}

impl std::str::FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two_choice" | "2" => Ok(Self::TwoChoice),
            "three_choice" | "3" => Ok(Self::ThreeChoice),
            "four_choice" | "4" => Ok(Self::FourChoice),
            other => Err(format!("unknown question type '{other}'")),
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptFormat {
    Zeroshot,
    InstructionOnly,
    Fewshot,
}

impl PromptFormat {
    pub const ALL: [PromptFormat; 3] = [Self::Zeroshot, Self::InstructionOnly, Self::Fewshot];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Zeroshot => "zeroshot",
            Self::InstructionOnly => "instruction_only",
            Self::Fewshot => "fewshot",
        }
    }
}

impl std::str::FromStr for PromptFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zeroshot" => Ok(Self::Zeroshot),
            "instruction_only" | "instruction-only" => Ok(Self::InstructionOnly),
            "fewshot" => Ok(Self::Fewshot),
            other => Err(format!("unknown prompt format '{other}'")),
        }
    }
}

impl fmt::Display for PromptFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered set of canonical answer labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct OptionSpace {
    labels: Vec<String>,
}

impl OptionSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, ValidationError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if !(2..=4).contains(&labels.len()) {
            return Err(ValidationError::ArityMismatch {
                expected: 0,
                found: labels.len(),
            });
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() || !seen.insert(label.as_str()) {
                return Err(ValidationError::InvalidSpace(labels.clone()));
            }
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn arity(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Dense vector in canonical order from a label-keyed map.
    pub fn dense(&self, map: &BTreeMap<String, f64>) -> Result<Vec<f64>, ValidationError> {
        if map.len() != self.arity() {
            if let Some(extra) = map.keys().find(|k| self.index_of(k).is_none()) {
                return Err(ValidationError::UnknownOption(extra.clone()));
            }
        }
        self.labels
            .iter()
            .map(|l| {
                map.get(l)
                    .copied()
                    .ok_or_else(|| ValidationError::MissingOption(l.clone()))
            })
            .collect()
    }

    pub fn to_map(&self, values: &[f64]) -> BTreeMap<String, f64> {
        self.labels.iter().cloned().zip(values.iter().copied()).collect()
    }
}

impl TryFrom<Vec<String>> for OptionSpace {
    type Error = ValidationError;

    fn try_from(labels: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(labels)
    }
}

impl From<OptionSpace> for Vec<String> {
    fn from(space: OptionSpace) -> Self {
        space.labels
    }
}

/// The (model, dataset, prompt format) condition a record was produced under.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunConfig {
    pub model_id: String,
    pub dataset_id: String,
    pub prompt_format: PromptFormat,
    pub model_family: String,
    pub question_type: QuestionType,
}

impl RunConfig {
    pub fn new(
        model_id: impl Into<String>,
        model_family: impl Into<String>,
        dataset_id: impl Into<String>,
        prompt_format: PromptFormat,
        question_type: QuestionType,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            dataset_id: dataset_id.into(),
            prompt_format,
            model_family: model_family.into(),
            question_type,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.question_type == QuestionType::ThreeChoice && self.prompt_format == PromptFormat::Zeroshot {
            return Err(ValidationError::ZeroshotThreeChoice);
        }
        Ok(())
    }

    pub fn option_space(&self) -> OptionSpace {
        self.question_type.option_space()
    }

    /// Short `model/dataset/format` label used in reports.
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.model_id, self.dataset_id, self.prompt_format)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

pub type VariantList = Vec<(String, f64)>;

/// One evaluation item with merged per-option log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbRecord {
    pub item_id: String,
    pub run: RunConfig,
    pub option_logprobs: BTreeMap<String, f64>,
    pub raw_variants: Option<BTreeMap<String, VariantList>>,
    pub gold_label: String,
    pub is_content_free: bool,
    /// Variant tokens the endpoint did not report; their values are a floor.
    pub missing_variants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("missing-option: no log-probability for label '{0}'")]
    MissingOption(String),
    #[error("unknown-option: label '{0}' is not in the option space")]
    UnknownOption(String),
    #[error("unknown-gold: gold label '{0}' is not in the option space")]
    UnknownGold(String),
    #[error("non-finite: log-probability for '{label}' is {value}")]
    NonFinite { label: String, value: f64 },
    #[error("arity-mismatch: expected {expected} options, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("invalid option space {0:?}: labels must be unique and non-empty")]
    InvalidSpace(Vec<String>),
    #[error("invalid-run: three-choice questions are never run zeroshot")]
    ZeroshotThreeChoice,
    #[error("duplicate-item: item id '{0}' appears twice in one run")]
    DuplicateItem(String),
    #[error("run-mismatch: record '{0}' belongs to a different run")]
    RunMismatch(String),
}

impl ValidationError {
    /// Machine-readable code for the violated invariant.
    pub fn code(&self) -> &'static str {
        match self {
            Self::MissingOption(_) => "missing-option",
            Self::UnknownOption(_) => "unknown-option",
            Self::UnknownGold(_) => "unknown-gold",
            Self::NonFinite { .. } => "non-finite",
            Self::ArityMismatch { .. } => "arity-mismatch",
            Self::InvalidSpace(_) => "invalid-space",
            Self::ZeroshotThreeChoice => "invalid-run",
            Self::DuplicateItem(_) => "duplicate-item",
            Self::RunMismatch(_) => "run-mismatch",
        }
    }
}

/// Checks a record against an option space.
///
/// Positive log-probabilities are accepted (one warning per group) since some
/// endpoints return unnormalized scores; NaN and infinities are rejected.
pub fn validate_record(record: &LogProbRecord, space: &OptionSpace) -> Result<(), ValidationError> {
    if record.run.question_type.arity() != space.arity() {
        return Err(ValidationError::ArityMismatch {
            expected: space.arity(),
            found: record.run.question_type.arity(),
        });
    }
    record.run.validate()?;
    for label in space.labels() {
        match record.option_logprobs.get(label) {
            None => return Err(ValidationError::MissingOption(label.clone())),
            Some(v) if !v.is_finite() => {
                return Err(ValidationError::NonFinite {
                    label: label.clone(),
                    value: *v,
                })
            }
            Some(v) if *v > 0.0 => {
                log::debug!(
                    "record '{}': positive log-probability {v} for '{label}'",
                    record.item_id
                );
            }
            Some(_) => {}
        }
    }
    if record.option_logprobs.len() != space.arity() {
        let extra = record
            .option_logprobs
            .keys()
            .find(|k| space.index_of(k).is_none())
            .cloned()
            .unwrap_or_default();
        return Err(ValidationError::UnknownOption(extra));
    }
    if let Some(raw) = &record.raw_variants {
        for (label, variants) in raw {
            if space.index_of(label).is_none() {
                return Err(ValidationError::UnknownOption(label.clone()));
            }
            if let Some((_, v)) = variants.iter().find(|(_, v)| !v.is_finite()) {
                return Err(ValidationError::NonFinite {
                    label: label.clone(),
                    value: *v,
                });
            }
        }
    }
    if !record.is_content_free && space.index_of(&record.gold_label).is_none() {
        return Err(ValidationError::UnknownGold(record.gold_label.clone()));
    }
    Ok(())
}

/// Index of the maximum score; ties go to the earliest canonical label.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Validated records of a single run, with a dense score matrix in canonical
/// label order. Content-free probe records are held separately.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordGroup {
    run: RunConfig,
    space: OptionSpace,
    records: Vec<LogProbRecord>,
    probes: Vec<LogProbRecord>,
    scores: Vec<f64>,
    gold: Vec<usize>,
    probe_scores: Vec<f64>,
}

impl RecordGroup {
    pub fn new(run: RunConfig, records: Vec<LogProbRecord>) -> Result<Self, ValidationError> {
        run.validate()?;
        let space = run.option_space();
        let arity = space.arity();
        let mut ids = HashSet::new();
        let mut scored = Vec::new();
        let mut probes = Vec::new();
        for record in records {
            if record.run != run {
                return Err(ValidationError::RunMismatch(record.item_id));
            }
            validate_record(&record, &space)?;
            if !ids.insert(record.item_id.clone()) {
                return Err(ValidationError::DuplicateItem(record.item_id));
            }
            if record.is_content_free {
                probes.push(record);
            } else {
                scored.push(record);
            }
        }
        let mut scores = Vec::with_capacity(scored.len() * arity);
        let mut gold = Vec::with_capacity(scored.len());
        for r in &scored {
            scores.extend(space.dense(&r.option_logprobs)?);
            gold.push(space.index_of(&r.gold_label).expect("validated gold"));
        }
        let mut probe_scores = Vec::with_capacity(probes.len() * arity);
        for r in &probes {
            probe_scores.extend(space.dense(&r.option_logprobs)?);
        }
        let positive = scores.iter().chain(&probe_scores).filter(|v| **v > 0.0).count();
        if positive > 0 {
            log::warn!(
                "{}: {positive} positive log-probabilities (unnormalized scores?)",
                run.key()
            );
        }
        Ok(Self {
            run,
            space,
            records: scored,
            probes,
            scores,
            gold,
            probe_scores,
        })
    }

    pub fn run(&self) -> &RunConfig {
        &self.run
    }

    pub fn space(&self) -> &OptionSpace {
        &self.space
    }

    pub fn arity(&self) -> usize {
        self.space.arity()
    }

    /// Number of scored (non content-free) items.
    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn records(&self) -> &[LogProbRecord] {
        &self.records
    }

    pub fn probes(&self) -> &[LogProbRecord] {
        &self.probes
    }

    /// Scores of item `i` in canonical label order.
    pub fn scores(&self, i: usize) -> &[f64] {
        let a = self.arity();
        &self.scores[i * a..(i + 1) * a]
    }

    pub fn gold(&self, i: usize) -> usize {
        self.gold[i]
    }

    pub fn gold_labels(&self) -> &[usize] {
        &self.gold
    }

    pub fn probe_scores(&self) -> impl Iterator<Item = &[f64]> {
        self.probe_scores.chunks_exact(self.arity())
    }

    pub fn item_id(&self, i: usize) -> &str {
        &self.records[i].item_id
    }

    /// Gold-label counts in canonical order.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.arity()];
        for &g in &self.gold {
            counts[g] += 1;
        }
        counts
    }

    /// New group holding the scored items at `indices` (in that order) and all probes.
    pub fn select(&self, indices: &[usize]) -> RecordGroup {
        let a = self.arity();
        let mut scores = Vec::with_capacity(indices.len() * a);
        for &i in indices {
            scores.extend_from_slice(self.scores(i));
        }
        RecordGroup {
            run: self.run.clone(),
            space: self.space.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            probes: self.probes.clone(),
            scores,
            gold: indices.iter().map(|&i| self.gold[i]).collect(),
            probe_scores: self.probe_scores.clone(),
        }
    }

    /// All records, scored first then probes.
    pub fn into_records(self) -> Vec<LogProbRecord> {
        let mut all = self.records;
        all.extend(self.probes);
        all
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rbcorr,
    Cc,
    Bc,
    Identity,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rbcorr => "rbcorr",
            Self::Cc => "cc",
            Self::Bc => "bc",
            Self::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rbcorr" => Ok(Self::Rbcorr),
            "cc" => Ok(Self::Cc),
            "bc" => Ok(Self::Bc),
            "identity" | "none" => Ok(Self::Identity),
            other => Err(format!("unknown method '{other}'")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which calibration data produced a correction term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub run: Option<RunConfig>,
    pub set_size: usize,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub item_ids: Vec<String>,
}

/// Per-option additive offsets, subtracted from item log-probabilities
/// before the argmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTerm {
    pub method: Method,
    pub offsets: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TermError {
    #[error("option-space mismatch: {0}")]
    SpaceMismatch(#[from] ValidationError),
    #[error("identity term must have all-zero offsets")]
    NonZeroIdentity,
}

impl CorrectionTerm {
    pub fn identity(space: &OptionSpace) -> Self {
        Self {
            method: Method::Identity,
            offsets: space.to_map(&vec![0.0; space.arity()]),
            provenance: Provenance {
                run: None,
                set_size: 0,
                seed: None,
                item_ids: Vec::new(),
            },
        }
    }

    /// Builds a term from dense offsets in canonical order.
    pub fn from_dense(method: Method, space: &OptionSpace, offsets: &[f64], provenance: Provenance) -> Self {
        debug_assert_eq!(offsets.len(), space.arity());
        Self {
            method,
            offsets: space.to_map(offsets),
            provenance,
        }
    }

    pub fn validate(&self, space: &OptionSpace) -> Result<(), TermError> {
        let dense = space.dense(&self.offsets)?;
        if let Some((i, v)) = dense.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ValidationError::NonFinite {
                label: space.label(i).to_string(),
                value: *v,
            }
            .into());
        }
        if self.method == Method::Identity && dense.iter().any(|v| *v != 0.0) {
            return Err(TermError::NonZeroIdentity);
        }
        Ok(())
    }

    /// Offsets in canonical order of `space`.
    pub fn dense(&self, space: &OptionSpace) -> Result<Vec<f64>, TermError> {
        self.validate(space)?;
        Ok(space.dense(&self.offsets)?)
    }
}

/// Accuracy, bias and response distribution of one evaluated record set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub tvd: f64,
    pub rstd: f64,
    pub label_distribution: BTreeMap<String, f64>,
    pub n_items: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn yes_no_run() -> RunConfig {
        RunConfig::new("m", "fam", "ARITH", PromptFormat::Fewshot, QuestionType::TwoChoice)
    }

    fn record(lps: &[(&str, f64)], gold: &str) -> LogProbRecord {
        LogProbRecord {
            item_id: "q1".into(),
            run: yes_no_run(),
            option_logprobs: lps.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            raw_variants: None,
            gold_label: gold.into(),
            is_content_free: false,
            missing_variants: vec![],
        }
    }

    #[test]
    fn canonical_spaces() {
        assert_eq!(QuestionType::TwoChoice.option_space().labels(), ["Yes", "No"]);
        assert_eq!(QuestionType::ThreeChoice.option_space().labels(), ["0", "1", "2"]);
        assert_eq!(QuestionType::FourChoice.option_space().labels(), ["A", "B", "C", "D"]);
        for qt in QuestionType::ALL {
            assert_eq!(qt.option_space().arity(), qt.arity());
        }
    }

    #[test]
    fn option_space_rejects_duplicates_and_bad_arity() {
        assert!(OptionSpace::new(["A", "A"]).is_err());
        assert!(OptionSpace::new(["A", ""]).is_err());
        assert!(OptionSpace::new(["A"]).is_err());
        assert!(OptionSpace::new(["A", "B", "C", "D", "E"]).is_err());
        assert!(OptionSpace::new(["x", "y"]).is_ok());
    }

    #[test]
    fn well_formed_record_validates() {
        let space = QuestionType::TwoChoice.option_space();
        let r = record(&[("Yes", -0.2), ("No", -1.8)], "Yes");
        assert_eq!(validate_record(&r, &space), Ok(()));
    }

    #[test]
    fn missing_option_is_reported() {
        let space = QuestionType::TwoChoice.option_space();
        let r = record(&[("Yes", -0.2)], "Yes");
        let err = validate_record(&r, &space).unwrap_err();
        assert_eq!(err.code(), "missing-option");
    }

    #[test]
    fn unknown_gold_is_reported() {
        let space = QuestionType::TwoChoice.option_space();
        let r = record(&[("Yes", -0.2), ("No", -1.8)], "Maybe");
        assert_eq!(validate_record(&r, &space).unwrap_err().code(), "unknown-gold");
    }

    #[test]
    fn content_free_records_are_exempt_from_gold_check() {
        let space = QuestionType::TwoChoice.option_space();
        let mut r = record(&[("Yes", -0.2), ("No", -1.8)], "");
        r.is_content_free = true;
        assert_eq!(validate_record(&r, &space), Ok(()));
    }

    #[test]
    fn non_finite_and_arity_errors() {
        let space = QuestionType::TwoChoice.option_space();
        let r = record(&[("Yes", f64::NAN), ("No", -1.8)], "Yes");
        assert_eq!(validate_record(&r, &space).unwrap_err().code(), "non-finite");
        let r = record(&[("Yes", f64::NEG_INFINITY), ("No", -1.8)], "Yes");
        assert_eq!(validate_record(&r, &space).unwrap_err().code(), "non-finite");
        let r = record(&[("Yes", -0.2), ("No", -1.8)], "Yes");
        let four = QuestionType::FourChoice.option_space();
        assert_eq!(validate_record(&r, &four).unwrap_err().code(), "arity-mismatch");
        let r = record(&[("Yes", -0.2), ("No", -1.8), ("Maybe", -3.0)], "Yes");
        assert_eq!(validate_record(&r, &space).unwrap_err().code(), "unknown-option");
    }

    #[test]
    fn positive_scores_are_accepted() {
        let space = QuestionType::TwoChoice.option_space();
        let r = record(&[("Yes", 3.5), ("No", 1.0)], "No");
        assert!(validate_record(&r, &space).is_ok());
    }

    #[test]
    fn zeroshot_three_choice_is_invalid() {
        let run = RunConfig::new("m", "f", "SNLI", PromptFormat::Zeroshot, QuestionType::ThreeChoice);
        assert_eq!(run.validate(), Err(ValidationError::ZeroshotThreeChoice));
    }

    #[test]
    fn argmax_breaks_ties_to_first() {
        assert_eq!(argmax(&[-1.0, -1.0, -1.0, -1.0]), 0);
        assert_eq!(argmax(&[-2.0, -1.0, -1.0]), 1);
        assert_eq!(argmax(&[-2.0, -3.0]), 0);
    }

    #[test]
    fn group_rejects_duplicates() {
        let r = record(&[("Yes", -0.2), ("No", -1.8)], "Yes");
        let err = RecordGroup::new(yes_no_run(), vec![r.clone(), r]).unwrap_err();
        assert_eq!(err.code(), "duplicate-item");
    }

    #[test]
    fn term_serializes_with_method_and_offsets() {
        let space = QuestionType::TwoChoice.option_space();
        let t = CorrectionTerm::identity(&space);
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"method\":\"identity\""));
        let back: CorrectionTerm = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        let mut bad = t;
        bad.offsets.insert("Yes".into(), 1.0);
        assert_eq!(bad.validate(&space), Err(TermError::NonZeroIdentity));
    }
}
