//! JSON-lines record loading, whitespace-variant merging and class-balance
//! checks.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    LogProbRecord, OptionSpace, PromptFormat, QuestionType, RecordGroup, RunConfig, ValidationError, VariantList,
};

/// Tolerance for agreement between stored merged values and raw variants.
pub const MERGE_CONFLICT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("read failure: {0}")]
    Read(#[from] std::io::Error),
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: ValidationError,
    },
    #[error("line {line}: merged value {stored} for '{label}' disagrees with raw variants ({merged})")]
    Conflict {
        line: usize,
        label: String,
        stored: f64,
        merged: f64,
    },
    #[error("line {line}: record has neither option_logprobs nor raw_variants")]
    NoScores { line: usize },
    #[error("line {line}: {source}")]
    Merge {
        line: usize,
        #[source]
        source: MergeError,
    },
    #[error("{0}")]
    Group(#[from] ValidationError),
    #[error("serialization failure: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MergeError {
    #[error("empty variant list")]
    Empty,
    #[error("non-finite variant log-probability {1} for token {0:?}")]
    NonFinite(String, f64),
}

/// Log-sum-exp over the variant log-probabilities of one label.
pub fn merge_variants(variants: &[(String, f64)]) -> Result<f64, MergeError> {
    if variants.is_empty() {
        return Err(MergeError::Empty);
    }
    if let Some((tok, v)) = variants.iter().find(|(_, v)| !v.is_finite()) {
        return Err(MergeError::NonFinite(tok.clone(), *v));
    }
    Ok(log_sum_exp(variants.iter().map(|(_, v)| *v)))
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// One line of the on-disk record format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    pub item_id: String,
    pub model_id: String,
    pub dataset_id: String,
    pub prompt_format: PromptFormat,
    pub question_type: QuestionType,
    pub model_family: String,
    pub gold_label: String,
    #[serde(default)]
    pub is_content_free: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option_logprobs: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_variants: Option<BTreeMap<String, VariantList>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_variants: Vec<String>,
}

impl RecordLine {
    pub fn run(&self) -> RunConfig {
        RunConfig {
            model_id: self.model_id.clone(),
            dataset_id: self.dataset_id.clone(),
            prompt_format: self.prompt_format,
            model_family: self.model_family.clone(),
            question_type: self.question_type,
        }
    }

    /// Merges raw variants if present and validates the result. `line` is
    /// only used for error reporting.
    pub fn into_record(self, line: usize) -> Result<LogProbRecord, IngestError> {
        let run = self.run();
        let space = run.option_space();
        let merged = match &self.raw_variants {
            Some(raw) => {
                let mut merged = BTreeMap::new();
                for (label, variants) in raw {
                    let v = merge_variants(variants).map_err(|source| IngestError::Merge { line, source })?;
                    merged.insert(label.clone(), v);
                }
                Some(merged)
            }
            None => None,
        };
        let option_logprobs = match (self.option_logprobs, merged) {
            (None, None) => return Err(IngestError::NoScores { line }),
            (Some(stored), None) => stored,
            (None, Some(merged)) => merged,
            (Some(stored), Some(merged)) => {
                for (label, m) in &merged {
                    if let Some(s) = stored.get(label) {
                        if (s - m).abs() > MERGE_CONFLICT_TOLERANCE {
                            return Err(IngestError::Conflict {
                                line,
                                label: label.clone(),
                                stored: *s,
                                merged: *m,
                            });
                        }
                    }
                }
                stored
            }
        };
        let record = LogProbRecord {
            item_id: self.item_id,
            run,
            option_logprobs,
            raw_variants: self.raw_variants,
            gold_label: self.gold_label,
            is_content_free: self.is_content_free,
            missing_variants: self.missing_variants,
        };
        crate::model::validate_record(&record, &space).map_err(|source| IngestError::Invalid { line, source })?;
        Ok(record)
    }
}

impl From<&LogProbRecord> for RecordLine {
    fn from(r: &LogProbRecord) -> Self {
        RecordLine {
            item_id: r.item_id.clone(),
            model_id: r.run.model_id.clone(),
            dataset_id: r.run.dataset_id.clone(),
            prompt_format: r.run.prompt_format,
            question_type: r.run.question_type,
            model_family: r.run.model_family.clone(),
            gold_label: r.gold_label.clone(),
            is_content_free: r.is_content_free,
            option_logprobs: Some(r.option_logprobs.clone()),
            raw_variants: r.raw_variants.clone(),
            missing_variants: r.missing_variants.clone(),
        }
    }
}

/// Validated records grouped by run configuration, in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordStore {
    groups: Vec<RecordGroup>,
}

impl RecordStore {
    pub fn from_records(records: Vec<LogProbRecord>) -> Result<Self, ValidationError> {
        let mut order: Vec<RunConfig> = Vec::new();
        let mut buckets: HashMap<RunConfig, Vec<LogProbRecord>> = HashMap::new();
        for r in records {
            if !buckets.contains_key(&r.run) {
                order.push(r.run.clone());
            }
            buckets.entry(r.run.clone()).or_default().push(r);
        }
        let groups = order
            .into_iter()
            .map(|run| {
                let records = buckets.remove(&run).unwrap_or_default();
                RecordGroup::new(run, records)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[RecordGroup] {
        &self.groups
    }

    pub fn group(&self, run: &RunConfig) -> Option<&RecordGroup> {
        self.groups.iter().find(|g| g.run() == run)
    }

    pub fn runs(&self) -> Vec<RunConfig> {
        self.groups.iter().map(|g| g.run().clone()).collect()
    }

    /// Option space per question type present in the store.
    pub fn option_spaces(&self) -> BTreeMap<QuestionType, OptionSpace> {
        self.groups
            .iter()
            .map(|g| (g.run().question_type, g.space().clone()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.len() + g.probes().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_records(self) -> Vec<LogProbRecord> {
        self.groups.into_iter().flat_map(RecordGroup::into_records).collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &LogProbRecord> {
        self.groups.iter().flat_map(|g| g.records().iter().chain(g.probes()))
    }
}

/// Parses JSON-lines records from a reader. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn read_records(reader: impl BufRead) -> Result<Vec<LogProbRecord>, IngestError> {
    let mut records = Vec::new();
    let mut seen: HashSet<(RunConfig, String)> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = parsed.into_record(line_no)?;
        if !seen.insert((record.run.clone(), record.item_id.clone())) {
            return Err(IngestError::Invalid {
                line: line_no,
                source: ValidationError::DuplicateItem(record.item_id),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Loads and validates one JSON-lines file.
pub fn load_records(path: impl AsRef<Path>) -> Result<RecordStore, IngestError> {
    load_paths(&[path.as_ref()])
}

/// Loads several files into one store; each file's line order is preserved.
pub fn load_paths<P: AsRef<Path>>(paths: &[P]) -> Result<RecordStore, IngestError> {
    let mut all = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let records = read_records(BufReader::new(file)).map_err(|e| match e {
            IngestError::Read(source) => IngestError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })?;
        all.extend(records);
    }
    Ok(RecordStore::from_records(all)?)
}

pub fn write_records<'a>(
    records: impl IntoIterator<Item = &'a LogProbRecord>,
    mut writer: impl Write,
) -> Result<(), IngestError> {
    for r in records {
        serde_json::to_writer(&mut writer, &RecordLine::from(r))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_store(store: &RecordStore, writer: impl Write) -> Result<(), IngestError> {
    write_records(store.records(), writer)
}

/// Per-label gold counts of an unbalanced group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImbalanceReport {
    pub counts: Vec<(String, usize)>,
}

impl fmt::Display for ImbalanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("class imbalance:")?;
        for (label, n) in &self.counts {
            write!(f, " {label}={n}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ImbalanceReport {}

pub fn assert_class_balanced(group: &RecordGroup) -> Result<(), ImbalanceReport> {
    let counts = group.class_counts();
    if counts.windows(2).all(|w| w[0] == w[1]) {
        Ok(())
    } else {
        Err(ImbalanceReport {
            counts: group.space().labels().iter().cloned().zip(counts).collect(),
        })
    }
}
