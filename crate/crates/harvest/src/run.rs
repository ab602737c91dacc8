//! Option log-probability collection and resumable harvest runs.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use rbcorr::ingest::RecordLine;
use rbcorr::model::{OptionSpace, RunConfig};
use rbcorr::prompts::{PromptError, PromptTemplate, CONTENT_FREE_INPUTS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::endpoint::{FetchError, LogProbSource, RetryPolicy};

/// Substituted for a label variant the endpoint did not report.
pub const MISSING_FLOOR: f64 = -100.0;

/// Item ids of the content-free probes, aligned with [`CONTENT_FREE_INPUTS`].
pub const PROBE_IDS: [&str; 3] = ["content-free-na", "content-free-mask", "content-free-empty"];

/// The bare label and its single-space-prefixed form.
pub fn token_variants(label: &str) -> [String; 2] {
    [label.to_string(), format!(" {label}")]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionLogProbs {
    pub raw_variants: BTreeMap<String, Vec<(String, f64)>>,
    /// Variant tokens that were absent and replaced by [`MISSING_FLOOR`].
    pub missing: Vec<String>,
}

/// Looks up both variants of every label in the next-token table.
pub fn fetch_option_logprobs(
    source: &impl LogProbSource,
    prompt: &str,
    space: &OptionSpace,
    retry: &RetryPolicy,
) -> Result<OptionLogProbs, FetchError> {
    let table = retry.run(|| source.next_token_logprobs(prompt))?;
    let mut raw_variants = BTreeMap::new();
    let mut missing = Vec::new();
    for label in space.labels() {
        let variants = token_variants(label)
            .into_iter()
            .map(|tok| match table.get(&tok) {
                Some(&v) if v.is_finite() => (tok, v),
                _ => {
                    missing.push(tok.clone());
                    (tok, MISSING_FLOOR)
                }
            })
            .collect();
        raw_variants.insert(label.clone(), variants);
    }
    Ok(OptionLogProbs { raw_variants, missing })
}

/// One input item: the question text for the template's item slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestItem {
    pub item_id: String,
    pub text: String,
    pub gold_label: String,
}

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("items line {line}: {message}")]
    Items { line: usize, message: String },
    #[error("no items to harvest")]
    NoItems,
    #[error("duplicate item id '{0}'")]
    DuplicateItem(String),
    #[error("item '{item_id}': gold label '{gold}' is not in the option space")]
    UnknownGold { item_id: String, gold: String },
    #[error("template {template} does not match run {run}")]
    TemplateMismatch { template: String, run: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Endpoint(#[from] FetchError),
    #[error("existing output line {line} is not a record: {message}")]
    CorruptOutput { line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarvestError + '_ {
    move |source| HarvestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads JSON-lines items, skipping blank lines.
pub fn read_items(reader: impl BufRead) -> Result<Vec<HarvestItem>, HarvestError> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| HarvestError::Items {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| HarvestError::Items {
            line: i + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn load_items(path: &Path) -> Result<Vec<HarvestItem>, HarvestError> {
    let f = File::open(path).map_err(io_err(path))?;
    read_items(BufReader::new(f))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarvestOptions {
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
    pub content_free_probes: bool,
}

impl Default for HarvestOptions {
    fn default() -> Self {
        Self {
            max_concurrency: 4,
            retry: RetryPolicy::default(),
            content_free_probes: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedItem {
    pub item_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HarvestSummary {
    pub items: usize,
    pub written: usize,
    pub probes_written: usize,
    /// Items and probes already present in the output.
    pub skipped: usize,
    /// Records carrying at least one floor-substituted variant.
    pub flagged: usize,
    pub failed: Vec<FailedItem>,
}

impl HarvestSummary {
    pub fn is_complete(&self) -> bool {
        self.failed.is_empty()
    }
}

struct Job {
    item_id: String,
    gold_label: String,
    prompt: String,
    content_free: bool,
}

/// Item ids already written for `run`. A trailing partial line left by an
/// interrupted write is truncated away.
fn existing_ids(path: &Path, run: &RunConfig) -> Result<HashSet<String>, HarvestError> {
    let mut done = HashSet::new();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = match bytes.iter().rposition(|&b| b == b'\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < bytes.len() {
        log::warn!(
            "{}: dropping {} bytes of partial record",
            path.display(),
            bytes.len() - complete
        );
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(complete as u64).map_err(io_err(path))?;
    }
    let text = String::from_utf8_lossy(&bytes[..complete]);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordLine = serde_json::from_str(line).map_err(|e| HarvestError::CorruptOutput {
            line: i + 1,
            message: e.to_string(),
        })?;
        if &rec.run() == run {
            done.insert(rec.item_id);
        }
    }
    Ok(done)
}

fn record_line(run: &RunConfig, job: &Job, lp: OptionLogProbs) -> RecordLine {
    RecordLine {
        item_id: job.item_id.clone(),
        model_id: run.model_id.clone(),
        dataset_id: run.dataset_id.clone(),
        prompt_format: run.prompt_format,
        question_type: run.question_type,
        model_family: run.model_family.clone(),
        gold_label: job.gold_label.clone(),
        is_content_free: job.content_free,
        option_logprobs: None,
        raw_variants: Some(lp.raw_variants),
        missing_variants: lp.missing,
    }
}

/// Fetches every item not yet present in `output` and appends its record,
/// followed by the content-free probes.
///
/// Up to `max_concurrency` requests run at once. Records are appended by a
/// single writer in input order, so an interrupted run leaves a prefix that
/// a rerun skips. Items that still fail after retries are listed in the
/// summary and left out of the file.
pub fn harvest_run(
    items: &[HarvestItem],
    template: &PromptTemplate,
    run: &RunConfig,
    source: &impl LogProbSource,
    options: &HarvestOptions,
    output: &Path,
) -> Result<HarvestSummary, HarvestError> {
    if items.is_empty() {
        return Err(HarvestError::NoItems);
    }
    run.validate().map_err(|e| HarvestError::TemplateMismatch {
        template: format!("{} {}", template.dataset, template.format),
        run: format!("{run}: {e}"),
    })?;
    if template.question_type() != run.question_type || template.format != run.prompt_format {
        return Err(HarvestError::TemplateMismatch {
            template: format!("{} {}", template.dataset, template.format),
            run: run.to_string(),
        });
    }
    let space = run.option_space();
    let mut seen = BTreeSet::new();
    for item in items {
        if !seen.insert(item.item_id.as_str()) || PROBE_IDS.contains(&item.item_id.as_str()) {
            return Err(HarvestError::DuplicateItem(item.item_id.clone()));
        }
        if space.index_of(&item.gold_label).is_none() {
            return Err(HarvestError::UnknownGold {
                item_id: item.item_id.clone(),
                gold: item.gold_label.clone(),
            });
        }
    }

    let done = existing_ids(output, run)?;
    let mut summary = HarvestSummary {
        items: items.len(),
        ..Default::default()
    };
    let mut jobs = Vec::new();
    for item in items {
        if done.contains(&item.item_id) {
            summary.skipped += 1;
        } else {
            jobs.push(Job {
                item_id: item.item_id.clone(),
                gold_label: item.gold_label.clone(),
                prompt: template.build(&item.text),
                content_free: false,
            });
        }
    }
    if options.content_free_probes {
        for (id, input) in PROBE_IDS.iter().zip(CONTENT_FREE_INPUTS) {
            if done.contains(*id) {
                summary.skipped += 1;
            } else {
                jobs.push(Job {
                    item_id: id.to_string(),
                    gold_label: String::new(),
                    prompt: template.build(input),
                    content_free: true,
                });
            }
        }
    }
    if jobs.is_empty() {
        return Ok(summary);
    }

    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(output)
        .map_err(io_err(output))?;

    let workers = options.max_concurrency.max(1).min(jobs.len());
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<OptionLogProbs, FetchError>)>();
    let jobs = &jobs;
    let space = &space;
    thread::scope(|scope| -> Result<(), HarvestError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let r = fetch_option_logprobs(source, &jobs[i].prompt, space, &options.retry);
                if tx.send((i, r)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut cursor = 0;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&cursor) {
                let job = &jobs[cursor];
                match r {
                    Ok(lp) => {
                        if !lp.missing.is_empty() {
                            log::warn!("{}: missing variants {:?}, floored", job.item_id, lp.missing);
                            summary.flagged += 1;
                        }
                        let line = serde_json::to_string(&record_line(run, job, lp)).expect("record serializes");
                        file.write_all(line.as_bytes())
                            .and_then(|_| file.write_all(b"\n"))
                            .and_then(|_| file.flush())
                            .map_err(io_err(output))?;
                        if job.content_free {
                            summary.probes_written += 1;
                        } else {
                            summary.written += 1;
                        }
                    }
                    Err(e) => {
                        log::error!("{}: {e}", job.item_id);
                        summary.failed.push(FailedItem {
                            item_id: job.item_id.clone(),
                            error: e.to_string(),
                        });
                    }
                }
                cursor += 1;
            }
        }
        Ok(())
    })?;
    Ok(summary)
}
