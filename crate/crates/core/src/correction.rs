//! Correction-term constructors.
//!
//! All three methods produce per-option offsets that are subtracted from
//! item log-probabilities:
//!
//! * RBCorr: mean log-probability per option over a class-balanced,
//!   labeled calibration sample.
//! * Batch calibration (BC): the same mean over an unlabeled batch, with a
//!   streaming variant that refines the mean as batches arrive.
//! * Contextual calibration (CC): log of the mean option probability on
//!   content-free probes, so subtracting it divides test probabilities by the
//!   probe prior.

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::log_sum_exp;
use crate::model::{CorrectionTerm, Method, OptionSpace, Provenance, RecordGroup};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrectionError {
    #[error("calibration size must be positive")]
    ZeroSize,
    #[error("calibration size {size} exceeds group size {available}")]
    SizeExceedsGroup { size: usize, available: usize },
    #[error("class '{label}' has {available} items, calibration needs {needed}")]
    InsufficientClassMembers {
        label: String,
        needed: usize,
        available: usize,
    },
    #[error("empty calibration sample")]
    EmptySample,
    #[error("no content-free probe records")]
    NoContentFreeRecords,
    #[error("empty batch")]
    EmptyBatch,
    #[error("option-space mismatch: expected {expected:?}, found {found:?}")]
    SpaceMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("calibration sample index {0} is outside the group")]
    ForeignSample(usize),
}

/// A class-balanced calibration subset, by index into its group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub item_ids: Vec<String>,
    pub indices: Vec<usize>,
    pub size: usize,
    pub seed: u64,
    pub per_label_counts: BTreeMap<String, usize>,
}

/// Per-class quotas: `size / arity` each, with the remainder handed out one
/// at a time in canonical label order.
pub fn class_quotas(size: usize, arity: usize) -> Vec<usize> {
    (0..arity)
        .map(|c| size / arity + usize::from(c < size % arity))
        .collect()
}

/// Stratified sample without replacement, deterministic in `(group, size, seed)`.
pub fn sample_calibration(group: &RecordGroup, size: usize, seed: u64) -> Result<CalibrationSample, CorrectionError> {
    if size == 0 {
        return Err(CorrectionError::ZeroSize);
    }
    if size > group.len() {
        return Err(CorrectionError::SizeExceedsGroup {
            size,
            available: group.len(),
        });
    }
    let arity = group.arity();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); arity];
    for (i, &g) in group.gold_labels().iter().enumerate() {
        members[g].push(i);
    }
    let quotas = class_quotas(size, arity);
    for (c, (&quota, pool)) in quotas.iter().zip(&members).enumerate() {
        if pool.len() < quota {
            return Err(CorrectionError::InsufficientClassMembers {
                label: group.space().label(c).to_string(),
                needed: quota,
                available: pool.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = Vec::with_capacity(size);
    let mut per_label_counts = BTreeMap::new();
    for (c, (&quota, pool)) in quotas.iter().zip(&members).enumerate() {
        let picked = rand::seq::index::sample(&mut rng, pool.len(), quota);
        indices.extend(picked.iter().map(|k| pool[k]));
        per_label_counts.insert(group.space().label(c).to_string(), quota);
    }
    Ok(CalibrationSample {
        item_ids: indices.iter().map(|&i| group.item_id(i).to_string()).collect(),
        indices,
        size,
        seed,
        per_label_counts,
    })
}

/// Column means of the scores of `indices`, in canonical order.
pub(crate) fn mean_scores(group: &RecordGroup, indices: impl Iterator<Item = usize>) -> (Vec<f64>, usize) {
    let mut sums = vec![0.0; group.arity()];
    let mut n = 0usize;
    for i in indices {
        for (s, v) in sums.iter_mut().zip(group.scores(i)) {
            *s += v;
        }
        n += 1;
    }
    let means = sums.into_iter().map(|s| s / n as f64).collect();
    (means, n)
}

fn check_sample(group: &RecordGroup, sample: &CalibrationSample) -> Result<(), CorrectionError> {
    if sample.indices.is_empty() {
        return Err(CorrectionError::EmptySample);
    }
    match sample.indices.iter().find(|&&i| i >= group.len()) {
        Some(&i) => Err(CorrectionError::ForeignSample(i)),
        None => Ok(()),
    }
}

/// RBCorr term: per-option mean log-probability over the calibration sample.
pub fn rbcorr_term(group: &RecordGroup, sample: &CalibrationSample) -> Result<CorrectionTerm, CorrectionError> {
    check_sample(group, sample)?;
    let (means, n) = mean_scores(group, sample.indices.iter().copied());
    Ok(CorrectionTerm::from_dense(
        Method::Rbcorr,
        group.space(),
        &means,
        Provenance {
            run: Some(group.run().clone()),
            set_size: n,
            seed: Some(sample.seed),
            item_ids: sample.item_ids.clone(),
        },
    ))
}

/// Sorted indices of the items not in the calibration sample.
pub fn evaluation_indices(group: &RecordGroup, sample: Option<&CalibrationSample>) -> Vec<usize> {
    match sample {
        None => (0..group.len()).collect(),
        Some(s) => {
            let held: HashSet<usize> = s.indices.iter().copied().collect();
            (0..group.len()).filter(|i| !held.contains(i)).collect()
        }
    }
}

/// The group minus its calibration items.
pub fn evaluation_split(group: &RecordGroup, sample: Option<&CalibrationSample>) -> RecordGroup {
    group.select(&evaluation_indices(group, sample))
}

/// Mean option probability over content-free probes, each softmax-normalized
/// over the option set.
pub fn cc_prior(space: &OptionSpace, probes: &[&[f64]]) -> Result<Vec<f64>, CorrectionError> {
    if probes.is_empty() {
        return Err(CorrectionError::NoContentFreeRecords);
    }
    let mut mean = vec![0.0; space.arity()];
    for scores in probes {
        let norm = log_sum_exp(scores.iter().copied());
        for (m, s) in mean.iter_mut().zip(scores.iter()) {
            *m += (s - norm).exp();
        }
    }
    let n = probes.len() as f64;
    Ok(mean.into_iter().map(|m| m / n).collect())
}

/// Contextual-calibration term from the group's content-free probes.
pub fn cc_term(group: &RecordGroup) -> Result<CorrectionTerm, CorrectionError> {
    let probes: Vec<&[f64]> = group.probe_scores().collect();
    let prior = cc_prior(group.space(), &probes)?;
    let offsets: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
    Ok(CorrectionTerm::from_dense(
        Method::Cc,
        group.space(),
        &offsets,
        Provenance {
            run: Some(group.run().clone()),
            set_size: probes.len(),
            seed: None,
            item_ids: group.probes().iter().map(|r| r.item_id.clone()).collect(),
        },
    ))
}

/// Batch-calibration term: unlabeled per-option mean over the whole batch.
pub fn bc_term(batch: &RecordGroup) -> Result<CorrectionTerm, CorrectionError> {
    let mut state = BcState::new(batch.space().clone());
    state.update(batch)
}

/// BC term over a subset of a group.
pub(crate) fn bc_term_indices(group: &RecordGroup, indices: &[usize]) -> Result<CorrectionTerm, CorrectionError> {
    let mut state = BcState::new(group.space().clone());
    state.absorb(group, indices.iter().copied());
    state.term(Some(group))
}

/// Running per-option sums for streaming batch calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcState {
    space: OptionSpace,
    sums: Vec<f64>,
    count: usize,
}

impl BcState {
    pub fn new(space: OptionSpace) -> Self {
        let a = space.arity();
        Self {
            space,
            sums: vec![0.0; a],
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn absorb(&mut self, group: &RecordGroup, indices: impl Iterator<Item = usize>) {
        for i in indices {
            for (s, v) in self.sums.iter_mut().zip(group.scores(i)) {
                *s += v;
            }
            self.count += 1;
        }
    }

    fn term(&self, group: Option<&RecordGroup>) -> Result<CorrectionTerm, CorrectionError> {
        if self.count == 0 {
            return Err(CorrectionError::EmptyBatch);
        }
        let means: Vec<f64> = self.sums.iter().map(|s| s / self.count as f64).collect();
        Ok(CorrectionTerm::from_dense(
            Method::Bc,
            &self.space,
            &means,
            Provenance {
                run: group.map(|g| g.run().clone()),
                set_size: self.count,
                seed: None,
                item_ids: Vec::new(),
            },
        ))
    }

    /// Folds in an incoming batch and returns the refined running-mean term.
    pub fn update(&mut self, batch: &RecordGroup) -> Result<CorrectionTerm, CorrectionError> {
        if batch.space() != &self.space {
            return Err(CorrectionError::SpaceMismatch {
                expected: self.space.labels().to_vec(),
                found: batch.space().labels().to_vec(),
            });
        }
        if batch.is_empty() && self.count == 0 {
            return Err(CorrectionError::EmptyBatch);
        }
        self.absorb(batch, 0..batch.len());
        self.term(Some(batch))
    }
}

/// Streaming BC step: returns the updated state and the term for the batch.
pub fn bc_streaming(mut state: BcState, batch: &RecordGroup) -> Result<(BcState, CorrectionTerm), CorrectionError> {
    let term = state.update(batch)?;
    Ok((state, term))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::respond;
    use crate::model::{LogProbRecord, PromptFormat, QuestionType, RunConfig};

    fn run(qt: QuestionType) -> RunConfig {
        RunConfig::new("m", "f", "d", PromptFormat::Fewshot, qt)
    }

    fn rec(qt: QuestionType, id: String, scores: &[f64], gold: usize, cf: bool) -> LogProbRecord {
        let space = qt.option_space();
        LogProbRecord {
            item_id: id,
            run: run(qt),
            option_logprobs: space.to_map(scores),
            raw_variants: None,
            gold_label: if cf {
                String::new()
            } else {
                space.label(gold).to_string()
            },
            is_content_free: cf,
            missing_variants: vec![],
        }
    }

    /// `per_class` items per class, scores depend on the item index.
    fn group(qt: QuestionType, per_class: usize) -> RecordGroup {
        let a = qt.arity();
        let mut recs = Vec::new();
        for i in 0..per_class {
            for c in 0..a {
                let scores: Vec<f64> = (0..a).map(|j| -(((i * 7 + c * 3 + j * 5) % 11) as f64) / 3.0).collect();
                recs.push(rec(qt, format!("{c}-{i}"), &scores, c, false));
            }
        }
        RecordGroup::new(run(qt), recs).unwrap()
    }

    #[test]
    fn quotas_follow_remainder_rule() {
        assert_eq!(class_quotas(100, 2), vec![50, 50]);
        assert_eq!(class_quotas(100, 3), vec![34, 33, 33]);
        assert_eq!(class_quotas(6, 4), vec![2, 2, 1, 1]);
    }

    #[test]
    fn stratified_sample_counts() {
        let g = group(QuestionType::TwoChoice, 100);
        let s = sample_calibration(&g, 100, 7).unwrap();
        assert_eq!(s.per_label_counts["Yes"], 50);
        assert_eq!(s.per_label_counts["No"], 50);
        let gold_yes = s.indices.iter().filter(|&&i| g.gold(i) == 0).count();
        assert_eq!(gold_yes, 50);

        let g3 = group(QuestionType::ThreeChoice, 60);
        let s = sample_calibration(&g3, 100, 7).unwrap();
        let counts: Vec<usize> = (0..3)
            .map(|c| s.indices.iter().filter(|&&i| g3.gold(i) == c).count())
            .collect();
        assert_eq!(counts, vec![34, 33, 33]);
        let unique: HashSet<_> = s.indices.iter().collect();
        assert_eq!(unique.len(), 100);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let g = group(QuestionType::FourChoice, 50);
        let a = sample_calibration(&g, 40, 11).unwrap();
        let b = sample_calibration(&g, 40, 11).unwrap();
        let c = sample_calibration(&g, 40, 12).unwrap();
        assert_eq!(a.item_ids, b.item_ids);
        assert_ne!(a.item_ids, c.item_ids);
    }

    #[test]
    fn sampling_errors() {
        let g = group(QuestionType::TwoChoice, 10);
        assert_eq!(sample_calibration(&g, 0, 1), Err(CorrectionError::ZeroSize));
        assert!(matches!(
            sample_calibration(&g, 21, 1),
            Err(CorrectionError::SizeExceedsGroup { .. })
        ));
        let mut recs: Vec<LogProbRecord> = g.records().to_vec();
        recs.retain(|r| r.gold_label == "Yes" || r.item_id.ends_with("-0"));
        let skewed = RecordGroup::new(run(QuestionType::TwoChoice), recs).unwrap();
        assert!(matches!(
            sample_calibration(&skewed, 10, 1),
            Err(CorrectionError::InsufficientClassMembers {
                needed: 5,
                available: 1,
                ..
            })
        ));
    }

    #[test]
    fn rbcorr_mean_of_two_items() {
        let qt = QuestionType::TwoChoice;
        let g = RecordGroup::new(
            run(qt),
            vec![
                rec(qt, "a".into(), &[-1.0, -2.0], 0, false),
                rec(qt, "b".into(), &[-3.0, -1.0], 1, false),
            ],
        )
        .unwrap();
        let s = sample_calibration(&g, 2, 0).unwrap();
        let t = rbcorr_term(&g, &s).unwrap();
        assert_eq!(t.offsets["Yes"], -2.0);
        assert_eq!(t.offsets["No"], -1.5);
        assert_eq!(t.method, Method::Rbcorr);
        assert_eq!(t.provenance.set_size, 2);
    }

    #[test]
    fn rbcorr_full_group_centers_means() {
        let g = group(QuestionType::ThreeChoice, 30);
        let s = sample_calibration(&g, g.len(), 3).unwrap();
        let t = rbcorr_term(&g, &s).unwrap();
        let off = t.dense(g.space()).unwrap();
        for (j, o) in off.iter().enumerate() {
            // brute force mean of corrected values
            let mean: f64 = (0..g.len()).map(|i| g.scores(i)[j] - o).sum::<f64>() / g.len() as f64;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn evaluation_split_is_the_complement() {
        let g = group(QuestionType::TwoChoice, 500);
        let s = sample_calibration(&g, 100, 5).unwrap();
        let eval = evaluation_indices(&g, Some(&s));
        assert_eq!(eval.len(), 900);
        let held: HashSet<_> = s.indices.iter().copied().collect();
        assert!(eval.iter().all(|i| !held.contains(i)));
        assert_eq!(evaluation_indices(&g, None).len(), 1000);
        assert_eq!(evaluation_split(&g, Some(&s)).len(), 900);
    }

    #[test]
    fn cc_single_probe_flips_decision() {
        let qt = QuestionType::TwoChoice;
        let g = RecordGroup::new(
            run(qt),
            vec![
                rec(qt, "cf".into(), &[0.8f64.ln(), 0.2f64.ln()], 0, true),
                rec(qt, "t".into(), &[0.6f64.ln(), 0.4f64.ln()], 0, false),
            ],
        )
        .unwrap();
        let t = cc_term(&g).unwrap();
        assert!((t.offsets["Yes"] - 0.8f64.ln()).abs() < 1e-12);
        assert!((t.offsets["No"] - 0.2f64.ln()).abs() < 1e-12);
        // 0.6 / 0.8 = 0.75 < 0.4 / 0.2 = 2
        assert_eq!(respond(&g.records()[0], &t).unwrap(), "No");
    }

    #[test]
    fn cc_averages_in_probability_space() {
        let qt = QuestionType::TwoChoice;
        // unnormalized probes; normalization over the option set must be applied
        let probes = [(0.9, 0.1), (0.7, 0.3), (0.8, 0.2)];
        let recs = probes
            .iter()
            .enumerate()
            .map(|(i, (a, b))| rec(qt, format!("cf{i}"), &[f64::ln(a * 0.5), f64::ln(b * 0.5)], 0, true))
            .collect();
        let g = RecordGroup::new(run(qt), recs).unwrap();
        let t = cc_term(&g).unwrap();
        assert!((t.offsets["Yes"] - 0.8f64.ln()).abs() < 1e-12);
        assert!((t.offsets["No"] - 0.2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cc_requires_probes() {
        let g = group(QuestionType::TwoChoice, 2);
        assert_eq!(cc_term(&g), Err(CorrectionError::NoContentFreeRecords));
    }

    #[test]
    fn bc_matches_rbcorr_on_balanced_set() {
        let g = group(QuestionType::FourChoice, 25);
        let s = sample_calibration(&g, g.len(), 9).unwrap();
        let r = rbcorr_term(&g, &s).unwrap().dense(g.space()).unwrap();
        let b = bc_term(&g).unwrap().dense(g.space()).unwrap();
        for (x, y) in r.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bc_single_item_ties_to_first_label() {
        let qt = QuestionType::ThreeChoice;
        let g = RecordGroup::new(run(qt), vec![rec(qt, "x".into(), &[-3.0, -0.5, -2.0], 1, false)]).unwrap();
        let t = bc_term(&g).unwrap();
        assert_eq!(respond(&g.records()[0], &t).unwrap(), "0");
    }

    #[test]
    fn bc_empty_batch_errors() {
        let g = RecordGroup::new(run(QuestionType::TwoChoice), vec![]).unwrap();
        assert_eq!(bc_term(&g), Err(CorrectionError::EmptyBatch));
    }

    #[test]
    fn bc_streaming_partitions_agree() {
        let g = group(QuestionType::ThreeChoice, 20);
        let full = bc_term(&g).unwrap().dense(g.space()).unwrap();

        let (state, one) = bc_streaming(BcState::new(g.space().clone()), &g).unwrap();
        assert_eq!(one.dense(g.space()).unwrap(), full);
        assert_eq!(state.count(), g.len());

        let half = g.len() / 2;
        let first: Vec<usize> = (0..half).collect();
        let second: Vec<usize> = (half..g.len()).collect();
        let (state, _) = bc_streaming(BcState::new(g.space().clone()), &g.select(&first)).unwrap();
        let (_, two) = bc_streaming(state, &g.select(&second)).unwrap();
        for (x, y) in two.dense(g.space()).unwrap().iter().zip(&full) {
            assert!((x - y).abs() < 1e-9);
        }

        // singleton batches vs a brute-force running mean
        let mut state = BcState::new(g.space().clone());
        let mut last = None;
        for i in 0..g.len() {
            let (s, t) = bc_streaming(state, &g.select(&[i])).unwrap();
            state = s;
            let brute: Vec<f64> = (0..3)
                .map(|j| (0..=i).map(|k| g.scores(k)[j]).sum::<f64>() / (i + 1) as f64)
                .collect();
            for (x, y) in t.dense(g.space()).unwrap().iter().zip(&brute) {
                assert!((x - y).abs() < 1e-9);
            }
            last = Some(t);
        }
        for (x, y) in last.unwrap().dense(g.space()).unwrap().iter().zip(&full) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn bc_streaming_rejects_other_spaces() {
        let g2 = group(QuestionType::TwoChoice, 2);
        let g3 = group(QuestionType::ThreeChoice, 2);
        let state = BcState::new(g2.space().clone());
        assert!(matches!(
            bc_streaming(state, &g3),
            Err(CorrectionError::SpaceMismatch { .. })
        ));
    }
}
