//! Response-level metrics: accuracy, total variation distance from the
//! uniform label distribution, and standard deviation of per-class recalls.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{argmax, CorrectionTerm, EvalResult, LogProbRecord, OptionSpace, RecordGroup, TermError};

/// Tolerance on the sum of a label distribution.
pub const DISTRIBUTION_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("empty record group")]
    EmptyGroup,
    #[error("option-space mismatch: {0:?} vs {1:?}")]
    SpaceMismatch(Vec<String>, Vec<String>),
    #[error("no gold items for class '{0}'")]
    MissingClass(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Term(#[from] TermError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelDistribution {
    #[serde(skip)]
    space: OptionSpace,
    proportions: Vec<f64>,
    n: usize,
}

impl LabelDistribution {
    pub fn new(space: OptionSpace, proportions: Vec<f64>, n: usize) -> Result<Self, MetricError> {
        if proportions.len() != space.arity() {
            return Err(MetricError::InvalidDistribution(format!(
                "{} proportions for {} labels",
                proportions.len(),
                space.arity()
            )));
        }
        if proportions.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(MetricError::InvalidDistribution("proportion outside [0, 1]".into()));
        }
        let sum: f64 = proportions.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
            return Err(MetricError::InvalidDistribution(format!("proportions sum to {sum}")));
        }
        Ok(Self { space, proportions, n })
    }

    pub fn uniform(space: &OptionSpace) -> Self {
        let a = space.arity();
        Self {
            space: space.clone(),
            proportions: vec![1.0 / a as f64; a],
            n: a,
        }
    }

    pub fn from_counts(space: &OptionSpace, counts: &[usize]) -> Result<Self, MetricError> {
        let n: usize = counts.iter().sum();
        if n == 0 {
            return Err(MetricError::EmptyGroup);
        }
        let proportions = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Self::new(space.clone(), proportions, n)
    }

    pub fn space(&self) -> &OptionSpace {
        &self.space
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.space.index_of(label).map(|i| self.proportions[i])
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.space.to_map(&self.proportions)
    }
}

/// Index of the response after subtracting `offsets` from `scores`.
pub fn respond_dense(scores: &[f64], offsets: &[f64]) -> usize {
    debug_assert_eq!(scores.len(), offsets.len());
    let mut best = 0;
    let mut best_score = scores[0] - offsets[0];
    for i in 1..scores.len() {
        let s = scores[i] - offsets[i];
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// The label with the highest corrected log-probability.
pub fn respond(record: &LogProbRecord, term: &CorrectionTerm) -> Result<String, MetricError> {
    let space = record.run.option_space();
    let offsets = term.dense(&space)?;
    let scores = space.dense(&record.option_logprobs).map_err(TermError::from)?;
    let corrected: Vec<f64> = scores.iter().zip(&offsets).map(|(s, o)| s - o).collect();
    Ok(space.label(argmax(&corrected)).to_string())
}

/// Response and correctness counts over a subset of a group.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTally {
    pub responses: Vec<usize>,
    pub correct: Vec<usize>,
    pub class_totals: Vec<usize>,
}

impl ResponseTally {
    pub fn new(arity: usize) -> Self {
        Self {
            responses: vec![0; arity],
            correct: vec![0; arity],
            class_totals: vec![0; arity],
        }
    }

    pub fn add(&mut self, gold: usize, response: usize) {
        self.responses[response] += 1;
        self.class_totals[gold] += 1;
        if gold == response {
            self.correct[gold] += 1;
        }
    }

    /// Tally of `group` items at `indices`, or all items when `None`.
    pub fn collect(group: &RecordGroup, indices: Option<&[usize]>, offsets: &[f64]) -> Self {
        let mut tally = Self::new(group.arity());
        let mut visit = |i: usize| tally.add(group.gold(i), respond_dense(group.scores(i), offsets));
        match indices {
            Some(idx) => idx.iter().for_each(|&i| visit(i)),
            None => (0..group.len()).for_each(visit),
        }
        tally
    }

    pub fn n(&self) -> usize {
        self.responses.iter().sum()
    }

    pub fn accuracy(&self) -> Result<f64, MetricError> {
        let n = self.n();
        if n == 0 {
            return Err(MetricError::EmptyGroup);
        }
        Ok(self.correct.iter().sum::<usize>() as f64 / n as f64)
    }

    /// TVD between the uniform distribution and the response distribution.
    pub fn tvd(&self) -> Result<f64, MetricError> {
        let n = self.n();
        if n == 0 {
            return Err(MetricError::EmptyGroup);
        }
        let u = 1.0 / self.responses.len() as f64;
        Ok(0.5
            * self
                .responses
                .iter()
                .map(|&c| (u - c as f64 / n as f64).abs())
                .sum::<f64>())
    }

    pub fn recalls(&self, space: &OptionSpace) -> Result<Vec<f64>, MetricError> {
        self.class_totals
            .iter()
            .zip(&self.correct)
            .enumerate()
            .map(|(i, (&total, &ok))| {
                if total == 0 {
                    Err(MetricError::MissingClass(space.label(i).to_string()))
                } else {
                    Ok(ok as f64 / total as f64)
                }
            })
            .collect()
    }

    pub fn rstd(&self, space: &OptionSpace) -> Result<f64, MetricError> {
        Ok(population_std(&self.recalls(space)?))
    }

    pub fn distribution(&self, space: &OptionSpace) -> Result<LabelDistribution, MetricError> {
        LabelDistribution::from_counts(space, &self.responses)
    }

    pub fn eval_result(&self, space: &OptionSpace) -> Result<EvalResult, MetricError> {
        Ok(EvalResult {
            accuracy: self.accuracy()?,
            tvd: self.tvd()?,
            rstd: self.rstd(space)?,
            label_distribution: self.distribution(space)?.to_map(),
            n_items: self.n(),
        })
    }
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn tally(group: &RecordGroup, term: &CorrectionTerm) -> Result<ResponseTally, MetricError> {
    if group.is_empty() {
        return Err(MetricError::EmptyGroup);
    }
    let offsets = term.dense(group.space())?;
    Ok(ResponseTally::collect(group, None, &offsets))
}

pub fn response_distribution(group: &RecordGroup, term: &CorrectionTerm) -> Result<LabelDistribution, MetricError> {
    tally(group, term)?.distribution(group.space())
}

/// Half the L1 distance between two distributions over the same labels.
pub fn tvd(g: &LabelDistribution, m: &LabelDistribution) -> Result<f64, MetricError> {
    if g.space != m.space {
        return Err(MetricError::SpaceMismatch(
            g.space.labels().to_vec(),
            m.space.labels().to_vec(),
        ));
    }
    Ok(0.5
        * g.proportions
            .iter()
            .zip(&m.proportions)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

pub fn accuracy(group: &RecordGroup, term: &CorrectionTerm) -> Result<f64, MetricError> {
    tally(group, term)?.accuracy()
}

/// Population standard deviation of per-class recalls.
pub fn rstd(group: &RecordGroup, term: &CorrectionTerm) -> Result<f64, MetricError> {
    tally(group, term)?.rstd(group.space())
}

pub fn eval_all(group: &RecordGroup, term: &CorrectionTerm) -> Result<EvalResult, MetricError> {
    tally(group, term)?.eval_result(group.space())
}
