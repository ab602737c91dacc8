//! Repeated correction runs over random calibration samples: iteration
//! batches, calibration-size sweeps and before/after summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correction::{
    bc_term_indices, cc_term, evaluation_indices, rbcorr_term, sample_calibration, CalibrationSample, CorrectionError,
};
use crate::metrics::{eval_all, MetricError, ResponseTally};
use crate::model::{CorrectionTerm, EvalResult, Method, RecordGroup, RunConfig, TermError};

pub const DEFAULT_SIZE: usize = 100;
pub const DEFAULT_ITERATIONS: usize = 100;
pub const DEFAULT_SWEEP_SIZES: [usize; 5] = [20, 50, 100, 500, 1000];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Correction(#[from] CorrectionError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl From<TermError> for ExperimentError {
    fn from(e: TermError) -> Self {
        Self::Metric(MetricError::Term(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub iteration: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub tvd: f64,
    /// Uncorrected metrics on the same evaluation split.
    pub baseline_accuracy: f64,
    pub baseline_tvd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub run: RunConfig,
    pub method: Method,
    pub size: usize,
    pub base_seed: u64,
    pub per_iteration: Vec<IterationResult>,
    pub mean_accuracy: f64,
    pub median_accuracy: f64,
    pub median_tvd: f64,
    pub iqr_accuracy: (f64, f64),
    /// Uncorrected metrics on the full group.
    pub baseline_accuracy: f64,
    pub baseline_tvd: f64,
    pub median_split_baseline_accuracy: f64,
    pub median_split_baseline_tvd: f64,
}

impl SweepResult {
    pub fn iqr_width(&self) -> f64 {
        self.iqr_accuracy.1 - self.iqr_accuracy.0
    }
}

/// Linearly interpolated quantile of unsorted data (the common "type 7" rule).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty data");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Term for one iteration. CC uses the group's probes, BC the unlabeled
/// evaluation split, RBCorr the calibration sample.
pub fn method_term(
    group: &RecordGroup,
    method: Method,
    sample: &CalibrationSample,
    eval: &[usize],
) -> Result<CorrectionTerm, ExperimentError> {
    Ok(match method {
        Method::Rbcorr => rbcorr_term(group, sample)?,
        Method::Cc => cc_term(group)?,
        Method::Bc => bc_term_indices(group, eval)?,
        Method::Identity => CorrectionTerm::identity(group.space()),
    })
}

pub(crate) fn split_metrics(
    group: &RecordGroup,
    eval: &[usize],
    term: &CorrectionTerm,
) -> Result<(f64, f64), ExperimentError> {
    let offsets = term.dense(group.space())?;
    let tally = ResponseTally::collect(group, Some(eval), &offsets);
    Ok((tally.accuracy()?, tally.tvd()?))
}

fn run_iteration(
    group: &RecordGroup,
    method: Method,
    size: usize,
    iteration: usize,
    seed: u64,
    fixed_term: Option<&CorrectionTerm>,
) -> Result<IterationResult, ExperimentError> {
    let sample = sample_calibration(group, size, seed)?;
    let eval = evaluation_indices(group, Some(&sample));
    if eval.is_empty() {
        return Err(ExperimentError::InvalidConfig(format!(
            "calibration size {size} leaves no evaluation items"
        )));
    }
    let term = match fixed_term {
        Some(t) => t.clone(),
        None => method_term(group, method, &sample, &eval)?,
    };
    let (accuracy, tvd) = split_metrics(group, &eval, &term)?;
    let (baseline_accuracy, baseline_tvd) = split_metrics(group, &eval, &CorrectionTerm::identity(group.space()))?;
    Ok(IterationResult {
        iteration,
        seed,
        accuracy,
        tvd,
        baseline_accuracy,
        baseline_tvd,
    })
}

/// Maps `f` over `0..n`, in parallel when enabled; results keep index order.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Runs `n_iter` sample-correct-evaluate iterations with seeds
/// `base_seed + k`.
pub fn run_correction_iterations(
    group: &RecordGroup,
    method: Method,
    size: usize,
    n_iter: usize,
    base_seed: u64,
) -> Result<SweepResult, ExperimentError> {
    if n_iter == 0 {
        return Err(ExperimentError::InvalidConfig(
            "iteration count must be positive".into(),
        ));
    }
    if size == 0 {
        return Err(CorrectionError::ZeroSize.into());
    }
    // CC does not depend on the calibration sample.
    let fixed = match method {
        Method::Cc => Some(cc_term(group)?),
        _ => None,
    };
    let per_iteration = par_map(n_iter, |k| {
        run_iteration(group, method, size, k, base_seed.wrapping_add(k as u64), fixed.as_ref())
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let accs: Vec<f64> = per_iteration.iter().map(|r| r.accuracy).collect();
    let tvds: Vec<f64> = per_iteration.iter().map(|r| r.tvd).collect();
    let base_accs: Vec<f64> = per_iteration.iter().map(|r| r.baseline_accuracy).collect();
    let base_tvds: Vec<f64> = per_iteration.iter().map(|r| r.baseline_tvd).collect();
    let full = ResponseTally::collect(group, None, &vec![0.0; group.arity()]);
    Ok(SweepResult {
        run: group.run().clone(),
        method,
        size,
        base_seed,
        mean_accuracy: mean(&accs),
        median_accuracy: median(&accs),
        median_tvd: median(&tvds),
        iqr_accuracy: (quantile(&accs, 0.25), quantile(&accs, 0.75)),
        baseline_accuracy: full.accuracy()?,
        baseline_tvd: full.tvd()?,
        median_split_baseline_accuracy: median(&base_accs),
        median_split_baseline_tvd: median(&base_tvds),
        per_iteration,
    })
}

/// Base seed used for one size of a sweep.
pub fn sweep_seed(base_seed: u64, size: usize) -> u64 {
    base_seed ^ (size as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub size: usize,
    pub result: Result<SweepResult, ExperimentError>,
}

/// One result per size; infeasible sizes yield an error entry and the sweep
/// continues.
pub fn size_sweep(
    group: &RecordGroup,
    method: Method,
    sizes: &[usize],
    n_iter: usize,
    base_seed: u64,
) -> Vec<SweepEntry> {
    sizes
        .iter()
        .map(|&size| SweepEntry {
            size,
            result: run_correction_iterations(group, method, size, n_iter, sweep_seed(base_seed, size)),
        })
        .collect()
}

/// Uncorrected metrics next to median corrected metrics, as deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeforeAfter {
    pub run: RunConfig,
    pub method: Method,
    pub size: usize,
    pub n_iter: usize,
    pub base_seed: u64,
    /// Uncorrected metrics on the full group.
    pub baseline: EvalResult,
    pub median_split_baseline_accuracy: f64,
    pub median_split_baseline_tvd: f64,
    pub median_accuracy: f64,
    pub median_tvd: f64,
    /// Median corrected minus median uncorrected, over the same splits.
    pub delta_accuracy: f64,
    pub delta_tvd: f64,
}

pub fn before_after_report(
    group: &RecordGroup,
    method: Method,
    size: usize,
    n_iter: usize,
    base_seed: u64,
) -> Result<BeforeAfter, ExperimentError> {
    let sweep = run_correction_iterations(group, method, size, n_iter, base_seed)?;
    let baseline = eval_all(group, &CorrectionTerm::identity(group.space()))?;
    Ok(BeforeAfter {
        run: group.run().clone(),
        method,
        size,
        n_iter,
        base_seed,
        baseline,
        median_split_baseline_accuracy: sweep.median_split_baseline_accuracy,
        median_split_baseline_tvd: sweep.median_split_baseline_tvd,
        median_accuracy: sweep.median_accuracy,
        median_tvd: sweep.median_tvd,
        delta_accuracy: sweep.median_accuracy - sweep.median_split_baseline_accuracy,
        delta_tvd: sweep.median_tvd - sweep.median_split_baseline_tvd,
    })
}

/// One point of a size curve averaged across conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub conditions: usize,
    pub mean_accuracy: f64,
    pub mean_q1: f64,
    pub mean_q3: f64,
    pub mean_baseline_accuracy: f64,
}

/// Unweighted mean over conditions of each condition's per-size summary.
pub fn mean_curve(per_condition: &[Vec<SweepResult>]) -> Vec<CurvePoint> {
    let mut sizes: Vec<usize> = per_condition.iter().flatten().map(|r| r.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|size| {
            let rows: Vec<&SweepResult> = per_condition.iter().flatten().filter(|r| r.size == size).collect();
            let m = |f: &dyn Fn(&SweepResult) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64;
            CurvePoint {
                size,
                conditions: rows.len(),
                mean_accuracy: m(&|r| r.mean_accuracy),
                mean_q1: m(&|r| r.iqr_accuracy.0),
                mean_q3: m(&|r| r.iqr_accuracy.1),
                mean_baseline_accuracy: m(&|r| r.baseline_accuracy),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QuestionType;
    use crate::synthetic::{generate_group, SyntheticSpec};

    fn biased(n_per_class: usize, noise: f64, seed: u64) -> RecordGroup {
        let spec = SyntheticSpec::new(QuestionType::TwoChoice, n_per_class, 1.0, noise, vec![0.0, 0.8], seed);
        generate_group(&spec).unwrap().0
    }

    #[test]
    fn quantile_matches_linear_interpolation() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn single_iteration_with_minimal_split() {
        let g = biased(10, 0.5, 1);
        let r = run_correction_iterations(&g, Method::Rbcorr, g.len() - 2, 1, 0).unwrap();
        assert_eq!(r.per_iteration.len(), 1);
        assert_eq!(r.iqr_accuracy.0, r.iqr_accuracy.1);
    }

    #[test]
    fn calibration_covering_group_is_an_error() {
        let g = biased(10, 0.5, 1);
        assert!(matches!(
            run_correction_iterations(&g, Method::Rbcorr, g.len(), 1, 0),
            Err(ExperimentError::InvalidConfig(_))
        ));
    }

    #[test]
    fn identity_has_zero_deltas() {
        let g = biased(200, 0.7, 2);
        let r = before_after_report(&g, Method::Identity, 100, 20, 3).unwrap();
        assert_eq!(r.delta_accuracy, 0.0);
        assert_eq!(r.delta_tvd, 0.0);
    }

    #[test]
    fn rbcorr_reduces_bias_on_no_biased_group() {
        let spec = SyntheticSpec::new(QuestionType::TwoChoice, 300, 1.0, 0.6, vec![0.0, 1.5], 9);
        let (g, _) = generate_group(&spec).unwrap();
        let r = before_after_report(&g, Method::Rbcorr, 100, 30, 0).unwrap();
        assert!(r.delta_tvd < 0.0, "{r:?}");
        assert!(r.delta_accuracy > 0.0);
        let bc = before_after_report(&g, Method::Bc, 100, 30, 0).unwrap();
        assert!(bc.delta_tvd < 0.0);
    }

    #[test]
    fn cc_without_probes_errors() {
        let g = biased(20, 0.5, 1);
        assert!(matches!(
            run_correction_iterations(&g, Method::Cc, 10, 2, 0),
            Err(ExperimentError::Correction(CorrectionError::NoContentFreeRecords))
        ));
    }

    #[test]
    fn iterations_are_deterministic_and_splits_disjoint() {
        let g = biased(100, 0.8, 4);
        let a = run_correction_iterations(&g, Method::Rbcorr, 20, 10, 77).unwrap();
        let b = run_correction_iterations(&g, Method::Rbcorr, 20, 10, 77).unwrap();
        assert_eq!(a, b);
        for it in &a.per_iteration {
            let s = sample_calibration(&g, 20, it.seed).unwrap();
            let eval = evaluation_indices(&g, Some(&s));
            assert_eq!(eval.len() + s.indices.len(), g.len());
        }
    }

    #[test]
    fn baselines_do_not_depend_on_method() {
        let g = biased(100, 0.8, 4);
        let r = run_correction_iterations(&g, Method::Rbcorr, 20, 5, 1).unwrap();
        let b = run_correction_iterations(&g, Method::Bc, 20, 5, 1).unwrap();
        for (x, y) in r.per_iteration.iter().zip(&b.per_iteration) {
            assert_eq!(x.baseline_accuracy, y.baseline_accuracy);
            assert_eq!(x.baseline_tvd, y.baseline_tvd);
        }
    }

    #[test]
    fn sweep_reports_infeasible_sizes_per_entry() {
        let g = biased(100, 0.8, 4);
        let entries = size_sweep(&g, Method::Rbcorr, &[0, 20, 1000], 3, 0);
        assert_eq!(entries.len(), 3);
        assert!(entries[0].result.is_err());
        assert!(entries[1].result.is_ok());
        assert!(entries[2].result.is_err());
    }

    #[test]
    fn unbiased_group_is_unchanged_within_noise() {
        let spec = SyntheticSpec::new(QuestionType::TwoChoice, 1000, 1.0, 1.0, vec![0.0, 0.0], 21);
        let (g, _) = generate_group(&spec).unwrap();
        let r = run_correction_iterations(&g, Method::Rbcorr, 100, 50, 0).unwrap();
        // 1900 evaluation items: binomial sd of accuracy is about 0.011
        assert!(
            (r.median_accuracy - r.median_split_baseline_accuracy).abs() < 0.03,
            "{r:?}"
        );
        assert!((r.median_tvd - r.median_split_baseline_tvd).abs() < 0.03);
    }

    #[test]
    fn mean_curve_averages_conditions() {
        let g1 = biased(100, 0.8, 4);
        let g2 = biased(100, 0.8, 5);
        let c1: Vec<SweepResult> = size_sweep(&g1, Method::Rbcorr, &[20, 50], 5, 0)
            .into_iter()
            .map(|e| e.result.unwrap())
            .collect();
        let c2: Vec<SweepResult> = size_sweep(&g2, Method::Rbcorr, &[20, 50], 5, 0)
            .into_iter()
            .map(|e| e.result.unwrap())
            .collect();
        let curve = mean_curve(&[c1.clone(), c2.clone()]);
        assert_eq!(curve.len(), 2);
        assert_eq!(curve[0].conditions, 2);
        assert!((curve[0].mean_accuracy - (c1[0].mean_accuracy + c2[0].mean_accuracy) / 2.0).abs() < 1e-15);
    }
}
