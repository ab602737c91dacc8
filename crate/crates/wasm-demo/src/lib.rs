//! Browser bindings for the synthetic bias demo.
//!
//! Every export takes and returns a JSON string. Errors come back as
//! `{"error": "..."}` so the page never has to catch exceptions.

use rbcorr::correction::{rbcorr_term, sample_calibration};
use rbcorr::experiments::size_sweep;
use rbcorr::metrics::{eval_all, response_distribution, tvd, LabelDistribution};
use rbcorr::model::{CorrectionTerm, Method, QuestionType};
use rbcorr::synthetic::{generate_group, SyntheticSpec};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::wasm_bindgen;

#[derive(Debug, Clone, Deserialize)]
pub struct GroupParams {
    pub arity: usize,
    pub n_per_class: usize,
    pub margin: f64,
    pub noise: f64,
    pub bias: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl GroupParams {
    fn spec(&self) -> Result<SyntheticSpec, String> {
        let qt = QuestionType::from_arity(self.arity).ok_or_else(|| format!("unsupported arity {}", self.arity))?;
        if self.n_per_class == 0 || self.n_per_class > 5000 {
            return Err("n_per_class must be between 1 and 5000".into());
        }
        Ok(SyntheticSpec::new(
            qt,
            self.n_per_class,
            self.margin,
            self.noise,
            self.bias.clone(),
            self.seed,
        ))
    }
}

#[derive(Debug, Deserialize)]
pub struct SimulateParams {
    #[serde(flatten)]
    pub group: GroupParams,
    pub calibration_size: usize,
}

#[derive(Debug, Serialize)]
pub struct Side {
    pub distribution: Vec<f64>,
    pub accuracy: f64,
    pub tvd: f64,
    pub rstd: f64,
}

#[derive(Debug, Serialize)]
pub struct Simulation {
    pub labels: Vec<String>,
    pub offsets: Vec<f64>,
    pub before: Side,
    pub after: Side,
}

fn side(group: &rbcorr::model::RecordGroup, term: &CorrectionTerm) -> Result<Side, String> {
    let e = eval_all(group, term).map_err(|e| e.to_string())?;
    let d = response_distribution(group, term).map_err(|e| e.to_string())?;
    Ok(Side {
        distribution: d.proportions().to_vec(),
        accuracy: e.accuracy,
        tvd: e.tvd,
        rstd: e.rstd,
    })
}

/// Response distributions before and after one RBCorr calibration draw.
pub fn simulate_json(params: &str) -> Result<String, String> {
    let p: SimulateParams = serde_json::from_str(params).map_err(|e| e.to_string())?;
    let (group, _) = generate_group(&p.group.spec()?).map_err(|e| e.to_string())?;
    let sample = sample_calibration(&group, p.calibration_size, p.group.seed).map_err(|e| e.to_string())?;
    let term = rbcorr_term(&group, &sample).map_err(|e| e.to_string())?;
    let out = Simulation {
        labels: group.space().labels().to_vec(),
        offsets: term.dense(group.space()).map_err(|e| e.to_string())?,
        before: side(&group, &CorrectionTerm::identity(group.space()))?,
        after: side(&group, &term)?,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
pub struct SweepParams {
    #[serde(flatten)]
    pub group: GroupParams,
    pub sizes: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub size: usize,
    pub mean_accuracy: f64,
    pub q1: f64,
    pub q3: f64,
    pub median_tvd: f64,
    pub baseline_accuracy: f64,
}

/// Corrected accuracy against calibration size.
pub fn sweep_json(params: &str) -> Result<String, String> {
    let p: SweepParams = serde_json::from_str(params).map_err(|e| e.to_string())?;
    if p.iterations == 0 || p.iterations > 500 {
        return Err("iterations must be between 1 and 500".into());
    }
    let (group, _) = generate_group(&p.group.spec()?).map_err(|e| e.to_string())?;
    let points = size_sweep(&group, Method::Rbcorr, &p.sizes, p.iterations, p.group.seed)
        .into_iter()
        .map(|e| {
            e.result
                .map_err(|err| format!("size {}: {err}", e.size))
                .map(|r| SweepPoint {
                    size: r.size,
                    mean_accuracy: r.mean_accuracy,
                    q1: r.iqr_accuracy.0,
                    q3: r.iqr_accuracy.1,
                    median_tvd: r.median_tvd,
                    baseline_accuracy: r.baseline_accuracy,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
struct TvdParams {
    gold: Vec<f64>,
    model: Vec<f64>,
}

/// Total variation distance between two distributions over the same options.
pub fn tvd_json(params: &str) -> Result<String, String> {
    let p: TvdParams = serde_json::from_str(params).map_err(|e| e.to_string())?;
    let qt = QuestionType::from_arity(p.gold.len()).ok_or_else(|| format!("unsupported arity {}", p.gold.len()))?;
    let space = qt.option_space();
    let g = LabelDistribution::new(space.clone(), p.gold, 1).map_err(|e| e.to_string())?;
    let m = LabelDistribution::new(space, p.model, 1).map_err(|e| e.to_string())?;
    let d = tvd(&g, &m).map_err(|e| e.to_string())?;
    Ok(serde_json::json!({ "tvd": d }).to_string())
}

fn wrap(r: Result<String, String>) -> String {
    r.unwrap_or_else(|e| serde_json::json!({ "error": e }).to_string())
}

#[wasm_bindgen]
pub fn simulate(params: &str) -> String {
    wrap(simulate_json(params))
}

#[wasm_bindgen]
pub fn sweep(params: &str) -> String {
    wrap(sweep_json(params))
}

#[wasm_bindgen(js_name = tvd)]
pub fn tvd_export(params: &str) -> String {
    wrap(tvd_json(params))
}
