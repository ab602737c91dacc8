//! Response-bias measurement and post-hoc correction for fixed-response
//! language-model evaluations.
//!
//! Records hold per-option log-probabilities for one item under one run
//! condition. [`metrics`] measures accuracy and label-distribution bias,
//! [`correction`] estimates additive offsets (RBCorr, contextual and batch
//! calibration), and [`experiments`] and [`transfer`] run the resampling
//! protocols on top of them.

pub mod correction;
pub mod experiments;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod prompts;
pub mod report;
pub mod synthetic;
pub mod transfer;

pub use correction::{
    bc_streaming, bc_term, cc_term, rbcorr_term, sample_calibration, BcState, CalibrationSample, CorrectionError,
};
pub use ingest::{load_records, merge_variants, IngestError, RecordStore};
pub use metrics::{accuracy, eval_all, respond, response_distribution, rstd, tvd, LabelDistribution, MetricError};
pub use model::{
    CorrectionTerm, EvalResult, LogProbRecord, Method, OptionSpace, PromptFormat, QuestionType, RecordGroup, RunConfig,
    ValidationError,
};
