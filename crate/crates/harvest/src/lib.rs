//! Collects next-token option log-probabilities from a completions endpoint
//! and writes them as ingest-format JSON-lines records.

pub mod endpoint;
#[cfg(feature = "test-server")]
pub mod mock;
pub mod run;

pub use endpoint::{CompletionsClient, EndpointConfig, FetchError, LogProbSource, RetryPolicy};
pub use rbcorr::prompts::{build_prompt, DatasetTemplate, PromptError, PromptTemplate, CONTENT_FREE_INPUTS};
pub use run::{
    fetch_option_logprobs, harvest_run, load_items, read_items, HarvestError, HarvestItem, HarvestOptions,
    HarvestSummary, MISSING_FLOOR, PROBE_IDS,
};
