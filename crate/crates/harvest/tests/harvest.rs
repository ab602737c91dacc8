use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::sync::atomic::Ordering;
use std::time::Duration;

use rbcorr::ingest::{load_records, read_records};
use rbcorr::model::{PromptFormat, QuestionType, RunConfig};
use rbcorr_harvest::mock::{MockConfig, MockModel, MockServer};
use rbcorr_harvest::{
    fetch_option_logprobs, harvest_run, CompletionsClient, EndpointConfig, FetchError, HarvestItem, HarvestOptions,
    LogProbSource, PromptTemplate, RetryPolicy, MISSING_FLOOR,
};

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_retries: 3,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(5),
    }
}

fn options(concurrency: usize) -> HarvestOptions {
    HarvestOptions {
        max_concurrency: concurrency,
        retry: fast_retry(),
        content_free_probes: true,
    }
}

fn arith_items(n: usize) -> Vec<HarvestItem> {
    (0..n)
        .map(|i| {
            let (a, b) = (i as i64 + 2, (i as i64 * 7) % 13);
            let yes = i % 2 == 0;
            let c = if yes { a + b } else { a + b + 1 + (i as i64 % 3) };
            HarvestItem {
                item_id: format!("arith-{i:03}"),
                text: format!("Is {a} plus {b} equal to {c}?"),
                gold_label: if yes { "Yes" } else { "No" }.to_string(),
            }
        })
        .collect()
}

fn arith_run() -> RunConfig {
    RunConfig::new(
        "mock-1b",
        "mock",
        "ARITH",
        PromptFormat::Fewshot,
        QuestionType::TwoChoice,
    )
}

fn template() -> PromptTemplate {
    PromptTemplate::for_dataset("ARITH", PromptFormat::Fewshot).unwrap()
}

#[test]
fn two_choice_fetch_reports_four_variants() {
    let model = MockModel::new(MockConfig::default());
    let space = QuestionType::TwoChoice.option_space();
    let prompt = template().build("Is 1 plus 1 equal to 2?");
    let lp = fetch_option_logprobs(&model, &prompt, &space, &fast_retry()).unwrap();
    let n: usize = lp.raw_variants.values().map(Vec::len).sum();
    assert_eq!(n, 4);
    let toks: HashSet<&str> = lp.raw_variants.values().flatten().map(|(t, _)| t.as_str()).collect();
    assert_eq!(toks, HashSet::from(["Yes", " Yes", "No", " No"]));
    assert!(lp.missing.is_empty());
    assert_eq!(
        lp,
        fetch_option_logprobs(&model, &prompt, &space, &fast_retry()).unwrap()
    );
}

#[test]
fn omitted_variant_is_floored_and_flagged() {
    let model = MockModel::new(MockConfig {
        omit_tokens: vec![" No".into()],
        ..Default::default()
    });
    let space = QuestionType::TwoChoice.option_space();
    let lp = fetch_option_logprobs(&model, "Question: x", &space, &fast_retry()).unwrap();
    assert_eq!(lp.missing, vec![" No".to_string()]);
    let no = &lp.raw_variants["No"];
    assert!(no.iter().any(|(t, v)| t == " No" && *v == MISSING_FLOOR));
}

#[test]
fn ten_items_give_thirteen_valid_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.jsonl");
    let model = MockModel::new(MockConfig::default());
    let s = harvest_run(&arith_items(10), &template(), &arith_run(), &model, &options(4), &out).unwrap();
    assert_eq!((s.written, s.probes_written, s.skipped), (10, 3, 0));
    assert!(s.is_complete());
    let store = load_records(&out).unwrap();
    assert_eq!(store.len(), 13);
    let group = &store.groups()[0];
    assert_eq!(group.len(), 10);
    assert_eq!(group.probes().len(), 3);
    assert!(group
        .probes()
        .iter()
        .all(|p| p.is_content_free && p.gold_label.is_empty()));
}

#[test]
fn rerun_skips_items_already_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.jsonl");
    let model = MockModel::new(MockConfig::default());
    let items = arith_items(10);
    let first = HarvestOptions {
        content_free_probes: false,
        ..options(2)
    };
    harvest_run(&items[..5], &template(), &arith_run(), &model, &first, &out).unwrap();
    // simulate a crash in the middle of writing the sixth record
    let mut f = fs::OpenOptions::new().append(true).open(&out).unwrap();
    f.write_all(b"{\"item_id\": \"arith-005\", \"mod").unwrap();
    drop(f);

    let s = harvest_run(&items, &template(), &arith_run(), &model, &options(2), &out).unwrap();
    assert_eq!((s.skipped, s.written, s.probes_written), (5, 5, 3));
    let text = fs::read_to_string(&out).unwrap();
    let records = read_records(text.as_bytes()).unwrap();
    let ids: Vec<&str> = records.iter().map(|r| r.item_id.as_str()).collect();
    assert_eq!(ids.len(), 13);
    assert_eq!(ids.iter().collect::<HashSet<_>>().len(), 13);
    assert_eq!(
        &ids[..10],
        items.iter().map(|i| i.item_id.as_str()).collect::<Vec<_>>().as_slice()
    );

    let again = harvest_run(&items, &template(), &arith_run(), &model, &options(2), &out).unwrap();
    assert_eq!((again.skipped, again.written), (13, 0));
}

struct Flaky {
    inner: MockModel,
    broken: String,
}

impl LogProbSource for Flaky {
    fn next_token_logprobs(&self, prompt: &str) -> Result<BTreeMap<String, f64>, FetchError> {
        if prompt.contains(&self.broken) {
            Err(FetchError::Transport("connection reset".into()))
        } else {
            self.inner.next_token_logprobs(prompt)
        }
    }
}

#[test]
fn failures_are_summarized_and_later_filled_in() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.jsonl");
    let items = arith_items(6);
    let flaky = Flaky {
        inner: MockModel::new(MockConfig::default()),
        broken: items[2].text.clone(),
    };
    let s = harvest_run(&items, &template(), &arith_run(), &flaky, &options(3), &out).unwrap();
    assert_eq!(s.failed.len(), 1);
    assert_eq!(s.failed[0].item_id, "arith-002");
    assert_eq!(s.written, 5);
    let s2 = harvest_run(&items, &template(), &arith_run(), &flaky.inner, &options(3), &out).unwrap();
    assert_eq!((s2.written, s2.skipped), (1, 8));
    assert_eq!(load_records(&out).unwrap().len(), 9);
}

#[test]
fn http_client_respects_concurrency_bound() {
    let server = MockServer::start(MockConfig {
        latency: Duration::from_millis(40),
        ..Default::default()
    })
    .unwrap();
    let mut cfg = EndpointConfig::new(server.url(), "mock-1b");
    cfg.max_concurrency = 3;
    cfg.timeout = Duration::from_secs(10);
    let client = CompletionsClient::new(cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.jsonl");
    let s = harvest_run(&arith_items(12), &template(), &arith_run(), &client, &options(3), &out).unwrap();
    assert!(s.is_complete(), "{:?}", s.failed);
    assert_eq!(s.written + s.probes_written, 15);
    let peak = server.stats().max_in_flight.load(Ordering::SeqCst);
    assert!(peak <= 3, "peak in-flight {peak}");
    assert!(peak >= 2, "requests never overlapped");
    assert_eq!(load_records(&out).unwrap().len(), 15);
}

#[test]
fn transient_server_errors_are_retried() {
    let server = MockServer::start(MockConfig {
        fail_first: 2,
        ..Default::default()
    })
    .unwrap();
    let client = CompletionsClient::new(EndpointConfig::new(server.url(), "m")).unwrap();
    let space = QuestionType::TwoChoice.option_space();
    let lp = fetch_option_logprobs(&client, "Question: Is 2 plus 2 equal to 4?", &space, &fast_retry()).unwrap();
    assert_eq!(server.stats().requests.load(Ordering::SeqCst), 3);
    let direct = MockModel::new(MockConfig::default());
    assert_eq!(
        lp,
        fetch_option_logprobs(&direct, "Question: Is 2 plus 2 equal to 4?", &space, &fast_retry()).unwrap()
    );

    let no_retry = RetryPolicy {
        max_retries: 0,
        ..fast_retry()
    };
    let server = MockServer::start(MockConfig {
        fail_first: 1,
        ..Default::default()
    })
    .unwrap();
    let client = CompletionsClient::new(EndpointConfig::new(server.url(), "m")).unwrap();
    let err = fetch_option_logprobs(&client, "x", &space, &no_retry).unwrap_err();
    assert!(matches!(err, FetchError::Status { status: 503, .. }));
}

#[test]
fn mismatched_template_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = MockModel::new(MockConfig::default());
    let mmlu = PromptTemplate::for_dataset("MMLU", PromptFormat::Fewshot).unwrap();
    let r = harvest_run(
        &arith_items(2),
        &mmlu,
        &arith_run(),
        &model,
        &options(1),
        &dir.path().join("o.jsonl"),
    );
    assert!(r.is_err());
    let r = harvest_run(
        &[],
        &template(),
        &arith_run(),
        &model,
        &options(1),
        &dir.path().join("o.jsonl"),
    );
    assert!(r.is_err());
}
