//! Deterministic in-process completions endpoint.
//!
//! The mock model answers yes-no arithmetic questions of the form
//! "Is X plus Y equal to Z?" with a fixed signal, adds hash-derived noise and
//! a configurable preference for the first label of each option space, and
//! returns the result in the legacy completions `logprobs` shape.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};

use crate::endpoint::{FetchError, LogProbSource};

const LABEL_SETS: [&[&str]; 3] = [&["Yes", "No"], &["0", "1", "2"], &["A", "B", "C", "D"]];

#[derive(Debug, Clone, PartialEq)]
pub struct MockConfig {
    /// Added to the first label of every option space.
    pub first_label_bias: f64,
    /// Half-width of the uniform hash noise on each label.
    pub noise: f64,
    /// Logit advantage of the correct answer on arithmetic items.
    pub signal: f64,
    /// Tokens never reported.
    pub omit_tokens: Vec<String>,
    /// The first `fail_first` requests get a 503.
    pub fail_first: usize,
    pub latency: Duration,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            first_label_bias: 0.8,
            noise: 0.75,
            signal: 1.5,
            omit_tokens: Vec::new(),
            fail_first: 0,
            latency: Duration::ZERO,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Uniform in [-1, 1) from a hash and a stream index.
fn unit_noise(h: u64, k: u64) -> f64 {
    let x = fnv1a(&(h ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15)).to_le_bytes());
    (x >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// The text of the last item slot in a prompt.
fn item_text(prompt: &str) -> &str {
    let start = ["Question:", "#EXAMPLE:"]
        .iter()
        .filter_map(|m| prompt.rfind(m).map(|i| i + m.len()))
        .max()
        .unwrap_or(0);
    let rest = &prompt[start..];
    rest.split("\nResponse:").next().unwrap_or(rest).trim()
}

/// Truth of "Is X plus|minus Y equal to Z?", if the item has that form.
pub fn arithmetic_truth(item: &str) -> Option<bool> {
    let words: Vec<&str> = item.trim_end_matches('?').split_whitespace().collect();
    match words.as_slice() {
        ["Is", x, op, y, "equal", "to", z] => {
            let (x, y, z): (i64, i64, i64) = (x.parse().ok()?, y.parse().ok()?, z.parse().ok()?);
            match *op {
                "plus" => Some(x + y == z),
                "minus" => Some(x - y == z),
                _ => None,
            }
        }
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct MockModel {
    pub config: MockConfig,
}

impl MockModel {
    pub fn new(config: MockConfig) -> Self {
        Self { config }
    }

    /// Normalized next-token log-probabilities for a prompt.
    pub fn top_logprobs(&self, prompt: &str) -> BTreeMap<String, f64> {
        let item = item_text(prompt);
        let h = fnv1a(item.as_bytes());
        let truth = arithmetic_truth(item);
        let c = &self.config;
        let mut logits: Vec<(String, f64)> = vec![("\n".into(), 0.0), ("The".into(), -1.0)];
        let mut k = 0;
        for labels in LABEL_SETS {
            for (j, label) in labels.iter().enumerate() {
                let mut z = c.noise * unit_noise(h, k);
                k += 1;
                if j == 0 {
                    z += c.first_label_bias;
                }
                if labels.len() == 2 && truth == Some(j == 0) {
                    z += c.signal;
                }
                logits.push((label.to_string(), z + 0.25f64.ln()));
                logits.push((format!(" {label}"), z + 0.75f64.ln()));
            }
        }
        let max = logits.iter().map(|(_, z)| *z).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|(_, z)| (z - max).exp()).sum::<f64>().ln();
        logits
            .into_iter()
            .filter(|(t, _)| !c.omit_tokens.contains(t))
            .map(|(t, z)| (t, z - lse))
            .collect()
    }

    pub fn response(&self, prompt: &str) -> Value {
        json!({
            "object": "text_completion",
            "choices": [{
                "index": 0,
                "text": "",
                "logprobs": { "top_logprobs": [self.top_logprobs(prompt)] }
            }]
        })
    }
}

impl LogProbSource for MockModel {
    fn next_token_logprobs(&self, prompt: &str) -> Result<BTreeMap<String, f64>, FetchError> {
        Ok(self.top_logprobs(prompt))
    }
}

#[derive(Debug, Default)]
pub struct MockStats {
    pub requests: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
}

/// HTTP server answering `POST /v1/completions` on a loopback port.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    stats: Arc<MockStats>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(config: MockConfig) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(MockStats::default());
        let model = Arc::new(MockModel::new(config));
        let handle = {
            let (stop, stats) = (stop.clone(), stats.clone());
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let (model, stats) = (model.clone(), stats.clone());
                    thread::spawn(move || {
                        if let Err(e) = serve(conn, &model, &stats) {
                            log::debug!("mock connection: {e}");
                        }
                    });
                }
            })
        };
        Ok(Self {
            addr,
            stop,
            stats,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> &MockStats {
        &self.stats
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(conn: TcpStream, model: &MockModel, stats: &MockStats) -> io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body)?;

    let n = stats.requests.fetch_add(1, Ordering::SeqCst);
    let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.max_in_flight.fetch_max(now, Ordering::SeqCst);
    if !model.config.latency.is_zero() {
        thread::sleep(model.config.latency);
    }
    let (status, payload) = if !request_line.starts_with("POST ") || !request_line.contains("/v1/completions") {
        ("404 Not Found", json!({"error": "not found"}))
    } else if n < model.config.fail_first {
        ("503 Service Unavailable", json!({"error": "warming up"}))
    } else {
        match serde_json::from_slice::<Value>(&body)
            .ok()
            .and_then(|v| v.get("prompt").and_then(Value::as_str).map(str::to_string))
        {
            Some(prompt) => ("200 OK", model.response(&prompt)),
            None => ("400 Bad Request", json!({"error": "missing prompt"})),
        }
    };
    stats.in_flight.fetch_sub(1, Ordering::SeqCst);
    let text = payload.to_string();
    let mut out = conn;
    write!(
        out,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_parsing() {
        assert_eq!(arithmetic_truth("Is 3 plus 4 equal to 7?"), Some(true));
        assert_eq!(arithmetic_truth("Is 7 minus 9 equal to 4?"), Some(false));
        assert_eq!(arithmetic_truth("Is the sky blue?"), None);
    }

    #[test]
    fn item_slot_extraction() {
        assert_eq!(
            item_text("#EXAMPLE\nQuestion: Is 1 plus 1 equal to 2?\nResponse:"),
            "Is 1 plus 1 equal to 2?"
        );
        assert_eq!(item_text("Is 1 plus 1 equal to 2?"), "Is 1 plus 1 equal to 2?");
    }

    #[test]
    fn logprobs_are_normalized_and_deterministic() {
        let m = MockModel::new(MockConfig::default());
        let a = m.top_logprobs("Question: Is 1 plus 1 equal to 2?");
        assert_eq!(a, m.top_logprobs("Question: Is 1 plus 1 equal to 2?"));
        let total: f64 = a.values().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(a.values().all(|v| *v < 0.0));
    }
}
