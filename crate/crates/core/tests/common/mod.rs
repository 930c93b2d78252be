//! Synthetic corpora and a mock generator shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use lpr_core::rewrite::{DecodingParams, Generation, Generator, LEGAL_PASSAGE, PRECEDING_CONTEXT};
use lpr_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub struct Fixture {
    pub passages: Vec<(String, String)>,
    /// `(qid, context, target_id)`
    pub queries: Vec<(String, String, String)>,
}

impl Fixture {
    pub fn gold_text(&self) -> HashMap<String, String> {
        let text: HashMap<&str, &str> = self
            .passages
            .iter()
            .map(|(id, t)| (id.as_str(), t.as_str()))
            .collect();
        self.queries
            .iter()
            .map(|(_, ctx, target)| (ctx.clone(), text[target.as_str()].to_owned()))
            .collect()
    }

    /// Writes `passages.jsonl` and `queries.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> (PathBuf, PathBuf) {
        let p = dir.join("passages.jsonl");
        let q = dir.join("queries.jsonl");
        let mut out = String::new();
        for (id, text) in &self.passages {
            out.push_str(&json!({"id": id, "text": text}).to_string());
            out.push('\n');
        }
        fs::write(&p, out).unwrap();
        let mut out = String::new();
        for (qid, ctx, target) in &self.queries {
            out.push_str(&json!({"qid": qid, "context": ctx, "target_id": target}).to_string());
            out.push('\n');
        }
        fs::write(&q, out).unwrap();
        (p, q)
    }
}

const FILLER: [&str; 4] = ["the", "court", "held", "that"];

/// Duplicate-free passages over `w<i>` words; each query replaces every
/// content word of its target by a synonym `s<i>` with probability
/// `shift` and keeps the filler words.
pub fn synonym_fixture(n: usize, vocab: usize, shift: f64, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut passages = Vec::with_capacity(n);
    let mut queries = Vec::with_capacity(n);
    while passages.len() < n {
        let words: Vec<usize> = (0..10).map(|_| rng.random_range(0..vocab)).collect();
        let key = words.clone();
        if !seen.insert(key) {
            continue;
        }
        let i = passages.len();
        let text = FILLER
            .iter()
            .map(|f| f.to_string())
            .chain(words.iter().map(|w| format!("w{w}")))
            .collect::<Vec<_>>()
            .join(" ");
        let context = FILLER
            .iter()
            .map(|f| f.to_string())
            .chain(words.iter().map(|&w| {
                if rng.random_bool(shift) {
                    format!("s{w}")
                } else {
                    format!("w{w}")
                }
            }))
            .collect::<Vec<_>>()
            .join(" ");
        passages.push((format!("p{i}"), text));
        queries.push((format!("q{i}"), context, format!("p{i}")));
    }
    Fixture { passages, queries }
}

/// `n_queries` queries whose targets follow a Zipf law over `n_passages`
/// passages. Contexts copy a few words of the target plus noise.
pub fn zipf_fixture(n_passages: usize, n_queries: usize, exponent: f64, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let passages: Vec<(String, String)> = (0..n_passages)
        .map(|i| {
            let words: Vec<String> = (0..8)
                .map(|j| format!("t{}", (i * 7 + j * 13 + rng.random_range(0..3)) % 300))
                .collect();
            (format!("p{i}"), format!("passage {i} {}", words.join(" ")))
        })
        .collect();
    let weights: Vec<f64> = (1..=n_passages)
        .map(|r| 1.0 / (r as f64).powf(exponent))
        .collect();
    let total: f64 = weights.iter().sum();
    let queries = (0..n_queries)
        .map(|q| {
            let mut u = rng.random::<f64>() * total;
            let mut target = n_passages - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    target = i;
                    break;
                }
                u -= w;
            }
            let words: Vec<&str> = passages[target].1.split(' ').skip(2).collect();
            let keep = rng.random_range(1..=3);
            let mut ctx: Vec<String> = words[..keep].iter().map(|w| w.to_string()).collect();
            ctx.push(format!("t{}", rng.random_range(0..300)));
            (
                format!("q{q}"),
                format!("q{q} {}", ctx.join(" ")),
                format!("p{target}"),
            )
        })
        .collect();
    Fixture { passages, queries }
}

/// Queries are verbatim copies of their targets.
pub fn copy_fixture(n: usize) -> Fixture {
    let passages: Vec<(String, String)> = (0..n)
        .map(|i| {
            (
                format!("p{i}"),
                format!("section {i} alpha{i} beta{} gamma{}", i * 3, i * 5),
            )
        })
        .collect();
    let queries = passages
        .iter()
        .enumerate()
        .map(|(i, (id, text))| (format!("q{i}"), text.clone(), id.clone()))
        .collect();
    Fixture { passages, queries }
}

/// Context of the query part of a rendered prompt.
pub fn prompt_context(prompt: &str) -> Option<&str> {
    let start = prompt.rfind(PRECEDING_CONTEXT)? + PRECEDING_CONTEXT.len();
    let rest = &prompt[start..];
    let end = rest.find(LEGAL_PASSAGE).unwrap_or(rest.len());
    Some(rest[..end].trim())
}

/// Answers every prompt with the gold passage of its context.
pub struct GoldGenerator {
    pub by_context: HashMap<String, String>,
    pub calls: AtomicUsize,
}

impl GoldGenerator {
    pub fn new(by_context: HashMap<String, String>) -> Self {
        Self {
            by_context,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Generator for GoldGenerator {
    fn generate(&self, prompt: &str, _params: &DecodingParams) -> Result<Generation> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let ctx = prompt_context(prompt).ok_or_else(|| Error::Endpoint {
            status: None,
            attempts: 1,
            message: "prompt without context".into(),
        })?;
        let text = self
            .by_context
            .get(ctx)
            .cloned()
            .ok_or_else(|| Error::Endpoint {
                status: Some(404),
                attempts: 1,
                message: format!("no gold for {ctx:?}"),
            })?;
        Ok(Generation {
            text,
            attempts: 1,
            latency: Duration::ZERO,
        })
    }
}

/// Always fails, counting calls.
pub struct DeadGenerator(pub AtomicUsize);

impl Generator for DeadGenerator {
    fn generate(&self, _prompt: &str, _params: &DecodingParams) -> Result<Generation> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err(Error::Endpoint {
            status: None,
            attempts: 1,
            message: "connection refused".into(),
        })
    }
}

/// Textbook BM25 with Lucene idf, straight from token lists.
pub fn direct_bm25(docs: &[Vec<&str>], query: &[&str], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let df: HashMap<&str, f64> = query
        .iter()
        .map(|t| (*t, docs.iter().filter(|d| d.contains(t)).count() as f64))
        .collect();
    docs.iter()
        .map(|doc| {
            query
                .iter()
                .map(|term| {
                    let tf = doc.iter().filter(|w| *w == term).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let df = df[term];
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc.len() as f64 / avgdl))
                })
                .sum()
        })
        .collect()
}

/// Passages of 1 to 25 words `w<i>`, skewed so some terms are common.
pub fn random_corpus(rng: &mut ChaCha8Rng, n_docs: usize, vocab: usize) -> Vec<String> {
    (0..n_docs)
        .map(|_| {
            let len = rng.random_range(1..=25);
            (0..len)
                .map(|_| {
                    let r: f64 = rng.random();
                    format!("w{}", ((r * r) * vocab as f64) as usize)
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Reply for one chat-completions request: status and body.
pub type Responder = dyn Fn(&Value) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server on a loopback port that records request bodies.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Value>>>,
}

fn read_request(reader: &mut BufReader<TcpStream>) -> Option<Value> {
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    serde_json::from_slice(&body).ok()
}

pub fn serve(respond: Box<Responder>) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&requests);
    let respond: Arc<Responder> = Arc::from(respond);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let log = Arc::clone(&log);
            let respond = Arc::clone(&respond);
            thread::spawn(move || {
                let mut writer = stream.try_clone().unwrap();
                let mut reader = BufReader::new(stream);
                while let Some(req) = read_request(&mut reader) {
                    let (status, body) = respond(&req);
                    log.lock().unwrap().push(req);
                    let reply = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
                        body.len()
                    );
                    if writer.write_all(reply.as_bytes()).is_err() {
                        break;
                    }
                }
            });
        }
    });
    MockServer { url, requests }
}

pub fn completion(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

pub fn prompt_of(req: &Value) -> String {
    req["messages"][0]["content"]
        .as_str()
        .unwrap_or_default()
        .to_owned()
}
