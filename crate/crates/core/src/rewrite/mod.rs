//! Query transformation strategies.
//!
//! * `identity` passes the context through untouched.
//! * `q2d` / `q2d_cot` append a few-shot pseudo-passage to the context.
//! * `gure` replaces the context with the generated passage.

mod cache;
mod client;
mod prompt;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cache::{cache_key, sha256_hex, CacheEntry, RewriteCache};
pub use client::{
    ClientStats, DecodingParams, EndpointConfig, Generation, Generator, OpenAiClient, RetryPolicy,
};
pub use prompt::{
    parse_cot_output, strip_scaffolding, CotOutput, FewShotExample, PromptTemplate, TemplateKind,
    FEW_SHOT_EXAMPLES, LEGAL_PASSAGE, OUTPUT_TAG, PRECEDING_CONTEXT,
};

use crate::corpus::Passage;
use crate::corpus::{PassageCollection, QueryRecord};
use crate::error::{Error, Result};
use crate::sparse::{build_index, Bm25Params, SparseIndex};
use crate::textproc::TokenizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Identity,
    Q2d,
    Q2dCot,
    Gure,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Identity,
        Strategy::Q2d,
        Strategy::Q2dCot,
        Strategy::Gure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Identity => "identity",
            Strategy::Q2d => "q2d",
            Strategy::Q2dCot => "q2d_cot",
            Strategy::Gure => "gure",
        }
    }

    fn template_kind(self) -> Option<TemplateKind> {
        match self {
            Strategy::Identity => None,
            Strategy::Q2d => Some(TemplateKind::Q2d),
            Strategy::Q2dCot => Some(TemplateKind::Q2dCot),
            Strategy::Gure => Some(TemplateKind::Gure),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s || (s == "q2d-cot" && *st == Strategy::Q2dCot))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewrittenQuery {
    pub qid: String,
    pub strategy: Strategy,
    /// Endpoint output, empty for `identity`.
    pub raw_generation: String,
    /// What the retriever receives.
    pub final_text: String,
    pub cache_hit: bool,
    /// Chain-of-thought output lacked an `<output>` tag.
    #[serde(default)]
    pub parse_warning: bool,
}

impl RewrittenQuery {
    /// The generated passage on its own: the pseudo-passage for expansion
    /// strategies, the rewrite for `gure`, and the context for `identity`.
    pub fn generated_passage<'a>(&'a self, context: &'a str) -> &'a str {
        match self.strategy {
            Strategy::Identity => context,
            Strategy::Gure => &self.final_text,
            Strategy::Q2d | Strategy::Q2dCot => self
                .final_text
                .strip_prefix(context)
                .map_or(self.final_text.as_str(), str::trim_start),
        }
    }
}

/// Builds the retriever query from a context and a raw generation.
/// Returns `(final_text, parse_warning)`.
pub fn compose_final(strategy: Strategy, context: &str, raw: &str) -> Result<(String, bool)> {
    let (passage, warning) = match strategy {
        Strategy::Identity => return Ok((context.to_owned(), false)),
        Strategy::Q2dCot => {
            let parsed = parse_cot_output(raw);
            (
                strip_scaffolding(&parsed.passage).to_owned(),
                parsed.missing_tag,
            )
        }
        Strategy::Q2d | Strategy::Gure => (strip_scaffolding(raw).to_owned(), false),
    };
    if passage.is_empty() {
        return Err(Error::EmptyCompletion);
    }
    Ok(match strategy {
        Strategy::Gure => (passage, warning),
        _ => (format!("{context} {passage}"), warning),
    })
}

/// Where few-shot examples come from.
#[derive(Debug, Clone)]
pub enum ExampleSource {
    /// The same examples for every query.
    Fixed(Vec<FewShotExample>),
    /// BM25 top-k training records per query, by context similarity.
    Retrieved(Arc<ExampleRetriever>),
}

#[derive(Debug)]
pub struct ExampleRetriever {
    index: SparseIndex,
    pool: Vec<FewShotExample>,
}

impl ExampleRetriever {
    /// Indexes the training contexts; each example pairs a context with its gold passage.
    pub fn new(train: &[QueryRecord], collection: &PassageCollection) -> Result<Self> {
        if train.len() < FEW_SHOT_EXAMPLES {
            return Err(Error::InvalidArgument(format!(
                "need at least {FEW_SHOT_EXAMPLES} training records to retrieve examples"
            )));
        }
        let contexts = PassageCollection::from_passages(
            train
                .iter()
                .enumerate()
                .map(|(i, q)| Passage::new(i.to_string(), q.context.clone()))
                .collect(),
        )?;
        let index = build_index(&contexts, Bm25Params::default(), TokenizerConfig::default())?;
        let pool = train
            .iter()
            .map(|q| {
                FewShotExample::new(q.context.clone(), collection.passage(q.target).text.clone())
            })
            .collect();
        Ok(Self { index, pool })
    }

    /// Top matches for `context`, padded in training order when fewer match.
    pub fn select(&self, context: &str) -> Vec<FewShotExample> {
        let hits = self.index.search_text("", context, FEW_SHOT_EXAMPLES);
        let mut chosen: Vec<usize> = hits.handles().map(|h| h.index()).collect();
        let mut next = 0;
        while chosen.len() < FEW_SHOT_EXAMPLES {
            if !chosen.contains(&next) {
                chosen.push(next);
            }
            next += 1;
        }
        chosen.into_iter().map(|i| self.pool[i].clone()).collect()
    }
}

/// Picks `FEW_SHOT_EXAMPLES` distinct training records at random (fixed by `seed`).
pub fn random_examples(
    train: &[QueryRecord],
    collection: &PassageCollection,
    seed: u64,
) -> Result<Vec<FewShotExample>> {
    if train.len() < FEW_SHOT_EXAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {FEW_SHOT_EXAMPLES} training records for few-shot examples, got {}",
            train.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, train.len(), FEW_SHOT_EXAMPLES).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .map(|i| {
            let q = &train[i];
            FewShotExample::new(q.context.clone(), collection.passage(q.target).text.clone())
        })
        .collect())
}

/// What to do when generation fails for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailurePolicy {
    #[default]
    Abort,
    /// Skip the query and report it.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteFailure {
    pub qid: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct RewriteBatch {
    pub rewritten: Vec<RewrittenQuery>,
    pub failures: Vec<RewriteFailure>,
    pub endpoint_calls: usize,
}

impl RewriteBatch {
    pub fn cache_hits(&self) -> usize {
        self.rewritten.iter().filter(|r| r.cache_hit).count()
    }
}

/// Rewrites queries with one strategy, consulting the cache before the endpoint.
pub struct Rewriter {
    strategy: Strategy,
    generator: Option<Arc<dyn Generator>>,
    params: DecodingParams,
    examples: Option<ExampleSource>,
    cache: Arc<RewriteCache>,
    max_in_flight: usize,
    calls: AtomicUsize,
}

impl fmt::Debug for Rewriter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rewriter")
            .field("strategy", &self.strategy)
            .field("params", &self.params)
            .field("max_in_flight", &self.max_in_flight)
            .finish_non_exhaustive()
    }
}

struct Prepared {
    key: String,
    context_hash: String,
    prompt: String,
}

impl Rewriter {
    pub fn new(strategy: Strategy, params: DecodingParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            strategy,
            generator: None,
            params,
            examples: None,
            cache: Arc::new(RewriteCache::in_memory()),
            max_in_flight: 8,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn with_generator(mut self, generator: Arc<dyn Generator>) -> Self {
        self.generator = Some(generator);
        self
    }

    pub fn with_examples(mut self, examples: ExampleSource) -> Self {
        self.examples = Some(examples);
        self
    }

    pub fn with_cache(mut self, cache: Arc<RewriteCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Endpoint calls made so far.
    pub fn endpoint_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn template_for(&self, context: &str) -> Result<PromptTemplate> {
        let kind = self
            .strategy
            .template_kind()
            .expect("identity has no template");
        if kind == TemplateKind::Gure {
            return Ok(PromptTemplate::gure());
        }
        let examples = match &self.examples {
            Some(ExampleSource::Fixed(ex)) => ex.clone(),
            Some(ExampleSource::Retrieved(r)) => r.select(context),
            None => {
                return Err(Error::Config(format!(
                    "{} needs few-shot examples",
                    self.strategy
                )))
            }
        };
        PromptTemplate::few_shot(kind, examples)
    }

    fn prepare(&self, context: &str) -> Result<Prepared> {
        let template = self.template_for(context)?;
        let prompt = template.render(context, None)?;
        let context_hash = sha256_hex(context.as_bytes());
        let key = cache_key(
            self.strategy.name(),
            &template.hash(),
            &context_hash,
            &self.params.cache_repr(),
        );
        Ok(Prepared {
            key,
            context_hash,
            prompt,
        })
    }

    fn identity(qid: &str, context: &str) -> RewrittenQuery {
        RewrittenQuery {
            qid: qid.to_owned(),
            strategy: Strategy::Identity,
            raw_generation: String::new(),
            final_text: context.to_owned(),
            cache_hit: false,
            parse_warning: false,
        }
    }

    fn rewritten_from(&self, qid: &str, entry: &CacheEntry, cache_hit: bool) -> RewrittenQuery {
        let parse_warning =
            self.strategy == Strategy::Q2dCot && parse_cot_output(&entry.raw).missing_tag;
        RewrittenQuery {
            qid: qid.to_owned(),
            strategy: self.strategy,
            raw_generation: entry.raw.clone(),
            final_text: entry.final_text.clone(),
            cache_hit,
            parse_warning,
        }
    }

    fn generate_entry(&self, context: &str, prep: &Prepared) -> Result<CacheEntry> {
        let generator = self.generator.as_ref().ok_or_else(|| {
            Error::Config(format!("{} needs a generation endpoint", self.strategy))
        })?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        let generation = generator.generate(&prep.prompt, &self.params)?;
        if generation.text.trim().is_empty() {
            return Err(Error::EmptyCompletion);
        }
        let (final_text, warning) = compose_final(self.strategy, context, &generation.text)?;
        if warning {
            log::warn!("chain-of-thought output has no {OUTPUT_TAG} tag; using whole generation");
        }
        self.cache.insert(
            prep.key.clone(),
            self.strategy.name(),
            prep.context_hash.clone(),
            generation.text,
            final_text,
        )
    }

    /// Rewrites a single context.
    pub fn rewrite(&self, qid: &str, context: &str) -> Result<RewrittenQuery> {
        if self.strategy == Strategy::Identity {
            return Ok(Self::identity(qid, context));
        }
        let prep = self.prepare(context)?;
        if let Some(entry) = self.cache.get(&prep.key) {
            return Ok(self.rewritten_from(qid, &entry, true));
        }
        let entry = self.generate_entry(context, &prep)?;
        Ok(self.rewritten_from(qid, &entry, false))
    }

    /// Rewrites many queries with at most `max_in_flight` concurrent
    /// endpoint calls. Queries sharing a cache key cost one call. Output
    /// follows input order.
    pub fn rewrite_all(
        &self,
        queries: &[QueryRecord],
        policy: FailurePolicy,
    ) -> Result<RewriteBatch> {
        let calls_before = self.endpoint_calls();
        if self.strategy == Strategy::Identity {
            return Ok(RewriteBatch {
                rewritten: queries
                    .iter()
                    .map(|q| Self::identity(&q.qid, &q.context))
                    .collect(),
                ..Default::default()
            });
        }
        let prepared: Vec<Prepared> = queries
            .iter()
            .map(|q| self.prepare(&q.context))
            .collect::<Result<_>>()?;

        // First query needing each uncached key does the work.
        let mut owner: HashMap<&str, usize> = HashMap::new();
        let mut jobs = Vec::new();
        for (i, p) in prepared.iter().enumerate() {
            if !self.cache.contains(&p.key) && !owner.contains_key(p.key.as_str()) {
                owner.insert(&p.key, i);
                jobs.push(i);
            }
        }

        let failures: Mutex<HashMap<usize, Error>> = Mutex::new(HashMap::new());
        let next = AtomicUsize::new(0);
        let abort = std::sync::atomic::AtomicBool::new(false);
        let workers = self.max_in_flight.min(jobs.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if abort.load(Ordering::Relaxed) {
                        break;
                    }
                    let j = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&i) = jobs.get(j) else { break };
                    if let Err(e) = self.generate_entry(&queries[i].context, &prepared[i]) {
                        if policy == FailurePolicy::Abort {
                            abort.store(true, Ordering::Relaxed);
                        }
                        failures.lock().unwrap().insert(i, e);
                    }
                });
            }
        });
        let mut failures = failures.into_inner().unwrap();

        if policy == FailurePolicy::Abort {
            if let Some(i) = failures.keys().min().copied() {
                log::error!("rewriting query {} failed", queries[i].qid);
                return Err(failures.remove(&i).unwrap());
            }
        }

        let mut batch = RewriteBatch::default();
        for (i, (q, p)) in queries.iter().zip(&prepared).enumerate() {
            match self.cache.get(&p.key) {
                Some(entry) => {
                    let hit = owner.get(p.key.as_str()) != Some(&i);
                    batch
                        .rewritten
                        .push(self.rewritten_from(&q.qid, &entry, hit));
                }
                None => {
                    let owner_idx = owner.get(p.key.as_str()).copied().unwrap_or(i);
                    let error = failures
                        .get(&owner_idx)
                        .map_or_else(|| "generation failed".to_string(), |e| e.to_string());
                    log::warn!("skipping query {}: {error}", q.qid);
                    batch.failures.push(RewriteFailure {
                        qid: q.qid.clone(),
                        error,
                    });
                }
            }
        }
        batch.endpoint_calls = self.endpoint_calls() - calls_before;
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PassageHandle;
    use serde_json::Map;

    /// Returns a fixed completion and counts calls.
    struct Fixed {
        reply: String,
        calls: AtomicUsize,
    }

    impl Fixed {
        fn new(reply: &str) -> Arc<Self> {
            Arc::new(Self {
                reply: reply.into(),
                calls: AtomicUsize::new(0),
            })
        }
    }

    impl Generator for Fixed {
        fn generate(&self, _prompt: &str, _params: &DecodingParams) -> Result<Generation> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(Generation {
                text: self.reply.clone(),
                attempts: 1,
                latency: Default::default(),
            })
        }
    }

    struct Failing;

    impl Generator for Failing {
        fn generate(&self, _prompt: &str, _params: &DecodingParams) -> Result<Generation> {
            Err(Error::Endpoint {
                status: Some(503),
                attempts: 3,
                message: "down".into(),
            })
        }
    }

    fn examples() -> Vec<FewShotExample> {
        (1..=3)
            .map(|i| FewShotExample::new(format!("ctx {i}"), format!("passage {i}")))
            .collect()
    }

    fn record(qid: &str, context: &str) -> QueryRecord {
        QueryRecord {
            qid: qid.into(),
            context: context.into(),
            target_id: "p".into(),
            target: PassageHandle(0),
            extra: Map::new(),
        }
    }

    #[test]
    fn identity_never_calls_endpoint() {
        let gen = Fixed::new("P");
        let r = Rewriter::new(Strategy::Identity, DecodingParams::default())
            .unwrap()
            .with_generator(gen.clone());
        let out = r.rewrite("q", "abc").unwrap();
        assert_eq!(out.final_text, "abc");
        assert!(out.raw_generation.is_empty());
        assert_eq!(gen.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn gure_replaces_context() {
        let gen = Fixed::new("P");
        let r = Rewriter::new(Strategy::Gure, DecodingParams::default())
            .unwrap()
            .with_generator(gen);
        let out = r.rewrite("q", "abc").unwrap();
        assert_eq!(out.final_text, "P");
        assert_eq!(out.raw_generation, "P");
    }

    #[test]
    fn q2d_appends_pseudo_passage() {
        let r = Rewriter::new(Strategy::Q2d, DecodingParams::default())
            .unwrap()
            .with_generator(Fixed::new("P"))
            .with_examples(ExampleSource::Fixed(examples()));
        let out = r.rewrite("q", "abc").unwrap();
        assert_eq!(out.final_text, "abc P");
        assert_eq!(out.generated_passage("abc"), "P");
    }

    #[test]
    fn q2d_cot_uses_tagged_output() {
        let r = Rewriter::new(Strategy::Q2dCot, DecodingParams::default())
            .unwrap()
            .with_generator(Fixed::new("Step 1: think.\n<output> the rule"))
            .with_examples(ExampleSource::Fixed(examples()));
        let out = r.rewrite("q", "abc").unwrap();
        assert_eq!(out.final_text, "abc the rule");
        assert!(!out.parse_warning);
    }

    #[test]
    fn few_shot_without_examples_is_config_error() {
        let r = Rewriter::new(Strategy::Q2d, DecodingParams::default())
            .unwrap()
            .with_generator(Fixed::new("P"));
        assert!(matches!(r.rewrite("q", "abc"), Err(Error::Config(_))));
    }

    #[test]
    fn identical_keys_cost_one_call() {
        let gen = Fixed::new("P");
        let r = Rewriter::new(Strategy::Gure, DecodingParams::default())
            .unwrap()
            .with_generator(gen.clone());
        let first = r.rewrite("q1", "same").unwrap();
        let second = r.rewrite("q2", "same").unwrap();
        assert!(!first.cache_hit && second.cache_hit);
        assert_eq!(gen.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn batch_dedupes_and_keeps_order() {
        let gen = Fixed::new("P");
        let r = Rewriter::new(Strategy::Gure, DecodingParams::default())
            .unwrap()
            .with_generator(gen.clone())
            .with_max_in_flight(4);
        let qs: Vec<_> = (0..20)
            .map(|i| record(&format!("q{i}"), &format!("ctx {}", i % 5)))
            .collect();
        let batch = r.rewrite_all(&qs, FailurePolicy::Abort).unwrap();
        assert_eq!(gen.calls.load(Ordering::SeqCst), 5);
        assert_eq!(batch.endpoint_calls, 5);
        assert_eq!(batch.cache_hits(), 15);
        let qids: Vec<_> = batch.rewritten.iter().map(|r| r.qid.as_str()).collect();
        let expected: Vec<_> = qs.iter().map(|q| q.qid.as_str()).collect();
        assert_eq!(qids, expected);

        let again = r.rewrite_all(&qs, FailurePolicy::Abort).unwrap();
        assert_eq!(again.cache_hits(), 20);
        assert_eq!(gen.calls.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn failure_policies() {
        let qs = vec![record("a", "x"), record("b", "y")];
        let r = Rewriter::new(Strategy::Gure, DecodingParams::default())
            .unwrap()
            .with_generator(Arc::new(Failing));
        assert!(r.rewrite_all(&qs, FailurePolicy::Abort).is_err());
        let batch = r.rewrite_all(&qs, FailurePolicy::Skip).unwrap();
        assert!(batch.rewritten.is_empty());
        assert_eq!(batch.failures.len(), 2);
        assert!(batch.failures[0].error.contains("503"));
    }

    #[test]
    fn echoed_scaffolding_is_removed() {
        let r = Rewriter::new(Strategy::Gure, DecodingParams::default())
            .unwrap()
            .with_generator(Fixed::new(
                "The rule.\n\n### Preceding Context : something else",
            ));
        let out = r.rewrite("q", "ctx").unwrap();
        assert_eq!(out.final_text, "The rule.");
    }

    #[test]
    fn blank_after_cleanup_is_empty_completion() {
        let r = Rewriter::new(Strategy::Gure, DecodingParams::default())
            .unwrap()
            .with_generator(Fixed::new("### Preceding Context : x"));
        assert!(matches!(r.rewrite("q", "ctx"), Err(Error::EmptyCompletion)));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn random_examples_are_seeded() {
        let c = PassageCollection::from_passages(vec![Passage::new("p", "gold")]).unwrap();
        let train: Vec<_> = (0..10)
            .map(|i| record(&i.to_string(), &format!("c{i}")))
            .collect();
        let a = random_examples(&train, &c, 3).unwrap();
        assert_eq!(a, random_examples(&train, &c, 3).unwrap());
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|e| e.passage == "gold"));
        assert!(random_examples(&train[..2], &c, 3).is_err());
    }

    #[test]
    fn retrieved_examples_prefer_overlap() {
        let c = PassageCollection::from_passages(vec![Passage::new("p", "gold")]).unwrap();
        let train = vec![
            record("0", "alpha beta"),
            record("1", "gamma delta"),
            record("2", "epsilon zeta"),
            record("3", "gamma eta"),
        ];
        let r = ExampleRetriever::new(&train, &c).unwrap();
        let picked = r.select("gamma");
        let ctxs: Vec<_> = picked.iter().map(|e| e.context.as_str()).collect();
        assert_eq!(ctxs.len(), 3);
        assert!(ctxs[..2].contains(&"gamma delta") && ctxs[..2].contains(&"gamma eta"));
        assert_eq!(ctxs[2], "alpha beta");
    }
}
