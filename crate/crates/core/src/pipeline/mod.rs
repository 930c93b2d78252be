//! End-to-end experiments: split, sample, rewrite, retrieve, score.
//!
//! Each stage is a public function so the CLI can run them one at a time;
//! [`run_experiment`] chains them and persists every artifact under the
//! configured output directory:
//!
//! ```text
//! runs/trial_<t>.run   TREC run file per trial
//! rewrites.jsonl       final query text per sampled query
//! report.json          MetricReport
//! report.txt           plain-text table
//! frequency.csv        stratified analysis (when thresholds are set)
//! manifest.json        config hash, seeds, cache statistics, file list
//! ```

mod config;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::{
    EvalSettings, ExampleMode, ExperimentConfig, InputSettings, Paths, RetrieverKind,
    RewriteSettings, SamplingConfig,
};

use crate::corpus::{
    citation_frequency, load_passages, load_queries, split_queries, Format, FrequencyTable,
    LoadedQueries, PassageCollection, QueryRecord,
};
use crate::dense::{load_embeddings, EmbeddingStore};
use crate::error::{Error, Result, StageExt};
use crate::eval::{
    bleu, evaluate_run, mean_words, rouge_l, sample_trials, stratify_by_frequency, trec,
    GenerationMetrics, MetricReport, Qrels, RetrievalRun, TrialMetrics,
};
use crate::ranking::RankedList;
use crate::rewrite::{
    random_examples, ExampleRetriever, ExampleSource, Generator, OpenAiClient, RewriteBatch,
    RewriteCache, RewriteFailure, Rewriter, RewrittenQuery, Strategy,
};
use crate::sparse::{build_index, SparseIndex};

/// Passages and queries as loaded from disk.
#[derive(Debug)]
pub struct Inputs {
    pub collection: PassageCollection,
    pub queries: LoadedQueries,
}

pub fn load_inputs(config: &ExperimentConfig) -> Result<Inputs> {
    let p = &config.paths;
    let collection = load_passages(
        &p.passages,
        Format::from_path(&p.passages),
        &config.input.passage_fields,
    )?;
    let queries = load_queries(
        &p.queries,
        Format::from_path(&p.queries),
        &config.input.query_fields,
        &collection,
        config.input.targets,
    )?;
    log::info!(
        "loaded {} passages and {} queries",
        collection.len(),
        queries.records.len()
    );
    Ok(Inputs {
        collection,
        queries,
    })
}

/// The train/test split, train-side citation counts and sampled trials.
#[derive(Debug, Clone)]
pub struct Design {
    pub train: Vec<QueryRecord>,
    pub test: Vec<QueryRecord>,
    pub frequency: FrequencyTable,
    pub trials: Vec<Vec<QueryRecord>>,
}

impl Design {
    pub fn new(config: &ExperimentConfig, queries: &[QueryRecord]) -> Result<Self> {
        let s = &config.sampling;
        let (train, test) = split_queries(queries, s.train_fraction, s.seed)?;
        let frequency = citation_frequency(&train);
        let trials = sample_trials(&test, s.n, s.trials, s.seed, s.overlap)?;
        Ok(Self {
            train,
            test,
            frequency,
            trials,
        })
    }

    /// Every sampled query once, in test-split order.
    pub fn sampled(&self) -> Vec<QueryRecord> {
        let wanted: HashSet<&str> = self
            .trials
            .iter()
            .flatten()
            .map(|q| q.qid.as_str())
            .collect();
        self.test
            .iter()
            .filter(|q| wanted.contains(q.qid.as_str()))
            .cloned()
            .collect()
    }
}

pub enum Retriever {
    Bm25(SparseIndex),
    /// Passage embeddings plus precomputed query vectors keyed by qid.
    Dense {
        passages: EmbeddingStore,
        queries: EmbeddingStore,
        rows: HashMap<String, usize>,
    },
}

impl std::fmt::Debug for Retriever {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Retriever::Bm25(ix) => write!(f, "Bm25({} docs)", ix.n_docs()),
            Retriever::Dense { passages, rows, .. } => {
                write!(
                    f,
                    "Dense({} passages, {} queries)",
                    passages.len(),
                    rows.len()
                )
            }
        }
    }
}

/// One qid per non-empty line, in embedding-row order.
pub fn read_query_ids(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let id = line.trim();
        if !id.is_empty() {
            ids.push(id.to_owned());
        }
    }
    Ok(ids)
}

impl Retriever {
    pub fn load(config: &ExperimentConfig, collection: &PassageCollection) -> Result<Self> {
        match config.retriever {
            RetrieverKind::Bm25 => {
                let index = match &config.paths.index {
                    Some(path) => {
                        let ix = SparseIndex::load(path)?;
                        if ix.n_docs() != collection.len() {
                            return Err(Error::Config(format!(
                                "index {} covers {} passages, collection has {}",
                                path.display(),
                                ix.n_docs(),
                                collection.len()
                            )));
                        }
                        if ix.params() != config.bm25 || ix.tokenizer_config() != config.tokenizer {
                            return Err(Error::Config(format!(
                                "index {} was built with different BM25 or tokenizer settings",
                                path.display()
                            )));
                        }
                        ix
                    }
                    None => build_index(collection, config.bm25, config.tokenizer)?,
                };
                Ok(Retriever::Bm25(index))
            }
            RetrieverKind::Dense => {
                let missing =
                    |name: &str| Error::Config(format!("dense retrieval needs paths.{name}"));
                let p = &config.paths;
                let passages = load_embeddings(
                    p.embeddings
                        .as_deref()
                        .ok_or_else(|| missing("embeddings"))?,
                )?;
                passages.check_collection(collection)?;
                let queries = load_embeddings(
                    p.query_embeddings
                        .as_deref()
                        .ok_or_else(|| missing("query_embeddings"))?,
                )?;
                let ids =
                    read_query_ids(p.query_ids.as_deref().ok_or_else(|| missing("query_ids"))?)?;
                if ids.len() != queries.len() {
                    return Err(Error::Config(format!(
                        "{} query ids for {} query embeddings",
                        ids.len(),
                        queries.len()
                    )));
                }
                if queries.dim() != passages.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: passages.dim(),
                        actual: queries.dim(),
                    });
                }
                let mut rows = HashMap::with_capacity(ids.len());
                for (i, id) in ids.into_iter().enumerate() {
                    if rows.insert(id.clone(), i).is_some() {
                        return Err(Error::DuplicateQuery(id));
                    }
                }
                if config.strategy != Strategy::Identity {
                    log::warn!(
                        "dense retrieval uses precomputed query vectors; they must encode the {} query text",
                        config.strategy
                    );
                }
                Ok(Retriever::Dense {
                    passages,
                    queries,
                    rows,
                })
            }
        }
    }

    /// Top-`k` lists for `(qid, query text)` pairs, in input order.
    pub fn retrieve(&self, queries: &[(String, String)], k: usize) -> Result<Vec<RankedList>> {
        match self {
            Retriever::Bm25(index) => Ok(index.search_batch(queries, k)),
            Retriever::Dense {
                passages,
                queries: vectors,
                rows,
            } => {
                let batch = queries
                    .iter()
                    .map(|(qid, _)| {
                        let row = rows.get(qid).ok_or_else(|| {
                            Error::Config(format!("no query embedding for {qid:?}"))
                        })?;
                        let v = vectors
                            .row(crate::corpus::PassageHandle(*row as u32))
                            .expect("row in range");
                        Ok((qid.as_str(), v.to_vec()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                passages.top_k_batch(&batch, k)
            }
        }
    }
}

/// Builds the rewriter for `config.strategy`. An explicit `generator`
/// replaces the configured endpoint.
pub fn build_rewriter(
    config: &ExperimentConfig,
    train: &[QueryRecord],
    collection: &PassageCollection,
    generator: Option<Arc<dyn Generator>>,
) -> Result<Rewriter> {
    let mut rewriter = Rewriter::new(config.strategy, config.decoding)?
        .with_max_in_flight(config.rewrite.max_in_flight);
    if config.strategy == Strategy::Identity {
        return Ok(rewriter);
    }
    let generator = match generator {
        Some(g) => g,
        None => {
            let endpoint = config.endpoint.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "strategy {} needs an [endpoint] section",
                    config.strategy
                ))
            })?;
            Arc::new(OpenAiClient::new(endpoint)?)
        }
    };
    rewriter = rewriter.with_generator(generator);
    if matches!(config.strategy, Strategy::Q2d | Strategy::Q2dCot) {
        let source = match config.rewrite.examples {
            ExampleMode::Retrieved => {
                ExampleSource::Retrieved(Arc::new(ExampleRetriever::new(train, collection)?))
            }
            ExampleMode::Random => {
                ExampleSource::Fixed(random_examples(train, collection, config.sampling.seed)?)
            }
        };
        rewriter = rewriter.with_examples(source);
    }
    if let Some(path) = &config.paths.cache {
        rewriter = rewriter.with_cache(Arc::new(RewriteCache::open(path)?));
    }
    Ok(rewriter)
}

/// One line of `rewrites.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRecord {
    pub qid: String,
    pub strategy: Strategy,
    pub final_text: String,
    pub raw_generation: String,
    #[serde(default)]
    pub parse_warning: bool,
}

impl From<&RewrittenQuery> for RewriteRecord {
    fn from(r: &RewrittenQuery) -> Self {
        Self {
            qid: r.qid.clone(),
            strategy: r.strategy,
            final_text: r.final_text.clone(),
            raw_generation: r.raw_generation.clone(),
            parse_warning: r.parse_warning,
        }
    }
}

pub fn write_rewrites(path: &Path, records: &[RewriteRecord]) -> Result<()> {
    let mut out = create(path)?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rewrites(path: &Path) -> Result<Vec<RewriteRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Retrieves every query of every trial. `final_text` maps qid to the
/// retriever input; queries without an entry are dropped from their trial.
pub fn retrieve_trials(
    retriever: &Retriever,
    trials: &[Vec<QueryRecord>],
    final_text: &HashMap<String, String>,
    k: usize,
    run_name: &str,
) -> Result<Vec<RetrievalRun>> {
    trials
        .iter()
        .map(|trial| {
            let batch: Vec<(String, String)> = trial
                .iter()
                .filter_map(|q| final_text.get(&q.qid).map(|t| (q.qid.clone(), t.clone())))
                .collect();
            RetrievalRun::from_lists(run_name, retriever.retrieve(&batch, k)?)
        })
        .collect()
}

pub fn trial_run_path(output_dir: &Path, trial: usize) -> PathBuf {
    output_dir
        .join("runs")
        .join(format!("trial_{}.run", trial + 1))
}

pub fn write_run_file(
    path: &Path,
    run: &RetrievalRun,
    collection: &PassageCollection,
) -> Result<()> {
    let mut out = create(path)?;
    trec::write_run(&mut out, run, collection)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_run_file(path: &Path, collection: &PassageCollection) -> Result<RetrievalRun> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    trec::read_run(BufReader::new(f), collection).map_err(|e| e.in_file(path))
}

pub fn qrels_for(
    config: &ExperimentConfig,
    queries: &[QueryRecord],
    collection: &PassageCollection,
) -> Qrels {
    let q = Qrels::from_queries(queries);
    if config.eval.text_match {
        q.with_text_match(collection)
    } else {
        q
    }
}

/// Corpus BLEU, mean ROUGE-L F1 and mean word count of the generated
/// passages against their gold passages, averaged over trials.
pub fn generation_metrics(
    trials: &[Vec<QueryRecord>],
    rewrites: &HashMap<String, RewrittenQuery>,
    collection: &PassageCollection,
) -> Result<GenerationMetrics> {
    let mut per_trial = Vec::with_capacity(trials.len());
    for trial in trials {
        let pairs: Vec<(&str, &str)> = trial
            .iter()
            .filter_map(|q| {
                rewrites.get(&q.qid).map(|r| {
                    (
                        r.generated_passage(&q.context),
                        collection.passage(q.target).text.as_str(),
                    )
                })
            })
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let (cands, refs): (Vec<&str>, Vec<&str>) = pairs.iter().copied().unzip();
        let rouge = cands
            .iter()
            .zip(&refs)
            .map(|(c, r)| rouge_l(c, r).f1)
            .sum::<f64>()
            / cands.len() as f64;
        per_trial.push(GenerationMetrics {
            bleu: bleu(&cands, &refs)?,
            rouge_l_f: rouge,
            mean_words: mean_words(&cands)?,
        });
    }
    if per_trial.is_empty() {
        return Err(Error::EmptyInput("no rewritten queries to score"));
    }
    let mean = |f: fn(&GenerationMetrics) -> f64| {
        per_trial.iter().map(f).sum::<f64>() / per_trial.len() as f64
    };
    Ok(GenerationMetrics {
        bleu: mean(|g| g.bleu),
        rouge_l_f: mean(|g| g.rouge_l_f),
        mean_words: mean(|g| g.mean_words),
    })
}

/// One row of the frequency-threshold analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "recall@1")]
    pub recall_at_1: f64,
    #[serde(rename = "recall@10")]
    pub recall_at_10: f64,
    #[serde(rename = "ndcg@10")]
    pub ndcg_at_10: f64,
    pub n_unique_targets: usize,
}

/// Re-scores each trial restricted to queries whose targets fall in the top
/// X% of train-side citation frequency. The pool is every sampled query;
/// metric means are taken over trials exactly as in the unstratified report.
pub fn analyze_frequency(
    trials: &[Vec<QueryRecord>],
    runs: &[RetrievalRun],
    frequency: &FrequencyTable,
    qrels: &Qrels,
    thresholds: &[f64],
) -> Result<Vec<FrequencyRow>> {
    if trials.len() != runs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} trials but {} runs",
            trials.len(),
            runs.len()
        )));
    }
    let mut seen = HashSet::new();
    let pool: Vec<QueryRecord> = trials
        .iter()
        .flatten()
        .filter(|q| seen.insert(q.qid.as_str()))
        .cloned()
        .collect();
    let mut rows = Vec::with_capacity(thresholds.len());
    for &x in thresholds {
        let kept = stratify_by_frequency(&pool, frequency, x)?;
        let kept_ids: HashSet<&str> = kept.iter().map(|q| q.qid.as_str()).collect();
        let n_unique_targets = kept.iter().map(|q| q.target).collect::<HashSet<_>>().len();
        let mut per_trial = Vec::new();
        for (trial, run) in trials.iter().zip(runs) {
            let sub = run.restrict(
                trial
                    .iter()
                    .map(|q| q.qid.as_str())
                    .filter(|id| kept_ids.contains(id)),
            );
            if !sub.is_empty() {
                per_trial.push(evaluate_run(&sub, qrels)?);
            }
        }
        if per_trial.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no evaluated queries at threshold {x}"
            )));
        }
        let summary = MetricReport::from_trials("", per_trial)?;
        rows.push(FrequencyRow {
            x,
            recall_at_1: summary.recall_at_1.mean,
            recall_at_10: summary.recall_at_10.mean,
            ndcg_at_10: summary.ndcg_at_10.mean,
            n_unique_targets,
        });
    }
    Ok(rows)
}

/// Writes the analysis as CSV after a `# config_hash=... seed=...` comment line.
pub fn write_frequency_csv(
    path: &Path,
    rows: &[FrequencyRow],
    config_hash: &str,
    seed: u64,
) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "# config_hash={config_hash} seed={seed}").map_err(|e| Error::io(path, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub lookups: usize,
    pub hits: usize,
    pub hit_rate: f64,
    pub endpoint_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub run_name: String,
    pub seed: u64,
    /// RNG stream used by each trial.
    pub trial_streams: Vec<u64>,
    pub n_per_trial: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub cache: CacheStats,
    pub skipped_queries: Vec<String>,
    pub rewrite_failures: Vec<RewriteFailureRecord>,
    pub files: Vec<String>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteFailureRecord {
    pub qid: String,
    pub error: String,
}

impl From<&RewriteFailure> for RewriteFailureRecord {
    fn from(f: &RewriteFailure) -> Self {
        Self {
            qid: f.qid.clone(),
            error: f.error.clone(),
        }
    }
}

/// Everything `run_experiment` produced.
#[derive(Debug)]
pub struct Experiment {
    pub report: MetricReport,
    pub runs: Vec<RetrievalRun>,
    pub frequency: Vec<FrequencyRow>,
    pub manifest: Manifest,
}

pub fn rewrite_queries(
    rewriter: &Rewriter,
    queries: &[QueryRecord],
    config: &ExperimentConfig,
) -> Result<RewriteBatch> {
    let batch = rewriter.rewrite_all(queries, config.rewrite.on_failure)?;
    log::info!(
        "rewrote {} queries ({} cache hits, {} endpoint calls, {} failures)",
        batch.rewritten.len(),
        batch.cache_hits(),
        batch.endpoint_calls,
        batch.failures.len()
    );
    Ok(batch)
}

/// Runs the whole protocol for one (retriever, strategy) pair.
/// `generator` overrides the configured endpoint, e.g. with a mock.
pub fn run_experiment(
    config: &ExperimentConfig,
    generator: Option<Arc<dyn Generator>>,
) -> Result<Experiment> {
    config.validate().stage("config")?;
    let config_hash = config.hash();
    let run_name = config.run_name();
    let seed = config.sampling.seed;
    let out_dir = &config.paths.output_dir;
    log::info!("experiment {run_name}");

    let inputs = load_inputs(config).stage("ingest")?;
    let collection = &inputs.collection;
    let design = Design::new(config, &inputs.queries.records).stage("sample")?;
    let retriever = Retriever::load(config, collection).stage("index")?;

    let sampled = design.sampled();
    let rewriter = build_rewriter(config, &design.train, collection, generator).stage("rewrite")?;
    let batch = rewrite_queries(&rewriter, &sampled, config).stage("rewrite")?;
    let rewrites: HashMap<String, RewrittenQuery> = batch
        .rewritten
        .iter()
        .map(|r| (r.qid.clone(), r.clone()))
        .collect();
    let mut files = Vec::new();
    let rewrites_path = out_dir.join("rewrites.jsonl");
    let records: Vec<RewriteRecord> = batch.rewritten.iter().map(RewriteRecord::from).collect();
    write_rewrites(&rewrites_path, &records).stage("write")?;
    files.push("rewrites.jsonl".to_owned());

    let final_text: HashMap<String, String> = rewrites
        .iter()
        .map(|(q, r)| (q.clone(), r.final_text.clone()))
        .collect();
    let qrels = qrels_for(config, &design.test, collection);
    let mut runs = Vec::with_capacity(design.trials.len());
    let mut per_trial = Vec::with_capacity(design.trials.len());
    for (t, trial) in design.trials.iter().enumerate() {
        let run = retrieve_trials(
            &retriever,
            std::slice::from_ref(trial),
            &final_text,
            config.eval.top_k,
            &run_name,
        )
        .stage("retrieve")?
        .remove(0);
        // Written as soon as it exists so a later failure leaves it behind.
        let path = trial_run_path(out_dir, t);
        write_run_file(&path, &run, collection).stage("write")?;
        files.push(format!("runs/trial_{}.run", t + 1));
        let metrics = evaluate_run(&run, &qrels).stage("evaluate")?;
        log::info!(
            "trial {}: R@1 {:.4}  R@10 {:.4}  nDCG@10 {:.4} over {} queries",
            t + 1,
            metrics.recall_at_1,
            metrics.recall_at_10,
            metrics.ndcg_at_10,
            metrics.n_queries
        );
        per_trial.push(metrics);
        runs.push(run);
    }

    let mut report = MetricReport::from_trials(config.display_label(), per_trial)
        .stage("evaluate")?
        .with_metadata("config_hash", config_hash.clone())
        .with_metadata("run_name", run_name.clone())
        .with_metadata("seed", seed.to_string())
        .with_metadata("significance", "paired t-test, two-tailed");
    if config.strategy != Strategy::Identity
        && config.eval.generation_metrics
        && !rewrites.is_empty()
    {
        report = report.with_generation(
            generation_metrics(&design.trials, &rewrites, collection).stage("evaluate")?,
        );
    }
    write_text(&out_dir.join("report.json"), &report.to_json()?).stage("write")?;
    write_text(
        &out_dir.join("report.txt"),
        &format!(
            "# config_hash={config_hash} seed={seed}\n{}",
            report.to_table()
        ),
    )
    .stage("write")?;
    files.push("report.json".to_owned());
    files.push("report.txt".to_owned());

    let frequency = if config.eval.thresholds.is_empty() {
        Vec::new()
    } else {
        let rows = analyze_frequency(
            &design.trials,
            &runs,
            &design.frequency,
            &qrels,
            &config.eval.thresholds,
        )
        .stage("stratify")?;
        write_frequency_csv(&out_dir.join("frequency.csv"), &rows, &config_hash, seed)
            .stage("write")?;
        files.push("frequency.csv".to_owned());
        rows
    };

    let lookups = batch.rewritten.len();
    let hits = batch.cache_hits();
    let manifest = Manifest {
        config_hash,
        run_name,
        seed,
        trial_streams: (0..design.trials.len() as u64).collect(),
        n_per_trial: config.sampling.n,
        n_train: design.train.len(),
        n_test: design.test.len(),
        cache: CacheStats {
            lookups,
            hits,
            hit_rate: if lookups == 0 {
                0.0
            } else {
                hits as f64 / lookups as f64
            },
            endpoint_calls: batch.endpoint_calls,
        },
        skipped_queries: inputs
            .queries
            .skipped
            .iter()
            .map(|s| s.qid.clone())
            .collect(),
        rewrite_failures: batch
            .failures
            .iter()
            .map(RewriteFailureRecord::from)
            .collect(),
        files,
        version: env!("CARGO_PKG_VERSION").to_owned(),
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    write_text(&out_dir.join("manifest.json"), &manifest_json).stage("write")?;

    Ok(Experiment {
        report,
        runs,
        frequency,
        manifest,
    })
}

/// Metrics of previously written run files against the configured queries.
pub fn evaluate_runs(runs: &[RetrievalRun], qrels: &Qrels, label: &str) -> Result<MetricReport> {
    let per_trial: Vec<TrialMetrics> = runs
        .iter()
        .map(|r| evaluate_run(r, qrels))
        .collect::<Result<_>>()?;
    MetricReport::from_trials(label, per_trial)
}
