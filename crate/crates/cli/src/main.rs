mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lpr_core::pipeline::{ExperimentConfig, RetrieverKind};
use lpr_core::{Error, Strategy};

#[derive(Parser, Debug)]
#[command(name = "lpr", version, about = "Legal passage retrieval experiments")]
struct Cli {
    /// Print reports as JSON instead of plain-text tables.
    #[arg(long, global = true)]
    json: bool,

    /// More log output (repeat for debug/trace). `LPR_LOG` overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate passages and queries and write them as canonical JSONL.
    Ingest(IngestArgs),
    /// Build a BM25 index file.
    Index(IndexArgs),
    /// Convert embeddings to an EMB1 file.
    EmbedImport(EmbedImportArgs),
    /// Rewrite the sampled queries of an experiment.
    Rewrite(StageArgs),
    /// Retrieve for every trial and write run files.
    Retrieve(RetrieveArgs),
    /// Score run files, optionally against a second system.
    Eval(EvalArgs),
    /// Frequency-threshold analysis of an experiment's run files.
    Stratify(StratifyArgs),
    /// Dataset statistics as JSON.
    Stats(StatsArgs),
    /// Full experiment: sample, rewrite, retrieve, evaluate, stratify.
    Run(StageArgs),
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Passages file (.jsonl or .csv).
    #[arg(long)]
    passages: PathBuf,
    /// Queries file (.jsonl or .csv).
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value = "id")]
    passage_id_field: String,
    #[arg(long, default_value = "text")]
    passage_text_field: String,
    #[arg(long, default_value = "qid")]
    qid_field: String,
    #[arg(long, default_value = "context")]
    context_field: String,
    #[arg(long, default_value = "target_id")]
    target_field: String,
    /// Skip queries whose target is unknown instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Directory for passages.jsonl and queries.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct IndexArgs {
    #[arg(long)]
    passages: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.5)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    /// Apply English stemming.
    #[arg(long)]
    stem: bool,
    /// Drop English stopwords.
    #[arg(long)]
    stopwords: bool,
}

#[derive(Args, Debug)]
struct EmbedImportArgs {
    /// EMB1 file or JSONL with `{"id": ..., "vector": [...]}` lines.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Reorder rows to passage handle order; every passage must appear once.
    #[arg(long, conflicts_with = "ids_out")]
    passages: Option<PathBuf>,
    /// Keep file order and write the row ids here (for query embeddings).
    #[arg(long)]
    ids_out: Option<PathBuf>,
}

/// Experiment settings: a TOML config, individual flags, or both (flags win).
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    passages: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    retriever: Option<RetrieverKind>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    seed: Option<u64>,
    /// Queries per trial.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Share of queries in the train split (frequency counts, few-shot pool).
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    query_embeddings: Option<PathBuf>,
    #[arg(long)]
    query_ids: Option<PathBuf>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Endpoint base URL, e.g. http://localhost:8000/v1.
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    text_match: bool,
}

#[derive(Args, Debug)]
struct StageArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Rewrites to retrieve with (default: <output_dir>/rewrites.jsonl).
    #[arg(long)]
    rewrites: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Run files of the system under test (one per trial).
    #[arg(long = "run", required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
    /// Run files of a baseline, paired trial by trial, for a paired t-test.
    #[arg(long = "compare", num_args = 1..)]
    compare: Vec<PathBuf>,
    /// Metric compared by the t-test.
    #[arg(long, default_value = "ndcg@10")]
    metric: String,
    #[arg(long)]
    text_match: bool,
    /// Row label in the report.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args, Debug)]
struct StratifyArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run files, one per trial (default: <output_dir>/runs/trial_<t>.run).
    #[arg(long = "run", num_args = 1..)]
    runs: Vec<PathBuf>,
    /// Comma-separated thresholds in percent.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    /// CSV destination (default: <output_dir>/frequency.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Fraction of most-cited passages whose citation share is reported.
    #[arg(long, default_value_t = 0.01)]
    fraction: f64,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let need = |v: &Option<PathBuf>, flag: &str| {
                    v.clone().ok_or_else(|| {
                        Error::Config(format!("--{flag} is required without --config"))
                    })
                };
                ExperimentConfig::new(
                    need(&self.passages, "passages")?,
                    need(&self.queries, "queries")?,
                    need(&self.output_dir, "output-dir")?,
                )
            }
        };
        if let Some(v) = &self.passages {
            c.paths.passages = v.clone();
        }
        if let Some(v) = &self.queries {
            c.paths.queries = v.clone();
        }
        if let Some(v) = &self.output_dir {
            c.paths.output_dir = v.clone();
        }
        for (src, dst) in [
            (&self.cache, &mut c.paths.cache),
            (&self.index, &mut c.paths.index),
            (&self.embeddings, &mut c.paths.embeddings),
            (&self.query_embeddings, &mut c.paths.query_embeddings),
            (&self.query_ids, &mut c.paths.query_ids),
        ] {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        if let Some(v) = self.retriever {
            c.retriever = v;
        }
        if let Some(v) = self.strategy {
            c.strategy = v;
        }
        if let Some(v) = self.seed {
            c.sampling.seed = v;
        }
        if let Some(v) = self.n {
            c.sampling.n = v;
        }
        if let Some(v) = self.trials {
            c.sampling.trials = v;
        }
        if let Some(v) = self.train_fraction {
            c.sampling.train_fraction = v;
        }
        if let Some(v) = self.k1 {
            c.bm25.k1 = v;
        }
        if let Some(v) = self.b {
            c.bm25.b = v;
        }
        if let Some(v) = self.temperature {
            c.decoding.temperature = v;
        }
        if let Some(v) = self.top_p {
            c.decoding.top_p = v;
        }
        if let Some(v) = self.max_tokens {
            c.decoding.max_tokens = v;
        }
        if self.text_match {
            c.eval.text_match = true;
        }
        if self.base_url.is_some() || self.model.is_some() {
            let endpoint = c
                .endpoint
                .get_or_insert_with(|| lpr_core::rewrite::EndpointConfig {
                    base_url: String::new(),
                    model: String::new(),
                    api_key_env: None,
                    timeout_secs: 120,
                    retry: Default::default(),
                });
            if let Some(v) = &self.base_url {
                endpoint.base_url = v.clone();
            }
            if let Some(v) = &self.model {
                endpoint.model = v.clone();
            }
            if endpoint.base_url.is_empty() || endpoint.model.is_empty() {
                return Err(Error::Config(
                    "an endpoint needs both a base URL and a model".into(),
                ));
            }
        }
        Ok(c)
    }
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Info,
            1 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("LPR_LOG")
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    let json = cli.json;
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&a.input, &a.out_dir, json),
        Command::Index(a) => commands::index(&a),
        Command::EmbedImport(a) => commands::embed_import(&a),
        Command::Rewrite(a) => a.config.resolve().and_then(|c| commands::rewrite(&c)),
        Command::Retrieve(a) => a
            .config
            .resolve()
            .and_then(|c| commands::retrieve(&c, a.rewrites.as_deref(), json)),
        Command::Eval(a) => commands::eval(&a, json),
        Command::Stratify(a) => a
            .config
            .resolve()
            .and_then(|c| commands::stratify(&c, &a, json)),
        Command::Stats(a) => commands::stats(&a.input, a.fraction),
        Command::Run(a) => a.config.resolve().and_then(|c| commands::run(&c, json)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit::code(&e))
        }
    }
}
