use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{PassageFields, QueryFields, TargetResolution};
use crate::error::{Error, Result};
use crate::eval::TrialOverlap;
use crate::rewrite::{sha256_hex, DecodingParams, EndpointConfig, FailurePolicy, Strategy};
use crate::sparse::Bm25Params;
use crate::textproc::TokenizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrieverKind {
    #[default]
    Bm25,
    Dense,
}

impl RetrieverKind {
    pub fn name(self) -> &'static str {
        match self {
            RetrieverKind::Bm25 => "bm25",
            RetrieverKind::Dense => "dense",
        }
    }
}

impl std::str::FromStr for RetrieverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm25" => Ok(RetrieverKind::Bm25),
            "dense" => Ok(RetrieverKind::Dense),
            _ => Err(Error::InvalidArgument(format!("unknown retriever {s:?}"))),
        }
    }
}

/// How few-shot examples are chosen for the expansion strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleMode {
    /// BM25 top-3 training contexts per query.
    #[default]
    Retrieved,
    /// Three random training records shared by all queries.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub passages: PathBuf,
    pub queries: PathBuf,
    pub output_dir: PathBuf,
    /// Prebuilt SPIX1 index; built in memory when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    /// EMB1 passage embeddings in handle order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// EMB1 query embeddings, one row per line of `query_ids`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_ids: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub overlap: TrialOverlap,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            trials: 3,
            seed: 42,
            train_fraction: 0.9,
            overlap: TrialOverlap::Independent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewriteSettings {
    pub examples: ExampleMode,
    pub max_in_flight: usize,
    pub on_failure: FailurePolicy,
}

impl Default for RewriteSettings {
    fn default() -> Self {
        Self {
            examples: ExampleMode::Retrieved,
            max_in_flight: 8,
            on_failure: FailurePolicy::Abort,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub top_k: usize,
    /// Count passages with the gold text as hits, not only the gold id.
    pub text_match: bool,
    /// Frequency thresholds in percent for the stratified analysis.
    pub thresholds: Vec<f64>,
    /// Attach BLEU / ROUGE-L / word counts of generated passages.
    pub generation_metrics: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            top_k: 10,
            text_match: false,
            thresholds: vec![10.0, 30.0, 50.0, 70.0, 90.0, 100.0],
            generation_metrics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSettings {
    pub passage_fields: PassageFields,
    pub query_fields: QueryFields,
    pub targets: TargetResolution,
}

/// Everything one experiment depends on. Loaded from TOML; relative paths
/// resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: Paths,
    #[serde(default)]
    pub retriever: RetrieverKind,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointConfig>,
    #[serde(default)]
    pub decoding: DecodingParams,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    #[serde(default)]
    pub rewrite: RewriteSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub input: InputSettings,
}

fn default_strategy() -> Strategy {
    Strategy::Identity
}

impl ExperimentConfig {
    /// A config with default settings for the given inputs.
    pub fn new(
        passages: impl Into<PathBuf>,
        queries: impl Into<PathBuf>,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            paths: Paths {
                passages: passages.into(),
                queries: queries.into(),
                output_dir: output_dir.into(),
                index: None,
                embeddings: None,
                query_embeddings: None,
                query_ids: None,
                cache: None,
            },
            retriever: RetrieverKind::default(),
            strategy: default_strategy(),
            endpoint: None,
            decoding: DecodingParams::default(),
            sampling: SamplingConfig::default(),
            bm25: Bm25Params::default(),
            tokenizer: TokenizerConfig::default(),
            rewrite: RewriteSettings::default(),
            eval: EvalSettings::default(),
            input: InputSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.resolve_relative(base);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.passages);
        fix(&mut paths.queries);
        fix(&mut paths.output_dir);
        for p in [
            &mut paths.index,
            &mut paths.embeddings,
            &mut paths.query_embeddings,
            &mut paths.query_ids,
            &mut paths.cache,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    /// Checks settings and that every input path exists.
    pub fn validate(&self) -> Result<()> {
        self.decoding.validate()?;
        self.bm25.validate()?;
        let s = &self.sampling;
        if s.n == 0 || s.trials == 0 {
            return Err(Error::Config(
                "sampling.n and sampling.trials must be >= 1".into(),
            ));
        }
        if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "sampling.train_fraction must lie in (0, 1), got {}",
                s.train_fraction
            )));
        }
        if self.eval.top_k == 0 {
            return Err(Error::Config("eval.top_k must be >= 1".into()));
        }
        if let Some(x) = self
            .eval
            .thresholds
            .iter()
            .find(|x| !(**x > 0.0 && **x <= 100.0))
        {
            return Err(Error::Config(format!("threshold {x} outside (0, 100]")));
        }
        let mut required = vec![
            ("passages", &self.paths.passages),
            ("queries", &self.paths.queries),
        ];
        if self.retriever == RetrieverKind::Dense {
            for (name, p) in [
                ("embeddings", &self.paths.embeddings),
                ("query_embeddings", &self.paths.query_embeddings),
                ("query_ids", &self.paths.query_ids),
            ] {
                match p {
                    Some(p) => required.push((name, p)),
                    None => {
                        return Err(Error::Config(format!("dense retrieval needs paths.{name}")))
                    }
                }
            }
        }
        if let Some(p) = &self.paths.index {
            required.push(("index", p));
        }
        for (name, p) in required {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "paths.{name} does not exist: {}",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    /// Unique, filesystem-safe label naming retriever, strategy, seed and config.
    pub fn run_name(&self) -> String {
        format!(
            "{}_{}_s{}_{}",
            self.retriever.name(),
            self.strategy.name(),
            self.sampling.seed,
            &self.hash()[..12]
        )
    }

    /// Row label in the style of the paper's result tables.
    pub fn display_label(&self) -> String {
        let retriever = match self.retriever {
            RetrieverKind::Bm25 => "BM25",
            RetrieverKind::Dense => "Dense",
        };
        match self.strategy {
            Strategy::Identity => retriever.to_owned(),
            Strategy::Q2d => format!("{retriever} + Q2D"),
            Strategy::Q2dCot => format!("{retriever} + Q2D-CoT"),
            Strategy::Gure => format!("{retriever} + GuRE"),
        }
    }
}
