//! Experiment engine for legal passage retrieval.
//!
//! The crate covers the whole offline pipeline: loading a passage pool and
//! query/target pairs ([`corpus`]), tokenization ([`textproc`]), BM25 and
//! dense retrieval ([`sparse`], [`dense`]), LLM query rewriting and expansion
//! ([`rewrite`]), evaluation ([`eval`]) and end-to-end orchestration
//! ([`pipeline`]).

mod binio;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod ranking;
pub mod rewrite;
pub mod sparse;
pub mod textproc;

pub use corpus::{FrequencyTable, Passage, PassageCollection, PassageHandle, QueryRecord};
pub use dense::EmbeddingStore;
pub use error::{Error, Result};
pub use eval::{MetricReport, RetrievalRun, TTestResult};
pub use pipeline::ExperimentConfig;
pub use ranking::{RankedList, ScoredPassage};
pub use rewrite::{DecodingParams, RewrittenQuery, Strategy};
pub use sparse::{Bm25Params, SparseIndex};
pub use textproc::{tokenize, TokenSeq, Tokenizer, TokenizerConfig};
