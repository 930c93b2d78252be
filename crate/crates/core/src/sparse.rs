//! BM25 inverted index and top-k lexical search.
//!
//! Scoring uses the Lucene-style idf `ln(1 + (N - df + 0.5) / (df + 0.5))`,
//! which is strictly positive, so every matching passage scores above zero.
//! Query terms are a bag: a term repeated in the query contributes once per
//! occurrence, and long rewritten queries get no length normalization.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::Cursor;
use crate::corpus::{PassageCollection, PassageHandle};
use crate::error::{Error, Result};
use crate::ranking::{select_top_k, RankedList, ScoredPassage};
use crate::textproc::{TokenSeq, Tokenizer, TokenizerConfig};

pub const SPIX_MAGIC: &[u8; 5] = b"SPIX1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let p = Self { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "k1 must be >= 0, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidArgument(format!(
                "b must lie in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub handle: PassageHandle,
    pub tf: u32,
}

/// Immutable BM25 index. Terms are kept in lexicographic order and each
/// posting list in ascending handle order.
#[derive(Debug, Clone)]
pub struct SparseIndex {
    terms: Vec<String>,
    postings: Vec<Vec<Posting>>,
    vocab: HashMap<String, usize>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    params: Bm25Params,
    tokenizer: TokenizerConfig,
}

pub fn build_index(
    collection: &PassageCollection,
    params: Bm25Params,
    tokenizer: TokenizerConfig,
) -> Result<SparseIndex> {
    params.validate()?;
    if collection.is_empty() {
        return Err(Error::EmptyInput("cannot index an empty collection"));
    }
    let tok = Tokenizer::new(tokenizer);
    let per_doc: Vec<(u32, Vec<(String, u32)>)> = collection
        .passages()
        .par_iter()
        .map(|p| {
            let tokens = tok.tokenize(&p.text);
            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in tokens.iter() {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            let counts = tf.into_iter().map(|(t, c)| (t.to_owned(), c)).collect();
            (tokens.len() as u32, counts)
        })
        .collect();

    let mut merged: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(per_doc.len());
    for (i, (len, counts)) in per_doc.into_iter().enumerate() {
        doc_lengths.push(len);
        for (term, tf) in counts {
            merged.entry(term).or_default().push(Posting {
                handle: PassageHandle(i as u32),
                tf,
            });
        }
    }
    let (terms, postings): (Vec<_>, Vec<_>) = merged.into_iter().unzip();
    Ok(SparseIndex::from_parts(
        terms,
        postings,
        doc_lengths,
        params,
        tokenizer,
    ))
}

impl SparseIndex {
    fn from_parts(
        terms: Vec<String>,
        postings: Vec<Vec<Posting>>,
        doc_lengths: Vec<u32>,
        params: Bm25Params,
        tokenizer: TokenizerConfig,
    ) -> Self {
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        let vocab = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            terms,
            postings,
            vocab,
            doc_lengths,
            avg_doc_length,
            params,
            tokenizer,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn tokenizer_config(&self) -> TokenizerConfig {
        self.tokenizer
    }

    /// A tokenizer configured like the one used at build time.
    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer::new(self.tokenizer)
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.vocab.get(term).map(|&i| self.postings[i].as_slice())
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).map_or(0, <[Posting]>::len)
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.n_docs() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = 1.0 - b + b * doc_len as f64 / self.avg_doc_length;
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// BM25 score of one passage. Unknown query terms contribute 0.
    pub fn score(&self, query: &TokenSeq, handle: PassageHandle) -> Result<f64> {
        let doc_len = *self
            .doc_lengths
            .get(handle.index())
            .ok_or(Error::UnknownHandle {
                handle: handle.0,
                len: self.n_docs(),
            })?;
        let mut total = 0.0;
        for term in query.iter() {
            let Some(list) = self.postings(term) else {
                continue;
            };
            if let Ok(pos) = list.binary_search_by_key(&handle, |p| p.handle) {
                total += self.term_weight(self.idf(list.len()), list[pos].tf, doc_len);
            }
        }
        Ok(total)
    }

    /// Top-`k` passages by score, ties broken by ascending handle. Passages
    /// sharing no term with the query are omitted.
    pub fn search(&self, qid: &str, query: &TokenSeq, k: usize) -> RankedList {
        let mut acc = vec![0.0f64; self.n_docs()];
        let mut touched = vec![false; self.n_docs()];
        let mut hits = Vec::new();
        for term in query.iter() {
            let Some(list) = self.postings(term) else {
                continue;
            };
            let idf = self.idf(list.len());
            for p in list {
                let h = p.handle.index();
                acc[h] += self.term_weight(idf, p.tf, self.doc_lengths[h]);
                if !touched[h] {
                    touched[h] = true;
                    hits.push(h);
                }
            }
        }
        let candidates = hits.into_iter().map(|h| ScoredPassage {
            handle: PassageHandle(h as u32),
            score: acc[h],
        });
        RankedList::new(qid, select_top_k(candidates, k))
    }

    pub fn search_text(&self, qid: &str, text: &str, k: usize) -> RankedList {
        self.search(qid, &self.tokenizer().tokenize(text), k)
    }

    /// Searches many `(qid, text)` pairs in parallel; output follows input order.
    pub fn search_batch<S: AsRef<str> + Sync>(
        &self,
        queries: &[(S, S)],
        k: usize,
    ) -> Vec<RankedList> {
        let tok = self.tokenizer();
        queries
            .par_iter()
            .map(|(qid, text)| self.search(qid.as_ref(), &tok.tokenize(text.as_ref()), k))
            .collect()
    }

    /// Serializes to the `SPIX1` layout:
    ///
    /// ```text
    /// "SPIX1"
    /// u64 n_docs, u64 n_terms, f64 k1, f64 b, u8 tokenizer flags
    /// n_docs x u32 doc length
    /// n_terms x { u64 byte len, term bytes, u64 n_postings, n x (u32 handle, u32 tf) }
    /// ```
    ///
    /// All integers and floats little-endian; terms in lexicographic order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SPIX_MAGIC);
        out.extend_from_slice(&(self.n_docs() as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_terms() as u64).to_le_bytes());
        out.extend_from_slice(&self.params.k1.to_le_bytes());
        out.extend_from_slice(&self.params.b.to_le_bytes());
        out.push(self.tokenizer.flags());
        for len in &self.doc_lengths {
            out.extend_from_slice(&len.to_le_bytes());
        }
        for (term, list) in self.terms.iter().zip(&self.postings) {
            out.extend_from_slice(&(term.len() as u64).to_le_bytes());
            out.extend_from_slice(term.as_bytes());
            out.extend_from_slice(&(list.len() as u64).to_le_bytes());
            for p in list {
                out.extend_from_slice(&p.handle.0.to_le_bytes());
                out.extend_from_slice(&p.tf.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new("SPIX1", bytes);
        cur.expect_magic(SPIX_MAGIC)?;
        let n_docs = cur.count(4)?;
        let n_terms = cur.count(16)?;
        let at = cur.offset();
        let params = Bm25Params {
            k1: cur.f64()?,
            b: cur.f64()?,
        };
        params
            .validate()
            .map_err(|e| cur.error(at, e.to_string()))?;
        let at = cur.offset();
        let tokenizer = TokenizerConfig::from_flags(cur.u8()?)
            .ok_or_else(|| cur.error(at, "unknown tokenizer flags"))?;
        if n_docs == 0 {
            return Err(cur.error(5, "index holds no documents"));
        }
        let mut doc_lengths = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            doc_lengths.push(cur.u32()?);
        }
        let mut tallied = vec![0u64; n_docs];
        let mut terms: Vec<String> = Vec::with_capacity(n_terms);
        let mut postings = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            let at = cur.offset();
            let len = cur.count(1)?;
            let term = std::str::from_utf8(cur.take(len)?)
                .map_err(|e| cur.error(at, format!("term is not UTF-8: {e}")))?
                .to_owned();
            if term.is_empty()
                || terms
                    .last()
                    .is_some_and(|prev| prev.as_str() >= term.as_str())
            {
                return Err(cur.error(at, format!("term {term:?} empty or out of order")));
            }
            let n = cur.count(8)?;
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                let at = cur.offset();
                let handle = cur.u32()?;
                let tf = cur.u32()?;
                let ordered = list.last().is_none_or(|p: &Posting| p.handle.0 < handle);
                if handle as usize >= n_docs || tf == 0 || !ordered {
                    return Err(cur.error(
                        at,
                        format!("bad posting (handle {handle}, tf {tf}) for {term:?}"),
                    ));
                }
                tallied[handle as usize] += tf as u64;
                list.push(Posting {
                    handle: PassageHandle(handle),
                    tf,
                });
            }
            terms.push(term);
            postings.push(list);
        }
        cur.finish()?;
        if let Some(h) = (0..n_docs).find(|&h| tallied[h] != doc_lengths[h] as u64) {
            return Err(cur.error(
                0,
                format!("doc length of handle {h} disagrees with its postings"),
            ));
        }
        Ok(Self::from_parts(
            terms,
            postings,
            doc_lengths,
            params,
            tokenizer,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
