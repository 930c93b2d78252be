//! Exact cosine top-k over externally produced passage embeddings.
//!
//! `EMB1` layout (all little-endian):
//!
//! ```text
//! "EMB1" | u32 n | u32 dim | u8 normalized | n*dim f32, row-major
//! ```
//!
//! Row `k` belongs to passage handle `k`. Rows are L2-normalized on load
//! (unless flagged), so cosine similarity is a plain dot product.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::binio::Cursor;
use crate::corpus::{PassageCollection, PassageHandle};
use crate::error::{Error, Result};
use crate::ranking::{select_top_k, RankedList, ScoredPassage};

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: u64 = 4 + 4 + 4 + 1;
const UNIT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    n: usize,
    data: Vec<f32>,
}

fn norm(row: &[f32]) -> f64 {
    row.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

impl EmbeddingStore {
    /// Builds a store from a row-major matrix, normalizing every row.
    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        Self::build(dim, data, false, 0)
    }

    fn build(dim: usize, mut data: Vec<f32>, normalized: bool, data_offset: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dim must be > 0".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.len() % dim,
            });
        }
        let n = data.len() / dim;
        let row_offset = |row: usize| data_offset + (row * dim * 4) as u64;
        for (row, chunk) in data.chunks_mut(dim).enumerate() {
            if let Some(col) = chunk.iter().position(|x| !x.is_finite()) {
                return Err(Error::BinaryFormat {
                    kind: "EMB1",
                    offset: row_offset(row) + (col * 4) as u64,
                    detail: format!("non-finite value in row {row}"),
                });
            }
            let len = norm(chunk);
            if normalized {
                if (len - 1.0).abs() > UNIT_TOLERANCE {
                    return Err(Error::BinaryFormat {
                        kind: "EMB1",
                        offset: row_offset(row),
                        detail: format!("row {row} flagged normalized but has norm {len}"),
                    });
                }
            } else {
                if len == 0.0 {
                    return Err(Error::BinaryFormat {
                        kind: "EMB1",
                        offset: row_offset(row),
                        detail: format!("row {row} is the zero vector"),
                    });
                }
                for x in chunk.iter_mut() {
                    *x = (*x as f64 / len) as f32;
                }
            }
        }
        Ok(Self { dim, n, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, handle: PassageHandle) -> Option<&[f32]> {
        (handle.index() < self.n)
            .then(|| &self.data[handle.index() * self.dim..(handle.index() + 1) * self.dim])
    }

    /// Checks that there is exactly one row per passage.
    pub fn check_collection(&self, collection: &PassageCollection) -> Result<()> {
        if self.n != collection.len() {
            return Err(Error::InvalidArgument(format!(
                "embedding file has {} rows but the collection has {} passages",
                self.n,
                collection.len()
            )));
        }
        Ok(())
    }

    /// Exact top-`k` by cosine similarity, ties broken by ascending handle.
    pub fn top_k(&self, qid: &str, query: &[f32], k: usize) -> Result<RankedList> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        if query.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "query vector has non-finite values".into(),
            ));
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(Error::ZeroVector);
        }
        let candidates = self
            .data
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| ScoredPassage {
                handle: PassageHandle(i as u32),
                score: dot(row, query) / qn,
            });
        Ok(RankedList::new(qid, select_top_k(candidates, k)))
    }

    /// Parallel [`top_k`](Self::top_k) over `(qid, vector)` pairs, in input order.
    pub fn top_k_batch<S: AsRef<str> + Sync>(
        &self,
        queries: &[(S, Vec<f32>)],
        k: usize,
    ) -> Result<Vec<RankedList>> {
        queries
            .par_iter()
            .map(|(qid, v)| self.top_k(qid.as_ref(), v, k))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_embeddings(self.dim, &self.data, true)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new("EMB1", bytes);
        cur.expect_magic(EMB_MAGIC)?;
        let n = cur.u32()? as usize;
        let dim = cur.u32()? as usize;
        let flag_at = cur.offset();
        let normalized = match cur.u8()? {
            0 => false,
            1 => true,
            other => {
                return Err(cur.error(
                    flag_at,
                    format!("normalized flag must be 0 or 1, got {other}"),
                ))
            }
        };
        if dim == 0 {
            return Err(cur.error(8, "dim must be > 0"));
        }
        let expected = n as u64 * dim as u64 * 4;
        let actual = cur.remaining() as u64;
        if actual < expected {
            return Err(cur.error(
                HEADER_LEN + actual - actual % 4,
                format!(
                    "truncated: header declares {n}x{dim} floats ({expected} bytes), found {actual}"
                ),
            ));
        }
        if actual > expected {
            return Err(cur.error(
                HEADER_LEN + expected,
                format!(
                    "{} bytes beyond the declared {n}x{dim} matrix",
                    actual - expected
                ),
            ));
        }
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            data.push(cur.f32()?);
        }
        Self::build(dim, data, normalized, HEADER_LEN)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Encodes a raw row-major matrix as `EMB1` without touching the values.
pub fn encode_embeddings(dim: usize, data: &[f32], normalized: bool) -> Vec<u8> {
    let n = data.len().checked_div(dim).unwrap_or(0);
    let mut out = Vec::with_capacity(HEADER_LEN as usize + data.len() * 4);
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.push(u8::from(normalized));
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}
