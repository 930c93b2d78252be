//! Ranked retrieval output shared by the sparse and dense retrievers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::corpus::PassageHandle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub handle: PassageHandle,
    pub score: f64,
}

impl ScoredPassage {
    /// Ranking order: higher score first, then lower handle.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.handle.cmp(&other.handle))
    }
}

/// Per-query results, best first. Scores are non-increasing and handles distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub qid: String,
    pub entries: Vec<ScoredPassage>,
}

impl RankedList {
    pub fn new(qid: impl Into<String>, entries: Vec<ScoredPassage>) -> Self {
        Self {
            qid: qid.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 1-based rank of the first entry matching `pred`.
    pub fn rank_of(&self, mut pred: impl FnMut(PassageHandle) -> bool) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| pred(e.handle))
            .map(|i| i + 1)
    }

    pub fn handles(&self) -> impl Iterator<Item = PassageHandle> + '_ {
        self.entries.iter().map(|e| e.handle)
    }
}

// Max-heap keyed on "worst first" so the root is the entry to evict.
struct Worst(ScoredPassage);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Keeps the best `k` candidates under [`ScoredPassage::rank_cmp`], sorted.
pub(crate) fn select_top_k(
    candidates: impl IntoIterator<Item = ScoredPassage>,
    k: usize,
) -> Vec<ScoredPassage> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k + 1);
    for c in candidates {
        if heap.len() < k {
            heap.push(Worst(c));
        } else if let Some(top) = heap.peek() {
            if c.rank_cmp(&top.0) == Ordering::Less {
                heap.pop();
                heap.push(Worst(c));
            }
        }
    }
    let mut out: Vec<ScoredPassage> = heap.into_iter().map(|w| w.0).collect();
    out.sort_by(ScoredPassage::rank_cmp);
    out
}
