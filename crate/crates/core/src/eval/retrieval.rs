use std::collections::{BTreeMap, HashMap};

use crate::corpus::{PassageCollection, PassageHandle, QueryRecord};
use crate::error::{Error, Result};
use crate::ranking::RankedList;

use super::report::TrialMetrics;

/// Ranked lists of one system, keyed by qid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalRun {
    pub name: String,
    lists: BTreeMap<String, RankedList>,
}

impl RetrievalRun {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            lists: BTreeMap::new(),
        }
    }

    pub fn from_lists(name: impl Into<String>, lists: Vec<RankedList>) -> Result<Self> {
        let mut run = Self::new(name);
        for l in lists {
            run.insert(l)?;
        }
        Ok(run)
    }

    /// Adds a list after checking its ordering invariants.
    pub fn insert(&mut self, list: RankedList) -> Result<()> {
        let ordered = list.entries.windows(2).all(|w| w[0].score >= w[1].score);
        if !ordered {
            return Err(Error::InvalidArgument(format!(
                "ranked list for {} has increasing scores",
                list.qid
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(list.len());
        if !list.handles().all(|h| seen.insert(h)) {
            return Err(Error::InvalidArgument(format!(
                "ranked list for {} repeats a passage",
                list.qid
            )));
        }
        if self.lists.contains_key(&list.qid) {
            return Err(Error::DuplicateQuery(list.qid));
        }
        self.lists.insert(list.qid.clone(), list);
        Ok(())
    }

    pub fn get(&self, qid: &str) -> Option<&RankedList> {
        self.lists.get(qid)
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    /// Lists in ascending qid order.
    pub fn lists(&self) -> impl Iterator<Item = &RankedList> {
        self.lists.values()
    }

    /// The sub-run restricted to `qids` (ids absent from the run are ignored).
    pub fn restrict<'a>(&self, qids: impl IntoIterator<Item = &'a str>) -> RetrievalRun {
        let mut out = RetrievalRun::new(self.name.clone());
        for q in qids {
            if let Some(l) = self.lists.get(q) {
                out.lists.insert(q.to_owned(), l.clone());
            }
        }
        out
    }
}

/// Gold passage per query. By default only the exact gold handle counts as
/// relevant; [`with_text_match`](Self::with_text_match) also accepts passages
/// whose text is identical to the gold text.
#[derive(Debug, Clone, Default)]
pub struct Qrels {
    gold: HashMap<String, PassageHandle>,
    text_group: Option<Vec<u32>>,
}

impl Qrels {
    pub fn new(gold: HashMap<String, PassageHandle>) -> Self {
        Self {
            gold,
            text_group: None,
        }
    }

    pub fn from_queries<'a>(queries: impl IntoIterator<Item = &'a QueryRecord>) -> Self {
        Self::new(
            queries
                .into_iter()
                .map(|q| (q.qid.clone(), q.target))
                .collect(),
        )
    }

    pub fn with_text_match(mut self, collection: &PassageCollection) -> Self {
        let mut groups: HashMap<&str, u32> = HashMap::new();
        let ids = collection
            .passages()
            .iter()
            .map(|p| {
                let next = groups.len() as u32;
                *groups.entry(p.text.trim()).or_insert(next)
            })
            .collect();
        self.text_group = Some(ids);
        self
    }

    pub fn gold(&self, qid: &str) -> Option<PassageHandle> {
        self.gold.get(qid).copied()
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    fn matches(&self, gold: PassageHandle, h: PassageHandle) -> bool {
        match &self.text_group {
            None => h == gold,
            Some(groups) => h == gold || groups.get(h.index()) == groups.get(gold.index()),
        }
    }

    /// 1-based rank of the first relevant entry, if any.
    pub fn gold_rank(&self, list: &RankedList) -> Result<Option<usize>> {
        let gold = self
            .gold(&list.qid)
            .ok_or_else(|| Error::MissingGold(list.qid.clone()))?;
        Ok(list.rank_of(|h| self.matches(gold, h)))
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    Ok(())
}

fn per_query(
    run: &RetrievalRun,
    qrels: &Qrels,
    k: usize,
    gain: impl Fn(usize) -> f64,
) -> Result<Vec<(String, f64)>> {
    check_k(k)?;
    run.lists()
        .map(|l| {
            let value = match qrels.gold_rank(l)? {
                Some(r) if r <= k => gain(r),
                _ => 0.0,
            };
            Ok((l.qid.clone(), value))
        })
        .collect()
}

fn mean(values: &[(String, f64)]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("run has no queries"));
    }
    Ok(values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64)
}

/// Per-query hit indicator (1 if the gold passage is in the top `k`), in qid order.
pub fn per_query_recall(run: &RetrievalRun, qrels: &Qrels, k: usize) -> Result<Vec<(String, f64)>> {
    per_query(run, qrels, k, |_| 1.0)
}

/// Per-query nDCG with a single relevant passage: `1 / log2(rank + 1)`.
pub fn per_query_ndcg(run: &RetrievalRun, qrels: &Qrels, k: usize) -> Result<Vec<(String, f64)>> {
    per_query(run, qrels, k, |r| 1.0 / ((r + 1) as f64).log2())
}

pub fn recall_at_k(run: &RetrievalRun, qrels: &Qrels, k: usize) -> Result<f64> {
    mean(&per_query_recall(run, qrels, k)?)
}

pub fn ndcg_at_k(run: &RetrievalRun, qrels: &Qrels, k: usize) -> Result<f64> {
    mean(&per_query_ndcg(run, qrels, k)?)
}

/// Recall@1, Recall@10 and nDCG@10 of one run.
pub fn evaluate_run(run: &RetrievalRun, qrels: &Qrels) -> Result<TrialMetrics> {
    Ok(TrialMetrics {
        recall_at_1: recall_at_k(run, qrels, 1)?,
        recall_at_10: recall_at_k(run, qrels, 10)?,
        ndcg_at_10: ndcg_at_k(run, qrels, 10)?,
        n_queries: run.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;
    use crate::ranking::ScoredPassage;

    fn list(qid: &str, handles: &[u32]) -> RankedList {
        RankedList::new(
            qid,
            handles
                .iter()
                .enumerate()
                .map(|(i, &h)| ScoredPassage {
                    handle: PassageHandle(h),
                    score: 100.0 - i as f64,
                })
                .collect(),
        )
    }

    fn qrels(pairs: &[(&str, u32)]) -> Qrels {
        Qrels::new(
            pairs
                .iter()
                .map(|(q, h)| (q.to_string(), PassageHandle(*h)))
                .collect(),
        )
    }

    #[test]
    fn gold_first_everywhere() {
        let run =
            RetrievalRun::from_lists("r", vec![list("a", &[1, 2]), list("b", &[5, 1])]).unwrap();
        let q = qrels(&[("a", 1), ("b", 5)]);
        assert_eq!(recall_at_k(&run, &q, 1).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&run, &q, 10).unwrap(), 1.0);
    }

    #[test]
    fn gold_at_rank_two() {
        let run = RetrievalRun::from_lists("r", vec![list("a", &[0, 1, 2])]).unwrap();
        let q = qrels(&[("a", 1)]);
        assert_eq!(recall_at_k(&run, &q, 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&run, &q, 10).unwrap(), 1.0);
    }

    #[test]
    fn ndcg_rank_three_is_half() {
        let run = RetrievalRun::from_lists("r", vec![list("a", &[7, 8, 9, 4])]).unwrap();
        let q = qrels(&[("a", 9)]);
        assert_eq!(ndcg_at_k(&run, &q, 10).unwrap(), 0.5);
    }

    #[test]
    fn gold_outside_top_k_counts_zero() {
        let handles: Vec<u32> = (0..12).collect();
        let run = RetrievalRun::from_lists("r", vec![list("a", &handles)]).unwrap();
        let q = qrels(&[("a", 11)]);
        assert_eq!(ndcg_at_k(&run, &q, 10).unwrap(), 0.0);
        assert_eq!(recall_at_k(&run, &q, 10).unwrap(), 0.0);
    }

    #[test]
    fn missing_gold_names_qid() {
        let run = RetrievalRun::from_lists("r", vec![list("zz", &[0])]).unwrap();
        match recall_at_k(&run, &qrels(&[]), 1) {
            Err(Error::MissingGold(q)) => assert_eq!(q, "zz"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_run_and_zero_k() {
        let run = RetrievalRun::new("r");
        assert!(matches!(
            recall_at_k(&run, &qrels(&[]), 1),
            Err(Error::EmptyInput(_))
        ));
        let run = RetrievalRun::from_lists("r", vec![list("a", &[0])]).unwrap();
        assert!(recall_at_k(&run, &qrels(&[("a", 0)]), 0).is_err());
    }

    #[test]
    fn run_rejects_bad_lists() {
        let mut run = RetrievalRun::new("r");
        run.insert(list("a", &[0])).unwrap();
        assert!(matches!(
            run.insert(list("a", &[1])),
            Err(Error::DuplicateQuery(_))
        ));
        assert!(run.insert(list("b", &[1, 1])).is_err());
        let mut rising = list("c", &[0, 1]);
        rising.entries[1].score = 1000.0;
        assert!(run.insert(rising).is_err());
    }

    #[test]
    fn text_match_accepts_duplicates() {
        let c = PassageCollection::from_passages(vec![
            Passage::new("x", "same words"),
            Passage::new("y", "other"),
            Passage::new("z", "same words "),
        ])
        .unwrap();
        let run = RetrievalRun::from_lists("r", vec![list("a", &[2, 1])]).unwrap();
        let strict = qrels(&[("a", 0)]);
        assert_eq!(recall_at_k(&run, &strict, 1).unwrap(), 0.0);
        let loose = strict.with_text_match(&c);
        assert_eq!(recall_at_k(&run, &loose, 1).unwrap(), 1.0);
    }
}
