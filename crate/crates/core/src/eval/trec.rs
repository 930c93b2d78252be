//! TREC-style run files: `qid Q0 passage_id rank score run_name`.

use std::io::{BufRead, Write};

use crate::corpus::PassageCollection;
use crate::error::{Error, Result};
use crate::ranking::{RankedList, ScoredPassage};

use super::retrieval::RetrievalRun;

/// Writes `run` in ascending qid order. Scores use the shortest
/// representation that round-trips exactly.
pub fn write_run<W: Write>(
    mut out: W,
    run: &RetrievalRun,
    collection: &PassageCollection,
) -> Result<()> {
    if run.name.is_empty() || run.name.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!(
            "run name {:?} must be a single non-empty token",
            run.name
        )));
    }
    let mut buf = String::new();
    for list in run.lists() {
        for (i, e) in list.entries.iter().enumerate() {
            let p = collection.get(e.handle).ok_or(Error::UnknownHandle {
                handle: e.handle.0,
                len: collection.len(),
            })?;
            buf.clear();
            use std::fmt::Write as _;
            let _ = writeln!(
                buf,
                "{} Q0 {} {} {:?} {}",
                list.qid,
                p.id,
                i + 1,
                e.score,
                run.name
            );
            out.write_all(buf.as_bytes())
                .map_err(|source| Error::IoContext {
                    context: "writing run file".into(),
                    source,
                })?;
        }
    }
    Ok(())
}

/// Reads a run file. Entries are re-sorted by rank within each query.
pub fn read_run<R: BufRead>(input: R, collection: &PassageCollection) -> Result<RetrievalRun> {
    let mut name: Option<String> = None;
    let mut lists: std::collections::BTreeMap<String, Vec<(usize, ScoredPassage)>> =
        Default::default();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| Error::IoContext {
            context: "reading run file".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let malformed = |detail: String| Error::Malformed {
            line: lineno,
            detail,
        };
        if fields.len() != 6 {
            return Err(malformed(format!(
                "expected 6 fields, found {}",
                fields.len()
            )));
        }
        let handle = collection
            .handle(fields[2])
            .ok_or_else(|| Error::UnknownPassageId(fields[2].to_owned()))?;
        let rank: usize = fields[3]
            .parse()
            .map_err(|_| malformed(format!("bad rank {:?}", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| malformed(format!("bad score {:?}", fields[4])))?;
        match &name {
            None => name = Some(fields[5].to_owned()),
            Some(n) if n != fields[5] => {
                return Err(malformed(format!(
                    "run name {:?} differs from {:?}",
                    fields[5], n
                )))
            }
            _ => {}
        }
        lists
            .entry(fields[0].to_owned())
            .or_default()
            .push((rank, ScoredPassage { handle, score }));
    }
    let mut run = RetrievalRun::new(name.unwrap_or_default());
    for (qid, mut entries) in lists {
        entries.sort_by_key(|(rank, _)| *rank);
        run.insert(RankedList::new(
            qid,
            entries.into_iter().map(|(_, e)| e).collect(),
        ))?;
    }
    Ok(run)
}
