//! Passage pool and query/target pairs.
//!
//! JSONL is the canonical on-disk form: one object per line, `id`/`text` for
//! passages and `qid`/`context`/`target_id` for queries. A CSV adapter with
//! configurable column names covers other distributions. Fields beyond the
//! required ones are carried through untouched in `extra`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Dense integer handle of a passage: its position in the collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PassageHandle(pub u32);

impl PassageHandle {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PassageHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Passage {
    pub id: String,
    pub text: String,
    /// Pass-through metadata (court, date, ...). Never interpreted.
    pub extra: Map<String, Value>,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            extra: Map::new(),
        }
    }
}

/// The candidate pool. Immutable once built; handle `k` is the `k`-th passage.
#[derive(Debug, Clone, Default)]
pub struct PassageCollection {
    passages: Vec<Passage>,
    id_index: HashMap<String, PassageHandle>,
}

impl PassageCollection {
    /// Builds a collection, rejecting duplicate ids and blank texts.
    /// Errors report 1-based record positions.
    pub fn from_passages(passages: Vec<Passage>) -> Result<Self> {
        if passages.len() > u32::MAX as usize {
            return Err(Error::InvalidArgument(
                "collection exceeds u32 handle space".into(),
            ));
        }
        let mut id_index = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            if p.text.trim().is_empty() {
                return Err(Error::EmptyText {
                    what: "passage text",
                    line: i + 1,
                });
            }
            if id_index
                .insert(p.id.clone(), PassageHandle(i as u32))
                .is_some()
            {
                return Err(Error::DuplicateId {
                    id: p.id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Self { passages, id_index })
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn handle(&self, id: &str) -> Option<PassageHandle> {
        self.id_index.get(id).copied()
    }

    pub fn get(&self, handle: PassageHandle) -> Option<&Passage> {
        self.passages.get(handle.index())
    }

    /// Panics on an out-of-range handle.
    pub fn passage(&self, handle: PassageHandle) -> &Passage {
        &self.passages[handle.index()]
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (PassageHandle, &Passage)> {
        self.passages
            .iter()
            .enumerate()
            .map(|(i, p)| (PassageHandle(i as u32), p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassageFields {
    pub id: String,
    pub text: String,
}

impl Default for PassageFields {
    fn default() -> Self {
        Self {
            id: "id".into(),
            text: "text".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFields {
    pub qid: String,
    pub context: String,
    pub target_id: String,
}

impl Default for QueryFields {
    fn default() -> Self {
        Self {
            qid: "qid".into(),
            context: "context".into(),
            target_id: "target_id".into(),
        }
    }
}

/// One decoded input record with its 1-based source line.
struct RawRecord {
    line: usize,
    fields: Map<String, Value>,
}

impl RawRecord {
    /// Removes a required field. Numbers are accepted as ids and stringified.
    fn take(&mut self, name: &str) -> Result<String> {
        match self.fields.remove(name) {
            Some(Value::String(s)) => Ok(s),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(other) => Err(Error::Malformed {
                line: self.line,
                detail: format!("field {name:?} must be a string, got {other}"),
            }),
            None => Err(Error::MissingField {
                field: name.to_string(),
                line: self.line,
            }),
        }
    }
}

fn read_jsonl_records<R: Read>(reader: R) -> Result<Vec<RawRecord>> {
    let mut reader = BufReader::new(reader);
    let mut buf = Vec::new();
    let mut records = Vec::new();
    let mut line = 0usize;
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|source| Error::IoContext {
                context: format!("reading line {}", line + 1),
                source,
            })?;
        if n == 0 {
            break;
        }
        line += 1;
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        if buf.last() == Some(&b'\r') {
            buf.pop();
        }
        let text = std::str::from_utf8(&buf).map_err(|e| Error::Encoding {
            line,
            detail: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let fields: Map<String, Value> =
            serde_json::from_str(text).map_err(|e| Error::Malformed {
                line,
                detail: e.to_string(),
            })?;
        records.push(RawRecord { line, fields });
    }
    Ok(records)
}

fn read_csv_records<R: Read>(reader: R) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.byte_headers()?.clone();
    let headers: Vec<String> = headers
        .iter()
        .map(|h| {
            std::str::from_utf8(h)
                .map(str::to_owned)
                .map_err(|e| Error::Encoding {
                    line: 1,
                    detail: e.to_string(),
                })
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    for row in rdr.byte_records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut fields = Map::new();
        for (name, cell) in headers.iter().zip(row.iter()) {
            let cell = std::str::from_utf8(cell).map_err(|e| Error::Encoding {
                line,
                detail: e.to_string(),
            })?;
            fields.insert(name.clone(), Value::String(cell.to_owned()));
        }
        records.push(RawRecord { line, fields });
    }
    Ok(records)
}

fn read_records<R: Read>(reader: R, format: Format) -> Result<Vec<RawRecord>> {
    match format {
        Format::Jsonl => read_jsonl_records(reader),
        Format::Csv => read_csv_records(reader),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Parses passages from any reader. Insertion order becomes handle order.
pub fn read_passages<R: Read>(
    reader: R,
    format: Format,
    fields: &PassageFields,
) -> Result<PassageCollection> {
    let records = read_records(reader, format)?;
    let mut passages = Vec::with_capacity(records.len());
    let mut seen: HashMap<String, usize> = HashMap::with_capacity(records.len());
    for mut rec in records {
        let id = rec.take(&fields.id)?;
        let text = rec.take(&fields.text)?;
        if text.trim().is_empty() {
            return Err(Error::EmptyText {
                what: "passage text",
                line: rec.line,
            });
        }
        if seen.insert(id.clone(), rec.line).is_some() {
            return Err(Error::DuplicateId { id, line: rec.line });
        }
        passages.push(Passage {
            id,
            text,
            extra: rec.fields,
        });
    }
    PassageCollection::from_passages(passages)
}

pub fn load_passages(
    path: &Path,
    format: Format,
    fields: &PassageFields,
) -> Result<PassageCollection> {
    read_passages(open(path)?, format, fields).map_err(|e| e.in_file(path))
}

/// Writes passages as canonical JSONL (`id`, `text`, then pass-through fields).
pub fn write_passages_jsonl<W: Write>(mut out: W, collection: &PassageCollection) -> Result<()> {
    for p in collection.passages() {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::String(p.id.clone()));
        obj.insert("text".into(), Value::String(p.text.clone()));
        for (k, v) in &p.extra {
            obj.entry(k.clone()).or_insert_with(|| v.clone());
        }
        serde_json::to_writer(&mut out, &obj)?;
        out.write_all(b"\n").map_err(|source| Error::IoContext {
            context: "writing passages".into(),
            source,
        })?;
    }
    Ok(())
}

/// An ongoing context paired with its gold passage.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub qid: String,
    pub context: String,
    pub target_id: String,
    pub target: PassageHandle,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetResolution {
    /// Any unresolvable target fails the load.
    #[default]
    Strict,
    /// Unresolvable targets are skipped and reported.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedQuery {
    pub qid: String,
    pub target_id: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedQueries {
    pub records: Vec<QueryRecord>,
    pub skipped: Vec<SkippedQuery>,
}

pub fn read_queries<R: Read>(
    reader: R,
    format: Format,
    fields: &QueryFields,
    collection: &PassageCollection,
    resolution: TargetResolution,
) -> Result<LoadedQueries> {
    let raw = read_records(reader, format)?;
    let mut out = LoadedQueries::default();
    let mut seen = HashMap::with_capacity(raw.len());
    for mut rec in raw {
        let qid = rec.take(&fields.qid)?;
        let context = rec.take(&fields.context)?;
        let target_id = rec.take(&fields.target_id)?;
        if context.trim().is_empty() {
            return Err(Error::EmptyText {
                what: "query context",
                line: rec.line,
            });
        }
        if seen.insert(qid.clone(), rec.line).is_some() {
            return Err(Error::DuplicateQuery(qid));
        }
        match collection.handle(&target_id) {
            Some(target) => out.records.push(QueryRecord {
                qid,
                context,
                target_id,
                target,
                extra: rec.fields,
            }),
            None => out.skipped.push(SkippedQuery {
                qid,
                target_id,
                line: rec.line,
            }),
        }
    }
    if !out.skipped.is_empty() {
        match resolution {
            TargetResolution::Strict => {
                return Err(Error::UnresolvedTargets {
                    qids: out.skipped.iter().map(|s| s.qid.clone()).collect(),
                })
            }
            TargetResolution::Lenient => {
                for s in &out.skipped {
                    log::warn!(
                        "line {}: query {} targets unknown passage {:?}, skipped",
                        s.line,
                        s.qid,
                        s.target_id
                    );
                }
            }
        }
    }
    Ok(out)
}

pub fn load_queries(
    path: &Path,
    format: Format,
    fields: &QueryFields,
    collection: &PassageCollection,
    resolution: TargetResolution,
) -> Result<LoadedQueries> {
    read_queries(open(path)?, format, fields, collection, resolution).map_err(|e| e.in_file(path))
}

pub fn write_queries_jsonl<W: Write>(mut out: W, queries: &[QueryRecord]) -> Result<()> {
    for q in queries {
        let mut obj = Map::new();
        obj.insert("qid".into(), Value::String(q.qid.clone()));
        obj.insert("context".into(), Value::String(q.context.clone()));
        obj.insert("target_id".into(), Value::String(q.target_id.clone()));
        for (k, v) in &q.extra {
            obj.entry(k.clone()).or_insert_with(|| v.clone());
        }
        serde_json::to_writer(&mut out, &obj)?;
        out.write_all(b"\n").map_err(|source| Error::IoContext {
            context: "writing queries".into(),
            source,
        })?;
    }
    Ok(())
}

/// Deterministic train/test partition. The train side receives `⌊n·f⌋`
/// records; both sides keep the input order.
pub fn split_queries(
    queries: &[QueryRecord],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<QueryRecord>, Vec<QueryRecord>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if queries.is_empty() {
        return Err(Error::EmptyInput("no queries to split"));
    }
    let n = queries.len();
    let n_train = (n as f64 * train_fraction).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = queries
        .iter()
        .zip(in_train)
        .partition(|(_, is_train)| *is_train);
    Ok((
        train.into_iter().map(|(q, _)| q.clone()).collect(),
        test.into_iter().map(|(q, _)| q.clone()).collect(),
    ))
}

/// Citation counts per passage over a query set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FrequencyTable {
    counts: BTreeMap<PassageHandle, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn count(&self, handle: PassageHandle) -> u64 {
        self.counts.get(&handle).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PassageHandle, u64)> + '_ {
        self.counts.iter().map(|(h, c)| (*h, *c))
    }

    /// Handles ordered by count descending, then handle ascending.
    pub fn ranked(&self) -> Vec<(PassageHandle, u64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

pub fn citation_frequency(queries: &[QueryRecord]) -> FrequencyTable {
    let mut counts = BTreeMap::new();
    for q in queries {
        *counts.entry(q.target).or_insert(0u64) += 1;
    }
    FrequencyTable {
        counts,
        total: queries.len() as u64,
    }
}

/// Number of items in the top `fraction` of `distinct` items, rounded up.
/// The `1e-9` slack keeps values like `0.01 * 10_000` from rounding to 101.
pub(crate) fn top_count(fraction: f64, distinct: usize) -> usize {
    let raw = fraction * distinct as f64;
    let nearest = raw.round();
    let count = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.ceil()
    };
    (count as usize).min(distinct)
}

/// Share of all citations held by the top `fraction` most-cited passages.
pub fn top_share(table: &FrequencyTable, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if table.is_empty() {
        return Err(Error::EmptyInput("frequency table"));
    }
    let take = top_count(fraction, table.distinct()).max(1);
    let mass: u64 = table.ranked().iter().take(take).map(|(_, c)| c).sum();
    Ok(mass as f64 / table.total as f64)
}
