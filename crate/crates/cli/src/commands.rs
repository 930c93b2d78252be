use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use lpr_core::corpus::{
    citation_frequency, load_passages, load_queries, top_share, write_passages_jsonl,
    write_queries_jsonl, Format, LoadedQueries, PassageFields, QueryFields, TargetResolution,
};
use lpr_core::dense::{load_embeddings, EmbeddingStore, EMB_MAGIC};
use lpr_core::eval::{
    paired_t_test, per_query_ndcg, per_query_recall, render_table, Qrels, RetrievalRun,
};
use lpr_core::pipeline::{
    self, analyze_frequency, build_rewriter, evaluate_runs, qrels_for, read_rewrites,
    read_run_file, retrieve_trials, trial_run_path, write_frequency_csv, write_rewrites,
    write_run_file, Design, ExperimentConfig, Retriever, RewriteRecord,
};
use lpr_core::sparse::build_index;
use lpr_core::{
    Bm25Params, Error, MetricReport, PassageCollection, Result, Strategy, TokenizerConfig,
};
use serde::Deserialize;

use crate::{EmbedImportArgs, EvalArgs, IndexArgs, InputArgs, StratifyArgs};

fn load(input: &InputArgs) -> Result<(PassageCollection, LoadedQueries)> {
    let collection = load_passages(
        &input.passages,
        Format::from_path(&input.passages),
        &PassageFields {
            id: input.passage_id_field.clone(),
            text: input.passage_text_field.clone(),
        },
    )?;
    let queries = load_queries(
        &input.queries,
        Format::from_path(&input.queries),
        &QueryFields {
            qid: input.qid_field.clone(),
            context: input.context_field.clone(),
            target_id: input.target_field.clone(),
        },
        &collection,
        if input.lenient {
            TargetResolution::Lenient
        } else {
            TargetResolution::Strict
        },
    )?;
    Ok((collection, queries))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| io_err(path, e))?,
    ))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source,
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn ingest(input: &InputArgs, out_dir: &Path, json: bool) -> Result<()> {
    let (collection, queries) = load(input)?;
    let passages_out = out_dir.join("passages.jsonl");
    let queries_out = out_dir.join("queries.jsonl");
    let mut w = create(&passages_out)?;
    write_passages_jsonl(&mut w, &collection)?;
    w.flush().map_err(|e| io_err(&passages_out, e))?;
    let mut w = create(&queries_out)?;
    write_queries_jsonl(&mut w, &queries.records)?;
    w.flush().map_err(|e| io_err(&queries_out, e))?;
    let skipped: Vec<_> = queries
        .skipped
        .iter()
        .map(|s| serde_json::json!({"qid": s.qid, "target_id": s.target_id, "line": s.line}))
        .collect();
    if json {
        print_json(&serde_json::json!({
            "n_passages": collection.len(),
            "n_queries": queries.records.len(),
            "skipped": skipped,
        }))
    } else {
        println!(
            "{} passages, {} queries, {} skipped",
            collection.len(),
            queries.records.len(),
            skipped.len()
        );
        Ok(())
    }
}

pub fn index(a: &IndexArgs) -> Result<()> {
    let collection = load_passages(
        &a.passages,
        Format::from_path(&a.passages),
        &PassageFields::default(),
    )?;
    let index = build_index(
        &collection,
        Bm25Params::new(a.k1, a.b)?,
        TokenizerConfig {
            stem: a.stem,
            stopwords: a.stopwords,
        },
    )?;
    index.save(&a.out)?;
    log::info!(
        "indexed {} passages, {} terms -> {}",
        index.n_docs(),
        index.n_terms(),
        a.out.display()
    );
    Ok(())
}

#[derive(Deserialize)]
struct VectorLine {
    id: String,
    vector: Vec<f32>,
}

fn read_vector_lines(path: &Path) -> Result<Vec<VectorLine>> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: VectorLine = serde_json::from_str(&line).map_err(|e| {
            Error::Malformed {
                line: i + 1,
                detail: e.to_string(),
            }
            .in_file(path)
        })?;
        out.push(v);
    }
    Ok(out)
}

fn is_emb1(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 4];
    let mut f = File::open(path).map_err(|e| io_err(path, e))?;
    use std::io::Read;
    Ok(f.read_exact(&mut magic).is_ok() && &magic == EMB_MAGIC)
}

pub fn embed_import(a: &EmbedImportArgs) -> Result<()> {
    let (ids, store) = if is_emb1(&a.input)? {
        if a.passages.is_none() && a.ids_out.is_none() {
            let store = load_embeddings(&a.input)?;
            store.save(&a.out)?;
            log::info!("copied {} rows of dim {}", store.len(), store.dim());
            return Ok(());
        }
        return Err(Error::Config(
            "EMB1 input carries no ids; --passages and --ids-out need JSONL input".into(),
        ));
    } else {
        let lines = read_vector_lines(&a.input)?;
        let dim = lines
            .first()
            .map(|l| l.vector.len())
            .ok_or(Error::EmptyInput("embedding file"))?;
        if let Some(bad) = lines.iter().find(|l| l.vector.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.vector.len(),
            }
            .in_file(&a.input));
        }
        let ordered: Vec<&VectorLine> = match &a.passages {
            Some(p) => {
                let collection = load_passages(p, Format::from_path(p), &PassageFields::default())?;
                let mut by_id: HashMap<&str, &VectorLine> = HashMap::new();
                for l in &lines {
                    if by_id.insert(l.id.as_str(), l).is_some() {
                        return Err(Error::DuplicateQuery(l.id.clone()).in_file(&a.input));
                    }
                }
                let ordered = collection
                    .passages()
                    .iter()
                    .map(|p| {
                        by_id
                            .get(p.id.as_str())
                            .copied()
                            .ok_or_else(|| Error::UnknownPassageId(p.id.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if by_id.len() != collection.len() {
                    return Err(Error::InvalidArgument(format!(
                        "{} vectors for {} passages",
                        by_id.len(),
                        collection.len()
                    )));
                }
                ordered
            }
            None => lines.iter().collect(),
        };
        let data: Vec<f32> = ordered
            .iter()
            .flat_map(|l| l.vector.iter().copied())
            .collect();
        let ids: Vec<String> = ordered.iter().map(|l| l.id.clone()).collect();
        (ids, EmbeddingStore::from_rows(dim, data)?)
    };
    store.save(&a.out)?;
    if let Some(path) = &a.ids_out {
        let mut w = create(path)?;
        for id in &ids {
            writeln!(w, "{id}").map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
    }
    log::info!(
        "wrote {} rows of dim {} to {}",
        store.len(),
        store.dim(),
        a.out.display()
    );
    Ok(())
}

struct Prepared {
    collection: PassageCollection,
    design: Design,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let inputs = pipeline::load_inputs(config).map_err(|e| e.in_stage("ingest"))?;
    let design = Design::new(config, &inputs.queries.records).map_err(|e| e.in_stage("sample"))?;
    Ok(Prepared {
        collection: inputs.collection,
        design,
    })
}

pub fn rewrite(config: &ExperimentConfig) -> Result<()> {
    let p = prepare(config)?;
    let rewriter = build_rewriter(config, &p.design.train, &p.collection, None)
        .map_err(|e| e.in_stage("rewrite"))?;
    let batch = pipeline::rewrite_queries(&rewriter, &p.design.sampled(), config)
        .map_err(|e| e.in_stage("rewrite"))?;
    let records: Vec<RewriteRecord> = batch.rewritten.iter().map(RewriteRecord::from).collect();
    let path = config.paths.output_dir.join("rewrites.jsonl");
    write_rewrites(&path, &records)?;
    log::info!(
        "{} rewrites -> {} ({} cache hits)",
        records.len(),
        path.display(),
        batch.cache_hits()
    );
    Ok(())
}

fn emit_report(report: &MetricReport, json: bool) -> Result<()> {
    if json {
        print!("{}", report.to_json()?);
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

pub fn retrieve(config: &ExperimentConfig, rewrites: Option<&Path>, json: bool) -> Result<()> {
    let p = prepare(config)?;
    let final_text: HashMap<String, String> =
        if config.strategy == Strategy::Identity && rewrites.is_none() {
            p.design
                .sampled()
                .into_iter()
                .map(|q| (q.qid, q.context))
                .collect()
        } else {
            let default = config.paths.output_dir.join("rewrites.jsonl");
            let path = rewrites.unwrap_or(&default);
            let records = read_rewrites(path)?;
            if let Some(r) = records.iter().find(|r| r.strategy != config.strategy) {
                return Err(Error::Config(format!(
                    "{} holds {} rewrites but the strategy is {}",
                    path.display(),
                    r.strategy,
                    config.strategy
                )));
            }
            records.into_iter().map(|r| (r.qid, r.final_text)).collect()
        };
    let retriever = Retriever::load(config, &p.collection).map_err(|e| e.in_stage("index"))?;
    let runs = retrieve_trials(
        &retriever,
        &p.design.trials,
        &final_text,
        config.eval.top_k,
        &config.run_name(),
    )
    .map_err(|e| e.in_stage("retrieve"))?;
    for (t, run) in runs.iter().enumerate() {
        let path = trial_run_path(&config.paths.output_dir, t);
        write_run_file(&path, run, &p.collection)?;
        log::info!("trial {} -> {}", t + 1, path.display());
    }
    let qrels = qrels_for(config, &p.design.test, &p.collection);
    let report = evaluate_runs(&runs, &qrels, &config.display_label())?
        .with_metadata("config_hash", config.hash())
        .with_metadata("seed", config.sampling.seed.to_string());
    emit_report(&report, json)
}

fn per_query(runs: &[RetrievalRun], qrels: &Qrels, metric: &str) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (t, run) in runs.iter().enumerate() {
        let values = match metric {
            "ndcg@10" => per_query_ndcg(run, qrels, 10)?,
            "recall@1" => per_query_recall(run, qrels, 1)?,
            "recall@10" => per_query_recall(run, qrels, 10)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown metric {other:?} (ndcg@10, recall@1, recall@10)"
                )))
            }
        };
        out.extend(values.into_iter().map(|(q, v)| (format!("{t}:{q}"), v)));
    }
    Ok(out)
}

pub fn eval(a: &EvalArgs, json: bool) -> Result<()> {
    let (collection, queries) = load(&a.input)?;
    let mut qrels = Qrels::from_queries(&queries.records);
    if a.text_match {
        qrels = qrels.with_text_match(&collection);
    }
    let read_all = |paths: &[std::path::PathBuf]| {
        paths
            .iter()
            .map(|p| read_run_file(p, &collection))
            .collect::<Result<Vec<_>>>()
    };
    let runs = read_all(&a.runs)?;
    let label = a.label.clone().unwrap_or_else(|| runs[0].name.clone());
    let report = evaluate_runs(&runs, &qrels, &label)?;
    if a.compare.is_empty() {
        return emit_report(&report, json);
    }
    if a.compare.len() != a.runs.len() {
        return Err(Error::Config(format!(
            "--compare needs one run per --run ({} vs {})",
            a.compare.len(),
            a.runs.len()
        )));
    }
    let baseline_runs = read_all(&a.compare)?;
    let baseline = evaluate_runs(&baseline_runs, &qrels, &baseline_runs[0].name)?;
    let ours = per_query(&runs, &qrels, &a.metric)?;
    let theirs: HashMap<String, f64> = per_query(&baseline_runs, &qrels, &a.metric)?
        .into_iter()
        .collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (key, v) in &ours {
        if let Some(w) = theirs.get(key) {
            xs.push(*v);
            ys.push(*w);
        }
    }
    if xs.len() != ours.len() || xs.len() != theirs.len() {
        log::warn!(
            "pairing on {} shared queries ({} vs {} available)",
            xs.len(),
            ours.len(),
            theirs.len()
        );
    }
    let test = paired_t_test(&xs, &ys)?;
    if json {
        print_json(&serde_json::json!({
            "report": report,
            "baseline": baseline,
            "metric": a.metric,
            "t_test": test,
        }))
    } else {
        print!("{}", render_table(&[report, baseline]));
        println!();
        println!(
            "paired t-test on {} (two-tailed, n = {}): t = {:.4}, p = {:.3e}{}{}",
            a.metric,
            test.n,
            test.t_statistic,
            test.p_value,
            if test.significant_at_01 {
                ", significant at p < 0.01"
            } else {
                ""
            },
            if test.degenerate {
                " (zero-variance differences)"
            } else {
                ""
            }
        );
        Ok(())
    }
}

pub fn stratify(config: &ExperimentConfig, a: &StratifyArgs, json: bool) -> Result<()> {
    let p = prepare(config)?;
    let paths: Vec<_> = if a.runs.is_empty() {
        (0..p.design.trials.len())
            .map(|t| trial_run_path(&config.paths.output_dir, t))
            .collect()
    } else {
        a.runs.clone()
    };
    if paths.len() != p.design.trials.len() {
        return Err(Error::Config(format!(
            "{} run files for {} trials",
            paths.len(),
            p.design.trials.len()
        )));
    }
    let runs = paths
        .iter()
        .map(|path| read_run_file(path, &p.collection))
        .collect::<Result<Vec<_>>>()?;
    let thresholds = if a.thresholds.is_empty() {
        config.eval.thresholds.clone()
    } else {
        a.thresholds.clone()
    };
    let qrels = qrels_for(config, &p.design.test, &p.collection);
    let rows = analyze_frequency(
        &p.design.trials,
        &runs,
        &p.design.frequency,
        &qrels,
        &thresholds,
    )
    .map_err(|e| e.in_stage("stratify"))?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| config.paths.output_dir.join("frequency.csv"));
    write_frequency_csv(&out, &rows, &config.hash(), config.sampling.seed)?;
    if json {
        print_json(&serde_json::to_value(&rows)?)
    } else {
        print!(
            "{}",
            std::fs::read_to_string(&out).map_err(|e| io_err(&out, e))?
        );
        Ok(())
    }
}

pub fn stats(input: &InputArgs, fraction: f64) -> Result<()> {
    let (collection, queries) = load(input)?;
    let freq = citation_frequency(&queries.records);
    let mut out = serde_json::json!({
        "n_passages": collection.len(),
        "n_queries": queries.records.len(),
        "top_1pct_share": top_share(&freq, 0.01)?,
    });
    if fraction != 0.01 {
        out["top_share"] = serde_json::json!({
            "fraction": fraction,
            "share": top_share(&freq, fraction)?,
        });
    }
    print_json(&out)
}

pub fn run(config: &ExperimentConfig, json: bool) -> Result<()> {
    let experiment = pipeline::run_experiment(config, None)?;
    let m = &experiment.manifest;
    log::info!(
        "cache: {}/{} hits, {} endpoint calls; outputs in {}",
        m.cache.hits,
        m.cache.lookups,
        m.cache.endpoint_calls,
        config.paths.output_dir.display()
    );
    emit_report(&experiment.report, json)
}
