use std::fs;

use lpr_core::corpus::{
    load_passages, load_queries, read_passages, write_passages_jsonl, write_queries_jsonl, Format,
    PassageFields, QueryFields, TargetResolution,
};
use lpr_core::eval::trec;
use lpr_core::pipeline::{read_rewrites, write_rewrites, RewriteRecord};
use lpr_core::{Error, MetricReport, RankedList, RetrievalRun, ScoredPassage, Strategy};

const PASSAGES: &str = r#"{"id": "p0", "text": "Summary judgment is appropriate when no genuine dispute exists.", "court": "1st Cir."}
{"id": "p1", "text": "A motion to dismiss tests the sufficiency of the complaint."}
{"id": "p2", "text": "Café résumé: \"quoted\" text, with commas\tand tabs."}
{"id": "p3", "text": "The standard of review is de novo.", "year": 1999}
{"id": "p4", "text": "Qualified immunity shields officials."}
{"id": "p5", "text": "Hearsay is an out-of-court statement."}
{"id": "p6", "text": "Standing requires injury in fact."}
{"id": "p7", "text": "Res judicata bars relitigation."}
{"id": "p8", "text": "Multi-line\ntext survives."}
{"id": "p9", "text": "  Leading and trailing spaces are kept.  "}
"#;

#[test]
fn passage_jsonl_round_trip_is_byte_identical() {
    let c = read_passages(
        PASSAGES.as_bytes(),
        Format::Jsonl,
        &PassageFields::default(),
    )
    .unwrap();
    assert_eq!(c.len(), 10);
    let mut once = Vec::new();
    write_passages_jsonl(&mut once, &c).unwrap();
    let again = read_passages(&once[..], Format::Jsonl, &PassageFields::default()).unwrap();
    let mut twice = Vec::new();
    write_passages_jsonl(&mut twice, &again).unwrap();
    assert_eq!(once, twice);
    for (a, b) in c.passages().iter().zip(again.passages()) {
        assert_eq!(a, b);
    }
    assert_eq!(again.passages()[0].extra["court"], "1st Cir.");
    assert_eq!(
        again.passages()[9].text,
        "  Leading and trailing spaces are kept.  "
    );
}

#[test]
fn csv_and_custom_fields_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("passages.csv");
    fs::write(&p, "pid,body\na,\"first, with comma\"\nb,second\n").unwrap();
    let fields = PassageFields {
        id: "pid".into(),
        text: "body".into(),
    };
    let c = load_passages(&p, Format::from_path(&p), &fields).unwrap();
    assert_eq!(c.passages()[0].text, "first, with comma");

    let q = dir.path().join("queries.csv");
    fs::write(&q, "id,ctx,gold\nq1,some context,b\nq2,other,zzz\n").unwrap();
    let qf = QueryFields {
        qid: "id".into(),
        context: "ctx".into(),
        target_id: "gold".into(),
    };
    let strict = load_queries(&q, Format::Csv, &qf, &c, TargetResolution::Strict).unwrap_err();
    assert!(matches!(strict.root(), Error::UnresolvedTargets { .. }));
    assert!(strict.to_string().contains("queries.csv"));
    let lenient = load_queries(&q, Format::Csv, &qf, &c, TargetResolution::Lenient).unwrap();
    assert_eq!(lenient.records.len(), 1);
    assert_eq!(lenient.skipped[0].qid, "q2");

    let mut out = Vec::new();
    write_queries_jsonl(&mut out, &lenient.records).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "{\"qid\":\"q1\",\"context\":\"some context\",\"target_id\":\"b\"}\n"
    );
}

#[test]
fn trec_run_file_round_trip() {
    let c = read_passages(
        PASSAGES.as_bytes(),
        Format::Jsonl,
        &PassageFields::default(),
    )
    .unwrap();
    let h = |id: &str| c.handle(id).unwrap();
    let run = RetrievalRun::from_lists(
        "bm25_gure_s42",
        vec![
            RankedList::new(
                "q10",
                vec![
                    ScoredPassage {
                        handle: h("p3"),
                        score: 12.5,
                    },
                    ScoredPassage {
                        handle: h("p1"),
                        score: 1.0 / 3.0,
                    },
                ],
            ),
            RankedList::new("q2", vec![]),
            RankedList::new(
                "q9",
                vec![ScoredPassage {
                    handle: h("p9"),
                    score: -0.0,
                }],
            ),
        ],
    )
    .unwrap();
    let mut buf = Vec::new();
    trec::write_run(&mut buf, &run, &c).unwrap();
    let back = trec::read_run(&buf[..], &c).unwrap();
    // Queries with no results leave no line behind.
    assert_eq!(back.len(), 2);
    assert_eq!(back.get("q10"), run.get("q10"));
    assert_eq!(back.get("q9"), run.get("q9"));
}

#[test]
fn report_json_round_trip() {
    let report = MetricReport::from_trials(
        "BM25 + GuRE",
        vec![
            lpr_core::eval::TrialMetrics {
                recall_at_1: 0.1,
                recall_at_10: 0.30000000000000004,
                ndcg_at_10: 0.2,
                n_queries: 10,
            },
            lpr_core::eval::TrialMetrics {
                recall_at_1: 0.2,
                recall_at_10: 0.5,
                ndcg_at_10: 1.0 / 3.0,
                n_queries: 10,
            },
        ],
    )
    .unwrap()
    .with_metadata("seed", "42");
    let json = report.to_json().unwrap();
    let back = MetricReport::from_json(&json).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.to_json().unwrap(), json);
}

#[test]
fn rewrites_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub").join("rewrites.jsonl");
    let records = vec![
        RewriteRecord {
            qid: "q1".into(),
            strategy: Strategy::Q2dCot,
            final_text: "ctx passage".into(),
            raw_generation: "Step1 <output> passage".into(),
            parse_warning: false,
        },
        RewriteRecord {
            qid: "q2".into(),
            strategy: Strategy::Q2dCot,
            final_text: "ctx2 whole\ntext".into(),
            raw_generation: "whole\ntext".into(),
            parse_warning: true,
        },
    ];
    write_rewrites(&path, &records).unwrap();
    assert_eq!(read_rewrites(&path).unwrap(), records);
}

#[test]
fn malformed_inputs_name_their_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.jsonl");
    fs::write(&p, "{\"id\": \"a\", \"text\": \"x\"}\n{not json}\n").unwrap();
    let err = load_passages(&p, Format::Jsonl, &PassageFields::default()).unwrap_err();
    assert!(err.to_string().contains("bad.jsonl"), "{err}");
    assert!(
        matches!(err.root(), Error::Malformed { line: 2, .. }),
        "{err:?}"
    );

    fs::write(
        &p,
        "{\"id\": \"a\", \"text\": \"x\"}\n{\"id\": \"a\", \"text\": \"y\"}\n",
    )
    .unwrap();
    let err = load_passages(&p, Format::Jsonl, &PassageFields::default()).unwrap_err();
    assert!(matches!(err.root(), Error::DuplicateId { .. }), "{err:?}");

    let missing = load_passages(
        &dir.path().join("nope.jsonl"),
        Format::Jsonl,
        &PassageFields::default(),
    )
    .unwrap_err();
    assert!(matches!(missing, Error::Io { .. }));
}
