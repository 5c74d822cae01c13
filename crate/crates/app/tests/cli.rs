//! The `trialir` binary end to end on the fixture collection.

mod common;

use std::collections::BTreeMap;

use common::mock_llm::{MockLlm, MockReply};
use common::{fixtures, oracle, qrels_path, s, stderr, stdout, topics_path, trialir, write_constant_bundles, Workspace};
use trialir::commands::{evaluate, read_topics, run, EvaluateOptions, RunOptions};
use trialir::AppConfig;
use trialir_core::corpus::{load_corpus, read_run};
use trialir_core::eval::{EvalConfig, Measure};
use trialir_core::querygen::{read_bundles, BatchStats, LlmConfig};
use trialir_core::retrieval::{Rm3Params, RunStrategy};
use trialir_core::textproc::Analyzer;

#[test]
fn index_reports_counts_and_snapshots_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("trials");
    let (a, b) = (dir.path().join("a.trir"), dir.path().join("b.trir"));
    let out = trialir(&["index", "--corpus", s(&corpus), "--out", s(&a)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).lines().any(|l| l == "N: 100"), "{}", stdout(&out));
    assert!(stdout(&out).contains("avgdl: "));
    assert!(stdout(&out).contains("vocabulary: "));
    assert!(trialir(&["index", "--corpus", s(&corpus), "--out", s(&b)]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn empty_corpus_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = trialir(&["index", "--corpus", s(&empty), "--out", s(&dir.path().join("x"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("empty corpus"), "{}", stderr(&out));
}

#[test]
fn original_run_matches_brute_force_bm25() {
    let ws = Workspace::new();
    let out = ws.path("orig.run");
    let cfg = ws.config_file();
    let o = trialir(&["--config", s(&cfg), "run", "--topics", s(&topics_path()), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let entries = read_run(&out).unwrap();

    let analyzer = Analyzer::default();
    let mut docs = load_corpus(&fixtures().join("trials")).unwrap();
    docs.sort_by(|a, b| a.docno.cmp(&b.docno));
    let docnos: Vec<String> = docs.iter().map(|d| d.docno.clone()).collect();
    let tokens: Vec<Vec<String>> = docs.iter().map(|d| analyzer.analyze(&d.indexable_text())).collect();
    for t in read_topics(&topics_path(), None).unwrap() {
        let q = analyzer.process(&t.note_text);
        let want = oracle::ranking(&docnos, &oracle::bm25_scores(&tokens, &q.terms, 1.2, 0.75), 1000);
        let got: Vec<_> = entries.iter().filter(|e| e.topic_id == t.topic_id).collect();
        assert_eq!(got.len(), want.len(), "topic {}", t.topic_id);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.docno, w.0);
            assert!((g.score - w.1).abs() <= 5e-7, "{} vs {}", g.score, w.1);
        }
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("orig.run.meta.json")).unwrap()).unwrap();
    for key in ["bm25", "stoplist_hash", "pipeline_hash", "index", "topics", "strategy", "k", "tag"] {
        assert!(meta.get(key).is_some(), "sidecar lacks {key}");
    }
}

#[test]
fn strategy_without_bundles_fails() {
    let ws = Workspace::new();
    let cfg = ws.config_file();
    for strategy in ["generated", "concat"] {
        let o = trialir(&[
            "--config", s(&cfg), "run", "--topics", s(&topics_path()), "--strategy", strategy, "--out",
            s(&ws.path("x.run")),
        ]);
        assert!(!o.status.success());
        assert!(stderr(&o).contains("--bundles"), "{}", stderr(&o));
    }
}

fn run_with(ws: &Workspace, cfg: &AppConfig, strategy: RunStrategy, bundles: Option<&str>, name: &str) -> Vec<u8> {
    let out = ws.path(name);
    run(
        cfg,
        &RunOptions {
            topics: topics_path(),
            topic_format: None,
            strategy,
            bundles: bundles.map(|b| ws.path(b)),
            k: 1000,
            tag: Some("t".into()),
            out: out.clone(),
        },
    )
    .unwrap();
    std::fs::read(out).unwrap()
}

#[test]
fn rm3_without_feedback_terms_reproduces_the_original_run() {
    let ws = Workspace::new();
    let original = run_with(&ws, &ws.config, RunStrategy::Original, None, "o.run");
    let mut cfg = ws.config.clone();
    cfg.rm3 = Some(Rm3Params {
        fb_terms: 0,
        ..Default::default()
    });
    assert_eq!(run_with(&ws, &cfg, RunStrategy::OriginalRm3, None, "r.run"), original);
    // and with feedback on, the run changes
    assert_ne!(run_with(&ws, &ws.config, RunStrategy::OriginalRm3, None, "r20.run"), original);
}

#[test]
fn concat_with_empty_generations_reproduces_the_original_run() {
    let ws = Workspace::new();
    write_constant_bundles(&ws.path("empty.jsonl"), "");
    let original = run_with(&ws, &ws.config, RunStrategy::Original, None, "o.run");
    assert_eq!(run_with(&ws, &ws.config, RunStrategy::Concat, Some("empty.jsonl"), "c.run"), original);
}

#[test]
fn generated_run_uses_only_the_generation() {
    let ws = Workspace::new();
    write_constant_bundles(&ws.path("g.jsonl"), "1. asthma\n2. inhaled corticosteroids");
    run_with(&ws, &ws.config, RunStrategy::Generated, Some("g.jsonl"), "g.run");
    let entries = read_run(&ws.path("g.run")).unwrap();
    // the same generation for every topic gives the same ranking everywhere
    let per_topic: BTreeMap<&str, Vec<&str>> = entries.iter().fold(BTreeMap::new(), |mut m, e| {
        m.entry(e.topic_id.as_str()).or_insert_with(Vec::new).push(e.docno.as_str());
        m
    });
    let first = per_topic.values().next().unwrap();
    assert!(per_topic.values().all(|v| v == first));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("g.run.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["template_ids"], serde_json::json!(["t"]));
    assert_eq!(meta["mean_latency_s"], 0.5);
    assert!(meta["bundles"]["sha256"].is_string());
}

#[test]
fn identical_runs_have_p_one_and_no_markers() {
    let ws = Workspace::new();
    run_with(&ws, &ws.config, RunStrategy::Original, None, "a.run");
    run_with(&ws, &ws.config, RunStrategy::Original, None, "b.run");
    let ev = evaluate(&EvaluateOptions {
        runs: vec![ws.path("a.run"), ws.path("b.run")],
        names: vec!["A".into(), "B".into()],
        qrels: qrels_path(),
        eval: EvalConfig {
            condensed: true,
            ..Default::default()
        },
        family_size: Some(1),
    })
    .unwrap();
    let sig = ev.significance.unwrap();
    assert_eq!(sig.pairs.len(), 7);
    assert!(sig.pairs.iter().all(|p| p.p_value == 1.0 && !p.significant));
    assert!(!ev.table.contains('°'));
}

#[test]
fn fixture_vs_perturbed_run_matches_statrs() {
    let ws = Workspace::new();
    run_with(&ws, &ws.config, RunStrategy::Original, None, "a.run");
    run_with(&ws, &ws.config, RunStrategy::OriginalRm3, None, "b.run");
    let ev = evaluate(&EvaluateOptions {
        runs: vec![ws.path("a.run"), ws.path("b.run")],
        names: vec![],
        qrels: qrels_path(),
        eval: EvalConfig::default(),
        family_size: Some(3),
    })
    .unwrap();
    let sig = ev.significance.as_ref().unwrap();
    let mut checked = 0;
    for m in Measure::STANDARD {
        let a: Vec<f64> = ev.systems[0].report.topic_values(m).into_iter().map(|x| x.1).collect();
        let b: Vec<f64> = ev.systems[1].report.topic_values(m).into_iter().map(|x| x.1).collect();
        let Some(pair) = sig.pairs.iter().find(|p| p.measure == m) else {
            continue;
        };
        if a == b {
            // zero differences: defined as t = 0, p = 1
            assert_eq!((pair.t_stat, pair.p_value), (0.0, 1.0));
            continue;
        }
        let (t, p) = oracle::ttest_statrs(&b, &a);
        assert!((pair.t_stat - t).abs() < 1e-9, "{m}: t {} vs {t}", pair.t_stat);
        assert!((pair.p_value - p).abs() < 1e-6, "{m}: p {} vs {p}", pair.p_value);
        assert_eq!(pair.alpha_adjusted, 0.05 / 3.0);
        checked += 1;
    }
    assert!(checked >= 3);
}

#[test]
fn table_columns_follow_the_standard_order() {
    let ws = Workspace::new();
    let cfg = ws.config_file();
    let run = ws.path("a.run");
    assert!(trialir(&["--config", s(&cfg), "run", "--topics", s(&topics_path()), "--out", s(&run)])
        .status
        .success());
    let o = trialir(&["evaluate", s(&run), "--qrels", s(&qrels_path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let header: Vec<String> = stdout(&o).lines().next().unwrap().split_whitespace().map(String::from).collect();
    assert_eq!(header, ["System", "nDCG@10", "Bpref", "P@10", "R@25", "MRR"]);
}

#[test]
fn two_runs_need_an_explicit_family_size() {
    let ws = Workspace::new();
    run_with(&ws, &ws.config, RunStrategy::Original, None, "a.run");
    let a = ws.path("a.run");
    let o = trialir(&["evaluate", s(&a), s(&a), "--qrels", s(&qrels_path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--family-size"));
    let o = trialir(&["evaluate", s(&a), s(&a), "--qrels", s(&qrels_path()), "--family-size", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("p=1.0000"));
}

#[test]
fn topic_mismatch_is_a_warning() {
    let ws = Workspace::new();
    let run = ws.path("extra.run");
    std::fs::write(&run, "99 Q0 NCT00000001 1 1.5 x\n1 Q0 NCT00007919 1 2.0 x\n").unwrap();
    let o = trialir(&["evaluate", s(&run), "--qrels", s(&qrels_path()), "--json", s(&ws.path("e.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let ev: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ws.path("e.json")).unwrap()).unwrap();
    assert_eq!(ev["systems"][0]["report"]["per_topic"].as_object().unwrap().len(), 10);
}

fn write_topics(path: &std::path::Path, ids: &[usize]) {
    let lines: Vec<String> = ids
        .iter()
        .map(|i| serde_json::json!({"id": i.to_string(), "text": format!("Patient {i}: adult with type 2 diabetes")}).to_string())
        .collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn llm_config(ws: &Workspace, url: url::Url, cache: bool) -> std::path::PathBuf {
    let mut cfg = ws.config.clone();
    let mut llm = LlmConfig::local(url, "mock");
    llm.timeout_s = 5.0;
    llm.max_retries = 0;
    cfg.llm = Some(llm);
    if cache {
        cfg.cache_path = Some(ws.path("cache.jsonl"));
    }
    let p = ws.path("llm.json");
    cfg.save(&p).unwrap();
    p
}

#[test]
fn generate_writes_bundles_and_stats_then_reruns_from_cache() {
    let ws = Workspace::new();
    let server = MockLlm::constant("diabetes, metformin, HbA1c");
    let topics = ws.path("t.jsonl");
    write_topics(&topics, &[1, 2, 3]);
    let cfg = llm_config(&ws, server.base_url(), true);
    let out = ws.path("b.jsonl");
    let o = trialir(&["--config", s(&cfg), "generate", "--topics", s(&topics), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("succeeded: 3"));
    assert_eq!(read_bundles(&out).unwrap().len(), 3);
    let stats: BatchStats = serde_json::from_str(&std::fs::read_to_string(ws.path("b.jsonl.stats.json")).unwrap()).unwrap();
    assert_eq!(stats.n_succeeded, 3);
    assert_eq!(server.hits(), 3);

    let again = ws.path("b2.jsonl");
    let o = trialir(&["--config", s(&cfg), "generate", "--from-cache", "--topics", s(&topics), "--out", s(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(server.hits(), 3, "cache hits must not reach the endpoint");
    let (a, b) = (read_bundles(&out).unwrap(), read_bundles(&again).unwrap());
    assert!(a.iter().zip(&b).all(|(x, y)| x.raw_generation == y.raw_generation && y.from_cache));
}

#[test]
fn partial_failures_exit_zero_with_a_manifest() {
    let ws = Workspace::new();
    let server = MockLlm::start(|req| {
        MockReply::text(if req.prompt().contains("Patient 2:") { "" } else { "asthma" })
    });
    let topics = ws.path("t.jsonl");
    write_topics(&topics, &[1, 2, 3]);
    let cfg = llm_config(&ws, server.base_url(), false);
    let out = ws.path("b.jsonl");
    let o = trialir(&["--config", s(&cfg), "generate", "--topics", s(&topics), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats: BatchStats = serde_json::from_str(&std::fs::read_to_string(ws.path("b.jsonl.stats.json")).unwrap()).unwrap();
    assert_eq!(stats.n_succeeded, 2);
    assert_eq!(stats.failures.len(), 1);
    assert_eq!(stats.failures[0].topic_id, "2");
    assert!(stdout(&o).contains("failed 2"));
}

#[test]
fn unreachable_endpoint_with_empty_cache_fails() {
    let ws = Workspace::new();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let topics = ws.path("t.jsonl");
    write_topics(&topics, &[1, 2]);
    let cfg = llm_config(&ws, format!("http://127.0.0.1:{port}/v1").parse().unwrap(), true);
    let o = trialir(&["--config", s(&cfg), "generate", "--topics", s(&topics), "--out", s(&ws.path("b.jsonl"))]);
    assert!(!o.status.success());
    let o = trialir(&[
        "--config", s(&cfg), "generate", "--from-cache", "--topics", s(&topics), "--out", s(&ws.path("b.jsonl")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("every topic failed"), "{}", stderr(&o));
}

#[test]
fn remote_endpoints_are_refused_by_default() {
    let ws = Workspace::new();
    let topics = ws.path("t.jsonl");
    write_topics(&topics, &[1]);
    let o = trialir(&[
        "--config", s(&ws.config_file()), "generate", "--topics", s(&topics), "--out", s(&ws.path("b.jsonl")),
        "--base-url", "https://api.example.com/v1", "--model", "m",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("allow_remote") || stderr(&o).contains("remote"), "{}", stderr(&o));
}
