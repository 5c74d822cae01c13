#![allow(dead_code)]

#[path = "../../../core/tests/common/mock_llm.rs"]
pub mod mock_llm;
#[path = "../../../core/tests/common/oracle.rs"]
pub mod oracle;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trialir::commands::index_corpus;
use trialir::AppConfig;
use trialir_core::querygen::{write_bundles, QueryBundle};
use trialir_core::textproc::Analyzer;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn topics_path() -> PathBuf {
    fixtures().join("topics.xml")
}

pub fn qrels_path() -> PathBuf {
    fixtures().join("qrels.txt")
}

/// A temp directory holding an index over the fixture trials.
pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub config: AppConfig,
}

impl Workspace {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let index = dir.path().join("fixture.trir");
        index_corpus(&fixtures().join("trials"), &index, &Analyzer::default()).unwrap();
        let config = AppConfig {
            index_path: index,
            corpus_path: Some(fixtures().join("trials")),
            ..Default::default()
        };
        Workspace { dir, config }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Write the config and return its path.
    pub fn config_file(&self) -> PathBuf {
        let p = self.path("config.json");
        self.config.save(&p).unwrap();
        p
    }
}

pub fn trialir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trialir")).args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Bundles whose generation is `raw` for every fixture topic.
pub fn write_constant_bundles(path: &Path, raw: &str) {
    let a = Analyzer::default();
    let topics = trialir::commands::read_topics(&topics_path(), None).unwrap();
    let bundles: Vec<QueryBundle> = topics
        .iter()
        .map(|t| {
            let processed = a.postprocess_generated(raw);
            QueryBundle {
                topic_id: t.topic_id.clone(),
                original_note: t.note_text.clone(),
                raw_generation: raw.to_string(),
                term_count: processed.term_count(),
                raw_term_count: trialir_core::querygen::raw_term_count(raw),
                processed,
                latency_s: 0.5,
                model_name: "fixed".into(),
                template_id: "t".into(),
                from_cache: false,
            }
        })
        .collect();
    write_bundles(path, &bundles).unwrap();
}
