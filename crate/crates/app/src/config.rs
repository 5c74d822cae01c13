//! On-disk JSON configuration shared by every subcommand.
//!
//! Every field has a default, so `{}` is a valid config. Command-line flags
//! override whatever the file says.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use trialir_core::querygen::{LlmConfig, PromptTemplate};
use trialir_core::retrieval::{Bm25Params, Rm3Params};
use trialir_core::textproc::{Analyzer, Stoplist};

fn default_index_path() -> PathBuf {
    PathBuf::from("index.trir")
}
fn default_serve_addr() -> String {
    "127.0.0.1:8080".into()
}
fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    #[serde(default = "default_index_path")]
    pub index_path: PathBuf,
    /// Trial records, needed by `serve` for titles, snippets and the detail
    /// view.
    #[serde(default)]
    pub corpus_path: Option<PathBuf>,
    /// `None` means the bundled English list.
    #[serde(default)]
    pub stoplist_path: Option<PathBuf>,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub rm3: Option<Rm3Params>,
    #[serde(default)]
    pub llm: Option<LlmConfig>,
    /// `None` means the bundled default prompt.
    #[serde(default)]
    pub prompt_template_path: Option<PathBuf>,
    #[serde(default = "default_serve_addr")]
    pub serve_addr: String,
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
    /// Append-only JSONL of searches issued through the service. Off unless
    /// set.
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
    /// Concurrent requests to the LLM endpoint.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl Default for AppConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config deserializes")
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing config {}", path.display()))
    }

    pub fn rm3_params(&self) -> Rm3Params {
        self.rm3.unwrap_or_default()
    }

    pub fn analyzer(&self) -> anyhow::Result<Analyzer> {
        let stoplist = match &self.stoplist_path {
            Some(p) => Stoplist::load(p).with_context(|| format!("reading stoplist {}", p.display()))?,
            None => Stoplist::english(),
        };
        Ok(Analyzer::new(stoplist))
    }

    pub fn template(&self) -> anyhow::Result<PromptTemplate> {
        match &self.prompt_template_path {
            Some(p) => PromptTemplate::load(p).with_context(|| format!("reading prompt template {}", p.display())),
            None => Ok(PromptTemplate::default()),
        }
    }

    /// Check that the files a command reads exist. `needs_corpus` is set by
    /// `serve`.
    pub fn check_paths(&self, needs_index: bool, needs_corpus: bool) -> anyhow::Result<()> {
        let must_exist = |what: &str, p: &Path| -> anyhow::Result<()> {
            if !p.exists() {
                bail!("{what} {} does not exist", p.display());
            }
            Ok(())
        };
        if needs_index {
            must_exist("index", &self.index_path)?;
        }
        if needs_corpus {
            match &self.corpus_path {
                Some(p) => must_exist("corpus", p)?,
                None => bail!("corpus_path is not set"),
            }
        }
        if let Some(p) = &self.stoplist_path {
            must_exist("stoplist", p)?;
        }
        if let Some(p) = &self.prompt_template_path {
            must_exist("prompt template", p)?;
        }
        if let Some(p) = &self.static_dir {
            must_exist("static directory", p)?;
        }
        if self.parallelism == 0 {
            bail!("parallelism must be >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = AppConfig::default();
        assert_eq!(c.bm25, Bm25Params::default());
        assert!(c.llm.is_none());
        assert_eq!(c.serve_addr, "127.0.0.1:8080");
    }

    #[test]
    fn round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let c = AppConfig {
            corpus_path: Some("trials".into()),
            stoplist_path: Some("stop.txt".into()),
            bm25: Bm25Params { k1: 0.9, b: 0.4 },
            rm3: Some(Rm3Params {
                fb_docs: 5,
                fb_terms: 7,
                mu: 1000.0,
            }),
            llm: Some(LlmConfig::local("http://localhost:11434/v1".parse().unwrap(), "qwen2")),
            audit_log: Some("audit.jsonl".into()),
            parallelism: 2,
            ..Default::default()
        };
        let p = dir.path().join("c.json");
        c.save(&p).unwrap();
        assert_eq!(AppConfig::load(&p).unwrap(), c);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<AppConfig>(r#"{"index": "x"}"#).is_err());
    }
}
