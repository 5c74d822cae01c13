//! Command-line interface. Flags override values from `--config`.

use std::path::PathBuf;

use anyhow::bail;
use clap::{Args, Parser, Subcommand};
use trialir_core::corpus::TopicFormat;
use trialir_core::eval::{EvalConfig, Gain, Measure};
use trialir_core::querygen::LlmConfig;
use trialir_core::retrieval::{RunStrategy, DEFAULT_DEPTH};
use url::Url;

use crate::commands::{self, EvaluateOptions, GenerateOptions, RunOptions};
use crate::config::AppConfig;
use crate::server;

#[derive(Debug, Parser)]
#[command(name = "trialir", version, about = "Clinical-trial retrieval from patient notes")]
pub struct Cli {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index snapshot from trial records.
    Index(IndexArgs),
    /// Generate queries for topics through the configured LLM endpoint.
    Generate(GenerateArgs),
    /// Rank trials for every topic and write a TREC run.
    Run(RunArgs),
    /// Score runs against qrels and compare them with the first run.
    Evaluate(EvaluateArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Stopword list, one word per line (default: bundled English list).
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Directory of XML records, one XML record, or a JSONL file.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Snapshot to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct TopicArgs {
    #[arg(long)]
    pub topics: PathBuf,
    /// xml, jsonl or tsv (default: from the file extension).
    #[arg(long)]
    pub topic_format: Option<TopicFormat>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub topics: TopicArgs,
    /// Bundle JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Batch stats JSON (default: <out>.stats.json).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Answer only from the generation cache; never contact the endpoint.
    #[arg(long)]
    pub from_cache: bool,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Prompt template containing {NOTE}.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Chat-completion endpoint root, e.g. http://localhost:11434/v1.
    #[arg(long)]
    pub base_url: Option<Url>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Permit a non-localhost endpoint. Patient notes leave the machine.
    #[arg(long)]
    pub allow_remote: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[command(flatten)]
    pub topics: TopicArgs,
    /// original, original+rm3, generated or concat.
    #[arg(long, default_value = "original")]
    pub strategy: RunStrategy,
    /// Bundle JSONL from `generate`, for generated and concat.
    #[arg(long)]
    pub bundles: Option<PathBuf>,
    #[arg(short, long, default_value_t = DEFAULT_DEPTH)]
    pub k: usize,
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub fb_docs: Option<usize>,
    #[arg(long)]
    pub fb_terms: Option<usize>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run files; the first is the baseline.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Comma-separated display names, one per run.
    #[arg(long, value_delimiter = ',')]
    pub names: Vec<String>,
    /// Comma-separated measures (default: nDCG@10,Bpref,P@10,R@25,MRR).
    #[arg(long, value_delimiter = ',')]
    pub measures: Vec<Measure>,
    /// Also report condensed P@10 and nDCG@10.
    #[arg(long)]
    pub condensed: bool,
    /// Use 2^rel - 1 instead of rel as the nDCG gain.
    #[arg(long)]
    pub exponential_gain: bool,
    /// Number of tests in the Bonferroni family. Required with two or more
    /// runs.
    #[arg(long)]
    pub family_size: Option<usize>,
    /// Also write the full evaluation as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Append a JSON line per search.
    #[arg(long)]
    pub audit_log: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

fn apply_pipeline(cfg: &mut AppConfig, p: &PipelineArgs) {
    if let Some(s) = &p.stoplist {
        cfg.stoplist_path = Some(s.clone());
    }
}

fn apply_llm(cfg: &mut AppConfig, a: &GenerateArgs) -> anyhow::Result<()> {
    match (&mut cfg.llm, &a.base_url) {
        (Some(llm), url) => {
            if let Some(u) = url {
                llm.base_url = u.clone();
            }
            if let Some(m) = &a.model {
                llm.model_name = m.clone();
            }
        }
        (None, Some(u)) => {
            let Some(m) = &a.model else {
                bail!("--base-url needs --model");
            };
            cfg.llm = Some(LlmConfig::local(u.clone(), m));
        }
        (None, None) => {}
    }
    if let Some(llm) = &mut cfg.llm {
        if let Some(k) = &a.api_key_env {
            llm.api_key_env = k.clone();
        }
        llm.allow_remote |= a.allow_remote;
    }
    Ok(())
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    match cli.command {
        Command::Index(a) => {
            apply_pipeline(&mut cfg, &a.pipeline);
            let Some(corpus) = a.corpus.or(cfg.corpus_path.clone()) else {
                bail!("no corpus given (--corpus or corpus_path)");
            };
            let out = a.out.unwrap_or(cfg.index_path.clone());
            cfg.check_paths(false, false)?;
            let s = commands::index_corpus(&corpus, &out, &cfg.analyzer()?)?;
            println!("N: {}", s.n_docs);
            println!("avgdl: {:.4}", s.avgdl);
            println!("vocabulary: {}", s.vocab_size);
            println!("pipeline: {}", s.pipeline_hash);
            println!("snapshot: {} ({})", out.display(), s.snapshot_sha256);
        }
        Command::Generate(a) => {
            apply_pipeline(&mut cfg, &a.pipeline);
            apply_llm(&mut cfg, &a)?;
            if let Some(c) = &a.cache {
                cfg.cache_path = Some(c.clone());
            }
            if let Some(t) = &a.template {
                cfg.prompt_template_path = Some(t.clone());
            }
            if let Some(n) = a.parallelism {
                cfg.parallelism = n;
            }
            cfg.check_paths(false, false)?;
            let opts = GenerateOptions {
                topics: a.topics.topics,
                topic_format: a.topics.topic_format,
                out: a.out,
                stats_out: a.stats,
                from_cache: a.from_cache,
            };
            let out = commands::generate(&cfg, &opts, None)?;
            let s = &out.stats;
            println!("topics: {}", s.n_topics);
            println!("succeeded: {}", s.n_succeeded);
            println!("mean latency (s): {:.3}", s.mean_latency_s);
            println!("mean terms: {:.2}", s.mean_term_count);
            for f in &s.failures {
                println!("failed {}: {}", f.topic_id, f.error);
            }
        }
        Command::Run(a) => {
            apply_pipeline(&mut cfg, &a.pipeline);
            if let Some(i) = a.index {
                cfg.index_path = i;
            }
            if let Some(k1) = a.k1 {
                cfg.bm25.k1 = k1;
            }
            if let Some(b) = a.b {
                cfg.bm25.b = b;
            }
            if a.fb_docs.is_some() || a.fb_terms.is_some() {
                let mut rm3 = cfg.rm3_params();
                rm3.fb_docs = a.fb_docs.unwrap_or(rm3.fb_docs);
                rm3.fb_terms = a.fb_terms.unwrap_or(rm3.fb_terms);
                cfg.rm3 = Some(rm3);
            }
            cfg.check_paths(true, false)?;
            let opts = RunOptions {
                topics: a.topics.topics,
                topic_format: a.topics.topic_format,
                strategy: a.strategy,
                bundles: a.bundles,
                k: a.k,
                tag: a.tag,
                out: a.out,
            };
            let (output, meta) = commands::run(&cfg, &opts)?;
            for w in &meta.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} topics, {} entries, tag {} -> {}",
                meta.n_topics,
                output.entries.len(),
                meta.tag,
                opts.out.display()
            );
        }
        Command::Evaluate(a) => {
            let mut eval = EvalConfig {
                condensed: a.condensed,
                gain: if a.exponential_gain { Gain::Exponential } else { Gain::Linear },
                ..Default::default()
            };
            if !a.measures.is_empty() {
                eval.measures = a.measures;
            }
            let opts = EvaluateOptions {
                runs: a.runs,
                names: a.names,
                qrels: a.qrels,
                eval,
                family_size: a.family_size,
            };
            let ev = commands::evaluate(&opts)?;
            print!("{}", ev.table);
            if let Some(sig) = &ev.significance {
                println!();
                println!(
                    "paired t-test vs {}, family size {}, alpha {}",
                    ev.systems[0].name,
                    sig.family_size,
                    sig.alpha / sig.family_size as f64
                );
                for p in &sig.pairs {
                    println!(
                        "{} {}: t={:.4} p={:.4}{}",
                        p.system_b,
                        p.measure,
                        p.t_stat,
                        p.p_value,
                        if p.significant { " *" } else { "" }
                    );
                }
            }
            if let Some(path) = &a.json {
                let mut text = serde_json::to_string_pretty(&ev)?;
                text.push('\n');
                std::fs::write(path, text)?;
            }
        }
        Command::Serve(a) => {
            apply_pipeline(&mut cfg, &a.pipeline);
            if let Some(x) = a.addr {
                cfg.serve_addr = x;
            }
            if let Some(x) = a.index {
                cfg.index_path = x;
            }
            if let Some(x) = a.corpus {
                cfg.corpus_path = Some(x);
            }
            if let Some(x) = a.static_dir {
                cfg.static_dir = Some(x);
            }
            if let Some(x) = a.audit_log {
                cfg.audit_log = Some(x);
            }
            server::serve(&cfg)?;
        }
    }
    Ok(())
}
