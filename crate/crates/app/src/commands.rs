//! The batch workflow: index a corpus, generate queries, produce runs and
//! evaluate them. The CLI is a thin layer over these functions.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trialir_core::corpus::{load_corpus, load_qrels, load_topics, read_run, write_run, PatientTopic, TopicFormat};
use trialir_core::eval::{
    compare_systems, evaluate_run, render_table, EvalConfig, MetricReport, SignificanceReport, SystemRow,
};
use trialir_core::index::{build_index, InvertedIndex};
use trialir_core::querygen::{
    read_bundles, write_bundles, BatchOutput, GenerationCache, QueryBundle, QueryGenerator, Transport,
};
use trialir_core::retrieval::{Bm25Params, Retriever, Rm3Params, RunOutput, RunStrategy};
use trialir_core::textproc::{Analyzer, ProcessedQuery, PIPELINE_VERSION};

use crate::config::AppConfig;

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Sidecar path for a run or bundle file: `x.run` -> `x.run.meta.json`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn read_topics(path: &Path, format: Option<TopicFormat>) -> anyhow::Result<Vec<PatientTopic>> {
    let format = match format.or_else(|| TopicFormat::from_path(path)) {
        Some(f) => f,
        None => bail!("cannot tell the topic format of {}; pass --topic-format", path.display()),
    };
    Ok(load_topics(path, format)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub n_docs: usize,
    pub avgdl: f64,
    pub vocab_size: usize,
    pub pipeline_hash: String,
    pub snapshot_sha256: String,
}

impl IndexSummary {
    pub fn of(index: &InvertedIndex, snapshot_sha256: String) -> Self {
        IndexSummary {
            n_docs: index.n_docs(),
            avgdl: index.avgdl(),
            vocab_size: index.vocab_size(),
            pipeline_hash: index.stats_hash().to_string(),
            snapshot_sha256,
        }
    }
}

/// Parse a corpus, build the index and write the snapshot to `out`.
pub fn index_corpus(corpus: &Path, out: &Path, analyzer: &Analyzer) -> anyhow::Result<IndexSummary> {
    let docs = load_corpus(corpus)?;
    let index = build_index(&docs, analyzer)?;
    index.persist(out)?;
    Ok(IndexSummary::of(&index, sha256_file(out)?))
}

pub fn open_index(path: &Path) -> anyhow::Result<InvertedIndex> {
    InvertedIndex::open(path).with_context(|| format!("opening index {}", path.display()))
}

pub struct GenerateOptions {
    pub topics: PathBuf,
    pub topic_format: Option<TopicFormat>,
    pub out: PathBuf,
    /// Defaults to `<out>.stats.json`.
    pub stats_out: Option<PathBuf>,
    /// Serve every topic from the generation cache without network access.
    pub from_cache: bool,
}

pub fn build_generator(cfg: &AppConfig, transport: Option<Arc<dyn Transport>>) -> anyhow::Result<QueryGenerator> {
    let Some(llm) = cfg.llm.clone() else {
        bail!("no LLM endpoint configured (set \"llm\" in the config or pass --base-url and --model)");
    };
    let template = cfg.template()?;
    let analyzer = cfg.analyzer()?;
    let mut g = match transport {
        Some(t) => QueryGenerator::with_transport(llm, template, analyzer, t)?,
        None => QueryGenerator::new(llm, template, analyzer)?,
    };
    if let Some(p) = &cfg.cache_path {
        g = g.with_cache(Arc::new(GenerationCache::open(p)?));
    }
    Ok(g)
}

/// Generate a query for every topic, writing bundles and batch stats. Fails
/// only when no topic succeeds.
pub fn generate(
    cfg: &AppConfig,
    opts: &GenerateOptions,
    transport: Option<Arc<dyn Transport>>,
) -> anyhow::Result<BatchOutput> {
    if opts.from_cache && cfg.cache_path.is_none() {
        bail!("--from-cache needs a generation cache (cache_path or --cache)");
    }
    let topics = read_topics(&opts.topics, opts.topic_format)?;
    let generator = build_generator(cfg, transport)?.offline(opts.from_cache);
    let out = generator.batch(&topics, cfg.parallelism)?;
    write_bundles(&opts.out, &out.bundles)?;
    let stats_path = opts.stats_out.clone().unwrap_or_else(|| sidecar(&opts.out, ".stats.json"));
    let mut stats = serde_json::to_string_pretty(&out.stats)?;
    stats.push('\n');
    std::fs::write(&stats_path, stats).with_context(|| format!("writing {}", stats_path.display()))?;
    Ok(out)
}

pub struct RunOptions {
    pub topics: PathBuf,
    pub topic_format: Option<TopicFormat>,
    pub strategy: RunStrategy,
    pub bundles: Option<PathBuf>,
    pub k: usize,
    /// Defaults to the strategy name.
    pub tag: Option<String>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRef {
    fn of(path: &Path) -> anyhow::Result<Self> {
        Ok(FileRef {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Everything needed to reproduce a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub tag: String,
    pub strategy: RunStrategy,
    pub k: usize,
    pub bm25: Bm25Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rm3: Option<Rm3Params>,
    pub pipeline_version: String,
    pub stoplist_hash: String,
    pub pipeline_hash: String,
    pub index: IndexSummary,
    pub topics: FileRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundles: Option<FileRef>,
    #[serde(default)]
    pub template_ids: Vec<String>,
    #[serde(default)]
    pub model_names: Vec<String>,
    pub n_topics: usize,
    /// Topics without a generated query, searched with the original note.
    #[serde(default)]
    pub fallback_topics: Vec<String>,
    pub mean_query_terms: f64,
    /// Mean generated-query length, for strategies that use generations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_generated_terms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_latency_s: Option<f64>,
    /// Mean number of feedback terms appended, for `original+rm3`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_expansion_terms: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Generated queries per topic, re-derived from the stored raw text so the
/// result never depends on how the bundle file was post-processed.
/// Topics without a bundle fall back to the original note.
fn generated_queries(
    topics: &[PatientTopic],
    bundles: &[QueryBundle],
    strategy: RunStrategy,
    analyzer: &Analyzer,
) -> (HashMap<String, ProcessedQuery>, Vec<String>) {
    let by_topic: HashMap<&str, &QueryBundle> = bundles.iter().map(|b| (b.topic_id.as_str(), b)).collect();
    let mut map = HashMap::new();
    let mut fallback = Vec::new();
    for t in topics {
        let q = match by_topic.get(t.topic_id.as_str()) {
            Some(b) => b.reprocess(analyzer),
            None => {
                fallback.push(t.topic_id.clone());
                match strategy {
                    // the generated-only query becomes the note itself
                    RunStrategy::Generated => analyzer.process(&t.note_text),
                    _ => ProcessedQuery::new(Vec::new(), analyzer.pipeline_hash()),
                }
            }
        };
        map.insert(t.topic_id.clone(), q);
    }
    (map, fallback)
}

/// Rank every topic and write the run plus its `.meta.json` sidecar.
pub fn run(cfg: &AppConfig, opts: &RunOptions) -> anyhow::Result<(RunOutput, RunMeta)> {
    if opts.strategy.needs_generated() && opts.bundles.is_none() {
        bail!("strategy {} needs generated queries; pass --bundles", opts.strategy);
    }
    let analyzer = cfg.analyzer()?;
    let index = open_index(&cfg.index_path)?;
    let topics = read_topics(&opts.topics, opts.topic_format)?;
    let rm3 = cfg.rm3_params();
    let retriever = Retriever::new(&index, &analyzer, cfg.bm25, rm3)?;
    let tag = opts.tag.clone().unwrap_or_else(|| opts.strategy.name().to_string());

    let bundles = match &opts.bundles {
        Some(p) if opts.strategy.needs_generated() => read_bundles(p)?,
        _ => Vec::new(),
    };
    let (generated, fallback) = if opts.strategy.needs_generated() {
        generated_queries(&topics, &bundles, opts.strategy, &analyzer)
    } else {
        (HashMap::new(), Vec::new())
    };
    let mut warnings = Vec::new();
    if !fallback.is_empty() {
        warnings.push(format!("no generated query, used the original note: {}", fallback.join(", ")));
    }
    let output = retriever.run_topics(
        &topics,
        opts.strategy,
        opts.strategy.needs_generated().then_some(&generated),
        opts.k,
        &tag,
    )?;
    warnings.extend(output.warnings.iter().cloned());
    write_run(&output.entries, &opts.out)?;

    let used: Vec<&QueryBundle> = {
        let ids: BTreeSet<&str> = topics.iter().map(|t| t.topic_id.as_str()).collect();
        bundles.iter().filter(|b| ids.contains(b.topic_id.as_str())).collect()
    };
    let uniq = |f: fn(&QueryBundle) -> &str| -> Vec<String> {
        used.iter().map(|b| f(b).to_string()).collect::<BTreeSet<_>>().into_iter().collect()
    };
    let mean_expansion_terms = (opts.strategy == RunStrategy::OriginalRm3).then(|| {
        let notes: HashMap<&str, &str> = topics.iter().map(|t| (t.topic_id.as_str(), t.note_text.as_str())).collect();
        mean(output.query_lengths.iter().map(|(t, n)| {
            n.saturating_sub(analyzer.process(notes[t.as_str()]).term_count()) as f64
        }))
    });
    let meta = RunMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        tag,
        strategy: opts.strategy,
        k: opts.k,
        bm25: cfg.bm25,
        rm3: (opts.strategy == RunStrategy::OriginalRm3).then_some(rm3),
        pipeline_version: PIPELINE_VERSION.to_string(),
        stoplist_hash: analyzer.stoplist().hash().to_string(),
        pipeline_hash: analyzer.pipeline_hash().to_string(),
        index: IndexSummary::of(&index, sha256_file(&cfg.index_path)?),
        topics: FileRef::of(&opts.topics)?,
        bundles: match &opts.bundles {
            Some(p) if opts.strategy.needs_generated() => Some(FileRef::of(p)?),
            _ => None,
        },
        template_ids: uniq(|b| &b.template_id),
        model_names: uniq(|b| &b.model_name),
        n_topics: topics.len(),
        fallback_topics: fallback,
        mean_query_terms: mean(output.query_lengths.iter().map(|(_, n)| *n as f64)),
        mean_generated_terms: opts
            .strategy
            .needs_generated()
            .then(|| mean(used.iter().map(|b| b.reprocess(&analyzer).term_count() as f64))),
        mean_latency_s: opts
            .strategy
            .needs_generated()
            .then(|| mean(used.iter().map(|b| b.latency_s))),
        mean_expansion_terms,
        warnings,
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    let meta_path = sidecar(&opts.out, ".meta.json");
    std::fs::write(&meta_path, text).with_context(|| format!("writing {}", meta_path.display()))?;
    Ok((output, meta))
}

pub struct EvaluateOptions {
    /// The first run is the baseline.
    pub runs: Vec<PathBuf>,
    /// Display names; defaults to each run's tag, or its file name.
    pub names: Vec<String>,
    pub qrels: PathBuf,
    pub eval: EvalConfig,
    /// Number of comparisons to correct for. Required with two or more runs.
    pub family_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemResult {
    pub name: String,
    pub run_path: PathBuf,
    pub report: MetricReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_latency_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_terms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub systems: Vec<SystemResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significance: Option<SignificanceReport>,
    pub table: String,
}

fn read_meta(run: &Path) -> Option<RunMeta> {
    let text = std::fs::read_to_string(sidecar(run, ".meta.json")).ok()?;
    serde_json::from_str(&text).ok()
}

/// Score each run, test every later run against the first, and render the
/// results table.
pub fn evaluate(opts: &EvaluateOptions) -> anyhow::Result<Evaluation> {
    if opts.runs.is_empty() {
        bail!("no runs to evaluate");
    }
    if !opts.names.is_empty() && opts.names.len() != opts.runs.len() {
        bail!("{} names given for {} runs", opts.names.len(), opts.runs.len());
    }
    let family_size = match (opts.runs.len(), opts.family_size) {
        (1, m) => m,
        (_, Some(m)) if m >= 1 => Some(m),
        (n, _) => bail!(
            "comparing {n} runs needs --family-size (the number of tests to correct for, e.g. {})",
            n - 1
        ),
    };
    let qrels = load_qrels(&opts.qrels)?;
    let mut systems = Vec::with_capacity(opts.runs.len());
    for (i, path) in opts.runs.iter().enumerate() {
        let entries = read_run(path)?;
        let report = evaluate_run(&entries, &qrels, &opts.eval);
        for w in &report.warnings {
            eprintln!("warning: {}: {w}", path.display());
        }
        let meta = read_meta(path);
        let name = match opts.names.get(i) {
            Some(n) => n.clone(),
            None => meta
                .as_ref()
                .map(|m| m.tag.clone())
                .unwrap_or_else(|| path.file_name().unwrap_or_default().to_string_lossy().into_owned()),
        };
        let avg_terms = meta
            .as_ref()
            .and_then(|m| m.mean_generated_terms.or(m.mean_expansion_terms));
        systems.push(SystemResult {
            name,
            run_path: path.clone(),
            report,
            avg_latency_s: meta.as_ref().and_then(|m| m.mean_latency_s),
            avg_terms,
        });
    }

    let measures = opts.eval.effective_measures();
    let significance = match family_size {
        Some(m) if systems.len() >= 2 => {
            let base = (systems[0].name.as_str(), &systems[0].report);
            let others: Vec<(&str, &MetricReport)> =
                systems[1..].iter().map(|s| (s.name.as_str(), &s.report)).collect();
            let sig = compare_systems(base, &others, &measures, m)?;
            for w in &sig.warnings {
                eprintln!("warning: {w}");
            }
            Some(sig)
        }
        _ => None,
    };
    let rows: Vec<SystemRow> = systems
        .iter()
        .map(|s| SystemRow {
            name: s.name.clone(),
            aggregate: s.report.aggregate.clone(),
            avg_latency_s: s.avg_latency_s,
            avg_terms: s.avg_terms,
        })
        .collect();
    let table = render_table(&rows, &measures, significance.as_ref());
    Ok(Evaluation {
        systems,
        significance,
        table,
    })
}
