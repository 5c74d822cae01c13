//! TREC-style evaluation: graded nDCG, binary P@k / R@k / RR / Bpref,
//! condensed variants and paired significance testing.
//!
//! Binary measures count only eligible trials (grade 2) as relevant.
//! Unjudged documents are non-relevant for raw measures and are removed
//! entirely by [`condense`].

mod measures;
mod report;
mod stats;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{topic_order, Grade, Qrels, RunEntry};

pub use measures::{binarize, binarize_label, bpref, ndcg_at_k, precision_at_k, recall_at_k, reciprocal_rank, Gain};
pub use report::{format_value, render_table, SystemRow, SIGNIFICANCE_MARKER};
pub use stats::{
    compare_systems, ln_gamma, paired_ttest, paired_ttest_bonferroni, regularized_incomplete_beta,
    student_t_two_sided_p, SignificancePair, SignificanceReport, TTest, SIGNIFICANCE_LEVEL,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("grade {0} outside {{0,1,2}}")]
    InvalidGrade(i64),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired observations, got {0}")]
    TooFewObservations(usize),
    #[error("differences are constant and non-zero ({0}); t is undefined")]
    DegenerateVariance(f64),
    #[error("family size must be >= 1")]
    InvalidFamilySize,
    #[error("unknown measure {0:?}")]
    UnknownMeasure(String),
}

/// Reported measures, in table column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "nDCG@10")]
    Ndcg10,
    #[serde(rename = "Bpref")]
    Bpref,
    #[serde(rename = "P@10")]
    P10,
    #[serde(rename = "R@25")]
    R25,
    #[serde(rename = "MRR")]
    Mrr,
    #[serde(rename = "P@10_condensed")]
    P10Condensed,
    #[serde(rename = "nDCG@10_condensed")]
    Ndcg10Condensed,
}

impl Measure {
    /// The five standard columns.
    pub const STANDARD: [Measure; 5] = [
        Measure::Ndcg10,
        Measure::Bpref,
        Measure::P10,
        Measure::R25,
        Measure::Mrr,
    ];

    pub const ALL: [Measure; 7] = [
        Measure::Ndcg10,
        Measure::Bpref,
        Measure::P10,
        Measure::R25,
        Measure::Mrr,
        Measure::P10Condensed,
        Measure::Ndcg10Condensed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Ndcg10 => "nDCG@10",
            Measure::Bpref => "Bpref",
            Measure::P10 => "P@10",
            Measure::R25 => "R@25",
            Measure::Mrr => "MRR",
            Measure::P10Condensed => "P@10_condensed",
            Measure::Ndcg10Condensed => "nDCG@10_condensed",
        }
    }

    /// Condensed counterpart, where one is defined.
    pub fn condensed(self) -> Option<Measure> {
        match self {
            Measure::P10 => Some(Measure::P10Condensed),
            Measure::Ndcg10 => Some(Measure::Ndcg10Condensed),
            _ => None,
        }
    }

    pub fn is_condensed(self) -> bool {
        matches!(self, Measure::P10Condensed | Measure::Ndcg10Condensed)
    }

    fn compute(self, raw: &JudgedRanking, condensed: &JudgedRanking, judged: &TopicJudgments, gain: Gain) -> f64 {
        match self {
            Measure::Ndcg10 => ndcg_at_k(raw, judged, 10, gain),
            Measure::Bpref => bpref(raw, judged),
            Measure::P10 => precision_at_k(raw, 10),
            Measure::R25 => recall_at_k(raw, judged, 25),
            Measure::Mrr => reciprocal_rank(raw),
            Measure::P10Condensed => precision_at_k(condensed, 10),
            Measure::Ndcg10Condensed => ndcg_at_k(condensed, judged, 10, gain),
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Measure {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase();
        Measure::ALL
            .into_iter()
            .find(|m| m.name().to_ascii_lowercase() == norm)
            .or(match norm.as_str() {
                "ndcg_cut_10" | "ndcg10" => Some(Measure::Ndcg10),
                "p_10" | "p10" => Some(Measure::P10),
                "recall_25" | "r25" => Some(Measure::R25),
                "recip_rank" | "rr" => Some(Measure::Mrr),
                _ => None,
            })
            .ok_or_else(|| EvalError::UnknownMeasure(s.to_string()))
    }
}

/// A topic's ranking with the grade of each retrieved document, `None`
/// when unjudged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgedRanking {
    pub topic_id: String,
    pub entries: Vec<(String, Option<Grade>)>,
}

impl JudgedRanking {
    /// Attach grades to docnos given in rank order.
    pub fn new<'a, I>(topic_id: &str, docnos: I, qrels: &Qrels) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        JudgedRanking {
            topic_id: topic_id.to_string(),
            entries: docnos
                .into_iter()
                .map(|d| (d.to_string(), qrels.grade(topic_id, d)))
                .collect(),
        }
    }

    pub fn grades(&self) -> impl Iterator<Item = Option<Grade>> + '_ {
        self.entries.iter().map(|e| e.1)
    }
}

/// Drop unjudged entries, closing the rank gaps.
pub fn condense(jr: &JudgedRanking) -> JudgedRanking {
    JudgedRanking {
        topic_id: jr.topic_id.clone(),
        entries: jr.entries.iter().filter(|e| e.1.is_some()).cloned().collect(),
    }
}

/// Judgment counts for one topic, as needed by the measures.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopicJudgments {
    /// Every judged grade, in any order (ideal DCG input).
    pub grades: Vec<Grade>,
    /// Eligible (binary-relevant) count.
    pub relevant: usize,
    /// Judged but not eligible.
    pub nonrelevant: usize,
}

impl TopicJudgments {
    pub fn from_qrels(qrels: &Qrels, topic: &str) -> Self {
        let grades: Vec<Grade> = qrels
            .judgments(topic)
            .map(|m| m.values().copied().collect())
            .unwrap_or_default();
        Self::from_grades(grades)
    }

    pub fn from_grades(grades: Vec<Grade>) -> Self {
        let relevant = grades.iter().filter(|g| binarize(Some(**g)) == 1).count();
        TopicJudgments {
            nonrelevant: grades.len() - relevant,
            relevant,
            grades,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub measures: Vec<Measure>,
    /// Also report the condensed variant of every requested measure that
    /// has one.
    pub condensed: bool,
    pub gain: Gain,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            measures: Measure::STANDARD.to_vec(),
            condensed: false,
            gain: Gain::Linear,
        }
    }
}

impl EvalConfig {
    /// The requested measures plus condensed counterparts, deduplicated, in
    /// column order.
    pub fn effective_measures(&self) -> Vec<Measure> {
        let mut out: Vec<Measure> = self.measures.clone();
        if self.condensed {
            out.extend(self.measures.iter().filter_map(|m| m.condensed()));
        }
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub measures: Vec<Measure>,
    pub gain: Gain,
    pub per_topic: BTreeMap<String, BTreeMap<Measure, f64>>,
    /// Mean over the judged topic set.
    pub aggregate: BTreeMap<Measure, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricReport {
    /// Per-topic values of one measure, in topic order.
    pub fn topic_values(&self, measure: Measure) -> Vec<(String, f64)> {
        let mut v: Vec<(String, f64)> = self
            .per_topic
            .iter()
            .map(|(t, m)| (t.clone(), m.get(&measure).copied().unwrap_or(0.0)))
            .collect();
        v.sort_by(|a, b| topic_order(&a.0, &b.0));
        v
    }
}

/// Evaluate a run against qrels. Entries are ordered by their rank field.
/// Every qrels topic is scored; topics missing from the run score 0 and
/// run topics without judgments are reported and skipped.
pub fn evaluate_run(run: &[RunEntry], qrels: &Qrels, config: &EvalConfig) -> MetricReport {
    let measures = config.effective_measures();
    let mut by_topic: HashMap<&str, Vec<&RunEntry>> = HashMap::new();
    for e in run {
        by_topic.entry(e.topic_id.as_str()).or_default().push(e);
    }
    let mut warnings = Vec::new();
    if run.is_empty() {
        warnings.push("run is empty; every measure is 0".to_string());
    }
    let mut extra: Vec<&str> = by_topic
        .keys()
        .copied()
        .filter(|t| !qrels.contains_topic(t))
        .collect();
    extra.sort_by(|a, b| topic_order(a, b));
    if !extra.is_empty() {
        warnings.push(format!("run topics without judgments, excluded: {}", extra.join(", ")));
    }
    let missing: Vec<&str> = qrels
        .topics()
        .filter(|t| !by_topic.contains_key(t))
        .collect();
    if !missing.is_empty() && !run.is_empty() {
        warnings.push(format!("judged topics missing from run, scored 0: {}", missing.join(", ")));
    }
    for w in &warnings {
        tracing::warn!("{w}");
    }

    let mut per_topic = BTreeMap::new();
    for topic in qrels.topics() {
        let mut entries = by_topic.remove(topic).unwrap_or_default();
        entries.sort_by_key(|e| e.rank);
        let raw = JudgedRanking::new(topic, entries.iter().map(|e| e.docno.as_str()), qrels);
        let cond = condense(&raw);
        let judged = TopicJudgments::from_qrels(qrels, topic);
        let values: BTreeMap<Measure, f64> = measures
            .iter()
            .map(|m| (*m, m.compute(&raw, &cond, &judged, config.gain)))
            .collect();
        per_topic.insert(topic.to_string(), values);
    }

    let n = per_topic.len() as f64;
    let aggregate = measures
        .iter()
        .map(|m| {
            let sum: f64 = per_topic.values().map(|v| v[m]).sum();
            (*m, if n > 0.0 { sum / n } else { 0.0 })
        })
        .collect();
    MetricReport {
        measures,
        gain: config.gain,
        per_topic,
        aggregate,
        warnings,
    }
}
