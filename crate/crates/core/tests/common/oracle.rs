//! Brute-force reference implementations, written straight from the
//! definitions and sharing no code with the library beyond the text
//! pipeline. Also builds randomized instances for them.

use std::collections::{BTreeMap, HashMap};

use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

pub const VOCAB: &[&str] = &[
    "asthma", "insulin", "tumor", "cough", "fever", "renal", "cardiac", "tremor", "lung", "glucose",
    "biopsy", "stroke", "sepsis", "anemia", "edema", "rash", "nausea", "obesity", "dialysis", "statin",
    "the", "and", "with",
];

/// A random corpus of short word sequences (raw text, one per document).
pub fn random_texts(rng: &mut StdRng, max_docs: usize, max_len: usize) -> Vec<String> {
    let n = rng.random_range(1..=max_docs);
    (0..n)
        .map(|_| {
            let len = rng.random_range(0..=max_len);
            (0..len)
                .map(|_| *VOCAB.choose(rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

pub fn random_query(rng: &mut StdRng, max_terms: usize) -> String {
    let n = rng.random_range(1..=max_terms);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// BM25 over explicit token lists.
pub fn bm25_scores(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    docs.iter()
        .map(|d| {
            let dl = d.len() as f64;
            query
                .iter()
                .map(|q| {
                    let tf = d.iter().filter(|t| *t == q).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let df = docs.iter().filter(|d| d.contains(q)).count() as f64;
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
                })
                .sum()
        })
        .collect()
}

/// Positive-score documents, score descending then docno ascending.
pub fn ranking(docnos: &[String], scores: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut r: Vec<(String, f64)> = docnos
        .iter()
        .cloned()
        .zip(scores.iter().copied())
        .filter(|(_, s)| *s > 0.0)
        .collect();
    r.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    r.truncate(k);
    r
}

/// RM3 expansion terms: softmax over the top `fb_docs` BM25 scores, term
/// weight sum_d w(d) tf/dl, minus stopwords and query terms.
pub fn rm3_terms(
    docnos: &[String],
    docs: &[Vec<String>],
    query: &[String],
    is_stop: impl Fn(&str) -> bool,
    fb_docs: usize,
    fb_terms: usize,
) -> Vec<(String, f64)> {
    let scores = bm25_scores(docs, query, 1.2, 0.75);
    let top = ranking(docnos, &scores, fb_docs);
    if top.is_empty() || fb_terms == 0 {
        return Vec::new();
    }
    let max = top.iter().map(|t| t.1).fold(f64::MIN, f64::max);
    let z: f64 = top.iter().map(|t| (t.1 - max).exp()).sum();
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    for (docno, score) in &top {
        let i = docnos.iter().position(|d| d == docno).unwrap();
        let w = (score - max).exp() / z;
        let dl = docs[i].len() as f64;
        let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &docs[i] {
            *tf.entry(t).or_default() += 1;
        }
        for (t, c) in tf {
            *weights.entry(t.to_string()).or_default() += w * c as f64 / dl;
        }
    }
    let mut out: Vec<(String, f64)> = weights
        .into_iter()
        .filter(|(t, _)| !is_stop(t) && !query.contains(t))
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out.truncate(fb_terms);
    out
}

/// A judged ranking instance: the ranked docnos and the topic's qrels
/// (docno -> grade); docs missing from `judged` are unjudged.
#[derive(Debug, Clone)]
pub struct JudgedInstance {
    pub ranked: Vec<String>,
    pub judged: HashMap<String, u8>,
}

pub fn random_judged(rng: &mut StdRng, unjudged_rate: f64) -> JudgedInstance {
    let pool = rng.random_range(1..=30);
    let mut docs: Vec<String> = (0..pool).map(|i| format!("D{i:02}")).collect();
    let mut judged = HashMap::new();
    for d in &docs {
        if !rng.random_bool(unjudged_rate) {
            judged.insert(d.clone(), rng.random_range(0..=2u8));
        }
    }
    docs.shuffle(rng);
    let len = rng.random_range(0..=pool.min(20));
    docs.truncate(len);
    JudgedInstance { ranked: docs, judged }
}

fn grade_at(inst: &JudgedInstance, i: usize) -> Option<u8> {
    inst.judged.get(&inst.ranked[i]).copied()
}

pub fn condensed(inst: &JudgedInstance) -> JudgedInstance {
    JudgedInstance {
        ranked: inst
            .ranked
            .iter()
            .filter(|d| inst.judged.contains_key(*d))
            .cloned()
            .collect(),
        judged: inst.judged.clone(),
    }
}

pub fn ndcg10(inst: &JudgedInstance) -> f64 {
    let mut dcg = 0.0;
    for i in 0..inst.ranked.len().min(10) {
        let g = grade_at(inst, i).unwrap_or(0) as f64;
        dcg += g / ((i + 2) as f64).log2();
    }
    let mut ideal: Vec<u8> = inst.judged.values().copied().collect();
    ideal.sort();
    ideal.reverse();
    let mut idcg = 0.0;
    for (i, g) in ideal.iter().take(10).enumerate() {
        idcg += *g as f64 / ((i + 2) as f64).log2();
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

fn is_rel(g: Option<u8>) -> bool {
    g == Some(2)
}

pub fn p10(inst: &JudgedInstance) -> f64 {
    (0..inst.ranked.len().min(10)).filter(|&i| is_rel(grade_at(inst, i))).count() as f64 / 10.0
}

pub fn r25(inst: &JudgedInstance) -> f64 {
    let r = inst.judged.values().filter(|g| **g == 2).count();
    if r == 0 {
        return 0.0;
    }
    (0..inst.ranked.len().min(25)).filter(|&i| is_rel(grade_at(inst, i))).count() as f64 / r as f64
}

pub fn rr(inst: &JudgedInstance) -> f64 {
    for i in 0..inst.ranked.len() {
        if is_rel(grade_at(inst, i)) {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

pub fn bpref(inst: &JudgedInstance) -> f64 {
    let r = inst.judged.values().filter(|g| **g == 2).count();
    let nnr = inst.judged.len() - r;
    if r == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..inst.ranked.len() {
        if !is_rel(grade_at(inst, i)) {
            continue;
        }
        let above = (0..i)
            .filter(|&j| matches!(grade_at(inst, j), Some(g) if g != 2))
            .count();
        total += if nnr == 0 {
            1.0
        } else {
            1.0 - (above.min(r) as f64) / (r.min(nnr) as f64)
        };
    }
    total / r as f64
}

/// Sample mean, t statistic and two-sided p via an independent t CDF.
pub fn ttest_statrs(a: &[f64], b: &[f64]) -> (f64, f64) {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::statistics::Statistics;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().copied().mean();
    let sd = d.iter().copied().std_dev();
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).unwrap();
    (t, 2.0 * dist.cdf(-t.abs()))
}
