//! Per-topic measures over a [`JudgedRanking`].

use serde::{Deserialize, Serialize};

use super::{EvalError, JudgedRanking, TopicJudgments};
use crate::corpus::Grade;

/// nDCG gain function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    /// gain = grade
    #[default]
    Linear,
    /// gain = 2^grade - 1
    Exponential,
}

impl Gain {
    pub fn of(self, grade: Option<Grade>) -> f64 {
        let g = grade.map_or(0, Grade::value) as i32;
        match self {
            Gain::Linear => g as f64,
            Gain::Exponential => 2f64.powi(g) - 1.0,
        }
    }
}

/// Binary relevance: only eligible counts.
pub fn binarize(grade: Option<Grade>) -> u8 {
    u8::from(grade == Some(Grade::Eligible))
}

/// [`binarize`] for raw integer labels.
pub fn binarize_label(label: Option<i64>) -> Result<u8, EvalError> {
    match label {
        None => Ok(0),
        Some(v) => Grade::try_from(v)
            .map(|g| binarize(Some(g)))
            .map_err(|_| EvalError::InvalidGrade(v)),
    }
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

pub fn ndcg_at_k(jr: &JudgedRanking, judged: &TopicJudgments, k: usize, gain: Gain) -> f64 {
    let dcg: f64 = jr
        .grades()
        .take(k)
        .enumerate()
        .map(|(i, g)| gain.of(g) / discount(i + 1))
        .sum();
    let mut ideal: Vec<Grade> = judged.grades.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| gain.of(Some(g)) / discount(i + 1))
        .sum();
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

fn relevant_in_top(jr: &JudgedRanking, k: usize) -> usize {
    jr.grades().take(k).map(|g| binarize(g) as usize).sum()
}

/// Relevant documents in the top `k`, divided by `k`.
pub fn precision_at_k(jr: &JudgedRanking, k: usize) -> f64 {
    relevant_in_top(jr, k) as f64 / k as f64
}

/// Relevant documents in the top `k`, divided by the number judged
/// relevant; 0 when there are none.
pub fn recall_at_k(jr: &JudgedRanking, judged: &TopicJudgments, k: usize) -> f64 {
    if judged.relevant == 0 {
        0.0
    } else {
        relevant_in_top(jr, k) as f64 / judged.relevant as f64
    }
}

pub fn reciprocal_rank(jr: &JudgedRanking) -> f64 {
    jr.grades()
        .position(|g| binarize(g) == 1)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Bpref. Unjudged documents are ignored; judged non-relevant documents
/// ranked above each relevant one are penalised.
pub fn bpref(jr: &JudgedRanking, judged: &TopicJudgments) -> f64 {
    let r = judged.relevant;
    if r == 0 {
        return 0.0;
    }
    let denom = r.min(judged.nonrelevant) as f64;
    let mut nonrel_above = 0usize;
    let mut sum = 0.0;
    for g in jr.grades().flatten() {
        if binarize(Some(g)) == 1 {
            sum += if denom == 0.0 {
                1.0
            } else {
                1.0 - nonrel_above.min(r) as f64 / denom
            };
        } else {
            nonrel_above += 1;
        }
    }
    sum / r as f64
}
