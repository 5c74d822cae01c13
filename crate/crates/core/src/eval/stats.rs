//! Paired t-test with Bonferroni correction.
//!
//! The Student t tail comes from the regularized incomplete beta function,
//! `P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)`, evaluated with a continued
//! fraction (modified Lentz) and a Lanczos log-gamma.

use serde::{Deserialize, Serialize};

use super::{EvalError, Measure, MetricReport};

/// Family-wise significance level before correction.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x` in `[0, 1]`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Paired two-sided t-test on `a - b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewObservations(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let df = nf - 1.0;
    if d.iter().all(|x| *x == d[0]) {
        if d[0] == 0.0 {
            return Ok(TTest {
                n,
                mean_diff: 0.0,
                t: 0.0,
                df,
                p: 1.0,
            });
        }
        return Err(EvalError::DegenerateVariance(d[0]));
    }
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / df;
    let t = mean / (var.sqrt() / nf.sqrt());
    Ok(TTest {
        n,
        mean_diff: mean,
        t,
        df,
        p: student_t_two_sided_p(t, df),
    })
}

/// `(test, alpha / m, significant)`.
pub fn paired_ttest_bonferroni(
    a: &[f64],
    b: &[f64],
    family_size: usize,
) -> Result<(TTest, f64, bool), EvalError> {
    if family_size == 0 {
        return Err(EvalError::InvalidFamilySize);
    }
    let test = paired_ttest(a, b)?;
    let alpha = SIGNIFICANCE_LEVEL / family_size as f64;
    Ok((test, alpha, test.p < alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificancePair {
    pub system_a: String,
    pub system_b: String,
    pub measure: Measure,
    pub t_stat: f64,
    pub p_value: f64,
    pub alpha_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub family_size: usize,
    pub alpha: f64,
    pub pairs: Vec<SignificancePair>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SignificanceReport {
    pub fn is_significant(&self, system: &str, measure: Measure) -> bool {
        self.pairs
            .iter()
            .any(|p| p.system_b == system && p.measure == measure && p.significant)
    }
}

/// Test every system against the baseline on each measure, pairing
/// per-topic values by topic id. Pairs whose differences are constant and
/// non-zero have no defined t and are reported as warnings.
pub fn compare_systems(
    baseline: (&str, &MetricReport),
    others: &[(&str, &MetricReport)],
    measures: &[Measure],
    family_size: usize,
) -> Result<SignificanceReport, EvalError> {
    if family_size == 0 {
        return Err(EvalError::InvalidFamilySize);
    }
    let (base_name, base) = baseline;
    let mut report = SignificanceReport {
        family_size,
        alpha: SIGNIFICANCE_LEVEL,
        pairs: Vec::new(),
        warnings: Vec::new(),
    };
    for (name, other) in others {
        for &m in measures {
            let a: Vec<(String, f64)> = base.topic_values(m);
            let b: Vec<f64> = a
                .iter()
                .map(|(t, _)| {
                    other
                        .per_topic
                        .get(t)
                        .and_then(|v| v.get(&m))
                        .copied()
                        .unwrap_or(0.0)
                })
                .collect();
            let a: Vec<f64> = a.into_iter().map(|(_, v)| v).collect();
            match paired_ttest_bonferroni(&b, &a, family_size) {
                Ok((test, alpha, significant)) => report.pairs.push(SignificancePair {
                    system_a: base_name.to_string(),
                    system_b: name.to_string(),
                    measure: m,
                    t_stat: test.t,
                    p_value: test.p,
                    alpha_adjusted: alpha,
                    significant,
                }),
                Err(e) => report
                    .warnings
                    .push(format!("{name} vs {base_name} on {m}: {e}")),
            }
        }
    }
    Ok(report)
}
