//! Plain-text results tables: one row per system, one column per measure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Measure, SignificanceReport};

/// Appended to values that differ significantly from the baseline.
pub const SIGNIFICANCE_MARKER: &str = "°";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRow {
    pub name: String,
    pub aggregate: BTreeMap<Measure, f64>,
    /// Mean generation latency, for LLM-generated queries.
    pub avg_latency_s: Option<f64>,
    pub avg_terms: Option<f64>,
}

/// Three decimals without the leading zero: `.444`, `1.000`.
pub fn format_value(v: f64) -> String {
    let s = format!("{v:.3}");
    match s.strip_prefix("0.") {
        Some(rest) => format!(".{rest}"),
        None => match s.strip_prefix("-0.") {
            Some(rest) => format!("-.{rest}"),
            None => s,
        },
    }
}

fn header(m: Measure) -> &'static str {
    match m {
        Measure::P10Condensed => "P@10 (Condensed)",
        Measure::Ndcg10Condensed => "nDCG@10 (Condensed)",
        other => other.name(),
    }
}

/// Render an aligned table. The first row is the baseline; significance
/// markers come from `significance` when given.
pub fn render_table(rows: &[SystemRow], measures: &[Measure], significance: Option<&SignificanceReport>) -> String {
    let mut measures = measures.to_vec();
    measures.sort();
    let with_latency = rows.iter().any(|r| r.avg_latency_s.is_some());
    let with_terms = rows.iter().any(|r| r.avg_terms.is_some());

    let mut head: Vec<String> = vec!["System".into()];
    head.extend(measures.iter().map(|m| header(*m).to_string()));
    if with_latency {
        head.push("Avg. time (s)".into());
    }
    if with_terms {
        head.push("Avg. terms".into());
    }

    let mut body: Vec<Vec<String>> = Vec::with_capacity(rows.len());
    for row in rows {
        let mut cells = vec![row.name.clone()];
        for m in &measures {
            let mut cell = row.aggregate.get(m).map_or("-".to_string(), |v| format_value(*v));
            if significance.is_some_and(|s| s.is_significant(&row.name, *m)) {
                cell.push_str(SIGNIFICANCE_MARKER);
            }
            cells.push(cell);
        }
        if with_latency {
            cells.push(row.avg_latency_s.map_or("-".into(), |v| format!("{v:.1}")));
        }
        if with_terms {
            cells.push(row.avg_terms.map_or("-".into(), |v| format!("{v:.0}")));
        }
        body.push(cells);
    }

    let width = |col: usize| {
        std::iter::once(&head)
            .chain(&body)
            .map(|r| r[col].chars().count())
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..head.len()).map(width).collect();
    let line = |cells: &[String]| {
        let mut out = String::new();
        for (i, c) in cells.iter().enumerate() {
            let pad = widths[i] - c.chars().count();
            if i == 0 {
                out.push_str(c);
                out.push_str(&" ".repeat(pad));
            } else {
                out.push_str("  ");
                out.push_str(&" ".repeat(pad));
                out.push_str(c);
            }
        }
        out.trim_end().to_string()
    };

    let mut out = line(&head);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for cells in &body {
        out.push_str(&line(cells));
        out.push('\n');
    }
    out
}
