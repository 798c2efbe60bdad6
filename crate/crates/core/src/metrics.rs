//! Expression recognition rate with token-edit tolerance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emitter::{tokenize_latex, TokenSequence, TokenizeError};

/// Published IDN row, shown for reference only.
pub const PAPER_BASELINE_LABEL: &str = "IDN (published, not reproduced)";
pub const PAPER_EXPRATE: f64 = 0.6782;
pub const PAPER_EXPRATE_LE1: f64 = 0.8291;
pub const PAPER_EXPRATE_LE2: f64 = 0.8837;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("duplicate prediction for image_id {0:?}")]
    DuplicatePrediction(String),
    #[error("duplicate ground truth for image_id {0:?}")]
    DuplicateGroundTruth(String),
    #[error("prediction {0:?} has no ground truth")]
    UnknownPrediction(String),
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("ground truth line {line}: {reason}")]
    GroundTruthLine { line: usize, reason: String },
    #[error("ground truth line {line}: {source}")]
    GroundTruthTokens {
        line: usize,
        #[source]
        source: TokenizeError,
    },
}

/// Levenshtein distance with unit costs over arbitrary tokens.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = (above + 1).min(row[j] + 1).min(diag + usize::from(x != y));
            diag = above;
        }
    }
    row[b.len()]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressionScore {
    pub image_id: String,
    /// `None` when the expression has no prediction.
    pub distance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_expressions: usize,
    pub exprate: f64,
    pub exprate_le1: f64,
    pub exprate_le2: f64,
    /// Sorted by image_id.
    pub per_expression: Vec<ExpressionScore>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

/// Scores predictions against ground truth. Ground-truth ids without a
/// prediction count as misses at every tolerance.
pub fn evaluate(
    preds: &[(String, TokenSequence)],
    gts: &[(String, TokenSequence)],
) -> Result<EvalReport, MetricsError> {
    let mut gt_map: BTreeMap<&str, &TokenSequence> = BTreeMap::new();
    for (id, seq) in gts {
        if gt_map.insert(id, seq).is_some() {
            return Err(MetricsError::DuplicateGroundTruth(id.clone()));
        }
    }
    if gt_map.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let mut pred_map: BTreeMap<&str, &TokenSequence> = BTreeMap::new();
    for (id, seq) in preds {
        if !gt_map.contains_key(id.as_str()) {
            return Err(MetricsError::UnknownPrediction(id.clone()));
        }
        if pred_map.insert(id, seq).is_some() {
            return Err(MetricsError::DuplicatePrediction(id.clone()));
        }
    }

    let per_expression: Vec<ExpressionScore> = gt_map
        .iter()
        .map(|(id, gt)| ExpressionScore {
            image_id: id.to_string(),
            distance: pred_map
                .get(id)
                .map(|p| edit_distance(p.tokens(), gt.tokens())),
        })
        .collect();
    let n = per_expression.len();
    let rate = |k: usize| {
        let hits = per_expression
            .iter()
            .filter(|s| s.distance.is_some_and(|d| d <= k))
            .count();
        hits as f64 / n as f64
    };
    Ok(EvalReport {
        n_expressions: n,
        exprate: rate(0),
        exprate_le1: rate(1),
        exprate_le2: rate(2),
        per_expression,
    })
}

/// Parses `image_id<TAB>latex` lines into token sequences. Blank lines are skipped.
pub fn parse_ground_truth_tsv(text: &str) -> Result<Vec<(String, TokenSequence)>, MetricsError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, latex) = line
            .split_once('\t')
            .ok_or_else(|| MetricsError::GroundTruthLine {
                line: line_no,
                reason: "expected `image_id<TAB>latex`".into(),
            })?;
        if id.is_empty() {
            return Err(MetricsError::GroundTruthLine {
                line: line_no,
                reason: "empty image_id".into(),
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(MetricsError::DuplicateGroundTruth(id.to_string()));
        }
        let tokens = tokenize_latex(latex.trim_end_matches('\r')).map_err(|source| {
            MetricsError::GroundTruthTokens {
                line: line_no,
                source,
            }
        })?;
        out.push((id.to_string(), tokens));
    }
    Ok(out)
}

pub fn percent(rate: f64) -> String {
    format!("{:.2}%", rate * 100.0)
}

/// Aligned plain-text table with the columns ExpRate, <=1 and <=2.
pub fn format_table(report: &EvalReport, paper_baseline: bool) -> String {
    let mut rows = vec![[
        "Method".to_string(),
        "ExpRate".to_string(),
        "<=1".to_string(),
        "<=2".to_string(),
    ]];
    if paper_baseline {
        rows.push([
            PAPER_BASELINE_LABEL.to_string(),
            percent(PAPER_EXPRATE),
            percent(PAPER_EXPRATE_LE1),
            percent(PAPER_EXPRATE_LE2),
        ]);
    }
    rows.push([
        format!("this run (n={})", report.n_expressions),
        percent(report.exprate),
        percent(report.exprate_le1),
        percent(report.exprate_le2),
    ]);
    let widths: Vec<usize> = (0..4)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let mut line = format!("{:<w$}", row[0], w = widths[0]);
        for c in 1..4 {
            write!(line, "  {:>w$}", row[c], w = widths[c]).expect("write to string");
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
