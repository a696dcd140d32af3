//! Regression and ranking metrics for LTV-style predictions, plus the
//! parser for the candidate output contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::MetricVector;

/// Aligned predictions and labels. Labels may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPredictions {
    y_hat: Vec<f64>,
    y: Vec<f64>,
}

impl LabeledPredictions {
    pub fn new(y_hat: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if y_hat.len() != y.len() {
            return Err(Error::UndefinedMetric(format!(
                "length mismatch: {} predictions vs {} labels",
                y_hat.len(),
                y.len()
            )));
        }
        if y.len() < 2 {
            return Err(Error::UndefinedMetric("need at least two samples".into()));
        }
        if y_hat.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::UndefinedMetric("non-finite value".into()));
        }
        Ok(LabeledPredictions { y_hat, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn predictions(&self) -> &[f64] {
        &self.y_hat
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GiniVariant {
    /// Cumulative-gain Gini normalized by the label-ordered Gini.
    #[default]
    Standard,
    /// `(2·Σ r_ŷ·r_y − n(n+1)) / (n(n−1))`, unbounded above.
    RankSum,
}

/// `Σ|ŷ − y| / Σ|y|`.
pub fn error_rate(lp: &LabeledPredictions) -> Result<f64> {
    let denom: f64 = lp.y.iter().map(|v| v.abs()).sum();
    if denom <= 0.0 {
        return Err(Error::UndefinedMetric("error rate: Σ|y| is zero".into()));
    }
    let num: f64 = lp.y_hat.iter().zip(&lp.y).map(|(p, t)| (p - t).abs()).sum();
    Ok(num / denom)
}

pub fn rmse(lp: &LabeledPredictions) -> f64 {
    let sse: f64 = lp.y_hat.iter().zip(&lp.y).map(|(p, t)| (p - t) * (p - t)).sum();
    (sse / lp.len() as f64).sqrt()
}

/// 1-based ascending ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) → ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn has_two_distinct(values: &[f64]) -> bool {
    values.iter().any(|v| *v != values[0])
}

/// Rank correlation with average ranks for ties. Without ties this equals
/// `1 − 6·Σd² / (n(n²−1))`.
pub fn spearman(lp: &LabeledPredictions) -> Result<f64> {
    if !has_two_distinct(&lp.y_hat) || !has_two_distinct(&lp.y) {
        return Err(Error::UndefinedMetric(
            "spearman: constant prediction or label vector".into(),
        ));
    }
    let ra = average_ranks(&lp.y_hat);
    let rb = average_ranks(&lp.y);
    let n = lp.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (a, b) in ra.iter().zip(&rb) {
        let (da, db) = (a - mean, b - mean);
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Σ y_(k)·((n+1)/2 − k) with items ordered by descending `key`; tied keys
/// share the mean positional weight. This is the cumulative-gain Gini
/// scaled by the label total, so the total cancels in the normalized ratio.
fn gain_gini(y: &[f64], key: &[f64]) -> f64 {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
    let centre = (n as f64 + 1.0) / 2.0;
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && key[order[end]] == key[order[start]] {
            end += 1;
        }
        let mean_pos = (start + 1 + end) as f64 / 2.0;
        let group: f64 = order[start..end].iter().map(|&i| y[i]).sum();
        total += group * (centre - mean_pos);
        start = end;
    }
    total
}

pub fn norm_gini(lp: &LabeledPredictions, variant: GiniVariant) -> Result<f64> {
    match variant {
        GiniVariant::Standard => {
            if lp.y.iter().all(|v| *v == 0.0) {
                return Err(Error::UndefinedMetric("norm gini: Σ|y| is zero".into()));
            }
            let best = gain_gini(&lp.y, &lp.y);
            if best <= 0.0 {
                return Err(Error::UndefinedMetric("norm gini: constant labels".into()));
            }
            Ok(gain_gini(&lp.y, &lp.y_hat) / best)
        }
        GiniVariant::RankSum => {
            let n = lp.len() as f64;
            let ra = average_ranks(&lp.y_hat);
            let rb = average_ranks(&lp.y);
            let dot: f64 = ra.iter().zip(&rb).map(|(a, b)| a * b).sum();
            Ok((2.0 * dot - n * (n + 1.0)) / (n * (n - 1.0)))
        }
    }
}

/// All four objectives at once.
pub fn evaluate(lp: &LabeledPredictions, variant: GiniVariant) -> Result<MetricVector> {
    Ok(MetricVector::new(
        error_rate(lp)?,
        norm_gini(lp, variant)?,
        spearman(lp)?,
        rmse(lp),
    ))
}

const SCORE_PREFIX: &str = "score = ";
const METRICS_PREFIX: &str = "metrics = ";

fn parse_decimal(text: &str) -> Option<f64> {
    let t = text.trim();
    let looks_numeric = !t.is_empty()
        && t.chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    if !looks_numeric {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads the `score = <decimal>` and `metrics = {...}` contract lines from a
/// candidate's stdout. The last occurrence of each line form wins.
pub fn parse_metric_output(stdout_text: &str) -> Result<MetricVector> {
    let mut score_line: Option<&str> = None;
    let mut metrics_line: Option<&str> = None;
    for line in stdout_text.lines() {
        let line = line.trim_end_matches('\r');
        if let Some(rest) = line.strip_prefix(SCORE_PREFIX) {
            if parse_decimal(rest).is_some() {
                score_line = Some(rest);
            }
        } else if let Some(rest) = line.strip_prefix(METRICS_PREFIX) {
            metrics_line = Some(rest);
        }
    }
    let scalar_score = score_line.and_then(parse_decimal);
    let Some(raw) = metrics_line else {
        return Err(Error::UnparseableOutput(if scalar_score.is_some() {
            "score line present but no metrics line".into()
        } else {
            "no score or metrics line".into()
        }));
    };
    let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(raw.trim())
        .map_err(|e| Error::UnparseableOutput(format!("metrics line is not a JSON object: {e}")))?;
    let mut mv = MetricVector::new(0.0, 0.0, 0.0, 0.0);
    for objective in crate::types::Objective::ALL {
        let v = obj
            .get(objective.key())
            .and_then(|v| v.as_f64())
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::UnparseableOutput(format!("metrics line lacks numeric `{}`", objective.key())))?;
        mv.set(objective, v);
    }
    if !mv.is_valid() {
        return Err(Error::UnparseableOutput(format!("metrics out of range: {raw}")));
    }
    mv.scalar_score = scalar_score;
    Ok(mv)
}

/// Renders the two contract lines for a metric vector.
pub fn format_metric_lines(mv: &MetricVector) -> String {
    let mut out = String::new();
    if let Some(s) = mv.scalar_score {
        out.push_str(&format!("{SCORE_PREFIX}{s}\n"));
    }
    out.push_str(&format!(
        "{METRICS_PREFIX}{{\"er\":{},\"norm_gini\":{},\"spearman\":{},\"rmse\":{}}}\n",
        mv.er, mv.norm_gini, mv.spearman, mv.rmse
    ));
    out
}
