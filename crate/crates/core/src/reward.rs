//! Pareto-aware composite reward over an archive of evaluated candidates.
//!
//! Every objective is min-max normalized against the archive (or against
//! frozen bounds) and folded so that 1 is always best. The composite is the
//! weighted normalized sum, plus a bonus for sitting on the Pareto front,
//! plus a bounded crowding-distance bonus for front members.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Direction, MetricVector, ObjectiveSpec};

/// Per-objective raw (min, max), aligned with the objective list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Bounds {
    pub fn from_archive(archive: &[MetricVector], objectives: &[ObjectiveSpec]) -> Option<Self> {
        if archive.is_empty() {
            return None;
        }
        let mut min = vec![f64::INFINITY; objectives.len()];
        let mut max = vec![f64::NEG_INFINITY; objectives.len()];
        for mv in archive {
            for (j, o) in objectives.iter().enumerate() {
                let v = mv.get(o.name);
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Some(Bounds { min, max })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedArchive {
    /// n rows × m objectives, each in [0, 1], larger is better.
    pub points: Vec<Vec<f64>>,
    pub bounds: Bounds,
    pub frozen: bool,
}

/// Coefficients of the composite reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub objectives: Vec<ObjectiveSpec>,
    pub beta: f64,
    pub gamma: f64,
}

fn normalize_value(raw: f64, lo: f64, hi: f64, direction: Direction) -> f64 {
    if hi <= lo {
        return 0.5;
    }
    let v = ((raw - lo) / (hi - lo)).clamp(0.0, 1.0);
    match direction {
        Direction::Maximize => v,
        Direction::Minimize => 1.0 - v,
    }
}

pub fn normalize(
    archive_metrics: &[MetricVector],
    objectives: &[ObjectiveSpec],
    frozen_bounds: Option<&Bounds>,
) -> NormalizedArchive {
    let bounds = match frozen_bounds {
        Some(b) => b.clone(),
        None => Bounds::from_archive(archive_metrics, objectives).unwrap_or(Bounds {
            min: vec![0.0; objectives.len()],
            max: vec![0.0; objectives.len()],
        }),
    };
    let points = archive_metrics
        .iter()
        .map(|mv| {
            objectives
                .iter()
                .enumerate()
                .map(|(j, o)| normalize_value(mv.get(o.name), bounds.min[j], bounds.max[j], o.direction))
                .collect()
        })
        .collect();
    NormalizedArchive {
        points,
        bounds,
        frozen: frozen_bounds.is_some(),
    }
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Front membership per point (larger is better on every axis).
///
/// Points are visited in descending lexicographic order; anything that
/// dominates a point precedes it in that order, so each point only needs
/// checking against front members found so far.
pub fn pareto_front(points: &[Vec<f64>]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        for (x, y) in points[a].iter().zip(&points[b]) {
            match y.total_cmp(x) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        a.cmp(&b)
    });
    let mut on_front = vec![false; points.len()];
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates(&points[f], &points[i])) {
            on_front[i] = true;
            front.push(i);
        }
    }
    on_front
}

/// Crowding distance of front points, scaled into [0, 1]: boundary points
/// get 1, interior points get Σ(next − prev)/(2m) capped at 1.
#[allow(clippy::needless_range_loop)]
pub fn crowding_distance(front_points: &[Vec<f64>]) -> Vec<f64> {
    let n = front_points.len();
    if n <= 2 {
        return vec![1.0; n];
    }
    let m = front_points[0].len();
    let mut raw = vec![0.0; n];
    let mut boundary = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..m {
        order.sort_by(|&a, &b| front_points[a][j].total_cmp(&front_points[b][j]).then(a.cmp(&b)));
        boundary[order[0]] = true;
        boundary[order[n - 1]] = true;
        for w in order.windows(3) {
            raw[w[1]] += front_points[w[2]][j] - front_points[w[0]][j];
        }
    }
    raw.iter()
        .zip(&boundary)
        .map(|(r, b)| if *b { 1.0 } else { (r / (2.0 * m as f64)).min(1.0) })
        .collect()
}

/// Composite rewards for every archive member.
pub fn composite_rewards(archive: &[MetricVector], params: &RewardParams, frozen_bounds: Option<&Bounds>) -> Vec<f64> {
    let norm = normalize(archive, &params.objectives, frozen_bounds);
    let front = pareto_front(&norm.points);
    let front_idx: Vec<usize> = (0..archive.len()).filter(|&i| front[i]).collect();
    let front_points: Vec<Vec<f64>> = front_idx.iter().map(|&i| norm.points[i].clone()).collect();
    let crowd = crowding_distance(&front_points);
    let mut crowd_full = vec![0.0; archive.len()];
    for (k, &i) in front_idx.iter().enumerate() {
        crowd_full[i] = crowd[k];
    }
    norm.points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            weighted_sum(p, &params.objectives)
                + if front[i] { params.beta } else { 0.0 }
                + params.gamma * crowd_full[i]
        })
        .collect()
}

fn weighted_sum(point: &[f64], objectives: &[ObjectiveSpec]) -> f64 {
    point.iter().zip(objectives).map(|(v, o)| o.weight * v).sum()
}

/// Weighted normalized sum alone (no front or crowding terms).
pub fn weighted_score(mv: &MetricVector, objectives: &[ObjectiveSpec], bounds: &Bounds) -> f64 {
    objectives
        .iter()
        .enumerate()
        .map(|(j, o)| o.weight * normalize_value(mv.get(o.name), bounds.min[j], bounds.max[j], o.direction))
        .sum()
}

/// R(c) for a node that is a member of `archive`.
pub fn composite_reward(
    node_metrics: &MetricVector,
    archive: &[MetricVector],
    params: &RewardParams,
    frozen_bounds: Option<&Bounds>,
) -> Result<f64> {
    if archive.is_empty() {
        return Err(Error::config("composite reward needs a non-empty archive"));
    }
    let same = |a: &MetricVector| {
        params
            .objectives
            .iter()
            .all(|o| a.get(o.name) == node_metrics.get(o.name))
    };
    let idx = archive
        .iter()
        .rposition(same)
        .ok_or_else(|| Error::config("node metrics are not part of the archive"))?;
    Ok(composite_rewards(archive, params, frozen_bounds)[idx])
}
