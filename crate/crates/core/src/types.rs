//! Domain types shared by the search phases.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a candidate program. Allocated monotonically; every
/// tie-break in the system resolves to the lowest id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a program came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    RootInit,
    Expansion,
    Crossover,
    Mutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub origin: Origin,
    pub parents: Vec<NodeId>,
    /// Method hint, suggestion, or mutation hint that produced the program.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
    /// Set when the final text came out of the repair loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repair_attempt: Option<u32>,
}

impl Lineage {
    pub fn new(origin: Origin, parents: Vec<NodeId>) -> Self {
        Lineage {
            origin,
            parents,
            hint: None,
            repair_attempt: None,
        }
    }

    pub fn with_hint(mut self, hint: impl Into<String>) -> Self {
        self.hint = Some(hint.into());
        self
    }

    /// `root-init`, `expansion`, `crossover`, `mutation`, or `repair`.
    pub fn kind(&self) -> &'static str {
        if self.repair_attempt.is_some() {
            return "repair";
        }
        match self.origin {
            Origin::RootInit => "root-init",
            Origin::Expansion => "expansion",
            Origin::Crossover => "crossover",
            Origin::Mutation => "mutation",
        }
    }
}

/// One executable candidate pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramSource {
    pub id: NodeId,
    pub source_text: String,
    pub lineage: Lineage,
    pub label: String,
}

impl ProgramSource {
    pub fn new(id: NodeId, source_text: String, lineage: Lineage, label: String) -> Self {
        debug_assert!(!source_text.is_empty());
        ProgramSource {
            id,
            source_text,
            lineage,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Er,
    NormGini,
    Spearman,
    Rmse,
}

impl Objective {
    pub const ALL: [Objective; 4] = [Objective::Er, Objective::NormGini, Objective::Spearman, Objective::Rmse];

    pub fn key(self) -> &'static str {
        match self {
            Objective::Er => "er",
            Objective::NormGini => "norm_gini",
            Objective::Spearman => "spearman",
            Objective::Rmse => "rmse",
        }
    }

    pub fn natural_direction(self) -> Direction {
        match self {
            Objective::Er | Objective::Rmse => Direction::Minimize,
            Objective::NormGini | Objective::Spearman => Direction::Maximize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub name: Objective,
    pub direction: Direction,
    pub weight: f64,
}

impl ObjectiveSpec {
    pub fn new(name: Objective, weight: f64) -> Self {
        ObjectiveSpec {
            name,
            direction: name.natural_direction(),
            weight,
        }
    }

    /// Equal weights over the four metrics.
    pub fn defaults() -> Vec<ObjectiveSpec> {
        Objective::ALL.iter().map(|&o| ObjectiveSpec::new(o, 0.25)).collect()
    }
}

/// The four evaluation objectives of a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub er: f64,
    pub norm_gini: f64,
    pub spearman: f64,
    pub rmse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar_score: Option<f64>,
}

impl MetricVector {
    pub fn new(er: f64, norm_gini: f64, spearman: f64, rmse: f64) -> Self {
        MetricVector {
            er,
            norm_gini,
            spearman,
            rmse,
            scalar_score: None,
        }
    }

    pub fn get(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Er => self.er,
            Objective::NormGini => self.norm_gini,
            Objective::Spearman => self.spearman,
            Objective::Rmse => self.rmse,
        }
    }

    pub fn set(&mut self, objective: Objective, value: f64) {
        match objective {
            Objective::Er => self.er = value,
            Objective::NormGini => self.norm_gini = value,
            Objective::Spearman => self.spearman = value,
            Objective::Rmse => self.rmse = value,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.er, self.norm_gini, self.spearman, self.rmse]
            .iter()
            .all(|v| v.is_finite())
            && self.er >= 0.0
            && self.rmse >= 0.0
            && (-1.0..=1.0).contains(&self.spearman)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Pending,
    Feasible,
    Infeasible,
}

/// A searched program with its evaluation and tree statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateNode {
    pub program: ProgramSource,
    pub status: NodeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricVector>,
    /// R(c) in the tree phase, F(c) in the evolution phase; fixed once set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    pub q_value: f64,
    pub visit_count: u64,
    pub prior: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<NodeId>,
    #[serde(default)]
    pub children: Vec<NodeId>,
    pub depth: u32,
    /// Short failure description for infeasible candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default)]
    pub repairs_used: u32,
    /// EA generation that produced the candidate (0 for seeds).
    #[serde(default)]
    pub generation: u32,
}

impl CandidateNode {
    pub fn pending(program: ProgramSource, prior: f64) -> Self {
        CandidateNode {
            program,
            status: NodeStatus::Pending,
            metrics: None,
            reward: None,
            q_value: 0.0,
            visit_count: 0,
            prior,
            parent: None,
            children: Vec::new(),
            depth: 0,
            failure: None,
            repairs_used: 0,
            generation: 0,
        }
    }

    /// Marks the node feasible with fresh statistics N=1, Q=R.
    pub fn mark_feasible(&mut self, metrics: MetricVector, reward: f64) {
        self.status = NodeStatus::Feasible;
        self.metrics = Some(metrics);
        self.reward = Some(reward);
        self.q_value = reward;
        self.visit_count = 1;
        self.failure = None;
    }

    pub fn mark_infeasible(&mut self, reason: impl Into<String>) {
        self.status = NodeStatus::Infeasible;
        self.metrics = None;
        self.reward = None;
        self.q_value = 0.0;
        self.visit_count = 0;
        self.failure = Some(reason.into());
    }

    pub fn id(&self) -> NodeId {
        self.program.id
    }

    pub fn is_feasible(&self) -> bool {
        self.status == NodeStatus::Feasible
    }
}

/// One evolutionary population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Island {
    pub id: usize,
    pub population: Vec<CandidateNode>,
    pub generation: u32,
    pub elites: Vec<NodeId>,
}

impl Island {
    pub fn new(id: usize) -> Self {
        Island {
            id,
            population: Vec::new(),
            generation: 0,
            elites: Vec::new(),
        }
    }

    pub fn best(&self) -> Option<&CandidateNode> {
        best_by_reward(self.population.iter())
    }

    pub fn max_fitness(&self) -> Option<f64> {
        self.best().and_then(|c| c.reward)
    }
}

/// Highest reward among feasible candidates; ties go to the lowest id.
pub fn best_by_reward<'a>(candidates: impl Iterator<Item = &'a CandidateNode>) -> Option<&'a CandidateNode> {
    let mut best: Option<&CandidateNode> = None;
    for c in candidates.filter(|c| c.is_feasible()) {
        let r = c.reward.unwrap_or(f64::NEG_INFINITY);
        best = match best {
            None => Some(c),
            Some(b) => {
                let br = b.reward.unwrap_or(f64::NEG_INFINITY);
                if r > br || (r == br && c.id() < b.id()) {
                    Some(c)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}
