//! The parametric template family behind the mock backend.
//!
//! A candidate is a rendering of one pipeline skeleton over a small grid:
//! feature-group mask × target transform × regularization level × model
//! family. Each grid point has closed-form metrics, so the whole landscape
//! can be enumerated and its optimum is known exactly.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::reward::{weighted_score, Bounds};
use crate::types::{MetricVector, ObjectiveSpec};

pub const FEATURE_GROUPS: usize = 4;
pub const REG_LEVELS: u8 = 5;
const PARAMS_TAG: &str = "# params:";
const DEFECT_TAG: &str = "# defect:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    None,
    Log1p,
    SignedLog,
    Rank,
}

impl Transform {
    pub const ALL: [Transform; 4] = [Transform::None, Transform::Log1p, Transform::SignedLog, Transform::Rank];

    pub fn name(self) -> &'static str {
        match self {
            Transform::None => "none",
            Transform::Log1p => "log1p",
            Transform::SignedLog => "signed_log",
            Transform::Rank => "rank",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Linear,
    Gbdt,
    Mlp,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [ModelFamily::Linear, ModelFamily::Gbdt, ModelFamily::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Gbdt => "gbdt",
            ModelFamily::Mlp => "mlp",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    fn capacity(self) -> f64 {
        match self {
            ModelFamily::Linear => 0.0,
            ModelFamily::Gbdt => 0.10,
            ModelFamily::Mlp => 0.07,
        }
    }

    fn best_reg(self) -> f64 {
        match self {
            ModelFamily::Linear => 1.0,
            ModelFamily::Gbdt => 2.0,
            ModelFamily::Mlp => 3.0,
        }
    }
}

/// One grid point of the template family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Bit k selects feature group k.
    pub features: u8,
    pub transform: Transform,
    pub reg: u8,
    pub model: ModelFamily,
}

/// A single-coordinate change to a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edit {
    ToggleFeature(u8),
    SetTransform(Transform),
    SetReg(u8),
    SetModel(ModelFamily),
}

const GROUP_NAMES: [&str; FEATURE_GROUPS] = [
    "payment history",
    "engagement aggregates",
    "match-mode behaviour",
    "device metadata",
];

impl Edit {
    pub fn apply(self, p: PipelineParams) -> PipelineParams {
        let mut out = p;
        match self {
            Edit::ToggleFeature(k) => out.features ^= 1 << k,
            Edit::SetTransform(t) => out.transform = t,
            Edit::SetReg(r) => out.reg = r.min(REG_LEVELS - 1),
            Edit::SetModel(m) => out.model = m,
        }
        out
    }

    /// Machine-readable tag embedded in suggestion text.
    pub fn tag(self) -> String {
        match self {
            Edit::ToggleFeature(k) => format!("[edit feature:{k}]"),
            Edit::SetTransform(t) => format!("[edit transform:{}]", t.name()),
            Edit::SetReg(r) => format!("[edit reg:{r}]"),
            Edit::SetModel(m) => format!("[edit model:{}]", m.name()),
        }
    }

    pub fn describe(self, current: PipelineParams) -> String {
        let text = match self {
            Edit::ToggleFeature(k) => {
                if current.features & (1 << k) != 0 {
                    format!("Drop the {} feature group to reduce noise", GROUP_NAMES[k as usize])
                } else {
                    format!("Add the {} feature group to the inputs", GROUP_NAMES[k as usize])
                }
            }
            Edit::SetTransform(t) => format!("Switch the target transform to {}", t.name()),
            Edit::SetReg(r) => {
                if r > current.reg {
                    format!("Strengthen regularization to level {r}")
                } else {
                    format!("Relax regularization to level {r}")
                }
            }
            Edit::SetModel(m) => format!("Replace the model with a {} learner", m.name()),
        };
        format!("{text} {}", self.tag())
    }

    /// Finds the last edit tag in free text.
    pub fn parse_from(text: &str) -> Option<Edit> {
        let start = text.rfind("[edit ")?;
        let body = &text[start + 6..];
        let body = &body[..body.find(']')?];
        let (kind, value) = body.split_once(':')?;
        match kind {
            "feature" => value
                .parse::<u8>()
                .ok()
                .filter(|k| (*k as usize) < FEATURE_GROUPS)
                .map(Edit::ToggleFeature),
            "transform" => Transform::parse(value).map(Edit::SetTransform),
            "reg" => value.parse::<u8>().ok().filter(|r| *r < REG_LEVELS).map(Edit::SetReg),
            "model" => ModelFamily::parse(value).map(Edit::SetModel),
            _ => None,
        }
    }
}

impl PipelineParams {
    pub const BASELINE: PipelineParams = PipelineParams {
        features: 0b0001,
        transform: Transform::None,
        reg: 0,
        model: ModelFamily::Linear,
    };

    pub fn all() -> Vec<PipelineParams> {
        let mut out = Vec::new();
        for features in 0..(1u8 << FEATURE_GROUPS) {
            for transform in Transform::ALL {
                for reg in 0..REG_LEVELS {
                    for model in ModelFamily::ALL {
                        out.push(PipelineParams {
                            features,
                            transform,
                            reg,
                            model,
                        });
                    }
                }
            }
        }
        out
    }

    /// Every single-coordinate edit that changes this point.
    pub fn neighbour_edits(&self) -> Vec<Edit> {
        let mut out: Vec<Edit> = (0..FEATURE_GROUPS as u8).map(Edit::ToggleFeature).collect();
        out.extend(
            Transform::ALL
                .into_iter()
                .filter(|t| *t != self.transform)
                .map(Edit::SetTransform),
        );
        if self.reg > 0 {
            out.push(Edit::SetReg(self.reg - 1));
        }
        if self.reg + 1 < REG_LEVELS {
            out.push(Edit::SetReg(self.reg + 1));
        }
        out.extend(
            ModelFamily::ALL
                .into_iter()
                .filter(|m| *m != self.model)
                .map(Edit::SetModel),
        );
        out
    }

    /// Closed-form metrics of this grid point, with the landscape quality
    /// as the scalar score.
    pub fn metrics(&self) -> MetricVector {
        let mut mv = self.raw_metrics();
        mv.scalar_score = Some(landscape_quality(&mv));
        mv
    }

    /// Each metric has its own latent quality: a shared signal term plus
    /// transform- and feature-specific effects that pull the objectives in
    /// different directions.
    pub fn raw_metrics(&self) -> MetricVector {
        const GAIN: [f64; FEATURE_GROUPS] = [0.30, 0.20, 0.12, -0.04];
        let mut signal: f64 = (0..FEATURE_GROUPS)
            .filter(|k| self.features & (1 << k) != 0)
            .map(|k| GAIN[k])
            .sum();
        if self.features & 0b0110 == 0b0110 {
            signal += 0.06;
        }
        let reg_gap = f64::from(self.reg) - self.model.best_reg();
        let base = signal + self.model.capacity() - 0.025 * reg_gap * reg_gap;
        // (er, rmse, gini, spearman) effects.
        let mut gain: [f64; 4] = match self.transform {
            Transform::None => [0.0, 0.02, 0.0, 0.0],
            Transform::Log1p => [0.03, -0.01, 0.04, 0.05],
            Transform::SignedLog => [0.06, 0.01, 0.06, 0.07],
            Transform::Rank => [-0.06, -0.06, 0.09, 0.12],
        };
        match (self.model, self.transform) {
            (ModelFamily::Mlp, Transform::Rank) => {
                gain[2] += 0.03;
                gain[3] += 0.03;
            }
            (ModelFamily::Gbdt, Transform::SignedLog) => gain[0] += 0.02,
            _ => {}
        }
        if self.features & 0b1000 != 0 {
            // Device metadata separates spenders but adds variance.
            gain[0] -= 0.03;
            gain[1] -= 0.05;
            gain[2] += 0.07;
        }
        let q = gain.map(|g| base + g);
        MetricVector::new(
            1.5 * (1.0 - 0.6 * q[0]),
            0.55 + 0.45 * q[2],
            (0.15 + 0.85 * q[3]).clamp(-1.0, 1.0),
            320.0 * (1.0 - 0.75 * q[1]),
        )
    }

    pub fn label(&self) -> String {
        format!(
            "{}_{}_f{:04b}_r{}",
            self.model.name(),
            self.transform.name(),
            self.features,
            self.reg
        )
    }
}

impl fmt::Display for PipelineParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "features={:04b} transform={} reg={} model={}",
            self.features,
            self.transform.name(),
            self.reg,
            self.model.name()
        )
    }
}

/// Defects the mock generator can plant in a rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Defect {
    /// Exits nonzero with a traceback on stderr.
    NameError,
    /// Exits 0 without the metrics line.
    MissingOutput,
}

impl Defect {
    fn name(self) -> &'static str {
        match self {
            Defect::NameError => "name_error",
            Defect::MissingOutput => "missing_output",
        }
    }
}

/// Renders a grid point as a self-contained POSIX shell program that
/// honours the output contract.
pub fn render_program(p: &PipelineParams, defect: Option<Defect>) -> String {
    let mv = p.metrics();
    let groups: Vec<String> = (0..FEATURE_GROUPS)
        .filter(|k| p.features & (1 << k) != 0)
        .map(|k| k.to_string())
        .collect();
    let mut s = String::new();
    s.push_str("#!/bin/sh\n");
    s.push_str("# agentsearch template family v1\n");
    s.push_str(&format!("{PARAMS_TAG} {p}\n"));
    if let Some(d) = defect {
        s.push_str(&format!("{DEFECT_TAG} {}\n", d.name()));
    }
    s.push_str(&format!(
        "echo \"fitting {} on feature groups [{}] with {} target (reg level {})\"\n",
        p.model.name(),
        groups.join(","),
        p.transform.name(),
        p.reg
    ));
    match defect {
        Some(Defect::NameError) => {
            s.push_str("echo 'Traceback (most recent call last):' >&2\n");
            s.push_str("echo '  File \"pipeline.py\", line 42, in fit' >&2\n");
            s.push_str("echo \"NameError: name 'feature_matrix' is not defined\" >&2\n");
            s.push_str("exit 1\n");
        }
        Some(Defect::MissingOutput) => {
            s.push_str("echo \"training finished\"\n");
        }
        None => {
            s.push_str(&format!("echo \"score = {}\"\n", mv.scalar_score.unwrap_or(0.0)));
            s.push_str(&format!(
                "echo '{}'\n",
                crate::metrics::format_metric_lines(&MetricVector {
                    scalar_score: None,
                    ..mv
                })
                .trim_end()
            ));
        }
    }
    s
}

/// Grid point encoded in a rendering, if any.
pub fn parse_params(source: &str) -> Option<PipelineParams> {
    let line = source.lines().find(|l| l.starts_with(PARAMS_TAG))?;
    let mut features = None;
    let mut transform = None;
    let mut reg = None;
    let mut model = None;
    for kv in line[PARAMS_TAG.len()..].split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "features" => features = u8::from_str_radix(v, 2).ok().filter(|f| *f < (1 << FEATURE_GROUPS)),
            "transform" => transform = Transform::parse(v),
            "reg" => reg = v.parse::<u8>().ok().filter(|r| *r < REG_LEVELS),
            "model" => model = ModelFamily::parse(v),
            _ => {}
        }
    }
    Some(PipelineParams {
        features: features?,
        transform: transform?,
        reg: reg?,
        model: model?,
    })
}

pub fn has_defect(source: &str) -> bool {
    source.lines().any(|l| l.starts_with(DEFECT_TAG))
}

/// Min/max of every objective over the whole grid.
pub fn landscape_bounds(objectives: &[ObjectiveSpec]) -> Bounds {
    let all: Vec<MetricVector> = PipelineParams::all().iter().map(|p| p.raw_metrics()).collect();
    Bounds::from_archive(&all, objectives).expect("grid is non-empty")
}

/// Equal-weight normalized composite of a metric vector against the
/// landscape's own bounds, the fixed reference scale used to judge how
/// close a search got to the grid optimum.
pub fn landscape_quality(mv: &MetricVector) -> f64 {
    let objectives = ObjectiveSpec::defaults();
    weighted_score(mv, &objectives, landscape_bounds_cached())
}

fn landscape_bounds_cached() -> &'static Bounds {
    static BOUNDS: std::sync::OnceLock<Bounds> = std::sync::OnceLock::new();
    BOUNDS.get_or_init(|| landscape_bounds(&ObjectiveSpec::defaults()))
}

/// Best grid point by landscape quality (lowest in grid order on ties).
pub fn landscape_optimum() -> (PipelineParams, f64) {
    let mut best = (PipelineParams::BASELINE, f64::NEG_INFINITY);
    for p in PipelineParams::all() {
        let q = landscape_quality(&p.metrics());
        if q > best.1 {
            best = (p, q);
        }
    }
    best
}
