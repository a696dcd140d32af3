//! Run persistence, tree export and the leaderboard.

use std::fmt::Write as _;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::config::SearchConfig;
use crate::error::{Error, Result};
use crate::evolution::EvolutionState;
use crate::ledger::EventLog;
use crate::mcts::MctsState;
use crate::orchestrator::{Ablation, Phase};
use crate::tree::SearchTree;
use crate::types::{CandidateNode, NodeId, Origin};

pub const STATE_FORMAT: &str = "agentsearch-state";
pub const STATE_VERSION: u32 = 1;

/// Complete record of a run: settings, phase progress, every candidate,
/// and the RNG position. Enough to resume or report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub config: SearchConfig,
    pub ablation: Ablation,
    pub phase: Phase,
    pub rng_words: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcts: Option<MctsState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_mcts: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<EvolutionState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_star: Option<NodeId>,
    pub events: EventLog,
}

impl RunLedger {
    pub fn new(config: SearchConfig, ablation: Ablation) -> Self {
        RunLedger {
            config,
            ablation,
            phase: Phase::Mcts,
            rng_words: 0,
            mcts: None,
            c_mcts: None,
            evolution: None,
            c_star: None,
            events: EventLog::default(),
        }
    }

    pub fn tree(&self) -> Option<&SearchTree> {
        self.mcts.as_ref().map(|m| &m.tree)
    }

    /// Looks a candidate up in the evolution archive, then the tree.
    pub fn candidate(&self, id: NodeId) -> Option<&CandidateNode> {
        self.evolution
            .as_ref()
            .and_then(|e| e.ea_archive.iter().find(|c| c.id() == id))
            .or_else(|| self.tree().and_then(|t| t.node(id)))
    }

    /// Final program, once the run is done.
    pub fn best(&self) -> Option<&CandidateNode> {
        self.c_star.and_then(|id| self.candidate(id))
    }

    /// Structural checks run after loading.
    pub fn check(&self) -> Result<()> {
        if let Some(t) = self.tree() {
            t.validate()?;
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Phase(format!(
                    "ledger in phase {} lacks {what}",
                    self.phase.name()
                )))
            }
        };
        match self.phase {
            Phase::Mcts => Ok(()),
            Phase::Ea => need(self.c_mcts.is_some() && self.mcts.is_some(), "a tree-search result"),
            Phase::Done => need(self.c_star.is_some(), "a final program"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<'a> {
    format: String,
    version: u32,
    checksum: String,
    #[serde(borrow)]
    ledger: &'a RawValue,
}

/// Serialized, compressed bytes of a ledger. Deterministic: equal ledgers
/// give equal bytes.
pub fn encode_state(ledger: &RunLedger) -> Result<Vec<u8>> {
    let body =
        serde_json::to_string(ledger).map_err(|e| Error::persistence(format!("cannot serialize ledger: {e}"), None))?;
    let raw =
        RawValue::from_string(body).map_err(|e| Error::persistence(format!("cannot serialize ledger: {e}"), None))?;
    let env = Envelope {
        format: STATE_FORMAT.into(),
        version: STATE_VERSION,
        checksum: hex::encode(Sha256::digest(raw.get().as_bytes())),
        ledger: &raw,
    };
    let text =
        serde_json::to_vec(&env).map_err(|e| Error::persistence(format!("cannot serialize envelope: {e}"), None))?;
    let mut gz = GzEncoder::new(Vec::new(), Compression::default());
    gz.write_all(&text)
        .and_then(|_| gz.finish())
        .map_err(|e| Error::persistence(format!("compression failed: {e}"), None))
}

/// Inverse of [`encode_state`]. Offsets in errors count bytes of the
/// compressed input for stream damage and of the decompressed text for
/// content damage.
pub fn decode_state(bytes: &[u8]) -> Result<RunLedger> {
    let mut gz = GzDecoder::new(Cursor::new(bytes));
    let mut text = Vec::new();
    if let Err(e) = gz.read_to_end(&mut text) {
        return Err(Error::Persistence {
            message: format!("corrupt compressed stream: {e}"),
            path: None,
            offset: Some(gz.get_ref().position()),
        });
    }
    let text = std::str::from_utf8(&text).map_err(|e| Error::Persistence {
        message: "state is not UTF-8".into(),
        path: None,
        offset: Some(e.valid_up_to() as u64),
    })?;
    let env: Envelope = serde_json::from_str(text).map_err(|e| json_error("malformed state", text, &e))?;
    if env.format != STATE_FORMAT {
        return Err(Error::persistence(
            format!("not a state file (format {:?})", env.format),
            None,
        ));
    }
    if env.version > STATE_VERSION {
        return Err(Error::Version {
            found: env.version,
            supported: STATE_VERSION,
        });
    }
    let body = env.ledger.get();
    let body_offset = body.as_ptr() as usize - text.as_ptr() as usize;
    if hex::encode(Sha256::digest(body.as_bytes())) != env.checksum {
        return Err(Error::Persistence {
            message: "checksum mismatch".into(),
            path: None,
            offset: Some(body_offset as u64),
        });
    }
    let ledger: RunLedger = serde_json::from_str(body).map_err(|e| {
        let mut err = json_error("invalid ledger", body, &e);
        if let Error::Persistence { offset: Some(o), .. } = &mut err {
            *o += body_offset as u64;
        }
        err
    })?;
    ledger.check()?;
    Ok(ledger)
}

fn json_error(what: &str, text: &str, e: &serde_json::Error) -> Error {
    Error::Persistence {
        message: format!("{what}: {e}"),
        path: None,
        offset: Some(line_col_offset(text, e.line(), e.column()) as u64),
    }
}

/// Byte offset of a 1-based line and column.
fn line_col_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// Writes the ledger atomically: a sibling temp file renamed into place.
pub fn save_state(ledger: &RunLedger, path: &Path) -> Result<()> {
    let bytes = encode_state(ledger)?;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| Error::persistence(format!("cannot write state: {e}"), Some(path.into()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(&bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<RunLedger> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::persistence(format!("cannot read state: {e}"), Some(path.into())))?;
    decode_state(&bytes).map_err(|e| match e {
        Error::Persistence { message, offset, .. } => Error::Persistence {
            message,
            path: Some(path.into()),
            offset,
        },
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeFormat {
    Dot,
    Json,
}

impl TreeFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dot" => Some(TreeFormat::Dot),
            "json" => Some(TreeFormat::Json),
            _ => None,
        }
    }
}

pub fn export_tree(tree: &SearchTree, format: TreeFormat) -> String {
    match format {
        TreeFormat::Dot => tree_dot(tree),
        TreeFormat::Json => tree_json(tree),
    }
}

fn dot_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c if c.is_control() => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

/// Pre-order walk, children in creation order.
fn walk(tree: &SearchTree) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(tree.nodes.len());
    let mut stack: Vec<NodeId> = tree.roots().iter().rev().copied().collect();
    while let Some(id) = stack.pop() {
        out.push(id);
        stack.extend(tree.nodes[&id].children.iter().rev());
    }
    out
}

fn tree_dot(tree: &SearchTree) -> String {
    let best = tree.best_by_q().map(|n| n.id());
    let mut s = String::from("digraph search_tree {\n  ordering=out;\n  node [shape=box, fontname=\"monospace\"];\n");
    let _ = writeln!(
        s,
        "  super_root [label=\"{}\", shape=ellipse];",
        dot_escape(&format!("super-root\nN={}", tree.super_root.visit_count))
    );
    let order = walk(tree);
    for id in &order {
        let n = &tree.nodes[id];
        let mut label = format!("#{} {}\n", id, n.program.label);
        if n.is_feasible() {
            let _ = write!(label, "Q={:.4} N={} P={:.3}", n.q_value, n.visit_count, n.prior);
        } else {
            let _ = write!(label, "infeasible: {}", n.failure.as_deref().unwrap_or("unknown"));
        }
        let mut attrs = format!("label=\"{}\"", dot_escape(&label));
        if !n.is_feasible() {
            attrs.push_str(", style=dashed");
        } else if Some(*id) == best {
            attrs.push_str(", style=\"bold,filled\", fillcolor=\"gold\", penwidth=2");
        }
        let _ = writeln!(s, "  n{id} [{attrs}];");
    }
    for &r in tree.roots() {
        let _ = writeln!(s, "  super_root -> n{r};");
    }
    for id in &order {
        for c in &tree.nodes[id].children {
            let _ = writeln!(s, "  n{id} -> n{c};");
        }
    }
    s.push_str("}\n");
    s
}

fn tree_json(tree: &SearchTree) -> String {
    let best = tree.best_by_q().map(|n| n.id());
    let nodes: Vec<serde_json::Value> = walk(tree)
        .into_iter()
        .map(|id| {
            let n = &tree.nodes[&id];
            serde_json::json!({
                "id": id,
                "label": n.program.label,
                "parent": n.parent,
                "children": n.children,
                "depth": n.depth,
                "status": n.status,
                "origin": n.program.lineage.kind(),
                "q_value": n.q_value,
                "visit_count": n.visit_count,
                "prior": n.prior,
                "reward": n.reward,
                "metrics": n.metrics,
                "failure": n.failure,
                "best": Some(id) == best,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "super_root": {
            "visit_count": tree.super_root.visit_count,
            "children": tree.super_root.children,
        },
        "best": best,
        "nodes": nodes,
    });
    serde_json::to_string_pretty(&doc).expect("json values serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub id: NodeId,
    pub generation: String,
    pub node_value: f64,
    pub gini: f64,
    pub spearman: f64,
    pub rmse: f64,
    pub error_rate: f64,
    pub evolution_type: &'static str,
    pub method: String,
}

fn evolution_type(c: &CandidateNode) -> &'static str {
    match c.program.lineage.origin {
        Origin::Crossover => "Crossover",
        Origin::Mutation => "Mutation",
        Origin::RootInit | Origin::Expansion => "Init",
    }
}

/// Top `top_n` feasible candidates by node value, ties by id, one row per
/// distinct source text. Uses the evolution archive (value F) when the run
/// evolved, else the tree (value Q).
pub fn leaderboard(ledger: &RunLedger, top_n: usize) -> Result<Vec<LeaderboardRow>> {
    if top_n == 0 {
        return Err(Error::config("top_n must be at least 1"));
    }
    let mut cands: Vec<(&CandidateNode, f64)> = match (&ledger.evolution, ledger.tree()) {
        (Some(ea), _) => ea.ea_archive.iter().filter_map(|c| c.reward.map(|r| (c, r))).collect(),
        (None, Some(t)) => t.feasible_nodes().map(|c| (c, c.q_value)).collect(),
        (None, None) => return Err(Error::Phase("run has no evaluated candidates yet".into())),
    };
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.id().cmp(&b.0.id())));
    let mut seen = std::collections::HashSet::new();
    Ok(cands
        .into_iter()
        .filter(|(c, _)| seen.insert(c.program.source_text.as_str()))
        .take(top_n)
        .enumerate()
        .filter_map(|(i, (c, value))| {
            let m = c.metrics?;
            Some(LeaderboardRow {
                rank: i + 1,
                id: c.id(),
                generation: format!("gen_{}", c.generation),
                node_value: value,
                gini: m.norm_gini,
                spearman: m.spearman,
                rmse: m.rmse,
                error_rate: m.er,
                evolution_type: evolution_type(c),
                method: c.program.label.clone(),
            })
        })
        .collect())
}

const HEADERS: [&str; 9] = [
    "Rank",
    "Gen",
    "Node Value",
    "Gini",
    "Spearman",
    "RMSE",
    "ErrorRate",
    "Evolution type",
    "Method",
];

fn cells(r: &LeaderboardRow) -> [String; 9] {
    [
        r.rank.to_string(),
        r.generation.clone(),
        format!("{:.6}", r.node_value),
        format!("{:.4}", r.gini),
        format!("{:.4}", r.spearman),
        format!("{:.2}", r.rmse),
        format!("{:.4}", r.error_rate),
        r.evolution_type.to_string(),
        r.method.clone(),
    ]
}

/// Space-aligned table; numbers right-aligned, text left-aligned.
pub fn leaderboard_text(rows: &[LeaderboardRow]) -> String {
    let body: Vec<[String; 9]> = rows.iter().map(cells).collect();
    let mut width: [usize; 9] = HEADERS.map(str::len);
    for row in &body {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let numeric = [true, false, true, true, true, true, true, false, false];
    let line = |row: &[String]| {
        let mut s = String::new();
        for (i, c) in row.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if numeric[i] {
                let _ = write!(s, "{c:>w$}", w = width[i]);
            } else if i + 1 < row.len() {
                let _ = write!(s, "{c:<w$}", w = width[i]);
            } else {
                s.push_str(c);
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(&HEADERS.map(String::from));
    for row in &body {
        out.push_str(&line(row));
    }
    out
}

pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::persistence(format!("csv: {e}"), None);
    w.write_record(HEADERS).map_err(fail)?;
    for r in rows {
        w.write_record(cells(r)).map_err(fail)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::persistence(format!("csv: {e}"), None))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
