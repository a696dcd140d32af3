//! Multi-root best-first tree search with PUCT selection.
//!
//! Each iteration scans every feasible node for the PUCT argmax, expands it
//! through the adviser / expert / code-generator roles, runs the child with
//! repair, and folds the child's reward into its ancestors' running means.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{program_label, NodeContext};
use crate::ledger::{EventKind, Services};
use crate::reward::{composite_reward, composite_rewards};
use crate::tree::SearchTree;
use crate::types::{CandidateNode, Lineage, NodeId, Origin, ProgramSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuctScore {
    pub node_id: NodeId,
    pub exploit: f64,
    pub explore: f64,
    pub total: f64,
}

/// Q(c) + c_puct · P(c) · √N(u) / (1 + N(c)), with u the super-root for roots.
pub fn puct_score(tree: &SearchTree, id: NodeId, c_puct: f64) -> PuctScore {
    let n = &tree.nodes[&id];
    let exploit = n.q_value;
    let explore = c_puct * n.prior * (tree.parent_visits(id) as f64).sqrt() / (1.0 + n.visit_count as f64);
    PuctScore {
        node_id: id,
        exploit,
        explore,
        total: exploit + explore,
    }
}

/// Global argmax of the PUCT score over feasible nodes; ties go to the
/// lowest id.
pub fn select_node(tree: &SearchTree, c_puct: f64) -> Result<PuctScore> {
    let mut best: Option<PuctScore> = None;
    for n in tree.nodes.values().filter(|n| n.is_feasible()) {
        let s = puct_score(tree, n.id(), c_puct);
        if best.is_none_or(|b| s.total > b.total) {
            best = Some(s);
        }
    }
    best.ok_or_else(|| Error::Selection("tree has no feasible node".into()))
}

/// Folds `reward` into every ancestor of `new_id` and bumps the super-root
/// counter. The new node keeps N=1, Q=R.
pub fn backpropagate(tree: &mut SearchTree, new_id: NodeId, reward: f64) {
    for a in tree.ancestors(new_id) {
        let n = tree.nodes.get_mut(&a).expect("ancestor exists");
        n.visit_count += 1;
        n.q_value += (reward - n.q_value) / n.visit_count as f64;
    }
    tree.super_root.visit_count += 1;
}

/// Feasible node with maximal Q (lowest id on ties).
pub fn best_node(tree: &SearchTree) -> Result<&CandidateNode> {
    tree.best_by_q()
        .ok_or_else(|| Error::Selection("tree has no feasible node".into()))
}

fn is_backend(e: &Error) -> bool {
    matches!(e, Error::Backend { .. })
}

fn summary(n: &CandidateNode) -> String {
    match &n.metrics {
        Some(m) => format!(
            "{} (Q={:.4}): er={:.4}, norm_gini={:.4}, spearman={:.4}, rmse={:.4}",
            n.program.label, n.q_value, m.er, m.norm_gini, m.spearman, m.rmse
        ),
        None => format!("{} (infeasible)", n.program.label),
    }
}

/// Runs a freshly generated program and turns the outcome into a node.
/// `reward` sees the metrics and returns R(c); it is only called for
/// feasible programs.
pub(crate) fn evaluate_candidate(
    svc: &mut Services,
    program: ProgramSource,
    prior: f64,
    reward: impl FnOnce(&crate::types::MetricVector) -> Result<f64>,
) -> Result<CandidateNode> {
    let id = program.id;
    let outcome = svc.executor.execute_with_repair(&program, svc.generator)?;
    svc.log.push_repairs(id, &outcome, svc.rng);
    let mut node = CandidateNode::pending(outcome.program.clone(), prior);
    node.repairs_used = outcome.attempts_used;
    match outcome.result.metrics {
        Some(m) => {
            let r = reward(&m)?;
            node.mark_feasible(m, r);
        }
        None => node.mark_infeasible(outcome.result.status.name()),
    }
    Ok(node)
}

/// Generates, runs and scores the root programs, one per method hint drawn
/// from the advice library.
pub fn init_roots(svc: &mut Services, base_code: &str) -> Result<SearchTree> {
    let k = svc.cfg.num_roots;
    if k == 0 {
        return Err(Error::config("num_roots must be positive"));
    }
    let lib = svc.generator.library();
    let mut picks: Vec<usize> = index::sample(svc.rng, lib.len(), k.min(lib.len())).into_vec();
    while picks.len() < k {
        picks.push(picks[picks.len() % lib.len()]);
    }
    let hints: Vec<String> = picks
        .iter()
        .map(|&i| {
            let e = &lib.entries()[i];
            format!("{}\n{}", e.name, e.advice)
        })
        .collect();
    let priors = svc.generator.score_advice(&hints, base_code)?;

    let mut tree = SearchTree::empty();
    let mut nodes = Vec::with_capacity(k);
    for (hint, prior) in hints.iter().zip(&priors) {
        let id = tree.allocate_id();
        let lineage = Lineage::new(Origin::RootInit, vec![]).with_hint(hint.lines().next().unwrap_or(""));
        let node = match svc.generator.generate_root(hint, base_code) {
            Ok((_, code)) => {
                let label = program_label(&code, hint.lines().next());
                let program = ProgramSource::new(id, code, lineage, label);
                // Rewards are assigned once the whole root archive is known.
                evaluate_candidate(svc, program, *prior, |_| Ok(0.0))?
            }
            Err(e @ Error::Generation(_)) => {
                let program = ProgramSource::new(id, "(no code)".into(), lineage, "no_code".into());
                let mut n = CandidateNode::pending(program, *prior);
                n.mark_infeasible(e.to_string());
                n
            }
            Err(e) => return Err(e),
        };
        svc.log.push(
            EventKind::RootInit,
            Some(id),
            format!(
                "{} {}",
                node.program.label,
                if node.is_feasible() { "feasible" } else { "infeasible" }
            ),
            svc.rng,
        );
        nodes.push(node);
    }

    let feasible_metrics: Vec<_> = nodes.iter().filter_map(|n| n.metrics).collect();
    if feasible_metrics.is_empty() {
        return Err(Error::Initialization(format!("all {k} root programs are infeasible")));
    }
    let rewards = composite_rewards(&feasible_metrics, &svc.cfg.reward_params(), None);
    let mut r = rewards.into_iter();
    for mut n in nodes {
        if n.is_feasible() {
            let reward = r.next().expect("one reward per feasible root");
            n.reward = Some(reward);
            n.q_value = reward;
        }
        tree.insert_root(n)?;
    }
    Ok(tree)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpansionOutcome {
    Feasible(NodeId),
    Infeasible(NodeId),
    /// The generator backend failed; nothing was added.
    Aborted(String),
}

/// One expansion of `parent`. Only executor infrastructure failures and
/// template bugs are errors.
pub fn expand(tree: &mut SearchTree, parent: NodeId, svc: &mut Services) -> Result<ExpansionOutcome> {
    let p = tree
        .node(parent)
        .filter(|n| n.is_feasible())
        .ok_or_else(|| Error::Selection(format!("parent {parent} is not a feasible node")))?
        .clone();
    let mut related = Vec::new();
    if let Some(gp) = p.parent.and_then(|g| tree.node(g)) {
        related.push(format!("parent: {}", summary(gp)));
    }
    let siblings: Vec<NodeId> = match p.parent {
        Some(g) => tree.nodes[&g].children.clone(),
        None => tree.roots().to_vec(),
    };
    for s in siblings.iter().filter(|s| **s != parent).take(4) {
        related.push(format!("sibling: {}", summary(&tree.nodes[s])));
    }
    let ctx = NodeContext {
        code: p.program.source_text.clone(),
        metrics: p.metrics,
        related,
    };

    let proposal = svc
        .generator
        .propose_advice(&ctx)
        .and_then(|s| svc.generator.score_advice(&s, &ctx.code).map(|pr| (s, pr)));
    let (suggestions, priors) = match proposal {
        Ok(v) => v,
        Err(e) if is_backend(&e) => return Ok(ExpansionOutcome::Aborted(e.to_string())),
        Err(e) => return Err(e),
    };
    let u: f64 = svc.rng.gen();
    let pick = crate::generator::sample_index(&priors, u);
    let suggestion = &suggestions[pick];
    let prior = priors[pick];

    let id = tree.peek_next_id();
    let lineage = Lineage::new(Origin::Expansion, vec![parent]).with_hint(suggestion.clone());
    let child = match svc.generator.apply_suggestion(&ctx.code, suggestion) {
        Ok((_, code)) => {
            let label = program_label(&code, Some(suggestion));
            tree.allocate_id();
            let program = ProgramSource::new(id, code, lineage, label);
            let archive = tree.archive_metrics();
            let params = svc.cfg.reward_params();
            evaluate_candidate(svc, program, prior, |m| {
                let mut a = archive;
                a.push(*m);
                composite_reward(m, &a, &params, None)
            })?
        }
        Err(e) if is_backend(&e) => return Ok(ExpansionOutcome::Aborted(e.to_string())),
        Err(e @ Error::Generation(_)) => {
            tree.allocate_id();
            let program = ProgramSource::new(id, "(no code)".into(), lineage, "no_code".into());
            let mut n = CandidateNode::pending(program, prior);
            n.mark_infeasible(e.to_string());
            n
        }
        Err(e) => return Err(e),
    };
    let feasible = child.is_feasible();
    let reward = child.reward;
    let label = child.program.label.clone();
    tree.insert_child(parent, child)?;
    if let Some(r) = reward {
        backpropagate(tree, id, r);
    }
    svc.log.push(
        EventKind::Expansion,
        Some(id),
        format!(
            "parent {parent} suggestion {}/{} prior {prior:.4} -> {label} {}",
            pick + 1,
            suggestions.len(),
            match reward {
                Some(r) => format!("R={r:.6}"),
                None => "infeasible".into(),
            }
        ),
        svc.rng,
    );
    Ok(if feasible {
        ExpansionOutcome::Feasible(id)
    } else {
        ExpansionOutcome::Infeasible(id)
    })
}

/// Resumable tree-search phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MctsState {
    pub tree: SearchTree,
    /// Expansion attempts so far (feasible, infeasible and aborted).
    pub attempts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_backend_error: Option<String>,
}

impl MctsState {
    pub fn init(svc: &mut Services, base_code: &str) -> Result<Self> {
        let tree = init_roots(svc, base_code)?;
        Ok(MctsState {
            tree,
            attempts: 0,
            last_backend_error: None,
        })
    }

    pub fn is_done(&self, budget: usize) -> bool {
        self.tree.feasible_count >= budget
    }

    /// One select/expand/backpropagate iteration. Returns true once the
    /// feasible budget is met.
    pub fn step(&mut self, svc: &mut Services) -> Result<bool> {
        if self.is_done(svc.cfg.mcts_budget) {
            return Ok(true);
        }
        if self.attempts >= svc.cfg.mcts_attempt_cap() {
            return Err(match self.last_backend_error.take() {
                Some(message) => Error::Backend {
                    message,
                    status: None,
                    attempts: self.attempts as u32,
                },
                None => Error::BudgetExhausted(format!(
                    "tree search reached {} feasible of {} after {} attempts",
                    self.tree.feasible_count, svc.cfg.mcts_budget, self.attempts
                )),
            });
        }
        self.attempts += 1;
        let sel = select_node(&self.tree, svc.cfg.c_puct)?;
        svc.log.push(
            EventKind::Selection,
            Some(sel.node_id),
            format!("puct {:.6} = {:.6} + {:.6}", sel.total, sel.exploit, sel.explore),
            svc.rng,
        );
        match expand(&mut self.tree, sel.node_id, svc)? {
            ExpansionOutcome::Aborted(msg) => {
                svc.log.push(
                    EventKind::Failure,
                    Some(sel.node_id),
                    format!("expansion aborted: {msg}"),
                    svc.rng,
                );
                self.last_backend_error = Some(msg);
            }
            _ => self.last_backend_error = None,
        }
        Ok(self.is_done(svc.cfg.mcts_budget))
    }

    pub fn result(&self) -> Result<&CandidateNode> {
        best_node(&self.tree)
    }
}

/// Runs the whole phase and returns c_MCTS with the tree.
pub fn run_mcts(svc: &mut Services, base_code: &str) -> Result<(ProgramSource, SearchTree)> {
    let mut st = MctsState::init(svc, base_code)?;
    while !st.step(svc)? {}
    let best = st.result()?.program.clone();
    Ok((best, st.tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::MetricVector;

    fn node(id: u64, r: f64, prior: f64) -> CandidateNode {
        let p = ProgramSource::new(
            NodeId(id),
            format!("p{id}"),
            Lineage::new(Origin::Expansion, vec![]),
            "x".into(),
        );
        let mut n = CandidateNode::pending(p, prior);
        n.mark_feasible(MetricVector::new(0.1, 0.5, 0.5, 1.0), r);
        n
    }

    #[test]
    fn puct_example() {
        // parent N=10 with A (Q=0.5,N=3,P=0.5) and B (Q=0.4,N=1,P=0.5).
        let mut t = SearchTree::new(vec![node(1, 0.0, 1.0)]).unwrap();
        let mut a = node(2, 0.5, 0.5);
        a.visit_count = 3;
        t.insert_child(NodeId(1), a).unwrap();
        t.insert_child(NodeId(1), node(3, 0.4, 0.5)).unwrap();
        t.nodes.get_mut(&NodeId(1)).unwrap().visit_count = 10;
        t.nodes.get_mut(&NodeId(1)).unwrap().q_value = -5.0;
        let sa = puct_score(&t, NodeId(2), 1.0);
        let sb = puct_score(&t, NodeId(3), 1.0);
        assert!((sa.total - 0.8953).abs() < 1e-4);
        assert!((sb.total - 1.1906).abs() < 1e-4);
        assert_eq!(select_node(&t, 1.0).unwrap().node_id, NodeId(3));
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let t = SearchTree::new(vec![node(1, 0.3, 0.5), node(2, 0.3, 0.5)]).unwrap();
        assert_eq!(select_node(&t, 1.0).unwrap().node_id, NodeId(1));
    }

    #[test]
    fn backprop_chain_example() {
        let mut t = SearchTree::new(vec![node(1, 0.2, 1.0)]).unwrap();
        t.insert_child(NodeId(1), node(2, 0.4, 1.0)).unwrap();
        backpropagate(&mut t, NodeId(2), 0.4);
        t.insert_child(NodeId(2), node(3, 0.6, 1.0)).unwrap();
        backpropagate(&mut t, NodeId(3), 0.6);
        let a = &t.nodes[&NodeId(2)];
        assert_eq!(a.visit_count, 2);
        assert!((a.q_value - 0.5).abs() < 1e-12);
        let r = &t.nodes[&NodeId(1)];
        assert_eq!(r.visit_count, 3);
        assert!((r.q_value - 0.4).abs() < 1e-12);
        assert_eq!(t.super_root.visit_count, 3);
        t.validate().unwrap();
    }

    #[test]
    fn reward_equal_to_q_is_a_fixed_point() {
        let mut t = SearchTree::new(vec![node(1, 0.5, 1.0)]).unwrap();
        t.insert_child(NodeId(1), node(2, 0.5, 1.0)).unwrap();
        backpropagate(&mut t, NodeId(2), 0.5);
        assert_eq!(t.nodes[&NodeId(1)].q_value, 0.5);
        assert_eq!(t.nodes[&NodeId(1)].visit_count, 2);
    }
}
