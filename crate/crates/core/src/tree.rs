//! Multi-root search tree hanging under a virtual super-root.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CandidateNode, NodeId};

/// Virtual parent of all roots. Its visit count is N(u) for a root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperRoot {
    pub children: Vec<NodeId>,
    pub visit_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    pub super_root: SuperRoot,
    pub nodes: BTreeMap<NodeId, CandidateNode>,
    /// Feasible nodes in evaluation order.
    pub archive: Vec<NodeId>,
    pub feasible_count: usize,
    next_id: u64,
}

impl SearchTree {
    /// Builds a tree whose roots are the given feasible nodes.
    pub fn new(roots: Vec<CandidateNode>) -> Result<Self> {
        if roots.is_empty() {
            return Err(Error::config("search tree needs at least one root"));
        }
        if let Some(bad) = roots.iter().find(|r| !r.is_feasible() || r.reward.is_none()) {
            return Err(Error::config(format!(
                "root {} is not feasible with a reward",
                bad.id()
            )));
        }
        let mut tree = SearchTree::empty();
        for root in roots {
            tree.insert_root(root)?;
        }
        Ok(tree)
    }

    pub(crate) fn empty() -> Self {
        SearchTree {
            super_root: SuperRoot {
                children: Vec::new(),
                visit_count: 0,
            },
            nodes: BTreeMap::new(),
            archive: Vec::new(),
            feasible_count: 0,
            next_id: 1,
        }
    }

    /// Attaches a root (feasible or not) under the super-root.
    pub fn insert_root(&mut self, mut root: CandidateNode) -> Result<()> {
        let id = root.id();
        if self.nodes.contains_key(&id) {
            return Err(Error::config(format!("duplicate node id {id}")));
        }
        root.parent = None;
        root.depth = 1;
        let pos = self.super_root.children.binary_search(&id).unwrap_or_else(|p| p);
        self.super_root.children.insert(pos, id);
        if root.is_feasible() {
            self.super_root.visit_count += root.visit_count;
            self.archive.push(id);
            self.feasible_count += 1;
        }
        self.next_id = self.next_id.max(id.0 + 1);
        self.nodes.insert(id, root);
        Ok(())
    }

    /// Attaches `child` under `parent`. Statistics of ancestors are left to
    /// the caller (backpropagation).
    pub fn insert_child(&mut self, parent: NodeId, mut child: CandidateNode) -> Result<()> {
        let id = child.id();
        if self.nodes.contains_key(&id) {
            return Err(Error::config(format!("duplicate node id {id}")));
        }
        let parent_node = self
            .nodes
            .get_mut(&parent)
            .ok_or_else(|| Error::config(format!("unknown parent {parent}")))?;
        parent_node.children.push(id);
        child.parent = Some(parent);
        child.depth = parent_node.depth + 1;
        if child.is_feasible() {
            self.archive.push(id);
            self.feasible_count += 1;
        }
        self.next_id = self.next_id.max(id.0 + 1);
        self.nodes.insert(id, child);
        Ok(())
    }

    /// Reserves the next node id.
    pub fn allocate_id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    pub fn peek_next_id(&self) -> NodeId {
        NodeId(self.next_id)
    }

    pub fn node(&self, id: NodeId) -> Option<&CandidateNode> {
        self.nodes.get(&id)
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.super_root.children
    }

    /// Visit count of the node's parent, the super-root for roots.
    pub fn parent_visits(&self, id: NodeId) -> u64 {
        match self.nodes.get(&id).and_then(|n| n.parent) {
            Some(p) => self.nodes[&p].visit_count,
            None => self.super_root.visit_count,
        }
    }

    /// Ancestors from the direct parent up to the root (super-root excluded).
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.nodes.get(&id).and_then(|n| n.parent);
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes.get(&p).and_then(|n| n.parent);
            if out.len() > self.nodes.len() {
                break;
            }
        }
        out
    }

    pub fn feasible_nodes(&self) -> impl Iterator<Item = &CandidateNode> {
        self.archive.iter().map(move |id| &self.nodes[id])
    }

    pub fn archive_metrics(&self) -> Vec<crate::types::MetricVector> {
        self.feasible_nodes().filter_map(|n| n.metrics).collect()
    }

    /// Feasible node with maximal Q; ties go to the lowest id.
    pub fn best_by_q(&self) -> Option<&CandidateNode> {
        let mut best: Option<&CandidateNode> = None;
        for n in self.nodes.values().filter(|n| n.is_feasible()) {
            best = match best {
                Some(b) if b.q_value >= n.q_value => Some(b),
                _ => Some(n),
            };
        }
        best
    }

    /// Full structural check: single parents, acyclicity, consistent
    /// child links, archive contents and the super-root counter.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(format!("invalid tree: {m}")));
        let mut seen_as_child: BTreeSet<NodeId> = BTreeSet::new();
        for &r in &self.super_root.children {
            if !seen_as_child.insert(r) {
                return bad(format!("node {r} listed twice"));
            }
            match self.nodes.get(&r) {
                Some(n) if n.parent.is_none() => {}
                Some(_) => return bad(format!("root {r} has a parent")),
                None => return bad(format!("missing root {r}")),
            }
        }
        for (id, n) in &self.nodes {
            if *id != n.id() {
                return bad(format!("key {id} holds node {}", n.id()));
            }
            for c in &n.children {
                if !seen_as_child.insert(*c) {
                    return bad(format!("node {c} has more than one parent"));
                }
                match self.nodes.get(c) {
                    Some(child) if child.parent == Some(*id) => {
                        if child.depth != n.depth + 1 {
                            return bad(format!("depth mismatch at {c}"));
                        }
                    }
                    _ => return bad(format!("dangling child link {id}->{c}")),
                }
            }
            if n.parent.is_none() && !self.super_root.children.contains(id) {
                return bad(format!("orphan node {id}"));
            }
            let feasible = n.is_feasible();
            if feasible != n.metrics.is_some() || feasible != n.reward.is_some() {
                return bad(format!("status/metrics/reward disagree at {id}"));
            }
            if feasible && n.visit_count < 1 {
                return bad(format!("feasible node {id} has zero visits"));
            }
            if !feasible && n.visit_count != 0 {
                return bad(format!("infeasible node {id} carries visits"));
            }
            if feasible {
                let below: u64 = n
                    .children
                    .iter()
                    .filter_map(|c| self.nodes.get(c))
                    .map(|c| c.visit_count)
                    .sum();
                if n.visit_count != 1 + below {
                    return bad(format!("visit count at {id} is not 1 + children"));
                }
            }
        }
        if seen_as_child.len() != self.nodes.len() {
            return bad("unreachable nodes (cycle or detached subtree)".into());
        }
        // Every node reachable from the super-root by parent links terminates.
        for id in self.nodes.keys() {
            if self.ancestors(*id).len() >= self.nodes.len() {
                return bad(format!("cycle through {id}"));
            }
        }
        let feasible: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.is_feasible())
            .map(|n| n.id())
            .collect();
        let mut archived = self.archive.clone();
        archived.sort();
        if archived != feasible || self.feasible_count != feasible.len() {
            return bad("archive does not match feasible nodes".into());
        }
        let root_visits: u64 = self.super_root.children.iter().map(|r| self.nodes[r].visit_count).sum();
        if root_visits != self.super_root.visit_count {
            return bad(format!(
                "super-root visits {} != sum of root visits {root_visits}",
                self.super_root.visit_count
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Lineage, MetricVector, Origin, ProgramSource};

    pub(crate) fn feasible(id: u64, reward: f64) -> CandidateNode {
        let p = ProgramSource::new(
            NodeId(id),
            format!("program {id}"),
            Lineage::new(Origin::RootInit, vec![]),
            format!("n{id}"),
        );
        let mut n = CandidateNode::pending(p, 1.0);
        n.mark_feasible(MetricVector::new(0.5, 0.5, 0.5, 10.0), reward);
        n
    }

    #[test]
    fn single_root_tree() {
        let t = SearchTree::new(vec![feasible(1, 0.5)]).unwrap();
        assert_eq!(t.feasible_count, 1);
        assert_eq!(t.super_root.visit_count, 1);
        t.validate().unwrap();
    }

    #[test]
    fn three_roots_sum_visits() {
        let t = SearchTree::new((1..=3).map(|i| feasible(i, 0.1 * i as f64)).collect()).unwrap();
        assert_eq!(t.super_root.visit_count, 3);
        assert_eq!(t.archive, vec![NodeId(1), NodeId(2), NodeId(3)]);
    }

    #[test]
    fn rejects_empty_and_infeasible_roots() {
        assert!(matches!(SearchTree::new(vec![]), Err(Error::Config(_))));
        let mut bad = feasible(2, 0.3);
        bad.mark_infeasible("nope");
        assert!(matches!(
            SearchTree::new(vec![feasible(1, 0.1), bad]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn validator_catches_double_parent() {
        let mut t = SearchTree::new(vec![feasible(1, 0.1), feasible(2, 0.2)]).unwrap();
        let c = feasible(3, 0.3);
        t.insert_child(NodeId(1), c).unwrap();
        t.validate().unwrap_err(); // visits not yet backpropagated
        t.nodes.get_mut(&NodeId(1)).unwrap().visit_count += 1;
        t.super_root.visit_count += 1;
        t.validate().unwrap();
        t.nodes.get_mut(&NodeId(2)).unwrap().children.push(NodeId(3));
        assert!(t.validate().is_err());
    }

    #[test]
    fn ancestors_walk_to_root() {
        let mut t = SearchTree::new(vec![feasible(1, 0.1)]).unwrap();
        t.insert_child(NodeId(1), feasible(2, 0.2)).unwrap();
        t.insert_child(NodeId(2), feasible(3, 0.3)).unwrap();
        assert_eq!(t.ancestors(NodeId(3)), vec![NodeId(2), NodeId(1)]);
        assert_eq!(t.node(NodeId(3)).unwrap().depth, 3);
        assert_eq!(t.allocate_id(), NodeId(4));
    }
}
