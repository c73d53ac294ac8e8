//! Lookahead tree: an arena of nodes holding simulator states, novelty atoms
//! and cached action priors, with solved-label bookkeeping, discounted return
//! backup, and subtree reuse across action steps.

use crate::env::{Observation, Simulator};
use crate::error::Error;
use crate::features::{Evaluator, FeatureSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
pub struct Node<St> {
    pub state: St,
    pub atoms: FeatureSet,
    /// Action prior cached at creation time; deliberately never refreshed.
    pub policy: Option<Vec<f64>>,
    /// Transition reward from the parent edge; 0 for a freshly built root.
    pub reward: f64,
    pub terminal: bool,
    pub solved: bool,
    /// Distance from the current root.
    pub depth: u32,
    pub parent: Option<(NodeId, usize)>,
    children: Vec<Option<NodeId>>,
    /// Backed-up discounted return; scratch, valid only right after
    /// [`SearchTree::backup_returns`].
    pub ret: f64,
}

impl<St> Node<St> {
    pub fn child(&self, action: usize) -> Option<NodeId> {
        self.children.get(action).copied().flatten()
    }

    pub fn children(&self) -> &[Option<NodeId>] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.iter().all(|c| c.is_none())
    }

    /// True when every action has an expanded, solved child. Terminal nodes
    /// never satisfy this (they have no children) and are handled by their
    /// own label.
    pub fn all_children_solved(&self, nodes: &[Node<St>]) -> bool {
        self.children
            .iter()
            .all(|c| c.is_some_and(|id| nodes[id.0].solved))
    }
}

/// Arena-backed lookahead tree. The arena holds exactly the nodes reachable
/// from the root; [`SearchTree::advance_root`] compacts away discarded
/// branches.
#[derive(Debug, Clone)]
pub struct SearchTree<St> {
    nodes: Vec<Node<St>>,
    root: NodeId,
    num_actions: usize,
}

impl<St> SearchTree<St> {
    /// Builds a single-node tree around `state`, evaluating its atoms and
    /// prior.
    pub fn new<S, E>(state: St, sim: &S, eval: &E) -> Result<Self, Error>
    where
        S: Simulator<State = St>,
        E: Evaluator,
    {
        let num_actions = sim.num_actions();
        let obs = sim.observe(&state);
        let compact = sim.compact_observation(&state);
        let node_eval = eval.evaluate(&obs, &compact)?;
        let terminal = sim.is_terminal(&state);
        let root = Node {
            state,
            atoms: node_eval.atoms,
            policy: node_eval.policy,
            reward: 0.0,
            terminal,
            solved: false,
            depth: 0,
            parent: None,
            children: vec![None; num_actions],
            ret: 0.0,
        };
        Ok(SearchTree { nodes: vec![root], root: NodeId(0), num_actions })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node<St> {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node<St> {
        &mut self.nodes[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn max_depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// The node's observation, recomputed from its stored state. Observations
    /// are pure functions of state, so nothing is cached.
    pub fn observe<S: Simulator<State = St>>(&self, sim: &S, id: NodeId) -> Observation {
        sim.observe(&self.nodes[id.0].state)
    }

    /// Applies `action` to `parent`'s state and attaches the successor as a
    /// new child: solved=false, depth=parent+1, atoms and prior from `eval`.
    pub fn expand<S, E>(
        &mut self,
        parent: NodeId,
        action: usize,
        sim: &S,
        eval: &E,
    ) -> Result<NodeId, Error>
    where
        S: Simulator<State = St>,
        E: Evaluator,
    {
        if action >= self.num_actions {
            return Err(Error::contract(format!(
                "action {action} out of range for {} actions",
                self.num_actions
            )));
        }
        if self.nodes[parent.0].terminal {
            return Err(Error::contract("cannot expand a terminal node"));
        }
        if self.nodes[parent.0].child(action).is_some() {
            return Err(Error::contract(format!("action {action} already expanded")));
        }
        let (state, step) = sim.step(&self.nodes[parent.0].state, action)?;
        let compact = sim.compact_observation(&state);
        let node_eval = eval.evaluate(&step.observation, &compact)?;
        let id = NodeId(self.nodes.len());
        let depth = self.nodes[parent.0].depth + 1;
        self.nodes.push(Node {
            state,
            atoms: node_eval.atoms,
            policy: node_eval.policy,
            reward: step.reward,
            terminal: step.terminal,
            solved: false,
            depth,
            parent: Some((parent, action)),
            children: vec![None; self.num_actions],
            ret: 0.0,
        });
        self.nodes[parent.0].children[action] = Some(id);
        Ok(id)
    }

    /// Marks every node unsolved except terminals; run at the start of each
    /// lookahead.
    pub fn initialize_labels(&mut self) {
        for node in &mut self.nodes {
            node.solved = node.terminal;
        }
    }

    /// Marks `id` solved, then walks toward the root marking each ancestor
    /// whose every action has an expanded, solved child; stops at the first
    /// ancestor with an open branch.
    pub fn solve_and_propagate(&mut self, id: NodeId) {
        self.nodes[id.0].solved = true;
        let mut cursor = id;
        while let Some((parent, _)) = self.nodes[cursor.0].parent {
            let all_solved = {
                let p = &self.nodes[parent.0];
                p.children
                    .iter()
                    .all(|c| c.is_some_and(|cid| self.nodes[cid.0].solved))
            };
            if !all_solved {
                break;
            }
            self.nodes[parent.0].solved = true;
            cursor = parent;
        }
    }

    /// Recomputes every node's discounted return — leaf: R = r, internal:
    /// R = r + discount * max over children's R — and returns the root
    /// children's values by action (None where unexpanded).
    pub fn backup_returns(&mut self, discount: f64) -> Vec<Option<f64>> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&a, &b| self.nodes[b].depth.cmp(&self.nodes[a].depth));
        for idx in order {
            let best = self.nodes[idx]
                .children
                .iter()
                .flatten()
                .map(|c| self.nodes[c.0].ret)
                .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
            self.nodes[idx].ret = match best {
                Some(m) => self.nodes[idx].reward + discount * m,
                None => self.nodes[idx].reward,
            };
        }
        let root = &self.nodes[self.root.0];
        root.children
            .iter()
            .map(|c| c.map(|id| self.nodes[id.0].ret))
            .collect()
    }

    /// Makes the chosen child the new root, discards every other branch, and
    /// rebases depths so the new root sits at 0. Retained nodes keep their
    /// state, reward and terminal payload untouched.
    pub fn advance_root(&mut self, action: usize) -> Result<(), Error> {
        let new_root = self.nodes[self.root.0]
            .child(action)
            .ok_or_else(|| Error::contract(format!("action {action} has no child to advance into")))?;
        let mut remap: Vec<Option<NodeId>> = vec![None; self.nodes.len()];
        let mut keep: Vec<usize> = Vec::new();
        let mut queue = std::collections::VecDeque::from([new_root]);
        remap[new_root.0] = Some(NodeId(0));
        while let Some(id) = queue.pop_front() {
            keep.push(id.0);
            for child in self.nodes[id.0].children.iter().flatten() {
                remap[child.0] = Some(NodeId(keep.len() + queue.len()));
                queue.push_back(*child);
            }
        }
        let shift = self.nodes[new_root.0].depth;
        let mut slots: Vec<Option<Node<St>>> = self.nodes.drain(..).map(Some).collect();
        let mut nodes = Vec::with_capacity(keep.len());
        for old_idx in keep {
            let mut node = slots[old_idx].take().expect("each kept node is visited once");
            node.depth -= shift;
            node.parent = node
                .parent
                .and_then(|(pid, a)| remap[pid.0].map(|np| (np, a)));
            for child in node.children.iter_mut() {
                *child = child.and_then(|c| remap[c.0]);
            }
            nodes.push(node);
        }
        nodes[0].parent = None;
        self.nodes = nodes;
        self.root = NodeId(0);
        Ok(())
    }

    /// Indented debug dump, one node per line in depth-first action order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut stack: Vec<(NodeId, Option<usize>)> = vec![(self.root, None)];
        while let Some((id, action)) = stack.pop() {
            let node = &self.nodes[id.0];
            for _ in 0..node.depth {
                out.push_str("  ");
            }
            let label = match action {
                Some(a) => format!("a{a}"),
                None => "root".to_string(),
            };
            out.push_str(&format!(
                "{label} r={} d={} solved={} R={}\n",
                node.reward, node.depth, node.solved, node.ret
            ));
            for (a, child) in node.children.iter().enumerate().rev() {
                if let Some(c) = child {
                    stack.push((*c, Some(a)));
                }
            }
        }
        out
    }
}
