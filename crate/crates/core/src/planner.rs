//! One planning step: rollout-based lookahead with depth-extended novelty
//! pruning, guided by a per-node action prior, plus the classic breadth-first
//! IW(1) search used as a baseline.

use rand::Rng;

use crate::env::Simulator;
use crate::error::Error;
use crate::features::{Evaluator, NoveltyTable};
use crate::tree::{NodeId, SearchTree};

/// How actions are drawn while traversing and growing the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    /// Uniform over unsolved actions.
    Uniform,
    /// The node's cached prior, masked and renormalized over unsolved
    /// actions. Nodes without a prior fall back to uniform.
    Prior,
}

impl Sampler {
    /// Probability vector over actions with solved actions at exactly 0 and
    /// the rest summing to 1; `None` when every action is solved. An action
    /// is solved iff its child exists and carries a solved label.
    pub fn masked_probs<St>(self, tree: &SearchTree<St>, id: NodeId) -> Option<Vec<f64>> {
        let node = tree.node(id);
        let n = tree.num_actions();
        let solved: Vec<bool> = (0..n)
            .map(|a| node.child(a).is_some_and(|c| tree.node(c).solved))
            .collect();
        if solved.iter().all(|&s| s) {
            return None;
        }
        let mut weights: Vec<f64> = match (self, &node.policy) {
            (Sampler::Prior, Some(policy)) => policy.clone(),
            _ => vec![1.0; n],
        };
        for (w, &s) in weights.iter_mut().zip(&solved) {
            if s {
                *w = 0.0;
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            // Prior mass can underflow to zero on the open actions; the mask
            // still applies, the choice degrades to uniform.
            for (w, &s) in weights.iter_mut().zip(&solved) {
                *w = if s { 0.0 } else { 1.0 };
            }
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        Some(weights)
    }

    /// Inverse-CDF draw from [`Sampler::masked_probs`].
    pub fn sample<St, R: Rng>(self, tree: &SearchTree<St>, id: NodeId, rng: &mut R) -> Option<usize> {
        let probs = self.masked_probs(tree, id)?;
        let r: f64 = rng.random();
        let mut cum = 0.0;
        let mut last_open = 0;
        for (a, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                last_open = a;
                cum += p;
                if r < cum {
                    return Some(a);
                }
            }
        }
        // Rounding can leave cum marginally below 1; the draw belongs to the
        // last open action.
        Some(last_open)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LookaheadStats {
    /// Simulator expansions performed (= environment interactions used).
    pub expansions: usize,
}

/// Grows `tree` in place: labels are re-initialized, a fresh novelty table is
/// created, and select/rollout iterations run until the budget is exhausted
/// or the root is solved. At most `budget` nodes are expanded.
pub fn lookahead<S, E, R>(
    tree: &mut SearchTree<S::State>,
    sim: &S,
    eval: &E,
    sampler: Sampler,
    budget: usize,
    rng: &mut R,
) -> Result<LookaheadStats, Error>
where
    S: Simulator,
    E: Evaluator,
    R: Rng,
{
    tree.initialize_labels();
    let mut table = NoveltyTable::new(eval.universe());
    let mut used = 0;
    while used < budget && !tree.node(tree.root()).solved {
        let (node, action) = select(tree, &mut table, sampler, rng);
        if let Some(action) = action {
            rollout(tree, node, action, &mut table, sim, eval, sampler, budget, &mut used, rng)?;
        }
    }
    Ok(LookaheadStats { expansions: used })
}

/// Walks the cached tree sampling actions until an unexpanded pair is found.
/// Visited nodes are re-checked against the table without registering their
/// atoms; terminal or non-novel nodes are solved on the spot and `None` is
/// returned as the action.
pub(crate) fn select<St, R: Rng>(
    tree: &mut SearchTree<St>,
    table: &mut NoveltyTable,
    sampler: Sampler,
    rng: &mut R,
) -> (NodeId, Option<usize>) {
    let mut id = tree.root();
    loop {
        let node = tree.node(id);
        let novel = table.check(&node.atoms, node.depth, false);
        if node.terminal || !novel {
            tree.solve_and_propagate(id);
            return (id, None);
        }
        match sampler.sample(tree, id, rng) {
            None => {
                // Every action leads to a solved child; the label rules make
                // the node itself solved.
                tree.solve_and_propagate(id);
                return (id, None);
            }
            Some(action) => match tree.node(id).child(action) {
                Some(child) => id = child,
                None => return (id, Some(action)),
            },
        }
    }
}

/// Expands a branch from `(id, action)`, registering each new node's atoms,
/// until a terminal or non-novel node ends it, or the budget cuts it
/// mid-branch (leaving the last node unsolved).
#[allow(clippy::too_many_arguments)]
pub(crate) fn rollout<S, E, R>(
    tree: &mut SearchTree<S::State>,
    mut id: NodeId,
    mut action: usize,
    table: &mut NoveltyTable,
    sim: &S,
    eval: &E,
    sampler: Sampler,
    budget: usize,
    used: &mut usize,
    rng: &mut R,
) -> Result<(), Error>
where
    S: Simulator,
    E: Evaluator,
    R: Rng,
{
    while *used < budget {
        let child = tree.expand(id, action, sim, eval)?;
        *used += 1;
        let node = tree.node(child);
        let novel = table.check(&node.atoms, node.depth, true);
        if node.terminal || !novel {
            tree.solve_and_propagate(child);
            return Ok(());
        }
        match sampler.sample(tree, child, rng) {
            Some(next) => {
                id = child;
                action = next;
            }
            None => {
                tree.solve_and_propagate(child);
                return Ok(());
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BfsStats {
    /// Children generated (= environment interactions used).
    pub expansions: usize,
    /// States admitted to the search: the root plus every generated child
    /// that registered at least one first-seen atom.
    pub novel_states: usize,
    /// Generated children pruned for carrying only seen atoms.
    pub pruned_states: usize,
}

/// Classic IW(1): breadth-first traversal expanding every action of each
/// admitted node in fixed action-index order. A generated state is admitted
/// only if one of its atoms appears for the first time in the search (plain,
/// depth-free novelty); pruned children stay in the tree as reward-candidate
/// leaves. Terminal children register their atoms but are never expanded.
pub fn iw1_bfs<S, E>(
    tree: &mut SearchTree<S::State>,
    sim: &S,
    eval: &E,
    budget: usize,
) -> Result<BfsStats, Error>
where
    S: Simulator,
    E: Evaluator,
{
    let mut seen = vec![false; eval.universe()];
    let mut register = |tree: &SearchTree<S::State>, id: NodeId| -> bool {
        let mut any_new = false;
        for atom in tree.node(id).atoms.iter() {
            let slot = &mut seen[atom.0 as usize];
            any_new |= !*slot;
            *slot = true;
        }
        any_new
    };

    let mut stats = BfsStats::default();
    let root = tree.root();
    register(tree, root);
    stats.novel_states = 1;
    if tree.node(root).terminal {
        return Ok(stats);
    }

    let mut queue = std::collections::VecDeque::from([root]);
    'search: while let Some(id) = queue.pop_front() {
        for action in 0..tree.num_actions() {
            if stats.expansions >= budget {
                break 'search;
            }
            if tree.node(id).child(action).is_some() {
                continue;
            }
            let child = tree.expand(id, action, sim, eval)?;
            stats.expansions += 1;
            if register(tree, child) {
                stats.novel_states += 1;
                if !tree.node(child).terminal {
                    queue.push_back(child);
                }
            } else {
                stats.pruned_states += 1;
            }
        }
    }
    Ok(stats)
}
