//! Trajectory statistics over planned trees: how deep into distinct states a
//! single lookahead reaches.

use crate::config::{Algorithm, ExperimentConfig};
use crate::env::Simulator;
use crate::error::Error;
use crate::learner::{arch_for, optimizer_for, Agent, PiIwParams};
use crate::mcts::{AlphaZeroAgent, AzParams, MctsTree};
use crate::net::Network;
use crate::planner::{iw1_bfs, lookahead};
use crate::tree::SearchTree;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::hash::Hash;

/// Longest root-to-leaf trajectory after removing repeated states.
///
/// Convention: `distinct_states` counts distinct state identities along the
/// best path, so a single-node tree scores 1; `edges` is the same trajectory
/// measured in edges, i.e. `distinct_states - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryLength {
    pub distinct_states: usize,
    pub edges: usize,
}

fn longest_unique<K: Eq + Hash>(keys: &[K], children: &[Vec<usize>], root: usize) -> usize {
    // Depth-first walk keeping a multiset of the keys on the current path;
    // a key is "new" while its count rises from zero.
    let mut seen: HashMap<&K, usize> = HashMap::new();
    let mut best = 0;
    let mut stack: Vec<(usize, bool)> = vec![(root, false)];
    let mut distinct = 0;
    while let Some((id, leaving)) = stack.pop() {
        let count = seen.entry(&keys[id]).or_insert(0);
        if leaving {
            *count -= 1;
            if *count == 0 {
                distinct -= 1;
            }
            continue;
        }
        if *count == 0 {
            distinct += 1;
        }
        *count += 1;
        best = best.max(distinct);
        stack.push((id, true));
        for &child in &children[id] {
            stack.push((child, false));
        }
    }
    best
}

/// Longest unique trajectory in a lookahead tree.
pub fn trajectory_length_search<S: Simulator>(
    tree: &SearchTree<S::State>,
    sim: &S,
) -> TrajectoryLength {
    let keys: Vec<S::StateKey> =
        tree.ids().map(|id| sim.state_key(&tree.node(id).state)).collect();
    let children: Vec<Vec<usize>> = tree
        .ids()
        .map(|id| tree.node(id).children().iter().flatten().map(|c| c.0).collect())
        .collect();
    let distinct = longest_unique(&keys, &children, tree.root().0);
    TrajectoryLength { distinct_states: distinct, edges: distinct.saturating_sub(1) }
}

/// Longest unique trajectory in a Monte-Carlo search tree.
pub fn trajectory_length_mcts<S: Simulator>(
    tree: &MctsTree<S::State>,
    sim: &S,
) -> TrajectoryLength {
    let keys: Vec<S::StateKey> =
        tree.nodes().iter().map(|n| sim.state_key(&n.state)).collect();
    let children: Vec<Vec<usize>> = tree
        .nodes()
        .iter()
        .map(|n| n.children.iter().flatten().copied().collect())
        .collect();
    let distinct = longest_unique(&keys, &children, tree.root());
    TrajectoryLength { distinct_states: distinct, edges: distinct.saturating_sub(1) }
}

/// Mean and population standard deviation of first-lookahead trajectory
/// lengths over independently seeded, freshly initialized runs.
#[derive(Debug, Clone, Copy)]
pub struct DepthStats {
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub mean_edges: f64,
}

/// Runs `runs` fresh planning rounds (new network, reset environment, one
/// planning step, no learning) and summarizes the longest unique trajectory
/// of each resulting tree. Run `i` is seeded with `base_seed + i`.
pub fn first_lookahead_depth_stats<S: Simulator>(
    cfg: &ExperimentConfig,
    sim: &S,
    rows: usize,
    cols: usize,
    runs: usize,
    base_seed: u64,
) -> Result<DepthStats, Error> {
    if runs == 0 {
        return Err(Error::contract("depth statistics need at least one run"));
    }
    let mut lengths = Vec::with_capacity(runs);
    for i in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed + i as u64);
        let length = match cfg.algorithm {
            Algorithm::AlphaZero => {
                let net = Network::new(arch_for(sim, cfg), &mut rng)?;
                let opt = optimizer_for(&net, cfg)?;
                let mut agent =
                    AlphaZeroAgent::new(sim, AzParams::from_config(cfg), net, opt, rng)?;
                agent.begin_episode()?;
                agent.plan_only()?;
                trajectory_length_mcts(agent.tree().expect("episode in progress"), sim)
            }
            Algorithm::IwBfs => {
                let eval = crate::features::BasicEvaluator::new(rows, cols);
                let (state, _) = sim.reset();
                let mut tree = SearchTree::new(state, sim, &eval)?;
                iw1_bfs(&mut tree, sim, &eval, cfg.tree_budget)?;
                trajectory_length_search(&tree, sim)
            }
            Algorithm::PiIwBasic | Algorithm::PiIwDynamic | Algorithm::RolloutIw => {
                let params = PiIwParams::from_config(cfg, rows, cols)?;
                let net = match cfg.algorithm {
                    Algorithm::RolloutIw => None,
                    _ => Some(Network::new(arch_for(sim, cfg), &mut rng)?),
                };
                let eval = crate::learner::make_eval(&net, &params)?;
                let (state, _) = sim.reset();
                let mut tree = SearchTree::new(state, sim, &eval)?;
                lookahead(&mut tree, sim, &eval, params.sampler, cfg.tree_budget, &mut rng)?;
                trajectory_length_search(&tree, sim)
            }
        };
        lengths.push(length);
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().map(|l| l.distinct_states as f64).sum::<f64>() / n;
    let var = lengths
        .iter()
        .map(|l| (l.distinct_states as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let mean_edges = lengths.iter().map(|l| l.edges as f64).sum::<f64>() / n;
    Ok(DepthStats { runs, mean, std: var.sqrt(), mean_edges })
}

/// Summary of one planning step from the reset state, with no learning.
#[derive(Debug, Clone)]
pub struct PlanOnceReport {
    pub algorithm: Algorithm,
    /// Simulator expansions used (= environment interactions).
    pub expansions: usize,
    /// Nodes in the resulting tree, root included.
    pub nodes: usize,
    pub max_depth: u32,
    pub trajectory: TrajectoryLength,
    /// Width planners only: whether the whole tree was proven exhausted.
    pub root_solved: Option<bool>,
    /// `iw-bfs` only: children discarded for carrying only seen atoms.
    pub pruned_states: Option<usize>,
    /// Per action: discounted backed-up return (width planners) or mean
    /// simulation value (Monte-Carlo); `None` for unexpanded/unvisited.
    pub root_returns: Vec<Option<f64>>,
    /// Monte-Carlo only: root visit counts per action.
    pub root_visits: Option<Vec<u32>>,
}

/// Plans once from the reset state under `cfg` and reports the tree shape.
/// Learning algorithms plan with a freshly initialized network.
pub fn plan_once<S: Simulator>(
    cfg: &ExperimentConfig,
    sim: &S,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<PlanOnceReport, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match cfg.algorithm {
        Algorithm::AlphaZero => {
            let net = Network::new(arch_for(sim, cfg), &mut rng)?;
            let opt = optimizer_for(&net, cfg)?;
            let mut agent = AlphaZeroAgent::new(sim, AzParams::from_config(cfg), net, opt, rng)?;
            agent.begin_episode()?;
            agent.plan_only()?;
            let tree = agent.tree().expect("episode in progress");
            let root = &tree.nodes()[tree.root()];
            let returns = root
                .n
                .iter()
                .zip(&root.w)
                .map(|(&n, &w)| (n > 0).then(|| w / n as f64))
                .collect();
            let mut max_depth = 0;
            for node in tree.nodes() {
                let mut depth = 0;
                let mut at = node;
                while let Some((parent, _)) = at.parent {
                    depth += 1;
                    at = &tree.nodes()[parent];
                }
                max_depth = max_depth.max(depth);
            }
            Ok(PlanOnceReport {
                algorithm: cfg.algorithm,
                expansions: agent.interactions() as usize,
                nodes: tree.nodes().len(),
                max_depth,
                trajectory: trajectory_length_mcts(tree, sim),
                root_solved: None,
                pruned_states: None,
                root_returns: returns,
                root_visits: Some(root.n.clone()),
            })
        }
        Algorithm::IwBfs => {
            let eval = crate::features::BasicEvaluator::new(rows, cols);
            let (state, _) = sim.reset();
            let mut tree = SearchTree::new(state, sim, &eval)?;
            let stats = iw1_bfs(&mut tree, sim, &eval, cfg.tree_budget)?;
            Ok(PlanOnceReport {
                algorithm: cfg.algorithm,
                expansions: stats.expansions,
                nodes: tree.len(),
                max_depth: tree.max_depth(),
                trajectory: trajectory_length_search(&tree, sim),
                root_solved: Some(tree.node(tree.root()).solved),
                pruned_states: Some(stats.pruned_states),
                root_returns: tree.backup_returns(cfg.discount),
                root_visits: None,
            })
        }
        Algorithm::PiIwBasic | Algorithm::PiIwDynamic | Algorithm::RolloutIw => {
            let params = PiIwParams::from_config(cfg, rows, cols)?;
            let net = match cfg.algorithm {
                Algorithm::RolloutIw => None,
                _ => Some(Network::new(arch_for(sim, cfg), &mut rng)?),
            };
            let eval = crate::learner::make_eval(&net, &params)?;
            let (state, _) = sim.reset();
            let mut tree = SearchTree::new(state, sim, &eval)?;
            let stats = lookahead(&mut tree, sim, &eval, params.sampler, cfg.tree_budget, &mut rng)?;
            Ok(PlanOnceReport {
                algorithm: cfg.algorithm,
                expansions: stats.expansions,
                nodes: tree.len(),
                max_depth: tree.max_depth(),
                trajectory: trajectory_length_search(&tree, sim),
                root_solved: Some(tree.node(tree.root()).solved),
                pruned_states: None,
                root_returns: tree.backup_returns(cfg.discount),
                root_visits: None,
            })
        }
    }
}
