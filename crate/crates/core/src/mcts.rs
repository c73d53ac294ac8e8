//! PUCT Monte-Carlo tree search adapted to single-agent tasks with
//! intermediate rewards: visit-count targets, root Dirichlet noise, and a
//! value head regressed on observed discounted returns.

use crate::config::ExperimentConfig;
use crate::env::Simulator;
use crate::error::Error;
use crate::learner::{
    sample_probs, train_step, Agent, AgentOutcome, Dataset, Transition,
};
use crate::net::{softmax, Network, RmsProp};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Search node with per-action edge statistics. `q(a) = w[a] / n[a]` is
/// meaningful only when `n[a] > 0`.
#[derive(Debug, Clone)]
pub struct MctsNode<St> {
    pub state: St,
    /// Transition reward on the edge from the parent; 0 for a fresh root.
    pub reward: f64,
    pub terminal: bool,
    /// Value-head estimate at expansion time; terminal nodes carry 0.
    pub value: f64,
    /// Network prior, kept pristine so root noise can be re-mixed each step.
    pub raw_priors: Vec<f64>,
    /// Prior actually used by selection; equals `raw_priors` except at a
    /// root that currently carries exploration noise.
    pub priors: Vec<f64>,
    pub n: Vec<u32>,
    pub w: Vec<f64>,
    pub children: Vec<Option<usize>>,
    pub parent: Option<(usize, usize)>,
}

/// Arena-backed search tree whose root advances as actions are executed.
#[derive(Debug, Clone)]
pub struct MctsTree<St> {
    nodes: Vec<MctsNode<St>>,
    root: usize,
    num_actions: usize,
}

impl<St: Clone> MctsTree<St> {
    /// Evaluates `state` with the network and plants it as the root.
    pub fn new<S>(state: St, sim: &S, net: &Network) -> Result<Self, Error>
    where
        S: Simulator<State = St>,
    {
        let num_actions = sim.num_actions();
        let obs = sim.observe(&state);
        let out = net.forward(&obs)?;
        let priors = softmax(&out.logits, 1.0)?;
        let value = out.value.unwrap_or(0.0);
        let root = MctsNode {
            state,
            reward: 0.0,
            terminal: false,
            value,
            raw_priors: priors.clone(),
            priors,
            n: vec![0; num_actions],
            w: vec![0.0; num_actions],
            children: vec![None; num_actions],
            parent: None,
        };
        Ok(MctsTree { nodes: vec![root], root: 0, num_actions })
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn nodes(&self) -> &[MctsNode<St>] {
        &self.nodes
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Keeps the chosen child's subtree — statistics included — and drops
    /// everything else. The child becomes the root at its existing stats.
    pub fn advance_root(&mut self, action: usize) -> Result<(), Error> {
        let child = self.nodes[self.root].children.get(action).copied().flatten();
        let Some(child) = child else {
            return Err(Error::contract(format!(
                "cannot advance into unexpanded action {action}"
            )));
        };
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut queue = std::collections::VecDeque::from([child]);
        let mut kept: Vec<MctsNode<St>> = Vec::new();
        remap[child] = 0;
        while let Some(old) = queue.pop_front() {
            for &c in self.nodes[old].children.iter().flatten() {
                remap[c] = kept.len() + queue.len() + 1;
                queue.push_back(c);
            }
            kept.push(self.nodes[old].clone());
        }
        for (i, node) in kept.iter_mut().enumerate() {
            node.parent = if i == 0 { None } else { node.parent.map(|(p, a)| (remap[p], a)) };
            for slot in node.children.iter_mut() {
                *slot = slot.map(|c| remap[c]);
            }
        }
        kept[0].priors = kept[0].raw_priors.clone();
        self.nodes = kept;
        self.root = 0;
        Ok(())
    }
}

/// PUCT edge choice: argmax of `q(a) + p_uct · priors[a] · √Σn / (1 + n[a])`
/// with `q(a) = 0` for unvisited edges; exact ties break uniformly.
pub fn puct_select(
    n: &[u32],
    w: &[f64],
    priors: &[f64],
    p_uct: f64,
    rng: &mut impl Rng,
) -> usize {
    let total_visits: u32 = n.iter().sum();
    let sqrt_total = f64::from(total_visits).sqrt();
    let mut best = f64::NEG_INFINITY;
    let mut ties: Vec<usize> = Vec::new();
    for a in 0..n.len() {
        let q = if n[a] > 0 { w[a] / f64::from(n[a]) } else { 0.0 };
        let score = q + p_uct * priors[a] * sqrt_total / (1.0 + f64::from(n[a]));
        if score > best {
            best = score;
            ties.clear();
            ties.push(a);
        } else if score == best {
            ties.push(a);
        }
    }
    ties[rng.random_range(0..ties.len())]
}

/// Visit-count target: probabilities proportional to `n^(1/tau)`; at the
/// default temperature of 1 this is exactly `n / Σn`.
pub fn target_from_visits(n: &[u32], tau: f64) -> Result<Vec<f64>, Error> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::contract(format!("bad visit temperature {tau}")));
    }
    let weights: Vec<f64> = if tau == 1.0 {
        n.iter().map(|&v| f64::from(v)).collect()
    } else {
        n.iter().map(|&v| f64::from(v).powf(1.0 / tau)).collect()
    };
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::contract("visit target needs at least one visit"));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// One draw from a symmetric Dirichlet via normalized Gamma samples.
fn dirichlet(alpha: f64, k: usize, rng: &mut impl Rng) -> Result<Vec<f64>, Error> {
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::contract(format!("bad Dirichlet alpha {alpha}: {e}")))?;
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total <= f64::MIN_POSITIVE {
        // All mass underflowed; degenerate but possible for tiny alpha.
        return Ok(vec![1.0 / k as f64; k]);
    }
    Ok(draws.iter().map(|d| d / total).collect())
}

/// Root-to-leaf trace of one simulation, in traversal order.
#[derive(Debug, Clone)]
struct SimRecord {
    /// `(node, action)` pairs; the final pair may have created a node.
    edges: Vec<(usize, usize)>,
    /// Edge rewards aligned with `edges`.
    rewards: Vec<f64>,
    /// Value-head estimate at the leaf; 0 when the leaf is terminal.
    leaf_value: f64,
    expanded: bool,
}

/// Adds the discounted downstream return of every traversed edge to its `w`
/// and bumps its visit count: the edge into the leaf receives
/// `r + γ·leaf_value`, the one above `r' + γ·(that)`, and so on up.
fn backup<St>(nodes: &mut [MctsNode<St>], record: &SimRecord, discount: f64) {
    let mut g = record.leaf_value;
    for ((node, action), reward) in record.edges.iter().zip(&record.rewards).rev() {
        g = reward + discount * g;
        nodes[*node].w[*action] += g;
        nodes[*node].n[*action] += 1;
    }
}

/// Knobs for [`AlphaZeroAgent`].
#[derive(Debug, Clone, Copy)]
pub struct AzParams {
    pub discount: f64,
    pub tree_budget: usize,
    pub tree_policy_temp: f64,
    pub batch_size: usize,
    pub dataset_capacity: usize,
    pub l2_factor: f64,
    pub value_loss_factor: f64,
    pub puct: f64,
    pub dirichlet_alpha: f64,
    pub noise_factor: f64,
    /// When false the agent plans with its current network but never stores
    /// transitions or updates parameters.
    pub train: bool,
}

impl AzParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        AzParams {
            discount: cfg.discount,
            tree_budget: cfg.tree_budget,
            tree_policy_temp: cfg.tree_policy_temp,
            batch_size: cfg.batch_size,
            dataset_capacity: cfg.dataset_size,
            l2_factor: cfg.l2_factor,
            value_loss_factor: cfg.value_loss_factor,
            puct: cfg.puct,
            dirichlet_alpha: cfg.dirichlet_alpha,
            noise_factor: cfg.noise_factor,
            train: true,
        }
    }
}

struct PendingTransition {
    observation: crate::env::Observation,
    target: Vec<f64>,
    /// Reward received right after acting on this step; filled in once the
    /// action has been executed.
    reward: f64,
}

/// PUCT agent: per step it re-noises the root prior, runs simulations until
/// the expansion budget is spent, trains on the replay dataset, then executes
/// an action sampled from the visit-count target and keeps that subtree.
/// Value targets are the observed discounted returns-to-go, filled in when
/// the episode completes; an episode cut short is discarded unlabeled.
pub struct AlphaZeroAgent<'s, S: Simulator> {
    sim: &'s S,
    params: AzParams,
    net: Network,
    opt: RmsProp,
    dataset: Dataset,
    episode_buf: Vec<PendingTransition>,
    tree: Option<MctsTree<S::State>>,
    episode_over: bool,
    interactions: u64,
    rng: ChaCha8Rng,
}

impl<'s, S: Simulator> AlphaZeroAgent<'s, S> {
    pub fn new(
        sim: &'s S,
        params: AzParams,
        net: Network,
        opt: RmsProp,
        rng: ChaCha8Rng,
    ) -> Result<Self, Error> {
        if !net.arch().value_head() {
            return Err(Error::contract("this agent requires a network with a value head"));
        }
        Ok(AlphaZeroAgent {
            sim,
            params,
            net,
            opt,
            dataset: Dataset::new(params.dataset_capacity),
            episode_buf: Vec::new(),
            tree: None,
            episode_over: true,
            interactions: 0,
            rng,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn into_net(self) -> Network {
        self.net
    }

    pub fn tree(&self) -> Option<&MctsTree<S::State>> {
        self.tree.as_ref()
    }

    fn apply_root_noise(&mut self) -> Result<(), Error> {
        let tree = self.tree.as_mut().expect("episode in progress");
        let noise =
            dirichlet(self.params.dirichlet_alpha, tree.num_actions, &mut self.rng)?;
        let root = &mut tree.nodes[tree.root];
        let eps = self.params.noise_factor;
        root.priors = root
            .raw_priors
            .iter()
            .zip(&noise)
            .map(|(p, x)| (1.0 - eps) * p + eps * x)
            .collect();
        Ok(())
    }

    /// One selection→expansion→backup pass from the root.
    fn simulate(&mut self) -> Result<SimRecord, Error> {
        let tree = self.tree.as_mut().expect("episode in progress");
        let mut record = SimRecord {
            edges: Vec::new(),
            rewards: Vec::new(),
            leaf_value: 0.0,
            expanded: false,
        };
        let mut id = tree.root;
        loop {
            if tree.nodes[id].terminal {
                record.leaf_value = 0.0;
                break;
            }
            let node = &tree.nodes[id];
            let action =
                puct_select(&node.n, &node.w, &node.priors, self.params.puct, &mut self.rng);
            if let Some(child) = node.children[action] {
                record.edges.push((id, action));
                record.rewards.push(tree.nodes[child].reward);
                id = child;
                continue;
            }
            let (next, step) = self.sim.step(&node.state, action)?;
            let new = if step.terminal {
                let k = tree.num_actions;
                MctsNode {
                    state: next,
                    reward: step.reward,
                    terminal: true,
                    value: 0.0,
                    raw_priors: vec![1.0 / k as f64; k],
                    priors: vec![1.0 / k as f64; k],
                    n: vec![0; k],
                    w: vec![0.0; k],
                    children: vec![None; k],
                    parent: Some((id, action)),
                }
            } else {
                let out = self.net.forward(&step.observation)?;
                let priors = softmax(&out.logits, 1.0)?;
                let value = out
                    .value
                    .ok_or_else(|| Error::contract("value head missing at expansion"))?;
                let k = tree.num_actions;
                MctsNode {
                    state: next,
                    reward: step.reward,
                    terminal: false,
                    value,
                    raw_priors: priors.clone(),
                    priors,
                    n: vec![0; k],
                    w: vec![0.0; k],
                    children: vec![None; k],
                    parent: Some((id, action)),
                }
            };
            let child = tree.nodes.len();
            record.edges.push((id, action));
            record.rewards.push(new.reward);
            record.leaf_value = if new.terminal { 0.0 } else { new.value };
            record.expanded = true;
            tree.nodes.push(new);
            tree.nodes[id].children[action] = Some(child);
            break;
        }
        backup(&mut tree.nodes, &record, self.params.discount);
        Ok(record)
    }

    /// Runs one full planning round — fresh root noise plus simulations until
    /// the expansion budget is spent — without acting. Simulations that only
    /// revisit terminal leaves expand nothing, so the round also stops after
    /// 20× budget simulations to stay finite on exhausted trees.
    pub fn plan_only(&mut self) -> Result<(), Error> {
        if self.episode_over || self.tree.is_none() {
            return Err(Error::contract("plan called with no episode in progress"));
        }
        self.apply_root_noise()?;
        let budget = self.params.tree_budget;
        let mut expansions = 0;
        let mut simulations = 0;
        while expansions < budget && simulations < 20 * budget {
            let record = self.simulate()?;
            simulations += 1;
            if record.expanded {
                expansions += 1;
            }
        }
        if expansions < budget {
            log::debug!(
                "planning stopped early: {expansions} expansions in {simulations} simulations"
            );
        }
        self.interactions += expansions as u64;
        Ok(())
    }

    fn flush_episode(&mut self) {
        let mut z = 0.0;
        let mut returns = vec![0.0; self.episode_buf.len()];
        for (slot, pending) in returns.iter_mut().zip(&self.episode_buf).rev() {
            z = pending.reward + self.params.discount * z;
            *slot = z;
        }
        for (pending, z) in self.episode_buf.drain(..).zip(returns) {
            self.dataset.push(Transition {
                observation: pending.observation,
                target: pending.target,
                value: Some(z),
            });
        }
    }
}

impl<S: Simulator> Agent for AlphaZeroAgent<'_, S> {
    fn begin_episode(&mut self) -> Result<(), Error> {
        if !self.episode_buf.is_empty() {
            log::debug!(
                "discarding {} unlabeled transitions from an unfinished episode",
                self.episode_buf.len()
            );
            self.episode_buf.clear();
        }
        let (state, _) = self.sim.reset();
        self.tree = Some(MctsTree::new(state, self.sim, &self.net)?);
        self.episode_over = false;
        Ok(())
    }

    fn act(&mut self) -> Result<AgentOutcome, Error> {
        self.plan_only()?;
        let tree = self.tree.as_ref().expect("episode in progress");
        let root = &tree.nodes[tree.root];
        if root.n.iter().all(|&v| v == 0) {
            log::warn!("no simulation reached any root child; taking a uniform random action");
            let action = self.rng.random_range(0..self.sim.num_actions());
            let state = root.state.clone();
            let (next, step) = self.sim.step(&state, action)?;
            self.interactions += 1;
            self.episode_over = step.terminal;
            if !step.terminal {
                self.tree = Some(MctsTree::new(next, self.sim, &self.net)?);
            }
            return Ok(AgentOutcome {
                action,
                reward: step.reward,
                terminal: step.terminal,
                loss: None,
            });
        }
        let target = target_from_visits(&root.n, self.params.tree_policy_temp)?;
        let loss = if self.params.train {
            let observation = self.sim.observe(&root.state);
            self.episode_buf.push(PendingTransition {
                observation,
                target: target.clone(),
                reward: 0.0,
            });
            train_step(
                &mut self.net,
                &mut self.opt,
                &self.dataset,
                self.params.batch_size,
                self.params.l2_factor,
                self.params.value_loss_factor,
                &mut self.rng,
            )?
        } else {
            None
        };
        let action = sample_probs(&target, &mut self.rng);
        let tree = self.tree.as_mut().expect("episode in progress");
        tree.advance_root(action)?;
        let root = &tree.nodes[tree.root];
        let (reward, terminal) = (root.reward, root.terminal);
        if let Some(pending) = self.episode_buf.last_mut() {
            pending.reward = reward;
        }
        if terminal {
            self.flush_episode();
        }
        self.episode_over = terminal;
        Ok(AgentOutcome { action, reward, terminal, loss })
    }

    fn interactions(&self) -> u64 {
        self.interactions
    }
}
