//! Online agent loop: target-policy induction from backed-up returns, a FIFO
//! replay dataset, one gradient step per planning step, and action execution
//! with subtree reuse.

use crate::config::{Algorithm, ExperimentConfig};
use crate::env::{Observation, Simulator};
use crate::error::Error;
use crate::features::{BasicEvaluator, Evaluator, FeatureSource, NodeEval, PolicyEvaluator};
use crate::net::{Arch, Network, RmsProp, TrainSample};
use crate::planner::{iw1_bfs, lookahead, Sampler};
use crate::tree::SearchTree;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::time::Instant;

/// One training example: the observation the agent planned from, the
/// tree-induced target policy, and — for value-head learners — the observed
/// discounted return-to-go.
#[derive(Debug, Clone)]
pub struct Transition {
    pub observation: Observation,
    pub target: Vec<f64>,
    pub value: Option<f64>,
}

/// Bounded replay buffer; eviction is strictly oldest-first.
#[derive(Debug, Default)]
pub struct Dataset {
    buf: VecDeque<Transition>,
    capacity: usize,
}

impl Dataset {
    pub fn new(capacity: usize) -> Self {
        Dataset { buf: VecDeque::with_capacity(capacity.min(4096)), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn push(&mut self, transition: Transition) {
        if self.capacity == 0 {
            return;
        }
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(transition);
    }

    /// Index 0 is the oldest surviving transition.
    pub fn get(&self, index: usize) -> &Transition {
        &self.buf[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf.iter()
    }
}

/// How root-child returns become a target distribution over actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetMode {
    /// All mass on the max-return children, split uniformly across exact
    /// ties.
    Greedy,
    /// Mass proportional to exp(return / tau) over expanded children.
    Softmax { tau: f64 },
}

/// Turns the root children's backed-up returns into a target policy.
/// Unexpanded actions get probability zero and never win the argmax.
pub fn induce_target_policy(returns: &[Option<f64>], mode: TargetMode) -> Result<Vec<f64>, Error> {
    if returns.iter().flatten().any(|r| !r.is_finite()) {
        return Err(Error::contract("non-finite return in target induction"));
    }
    let best = returns.iter().flatten().fold(f64::NEG_INFINITY, |a, &r| a.max(r));
    if best == f64::NEG_INFINITY {
        return Err(Error::contract("target induction needs at least one expanded root child"));
    }
    let mut out = vec![0.0; returns.len()];
    match mode {
        TargetMode::Greedy => {
            let ties = returns.iter().flatten().filter(|&&r| r == best).count();
            let share = 1.0 / ties as f64;
            for (p, r) in out.iter_mut().zip(returns) {
                if *r == Some(best) {
                    *p = share;
                }
            }
        }
        TargetMode::Softmax { tau } => {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::contract(format!("bad target temperature {tau}")));
            }
            let mut total = 0.0;
            for (p, r) in out.iter_mut().zip(returns) {
                if let Some(r) = r {
                    *p = ((r - best) / tau).exp();
                    total += *p;
                }
            }
            for p in &mut out {
                *p /= total;
            }
        }
    }
    Ok(out)
}

/// Inverse-CDF draw from a normalized probability vector.
pub(crate) fn sample_probs(probs: &[f64], rng: &mut impl Rng) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        acc += p;
        if x < acc {
            return i;
        }
    }
    last
}

/// Draws `batch_size` transitions uniformly with replacement and applies one
/// optimizer update. An empty dataset is a logged no-op returning `None`;
/// otherwise the training loss is returned.
pub fn train_step(
    net: &mut Network,
    opt: &mut RmsProp,
    dataset: &Dataset,
    batch_size: usize,
    l2_factor: f64,
    value_loss_factor: f64,
    rng: &mut impl Rng,
) -> Result<Option<f64>, Error> {
    if dataset.is_empty() {
        log::debug!("skipping gradient step: replay dataset is empty");
        return Ok(None);
    }
    if batch_size == 0 {
        return Err(Error::contract("batch_size must be positive"));
    }
    let batch: Vec<TrainSample<'_>> = (0..batch_size)
        .map(|_| {
            let t = dataset.get(rng.random_range(0..dataset.len()));
            TrainSample { obs: &t.observation, target: &t.target, value_target: t.value }
        })
        .collect();
    let (loss, grads) = net.loss_and_grads(&batch, l2_factor, value_loss_factor)?;
    opt.step(net.params_mut(), &grads)?;
    Ok(Some(loss))
}

/// What one plan→learn→act cycle produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentOutcome {
    pub action: usize,
    pub reward: f64,
    pub terminal: bool,
    /// Training loss of this step's gradient update, when one ran.
    pub loss: Option<f64>,
}

/// A planning agent the training harness drives episode by episode.
pub trait Agent {
    /// Resets the environment and search state for a new episode.
    fn begin_episode(&mut self) -> Result<(), Error>;
    /// One plan→(learn)→act cycle. Errors if no episode is in progress.
    fn act(&mut self) -> Result<AgentOutcome, Error>;
    /// Simulator transitions consumed so far: node expansions plus direct
    /// environment steps. Executing an already-expanded child is free.
    fn interactions(&self) -> u64;
}

/// Knobs for [`PiIwAgent`].
#[derive(Debug, Clone, Copy)]
pub struct PiIwParams {
    pub sampler: Sampler,
    pub feature_source: FeatureSource,
    /// When false the agent plans with whatever network it holds but never
    /// stores transitions or updates parameters.
    pub train: bool,
    pub target_mode: TargetMode,
    pub discount: f64,
    pub tree_budget: usize,
    pub tree_policy_temp: f64,
    pub batch_size: usize,
    pub dataset_capacity: usize,
    pub l2_factor: f64,
    pub value_loss_factor: f64,
}

impl PiIwParams {
    /// Settings for the rollout-style algorithms; `rows`/`cols` size the
    /// tile-atom universe.
    pub fn from_config(cfg: &ExperimentConfig, rows: usize, cols: usize) -> Result<Self, Error> {
        let tiles = FeatureSource::Tiles { rows, cols };
        let (sampler, feature_source, train) = match cfg.algorithm {
            Algorithm::PiIwBasic => (Sampler::Prior, tiles, true),
            Algorithm::PiIwDynamic => (Sampler::Prior, FeatureSource::LearnedBinary, true),
            Algorithm::RolloutIw => (Sampler::Uniform, tiles, false),
            other => {
                return Err(Error::contract(format!(
                    "{other} is not a rollout-style agent"
                )))
            }
        };
        Ok(PiIwParams {
            sampler,
            feature_source,
            train,
            target_mode: TargetMode::Greedy,
            discount: cfg.discount,
            tree_budget: cfg.tree_budget,
            tree_policy_temp: cfg.tree_policy_temp,
            batch_size: cfg.batch_size,
            dataset_capacity: cfg.dataset_size,
            l2_factor: cfg.l2_factor,
            value_loss_factor: cfg.value_loss_factor,
        })
    }
}

pub(crate) enum EvalOf<'a> {
    Basic(BasicEvaluator),
    Policy(PolicyEvaluator<'a>),
}

impl Evaluator for EvalOf<'_> {
    fn universe(&self) -> usize {
        match self {
            EvalOf::Basic(e) => e.universe(),
            EvalOf::Policy(e) => e.universe(),
        }
    }

    fn evaluate(&self, obs: &Observation, compact: &Observation) -> Result<NodeEval, Error> {
        match self {
            EvalOf::Basic(e) => e.evaluate(obs, compact),
            EvalOf::Policy(e) => e.evaluate(obs, compact),
        }
    }
}

pub(crate) fn make_eval<'a>(
    net: &'a Option<Network>,
    params: &PiIwParams,
) -> Result<EvalOf<'a>, Error> {
    match (net, params.feature_source) {
        (Some(net), source) => {
            Ok(EvalOf::Policy(PolicyEvaluator::new(net, source, params.tree_policy_temp)))
        }
        (None, FeatureSource::Tiles { rows, cols }) => {
            Ok(EvalOf::Basic(BasicEvaluator::new(rows, cols)))
        }
        (None, FeatureSource::LearnedBinary) => {
            Err(Error::contract("learned novelty features require a network"))
        }
    }
}

/// Rollout-style width agent. Each `act`: one novelty-pruned lookahead from
/// the current root, discounted backup, target induction, optional store +
/// gradient step, then an action sampled from the target; the chosen subtree
/// is kept for the next step.
pub struct PiIwAgent<'s, S: Simulator> {
    sim: &'s S,
    params: PiIwParams,
    net: Option<Network>,
    opt: Option<RmsProp>,
    dataset: Dataset,
    tree: Option<SearchTree<S::State>>,
    episode_over: bool,
    interactions: u64,
    rng: ChaCha8Rng,
}

impl<'s, S: Simulator> PiIwAgent<'s, S> {
    pub fn new(
        sim: &'s S,
        params: PiIwParams,
        net: Option<Network>,
        opt: Option<RmsProp>,
        rng: ChaCha8Rng,
    ) -> Result<Self, Error> {
        if params.train && (net.is_none() || opt.is_none()) {
            return Err(Error::contract("training requires a network and an optimizer"));
        }
        if params.sampler == Sampler::Prior && net.is_none() {
            return Err(Error::contract("the prior sampler requires a network"));
        }
        make_eval(&net, &params)?;
        Ok(PiIwAgent {
            sim,
            params,
            net,
            opt,
            dataset: Dataset::new(params.dataset_capacity),
            tree: None,
            episode_over: true,
            interactions: 0,
            rng,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn net(&self) -> Option<&Network> {
        self.net.as_ref()
    }

    pub fn into_net(self) -> Option<Network> {
        self.net
    }

    pub fn tree(&self) -> Option<&SearchTree<S::State>> {
        self.tree.as_ref()
    }
}

impl<S: Simulator> Agent for PiIwAgent<'_, S> {
    fn begin_episode(&mut self) -> Result<(), Error> {
        let (state, _) = self.sim.reset();
        let eval = make_eval(&self.net, &self.params)?;
        self.tree = Some(SearchTree::new(state, self.sim, &eval)?);
        self.episode_over = false;
        Ok(())
    }

    fn act(&mut self) -> Result<AgentOutcome, Error> {
        if self.episode_over || self.tree.is_none() {
            return Err(Error::contract("act called with no episode in progress"));
        }
        let returns = {
            let eval = make_eval(&self.net, &self.params)?;
            let tree = self.tree.as_mut().expect("checked above");
            let stats = lookahead(
                tree,
                self.sim,
                &eval,
                self.params.sampler,
                self.params.tree_budget,
                &mut self.rng,
            )?;
            self.interactions += stats.expansions as u64;
            let returns = tree.backup_returns(self.params.discount);
            if returns.iter().all(Option::is_none) {
                // Nothing expanded — e.g. the root's atom set is empty, so
                // it is instantly non-novel. Step uniformly at random so the
                // episode still advances; nothing is stored or trained.
                log::warn!("lookahead expanded no root child; taking a uniform random action");
                let action = self.rng.random_range(0..self.sim.num_actions());
                let state = tree.node(tree.root()).state.clone();
                let (next, step) = self.sim.step(&state, action)?;
                self.interactions += 1;
                self.episode_over = step.terminal;
                if !step.terminal {
                    *tree = SearchTree::new(next, self.sim, &eval)?;
                }
                return Ok(AgentOutcome {
                    action,
                    reward: step.reward,
                    terminal: step.terminal,
                    loss: None,
                });
            }
            returns
        };
        let target = induce_target_policy(&returns, self.params.target_mode)?;
        let mut loss = None;
        if self.params.train {
            let tree = self.tree.as_ref().expect("checked above");
            let observation = tree.observe(self.sim, tree.root());
            self.dataset.push(Transition { observation, target: target.clone(), value: None });
            let net = self.net.as_mut().expect("validated in new");
            let opt = self.opt.as_mut().expect("validated in new");
            loss = train_step(
                net,
                opt,
                &self.dataset,
                self.params.batch_size,
                self.params.l2_factor,
                self.params.value_loss_factor,
                &mut self.rng,
            )?;
        }
        let action = sample_probs(&target, &mut self.rng);
        let tree = self.tree.as_mut().expect("checked above");
        tree.advance_root(action)?;
        let root = tree.node(tree.root());
        let outcome =
            AgentOutcome { action, reward: root.reward, terminal: root.terminal, loss };
        self.episode_over = outcome.terminal;
        Ok(outcome)
    }

    fn interactions(&self) -> u64 {
        self.interactions
    }
}

/// Breadth-first width-1 agent: a fresh tree every step, greedy action with
/// uniform tie-breaking. No learning.
pub struct IwBfsAgent<'s, S: Simulator> {
    sim: &'s S,
    eval: BasicEvaluator,
    discount: f64,
    tree_budget: usize,
    tree: Option<SearchTree<S::State>>,
    episode_over: bool,
    interactions: u64,
    rng: ChaCha8Rng,
}

impl<'s, S: Simulator> IwBfsAgent<'s, S> {
    pub fn new(
        sim: &'s S,
        rows: usize,
        cols: usize,
        discount: f64,
        tree_budget: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        IwBfsAgent {
            sim,
            eval: BasicEvaluator::new(rows, cols),
            discount,
            tree_budget,
            tree: None,
            episode_over: true,
            interactions: 0,
            rng,
        }
    }

    pub fn tree(&self) -> Option<&SearchTree<S::State>> {
        self.tree.as_ref()
    }
}

impl<S: Simulator> Agent for IwBfsAgent<'_, S> {
    fn begin_episode(&mut self) -> Result<(), Error> {
        let (state, _) = self.sim.reset();
        self.tree = Some(SearchTree::new(state, self.sim, &self.eval)?);
        self.episode_over = false;
        Ok(())
    }

    fn act(&mut self) -> Result<AgentOutcome, Error> {
        if self.episode_over || self.tree.is_none() {
            return Err(Error::contract("act called with no episode in progress"));
        }
        let tree = self.tree.as_mut().expect("checked above");
        let stats = iw1_bfs(tree, self.sim, &self.eval, self.tree_budget)?;
        self.interactions += stats.expansions as u64;
        let returns = tree.backup_returns(self.discount);
        if returns.iter().all(Option::is_none) {
            log::warn!("search expanded no root child; taking a uniform random action");
            let action = self.rng.random_range(0..self.sim.num_actions());
            let state = tree.node(tree.root()).state.clone();
            let (next, step) = self.sim.step(&state, action)?;
            self.interactions += 1;
            self.episode_over = step.terminal;
            if !step.terminal {
                *tree = SearchTree::new(next, self.sim, &self.eval)?;
            }
            return Ok(AgentOutcome {
                action,
                reward: step.reward,
                terminal: step.terminal,
                loss: None,
            });
        }
        let target = induce_target_policy(&returns, TargetMode::Greedy)?;
        let action = sample_probs(&target, &mut self.rng);
        let child = tree.node(tree.root()).child(action).expect("target mass implies child");
        let node = tree.node(child);
        let (state, reward, terminal) = (node.state.clone(), node.reward, node.terminal);
        self.episode_over = terminal;
        if !terminal {
            // Classic restart: the next step plans from scratch at the
            // already-simulated successor, so execution itself is free.
            *tree = SearchTree::new(state, self.sim, &self.eval)?;
        }
        Ok(AgentOutcome { action, reward, terminal, loss: None })
    }

    fn interactions(&self) -> u64 {
        self.interactions
    }
}

/// One completed episode's worth of harness metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub run_seed: u64,
    pub episode: u64,
    /// Cumulative simulator transitions at the end of the episode.
    pub interactions: u64,
    pub episode_return: f64,
    pub episode_length: u32,
    /// Mean training loss over the episode's gradient steps; `None` for
    /// non-learning agents or episodes without a single update.
    pub mean_loss: Option<f64>,
    pub wall_ms: u64,
}

/// Drives `agent` episode by episode until the interaction budget is spent.
/// An episode cut short by the budget is discarded rather than logged.
/// `on_episode` sees each completed row; returning false ends the run early.
pub fn run_training<A: Agent>(
    agent: &mut A,
    run_seed: u64,
    max_interactions: u64,
    mut on_episode: impl FnMut(&EpisodeRow) -> bool,
) -> Result<Vec<EpisodeRow>, Error> {
    let mut rows = Vec::new();
    let mut episode = 0u64;
    'run: while agent.interactions() < max_interactions {
        agent.begin_episode()?;
        let start = Instant::now();
        let mut episode_return = 0.0;
        let mut episode_length = 0u32;
        let mut loss_sum = 0.0;
        let mut loss_count = 0u32;
        loop {
            if agent.interactions() >= max_interactions {
                break 'run;
            }
            let out = agent.act()?;
            episode_return += out.reward;
            episode_length += 1;
            if let Some(loss) = out.loss {
                loss_sum += loss;
                loss_count += 1;
            }
            if out.terminal {
                break;
            }
        }
        let row = EpisodeRow {
            run_seed,
            episode,
            interactions: agent.interactions(),
            episode_return,
            episode_length,
            mean_loss: (loss_count > 0).then(|| loss_sum / f64::from(loss_count)),
            wall_ms: start.elapsed().as_millis() as u64,
        };
        episode += 1;
        rows.push(row);
        if !on_episode(rows.last().expect("just pushed")) {
            break;
        }
    }
    Ok(rows)
}

/// Network architecture matching the simulator's observation shape. The
/// value head is attached only for the algorithm that regresses returns.
pub fn arch_for(sim: &impl Simulator, cfg: &ExperimentConfig) -> Arch {
    let (state, _) = sim.reset();
    let value_head = cfg.algorithm == Algorithm::AlphaZero;
    let actions = sim.num_actions();
    match sim.observe(&state) {
        Observation::Compact { rows, cols, classes, .. } => {
            Arch::Mlp { input: rows * cols * classes, hidden: cfg.hidden, actions, value_head }
        }
        Observation::Image { height, width, data } => {
            let channels = data.len() / (height * width);
            Arch::Conv { height, width, channels, actions, value_head }
        }
    }
}

/// Optimizer configured for `net`.
pub fn optimizer_for(net: &Network, cfg: &ExperimentConfig) -> Result<RmsProp, Error> {
    Ok(RmsProp::new(
        net.params().len(),
        cfg.learning_rate,
        cfg.rmsprop_decay,
        cfg.rmsprop_epsilon,
        cfg.clip_grad_norm,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::env::{GridEnv, GridMap, ObsMode};
    use rand::SeedableRng;

    fn tiny_obs(tag: u8) -> Observation {
        Observation::Compact { rows: 1, cols: 1, classes: 1, data: vec![tag] }
    }

    fn corridor_env() -> GridEnv {
        let map = GridMap::parse(GridMap::builtin("corridor").unwrap()).unwrap();
        GridEnv::new(map, ObsMode::Compact)
    }

    fn basic_agent(env: &GridEnv, seed: u64) -> PiIwAgent<'_, GridEnv> {
        let cfg = ExperimentConfig::default();
        let params =
            PiIwParams::from_config(&cfg, env.map().rows(), env.map().cols()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::new(arch_for(env, &cfg), &mut rng).unwrap();
        let opt = optimizer_for(&net, &cfg).unwrap();
        PiIwAgent::new(env, params, Some(net), Some(opt), rng).unwrap()
    }

    #[test]
    fn dataset_evicts_strictly_oldest_first() {
        let mut ds = Dataset::new(5);
        for i in 0..8u64 {
            ds.push(Transition {
                observation: tiny_obs(i as u8),
                target: vec![1.0],
                value: Some(i as f64),
            });
            assert!(ds.len() <= 5);
        }
        assert_eq!(ds.len(), 5);
        let survivors: Vec<f64> = ds.iter().map(|t| t.value.unwrap()).collect();
        assert_eq!(survivors, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(ds.get(0).value, Some(3.0));
    }

    #[test]
    fn dataset_with_zero_capacity_stays_empty() {
        let mut ds = Dataset::new(0);
        ds.push(Transition { observation: tiny_obs(0), target: vec![1.0], value: None });
        assert!(ds.is_empty());
    }

    #[test]
    fn greedy_target_is_one_hot_on_the_best_child() {
        let returns = vec![None, Some(0.99), Some(-1.0), None, Some(0.5)];
        let target = induce_target_policy(&returns, TargetMode::Greedy).unwrap();
        assert_eq!(target, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn greedy_target_splits_exact_ties_uniformly() {
        let returns = vec![Some(0.7), Some(0.7), None, Some(0.7), Some(0.1)];
        let target = induce_target_policy(&returns, TargetMode::Greedy).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(target, vec![third, third, 0.0, third, 0.0]);

        // A 1-ulp gap is not a tie.
        let near = vec![Some(1.0), Some(1.0 - f64::EPSILON), None];
        let target = induce_target_policy(&near, TargetMode::Greedy).unwrap();
        assert_eq!(target, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_target_matches_closed_form() {
        let returns = vec![Some(1.0), Some(0.0), None];
        let target =
            induce_target_policy(&returns, TargetMode::Softmax { tau: 1.0 }).unwrap();
        let e = 1.0_f64.exp();
        assert!((target[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((target[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert_eq!(target[2], 0.0);
        assert!((target.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        assert!(induce_target_policy(&returns, TargetMode::Softmax { tau: 0.0 }).is_err());
        assert!(induce_target_policy(&returns, TargetMode::Softmax { tau: -1.0 }).is_err());
    }

    #[test]
    fn target_induction_requires_an_expanded_child() {
        assert!(induce_target_policy(&[None, None, None], TargetMode::Greedy).is_err());
        let bad = vec![Some(f64::NAN), Some(0.0)];
        assert!(induce_target_policy(&bad, TargetMode::Greedy).is_err());
    }

    #[test]
    fn train_step_on_empty_dataset_is_a_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let arch = Arch::Mlp { input: 4, hidden: 8, actions: 3, value_head: false };
        let mut net = Network::new(arch, &mut rng).unwrap();
        let mut opt = RmsProp::new(net.params().len(), 0.01, 0.99, 0.1, 40.0).unwrap();
        let before = net.params().to_vec();
        let ds = Dataset::new(10);
        let loss = train_step(&mut net, &mut opt, &ds, 32, 1e-3, 1.0, &mut rng).unwrap();
        assert!(loss.is_none());
        assert_eq!(net.params(), &before[..]);
    }

    #[test]
    fn train_step_resamples_when_dataset_is_smaller_than_the_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let arch = Arch::Mlp { input: 1, hidden: 8, actions: 2, value_head: false };
        let mut net = Network::new(arch, &mut rng).unwrap();
        let mut opt = RmsProp::new(net.params().len(), 0.01, 0.99, 0.1, 40.0).unwrap();
        let mut ds = Dataset::new(10);
        ds.push(Transition {
            observation: tiny_obs(1),
            target: vec![1.0, 0.0],
            value: None,
        });
        let before = net.params().to_vec();
        let loss = train_step(&mut net, &mut opt, &ds, 32, 1e-3, 1.0, &mut rng).unwrap();
        assert!(loss.unwrap() > 0.0);
        assert_ne!(net.params(), &before[..]);
    }

    #[test]
    fn training_overfits_a_small_fixed_dataset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let arch = Arch::Mlp { input: 10, hidden: 32, actions: 5, value_head: false };
        let mut net = Network::new(arch, &mut rng).unwrap();
        let mut opt = RmsProp::new(net.params().len(), 0.1, 0.99, 0.1, 40.0).unwrap();
        let mut ds = Dataset::new(10);
        for i in 0..10 {
            let mut data = vec![0u8; 10];
            data[i] = 1;
            let mut target = vec![0.0; 5];
            target[i % 5] = 1.0;
            ds.push(Transition {
                observation: Observation::Compact { rows: 1, cols: 2, classes: 5, data },
                target,
                value: None,
            });
        }
        for _ in 0..200 {
            train_step(&mut net, &mut opt, &ds, 32, 1e-3, 1.0, &mut rng).unwrap();
        }
        let mean_ce: f64 = ds
            .iter()
            .map(|t| {
                let out = net.forward(&t.observation).unwrap();
                let probs = crate::net::softmax(&out.logits, 1.0).unwrap();
                let label = t.target.iter().position(|&p| p == 1.0).unwrap();
                -probs[label].ln()
            })
            .sum::<f64>()
            / 10.0;
        assert!(mean_ce < 0.05, "mean cross-entropy {mean_ce} after overfitting");
    }

    #[test]
    fn agent_bookkeeping_holds_step_by_step() {
        let env = corridor_env();
        let mut agent = basic_agent(&env, 7);
        agent.begin_episode().unwrap();
        let mut last_interactions = 0;
        for step in 0..5 {
            let out = agent.act().unwrap();
            assert!(out.action < 5);
            assert!([-1.0, 0.0, 1.0].contains(&out.reward));
            assert_eq!(agent.dataset().len(), step + 1);
            assert!(out.loss.is_some(), "dataset is non-empty from the first step");
            assert!(agent.interactions() > last_interactions);
            last_interactions = agent.interactions();
            if out.terminal {
                agent.begin_episode().unwrap();
            }
        }
        assert!(agent.act().is_ok() || agent.dataset().len() == 5);
    }

    #[test]
    fn act_without_an_episode_is_an_error() {
        let env = corridor_env();
        let mut agent = basic_agent(&env, 8);
        assert!(agent.act().is_err());
    }

    #[test]
    fn rollout_agent_plans_without_a_network() {
        let env = corridor_env();
        let mut cfg = ExperimentConfig::default();
        cfg.algorithm = Algorithm::RolloutIw;
        let params =
            PiIwParams::from_config(&cfg, env.map().rows(), env.map().cols()).unwrap();
        let rng = ChaCha8Rng::seed_from_u64(9);
        let mut agent = PiIwAgent::new(&env, params, None, None, rng).unwrap();
        agent.begin_episode().unwrap();
        for _ in 0..5 {
            let out = agent.act().unwrap();
            assert!(out.loss.is_none());
            if out.terminal {
                agent.begin_episode().unwrap();
            }
        }
        assert!(agent.dataset().is_empty());
        assert!(agent.interactions() > 0);
    }

    #[test]
    fn frozen_agent_never_touches_its_parameters() {
        let env = corridor_env();
        let cfg = ExperimentConfig::default();
        let mut params =
            PiIwParams::from_config(&cfg, env.map().rows(), env.map().cols()).unwrap();
        params.train = false;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let net = Network::new(arch_for(&env, &cfg), &mut rng).unwrap();
        let before = net.params().to_vec();
        let mut agent = PiIwAgent::new(&env, params, Some(net), None, rng).unwrap();
        agent.begin_episode().unwrap();
        for _ in 0..5 {
            let out = agent.act().unwrap();
            if out.terminal {
                agent.begin_episode().unwrap();
            }
        }
        assert!(agent.dataset().is_empty());
        assert_eq!(agent.net().unwrap().params(), &before[..]);
    }

    #[test]
    fn empty_atom_root_falls_back_to_a_uniform_step() {
        let env = corridor_env();
        let mut cfg = ExperimentConfig::default();
        cfg.algorithm = Algorithm::PiIwDynamic;
        let params =
            PiIwParams::from_config(&cfg, env.map().rows(), env.map().cols()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = Network::new(arch_for(&env, &cfg), &mut rng).unwrap();
        // Every weight negative drives all hidden activations to zero, so
        // every node's atom set is empty and nothing is ever novel.
        for p in net.params_mut() {
            *p = -0.5;
        }
        let opt = optimizer_for(&net, &cfg).unwrap();
        let mut agent = PiIwAgent::new(&env, params, Some(net), Some(opt), rng).unwrap();
        agent.begin_episode().unwrap();
        let out = agent.act().unwrap();
        assert!(out.loss.is_none());
        assert_eq!(agent.interactions(), 1, "one direct environment step");
        assert!(agent.dataset().is_empty());
        if !out.terminal {
            let out = agent.act().unwrap();
            assert_eq!(agent.interactions(), 2);
            assert!(out.action < 5);
        }
    }

    #[test]
    fn training_runs_are_reproducible() {
        let env = corridor_env();
        let run = |seed: u64| {
            let mut agent = basic_agent(&env, seed);
            let rows = run_training(&mut agent, seed, 12_000, |_| true).unwrap();
            let params = agent.into_net().unwrap().params().to_vec();
            (rows, params)
        };
        let (rows_a, params_a) = run(42);
        let (rows_b, params_b) = run(42);
        assert_eq!(params_a, params_b);
        assert_eq!(rows_a.len(), rows_b.len());
        assert!(!rows_a.is_empty());
        for (a, b) in rows_a.iter().zip(&rows_b) {
            assert_eq!(a.episode, b.episode);
            assert_eq!(a.interactions, b.interactions);
            assert_eq!(a.episode_return, b.episode_return);
            assert_eq!(a.episode_length, b.episode_length);
            assert_eq!(a.mean_loss, b.mean_loss);
        }
    }

    #[test]
    fn zero_interaction_budget_exits_cleanly_with_no_rows() {
        let env = corridor_env();
        let mut agent = basic_agent(&env, 12);
        let rows = run_training(&mut agent, 12, 0, |_| true).unwrap();
        assert!(rows.is_empty());
        assert_eq!(agent.interactions(), 0);
    }

    #[test]
    fn completed_episodes_produce_well_formed_rows() {
        let env = corridor_env();
        let mut agent = basic_agent(&env, 13);
        let rows = run_training(&mut agent, 13, 12_000, |_| true).unwrap();
        assert!(!rows.is_empty());
        let mut last = 0;
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.episode, i as u64);
            assert_eq!(row.run_seed, 13);
            assert!(row.episode_length >= 1 && row.episode_length <= 200);
            assert!([-1.0, 0.0, 1.0].contains(&row.episode_return));
            assert!(row.interactions > last);
            last = row.interactions;
            assert!(row.mean_loss.unwrap() > 0.0);
        }
    }

    #[test]
    fn episode_callback_can_stop_the_run_early() {
        let env = corridor_env();
        let mut agent = basic_agent(&env, 14);
        let rows = run_training(&mut agent, 14, 1_000_000, |_| false).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn bfs_agent_replans_from_scratch_each_step() {
        let env = corridor_env();
        let rng = ChaCha8Rng::seed_from_u64(15);
        let mut agent =
            IwBfsAgent::new(&env, env.map().rows(), env.map().cols(), 0.99, 50, rng);
        agent.begin_episode().unwrap();
        for _ in 0..10 {
            let before = agent.interactions();
            let out = agent.act().unwrap();
            assert!(out.loss.is_none());
            assert!(agent.interactions() > before, "every step pays for a fresh tree");
            if out.terminal {
                agent.begin_episode().unwrap();
            } else {
                assert_eq!(agent.tree().unwrap().len(), 1, "restart discards the old tree");
            }
        }
    }

    #[test]
    fn architecture_follows_the_observation_shape() {
        let cfg = ExperimentConfig::default();
        let env = corridor_env();
        match arch_for(&env, &cfg) {
            Arch::Mlp { input, actions, value_head, .. } => {
                assert_eq!(input, 3 * 10 * 5);
                assert_eq!(actions, 5);
                assert!(!value_head);
            }
            other => panic!("expected an MLP, got {other:?}"),
        }
        let map = GridMap::parse(GridMap::builtin("corridor").unwrap()).unwrap();
        let img_env = GridEnv::new(map, ObsMode::Image);
        match arch_for(&img_env, &cfg) {
            Arch::Conv { height, width, channels, .. } => {
                assert_eq!((height, width, channels), (84, 84, 3));
            }
            other => panic!("expected a conv net, got {other:?}"),
        }
    }
}
