//! Boolean state features and the depth-based novelty table that drives
//! rollout pruning.

use crate::env::{Observation, CELL_CLASSES};
use crate::error::Error;

/// Index of one boolean feature within a fixed universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomId(pub u32);

/// The atoms true in one state. Order is the extractor's construction order
/// and is stable for identical inputs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureSet {
    atoms: Vec<AtomId>,
}

impl FeatureSet {
    pub fn from_atoms(atoms: Vec<AtomId>) -> Self {
        FeatureSet { atoms }
    }

    pub fn iter(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.atoms.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains(&self, atom: AtomId) -> bool {
        self.atoms.contains(&atom)
    }
}

/// Per-atom minimum depth at which the atom has been registered during the
/// current lookahead. Registered depths only ever decrease.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoveltyTable {
    min_depth: Vec<u32>,
}

impl NoveltyTable {
    const UNSEEN: u32 = u32::MAX;

    pub fn new(universe: usize) -> Self {
        NoveltyTable { min_depth: vec![Self::UNSEEN; universe] }
    }

    pub fn universe(&self) -> usize {
        self.min_depth.len()
    }

    /// Registered depth of an atom, or `None` if it has not been seen.
    pub fn depth_of(&self, atom: AtomId) -> Option<u32> {
        let d = self.min_depth[atom.0 as usize];
        (d != Self::UNSEEN).then_some(d)
    }

    /// Novelty test used by both rollout expansion and cached-tree descent.
    ///
    /// A state is novel when some atom is seen strictly shallower than its
    /// registered depth, or (only for already-cached nodes, `is_new = false`)
    /// at exactly its registered depth. Only new states (`is_new = true`)
    /// update the table, and only by lowering registered depths; checking a
    /// cached node never mutates anything.
    pub fn check(&mut self, atoms: &FeatureSet, depth: u32, is_new: bool) -> bool {
        let mut novel = false;
        for atom in atoms.iter() {
            let d = &mut self.min_depth[atom.0 as usize];
            novel |= depth < *d || (!is_new && depth == *d);
            if is_new && depth < *d {
                *d = depth;
            }
        }
        novel
    }
}

/// Atoms of a grid observation: one atom per cell, identifying the cell's
/// one-hot class, so the universe has `rows * cols * classes` atoms.
///
/// Only compact observations carry tile structure; pass the simulator's
/// grid-aligned view when the network consumes images.
pub fn basic_features(obs: &Observation) -> Result<FeatureSet, Error> {
    match obs {
        Observation::Compact { data, .. } => Ok(FeatureSet::from_atoms(
            data.iter()
                .enumerate()
                .filter(|&(_, &v)| v != 0)
                .map(|(i, _)| AtomId(i as u32))
                .collect(),
        )),
        Observation::Image { .. } => Err(Error::contract(
            "tile features need a compact observation, got an image",
        )),
    }
}

/// Universe size matching [`basic_features`] for a `rows x cols` map.
pub fn basic_universe(rows: usize, cols: usize) -> usize {
    rows * cols * CELL_CLASSES
}

/// Atoms of a learned representation: one atom per strictly positive entry
/// of the network's last rectified hidden layer. All-zero activations give
/// an empty set.
pub fn binarize_activations(hidden: &[f64]) -> FeatureSet {
    FeatureSet::from_atoms(
        hidden
            .iter()
            .enumerate()
            .filter(|&(_, &h)| h > 0.0)
            .map(|(i, _)| AtomId(i as u32))
            .collect(),
    )
}

/// Everything the planner records about a freshly created node.
#[derive(Debug, Clone)]
pub struct NodeEval {
    pub atoms: FeatureSet,
    /// Action prior probabilities; `None` means sample uniformly.
    pub policy: Option<Vec<f64>>,
}

/// Computes a node's atoms and (optionally) its action prior in one place,
/// so policy-guided planners run a single network forward per node.
pub trait Evaluator {
    /// Size of the atom universe the novelty table must cover.
    fn universe(&self) -> usize;
    /// `obs` is the node's configured observation, `compact` the simulator's
    /// grid-aligned view of the same state (the same object when the
    /// configured mode is compact).
    fn evaluate(&self, obs: &Observation, compact: &Observation) -> Result<NodeEval, Error>;
}

/// Grid-tile atoms, no action prior; the untrained width-based baselines.
#[derive(Debug, Clone, Copy)]
pub struct BasicEvaluator {
    universe: usize,
}

impl BasicEvaluator {
    pub fn new(rows: usize, cols: usize) -> Self {
        BasicEvaluator { universe: basic_universe(rows, cols) }
    }
}

impl Evaluator for BasicEvaluator {
    fn universe(&self) -> usize {
        self.universe
    }

    fn evaluate(&self, _obs: &Observation, compact: &Observation) -> Result<NodeEval, Error> {
        Ok(NodeEval { atoms: basic_features(compact)?, policy: None })
    }
}

/// Where a policy-guided planner takes its novelty atoms from.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSource {
    /// Grid-tile one-hot atoms.
    Tiles { rows: usize, cols: usize },
    /// Binarized last-hidden-layer activations of the policy network.
    LearnedBinary,
}

/// One network forward per node: a softmax action prior for the sampler plus
/// atoms from the configured source.
pub struct PolicyEvaluator<'a> {
    net: &'a crate::net::Network,
    source: FeatureSource,
    tau: f64,
}

impl<'a> PolicyEvaluator<'a> {
    pub fn new(net: &'a crate::net::Network, source: FeatureSource, tau: f64) -> Self {
        PolicyEvaluator { net, source, tau }
    }
}

impl Evaluator for PolicyEvaluator<'_> {
    fn universe(&self) -> usize {
        match self.source {
            FeatureSource::Tiles { rows, cols } => basic_universe(rows, cols),
            FeatureSource::LearnedBinary => self.net.hidden_width(),
        }
    }

    fn evaluate(&self, obs: &Observation, compact: &Observation) -> Result<NodeEval, Error> {
        let out = self.net.forward(obs)?;
        let policy = crate::net::softmax(&out.logits, self.tau)?;
        let atoms = match self.source {
            FeatureSource::Tiles { .. } => basic_features(compact)?,
            FeatureSource::LearnedBinary => binarize_activations(&out.hidden),
        };
        Ok(NodeEval { atoms, policy: Some(policy) })
    }
}
