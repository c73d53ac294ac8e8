//! Width-based lookahead planning interleaved with policy learning, plus
//! classic width-based and PUCT baselines, on deterministic gridworld tasks.
//!
//! The planner grows a search tree by policy-guided rollouts that are pruned
//! with a depth-based novelty measure, backs up discounted returns, trains a
//! softmax policy network on the induced root targets, and executes one action
//! per planning step while keeping the chosen subtree.

pub mod config;
pub mod env;
pub mod error;
pub mod features;
pub mod learner;
pub mod mcts;
pub mod metrics;
pub mod net;
pub mod planner;
pub mod stats;
pub mod tree;

pub use config::{Algorithm, ExperimentConfig};
pub use env::{Action, GridEnv, GridMap, GridState, ObsMode, Observation, Simulator, StepResult};
pub use error::Error;
pub use features::{AtomId, FeatureSet, NoveltyTable};
pub use learner::{Agent, Dataset, EpisodeRow, PiIwAgent, Transition};
pub use mcts::AlphaZeroAgent;
pub use net::{Arch, Network, NetworkOutput};
pub use tree::{NodeId, SearchTree};
