//! Experiment configuration: a flat `key=value` text format with strict
//! parsing (unknown keys rejected) and a canonical serialization so that the
//! resolved config written next to run outputs round-trips exactly.

use crate::env::ObsMode;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("duplicate config key `{key}`")]
    DuplicateKey { key: String },
    #[error("bad value `{value}` for `{key}`: expected {expected}")]
    BadValue { key: String, value: String, expected: &'static str },
    #[error("line {line} is not `key=value`")]
    MissingDelimiter { line: usize },
    #[error("invalid config: {what}")]
    Invalid { what: String },
}

/// Planning/learning algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    PiIwBasic,
    PiIwDynamic,
    RolloutIw,
    IwBfs,
    AlphaZero,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::PiIwBasic,
        Algorithm::PiIwDynamic,
        Algorithm::RolloutIw,
        Algorithm::IwBfs,
        Algorithm::AlphaZero,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::PiIwBasic => "pi-iw-basic",
            Algorithm::PiIwDynamic => "pi-iw-dynamic",
            Algorithm::RolloutIw => "rollout-iw",
            Algorithm::IwBfs => "iw-bfs",
            Algorithm::AlphaZero => "alphazero",
        }
    }

    pub fn parse(s: &str) -> Option<Algorithm> {
        Algorithm::ALL.iter().copied().find(|a| a.as_str() == s)
    }

    /// Whether the algorithm trains a network during its run.
    pub fn learns(self) -> bool {
        matches!(self, Algorithm::PiIwBasic | Algorithm::PiIwDynamic | Algorithm::AlphaZero)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Network body selector; the input side must agree with the observation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchKind {
    Mlp,
    Conv,
}

impl ArchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchKind::Mlp => "mlp",
            ArchKind::Conv => "conv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// Builtin map name or path to an ASCII map file.
    pub map: String,
    pub obs: ObsMode,
    pub arch: ArchKind,
    /// Hidden width of the dense body (ignored by the conv body).
    pub hidden: usize,
    pub discount: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_grad_norm: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    /// Node expansions allowed per lookahead.
    pub tree_budget: usize,
    pub dataset_size: usize,
    pub l2_factor: f64,
    pub tree_policy_temp: f64,
    pub puct: f64,
    pub dirichlet_alpha: f64,
    pub noise_factor: f64,
    pub value_loss_factor: f64,
    pub max_interactions: u64,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: Algorithm::PiIwBasic,
            map: "maze1".to_string(),
            obs: ObsMode::Compact,
            arch: ArchKind::Mlp,
            hidden: 64,
            discount: 0.99,
            batch_size: 32,
            learning_rate: 0.0005,
            clip_grad_norm: 40.0,
            rmsprop_decay: 0.99,
            rmsprop_epsilon: 0.1,
            tree_budget: 50,
            dataset_size: 1000,
            l2_factor: 1e-3,
            tree_policy_temp: 1.0,
            puct: 0.5,
            dirichlet_alpha: 0.03,
            noise_factor: 0.25,
            value_loss_factor: 1.0,
            max_interactions: 200_000,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// Canonical key order; serialization emits exactly these, parsing accepts
/// exactly these.
pub const CONFIG_KEYS: [&str; 21] = [
    "algorithm",
    "map",
    "obs",
    "arch",
    "hidden",
    "discount",
    "batch_size",
    "learning_rate",
    "clip_grad_norm",
    "rmsprop_decay",
    "rmsprop_epsilon",
    "tree_budget",
    "dataset_size",
    "l2_factor",
    "tree_policy_temp",
    "puct",
    "dirichlet_alpha",
    "noise_factor",
    "value_loss_factor",
    "max_interactions",
    "seeds",
];

fn bad(key: &str, value: &str, expected: &'static str) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), value: value.to_string(), expected }
}

impl ExperimentConfig {
    /// Parse the flat text format: one `key=value` per line, `#` comments,
    /// blank lines ignored. Keys not listed in [`CONFIG_KEYS`] are rejected;
    /// missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::MissingDelimiter { line: idx + 1 })?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey { key: key.to_string() });
            }
            seen.push(key.to_string());
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Apply one `key=value` assignment (used for both file lines and CLI
    /// overrides).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "algorithm" => {
                self.algorithm = Algorithm::parse(value)
                    .ok_or_else(|| bad(key, value, "one of pi-iw-basic, pi-iw-dynamic, rollout-iw, iw-bfs, alphazero"))?;
            }
            "map" => {
                if value.is_empty() {
                    return Err(bad(key, value, "map name or path"));
                }
                self.map = value.to_string();
            }
            "obs" => {
                self.obs = match value {
                    "compact" => ObsMode::Compact,
                    "image" => ObsMode::Image,
                    _ => return Err(bad(key, value, "compact or image")),
                };
            }
            "arch" => {
                self.arch = match value {
                    "mlp" => ArchKind::Mlp,
                    "conv" => ArchKind::Conv,
                    _ => return Err(bad(key, value, "mlp or conv")),
                };
            }
            "hidden" => self.hidden = parse_num(key, value, "positive integer")?,
            "discount" => self.discount = parse_num(key, value, "number in (0, 1]")?,
            "batch_size" => self.batch_size = parse_num(key, value, "positive integer")?,
            "learning_rate" => self.learning_rate = parse_num(key, value, "positive number")?,
            "clip_grad_norm" => self.clip_grad_norm = parse_num(key, value, "positive number")?,
            "rmsprop_decay" => self.rmsprop_decay = parse_num(key, value, "number in [0, 1)")?,
            "rmsprop_epsilon" => self.rmsprop_epsilon = parse_num(key, value, "positive number")?,
            "tree_budget" => self.tree_budget = parse_num(key, value, "positive integer")?,
            "dataset_size" => self.dataset_size = parse_num(key, value, "positive integer")?,
            "l2_factor" => self.l2_factor = parse_num(key, value, "non-negative number")?,
            "tree_policy_temp" => self.tree_policy_temp = parse_num(key, value, "positive number")?,
            "puct" => self.puct = parse_num(key, value, "non-negative number")?,
            "dirichlet_alpha" => self.dirichlet_alpha = parse_num(key, value, "positive number")?,
            "noise_factor" => self.noise_factor = parse_num(key, value, "number in [0, 1]")?,
            "value_loss_factor" => self.value_loss_factor = parse_num(key, value, "non-negative number")?,
            "max_interactions" => self.max_interactions = parse_num(key, value, "positive integer")?,
            "seeds" => {
                let mut seeds = Vec::new();
                for part in value.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        return Err(bad(key, value, "comma-separated integers"));
                    }
                    seeds.push(
                        part.parse::<u64>().map_err(|_| bad(key, value, "comma-separated integers"))?,
                    );
                }
                self.seeds = seeds;
            }
            _ => return Err(ConfigError::UnknownKey { key: key.to_string() }),
        }
        Ok(())
    }

    /// Canonical serialization: every key, fixed order, one per line.
    pub fn to_text(&self) -> String {
        let seeds = self
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let value = match key {
                "algorithm" => self.algorithm.as_str().to_string(),
                "map" => self.map.clone(),
                "obs" => match self.obs {
                    ObsMode::Compact => "compact".to_string(),
                    ObsMode::Image => "image".to_string(),
                },
                "arch" => self.arch.as_str().to_string(),
                "hidden" => self.hidden.to_string(),
                "discount" => self.discount.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "learning_rate" => self.learning_rate.to_string(),
                "clip_grad_norm" => self.clip_grad_norm.to_string(),
                "rmsprop_decay" => self.rmsprop_decay.to_string(),
                "rmsprop_epsilon" => self.rmsprop_epsilon.to_string(),
                "tree_budget" => self.tree_budget.to_string(),
                "dataset_size" => self.dataset_size.to_string(),
                "l2_factor" => self.l2_factor.to_string(),
                "tree_policy_temp" => self.tree_policy_temp.to_string(),
                "puct" => self.puct.to_string(),
                "dirichlet_alpha" => self.dirichlet_alpha.to_string(),
                "noise_factor" => self.noise_factor.to_string(),
                "value_loss_factor" => self.value_loss_factor.to_string(),
                "max_interactions" => self.max_interactions.to_string(),
                "seeds" => seeds.clone(),
                _ => unreachable!(),
            };
            out.push_str(key);
            out.push('=');
            out.push_str(&value);
            out.push('\n');
        }
        out
    }

    /// Range and consistency checks; run before any experiment starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |what: &str| Err(ConfigError::Invalid { what: what.to_string() });
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return fail("discount must be in (0, 1]");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.clip_grad_norm > 0.0 && self.clip_grad_norm.is_finite()) {
            return fail("clip_grad_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return fail("rmsprop_decay must be in [0, 1)");
        }
        if !(self.rmsprop_epsilon > 0.0) {
            return fail("rmsprop_epsilon must be positive");
        }
        if self.tree_budget == 0 {
            return fail("tree_budget must be positive");
        }
        if self.dataset_size == 0 {
            return fail("dataset_size must be positive");
        }
        if self.l2_factor < 0.0 {
            return fail("l2_factor must be non-negative");
        }
        if !(self.tree_policy_temp > 0.0) {
            return fail("tree_policy_temp must be positive");
        }
        if self.puct < 0.0 {
            return fail("puct must be non-negative");
        }
        if !(self.dirichlet_alpha > 0.0) {
            return fail("dirichlet_alpha must be positive");
        }
        if !(0.0..=1.0).contains(&self.noise_factor) {
            return fail("noise_factor must be in [0, 1]");
        }
        if self.value_loss_factor < 0.0 {
            return fail("value_loss_factor must be non-negative");
        }
        if self.max_interactions == 0 {
            return fail("max_interactions must be positive");
        }
        if self.seeds.is_empty() {
            return fail("seeds must list at least one seed");
        }
        if self.hidden == 0 {
            return fail("hidden must be positive");
        }
        if self.map.is_empty() {
            return fail("map must be set");
        }
        match (self.arch, self.obs) {
            (ArchKind::Mlp, ObsMode::Compact) | (ArchKind::Conv, ObsMode::Image) => {}
            (ArchKind::Mlp, ObsMode::Image) => return fail("arch=mlp requires obs=compact"),
            (ArchKind::Conv, ObsMode::Compact) => return fail("arch=conv requires obs=image"),
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    value.parse::<T>().map_err(|_| bad(key, value, expected))
}
