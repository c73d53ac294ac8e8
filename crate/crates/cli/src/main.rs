use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use piw_core::learner::{arch_for, optimizer_for, run_training, IwBfsAgent, PiIwParams};
use piw_core::mcts::AzParams;
use piw_core::metrics::{averaged_curve_csv, compare_csv, episodes_csv};
use piw_core::{
    Action, Agent, Algorithm, AlphaZeroAgent, EpisodeRow, ExperimentConfig, GridEnv, GridMap,
    Network, PiIwAgent,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "piw", version, about = "Width-based lookahead planning and policy learning on gridworld tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent per seed; writes episode CSVs, network checkpoints,
    /// an averaged learning curve, and the resolved config.
    Train(TrainArgs),
    /// Run frozen-policy episodes with a saved network (no learning).
    Eval(EvalArgs),
    /// Run a single planning step from the reset state and print the tree shape.
    PlanOnce(PlanOnceArgs),
    /// Summarize the longest unique trajectory of many fresh-network first
    /// planning steps.
    DepthStats(DepthStatsArgs),
    /// Sweep several algorithms over the configured seeds into one CSV.
    Compare(CompareArgs),
}

/// Config file plus per-key overrides. Every experiment key is exposed as a
/// `--key value` flag; flags win over the file, the file wins over defaults.
#[derive(Args)]
struct ConfigArgs {
    /// Config file with one key=value per line (# comments allowed).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Planning algorithm: pi-iw-basic, pi-iw-dynamic, rollout-iw, iw-bfs, alphazero.
    #[arg(long, visible_alias = "algo", value_name = "NAME")]
    algorithm: Option<String>,
    /// Builtin map name (corridor, maze1, maze2, maze3) or path to an ASCII map file.
    #[arg(long, value_name = "NAME|FILE")]
    map: Option<String>,
    /// Observation mode: compact or image.
    #[arg(long, value_name = "MODE")]
    obs: Option<String>,
    /// Network architecture: mlp or conv.
    #[arg(long, value_name = "KIND")]
    arch: Option<String>,
    /// Hidden layer width.
    #[arg(long, value_name = "N")]
    hidden: Option<String>,
    #[arg(long, value_name = "X")]
    discount: Option<String>,
    #[arg(long, alias = "batch_size", value_name = "N")]
    batch_size: Option<String>,
    #[arg(long, alias = "learning_rate", value_name = "X")]
    learning_rate: Option<String>,
    #[arg(long, alias = "clip_grad_norm", value_name = "X")]
    clip_grad_norm: Option<String>,
    #[arg(long, alias = "rmsprop_decay", value_name = "X")]
    rmsprop_decay: Option<String>,
    #[arg(long, alias = "rmsprop_epsilon", value_name = "X")]
    rmsprop_epsilon: Option<String>,
    /// Node expansions allowed per planning step.
    #[arg(long, alias = "tree_budget", value_name = "N")]
    tree_budget: Option<String>,
    /// Replay dataset capacity (oldest transitions evicted first).
    #[arg(long, alias = "dataset_size", value_name = "N")]
    dataset_size: Option<String>,
    #[arg(long, alias = "l2_factor", value_name = "X")]
    l2_factor: Option<String>,
    #[arg(long, alias = "tree_policy_temp", value_name = "X")]
    tree_policy_temp: Option<String>,
    #[arg(long, value_name = "X")]
    puct: Option<String>,
    #[arg(long, alias = "dirichlet_alpha", value_name = "X")]
    dirichlet_alpha: Option<String>,
    #[arg(long, alias = "noise_factor", value_name = "X")]
    noise_factor: Option<String>,
    #[arg(long, alias = "value_loss_factor", value_name = "X")]
    value_loss_factor: Option<String>,
    /// Simulator interaction budget per training run.
    #[arg(long, alias = "max_interactions", value_name = "N")]
    max_interactions: Option<String>,
    /// Seed count N (runs seeds 0..N-1) or an explicit comma-separated list.
    /// A trailing comma pins a literal list, so `7,` means just seed 7.
    #[arg(long, value_name = "N|LIST")]
    seeds: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                ExperimentConfig::parse(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        let seeds = match &self.seeds {
            Some(value) => Some(expand_seeds(value)?),
            None => None,
        };
        let overrides: [(&str, &Option<String>); 21] = [
            ("algorithm", &self.algorithm),
            ("map", &self.map),
            ("obs", &self.obs),
            ("arch", &self.arch),
            ("hidden", &self.hidden),
            ("discount", &self.discount),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.learning_rate),
            ("clip_grad_norm", &self.clip_grad_norm),
            ("rmsprop_decay", &self.rmsprop_decay),
            ("rmsprop_epsilon", &self.rmsprop_epsilon),
            ("tree_budget", &self.tree_budget),
            ("dataset_size", &self.dataset_size),
            ("l2_factor", &self.l2_factor),
            ("tree_policy_temp", &self.tree_policy_temp),
            ("puct", &self.puct),
            ("dirichlet_alpha", &self.dirichlet_alpha),
            ("noise_factor", &self.noise_factor),
            ("value_loss_factor", &self.value_loss_factor),
            ("max_interactions", &self.max_interactions),
            ("seeds", &seeds),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                cfg.set(key, value).with_context(|| format!("--{key} {value}"))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `5` becomes the list `0,1,2,3,4`; values with a comma pass through as
/// explicit seed lists (a trailing comma is stripped).
fn expand_seeds(value: &str) -> Result<String> {
    let v = value.trim();
    if let Some(list) = v.strip_suffix(',') {
        if list.is_empty() {
            bail!("--seeds {v:?} names no seeds");
        }
        return Ok(list.to_string());
    }
    if v.contains(',') {
        return Ok(v.to_string());
    }
    let n: u64 = v
        .parse()
        .map_err(|_| anyhow!("--seeds expects a count or a comma-separated list, got {v:?}"))?;
    if n == 0 {
        bail!("--seeds 0 would run nothing; write `0,` for the literal seed 0");
    }
    Ok((0..n).map(|s| s.to_string()).collect::<Vec<_>>().join(","))
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    overrides: ConfigArgs,
    /// Output directory for CSVs, checkpoints, and the resolved config.
    #[arg(long, default_value = "runs", value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    overrides: ConfigArgs,
    /// Saved network checkpoint (required by pi-iw-* and alphazero).
    #[arg(long, value_name = "FILE")]
    net: Option<PathBuf>,
    /// Number of episodes to run.
    #[arg(long, default_value_t = 10, value_name = "N")]
    episodes: u32,
    /// RNG seed for action sampling.
    #[arg(long, default_value_t = 0, value_name = "N")]
    seed: u64,
}

#[derive(Args)]
struct PlanOnceArgs {
    #[command(flatten)]
    overrides: ConfigArgs,
    /// RNG seed (also initializes the network for learning algorithms).
    #[arg(long, default_value_t = 0, value_name = "N")]
    seed: u64,
}

#[derive(Args)]
struct DepthStatsArgs {
    #[command(flatten)]
    overrides: ConfigArgs,
    /// Number of fresh-network planning steps to summarize.
    #[arg(long, default_value_t = 100, value_name = "N")]
    runs: usize,
    /// Base seed; run i uses seed base+i.
    #[arg(long, default_value_t = 0, value_name = "N")]
    seed: u64,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    overrides: ConfigArgs,
    /// Comma-separated algorithm names to sweep (default: all five).
    #[arg(long, value_name = "LIST")]
    algorithms: Option<String>,
    /// Output directory for the combined CSV.
    #[arg(long, default_value = "runs", value_name = "DIR")]
    out: PathBuf,
}

/// Uniform driver over the three agent families so every subcommand can
/// construct "the agent the config asks for" and hand it to `run_training`.
enum AnyAgent<'s> {
    PiIw(PiIwAgent<'s, GridEnv>),
    Az(AlphaZeroAgent<'s, GridEnv>),
    Bfs(IwBfsAgent<'s, GridEnv>),
}

impl Agent for AnyAgent<'_> {
    fn begin_episode(&mut self) -> Result<(), piw_core::Error> {
        match self {
            AnyAgent::PiIw(a) => a.begin_episode(),
            AnyAgent::Az(a) => a.begin_episode(),
            AnyAgent::Bfs(a) => a.begin_episode(),
        }
    }

    fn act(&mut self) -> Result<piw_core::learner::AgentOutcome, piw_core::Error> {
        match self {
            AnyAgent::PiIw(a) => a.act(),
            AnyAgent::Az(a) => a.act(),
            AnyAgent::Bfs(a) => a.act(),
        }
    }

    fn interactions(&self) -> u64 {
        match self {
            AnyAgent::PiIw(a) => a.interactions(),
            AnyAgent::Az(a) => a.interactions(),
            AnyAgent::Bfs(a) => a.interactions(),
        }
    }
}

impl AnyAgent<'_> {
    fn net(&self) -> Option<&Network> {
        match self {
            AnyAgent::PiIw(a) => a.net(),
            AnyAgent::Az(a) => Some(a.net()),
            AnyAgent::Bfs(_) => None,
        }
    }
}

/// Builds the configured agent. With `train` set, learning algorithms get a
/// fresh network (unless one is supplied) and an optimizer; without it they
/// plan with the supplied network and never update it.
fn build_agent<'s>(
    sim: &'s GridEnv,
    cfg: &ExperimentConfig,
    seed: u64,
    net: Option<Network>,
    train: bool,
) -> Result<AnyAgent<'s>> {
    let rows = sim.map().rows();
    let cols = sim.map().cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match cfg.algorithm {
        Algorithm::PiIwBasic | Algorithm::PiIwDynamic | Algorithm::RolloutIw => {
            let mut params = PiIwParams::from_config(cfg, rows, cols)?;
            params.train = train && cfg.algorithm.learns();
            let net = match (net, params.train) {
                (Some(n), _) => Some(n),
                (None, true) => Some(Network::new(arch_for(sim, cfg), &mut rng)?),
                (None, false) => None,
            };
            let opt = match (params.train, &net) {
                (true, Some(n)) => Some(optimizer_for(n, cfg)?),
                _ => None,
            };
            AnyAgent::PiIw(PiIwAgent::new(sim, params, net, opt, rng)?)
        }
        Algorithm::AlphaZero => {
            let mut params = AzParams::from_config(cfg);
            params.train = train;
            let net = match net {
                Some(n) => n,
                None => Network::new(arch_for(sim, cfg), &mut rng)?,
            };
            let opt = optimizer_for(&net, cfg)?;
            AnyAgent::Az(AlphaZeroAgent::new(sim, params, net, opt, rng)?)
        }
        Algorithm::IwBfs => {
            AnyAgent::Bfs(IwBfsAgent::new(sim, rows, cols, cfg.discount, cfg.tree_budget, rng))
        }
    })
}

/// Builtin maps keep their name; file maps are tagged by file stem.
fn map_tag(map: &str) -> String {
    if GridMap::builtin(map).is_some() {
        map.to_string()
    } else {
        Path::new(map)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "map".to_string())
    }
}

fn trailing_avg(returns: &[f64], window: usize) -> f64 {
    let n = returns.len().min(window).max(1);
    returns[returns.len() - n..].iter().sum::<f64>() / n as f64
}

fn run_train(args: TrainArgs) -> Result<()> {
    let cfg = args.overrides.resolve()?;
    let sim = GridEnv::from_config(&cfg)?;
    let algo = cfg.algorithm.as_str();
    let tag = map_tag(&cfg.map);
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut per_seed: Vec<Vec<EpisodeRow>> = Vec::new();
    for &seed in &cfg.seeds {
        let mut agent = build_agent(&sim, &cfg, seed, None, true)?;
        let mut returns: Vec<f64> = Vec::new();
        let rows = run_training(&mut agent, seed, cfg.max_interactions, |row| {
            returns.push(row.episode_return);
            println!(
                "[{algo} {tag} seed {seed}] ep {:>4} inter {:>8} len {:>3} ret {:+.1} avg10 {:+.2}{}",
                row.episode,
                row.interactions,
                row.episode_length,
                row.episode_return,
                trailing_avg(&returns, 10),
                row.mean_loss.map(|l| format!(" loss {l:.3}")).unwrap_or_default(),
            );
            true
        })?;

        let csv_path = args.out.join(format!("{algo}-{tag}-seed{seed}.csv"));
        std::fs::write(&csv_path, episodes_csv(&rows))
            .with_context(|| format!("writing {}", csv_path.display()))?;
        println!("wrote {}", csv_path.display());
        if let Some(net) = agent.net() {
            let net_path = args.out.join(format!("{algo}-{tag}-seed{seed}.net.json"));
            net.save(&net_path)?;
            println!("wrote {}", net_path.display());
        }
        per_seed.push(rows);
    }

    let curve_path = args.out.join(format!("{algo}-{tag}-curve.csv"));
    std::fs::write(&curve_path, averaged_curve_csv(&per_seed, cfg.max_interactions, 100, 10))
        .with_context(|| format!("writing {}", curve_path.display()))?;
    let cfg_path = args.out.join(format!("{algo}-{tag}-config.txt"));
    std::fs::write(&cfg_path, cfg.to_text())
        .with_context(|| format!("writing {}", cfg_path.display()))?;
    println!("wrote {}", curve_path.display());
    println!("wrote {}", cfg_path.display());
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let cfg = args.overrides.resolve()?;
    let sim = GridEnv::from_config(&cfg)?;
    let needs_net = matches!(
        cfg.algorithm,
        Algorithm::PiIwBasic | Algorithm::PiIwDynamic | Algorithm::AlphaZero
    );
    let net = match (&args.net, needs_net) {
        (Some(path), true) => Some(
            Network::load(path).with_context(|| format!("loading {}", path.display()))?,
        ),
        (None, true) => bail!("{} plans with a network; pass --net FILE", cfg.algorithm.as_str()),
        (Some(_), false) => bail!("{} plans without a network; drop --net", cfg.algorithm.as_str()),
        (None, false) => None,
    };

    let mut agent = build_agent(&sim, &cfg, args.seed, net, false)?;
    let mut total = 0.0;
    for ep in 0..args.episodes {
        agent.begin_episode()?;
        let mut ret = 0.0;
        let mut len = 0u32;
        loop {
            let out = agent.act()?;
            ret += out.reward;
            len += 1;
            if out.terminal {
                break;
            }
        }
        total += ret;
        println!("episode {ep}: return {ret:+.1} in {len} steps");
    }
    println!(
        "mean return {:+.3} over {} episodes ({} simulator interactions)",
        total / f64::from(args.episodes.max(1)),
        args.episodes,
        agent.interactions(),
    );
    Ok(())
}

fn run_plan_once(args: PlanOnceArgs) -> Result<()> {
    let cfg = args.overrides.resolve()?;
    let sim = GridEnv::from_config(&cfg)?;
    let report =
        piw_core::stats::plan_once(&cfg, &sim, sim.map().rows(), sim.map().cols(), args.seed)?;

    println!("algorithm: {}", report.algorithm.as_str());
    println!("expansions: {} (budget {})", report.expansions, cfg.tree_budget);
    println!("tree nodes: {}", report.nodes);
    println!("max depth: {}", report.max_depth);
    println!(
        "longest unique trajectory: {} states / {} edges",
        report.trajectory.distinct_states, report.trajectory.edges,
    );
    if let Some(solved) = report.root_solved {
        println!("root solved: {solved}");
    }
    if let Some(pruned) = report.pruned_states {
        println!("pruned duplicate states: {pruned}");
    }
    println!("root action returns:");
    for (i, ret) in report.root_returns.iter().enumerate() {
        let name = Action::from_index(i).map(|a| a.name()).unwrap_or("?");
        let visits = report
            .root_visits
            .as_ref()
            .map(|v| format!("  visits {}", v[i]))
            .unwrap_or_default();
        match ret {
            Some(r) => println!("  {name:<5} {r:+.4}{visits}"),
            None => println!("  {name:<5} unexpanded{visits}"),
        }
    }
    Ok(())
}

fn run_depth_stats(args: DepthStatsArgs) -> Result<()> {
    let cfg = args.overrides.resolve()?;
    let sim = GridEnv::from_config(&cfg)?;
    let stats = piw_core::stats::first_lookahead_depth_stats(
        &cfg,
        &sim,
        sim.map().rows(),
        sim.map().cols(),
        args.runs,
        args.seed,
    )?;
    println!("algorithm: {}", cfg.algorithm.as_str());
    println!("runs: {}", stats.runs);
    println!(
        "longest unique trajectory: mean {:.2} states (std {:.2}), mean {:.2} edges",
        stats.mean, stats.std, stats.mean_edges,
    );
    Ok(())
}

fn run_compare(args: CompareArgs) -> Result<()> {
    let base = args.overrides.resolve()?;
    let algorithms: Vec<Algorithm> = match &args.algorithms {
        None => Algorithm::ALL.to_vec(),
        Some(list) => list
            .split(',')
            .map(|s| {
                let s = s.trim();
                Algorithm::parse(s).ok_or_else(|| {
                    anyhow!(
                        "unknown algorithm {s:?}; expected one of: {}",
                        Algorithm::ALL.map(|a| a.as_str()).join(", ")
                    )
                })
            })
            .collect::<Result<_>>()?,
    };
    let sim = GridEnv::from_config(&base)?;
    let tag = map_tag(&base.map);
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut entries: Vec<(Algorithm, EpisodeRow)> = Vec::new();
    for &algorithm in &algorithms {
        let mut cfg = base.clone();
        cfg.algorithm = algorithm;
        for &seed in &cfg.seeds {
            let mut agent = build_agent(&sim, &cfg, seed, None, true)?;
            let rows = run_training(&mut agent, seed, cfg.max_interactions, |_| true)?;
            println!(
                "{} seed {seed}: {} episodes, {} interactions",
                algorithm.as_str(),
                rows.len(),
                agent.interactions(),
            );
            entries.extend(rows.into_iter().map(|r| (algorithm, r)));
        }
    }

    let path = args.out.join(format!("{tag}-compare.csv"));
    std::fs::write(&path, compare_csv(&entries))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    // Die quietly when a pipe closes early, as pipelines expect of a CLI.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::init();
    match Cli::parse().command {
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::PlanOnce(args) => run_plan_once(args),
        Command::DepthStats(args) => run_depth_stats(args),
        Command::Compare(args) => run_compare(args),
    }
}
