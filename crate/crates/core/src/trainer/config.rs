use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::critics::{CriticObjectiveConfig, ObjectiveKind};
use crate::datastore::OfflineDataset;
use crate::envs::MazeKind;
use crate::ndmath::Activation;
use crate::rng::SeedStreams;
use crate::{Error, Result};

/// Every algorithm the trainer can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Sac,
    SacOff,
    HybridRl,
    Cql,
    CqlSac,
    CalQl,
    CalQlSac,
    RankQ,
    RankQSac,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Sac,
        Algorithm::SacOff,
        Algorithm::HybridRl,
        Algorithm::Cql,
        Algorithm::CqlSac,
        Algorithm::CalQl,
        Algorithm::CalQlSac,
        Algorithm::RankQ,
        Algorithm::RankQSac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sac => "sac",
            Algorithm::SacOff => "sac+off",
            Algorithm::HybridRl => "hybrid",
            Algorithm::Cql => "cql",
            Algorithm::CqlSac => "cql+sac",
            Algorithm::CalQl => "calql",
            Algorithm::CalQlSac => "calql+sac",
            Algorithm::RankQ => "rankq",
            Algorithm::RankQSac => "rankq+sac",
        }
    }

    pub fn spec(self) -> AlgorithmSpec {
        use ObjectiveKind::*;
        let (offline, online, sampling) = match self {
            Algorithm::Sac => (None, Td, OnlineSampling::OnlineOnly),
            Algorithm::SacOff => (Some(Td), Td, OnlineSampling::Pooled),
            Algorithm::HybridRl => (None, Td, OnlineSampling::Hybrid),
            Algorithm::Cql => (Some(Cql), Cql, OnlineSampling::Mixed),
            Algorithm::CqlSac => (Some(Cql), Td, OnlineSampling::Mixed),
            Algorithm::CalQl => (Some(CalQl), CalQl, OnlineSampling::Mixed),
            Algorithm::CalQlSac => (Some(CalQl), Td, OnlineSampling::Mixed),
            Algorithm::RankQ => (Some(RankQ), RankQ, OnlineSampling::Mixed),
            Algorithm::RankQSac => (Some(RankQ), Td, OnlineSampling::Mixed),
        };
        AlgorithmSpec::new(offline, online, sampling).expect("built-in combinations are valid")
    }

    /// Whether the algorithm reads the offline dataset at all.
    pub fn uses_dataset(self) -> bool {
        self.spec().sampling != OnlineSampling::OnlineOnly
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k = s.to_ascii_lowercase().replace('_', "-");
        Ok(match k.as_str() {
            "sac" => Algorithm::Sac,
            "sac+off" | "sac-off" => Algorithm::SacOff,
            "hybrid" | "hybrid-rl" => Algorithm::HybridRl,
            "cql" => Algorithm::Cql,
            "cql+sac" | "cql-sac" => Algorithm::CqlSac,
            "calql" | "cal-ql" => Algorithm::CalQl,
            "calql+sac" | "calql-sac" | "cal-ql+sac" => Algorithm::CalQlSac,
            "rankq" => Algorithm::RankQ,
            "rankq+sac" | "rankq-sac" => Algorithm::RankQSac,
            _ => return Err(Error::Config(format!("unknown algorithm `{s}`"))),
        })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where online batches come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnlineSampling {
    /// Only the online buffer (no dataset).
    OnlineOnly,
    /// Offline store plus online buffer at the configured mixing ratio.
    Mixed,
    /// Online rows appended to a single store seeded with the dataset.
    Pooled,
    /// Separate stores sampled 50/50 for the whole run.
    Hybrid,
}

/// Critic objectives for the two phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlgorithmSpec {
    pub offline: Option<ObjectiveKind>,
    pub online: ObjectiveKind,
    pub sampling: OnlineSampling,
}

impl AlgorithmSpec {
    /// The online objective must equal the offline one or be plain TD (the
    /// "+SAC" switch); without an offline phase it must be TD.
    pub fn new(offline: Option<ObjectiveKind>, online: ObjectiveKind, sampling: OnlineSampling) -> Result<Self> {
        let ok = match offline {
            Some(k) => online == k || online == ObjectiveKind::Td,
            None => online == ObjectiveKind::Td,
        };
        if !ok {
            return Err(Error::Config(format!(
                "invalid objective pair: offline {:?}, online {}",
                offline.map(ObjectiveKind::name),
                online.name()
            )));
        }
        if offline.is_none() && sampling == OnlineSampling::Pooled {
            return Err(Error::Config("pooled sampling needs an offline phase".into()));
        }
        Ok(Self {
            offline,
            online,
            sampling,
        })
    }
}

/// Flat training configuration. Every field maps to one `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub env: MazeKind,
    pub dataset: Option<PathBuf>,
    /// Fraction of dataset trajectories kept out of training.
    pub heldout_frac: f64,
    pub offline_steps: u64,
    pub online_env_steps: u64,
    pub updates_per_env_step: u64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub temp_lr: f64,
    pub alpha_prime_lr: f64,
    pub grad_clip: f64,
    pub buffer_capacity: usize,
    pub mixing_ratio: f64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub tau: f64,
    pub critic_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub critic_activation: Activation,
    pub actor_activation: Activation,
    pub init_temperature: f64,
    pub auto_temperature: bool,
    /// `None` means `−act_dim`.
    pub target_entropy: Option<f64>,
    pub random_warmup_steps: u64,
    pub max_episode_steps: Option<usize>,
    pub dqda_probe: usize,
    pub checkpoint: bool,
    pub objective: CriticObjectiveConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::RankQ,
            env: MazeKind::Medium,
            dataset: None,
            heldout_frac: 0.0,
            offline_steps: 50_000,
            online_env_steps: 100_000,
            updates_per_env_step: 1,
            batch_size: 256,
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            temp_lr: 3e-4,
            alpha_prime_lr: 3e-4,
            grad_clip: 1.0,
            buffer_capacity: 1_000_000,
            mixing_ratio: 0.5,
            eval_every: 5_000,
            eval_episodes: 20,
            seed: 0,
            tau: 0.005,
            critic_hidden: vec![256, 256, 256],
            actor_hidden: vec![256, 256, 256],
            critic_activation: Activation::Relu,
            actor_activation: Activation::Relu,
            init_temperature: 1.0,
            auto_temperature: true,
            target_entropy: None,
            random_warmup_steps: 0,
            max_episode_steps: None,
            dqda_probe: 512,
            checkpoint: true,
            objective: CriticObjectiveConfig {
                alpha: 5.0,
                use_lagrange: true,
                alpha0: 20.0,
                ..CriticObjectiveConfig::default()
            },
        }
    }
}

/// `(key, description)` for every configuration key, in file order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("algorithm", "sac | sac+off | hybrid | cql | cql+sac | calql | calql+sac | rankq | rankq+sac"),
    ("env", "medium | large"),
    ("dataset", "path to a .o2o dataset (required unless algorithm = sac)"),
    ("heldout_frac", "fraction of dataset trajectories held out of training (for ranking accuracy)"),
    ("offline_steps", "gradient steps in the offline phase"),
    ("online_env_steps", "environment steps in the online phase"),
    ("updates_per_env_step", "gradient steps per online environment step"),
    ("batch_size", "mini-batch size"),
    ("actor_lr", "actor learning rate"),
    ("critic_lr", "critic learning rate"),
    ("temp_lr", "entropy temperature learning rate"),
    ("alpha_prime_lr", "learning rate of the Lagrange multiplier (CQL / Cal-QL)"),
    ("grad_clip", "global gradient-norm clip"),
    ("buffer_capacity", "online replay buffer capacity (rows)"),
    ("mixing_ratio", "offline fraction of each online batch, or -1 for a pooled store"),
    ("eval_every", "evaluate every N offline gradient steps / online env steps"),
    ("eval_episodes", "episodes per evaluation"),
    ("seed", "root seed"),
    ("gamma", "discount factor"),
    ("tau", "Polyak rate of the target critics"),
    ("critic_hidden", "comma-separated critic hidden widths"),
    ("actor_hidden", "comma-separated actor hidden widths"),
    ("critic_activation", "relu | tanh"),
    ("actor_activation", "relu | tanh"),
    ("init_temperature", "initial entropy temperature"),
    ("auto_temperature", "tune the temperature toward the target entropy"),
    ("target_entropy", "target entropy, or auto for -act_dim"),
    ("random_warmup_steps", "online steps taken with uniform random actions"),
    ("max_episode_steps", "episode time limit, or auto for the environment default"),
    ("dqda_probe", "probe batch size for dQ/da statistics"),
    ("checkpoint", "write a checkpoint after every evaluation"),
    ("alpha", "CQL / Cal-QL regularizer weight"),
    ("use_lagrange", "tune the CQL / Cal-QL weight with a Lagrange multiplier"),
    ("target_action_gap", "Lagrange target for the conservative gap"),
    ("n_policy_actions", "policy samples per state in the conservative term"),
    ("n_random_actions", "uniform samples per state in the conservative term"),
    ("cql_estimator", "lse | mean-policy"),
    ("alpha0", "RankQ weight of success-row terms"),
    ("alpha1", "RankQ weight of the failure-row term"),
    ("sigma", "RankQ negative-action noise scale"),
    ("ablation", "none, or a comma list of double_sigma, no_permuted, no_chain"),
    ("fail_pair", "random | noisy: comparator for failure rows"),
];

fn fmt_list(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    let v: std::result::Result<Vec<usize>, _> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect();
    let v = v.map_err(|e| format!("{e}"))?;
    if v.is_empty() || v.contains(&0) {
        return Err("expected a non-empty list of positive widths".into());
    }
    Ok(v)
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got `{s}`")),
    }
}

fn num<T: FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| format!("{e}"))
}

impl TrainConfig {
    /// Current value of `key` in config-file syntax.
    pub fn get(&self, key: &str) -> Option<String> {
        let o = &self.objective;
        Some(match key {
            "algorithm" => self.algorithm.name().into(),
            "env" => match self.env {
                MazeKind::Medium => "medium".into(),
                MazeKind::Large => "large".into(),
            },
            "dataset" => self.dataset.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "heldout_frac" => self.heldout_frac.to_string(),
            "offline_steps" => self.offline_steps.to_string(),
            "online_env_steps" => self.online_env_steps.to_string(),
            "updates_per_env_step" => self.updates_per_env_step.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "actor_lr" => self.actor_lr.to_string(),
            "critic_lr" => self.critic_lr.to_string(),
            "temp_lr" => self.temp_lr.to_string(),
            "alpha_prime_lr" => self.alpha_prime_lr.to_string(),
            "grad_clip" => self.grad_clip.to_string(),
            "buffer_capacity" => self.buffer_capacity.to_string(),
            "mixing_ratio" => self.mixing_ratio.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "seed" => self.seed.to_string(),
            "gamma" => o.gamma.to_string(),
            "tau" => self.tau.to_string(),
            "critic_hidden" => fmt_list(&self.critic_hidden),
            "actor_hidden" => fmt_list(&self.actor_hidden),
            "critic_activation" => self.critic_activation.name().into(),
            "actor_activation" => self.actor_activation.name().into(),
            "init_temperature" => self.init_temperature.to_string(),
            "auto_temperature" => self.auto_temperature.to_string(),
            "target_entropy" => self.target_entropy.map_or("auto".into(), |v| v.to_string()),
            "random_warmup_steps" => self.random_warmup_steps.to_string(),
            "max_episode_steps" => self.max_episode_steps.map_or("auto".into(), |v| v.to_string()),
            "dqda_probe" => self.dqda_probe.to_string(),
            "checkpoint" => self.checkpoint.to_string(),
            "alpha" => o.alpha.to_string(),
            "use_lagrange" => o.use_lagrange.to_string(),
            "target_action_gap" => o.target_action_gap.to_string(),
            "n_policy_actions" => o.n_policy_actions.to_string(),
            "n_random_actions" => o.n_random_actions.to_string(),
            "cql_estimator" => o.estimator.name().into(),
            "alpha0" => o.alpha0.to_string(),
            "alpha1" => o.alpha1.to_string(),
            "sigma" => o.sigma.to_string(),
            "ablation" => o.ablation_list(),
            "fail_pair" => if o.fail_vs_noisy { "noisy" } else { "random" }.into(),
            _ => return None,
        })
    }

    /// Set one key from its text form. Errors are returned as messages so
    /// callers can collect them.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        let o = &mut self.objective;
        match key {
            "algorithm" => self.algorithm = v.parse().map_err(|e: Error| e.to_string())?,
            "env" => self.env = v.parse().map_err(|e: Error| e.to_string())?,
            "dataset" => self.dataset = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "heldout_frac" => self.heldout_frac = num(v)?,
            "offline_steps" => self.offline_steps = num(v)?,
            "online_env_steps" => self.online_env_steps = num(v)?,
            "updates_per_env_step" => self.updates_per_env_step = num(v)?,
            "batch_size" => self.batch_size = num(v)?,
            "actor_lr" => self.actor_lr = num(v)?,
            "critic_lr" => self.critic_lr = num(v)?,
            "temp_lr" => self.temp_lr = num(v)?,
            "alpha_prime_lr" => self.alpha_prime_lr = num(v)?,
            "grad_clip" => self.grad_clip = num(v)?,
            "buffer_capacity" => self.buffer_capacity = num(v)?,
            "mixing_ratio" => self.mixing_ratio = num(v)?,
            "eval_every" => self.eval_every = num(v)?,
            "eval_episodes" => self.eval_episodes = num(v)?,
            "seed" => self.seed = num(v)?,
            "gamma" => o.gamma = num(v)?,
            "tau" => self.tau = num(v)?,
            "critic_hidden" => self.critic_hidden = parse_list(v)?,
            "actor_hidden" => self.actor_hidden = parse_list(v)?,
            "critic_activation" => self.critic_activation = v.parse().map_err(|e: Error| e.to_string())?,
            "actor_activation" => self.actor_activation = v.parse().map_err(|e: Error| e.to_string())?,
            "init_temperature" => self.init_temperature = num(v)?,
            "auto_temperature" => self.auto_temperature = parse_bool(v)?,
            "target_entropy" => self.target_entropy = if v == "auto" { None } else { Some(num(v)?) },
            "random_warmup_steps" => self.random_warmup_steps = num(v)?,
            "max_episode_steps" => self.max_episode_steps = if v == "auto" { None } else { Some(num(v)?) },
            "dqda_probe" => self.dqda_probe = num(v)?,
            "checkpoint" => self.checkpoint = parse_bool(v)?,
            "alpha" => o.alpha = num(v)?,
            "use_lagrange" => o.use_lagrange = parse_bool(v)?,
            "target_action_gap" => o.target_action_gap = num(v)?,
            "n_policy_actions" => o.n_policy_actions = num(v)?,
            "n_random_actions" => o.n_random_actions = num(v)?,
            "cql_estimator" => o.estimator = v.parse().map_err(|e: Error| e.to_string())?,
            "alpha0" => o.alpha0 = num(v)?,
            "alpha1" => o.alpha1 = num(v)?,
            "sigma" => o.sigma = num(v)?,
            "ablation" => o.set_ablations(v).map_err(|e| e.to_string())?,
            "fail_pair" => {
                o.fail_vs_noisy = match v {
                    "random" => false,
                    "noisy" => true,
                    other => return Err(format!("expected random or noisy, got `{other}`")),
                }
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Parse `key = value` lines (`#` starts a comment) on top of the
    /// defaults, then apply `overrides`. All problems are reported together.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut errs = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = cfg.set(k.trim(), v) {
                        errs.push(format!("line {}: `{}`: {e}", no + 1, k.trim()));
                    }
                }
                None => errs.push(format!("line {}: expected `key = value`", no + 1)),
            }
        }
        for (k, v) in overrides {
            if let Err(e) = cfg.set(k.trim(), v) {
                errs.push(format!("override `{}`: {e}", k.trim()));
            }
        }
        if let Err(Error::Config(e)) = cfg.validate() {
            errs.extend(e.lines().map(str::to_string));
        }
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errs.join("\n")))
        }
    }

    /// Split `key=value` override strings.
    pub fn split_overrides(items: &[String]) -> Result<Vec<(String, String)>> {
        items
            .iter()
            .map(|s| {
                s.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, _) in CONFIG_KEYS {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&self.get(k).expect("listed key"));
            s.push('\n');
        }
        s
    }

    /// `(train, held-out)` split of `data` when `heldout_frac > 0`. The split
    /// depends only on the dataset and the root seed.
    pub fn heldout_split(&self, data: &OfflineDataset) -> Result<Option<(OfflineDataset, OfflineDataset)>> {
        if self.heldout_frac <= 0.0 {
            return Ok(None);
        }
        let seed = SeedStreams::new(self.seed).child("heldout").root();
        data.split_heldout(self.heldout_frac, seed).map(Some)
    }

    /// The critic objective used in a phase.
    pub fn objective_for(&self, kind: ObjectiveKind) -> CriticObjectiveConfig {
        CriticObjectiveConfig {
            kind,
            ..self.objective.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.offline_steps + self.online_env_steps == 0 {
            errs.push("offline_steps and online_env_steps are both 0".to_string());
        }
        if self.updates_per_env_step == 0 {
            errs.push("updates_per_env_step must be >= 1".into());
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be >= 1".into());
        }
        for (k, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("temp_lr", self.temp_lr),
            ("alpha_prime_lr", self.alpha_prime_lr),
            ("grad_clip", self.grad_clip),
            ("init_temperature", self.init_temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{k} must be > 0, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.heldout_frac) {
            errs.push(format!("heldout_frac must lie in [0, 1), got {}", self.heldout_frac));
        }
        if self.buffer_capacity == 0 {
            errs.push("buffer_capacity must be >= 1".into());
        }
        if !(self.mixing_ratio == -1.0 || (0.0..=1.0).contains(&self.mixing_ratio)) {
            errs.push(format!("mixing_ratio must be -1 or in [0, 1], got {}", self.mixing_ratio));
        }
        if self.eval_every == 0 {
            errs.push("eval_every must be >= 1".into());
        }
        if self.eval_episodes == 0 {
            errs.push("eval_episodes must be >= 1".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            errs.push(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.dqda_probe == 0 {
            errs.push("dqda_probe must be >= 1".into());
        }
        if self.max_episode_steps == Some(0) {
            errs.push("max_episode_steps must be >= 1".into());
        }
        let phases = {
            let s = self.algorithm.spec();
            let mut v = vec![s.online];
            v.extend(s.offline);
            v
        };
        for kind in phases {
            if let Err(Error::Config(e)) = self.objective_for(kind).validate() {
                for m in e.split("; ") {
                    if !errs.iter().any(|x| x == m) {
                        errs.push(m.to_string());
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("\n")))
        }
    }

    pub fn target_entropy_for(&self, act_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(act_dim as f64))
    }
}
