use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;

use super::config::{Algorithm, AlgorithmSpec, OnlineSampling, TrainConfig};
use super::record::{LossWindow, Phase, RecordRow, RunRecord};
use crate::actor::{actor_loss, standard_normal, EntropyTemp, SquashedGaussianPolicy};
use crate::analysis::dqda_stats;
use crate::critics::{
    evaluate_objective, Components, CriticObjectiveConfig, CriticPair, LossTerms, ObjectiveKind, ObjectiveSamples,
};
use crate::datastore::{hybrid_sample, Batch, Mixing, MixedSampler, OfflineDataset, Trajectory, Transition};
use crate::envs::{MazeParams, PointMaze};
use crate::ndmath::{clip_global_norm, AdamState, GradBundle, Matrix};
use crate::par;
use crate::rng::{Rng, SeedStreams};
use crate::{Error, Result};

const MAX_ALPHA_PRIME: f64 = 1e6;

/// Networks, optimizers and tunable multipliers.
#[derive(Debug, Clone)]
pub struct Agent {
    pub policy: SquashedGaussianPolicy,
    pub critics: CriticPair,
    pub actor_opt: AdamState,
    pub critic_opt: [AdamState; 2],
    pub temp: EntropyTemp,
    pub log_alpha_prime: Vec<Matrix>,
    pub dual_opt: AdamState,
}

/// What one gradient step reported.
#[derive(Debug, Clone)]
pub struct UpdateStats {
    pub terms: LossTerms,
    pub actor_loss: f64,
    pub mean_log_prob: f64,
}

impl Agent {
    pub fn new(cfg: &TrainConfig, obs_dim: usize, act_dim: usize, streams: &SeedStreams) -> Result<Self> {
        let mut rng = streams.stream("init");
        let policy = SquashedGaussianPolicy::new(obs_dim, act_dim, &cfg.actor_hidden, cfg.actor_activation, &mut rng)?;
        let critics = CriticPair::new(obs_dim, act_dim, &cfg.critic_hidden, cfg.critic_activation, cfg.tau, &mut rng)?;
        let actor_opt = AdamState::new(policy.trunk().params(), cfg.actor_lr);
        let critic_opt = [
            AdamState::new(critics.q[0].params(), cfg.critic_lr),
            AdamState::new(critics.q[1].params(), cfg.critic_lr),
        ];
        let temp = EntropyTemp::new(
            cfg.init_temperature,
            cfg.target_entropy_for(act_dim),
            cfg.auto_temperature,
            cfg.temp_lr,
        )?;
        let log_alpha_prime = vec![Matrix::zeros(1, 1)];
        let dual_opt = AdamState::new(&log_alpha_prime, cfg.alpha_prime_lr);
        Ok(Self {
            policy,
            critics,
            actor_opt,
            critic_opt,
            temp,
            log_alpha_prime,
            dual_opt,
        })
    }

    pub fn alpha_prime(&self) -> f64 {
        self.log_alpha_prime[0].get(0, 0).exp().clamp(0.0, MAX_ALPHA_PRIME)
    }

    /// One critic step (objective `ocfg.kind`), Polyak update, one actor step
    /// and one temperature step.
    pub fn update(
        &mut self,
        ocfg: &CriticObjectiveConfig,
        grad_clip: f64,
        batch: &Batch,
        rng: &mut Rng,
    ) -> Result<UpdateStats> {
        let conservative = matches!(ocfg.kind, ObjectiveKind::Cql | ObjectiveKind::CalQl);
        let lagrange = conservative && ocfg.use_lagrange;
        let weight = if lagrange { ocfg.alpha * self.alpha_prime() } else { ocfg.alpha };
        let samples = ObjectiveSamples::draw(ocfg, batch, &self.policy, rng)?;
        let loss = evaluate_objective(&self.critics, batch, &samples, ocfg, Components::for_objective(ocfg, weight))
            .map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("{m} ({} objective)", ocfg.kind.name())),
                other => other,
            })?;
        let [g0, g1] = loss.grads;
        for (twin, g) in [g0, g1].into_iter().enumerate() {
            let g = clip_global_norm(g, grad_clip)?;
            self.critic_opt[twin].step(self.critics.q[twin].params_mut(), &g)?;
        }
        if lagrange {
            let ap = self.alpha_prime();
            let excess: f64 = loss.terms.conservative_gap.iter().map(|g| g - ocfg.target_action_gap).sum();
            let g = -0.5 * ap * ocfg.alpha * excess;
            let gb = GradBundle::new(vec![Matrix::filled(1, 1, g)]);
            self.dual_opt.step(&mut self.log_alpha_prime, &gb)?;
            let lp = self.log_alpha_prime[0].get(0, 0).min(MAX_ALPHA_PRIME.ln());
            self.log_alpha_prime[0].set(0, 0, lp);
        }
        self.critics.polyak_update(self.critics.tau)?;

        let noise = standard_normal(batch.len(), self.policy.act_dim(), rng);
        let al = actor_loss(&self.policy, &self.critics, &batch.obs, &noise, self.temp.value())?;
        let g = clip_global_norm(al.grads, grad_clip)?;
        self.actor_opt.step(self.policy.trunk_mut().params_mut(), &g)?;
        self.temp.update(al.mean_log_prob)?;
        Ok(UpdateStats {
            terms: loss.terms,
            actor_loss: al.value,
            mean_log_prob: al.mean_log_prob,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub success_rate: f64,
    /// Failure-inclusive: timeouts count with their full length.
    pub mean_length: f64,
    pub outcomes: Vec<(bool, usize)>,
}

/// Roll out `n` episodes with `act(env, obs)` choosing actions. Episode `i`
/// resets from stream `("eval", i)` of `seed`, so results are independent of
/// `workers`.
pub fn evaluate_with<F>(env: &PointMaze, n: usize, seed: u64, workers: usize, act: F) -> Result<EvalResult>
where
    F: Fn(&PointMaze, &[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    if n == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let streams = SeedStreams::new(seed);
    let outcomes = par::map_indexed_workers(workers, n, |i| -> Result<(bool, usize)> {
        let mut env = env.clone();
        let mut rng = streams.indexed("eval", i as u64);
        let mut obs = env.reset(&mut rng);
        loop {
            let a = act(&env, &obs)?;
            let out = env.step(&a);
            if out.terminated || out.truncated {
                return Ok((out.terminated, env.steps_taken()));
            }
            obs = out.obs;
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let succ = outcomes.iter().filter(|o| o.0).count();
    let len: usize = outcomes.iter().map(|o| o.1).sum();
    Ok(EvalResult {
        success_rate: succ as f64 / n as f64,
        mean_length: len as f64 / n as f64,
        outcomes,
    })
}

/// Deterministic-mode (`tanh(mean)`) evaluation of `policy`.
pub fn evaluate(
    policy: &SquashedGaussianPolicy,
    env: &PointMaze,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<EvalResult> {
    evaluate_with(env, n, seed, workers, |_, obs| {
        let x = Matrix::from_vec(1, obs.len(), obs.to_vec())?;
        Ok(policy.deterministic(&x)?.into_vec())
    })
}

/// Progress counters; together with the root seed they determine every
/// random stream, which is what makes resuming exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub offline_done: u64,
    pub env_steps: u64,
    pub grad_steps: u64,
    pub episodes: u64,
    pub owed_updates: u64,
    pub evals: u64,
}

/// Offline pretraining followed by online fine-tuning for one algorithm.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub(crate) cfg: TrainConfig,
    pub(crate) spec: AlgorithmSpec,
    pub(crate) agent: Agent,
    pub(crate) env: PointMaze,
    pub(crate) sampler: MixedSampler,
    pub(crate) streams: SeedStreams,
    pub(crate) probe_obs: Matrix,
    pub(crate) counters: Counters,
    pub(crate) pending: Vec<Transition>,
    pub(crate) obs: Vec<f64>,
    pub(crate) window: LossWindow,
    pub(crate) record: RunRecord,
    eval_workers: usize,
    out_dir: Option<PathBuf>,
    timing: Vec<(u64, f64)>,
    started: Instant,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, dataset: Option<&OfflineDataset>) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.algorithm.spec();
        let mut env = PointMaze::preset(cfg.env);
        if let Some(m) = cfg.max_episode_steps {
            let params = MazeParams {
                max_steps: m,
                ..*env.params()
            };
            env = PointMaze::new(env.layout().clone(), params);
        }
        let (obs_dim, act_dim) = (PointMaze::OBS_DIM, PointMaze::ACT_DIM);
        let dataset = if spec.sampling == OnlineSampling::OnlineOnly { None } else { dataset };
        let split = match dataset {
            Some(d) => cfg.heldout_split(d)?,
            None => None,
        };
        let dataset = split.as_ref().map(|s| &s.0).or(dataset);
        if spec.sampling != OnlineSampling::OnlineOnly && dataset.is_none() {
            return Err(Error::Config(format!("algorithm {} needs an offline dataset", cfg.algorithm)));
        }
        if let Some(d) = dataset {
            if d.obs_dim() != obs_dim || d.act_dim() != act_dim {
                return Err(Error::Data(format!(
                    "dataset dims ({}, {}) do not match the environment ({obs_dim}, {act_dim})",
                    d.obs_dim(),
                    d.act_dim()
                )));
            }
            if (d.gamma() - cfg.objective.gamma).abs() > 1e-12 {
                return Err(Error::Data(format!(
                    "dataset return-to-go uses gamma {} but the config has {}",
                    d.gamma(),
                    cfg.objective.gamma
                )));
            }
            let needs_success = spec.offline == Some(ObjectiveKind::RankQ) && cfg.offline_steps > 0;
            if needs_success && d.partition().0.is_empty() {
                return Err(Error::Data(
                    "RankQ needs success transitions but the dataset has none (no trajectory reached the goal)".into(),
                ));
            }
        }
        let mixing = match spec.sampling {
            OnlineSampling::OnlineOnly => Mixing::Ratio(0.0),
            OnlineSampling::Mixed => Mixing::from_ratio(cfg.mixing_ratio)?,
            OnlineSampling::Pooled => Mixing::Pooled,
            OnlineSampling::Hybrid => Mixing::Ratio(0.5),
        };
        let sampler = MixedSampler::new(dataset, cfg.buffer_capacity, mixing);
        let streams = SeedStreams::new(cfg.seed);
        let agent = Agent::new(&cfg, obs_dim, act_dim, &streams)?;

        let mut prng = streams.stream("probe");
        let probe_obs = match dataset {
            Some(d) => {
                let rows = d.rows();
                let picks: Vec<&crate::datastore::Row> =
                    (0..cfg.dqda_probe).map(|_| &rows[prng.random_range(0..rows.len())]).collect();
                Batch::from_rows(&picks)?.obs
            }
            None => {
                let mut e = env.clone();
                let obs: Vec<Vec<f64>> = (0..cfg.dqda_probe).map(|_| e.reset(&mut prng)).collect();
                Matrix::from_rows(&obs)
            }
        };
        let obs = env.reset(&mut streams.indexed("reset", 0));
        Ok(Self {
            cfg,
            spec,
            agent,
            env,
            sampler,
            streams,
            probe_obs,
            counters: Counters::default(),
            pending: Vec::new(),
            obs,
            window: LossWindow::default(),
            record: RunRecord::default(),
            eval_workers: 1,
            out_dir: None,
            timing: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Copy of this trainer that continues as `algorithm`. Both must share
    /// the offline objective and sampling mode, and the online phase must
    /// not have started; this lets X and X+SAC reuse one offline phase.
    pub fn fork_as(&self, algorithm: Algorithm) -> Result<Trainer> {
        let spec = algorithm.spec();
        if spec.offline != self.spec.offline || spec.sampling != self.spec.sampling {
            return Err(Error::Config(format!(
                "cannot continue a {} run as {}: offline phases differ",
                self.cfg.algorithm, algorithm
            )));
        }
        if self.counters.env_steps > 0 {
            return Err(Error::State("cannot fork after the online phase has started".into()));
        }
        let mut t = self.clone();
        t.cfg.algorithm = algorithm;
        t.spec = spec;
        t.out_dir = None;
        Ok(t)
    }

    /// Write the record, timings and checkpoints under `dir` after every evaluation.
    pub fn with_output_dir(mut self, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        self.out_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn with_eval_workers(mut self, workers: usize) -> Self {
        self.eval_workers = workers.max(1);
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn spec(&self) -> AlgorithmSpec {
        self.spec
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn agent_mut(&mut self) -> &mut Agent {
        &mut self.agent
    }

    pub fn sampler(&self) -> &MixedSampler {
        &self.sampler
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn env(&self) -> &PointMaze {
        &self.env
    }

    pub fn offline_total(&self) -> u64 {
        if self.spec.offline.is_some() {
            self.cfg.offline_steps
        } else {
            0
        }
    }

    /// Offline steps done plus online environment steps done.
    pub fn global_step(&self) -> u64 {
        self.counters.offline_done + self.counters.env_steps
    }

    pub fn total_steps(&self) -> u64 {
        self.offline_total() + self.cfg.online_env_steps
    }

    pub fn is_finished(&self) -> bool {
        self.global_step() >= self.total_steps()
    }

    /// Run both phases to completion.
    pub fn run(&mut self) -> Result<&RunRecord> {
        self.run_until(u64::MAX)?;
        Ok(&self.record)
    }

    /// Run only the offline phase.
    pub fn run_offline(&mut self) -> Result<&RunRecord> {
        self.run_until(self.offline_total())?;
        Ok(&self.record)
    }

    /// Advance until `global_step() >= limit` or the run ends.
    pub fn run_until(&mut self, limit: u64) -> Result<()> {
        while !self.is_finished() && self.global_step() < limit {
            self.tick()?;
        }
        Ok(())
    }

    fn tick(&mut self) -> Result<()> {
        if self.counters.offline_done < self.offline_total() {
            self.offline_tick()
        } else {
            self.online_tick()
        }
    }

    fn offline_tick(&mut self) -> Result<()> {
        let kind = self.spec.offline.expect("offline phase has an objective");
        let mut rng = self.streams.indexed("offline-update", self.counters.offline_done);
        let batch = self.sampler.sample(self.cfg.batch_size, &mut rng)?;
        self.apply_update(kind, &batch, &mut rng)?;
        self.counters.offline_done += 1;
        let done = self.counters.offline_done;
        if done % self.cfg.eval_every == 0 || done == self.offline_total() {
            self.eval_and_log(Phase::Offline)?;
        }
        Ok(())
    }

    fn apply_update(&mut self, kind: ObjectiveKind, batch: &Batch, rng: &mut Rng) -> Result<()> {
        let ocfg = self.cfg.objective_for(kind);
        let stats = self.agent.update(&ocfg, self.cfg.grad_clip, batch, rng)?;
        let off = batch.offline_count() as f64 / batch.len() as f64;
        self.window.add(&stats.terms, stats.actor_loss, off);
        self.counters.grad_steps += 1;
        Ok(())
    }

    fn online_batch(&self, rng: &mut Rng) -> Result<Batch> {
        match self.spec.sampling {
            OnlineSampling::Hybrid => hybrid_sample(
                self.sampler.offline_store(),
                self.sampler.online_buffer(),
                self.cfg.batch_size,
                rng,
            ),
            _ => self.sampler.sample(self.cfg.batch_size, rng),
        }
    }

    fn finish_episode(&mut self) {
        let ts = std::mem::take(&mut self.pending);
        if ts.is_empty() {
            return;
        }
        let traj = Trajectory::new(ts, self.cfg.objective.gamma, 0);
        self.sampler.push_episode(&traj);
        self.counters.episodes += 1;
        let mut rng = self.streams.indexed("reset", self.counters.episodes);
        self.obs = self.env.reset(&mut rng);
    }

    fn online_tick(&mut self) -> Result<()> {
        let step = self.counters.env_steps;
        let mut rng = self.streams.indexed("act", step);
        let action: Vec<f64> = if step < self.cfg.random_warmup_steps {
            (0..PointMaze::ACT_DIM).map(|_| rng.random_range(-1.0..=1.0)).collect()
        } else {
            let x = Matrix::from_vec(1, self.obs.len(), self.obs.clone())?;
            self.agent.policy.sample(&x, &mut rng)?.actions.into_vec()
        };
        let out = self.env.step(&action);
        self.counters.env_steps += 1;
        let last_step = self.counters.env_steps == self.cfg.online_env_steps;
        let done = out.terminated || out.truncated;
        self.pending.push(Transition {
            obs: std::mem::replace(&mut self.obs, out.obs.clone()),
            action,
            reward: out.reward,
            next_obs: out.obs,
            terminated: out.terminated,
            truncated: out.truncated || (last_step && !out.terminated),
        });
        if done || last_step {
            self.finish_episode();
        }
        self.counters.owed_updates += self.cfg.updates_per_env_step;
        if self.sampler.offline_len() + self.sampler.online_len() > 0 {
            let kind = self.spec.online;
            while self.counters.owed_updates > 0 {
                let mut rng = self.streams.indexed("online-update", self.counters.grad_steps);
                let batch = self.online_batch(&mut rng)?;
                self.apply_update(kind, &batch, &mut rng)?;
                self.counters.owed_updates -= 1;
            }
        }
        let n = self.counters.env_steps;
        if n % self.cfg.eval_every == 0 || last_step {
            self.eval_and_log(Phase::Online)?;
        }
        Ok(())
    }

    /// Deterministic-mode evaluation with the run's fixed evaluation seed.
    pub fn evaluate_now(&self) -> Result<EvalResult> {
        let seed = self.streams.child("eval").root();
        evaluate(&self.agent.policy, &self.env, self.cfg.eval_episodes, seed, self.eval_workers)
    }

    /// `(max, std)` of `|∂Q₀/∂a|` over the probe batch with policy-sampled actions.
    pub fn dqda_now(&self) -> Result<(f64, f64)> {
        let mut rng = self.streams.stream("probe-actions");
        let acts = self.agent.policy.sample(&self.probe_obs, &mut rng)?.actions;
        let s = dqda_stats(&self.agent.critics.q[0], &self.probe_obs, &acts)?;
        Ok((s.max, s.std))
    }

    fn eval_and_log(&mut self, phase: Phase) -> Result<()> {
        let ev = self.evaluate_now()?;
        let (dmax, dstd) = self.dqda_now()?;
        let row = RecordRow {
            phase,
            step: self.global_step(),
            offline_steps: self.counters.offline_done,
            env_steps: self.counters.env_steps,
            grad_steps: self.counters.grad_steps,
            episodes: self.counters.episodes,
            success_rate: ev.success_rate,
            avg_traj_len: ev.mean_length,
            losses: self.window.means(),
            temperature: self.agent.temp.value(),
            alpha_prime: if self.cfg.objective.use_lagrange { self.agent.alpha_prime() } else { 1.0 },
            dqda_max: dmax,
            dqda_std: dstd,
        };
        self.record.push(row)?;
        self.window = LossWindow::default();
        self.counters.evals += 1;
        self.timing.push((self.global_step(), self.started.elapsed().as_secs_f64()));
        if let Some(dir) = self.out_dir.clone() {
            self.record.save(&dir.join("run_record.csv"))?;
            self.write_timing(&dir.join("timing.csv"))?;
            if self.cfg.checkpoint {
                super::checkpoint::save(self, &dir.join("checkpoint.bin"))?;
            }
        }
        Ok(())
    }

    fn write_timing(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "wall_seconds"])?;
        for (s, t) in &self.timing {
            w.write_record([s.to_string(), format!("{t:.3}")])?;
        }
        w.flush()?;
        Ok(())
    }
}
