//! Critic-only training on the 2-D disc task, followed by landscape
//! analysis: gradient field, ascent paths from a ring of starts, and the
//! `|∂Q/∂a|` series recorded during training.

use rand::Rng as _;

use crate::actor::UniformPolicy;
use crate::analysis::{ascent_paths, dqda_stats, grad_field, ring_starts, AscentPath, CriticAt, DqdaStats, GradField};
use crate::critics::{
    evaluate_objective, Components, CriticObjectiveConfig, CriticPair, LossTerms, ObjectiveKind, ObjectiveSamples,
};
use crate::datastore::{Batch, Origin, Row};
use crate::envs::{toy_sample_dataset, ToyDiscTask, ToySample};
use crate::ndmath::{Activation, AdamState, Matrix};
use crate::rng::SeedStreams;
use crate::{Error, Result};

/// The single fixed state of the toy task.
pub const TOY_STATE: [f64; 1] = [1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub objective: CriticObjectiveConfig,
    pub iters: usize,
    pub n_succ: usize,
    pub n_fail: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub lr: f64,
    pub radius: f64,
    pub seed: u64,
    /// Record `|∂Q/∂a|` statistics every this many iterations.
    pub dqda_every: usize,
    pub probe_size: usize,
    pub ascent_lr: f64,
    pub ascent_steps: usize,
    pub n_starts: usize,
    pub start_radius: f64,
}

impl ToyConfig {
    pub fn new(kind: ObjectiveKind) -> Self {
        Self {
            objective: CriticObjectiveConfig {
                kind,
                alpha: 5.0,
                ..Default::default()
            },
            iters: 2000,
            n_succ: 200,
            n_fail: 200,
            batch_size: 64,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            lr: 3e-4,
            radius: 0.5,
            seed: 0,
            dqda_every: 100,
            probe_size: 512,
            ascent_lr: 0.05,
            ascent_steps: 200,
            n_starts: 8,
            start_radius: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        ToyDiscTask { radius: self.radius }.validate()?;
        if self.iters == 0 || self.batch_size == 0 || self.dqda_every == 0 || self.probe_size == 0 {
            return Err(Error::Config(
                "toy iters, batch_size, dqda_every and probe_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("toy lr must be > 0, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Per-iteration critic loss (summed over both twins).
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLossRow {
    pub iter: usize,
    pub total: f64,
    pub terms: LossTerms,
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub config: ToyConfig,
    pub data: Vec<ToySample>,
    pub critics: CriticPair,
    pub trace: Vec<ToyLossRow>,
    /// `(iteration, stats)`, including iteration 0 and the final one.
    pub dqda: Vec<(u64, DqdaStats)>,
}

fn toy_rows(data: &[ToySample]) -> Vec<Row> {
    data.iter()
        .enumerate()
        .map(|(i, s)| Row {
            obs: TOY_STATE.to_vec(),
            action: s.action.to_vec(),
            reward: s.reward,
            next_obs: TOY_STATE.to_vec(),
            terminated: true,
            truncated: false,
            success: s.reward > 0.0,
            refval: s.reward,
            traj_id: i as u32,
            origin: Origin::Offline,
        })
        .collect()
}

/// Train twin critics on the disc dataset with `cfg.objective`. Rows are
/// one-step episodes, so the TD target is the reward itself and the
/// regularizers' policy proposals are uniform.
pub fn train_toy(cfg: &ToyConfig) -> Result<ToyRun> {
    cfg.validate()?;
    let streams = SeedStreams::new(cfg.seed);
    let task = ToyDiscTask { radius: cfg.radius };
    let data = toy_sample_dataset(&task, cfg.n_succ, cfg.n_fail, streams.child("data").root())?;
    let rows = toy_rows(&data);
    let mut critics = CriticPair::new(
        TOY_STATE.len(),
        2,
        &cfg.hidden,
        cfg.activation,
        1.0,
        &mut streams.stream("init"),
    )?;
    let mut opts = [
        AdamState::new(critics.q[0].params(), cfg.lr),
        AdamState::new(critics.q[1].params(), cfg.lr),
    ];
    let policy = UniformPolicy { act_dim: 2 };
    let comps = Components::for_objective(&cfg.objective, cfg.objective.alpha);

    let mut prng = streams.stream("probe");
    let probe_acts = Matrix::from_rows(
        &(0..cfg.probe_size)
            .map(|_| [prng.random_range(-1.0..=1.0), prng.random_range(-1.0..=1.0)])
            .collect::<Vec<_>>(),
    );
    let probe_obs = Matrix::filled(cfg.probe_size, TOY_STATE.len(), TOY_STATE[0]);

    let mut trace = Vec::with_capacity(cfg.iters);
    let mut dqda = vec![(0, dqda_stats(&critics.q[0], &probe_obs, &probe_acts)?)];
    for it in 0..cfg.iters {
        let mut rng = streams.indexed("toy-update", it as u64);
        let picks: Vec<&Row> = (0..cfg.batch_size)
            .map(|_| &rows[rng.random_range(0..rows.len())])
            .collect();
        let batch = Batch::from_rows(&picks)?;
        let samples = ObjectiveSamples::draw(&cfg.objective, &batch, &policy, &mut rng)?;
        let loss = evaluate_objective(&critics, &batch, &samples, &cfg.objective, comps)?;
        let [g0, g1] = loss.grads;
        opts[0].step(critics.q[0].params_mut(), &g0)?;
        opts[1].step(critics.q[1].params_mut(), &g1)?;
        trace.push(ToyLossRow {
            iter: it,
            total: loss.total,
            terms: loss.terms,
        });
        let done = it + 1;
        if done % cfg.dqda_every == 0 || done == cfg.iters {
            dqda.push((done as u64, dqda_stats(&critics.q[0], &probe_obs, &probe_acts)?));
        }
    }
    // Targets are never bootstrapped here; keep them equal to the online nets.
    critics.polyak_update(1.0)?;
    Ok(ToyRun {
        config: cfg.clone(),
        data,
        critics,
        trace,
        dqda,
    })
}

/// Field and ascent paths for twin 0 of a finished toy run.
#[derive(Debug, Clone)]
pub struct ToyLandscape {
    pub field: GradField,
    pub paths: Vec<AscentPath>,
}

impl ToyLandscape {
    pub fn converged(&self) -> usize {
        self.paths.iter().filter(|p| p.converged).count()
    }
}

pub fn toy_landscape(run: &ToyRun, grid_res: usize) -> Result<ToyLandscape> {
    let c = &run.config;
    let land = CriticAt::new(&run.critics.q[0], &TOY_STATE)?;
    let field = grad_field(&land, grid_res)?;
    let task = ToyDiscTask { radius: c.radius };
    let starts = ring_starts(c.n_starts, c.start_radius);
    let paths = ascent_paths(&land, &starts, c.ascent_lr, c.ascent_steps, |a| task.contains(a))?;
    Ok(ToyLandscape { field, paths })
}

pub fn write_trace_csv<W: std::io::Write>(trace: &[ToyLossRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "iter",
        "loss_total",
        "loss_td",
        "loss_conservative",
        "loss_rank_succ",
        "loss_rank_chain",
        "loss_rank_fail",
        "q_data_mean",
        "q_policy_mean",
    ])?;
    for r in trace {
        let t = &r.terms;
        out.write_record([
            r.iter.to_string(),
            r.total.to_string(),
            t.td.to_string(),
            t.conservative.to_string(),
            t.rank_succ.to_string(),
            t.rank_chain.to_string(),
            t.rank_fail.to_string(),
            t.q_data_mean.to_string(),
            t.q_policy_mean.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
