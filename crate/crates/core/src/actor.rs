//! Tanh-squashed Gaussian policy, its reparameterized loss, and the
//! automatically tuned entropy temperature.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;

use crate::critics::CriticPair;
use crate::ndmath::{softplus, Activation, AdamState, GradBundle, Matrix, Mlp};
use crate::rng;
use crate::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Anything that can propose actions for a batch of observations.
pub trait ActionSource {
    fn act_dim(&self) -> usize;

    /// One action per row of `obs`, with its log-density.
    fn sample_actions(&self, obs: &Matrix, rng: &mut dyn RngCore) -> Result<(Matrix, Vec<f64>)>;
}

/// Uniform proposals on `[-1, 1]^d`, independent of the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformPolicy {
    pub act_dim: usize,
}

impl ActionSource for UniformPolicy {
    fn act_dim(&self) -> usize {
        self.act_dim
    }

    fn sample_actions(&self, obs: &Matrix, rng: &mut dyn RngCore) -> Result<(Matrix, Vec<f64>)> {
        let mut a = Matrix::zeros(obs.rows(), self.act_dim);
        for v in a.data_mut() {
            *v = rng.random_range(-1.0..=1.0);
        }
        let lp = self.act_dim as f64 * 0.5f64.ln();
        Ok((a, vec![lp; obs.rows()]))
    }
}

/// A batch of reparameterized samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub actions: Matrix,
    pub log_probs: Vec<f64>,
}

/// Per-row quantities kept for the backward pass.
struct Draw {
    raw: Matrix,
    tape: crate::ndmath::Tape,
    actions: Matrix,
    log_probs: Vec<f64>,
    sigma: Matrix,
    noise: Matrix,
}

#[derive(Debug, Clone)]
pub struct SquashedGaussianPolicy {
    trunk: Mlp,
    act_dim: usize,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl SquashedGaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * act_dim);
        Self::from_trunk(Mlp::new(&sizes, activation, rng)?)
    }

    /// Wrap a network whose output is `[mean | raw log-std]`.
    pub fn from_trunk(trunk: Mlp) -> Result<Self> {
        let out = trunk.output_dim();
        if out == 0 || out % 2 != 0 {
            return Err(Error::shape("policy trunk output", "2·act_dim", out.to_string()));
        }
        Ok(Self {
            act_dim: out / 2,
            trunk,
            log_std_min: -5.0,
            log_std_max: 2.0,
        })
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    fn log_std(&self, raw: f64) -> (f64, f64) {
        let half = 0.5 * (self.log_std_max - self.log_std_min);
        let t = raw.tanh();
        (self.log_std_min + half * (t + 1.0), half * (1.0 - t * t))
    }

    /// `tanh(mean)`, the action used for evaluation.
    pub fn deterministic(&self, obs: &Matrix) -> Result<Matrix> {
        let out = self.trunk.forward(obs)?;
        Ok(out.cols_range(0, self.act_dim).map(f64::tanh))
    }

    fn draw(&self, obs: &Matrix, noise: &Matrix) -> Result<Draw> {
        let d = self.act_dim;
        if noise.shape() != (obs.rows(), d) {
            return Err(Error::shape(
                "policy noise",
                format!("{}x{}", obs.rows(), d),
                format!("{:?}", noise.shape()),
            ));
        }
        let (raw, tape) = self.trunk.forward_with_tape(obs)?;
        let b = obs.rows();
        let mut actions = Matrix::zeros(b, d);
        let mut sigma = Matrix::zeros(b, d);
        let mut log_probs = vec![0.0; b];
        for r in 0..b {
            let mut lp = 0.0;
            for k in 0..d {
                let m = raw.get(r, k);
                let (ls, _) = self.log_std(raw.get(r, d + k));
                let s = ls.exp();
                let xi = noise.get(r, k);
                let u = m + s * xi;
                actions.set(r, k, u.tanh());
                sigma.set(r, k, s);
                lp += -0.5 * xi * xi - ls - HALF_LN_2PI - 2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u));
            }
            log_probs[r] = lp;
        }
        Ok(Draw {
            raw,
            tape,
            actions,
            log_probs,
            sigma,
            noise: noise.clone(),
        })
    }

    /// Reparameterized sample `a = tanh(μ + σ·ξ)` for given standard normal `ξ`.
    pub fn sample_with_noise(&self, obs: &Matrix, noise: &Matrix) -> Result<PolicySample> {
        let d = self.draw(obs, noise)?;
        Ok(PolicySample {
            actions: d.actions,
            log_probs: d.log_probs,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &Matrix, rng: &mut R) -> Result<PolicySample> {
        let noise = standard_normal(obs.rows(), self.act_dim, rng);
        self.sample_with_noise(obs, &noise)
    }

    /// Deterministic function of `(obs, seed)`.
    pub fn sample_seeded(&self, obs: &Matrix, seed: u64) -> Result<PolicySample> {
        self.sample(obs, &mut rng::Rng::seed_from_u64(seed))
    }

    /// Log-density of given actions in `(-1, 1)^d`.
    pub fn log_prob(&self, obs: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        let d = self.act_dim;
        if actions.shape() != (obs.rows(), d) {
            return Err(Error::shape(
                "policy log_prob actions",
                format!("{}x{}", obs.rows(), d),
                format!("{:?}", actions.shape()),
            ));
        }
        let raw = self.trunk.forward(obs)?;
        let mut out = Vec::with_capacity(obs.rows());
        for r in 0..obs.rows() {
            let mut lp = 0.0;
            for k in 0..d {
                let a = actions.get(r, k);
                if !(a > -1.0 && a < 1.0) {
                    return Err(Error::Data(format!("action {a} outside (-1, 1)")));
                }
                let u = a.atanh();
                let (ls, _) = self.log_std(raw.get(r, d + k));
                let xi = (u - raw.get(r, k)) / ls.exp();
                lp += -0.5 * xi * xi - ls - HALF_LN_2PI - 2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u));
            }
            out.push(lp);
        }
        Ok(out)
    }
}

impl ActionSource for SquashedGaussianPolicy {
    fn act_dim(&self) -> usize {
        self.act_dim
    }

    fn sample_actions(&self, obs: &Matrix, rng: &mut dyn RngCore) -> Result<(Matrix, Vec<f64>)> {
        let s = self.sample(obs, rng)?;
        Ok((s.actions, s.log_probs))
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.sample(StandardNormal);
    }
    m
}

#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub value: f64,
    pub grads: GradBundle,
    pub mean_log_prob: f64,
    pub mean_q: f64,
}

/// `mean(temp·log π(a|s) − min_i Q_i(s, a))` with `a` reparameterized by `noise`.
pub fn actor_loss(
    policy: &SquashedGaussianPolicy,
    critics: &CriticPair,
    obs: &Matrix,
    noise: &Matrix,
    temperature: f64,
) -> Result<ActorLoss> {
    let b = obs.rows();
    if b == 0 {
        return Err(Error::Data("actor loss on an empty batch".into()));
    }
    let d = policy.act_dim;
    let obs_dim = obs.cols();
    let draw = policy.draw(obs, noise)?;
    let x = obs.hcat(&draw.actions)?;
    let (q0, t0) = critics.q[0].forward_with_tape(&x)?;
    let (q1, t1) = critics.q[1].forward_with_tape(&x)?;
    let inv_b = 1.0 / b as f64;

    let mut up0 = Matrix::zeros(b, 1);
    let mut up1 = Matrix::zeros(b, 1);
    let mut sum_q = 0.0;
    for r in 0..b {
        let (a, c) = (q0.get(r, 0), q1.get(r, 0));
        if a <= c {
            up0.set(r, 0, -inv_b);
            sum_q += a;
        } else {
            up1.set(r, 0, -inv_b);
            sum_q += c;
        }
    }
    let g0 = critics.q[0].backward_tape(&t0, &up0)?.input_grad;
    let g1 = critics.q[1].backward_tape(&t1, &up1)?.input_grad;

    let mut up = Matrix::zeros(b, 2 * d);
    for r in 0..b {
        for k in 0..d {
            let a = draw.actions.get(r, k);
            let s = draw.sigma.get(r, k);
            let xi = draw.noise.get(r, k);
            let (_, dls) = policy.log_std(draw.raw.get(r, d + k));
            let g_a = g0.get(r, obs_dim + k) + g1.get(r, obs_dim + k);
            let g_u = g_a * (1.0 - a * a) + temperature * inv_b * 2.0 * a;
            let g_ls = g_u * s * xi - temperature * inv_b;
            up.set(r, k, g_u);
            up.set(r, d + k, g_ls * dls);
        }
    }
    let grads = policy.trunk.backward_tape(&draw.tape, &up)?.grads;
    let mean_log_prob = draw.log_probs.iter().sum::<f64>() * inv_b;
    let mean_q = sum_q * inv_b;
    let value = temperature * mean_log_prob - mean_q;
    if !value.is_finite() {
        return Err(Error::NonFinite("actor loss".into()));
    }
    Ok(ActorLoss {
        value,
        grads,
        mean_log_prob,
        mean_q,
    })
}

/// Entropy temperature `exp(log_temp)`, optionally tuned toward a target
/// entropy by minimizing `−log_temp·(log π + target)`.
#[derive(Debug, Clone)]
pub struct EntropyTemp {
    log_temp: Vec<Matrix>,
    pub target_entropy: f64,
    pub auto_tune: bool,
    adam: AdamState,
}

impl EntropyTemp {
    pub fn new(initial: f64, target_entropy: f64, auto_tune: bool, lr: f64) -> Result<Self> {
        if !(initial > 0.0) {
            return Err(Error::Config(format!("initial temperature must be > 0, got {initial}")));
        }
        let log_temp = vec![Matrix::filled(1, 1, initial.ln())];
        let adam = AdamState::new(&log_temp, lr);
        Ok(Self {
            log_temp,
            target_entropy,
            auto_tune,
            adam,
        })
    }

    pub fn value(&self) -> f64 {
        self.log_temp[0].get(0, 0).exp()
    }

    pub fn log_value(&self) -> f64 {
        self.log_temp[0].get(0, 0)
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub(crate) fn restore(&mut self, log_value: f64, adam: AdamState) {
        self.log_temp[0].set(0, 0, log_value);
        self.adam = adam;
    }

    /// Gradient of the temperature loss with respect to `log_temp`.
    pub fn grad(&self, mean_log_prob: f64) -> f64 {
        -(mean_log_prob + self.target_entropy)
    }

    /// One optimizer step. No-op when tuning is off.
    pub fn update(&mut self, mean_log_prob: f64) -> Result<()> {
        if !self.auto_tune {
            return Ok(());
        }
        let g = GradBundle::new(vec![Matrix::filled(1, 1, self.grad(mean_log_prob))]);
        self.adam.step(&mut self.log_temp, &g)
    }
}
