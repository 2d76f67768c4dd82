//! Twin critics and the four critic objectives: plain TD, CQL, Cal-QL and the
//! multi-term pairwise ranking objective (RankQ).
//!
//! Every objective is evaluated through one stacked forward/backward pass per
//! twin: the dataset actions and all sampled action sets are concatenated
//! row-wise, each loss component writes its `∂L/∂Q` into the matching slice
//! of the upstream gradient, and a single backward pass produces the
//! parameter gradients. Randomness (policy samples, uniform samples, negative
//! actions) is drawn up front into [`ObjectiveSamples`], so for fixed samples
//! every loss is a deterministic, differentiable function of the critic
//! parameters.

use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::actor::ActionSource;
use crate::datastore::Batch;
use crate::ndmath::{sigmoid, softplus, Activation, GradBundle, Matrix, Mlp};
use crate::{Error, Result};

/// Pairwise ranking function `sp(q_neg − q_pos) = ln(1 + e^{q_neg − q_pos})`.
#[inline]
pub fn rank_fn(q_pos: f64, q_neg: f64) -> f64 {
    softplus(q_neg - q_pos)
}

/// Two live Q-networks and their Polyak-averaged targets.
#[derive(Debug, Clone)]
pub struct CriticPair {
    pub q: [Mlp; 2],
    pub target: [Mlp; 2],
    pub tau: f64,
}

impl CriticPair {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        activation: Activation,
        tau: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim + act_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let q0 = Mlp::new(&sizes, activation, rng)?;
        let q1 = Mlp::new(&sizes, activation, rng)?;
        Ok(Self::from_nets([q0, q1], tau))
    }

    pub fn from_nets(q: [Mlp; 2], tau: f64) -> Self {
        Self {
            target: q.clone(),
            q,
            tau,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.q[0].input_dim()
    }

    /// `Q_i(s, a)` for every row.
    pub fn q_values(&self, twin: usize, obs: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        Ok(self.q[twin].forward(&obs.hcat(actions)?)?.into_vec())
    }

    /// `min(Q_0, Q_1)` for every row.
    pub fn min_q(&self, obs: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        let x = obs.hcat(actions)?;
        let a = self.q[0].forward(&x)?;
        let b = self.q[1].forward(&x)?;
        Ok(a.data().iter().zip(b.data()).map(|(x, y)| x.min(*y)).collect())
    }

    /// `θ̄ ← (1 − τ)·θ̄ + τ·θ` for both twins.
    pub fn polyak_update(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("polyak rate must lie in (0, 1], got {tau}")));
        }
        for (t, q) in self.target.iter_mut().zip(&self.q) {
            t.soft_update_from(q, tau)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Td,
    Cql,
    CalQl,
    RankQ,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Td => "td",
            ObjectiveKind::Cql => "cql",
            ObjectiveKind::CalQl => "calql",
            ObjectiveKind::RankQ => "rankq",
        }
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "td" => Ok(ObjectiveKind::Td),
            "cql" => Ok(ObjectiveKind::Cql),
            "calql" | "cal-ql" => Ok(ObjectiveKind::CalQl),
            "rankq" => Ok(ObjectiveKind::RankQ),
            other => Err(Error::Config(format!("unknown critic objective `{other}`"))),
        }
    }
}

/// How `E_{a~π}[Q(s, a)]` is estimated in the conservative regularizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Importance-weighted log-sum-exp over the pooled policy and uniform
    /// samples, normalized so that a constant Q maps to itself.
    LogSumExp,
    /// Plain average over the policy samples.
    MeanPolicy,
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lse" | "logsumexp" => Ok(Estimator::LogSumExp),
            "mean-policy" => Ok(Estimator::MeanPolicy),
            other => Err(Error::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::LogSumExp => "lse",
            Estimator::MeanPolicy => "mean-policy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticObjectiveConfig {
    pub kind: ObjectiveKind,
    /// CQL / Cal-QL regularizer weight.
    pub alpha: f64,
    pub use_lagrange: bool,
    pub target_action_gap: f64,
    pub n_policy_actions: usize,
    pub n_random_actions: usize,
    pub estimator: Estimator,
    /// Weight of the success-row ranking terms.
    pub alpha0: f64,
    /// Weight of the failure-row ranking term.
    pub alpha1: f64,
    pub sigma: f64,
    pub double_sigma: bool,
    pub no_permuted: bool,
    pub no_chain: bool,
    /// Rank failure actions above noisy instead of random actions.
    pub fail_vs_noisy: bool,
    pub gamma: f64,
}

impl Default for CriticObjectiveConfig {
    fn default() -> Self {
        Self {
            kind: ObjectiveKind::Td,
            alpha: 1.0,
            use_lagrange: false,
            target_action_gap: 0.8,
            n_policy_actions: 10,
            n_random_actions: 10,
            estimator: Estimator::LogSumExp,
            alpha0: 1.0,
            alpha1: 1.0,
            sigma: 0.15,
            double_sigma: false,
            no_permuted: false,
            no_chain: false,
            fail_vs_noisy: false,
            gamma: 0.99,
        }
    }
}

impl CriticObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(0.0..=1.0).contains(&self.gamma) {
            errs.push(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        match self.kind {
            ObjectiveKind::Cql | ObjectiveKind::CalQl => {
                if !(self.alpha > 0.0) {
                    errs.push(format!("alpha must be > 0, got {}", self.alpha));
                }
                if self.n_policy_actions == 0 {
                    errs.push("n_policy_actions must be >= 1".into());
                }
                if self.n_random_actions == 0 && self.estimator == Estimator::LogSumExp {
                    errs.push("n_random_actions must be >= 1".into());
                }
            }
            ObjectiveKind::RankQ => {
                if !(self.alpha0 > 0.0) || !(self.alpha1 > 0.0) {
                    errs.push(format!(
                        "alpha0 and alpha1 must be > 0, got {} and {}",
                        self.alpha0, self.alpha1
                    ));
                }
                if !(self.sigma > 0.0) {
                    errs.push(format!("sigma must be > 0, got {}", self.sigma));
                }
            }
            ObjectiveKind::Td => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    /// Enable the ablations named in a comma list (`none` or empty clears them).
    pub fn set_ablations(&mut self, list: &str) -> Result<()> {
        let (mut ds, mut np, mut nc) = (false, false, false);
        for part in list.split(',').map(str::trim).filter(|p| !p.is_empty() && *p != "none") {
            match part {
                "double_sigma" => ds = true,
                "no_permuted" => np = true,
                "no_chain" => nc = true,
                other => return Err(Error::Config(format!("unknown ablation `{other}`"))),
            }
        }
        self.double_sigma = ds;
        self.no_permuted = np;
        self.no_chain = nc;
        Ok(())
    }

    /// Active ablations as a comma list, `none` if there are none.
    pub fn ablation_list(&self) -> String {
        let on: Vec<&str> = [
            (self.double_sigma, "double_sigma"),
            (self.no_permuted, "no_permuted"),
            (self.no_chain, "no_chain"),
        ]
        .iter()
        .filter(|p| p.0)
        .map(|p| p.1)
        .collect();
        if on.is_empty() {
            "none".into()
        } else {
            on.join(",")
        }
    }

    /// Noise scale actually used for negatives (doubled by the ablation flag).
    pub fn effective_sigma(&self) -> f64 {
        if self.double_sigma {
            2.0 * self.sigma
        } else {
            self.sigma
        }
    }
}

/// Self-supervised suboptimal actions for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeActions {
    /// The shared perturbation `σ·ε`.
    pub noise: Matrix,
    pub noisy: Matrix,
    pub very_noisy: Matrix,
    pub random: Matrix,
    pub permuted: Matrix,
}

/// Build negatives for `actions`: `a + σε`, `a + 2σε` (same ε), fresh uniform
/// actions, and the batch cyclically shifted by one row.
pub fn make_negatives<R: Rng + ?Sized>(actions: &Matrix, sigma: f64, rng: &mut R) -> Result<NegativeActions> {
    let (b, d) = actions.shape();
    if b == 0 {
        return Err(Error::Data("cannot build negatives for an empty batch".into()));
    }
    let mut noise = Matrix::zeros(b, d);
    for v in noise.data_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v = sigma * e;
    }
    let mut noisy = actions.clone();
    let mut very_noisy = actions.clone();
    for ((n, vn), e) in noisy
        .data_mut()
        .iter_mut()
        .zip(very_noisy.data_mut())
        .zip(noise.data())
    {
        *n += e;
        *vn += 2.0 * e;
    }
    let mut random = Matrix::zeros(b, d);
    for v in random.data_mut() {
        *v = rng.random_range(-1.0..=1.0);
    }
    let perm: Vec<usize> = (0..b).map(|i| (i + 1) % b).collect();
    Ok(NegativeActions {
        noise,
        noisy,
        very_noisy,
        random,
        permuted: actions.select_rows(&perm),
    })
}

/// Samples used by the conservative regularizers.
#[derive(Debug, Clone)]
pub struct ConservativeSamples {
    pub policy: Vec<Matrix>,
    pub policy_log_probs: Vec<Vec<f64>>,
    pub random: Vec<Matrix>,
}

impl ConservativeSamples {
    pub fn draw<P: ActionSource + ?Sized, R: Rng>(
        policy: &P,
        obs: &Matrix,
        n_policy: usize,
        n_random: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = policy.act_dim();
        let mut out = Self {
            policy: Vec::with_capacity(n_policy),
            policy_log_probs: Vec::with_capacity(n_policy),
            random: Vec::with_capacity(n_random),
        };
        for _ in 0..n_policy {
            let (a, lp) = policy.sample_actions(obs, rng)?;
            out.policy.push(a);
            out.policy_log_probs.push(lp);
        }
        for _ in 0..n_random {
            let mut a = Matrix::zeros(obs.rows(), d);
            for v in a.data_mut() {
                *v = rng.random_range(-1.0..=1.0);
            }
            out.random.push(a);
        }
        Ok(out)
    }
}

/// All randomness one critic update needs.
#[derive(Debug, Clone)]
pub struct ObjectiveSamples {
    /// `a′ ~ π(·|s′)` for the TD target.
    pub next_actions: Matrix,
    pub conservative: Option<ConservativeSamples>,
    pub negatives: Option<NegativeActions>,
}

impl ObjectiveSamples {
    pub fn draw<P: ActionSource + ?Sized, R: Rng>(
        cfg: &CriticObjectiveConfig,
        batch: &Batch,
        policy: &P,
        rng: &mut R,
    ) -> Result<Self> {
        let (next_actions, _) = policy.sample_actions(&batch.next_obs, rng)?;
        let conservative = match cfg.kind {
            ObjectiveKind::Cql | ObjectiveKind::CalQl => {
                let n_random = match cfg.estimator {
                    Estimator::LogSumExp => cfg.n_random_actions,
                    Estimator::MeanPolicy => 0,
                };
                Some(ConservativeSamples::draw(
                    policy,
                    &batch.obs,
                    cfg.n_policy_actions,
                    n_random,
                    rng,
                )?)
            }
            _ => None,
        };
        let negatives = match cfg.kind {
            ObjectiveKind::RankQ => Some(make_negatives(&batch.actions, cfg.effective_sigma(), rng)?),
            _ => None,
        };
        Ok(Self {
            next_actions,
            conservative,
            negatives,
        })
    }
}

/// Per-component loss values (summed over both twins) and instrumentation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTerms {
    pub td: f64,
    pub conservative: f64,
    pub rank_succ: f64,
    pub rank_chain: f64,
    pub rank_fail: f64,
    /// Per twin: mean over rows of `Ê_{a~π}[Q] − Q(s, a_data)` (before `α`).
    pub conservative_gap: [f64; 2],
    pub q_data_mean: f64,
    pub q_policy_mean: f64,
    /// Batched critic evaluations per twin beyond the dataset action.
    pub extra_evals: usize,
}

#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub total: f64,
    pub grads: [GradBundle; 2],
    pub terms: LossTerms,
}

/// Which pieces of the objective to include.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Components {
    pub td: bool,
    pub conservative: Option<ConservativeMode>,
    pub ranking: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservativeMode {
    pub calibrated: bool,
    /// Effective multiplier (α, or α·α′ under the Lagrange variant).
    pub weight: f64,
    /// Subtracted from the gap before weighting (Lagrange variant), else 0.
    pub gap_offset: f64,
}

impl Components {
    /// Full objective for `cfg.kind`, with conservative weight `weight`.
    pub fn for_objective(cfg: &CriticObjectiveConfig, weight: f64) -> Self {
        let gap_offset = if cfg.use_lagrange { cfg.target_action_gap } else { 0.0 };
        match cfg.kind {
            ObjectiveKind::Td => Self {
                td: true,
                conservative: None,
                ranking: false,
            },
            ObjectiveKind::Cql | ObjectiveKind::CalQl => Self {
                td: true,
                conservative: Some(ConservativeMode {
                    calibrated: cfg.kind == ObjectiveKind::CalQl,
                    weight,
                    gap_offset,
                }),
                ranking: false,
            },
            ObjectiveKind::RankQ => Self {
                td: true,
                conservative: None,
                ranking: true,
            },
        }
    }
}

/// `r + γ·(1 − terminated)·min_j Q̄_j(s′, a′)`. Truncation keeps the bootstrap.
pub fn td_targets(critics: &CriticPair, batch: &Batch, next_actions: &Matrix, gamma: f64) -> Result<Vec<f64>> {
    let x = batch.next_obs.hcat(next_actions)?;
    let t0 = critics.target[0].forward(&x)?;
    let t1 = critics.target[1].forward(&x)?;
    let mut y = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let boot = if batch.terminated[i] {
            0.0
        } else {
            t0.get(i, 0).min(t1.get(i, 0))
        };
        let v = batch.rewards[i] + gamma * boot;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("TD target at row {i}")));
        }
        y.push(v);
    }
    Ok(y)
}

fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Evaluate the selected components of the critic objective.
pub fn evaluate_objective(
    critics: &CriticPair,
    batch: &Batch,
    samples: &ObjectiveSamples,
    cfg: &CriticObjectiveConfig,
    comps: Components,
) -> Result<CriticLoss> {
    let b = batch.len();
    if b == 0 {
        return Err(Error::Data("critic objective on an empty batch".into()));
    }
    let act_dim = batch.actions.cols();

    // action sets, stacked row-wise: [data, conservative..., ranking...]
    let mut sets: Vec<&Matrix> = vec![&batch.actions];
    let mut cons_policy = 0..0;
    let mut cons_random = 0..0;
    if comps.conservative.is_some() {
        let cs = samples
            .conservative
            .as_ref()
            .ok_or_else(|| Error::State("conservative regularizer needs policy/random samples".into()))?;
        let s = sets.len();
        sets.extend(cs.policy.iter());
        cons_policy = s..sets.len();
        let s = sets.len();
        sets.extend(cs.random.iter());
        cons_random = s..sets.len();
        if cons_policy.is_empty() {
            return Err(Error::Config("n_policy_actions must be >= 1".into()));
        }
    }
    struct RankSets {
        noisy: usize,
        very_noisy: usize,
        random: usize,
        permuted: Option<usize>,
    }
    let mut rank = None;
    if comps.ranking {
        let neg = samples
            .negatives
            .as_ref()
            .ok_or_else(|| Error::State("ranking objective needs negative actions".into()))?;
        let base = sets.len();
        sets.push(&neg.noisy);
        sets.push(&neg.very_noisy);
        sets.push(&neg.random);
        let permuted = if cfg.no_permuted {
            None
        } else {
            sets.push(&neg.permuted);
            Some(base + 3)
        };
        rank = Some(RankSets {
            noisy: base,
            very_noisy: base + 1,
            random: base + 2,
            permuted,
        });
    }
    for s in &sets {
        if s.shape() != (b, act_dim) {
            return Err(Error::shape("critic objective action set", format!("{b}x{act_dim}"), format!("{:?}", s.shape())));
        }
    }
    let n_sets = sets.len();
    let obs_tiled = batch.obs.tile_rows(n_sets);
    let acts = Matrix::vcat(&sets)?;
    let input = obs_tiled.hcat(&acts)?;

    let targets = if comps.td {
        Some(td_targets(critics, batch, &samples.next_actions, cfg.gamma)?)
    } else {
        None
    };

    let log_uniform = act_dim as f64 * 0.5f64.ln();
    let inv_b = 1.0 / b as f64;
    let mut terms = LossTerms {
        extra_evals: n_sets - 1,
        ..LossTerms::default()
    };
    let mut grads: Vec<GradBundle> = Vec::with_capacity(2);

    for twin in 0..2 {
        let net = &critics.q[twin];
        let (q, tape) = net.forward_with_tape(&input)?;
        let q = q.data();
        let at = |set: usize, row: usize| q[set * b + row];
        let mut up = vec![0.0; n_sets * b];

        if twin == 0 {
            terms.q_data_mean = (0..b).map(|r| at(0, r)).sum::<f64>() * inv_b;
            if !cons_policy.is_empty() {
                let n = cons_policy.len() as f64;
                terms.q_policy_mean = cons_policy
                    .clone()
                    .map(|s| (0..b).map(|r| at(s, r)).sum::<f64>())
                    .sum::<f64>()
                    * inv_b
                    / n;
            }
        }

        if let Some(y) = &targets {
            for r in 0..b {
                let d = at(0, r) - y[r];
                terms.td += 0.5 * d * d * inv_b;
                up[r] += d * inv_b;
            }
        }

        if let Some(mode) = comps.conservative {
            let cs = samples.conservative.as_ref().expect("checked above");
            let mut gap_sum = 0.0;
            let mut vals = Vec::with_capacity(cons_policy.len() + cons_random.len());
            let mut logw = Vec::with_capacity(vals.capacity());
            for r in 0..b {
                vals.clear();
                logw.clear();
                // (value, set index, gradient gate)
                let mut gates = Vec::with_capacity(vals.capacity());
                for (k, s) in cons_policy.clone().enumerate() {
                    let qv = at(s, r);
                    let (v, gate) = if mode.calibrated && qv < batch.refvals[r] {
                        (batch.refvals[r], 0.0)
                    } else {
                        (qv, 1.0)
                    };
                    vals.push(v);
                    logw.push(-cs.policy_log_probs[k][r]);
                    gates.push((s, gate));
                }
                if cfg.estimator == Estimator::LogSumExp {
                    for s in cons_random.clone() {
                        vals.push(at(s, r));
                        logw.push(-log_uniform);
                        gates.push((s, 1.0));
                    }
                }
                let est = match cfg.estimator {
                    Estimator::LogSumExp => {
                        let shifted: Vec<f64> = vals.iter().zip(&logw).map(|(v, w)| v + w).collect();
                        let lse = logsumexp(&shifted);
                        let est = lse - logsumexp(&logw);
                        for ((s, gate), sv) in gates.iter().zip(&shifted) {
                            let w = (sv - lse).exp();
                            up[s * b + r] += mode.weight * gate * w * inv_b;
                        }
                        est
                    }
                    Estimator::MeanPolicy => {
                        let n = vals.len() as f64;
                        for (s, gate) in &gates {
                            up[s * b + r] += mode.weight * gate / n * inv_b;
                        }
                        vals.iter().sum::<f64>() / n
                    }
                };
                if !est.is_finite() {
                    return Err(Error::NonFinite(format!("conservative estimate at row {r}")));
                }
                gap_sum += est - at(0, r);
                up[r] -= mode.weight * inv_b;
            }
            let gap = gap_sum * inv_b;
            terms.conservative_gap[twin] = gap;
            terms.conservative += mode.weight * (gap - mode.gap_offset);
        }

        if let Some(rs) = &rank {
            let add_pair = |up: &mut [f64], pos: usize, neg: usize, r: usize, w: f64| -> f64 {
                let (qp, qn) = (at(pos, r), at(neg, r));
                let g = sigmoid(qn - qp) * w * inv_b;
                up[neg * b + r] += g;
                up[pos * b + r] -= g;
                w * rank_fn(qp, qn) * inv_b
            };
            for r in 0..b {
                if batch.success[r] {
                    let w = cfg.alpha0;
                    let mut succ = add_pair(&mut up, 0, rs.noisy, r, w);
                    succ += add_pair(&mut up, 0, rs.very_noisy, r, w);
                    succ += add_pair(&mut up, 0, rs.random, r, w);
                    if let Some(p) = rs.permuted {
                        succ += add_pair(&mut up, 0, p, r, w);
                    }
                    terms.rank_succ += succ;
                    if !cfg.no_chain {
                        let mut chain = add_pair(&mut up, rs.noisy, rs.very_noisy, r, w);
                        chain += add_pair(&mut up, rs.very_noisy, rs.random, r, w);
                        terms.rank_chain += chain;
                    }
                } else {
                    let neg = if cfg.fail_vs_noisy { rs.noisy } else { rs.random };
                    terms.rank_fail += add_pair(&mut up, 0, neg, r, cfg.alpha1);
                }
            }
        }

        let upstream = Matrix::from_vec(n_sets * b, 1, up)?;
        let bp = net.backward_tape(&tape, &upstream)?;
        grads.push(bp.grads);
    }

    let total = terms.td + terms.conservative + terms.rank_succ + terms.rank_chain + terms.rank_fail;
    if !total.is_finite() {
        return Err(Error::NonFinite("critic loss".into()));
    }
    let g1 = grads.pop().expect("two twins");
    let g0 = grads.pop().expect("two twins");
    Ok(CriticLoss {
        total,
        grads: [g0, g1],
        terms,
    })
}

/// `½·mean (Q_i(s,a) − y)²` summed over both twins.
pub fn td_loss(critics: &CriticPair, batch: &Batch, next_actions: &Matrix, gamma: f64) -> Result<CriticLoss> {
    let cfg = CriticObjectiveConfig {
        gamma,
        ..CriticObjectiveConfig::default()
    };
    let samples = ObjectiveSamples {
        next_actions: next_actions.clone(),
        conservative: None,
        negatives: None,
    };
    evaluate_objective(
        critics,
        batch,
        &samples,
        &cfg,
        Components {
            td: true,
            conservative: None,
            ranking: false,
        },
    )
}

fn conservative_only(
    critics: &CriticPair,
    batch: &Batch,
    samples: &ConservativeSamples,
    cfg: &CriticObjectiveConfig,
    calibrated: bool,
) -> Result<CriticLoss> {
    if !(cfg.alpha > 0.0) {
        return Err(Error::Config(format!("alpha must be > 0, got {}", cfg.alpha)));
    }
    let s = ObjectiveSamples {
        next_actions: batch.actions.clone(),
        conservative: Some(samples.clone()),
        negatives: None,
    };
    evaluate_objective(
        critics,
        batch,
        &s,
        cfg,
        Components {
            td: false,
            conservative: Some(ConservativeMode {
                calibrated,
                weight: cfg.alpha,
                gap_offset: 0.0,
            }),
            ranking: false,
        },
    )
}

/// `α·(Ê_{a~π}[Q] − Ê_data[Q])` per twin, summed over twins.
pub fn cql_regularizer(
    critics: &CriticPair,
    batch: &Batch,
    samples: &ConservativeSamples,
    cfg: &CriticObjectiveConfig,
) -> Result<CriticLoss> {
    conservative_only(critics, batch, samples, cfg, false)
}

/// As [`cql_regularizer`] with each policy-sample Q replaced by
/// `max(Q, V^μ(s))`, where `V^μ` is the row's stored return-to-go.
pub fn calql_regularizer(
    critics: &CriticPair,
    batch: &Batch,
    samples: &ConservativeSamples,
    cfg: &CriticObjectiveConfig,
) -> Result<CriticLoss> {
    if batch.refvals.len() != batch.len() || batch.refvals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("Cal-QL needs a finite reference value for every row".into()));
    }
    conservative_only(critics, batch, samples, cfg, true)
}

/// Ranking terms plus TD.
pub fn rankq_loss(
    critics: &CriticPair,
    batch: &Batch,
    next_actions: &Matrix,
    negatives: &NegativeActions,
    cfg: &CriticObjectiveConfig,
) -> Result<CriticLoss> {
    let s = ObjectiveSamples {
        next_actions: next_actions.clone(),
        conservative: None,
        negatives: Some(negatives.clone()),
    };
    evaluate_objective(
        critics,
        batch,
        &s,
        cfg,
        Components {
            td: true,
            conservative: None,
            ranking: true,
        },
    )
}

/// Ranking terms only.
pub fn rankq_terms(
    critics: &CriticPair,
    batch: &Batch,
    negatives: &NegativeActions,
    cfg: &CriticObjectiveConfig,
) -> Result<CriticLoss> {
    let s = ObjectiveSamples {
        next_actions: batch.actions.clone(),
        conservative: None,
        negatives: Some(negatives.clone()),
    };
    evaluate_objective(
        critics,
        batch,
        &s,
        cfg,
        Components {
            td: false,
            conservative: None,
            ranking: true,
        },
    )
}
