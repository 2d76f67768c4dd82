//! Transitions, trajectories, the offline dataset with its success/failure
//! partition, the online ring buffer, and the mixing-ratio batch sampler.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::ndmath::{read_f64s, read_u32, read_u64, write_f64s, write_u32, write_u64, Matrix};
use crate::rng::SeedStreams;
use crate::{Error, Result};

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
}

/// `G_t = Σ_{k ≥ t} γ^{k−t} r_k`.
pub fn return_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Ordered steps of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// True iff any reward is positive.
    pub success: bool,
    pub return_to_go: Vec<f64>,
    /// Free-form collector tag (behavior category), 0 when unused.
    pub tag: u8,
}

impl Trajectory {
    pub fn new(transitions: Vec<Transition>, gamma: f64, tag: u8) -> Self {
        let rewards: Vec<f64> = transitions.iter().map(|t| t.reward).collect();
        let success = rewards.iter().any(|&r| r > 0.0);
        let return_to_go = return_to_go(&rewards, gamma);
        Self {
            transitions,
            success,
            return_to_go,
            tag,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Offline,
    Online,
}

/// A transition flattened together with its trajectory-level labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
    pub success: bool,
    /// Discounted return-to-go of this step within its trajectory.
    pub refval: f64,
    pub traj_id: u32,
    pub origin: Origin,
}

fn rows_of(traj: &Trajectory, traj_id: u32, origin: Origin) -> impl Iterator<Item = Row> + '_ {
    traj.transitions
        .iter()
        .zip(&traj.return_to_go)
        .map(move |(t, &g)| Row {
            obs: t.obs.clone(),
            action: t.action.clone(),
            reward: t.reward,
            next_obs: t.next_obs.clone(),
            terminated: t.terminated,
            truncated: t.truncated,
            success: traj.success,
            refval: g,
            traj_id,
            origin,
        })
}

/// Static dataset partitioned into success and failure transitions.
#[derive(Debug, Clone)]
pub struct OfflineDataset {
    gamma: f64,
    obs_dim: usize,
    act_dim: usize,
    trajectories: Vec<Trajectory>,
    rows: Vec<Row>,
    success_idx: Vec<usize>,
    failure_idx: Vec<usize>,
}

const DATA_MAGIC: &[u8; 8] = b"O2ODATA1";

impl OfflineDataset {
    pub fn new(trajectories: Vec<Trajectory>, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        let first = trajectories
            .iter()
            .flat_map(|t| t.transitions.first())
            .next()
            .ok_or_else(|| Error::Data("dataset has no transitions".into()))?;
        let (obs_dim, act_dim) = (first.obs.len(), first.action.len());
        let mut rows = Vec::new();
        for (id, traj) in trajectories.iter().enumerate() {
            for t in &traj.transitions {
                if t.obs.len() != obs_dim || t.next_obs.len() != obs_dim || t.action.len() != act_dim {
                    return Err(Error::Data(format!(
                        "trajectory {id} has inconsistent dimensions"
                    )));
                }
            }
            rows.extend(rows_of(traj, id as u32, Origin::Offline));
        }
        let (success_idx, failure_idx) = (0..rows.len()).partition(|&i| rows[i].success);
        Ok(Self {
            gamma,
            obs_dim,
            act_dim,
            trajectories,
            rows,
            success_idx,
            failure_idx,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Transition indices of success and failure trajectories, in storage order.
    pub fn partition(&self) -> (&[usize], &[usize]) {
        (&self.success_idx, &self.failure_idx)
    }

    pub fn success_fraction(&self) -> f64 {
        self.success_idx.len() as f64 / self.rows.len() as f64
    }

    pub fn episode_success_rate(&self) -> f64 {
        let n = self.trajectories.len().max(1) as f64;
        self.trajectories.iter().filter(|t| t.success).count() as f64 / n
    }

    /// Split by trajectory into (train, held-out), with roughly `heldout_frac`
    /// of trajectories held out. Both halves keep at least one trajectory.
    pub fn split_heldout(&self, heldout_frac: f64, seed: u64) -> Result<(OfflineDataset, OfflineDataset)> {
        let n = self.trajectories.len();
        if n < 2 {
            return Err(Error::Data("need at least two trajectories to split".into()));
        }
        let mut rng = SeedStreams::new(seed).stream("heldout-split");
        let mut held = Vec::new();
        let mut train = Vec::new();
        for t in &self.trajectories {
            if rng.random::<f64>() < heldout_frac {
                held.push(t.clone());
            } else {
                train.push(t.clone());
            }
        }
        if held.is_empty() {
            held.push(train.pop().expect("n >= 2"));
        }
        if train.is_empty() {
            train.push(held.pop().expect("n >= 2"));
        }
        Ok((
            OfflineDataset::new(train, self.gamma)?,
            OfflineDataset::new(held, self.gamma)?,
        ))
    }

    /// Binary `.o2o` layout (little endian):
    ///
    /// ```text
    /// magic b"O2ODATA1"; gamma f64; obs_dim u32; act_dim u32;
    /// n_traj u32; n_transitions u64;
    /// per trajectory: len u32, success u8, tag u8, then len records of
    ///   obs f64×obs_dim, action f64×act_dim, reward f64,
    ///   next_obs f64×obs_dim, flags u8 (bit0 terminated, bit1 truncated),
    ///   return_to_go f64
    /// ```
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DATA_MAGIC)?;
        write_f64s(w, &[self.gamma])?;
        write_u32(w, self.obs_dim as u32)?;
        write_u32(w, self.act_dim as u32)?;
        write_u32(w, self.trajectories.len() as u32)?;
        write_u64(w, self.rows.len() as u64)?;
        for traj in &self.trajectories {
            write_u32(w, traj.len() as u32)?;
            w.write_all(&[traj.success as u8, traj.tag])?;
            for (t, g) in traj.transitions.iter().zip(&traj.return_to_go) {
                write_f64s(w, &t.obs)?;
                write_f64s(w, &t.action)?;
                write_f64s(w, &[t.reward])?;
                write_f64s(w, &t.next_obs)?;
                w.write_all(&[(t.terminated as u8) | ((t.truncated as u8) << 1)])?;
                write_f64s(w, &[*g])?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATA_MAGIC {
            return Err(Error::Format("not an .o2o dataset (bad magic)".into()));
        }
        let gamma = read_f64s(r, 1)?[0];
        let obs_dim = read_u32(r)? as usize;
        let act_dim = read_u32(r)? as usize;
        let n_traj = read_u32(r)? as usize;
        let n_rows = read_u64(r)? as usize;
        let mut trajectories = Vec::with_capacity(n_traj);
        let mut seen = 0usize;
        for _ in 0..n_traj {
            let len = read_u32(r)? as usize;
            let mut hdr = [0u8; 2];
            r.read_exact(&mut hdr)?;
            let mut transitions = Vec::with_capacity(len);
            let mut rtg = Vec::with_capacity(len);
            for _ in 0..len {
                let obs = read_f64s(r, obs_dim)?;
                let action = read_f64s(r, act_dim)?;
                let reward = read_f64s(r, 1)?[0];
                let next_obs = read_f64s(r, obs_dim)?;
                let mut flags = [0u8; 1];
                r.read_exact(&mut flags)?;
                rtg.push(read_f64s(r, 1)?[0]);
                transitions.push(Transition {
                    obs,
                    action,
                    reward,
                    next_obs,
                    terminated: flags[0] & 1 != 0,
                    truncated: flags[0] & 2 != 0,
                });
            }
            seen += len;
            trajectories.push(Trajectory {
                success: hdr[0] != 0,
                tag: hdr[1],
                transitions,
                return_to_go: rtg,
            });
        }
        if seen != n_rows {
            return Err(Error::Format(format!(
                "header claims {n_rows} transitions, found {seen}"
            )));
        }
        OfflineDataset::new(trajectories, gamma)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }

    /// One CSV row per transition:
    /// `traj_id,step,success,obs_0..,action_0..,reward,next_obs_0..,terminated,truncated,return_to_go`.
    pub fn export_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["traj_id".to_string(), "step".into(), "success".into()];
        header.extend((0..self.obs_dim).map(|i| format!("obs_{i}")));
        header.extend((0..self.act_dim).map(|i| format!("action_{i}")));
        header.push("reward".into());
        header.extend((0..self.obs_dim).map(|i| format!("next_obs_{i}")));
        header.extend(["terminated".into(), "truncated".into(), "return_to_go".into()]);
        out.write_record(&header)?;
        for (id, traj) in self.trajectories.iter().enumerate() {
            for (step, (t, g)) in traj.transitions.iter().zip(&traj.return_to_go).enumerate() {
                let mut rec = vec![id.to_string(), step.to_string(), (traj.success as u8).to_string()];
                rec.extend(t.obs.iter().map(f64::to_string));
                rec.extend(t.action.iter().map(f64::to_string));
                rec.push(t.reward.to_string());
                rec.extend(t.next_obs.iter().map(f64::to_string));
                rec.push((t.terminated as u8).to_string());
                rec.push((t.truncated as u8).to_string());
                rec.push(g.to_string());
                out.write_record(&rec)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Fixed-capacity FIFO; inserting into a full buffer evicts the oldest entry.
#[derive(Debug, Clone)]
pub struct RingBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
    inserted: u64,
}

impl<T> RingBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring buffer capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            inserted: 0,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_inserted(&self) -> u64 {
        self.inserted
    }

    pub(crate) fn clear_with_count(&mut self, inserted: u64) {
        self.items.clear();
        self.inserted = inserted;
    }

    /// `i`-th oldest element.
    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

/// How offline and online data are combined in a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mixing {
    /// `⌈ρ·B⌉` rows from the offline store, the rest from the online buffer.
    Ratio(f64),
    /// Online rows are appended to one pooled store holding the offline data.
    Pooled,
}

impl Mixing {
    /// `−1` selects pooled mode; anything else must lie in `[0, 1]`.
    pub fn from_ratio(r: f64) -> Result<Self> {
        if r == -1.0 {
            Ok(Mixing::Pooled)
        } else if (0.0..=1.0).contains(&r) {
            Ok(Mixing::Ratio(r))
        } else {
            Err(Error::Config(format!("mixing ratio must be -1 or in [0, 1], got {r}")))
        }
    }

    pub fn as_ratio(self) -> f64 {
        match self {
            Mixing::Ratio(r) => r,
            Mixing::Pooled => -1.0,
        }
    }
}

/// Number of offline rows in a batch of `batch` rows at ratio `ratio`.
pub fn offline_rows(ratio: f64, batch: usize) -> usize {
    // tolerate representation error (0.7·10 = 7.000000000000001)
    let x = ratio * batch as f64;
    let r = x.round();
    let n = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (n as usize).min(batch)
}

/// A training batch with per-row origin and success labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub success: Vec<bool>,
    pub refvals: Vec<f64>,
    pub origin: Vec<Origin>,
    /// Set when a mixed batch had to be drawn entirely offline because the
    /// online buffer was still empty.
    pub offline_fallback: bool,
}

impl Batch {
    pub fn from_rows(rows: &[&Row]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Data("cannot build an empty batch".into()))?;
        let (od, ad) = (first.obs.len(), first.action.len());
        let n = rows.len();
        let mut obs = Vec::with_capacity(n * od);
        let mut actions = Vec::with_capacity(n * ad);
        let mut next_obs = Vec::with_capacity(n * od);
        for r in rows {
            obs.extend_from_slice(&r.obs);
            actions.extend_from_slice(&r.action);
            next_obs.extend_from_slice(&r.next_obs);
        }
        Ok(Self {
            obs: Matrix::from_vec(n, od, obs)?,
            actions: Matrix::from_vec(n, ad, actions)?,
            rewards: rows.iter().map(|r| r.reward).collect(),
            next_obs: Matrix::from_vec(n, od, next_obs)?,
            terminated: rows.iter().map(|r| r.terminated).collect(),
            truncated: rows.iter().map(|r| r.truncated).collect(),
            success: rows.iter().map(|r| r.success).collect(),
            refvals: rows.iter().map(|r| r.refval).collect(),
            origin: rows.iter().map(|r| r.origin).collect(),
            offline_fallback: false,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn offline_count(&self) -> usize {
        self.origin.iter().filter(|o| **o == Origin::Offline).count()
    }
}

/// Draws training batches from an offline store and an online buffer.
#[derive(Debug, Clone)]
pub struct MixedSampler {
    mixing: Mixing,
    offline: Vec<Row>,
    online: RingBuffer<Row>,
    next_traj_id: u32,
}

impl MixedSampler {
    /// In pooled mode the offline rows seed the (single) ring buffer and are
    /// subject to the same oldest-first eviction as online rows.
    pub fn new(offline: Option<&OfflineDataset>, capacity: usize, mixing: Mixing) -> Self {
        let rows: Vec<Row> = offline.map(|d| d.rows().to_vec()).unwrap_or_default();
        let next_traj_id = offline.map_or(0, |d| d.trajectories().len() as u32);
        match mixing {
            Mixing::Pooled => {
                let mut online = RingBuffer::new(capacity);
                for r in rows {
                    online.push(r);
                }
                Self {
                    mixing,
                    offline: Vec::new(),
                    online,
                    next_traj_id,
                }
            }
            Mixing::Ratio(_) => Self {
                mixing,
                offline: rows,
                online: RingBuffer::new(capacity),
                next_traj_id,
            },
        }
    }

    pub fn mixing(&self) -> Mixing {
        self.mixing
    }

    pub fn offline_len(&self) -> usize {
        self.offline.len()
    }

    pub fn online_len(&self) -> usize {
        self.online.len()
    }

    pub fn online_buffer(&self) -> &RingBuffer<Row> {
        &self.online
    }

    pub fn offline_store(&self) -> &[Row] {
        &self.offline
    }

    pub fn next_traj_id(&self) -> u32 {
        self.next_traj_id
    }

    /// Replace the online buffer contents (checkpoint restore).
    pub(crate) fn restore_online(&mut self, rows: Vec<Row>, next_traj_id: u32, inserted: u64) {
        let extra = rows.len() as u64;
        self.online.clear_with_count(inserted.saturating_sub(extra));
        for r in rows {
            self.online.push(r);
        }
        self.next_traj_id = next_traj_id;
    }

    pub fn push_row(&mut self, row: Row) {
        self.online.push(row);
    }

    /// Append a finished online episode (labels and return-to-go are only
    /// known once the episode ends).
    pub fn push_episode(&mut self, traj: &Trajectory) {
        let id = self.next_traj_id;
        self.next_traj_id += 1;
        for row in rows_of(traj, id, Origin::Online) {
            self.online.push(row);
        }
    }

    /// Sample `batch` rows uniformly with replacement within each store.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch> {
        if batch == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        match self.mixing {
            Mixing::Pooled => {
                if self.online.is_empty() {
                    return Err(Error::Data("pooled store is empty".into()));
                }
                let picks: Vec<&Row> = (0..batch)
                    .map(|_| self.online.get(rng.random_range(0..self.online.len())).expect("in range"))
                    .collect();
                Batch::from_rows(&picks)
            }
            Mixing::Ratio(ratio) => sample_split(&self.offline, &self.online, ratio, batch, rng),
        }
    }
}

fn sample_split<R: Rng + ?Sized>(
    offline: &[Row],
    online: &RingBuffer<Row>,
    ratio: f64,
    batch: usize,
    rng: &mut R,
) -> Result<Batch> {
    let mut n_off = offline_rows(ratio, batch);
    let mut fallback = false;
    if n_off < batch && online.is_empty() {
        n_off = batch;
        fallback = true;
    }
    if n_off > 0 && offline.is_empty() {
        if online.is_empty() {
            return Err(Error::Data("both offline and online stores are empty".into()));
        }
        return Err(Error::Data(format!(
            "mixing ratio {ratio} needs offline data but the offline store is empty"
        )));
    }
    let mut picks: Vec<&Row> = Vec::with_capacity(batch);
    for _ in 0..n_off {
        picks.push(&offline[rng.random_range(0..offline.len())]);
    }
    for _ in n_off..batch {
        picks.push(online.get(rng.random_range(0..online.len())).expect("in range"));
    }
    let mut b = Batch::from_rows(&picks)?;
    b.offline_fallback = fallback;
    Ok(b)
}

/// Hybrid-RL sampling: separate stores, 50/50 for the whole run.
pub fn hybrid_sample<R: Rng + ?Sized>(
    offline: &[Row],
    online: &RingBuffer<Row>,
    batch: usize,
    rng: &mut R,
) -> Result<Batch> {
    if batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    sample_split(offline, online, 0.5, batch, rng)
}
