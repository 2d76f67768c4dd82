//! Full trainer checkpoint: config, counters, networks, optimizer states,
//! the online buffer, the in-progress episode and the record so far.
//!
//! Layout (little endian): magic `O2OCKPT1`, then length-prefixed sections in
//! the order written by [`save`].

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::TrainConfig;
use super::record::{LossWindow, RunRecord};
use super::run::{Counters, Trainer};
use crate::datastore::{OfflineDataset, Origin, Row, Transition};
use crate::envs::MazeState;
use crate::ndmath::{read_adam, read_f64s, read_u32, read_u64, write_adam, write_f64s, write_u32, write_u64, Mlp};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"O2OCKPT1";

fn write_bytes<W: Write>(w: &mut W, b: &[u8]) -> Result<()> {
    write_u64(w, b.len() as u64)?;
    w.write_all(b)?;
    Ok(())
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let n = read_u64(r)? as usize;
    if n > 1 << 34 {
        return Err(Error::Format("checkpoint section length is implausible".into()));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    String::from_utf8(read_bytes(r)?).map_err(|e| Error::Format(e.to_string()))
}

fn write_vec<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    write_u32(w, v.len() as u32)?;
    write_f64s(w, v)
}

fn read_vec<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = read_u32(r)? as usize;
    read_f64s(r, n)
}

fn write_transition<W: Write>(w: &mut W, t: &Transition) -> Result<()> {
    write_vec(w, &t.obs)?;
    write_vec(w, &t.action)?;
    write_f64s(w, &[t.reward])?;
    write_vec(w, &t.next_obs)?;
    w.write_all(&[t.terminated as u8 | (t.truncated as u8) << 1])?;
    Ok(())
}

fn read_transition<R: Read>(r: &mut R) -> Result<Transition> {
    let obs = read_vec(r)?;
    let action = read_vec(r)?;
    let reward = read_f64s(r, 1)?[0];
    let next_obs = read_vec(r)?;
    let mut f = [0u8];
    r.read_exact(&mut f)?;
    Ok(Transition {
        obs,
        action,
        reward,
        next_obs,
        terminated: f[0] & 1 != 0,
        truncated: f[0] & 2 != 0,
    })
}

fn write_row<W: Write>(w: &mut W, row: &Row) -> Result<()> {
    write_vec(w, &row.obs)?;
    write_vec(w, &row.action)?;
    write_f64s(w, &[row.reward, row.refval])?;
    write_vec(w, &row.next_obs)?;
    let flags = row.terminated as u8
        | (row.truncated as u8) << 1
        | (row.success as u8) << 2
        | ((row.origin == Origin::Online) as u8) << 3;
    w.write_all(&[flags])?;
    write_u32(w, row.traj_id)
}

fn read_row<R: Read>(r: &mut R) -> Result<Row> {
    let obs = read_vec(r)?;
    let action = read_vec(r)?;
    let rr = read_f64s(r, 2)?;
    let next_obs = read_vec(r)?;
    let mut f = [0u8];
    r.read_exact(&mut f)?;
    let f = f[0];
    Ok(Row {
        obs,
        action,
        reward: rr[0],
        next_obs,
        terminated: f & 1 != 0,
        truncated: f & 2 != 0,
        success: f & 4 != 0,
        refval: rr[1],
        traj_id: read_u32(r)?,
        origin: if f & 8 != 0 { Origin::Online } else { Origin::Offline },
    })
}

pub fn save(t: &Trainer, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(std::fs::File::create(&tmp)?);
        write_to(t, &mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_to<W: Write>(t: &Trainer, w: &mut W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    write_bytes(w, t.cfg.to_text().as_bytes())?;
    let c = t.counters;
    for v in [c.offline_done, c.env_steps, c.grad_steps, c.episodes, c.owed_updates, c.evals] {
        write_u64(w, v)?;
    }
    let a = &t.agent;
    a.policy.trunk().write_to(w)?;
    for net in a.critics.q.iter().chain(&a.critics.target) {
        net.write_to(w)?;
    }
    write_adam(w, &a.actor_opt)?;
    write_adam(w, &a.critic_opt[0])?;
    write_adam(w, &a.critic_opt[1])?;
    write_f64s(w, &[a.temp.log_value()])?;
    write_adam(w, a.temp.adam())?;
    write_f64s(w, &[a.log_alpha_prime[0].get(0, 0)])?;
    write_adam(w, &a.dual_opt)?;

    let st = t.env.state();
    write_f64s(w, &[st.pos[0], st.pos[1], st.vel[0], st.vel[1]])?;
    write_u64(w, t.env.steps_taken() as u64)?;
    write_vec(w, &t.obs)?;
    write_u32(w, t.pending.len() as u32)?;
    for tr in &t.pending {
        write_transition(w, tr)?;
    }
    write_f64s(w, &t.window.to_vec())?;

    let buf = t.sampler.online_buffer();
    write_u64(w, buf.len() as u64)?;
    for row in buf.iter() {
        write_row(w, row)?;
    }
    write_u32(w, t.sampler.next_traj_id())?;
    write_u64(w, buf.total_inserted())?;
    write_bytes(w, t.record.to_csv_string()?.as_bytes())?;
    Ok(())
}

/// Config stored in a checkpoint (to locate the dataset before resuming).
pub fn read_config(path: &Path) -> Result<TrainConfig> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_header(&mut r)
}

fn read_header<R: Read>(r: &mut R) -> Result<TrainConfig> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a trainer checkpoint (bad magic)".into()));
    }
    TrainConfig::parse(&read_string(r)?, &[])
}

/// Rebuild a trainer from a checkpoint. `dataset` must be the one the run
/// was started with.
pub fn load(path: &Path, dataset: Option<&OfflineDataset>) -> Result<Trainer> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let cfg = read_header(&mut r)?;
    let mut t = Trainer::new(cfg, dataset)?;
    let v: Vec<u64> = (0..6).map(|_| read_u64(&mut r)).collect::<Result<_>>()?;
    t.counters = Counters {
        offline_done: v[0],
        env_steps: v[1],
        grad_steps: v[2],
        episodes: v[3],
        owed_updates: v[4],
        evals: v[5],
    };
    let shape_check = |old: &Mlp, new: Mlp| -> Result<Mlp> {
        if old.sizes() != new.sizes() {
            return Err(Error::Format("checkpoint network shapes do not match its config".into()));
        }
        Ok(new)
    };
    let a = &mut t.agent;
    let trunk = shape_check(a.policy.trunk(), Mlp::read_from(&mut r)?)?;
    *a.policy.trunk_mut() = trunk;
    for i in 0..2 {
        a.critics.q[i] = shape_check(&a.critics.q[i], Mlp::read_from(&mut r)?)?;
    }
    for i in 0..2 {
        a.critics.target[i] = shape_check(&a.critics.target[i], Mlp::read_from(&mut r)?)?;
    }
    a.actor_opt = read_adam(&mut r)?;
    a.critic_opt[0] = read_adam(&mut r)?;
    a.critic_opt[1] = read_adam(&mut r)?;
    let lt = read_f64s(&mut r, 1)?[0];
    let tadam = read_adam(&mut r)?;
    a.temp.restore(lt, tadam);
    let lap = read_f64s(&mut r, 1)?[0];
    a.log_alpha_prime[0].set(0, 0, lap);
    a.dual_opt = read_adam(&mut r)?;

    let s = read_f64s(&mut r, 4)?;
    let steps = read_u64(&mut r)? as usize;
    t.env.restore(
        MazeState {
            pos: [s[0], s[1]],
            vel: [s[2], s[3]],
        },
        steps,
    );
    t.obs = read_vec(&mut r)?;
    let n = read_u32(&mut r)? as usize;
    t.pending = (0..n).map(|_| read_transition(&mut r)).collect::<Result<_>>()?;
    t.window = LossWindow::from_slice(&read_f64s(&mut r, 9)?);

    let n = read_u64(&mut r)? as usize;
    let rows: Vec<Row> = (0..n).map(|_| read_row(&mut r)).collect::<Result<_>>()?;
    let next_id = read_u32(&mut r)?;
    let inserted = read_u64(&mut r)?;
    t.sampler.restore_online(rows, next_id, inserted);
    t.record = RunRecord::from_csv_str(&read_string(&mut r)?)?;
    Ok(t)
}
