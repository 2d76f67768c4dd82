use std::io::Write;
use std::path::Path;

use crate::critics::LossTerms;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Offline,
    Online,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Offline => "offline",
            Phase::Online => "online",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "offline" => Ok(Phase::Offline),
            "online" => Ok(Phase::Online),
            other => Err(Error::Format(format!("unknown phase `{other}`"))),
        }
    }
}

/// Loss components averaged over the updates since the previous row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossWindow {
    pub updates: u64,
    pub td: f64,
    pub conservative: f64,
    pub rank_succ: f64,
    pub rank_chain: f64,
    pub rank_fail: f64,
    pub actor: f64,
    pub q_data: f64,
    pub offline_fraction: f64,
}

impl LossWindow {
    pub fn add(&mut self, terms: &LossTerms, actor: f64, offline_fraction: f64) {
        self.updates += 1;
        self.td += terms.td;
        self.conservative += terms.conservative;
        self.rank_succ += terms.rank_succ;
        self.rank_chain += terms.rank_chain;
        self.rank_fail += terms.rank_fail;
        self.actor += actor;
        self.q_data += terms.q_data_mean;
        self.offline_fraction += offline_fraction;
    }

    /// Per-update means (all zero for an empty window).
    pub fn means(&self) -> LossWindow {
        if self.updates == 0 {
            return LossWindow::default();
        }
        let n = self.updates as f64;
        LossWindow {
            updates: self.updates,
            td: self.td / n,
            conservative: self.conservative / n,
            rank_succ: self.rank_succ / n,
            rank_chain: self.rank_chain / n,
            rank_fail: self.rank_fail / n,
            actor: self.actor / n,
            q_data: self.q_data / n,
            offline_fraction: self.offline_fraction / n,
        }
    }

    pub(crate) fn to_vec(&self) -> Vec<f64> {
        vec![
            self.updates as f64,
            self.td,
            self.conservative,
            self.rank_succ,
            self.rank_chain,
            self.rank_fail,
            self.actor,
            self.q_data,
            self.offline_fraction,
        ]
    }

    pub(crate) fn from_slice(v: &[f64]) -> Self {
        LossWindow {
            updates: v[0] as u64,
            td: v[1],
            conservative: v[2],
            rank_succ: v[3],
            rank_chain: v[4],
            rank_fail: v[5],
            actor: v[6],
            q_data: v[7],
            offline_fraction: v[8],
        }
    }
}

/// One evaluation row.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub phase: Phase,
    /// Offline gradient steps plus online environment steps so far.
    pub step: u64,
    pub offline_steps: u64,
    pub env_steps: u64,
    pub grad_steps: u64,
    pub episodes: u64,
    pub success_rate: f64,
    pub avg_traj_len: f64,
    pub losses: LossWindow,
    pub temperature: f64,
    pub alpha_prime: f64,
    pub dqda_max: f64,
    pub dqda_std: f64,
}

pub const RECORD_COLUMNS: &[&str] = &[
    "phase",
    "step",
    "offline_steps",
    "env_steps",
    "grad_steps",
    "episodes",
    "success_rate",
    "avg_traj_len",
    "updates_in_window",
    "loss_td",
    "loss_conservative",
    "loss_rank_succ",
    "loss_rank_chain",
    "loss_rank_fail",
    "loss_actor",
    "q_data_mean",
    "offline_fraction",
    "temperature",
    "alpha_prime",
    "dqda_max",
    "dqda_std",
];

/// Evaluation rows of one run, serialized with a fixed column order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RecordRow>,
}

impl RunRecord {
    pub fn push(&mut self, row: RecordRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.step < last.step {
                return Err(Error::State(format!("record step went backwards: {} after {}", row.step, last.step)));
            }
        }
        if !(0.0..=1.0).contains(&row.success_rate) {
            return Err(Error::State(format!("success rate {} outside [0, 1]", row.success_rate)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn last(&self) -> Option<&RecordRow> {
        self.rows.last()
    }

    pub fn final_success(&self) -> Option<f64> {
        self.rows.last().map(|r| r.success_rate)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(RECORD_COLUMNS)?;
        for r in &self.rows {
            let l = &r.losses;
            out.write_record([
                r.phase.name().to_string(),
                r.step.to_string(),
                r.offline_steps.to_string(),
                r.env_steps.to_string(),
                r.grad_steps.to_string(),
                r.episodes.to_string(),
                r.success_rate.to_string(),
                r.avg_traj_len.to_string(),
                l.updates.to_string(),
                l.td.to_string(),
                l.conservative.to_string(),
                l.rank_succ.to_string(),
                l.rank_chain.to_string(),
                l.rank_fail.to_string(),
                l.actor.to_string(),
                l.q_data.to_string(),
                l.offline_fraction.to_string(),
                r.temperature.to_string(),
                r.alpha_prime.to_string(),
                r.dqda_max.to_string(),
                r.dqda_std.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header = rd.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != RECORD_COLUMNS {
            return Err(Error::Format("unexpected run record header".into()));
        }
        let mut rec = RunRecord::default();
        for row in rd.records() {
            let row = row?;
            let f = |i: usize| -> Result<f64> {
                row[i].parse::<f64>().map_err(|e| Error::Format(format!("column {}: {e}", RECORD_COLUMNS[i])))
            };
            let u = |i: usize| -> Result<u64> {
                row[i].parse::<u64>().map_err(|e| Error::Format(format!("column {}: {e}", RECORD_COLUMNS[i])))
            };
            rec.rows.push(RecordRow {
                phase: Phase::parse(&row[0])?,
                step: u(1)?,
                offline_steps: u(2)?,
                env_steps: u(3)?,
                grad_steps: u(4)?,
                episodes: u(5)?,
                success_rate: f(6)?,
                avg_traj_len: f(7)?,
                losses: LossWindow {
                    updates: u(8)?,
                    td: f(9)?,
                    conservative: f(10)?,
                    rank_succ: f(11)?,
                    rank_chain: f(12)?,
                    rank_fail: f(13)?,
                    actor: f(14)?,
                    q_data: f(15)?,
                    offline_fraction: f(16)?,
                },
                temperature: f(17)?,
                alpha_prime: f(18)?,
                dqda_max: f(19)?,
                dqda_std: f(20)?,
            });
        }
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, sr: f64) -> RecordRow {
        RecordRow {
            phase: Phase::Online,
            step,
            offline_steps: 0,
            env_steps: step,
            grad_steps: step,
            episodes: 1,
            success_rate: sr,
            avg_traj_len: 12.5,
            losses: LossWindow {
                updates: 3,
                td: 0.1,
                ..Default::default()
            },
            temperature: 0.2,
            alpha_prime: 1.0,
            dqda_max: 0.3,
            dqda_std: 0.01,
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut r = RunRecord::default();
        r.push(row(10, 0.5)).unwrap();
        r.push(row(20, 1.0)).unwrap();
        let text = r.to_csv_string().unwrap();
        assert!(text.starts_with("phase,step,offline_steps"));
        assert_eq!(RunRecord::from_csv_str(&text).unwrap(), r);
    }

    #[test]
    fn push_rejects_bad_rows() {
        let mut r = RunRecord::default();
        r.push(row(10, 0.5)).unwrap();
        assert!(r.push(row(5, 0.5)).is_err());
        assert!(r.push(row(30, 1.5)).is_err());
    }

    #[test]
    fn window_means() {
        let mut w = LossWindow::default();
        assert_eq!(w.means(), LossWindow::default());
        let t = LossTerms {
            td: 2.0,
            rank_succ: 1.0,
            ..Default::default()
        };
        w.add(&t, -1.0, 1.0);
        w.add(&LossTerms::default(), 1.0, 0.0);
        let m = w.means();
        assert_eq!((m.td, m.rank_succ, m.actor, m.offline_fraction), (1.0, 0.5, 0.0, 0.5));
    }
}
