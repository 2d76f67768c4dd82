//! Q-landscape diagnostics: action gradients, 2-D gradient fields,
//! gradient-ascent paths, `|∂Q/∂a|` statistics and ranking accuracies, with
//! CSV emitters and small SVG renderings.

use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;

use crate::critics::make_negatives;
use crate::datastore::Row;
use crate::ndmath::{Matrix, Mlp};
use crate::rng::SeedStreams;
use crate::{Error, Result};

/// Q values and `∂Q/∂a` for each row of `actions` (critic input is `[obs | action]`).
pub fn action_grads(net: &Mlp, obs: &Matrix, actions: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if obs.rows() != actions.rows() {
        return Err(Error::Shape {
            op: "action_grads",
            expected: format!("{} action rows", obs.rows()),
            got: actions.rows().to_string(),
        });
    }
    let x = obs.hcat(actions)?;
    let (q, tape) = net.forward_with_tape(&x)?;
    let bp = net.backward_tape(&tape, &Matrix::filled(q.rows(), 1, 1.0))?;
    let d = obs.cols();
    let g = bp.input_grad.cols_range(d, d + actions.cols());
    Ok((q.into_vec(), g))
}

/// Element-wise maximum and population standard deviation of `|∂Q/∂a|`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DqdaStats {
    pub max: f64,
    pub std: f64,
}

pub fn dqda_stats(net: &Mlp, obs: &Matrix, actions: &Matrix) -> Result<DqdaStats> {
    let (_, g) = action_grads(net, obs, actions)?;
    let mags: Vec<f64> = g.data().iter().map(|v| v.abs()).collect();
    if mags.is_empty() {
        return Err(Error::Data("empty probe batch".into()));
    }
    if mags.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("non-finite action gradient in probe batch".into()));
    }
    let n = mags.len() as f64;
    let mean = mags.iter().sum::<f64>() / n;
    let var = mags.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(DqdaStats {
        max: mags.iter().cloned().fold(0.0, f64::max),
        std: var.sqrt(),
    })
}

/// Statistics for each checkpointed critic over one fixed probe batch.
pub fn dqda_over_training(checkpoints: &[Mlp], obs: &Matrix, actions: &Matrix) -> Result<Vec<DqdaStats>> {
    if checkpoints.is_empty() {
        return Err(Error::Data("need at least one checkpoint".into()));
    }
    checkpoints.iter().map(|n| dqda_stats(n, obs, actions)).collect()
}

/// Q and `∂Q/∂a` over a regular grid on `[-1, 1]²` at one fixed state.
#[derive(Debug, Clone, PartialEq)]
pub struct GradField {
    pub res: usize,
    /// Grid points, `a0` varying fastest.
    pub points: Vec<[f64; 2]>,
    pub q: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
}

impl GradField {
    pub fn max_magnitude(&self) -> f64 {
        self.grad.iter().map(|g| g[0].hypot(g[1])).fold(0.0, f64::max)
    }
}

/// Q and `∂Q/∂a` at one fixed state over batches of 2-D actions.
pub trait Landscape {
    fn eval(&self, acts: &[[f64; 2]]) -> Result<(Vec<f64>, Vec<[f64; 2]>)>;
}

/// A critic network frozen at one state.
#[derive(Debug, Clone, Copy)]
pub struct CriticAt<'a> {
    net: &'a Mlp,
    state: &'a [f64],
}

impl<'a> CriticAt<'a> {
    pub fn new(net: &'a Mlp, state: &'a [f64]) -> Result<Self> {
        if net.input_dim() != state.len() + 2 {
            return Err(Error::Config(format!(
                "gradient fields need a 2-D action space (critic input {} with state dim {})",
                net.input_dim(),
                state.len()
            )));
        }
        Ok(Self { net, state })
    }
}

impl Landscape for CriticAt<'_> {
    fn eval(&self, acts: &[[f64; 2]]) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
        let obs = Matrix::from_rows(&vec![self.state.to_vec(); acts.len()]);
        let (q, g) = action_grads(self.net, &obs, &Matrix::from_rows(acts))?;
        Ok((q, g.iter_rows().map(|r| [r[0], r[1]]).collect()))
    }
}

/// Analytic landscapes given as `a -> (Q, ∂Q/∂a)`.
impl<F: Fn([f64; 2]) -> (f64, [f64; 2])> Landscape for F {
    fn eval(&self, acts: &[[f64; 2]]) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
        Ok(acts.iter().map(|&a| self(a)).unzip())
    }
}

pub fn grad_field<L: Landscape + ?Sized>(land: &L, res: usize) -> Result<GradField> {
    if res < 2 {
        return Err(Error::Config("grid resolution must be at least 2".into()));
    }
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (res - 1) as f64;
    let points: Vec<[f64; 2]> = (0..res * res).map(|k| [coord(k % res), coord(k / res)]).collect();
    let (q, grad) = land.eval(&points)?;
    if grad.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("non-finite value in gradient field".into()));
    }
    Ok(GradField { res, points, q, grad })
}

/// Central-difference `∂Q/∂a` at one action.
pub fn fd_action_grad<L: Landscape + ?Sized>(land: &L, a: [f64; 2], h: f64) -> Result<[f64; 2]> {
    let acts = [[a[0] + h, a[1]], [a[0] - h, a[1]], [a[0], a[1] + h], [a[0], a[1] - h]];
    let (q, _) = land.eval(&acts)?;
    Ok([(q[0] - q[1]) / (2.0 * h), (q[2] - q[3]) / (2.0 * h)])
}

/// Largest relative error between analytic and central-difference (h = 1e-5)
/// gradients at `n` randomly chosen grid points of `field`.
pub fn field_fd_error<L: Landscape + ?Sized>(land: &L, field: &GradField, n: usize, seed: u64) -> Result<f64> {
    use rand::Rng as _;
    let mut rng = SeedStreams::new(seed).stream("field-fd");
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let k = rng.random_range(0..field.points.len());
        let fd = fd_action_grad(land, field.points[k], 1e-5)?;
        let g = field.grad[k];
        let diff = (g[0] - fd[0]).hypot(g[1] - fd[1]);
        let scale = g[0].hypot(g[1]).max(fd[0].hypot(fd[1])).max(1e-8);
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentPath {
    pub start: [f64; 2],
    /// The start followed by every iterate.
    pub steps: Vec<[f64; 2]>,
    pub q: Vec<f64>,
    /// First step index inside the success region, if any.
    pub first_inside: Option<usize>,
    /// Whether the final point is inside the success region.
    pub converged: bool,
}

/// `n` starts evenly spaced on a circle of `radius`, the first on the +a0 axis.
pub fn ring_starts(n: usize, radius: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / n as f64;
            [radius * t.cos(), radius * t.sin()]
        })
        .collect()
}

/// Iterate `a ← clip(a + lr·∂Q/∂a)` from each start. All paths advance
/// together in one batched evaluation per step.
pub fn ascent_paths<L: Landscape + ?Sized>(
    land: &L,
    starts: &[[f64; 2]],
    lr: f64,
    max_steps: usize,
    success: impl Fn([f64; 2]) -> bool,
) -> Result<Vec<AscentPath>> {
    if starts.iter().flatten().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(Error::Config("ascent starts must lie in [-1, 1]²".into()));
    }
    let mut cur = starts.to_vec();
    let mut paths: Vec<AscentPath> = starts
        .iter()
        .map(|&s| AscentPath {
            start: s,
            steps: vec![s],
            q: Vec::with_capacity(max_steps + 1),
            first_inside: None,
            converged: false,
        })
        .collect();
    for step in 0..=max_steps {
        let (q, g) = land.eval(&cur)?;
        for (i, p) in paths.iter_mut().enumerate() {
            p.q.push(q[i]);
            if p.first_inside.is_none() && success(cur[i]) {
                p.first_inside = Some(step);
            }
        }
        if step == max_steps {
            break;
        }
        for (i, a) in cur.iter_mut().enumerate() {
            for j in 0..2 {
                a[j] = (a[j] + lr * g[i][j]).clamp(-1.0, 1.0);
            }
            paths[i].steps.push(*a);
        }
    }
    for p in &mut paths {
        p.converged = success(*p.steps.last().expect("path has a start"));
    }
    Ok(paths)
}

/// Fraction of rows whose dataset action strictly outscores each negative kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingAccuracies {
    pub noisy: f64,
    pub very_noisy: f64,
    pub random: f64,
    pub permuted: f64,
}

impl RankingAccuracies {
    pub fn as_pairs(&self) -> [(&'static str, f64); 4] {
        [
            ("noisy", self.noisy),
            ("very_noisy", self.very_noisy),
            ("random", self.random),
            ("permuted", self.permuted),
        ]
    }

    pub fn min(&self) -> f64 {
        self.as_pairs().iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
    }
}

pub fn ranking_accuracy(net: &Mlp, rows: &[Row], sigma: f64, seed: u64) -> Result<RankingAccuracies> {
    if rows.is_empty() {
        return Err(Error::Data("ranking accuracy needs at least one held-out row".into()));
    }
    let mut rng = SeedStreams::new(seed).stream("ranking-accuracy");
    // Held-out rows arrive in trajectory order, where a one-row shift would pair
    // each action with its own next step. Shuffle so permuted negatives come
    // from unrelated states, as in a training batch.
    let mut order: Vec<&Row> = rows.iter().collect();
    order.shuffle(&mut rng);
    let obs = Matrix::from_rows(&order.iter().map(|r| r.obs.as_slice()).collect::<Vec<_>>());
    let acts = Matrix::from_rows(&order.iter().map(|r| r.action.as_slice()).collect::<Vec<_>>());
    let neg = make_negatives(&acts, sigma, &mut rng)?;
    let q = |a: &Matrix| -> Result<Vec<f64>> { Ok(net.forward(&obs.hcat(a)?)?.into_vec()) };
    let pos = q(&acts)?;
    let frac = |a: &Matrix| -> Result<f64> {
        let qn = q(a)?;
        let wins = pos.iter().zip(&qn).filter(|(p, n)| p > n).count();
        Ok(wins as f64 / rows.len() as f64)
    };
    Ok(RankingAccuracies {
        noisy: frac(&neg.noisy)?,
        very_noisy: frac(&neg.very_noisy)?,
        random: frac(&neg.random)?,
        permuted: frac(&neg.permuted)?,
    })
}

pub fn write_field_csv<W: Write>(field: &GradField, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["a0", "a1", "q", "dq_da0", "dq_da1"])?;
    for ((p, q), g) in field.points.iter().zip(&field.q).zip(&field.grad) {
        out.write_record([p[0], p[1], *q, g[0], g[1]].map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_paths_csv<W: Write>(paths: &[AscentPath], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "step", "a0", "a1", "q", "converged"])?;
    for (i, p) in paths.iter().enumerate() {
        for (s, (a, q)) in p.steps.iter().zip(&p.q).enumerate() {
            out.write_record([
                i.to_string(),
                s.to_string(),
                a[0].to_string(),
                a[1].to_string(),
                q.to_string(),
                p.converged.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_dqda_csv<W: Write>(series: &[(u64, DqdaStats)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "dqda_max", "dqda_std"])?;
    for (step, s) in series {
        out.write_record([step.to_string(), s.max.to_string(), s.std.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_accuracy_csv<W: Write>(acc: &RankingAccuracies, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["category", "accuracy"])?;
    for (name, v) in acc.as_pairs() {
        out.write_record([name.to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

const SVG_SIZE: f64 = 480.0;

fn to_px(v: f64) -> f64 {
    (v + 1.0) / 2.0 * SVG_SIZE
}

fn to_py(v: f64) -> f64 {
    (1.0 - (v + 1.0) / 2.0) * SVG_SIZE
}

/// Blue (low) to red (high).
fn heat(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t) as u8;
    let b = (255.0 * (1.0 - t)) as u8;
    let g = (255.0 * (1.0 - (2.0 * t - 1.0).abs()) * 0.8) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Q heatmap with normalized gradient arrows, ascent paths and an optional
/// success circle.
pub fn field_svg(field: &GradField, paths: &[AscentPath], success_radius: Option<f64>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#
    );
    let (lo, hi) = field
        .q
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let cell = SVG_SIZE / field.res as f64;
    let half = 1.0 / (field.res - 1) as f64;
    for (p, q) in field.points.iter().zip(&field.q) {
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            to_px(p[0] - half),
            to_py(p[1] + half),
            cell + 0.5,
            cell + 0.5,
            heat((q - lo) / span)
        );
    }
    let stride = (field.res / 16).max(1);
    let gmax = field.max_magnitude().max(1e-12);
    for (k, (p, g)) in field.points.iter().zip(&field.grad).enumerate() {
        if (k % field.res) % stride != 0 || (k / field.res) % stride != 0 {
            continue;
        }
        let len = 0.9 * 2.0 / 16.0 * (g[0].hypot(g[1]) / gmax).sqrt();
        let n = g[0].hypot(g[1]).max(1e-300);
        let (ex, ey) = (p[0] + len * g[0] / n, p[1] + len * g[1] / n);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="white" stroke-width="1"/>"#,
            to_px(p[0]),
            to_py(p[1]),
            to_px(ex),
            to_py(ey)
        );
    }
    if let Some(r) = success_radius {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="black" stroke-dasharray="4 3"/>"#,
            to_px(0.0),
            to_py(0.0),
            r / 2.0 * SVG_SIZE
        );
    }
    for p in paths {
        let pts: Vec<String> = p
            .steps
            .iter()
            .map(|a| format!("{:.2},{:.2}", to_px(a[0]), to_py(a[1])))
            .collect();
        let color = if p.converged { "lime" } else { "black" };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
            to_px(p.start[0]),
            to_py(p.start[1])
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Simple multi-series line plot; `log_y` plots `log10` of positive values.
pub fn line_plot_svg(title: &str, series: &[(&str, Vec<(f64, f64)>)], log_y: bool) -> String {
    let (w, h, m) = (640.0, 360.0, 48.0);
    let tf = |y: f64| if log_y { y.max(1e-300).log10() } else { y };
    let pts = series.iter().flat_map(|s| s.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        let y = tf(y);
        if x.is_finite() && y.is_finite() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if x0 >= x1 {
        x1 = x0 + 1.0;
    }
    if y0 >= y1 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (tf(y) - y0) / (y1 - y0) * (h - 2.0 * m);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{m}" y="24" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<polyline points="{m},{m} {m},{b} {r},{b}" fill="none" stroke="black"/>"#,
        b = h - m,
        r = w - m
    );
    let ylab = |v: f64| if log_y { format!("1e{v:.1}") } else { format!("{v:.3}") };
    let _ = writeln!(s, r#"<text x="4" y="{}" font-size="10">{}</text>"#, h - m, ylab(y0));
    let _ = writeln!(s, r#"<text x="4" y="{}" font-size="10">{}</text>"#, m, ylab(y1));
    let _ = writeln!(s, r#"<text x="{m}" y="{}" font-size="10">{x0}</text>"#, h - m + 14.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10">{x1}</text>"#, w - m - 30.0, h - m + 14.0);
    for (i, (name, data)) in series.iter().enumerate() {
        let c = colors[i % colors.len()];
        let p: Vec<String> = data
            .iter()
            .filter(|(x, y)| x.is_finite() && tf(*y).is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, p.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{c}">{}</text>"#,
            w - m - 110.0,
            m + 14.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::Origin;
    use crate::ndmath::Activation;
    use rand::SeedableRng;

    /// Linear critic on `[s | a0 | a1]` with the given action weights.
    fn linear(w: [f64; 2]) -> Mlp {
        let mut net = Mlp::zeros(&[3, 1], Activation::Relu).unwrap();
        net.weight_mut(0).set(0, 1, w[0]);
        net.weight_mut(0).set(0, 2, w[1]);
        net
    }

    fn bowl(c: [f64; 2]) -> impl Fn([f64; 2]) -> (f64, [f64; 2]) {
        move |a: [f64; 2]| {
            let d = [a[0] - c[0], a[1] - c[1]];
            (-(d[0] * d[0] + d[1] * d[1]), [-2.0 * d[0], -2.0 * d[1]])
        }
    }

    fn row(action: [f64; 2]) -> Row {
        Row {
            obs: vec![1.0],
            action: action.to_vec(),
            reward: 1.0,
            next_obs: vec![1.0],
            terminated: true,
            truncated: false,
            success: true,
            refval: 1.0,
            traj_id: 0,
            origin: Origin::Offline,
        }
    }

    fn random_net(seed: u64, act: Activation) -> Mlp {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Mlp::new(&[3, 16, 16, 1], act, &mut rng).unwrap()
    }

    fn inside(a: [f64; 2]) -> bool {
        a[0].hypot(a[1]) <= 0.5
    }

    #[test]
    fn constant_critic_has_zero_field_and_stats() {
        let net = Mlp::zeros(&[3, 8, 1], Activation::Tanh).unwrap();
        let f = grad_field(&CriticAt::new(&net, &[1.0]).unwrap(), 9).unwrap();
        assert_eq!(f.points.len(), 81);
        assert!(f.grad.iter().all(|g| g == &[0.0, 0.0]));
        let obs = Matrix::filled(5, 1, 1.0);
        let acts = Matrix::from_rows(&[[0.1, 0.2]; 5]);
        assert_eq!(dqda_stats(&net, &obs, &acts).unwrap(), DqdaStats { max: 0.0, std: 0.0 });
    }

    #[test]
    fn quadratic_field_is_minus_two_a() {
        let f = grad_field(&bowl([0.0, 0.0]), 7).unwrap();
        for (p, g) in f.points.iter().zip(&f.grad) {
            assert_eq!(*g, [-2.0 * p[0], -2.0 * p[1]]);
        }
        assert!(field_fd_error(&bowl([0.0, 0.0]), &f, 10, 0).unwrap() < 1e-6);
    }

    #[test]
    fn linear_critic_stats_match_formula() {
        let w = [0.5, -2.0];
        let net = linear(w);
        let obs = Matrix::filled(4, 1, 1.0);
        let acts = Matrix::from_rows(&[[0.1, 0.2], [-0.3, 0.9], [0.0, 0.0], [1.0, -1.0]]);
        let s = dqda_stats(&net, &obs, &acts).unwrap();
        assert_eq!(s.max, 2.0);
        // Entries are {0.5, 2.0} equally often: population std 0.75.
        assert!((s.std - 0.75).abs() < 1e-12);
        let f = grad_field(&CriticAt::new(&net, &[1.0]).unwrap(), 5).unwrap();
        assert!(f.grad.iter().all(|g| g == &w));
        let series = dqda_over_training(&[net.clone(), linear([0.0, 0.0])], &obs, &acts).unwrap();
        assert_eq!(series[1].max, 0.0);
        assert!(dqda_over_training(&[], &obs, &acts).is_err());
    }

    #[test]
    fn field_rejects_non_2d_actions() {
        let net = Mlp::zeros(&[4, 1], Activation::Relu).unwrap();
        assert!(matches!(CriticAt::new(&net, &[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn field_matches_finite_differences() {
        for (seed, act) in [(1, Activation::Tanh), (2, Activation::Relu)] {
            let net = random_net(seed, act);
            let land = CriticAt::new(&net, &[0.7]).unwrap();
            let f = grad_field(&land, 21).unwrap();
            let err = field_fd_error(&land, &f, 10, seed).unwrap();
            assert!(err < 1e-3, "{act:?}: {err}");
        }
    }

    #[test]
    fn ascent_basic_cases() {
        let zero = Mlp::zeros(&[3, 1], Activation::Relu).unwrap();
        let land = CriticAt::new(&zero, &[1.0]).unwrap();
        let p = ascent_paths(&land, &[[0.1, 0.1], [0.9, 0.0]], 0.05, 10, inside).unwrap();
        assert_eq!(p[0].first_inside, Some(0));
        assert!(p[0].converged && !p[1].converged);
        assert!(p[1].steps.iter().all(|a| *a == [0.9, 0.0]));
        assert_eq!((p[1].steps.len(), p[1].q.len()), (11, 11));
        // Constant pull toward −a0 crosses the disc and clips at the boundary.
        let net = linear([-1.0, 0.0]);
        let p = ascent_paths(&CriticAt::new(&net, &[1.0]).unwrap(), &[[0.9, 0.0]], 0.05, 200, inside).unwrap();
        assert_eq!(p[0].steps.last().unwrap(), &[-1.0, 0.0]);
        assert!(!p[0].converged);
        assert_eq!(p[0].first_inside, Some(8));
        assert!(ascent_paths(&land, &[[1.5, 0.0]], 0.05, 1, inside).is_err());
    }

    #[test]
    fn quadratic_bowl_all_starts_converge() {
        let starts = ring_starts(8, 0.9);
        for s in &starts {
            assert!((s[0].hypot(s[1]) - 0.9).abs() < 1e-12);
        }
        let c = [0.2, -0.1];
        let paths = ascent_paths(&bowl(c), &starts, 0.05, 200, inside).unwrap();
        for p in &paths {
            assert!(p.converged);
            // Closed form: a_k − c = 0.9^k (a_0 − c).
            let last = p.steps.last().unwrap();
            let k = 0.9f64.powi(200);
            assert!((last[0] - c[0] - k * (p.start[0] - c[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn ascent_is_monotone_on_smooth_critic() {
        let net = random_net(5, Activation::Tanh);
        let land = CriticAt::new(&net, &[0.3]).unwrap();
        let paths = ascent_paths(&land, &ring_starts(8, 0.9), 0.01, 100, |_| false).unwrap();
        for p in paths {
            for w in p.q.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn ranking_accuracy_margin_and_tie_rules() {
        let rows: Vec<Row> = (0..50).map(|i| row([0.01 * i as f64 - 0.25, 0.0])).collect();
        let zero = Mlp::zeros(&[3, 1], Activation::Relu).unwrap();
        let acc = ranking_accuracy(&zero, &rows, 0.15, 0).unwrap();
        assert_eq!(acc.as_pairs().map(|p| p.1), [0.0; 4]);
        assert!(ranking_accuracy(&zero, &[], 0.15, 0).is_err());
    }

    #[test]
    fn ranking_accuracy_perfect_margin_critic() {
        // Q(s, a) = −|a0 − s| − |a1|: each row's own action (a0 = s, a1 = 0)
        // is the unique maximum at its state.
        let mut net = Mlp::zeros(&[3, 4, 1], Activation::Relu).unwrap();
        for (h, (ws, wa0, wa1)) in [(-1.0, 1.0, 0.0), (1.0, -1.0, 0.0), (0.0, 0.0, 1.0), (0.0, 0.0, -1.0)]
            .into_iter()
            .enumerate()
        {
            net.weight_mut(0).set(h, 0, ws);
            net.weight_mut(0).set(h, 1, wa0);
            net.weight_mut(0).set(h, 2, wa1);
            net.weight_mut(1).set(0, h, -1.0);
        }
        let rows: Vec<Row> = (0..20)
            .map(|i| {
                let s = -0.95 + 0.1 * i as f64;
                Row { obs: vec![s], ..row([s, 0.0]) }
            })
            .collect();
        let acc = ranking_accuracy(&net, &rows, 0.15, 1).unwrap();
        assert_eq!(acc.as_pairs().map(|p| p.1), [1.0; 4]);
    }

    #[test]
    fn ranking_accuracy_random_critic_is_near_half() {
        use rand::Rng as _;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Row> = (0..1000)
            .map(|_| row([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))
            .collect();
        // For a linear Q every negative kind is symmetric around the row, so
        // each comparison is a fair coin.
        let net = linear([0.8, -0.6]);
        let acc = ranking_accuracy(&net, &rows, 0.15, 7).unwrap();
        let band = 3.0 * (0.25f64 / 1000.0).sqrt();
        for (name, v) in acc.as_pairs() {
            assert!((v - 0.5).abs() < band, "{name}: {v}");
        }
        assert_eq!(acc, ranking_accuracy(&net, &rows, 0.15, 7).unwrap());
    }

    #[test]
    fn csv_and_svg_outputs() {
        let net = linear([1.0, 0.0]);
        let land = CriticAt::new(&net, &[1.0]).unwrap();
        let f = grad_field(&land, 4).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("a0,a1,q,dq_da0,dq_da1\n-1,-1,-1,1,0\n"));
        assert_eq!(text.lines().count(), 17);
        let paths = ascent_paths(&land, &ring_starts(8, 0.9), 0.05, 5, |_| false).unwrap();
        let svg = field_svg(&f, &paths, Some(0.5));
        assert!(svg.starts_with("<svg") && svg.contains("polyline") && svg.trim_end().ends_with("</svg>"));
        let plot = line_plot_svg("q <max>", &[("cql", vec![(0.0, 1.0), (1.0, 100.0)])], true);
        assert!(plot.contains("q &lt;max&gt;"));
    }
}
