use super::Matrix;
use crate::{Error, Result};

/// Per-parameter gradients mirroring a parameter list, with a cached global
/// L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    grads: Vec<Matrix>,
    norm: f64,
}

fn norm_of(grads: &[Matrix]) -> f64 {
    grads.iter().map(Matrix::sum_sq).sum::<f64>().sqrt()
}

impl GradBundle {
    pub fn new(grads: Vec<Matrix>) -> Self {
        let norm = norm_of(&grads);
        Self { grads, norm }
    }

    pub fn zeros_like(params: &[Matrix]) -> Self {
        Self {
            grads: params
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect(),
            norm: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn get(&self, i: usize) -> &Matrix {
        &self.grads[i]
    }

    pub fn as_slice(&self) -> &[Matrix] {
        &self.grads
    }

    pub fn global_norm(&self) -> f64 {
        self.norm
    }

    pub fn is_finite(&self) -> bool {
        self.norm.is_finite() && self.grads.iter().all(Matrix::is_finite)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.grads
            .iter()
            .flat_map(|g| g.data().iter().copied())
            .collect()
    }

    fn check_shapes(&self, other: &[Matrix], op: &'static str) -> Result<()> {
        if self.grads.len() != other.len()
            || self.grads.iter().zip(other).any(|(a, b)| !a.same_shape(b))
        {
            let fmt = |v: &[Matrix]| format!("{:?}", v.iter().map(Matrix::shape).collect::<Vec<_>>());
            return Err(Error::shape(op, fmt(&self.grads), fmt(other)));
        }
        Ok(())
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, s: f64, other: &GradBundle) -> Result<()> {
        self.check_shapes(&other.grads, "GradBundle::add_scaled")?;
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.axpy(s, b)?;
        }
        self.norm = norm_of(&self.grads);
        Ok(())
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for g in &mut self.grads {
            g.scale(s);
        }
        self.norm *= s.abs();
        self
    }
}

/// Rescale `g` so that its global norm is at most `max_norm`.
///
/// Gradients already within the bound are returned unchanged.
pub fn clip_global_norm(g: GradBundle, max_norm: f64) -> Result<GradBundle> {
    if !(max_norm > 0.0) {
        return Err(Error::Config(format!("max_norm must be > 0, got {max_norm}")));
    }
    if !g.is_finite() {
        return Err(Error::NonFinite("gradient before clipping".into()));
    }
    let norm = g.global_norm();
    if norm <= max_norm {
        return Ok(g);
    }
    let mut out = g.scaled(max_norm / norm);
    // recompute rather than trust the scaled cache, so the bound holds exactly
    out.norm = norm_of(&out.grads).min(max_norm);
    Ok(out)
}

/// Adam optimizer state for one parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &[Matrix], lr: f64) -> Self {
        let zeros = |p: &[Matrix]| p.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.v
    }

    pub(crate) fn from_parts(
        lr: f64,
        step: u64,
        m: Vec<Matrix>,
        v: Vec<Matrix>,
    ) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step,
            m,
            v,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [Matrix], g: &GradBundle) -> Result<()> {
        g.check_shapes(params, "AdamState::step")?;
        g.check_shapes(&self.m, "AdamState::step (moments)")?;
        if !g.is_finite() {
            return Err(Error::NonFinite("gradient passed to Adam".into()));
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for ((p, gm), (m, v)) in params
            .iter_mut()
            .zip(&g.grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, &gi) in gm.data().iter().enumerate() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gi;
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bundle(values: &[f64]) -> GradBundle {
        GradBundle::new(vec![Matrix::from_rows(&[values.to_vec()])])
    }

    #[test]
    fn clip_halves_when_twice_the_bound() {
        let g = bundle(&[1.2, -1.6]); // norm 2
        let c = clip_global_norm(g, 1.0).unwrap();
        assert!((c.get(0).data()[0] - 0.6).abs() < 1e-15);
        assert!((c.get(0).data()[1] + 0.8).abs() < 1e-15);
        assert!(c.global_norm() <= 1.0);
    }

    #[test]
    fn clip_is_noop_within_bound() {
        let g = bundle(&[0.3, 0.0]);
        assert_eq!(clip_global_norm(g.clone(), 1.0).unwrap(), g);
    }

    #[test]
    fn clip_rejects_nonfinite_and_bad_bound() {
        assert!(matches!(
            clip_global_norm(bundle(&[f64::NAN]), 1.0),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            clip_global_norm(bundle(&[1.0]), 0.0),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn clip_norm_is_min_of_norm_and_bound(
            vals in proptest::collection::vec(-10.0f64..10.0, 1..20),
            max in 0.01f64..5.0,
        ) {
            let g = bundle(&vals);
            let before = g.global_norm();
            let c = clip_global_norm(g.clone(), max).unwrap();
            let recomputed = c.flat().iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((recomputed - before.min(max)).abs() < 1e-12);
            // direction preserved
            if before > 0.0 {
                for (a, b) in c.flat().iter().zip(g.flat()) {
                    prop_assert!((a * before - b * recomputed).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = vec![Matrix::from_rows(&[[1.0, -2.0]])];
        let mut st = AdamState::new(&p, 0.1);
        st.step(&mut p, &bundle(&[1.0, 1.0])).unwrap();
        let after_first = p.clone();
        let m_before = st.first_moments()[0].clone();
        st.step(&mut p, &bundle(&[0.0, 0.0])).unwrap();
        let m_after = &st.first_moments()[0];
        assert!(m_after.data()[0].abs() < m_before.data()[0].abs());
        assert_eq!(st.step_count(), 2);
        // a fresh state with g = 0 does not move anything
        let mut q = after_first.clone();
        let mut fresh = AdamState::new(&q, 0.1);
        fresh.step(&mut q, &bundle(&[0.0, 0.0])).unwrap();
        assert_eq!(q, after_first);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = vec![Matrix::from_rows(&[[0.0, 0.0, 0.0]])];
        let mut st = AdamState::new(&p, 0.01);
        st.step(&mut p, &bundle(&[3.0, -0.5, 1e-3])).unwrap();
        let expect = [-0.01, 0.01, -0.01];
        for (v, e) in p[0].data().iter().zip(expect) {
            // eps slightly shrinks the step for tiny gradients
            assert!((v - e).abs() < 1e-7, "{v} vs {e}");
        }
    }

    #[test]
    fn quadratic_descends_monotonically() {
        // f(w) = w^2, w0 = 1, lr = 0.1. Hand simulation:
        // t=1: g=2, m=0.2, v=0.004, m^=2, v^=4 -> w=0.9
        // t=2: g=1.8 -> w≈0.800412
        // t=3: w≈0.701586
        let mut p = vec![Matrix::from_rows(&[[1.0]])];
        let mut st = AdamState::new(&p, 0.1);
        let mut prev = 1.0;
        let mut ws = vec![];
        for _ in 0..3 {
            let w = p[0].data()[0];
            st.step(&mut p, &bundle(&[2.0 * w])).unwrap();
            let nw = p[0].data()[0];
            assert!(nw < prev && nw > 0.0);
            prev = nw;
            ws.push(nw);
        }
        assert!((ws[0] - 0.9).abs() < 1e-8);
        assert!((ws[1] - 0.800_412_228_691_792_8).abs() < 1e-12);
        assert!((ws[2] - 0.701_586_272_946_030_3).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![Matrix::zeros(1, 2)];
        let mut st = AdamState::new(&p, 0.1);
        assert!(st.step(&mut p, &bundle(&[1.0, 2.0, 3.0])).is_err());
    }
}
