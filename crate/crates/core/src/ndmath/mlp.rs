use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::{GradBundle, Matrix};
use crate::par::ExecMode;
use crate::{Error, Result};

/// Hidden-layer nonlinearity. Output layers are always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output `y = f(z)`,
    /// so backward never re-evaluates `f`.
    #[inline]
    fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Intermediate values recorded by a forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each layer (the previous layer's activation output).
    inputs: Vec<Matrix>,
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: GradBundle,
    /// Gradient with respect to the network input.
    pub input_grad: Matrix,
}

/// Fully connected feed-forward network.
///
/// Parameters are stored as `[W0, b0, W1, b1, ...]` where `Wl` has shape
/// `(out, in)` and `bl` is a `1 × out` row.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    params: Vec<Matrix>,
    exec: ExecMode,
    tape: Option<Tape>,
}

impl Mlp {
    /// Network with every weight and bias zero.
    pub fn zeros(sizes: &[usize], hidden: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "layer sizes must have at least two positive entries, got {sizes:?}"
            )));
        }
        let mut params = Vec::with_capacity(2 * (sizes.len() - 1));
        for w in sizes.windows(2) {
            params.push(Matrix::zeros(w[1], w[0]));
            params.push(Matrix::zeros(1, w[1]));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            hidden,
            params,
            exec: ExecMode::default(),
            tape: None,
        })
    }

    /// He-uniform weights for ReLU layers, Xavier-uniform otherwise; zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, hidden)?;
        let n_layers = net.n_layers();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l] as f64, sizes[l + 1] as f64);
            let last = l + 1 == n_layers;
            let limit = if hidden == Activation::Relu && !last {
                (6.0 / fan_in).sqrt()
            } else {
                (6.0 / (fan_in + fan_out)).sqrt()
            };
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for w in net.params[2 * l].data_mut() {
                *w = dist.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn with_exec_mode(mut self, mode: ExecMode) -> Self {
        self.exec = mode;
        self
    }

    pub fn exec_mode(&self) -> ExecMode {
        self.exec
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.hidden
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.data().len()).sum()
    }

    pub fn weight(&self, layer: usize) -> &Matrix {
        &self.params[2 * layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Matrix {
        &mut self.params[2 * layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Matrix {
        &mut self.params[2 * layer + 1]
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.data().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("Mlp::set_flat_params", self.num_params(), flat.len()));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.data().len();
            p.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// `self ← (1 − tau)·self + tau·source`, parameter-wise.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if source.sizes != self.sizes {
            return Err(Error::shape(
                "Mlp::soft_update_from",
                format!("{:?}", self.sizes),
                format!("{:?}", source.sizes),
            ));
        }
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            for (tv, sv) in t.data_mut().iter_mut().zip(s.data()) {
                *tv = (1.0 - tau) * *tv + tau * sv;
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(
                "Mlp::forward",
                format!("{} input columns", self.input_dim()),
                format!("{} (input is {}x{})", input.cols(), input.rows(), input.cols()),
            ));
        }
        Ok(())
    }

    fn affine(&self, l: usize, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul_t(&self.params[2 * l], self.exec)?;
        let b = self.params[2 * l + 1].data();
        for r in 0..z.rows() {
            for (v, bv) in z.row_mut(r).iter_mut().zip(b) {
                *v += bv;
            }
        }
        Ok(z)
    }

    fn run(&self, input: &Matrix, mut tape: Option<&mut Tape>) -> Result<Matrix> {
        self.check_input(input)?;
        let n = self.n_layers();
        let mut x = input.clone();
        for l in 0..n {
            let z = self.affine(l, &x)?;
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(x);
            }
            if l + 1 < n {
                x = z.map(|v| self.hidden.apply(v));
            } else {
                x = z;
            }
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("Mlp::forward output".into()));
        }
        Ok(x)
    }

    /// Pure forward pass.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        self.run(input, None)
    }

    /// Forward pass that also returns the tape needed for [`Mlp::backward_tape`].
    pub fn forward_with_tape(&self, input: &Matrix) -> Result<(Matrix, Tape)> {
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.n_layers()),
        };
        let out = self.run(input, Some(&mut tape))?;
        Ok((out, tape))
    }

    /// Forward pass that records its tape inside the network.
    pub fn forward_train(&mut self, input: &Matrix) -> Result<Matrix> {
        let (out, tape) = self.forward_with_tape(input)?;
        self.tape = Some(tape);
        Ok(out)
    }

    /// Backward pass over the tape recorded by the last [`Mlp::forward_train`].
    pub fn backward(&mut self, upstream: &Matrix) -> Result<Backprop> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::State("backward called without a recorded forward pass".into()))?;
        self.backward_tape(&tape, upstream)
    }

    /// Reverse-mode gradients of `Σ upstream ⊙ output` with respect to the
    /// parameters and the input.
    pub fn backward_tape(&self, tape: &Tape, upstream: &Matrix) -> Result<Backprop> {
        let n = self.n_layers();
        if tape.inputs.len() != n {
            return Err(Error::State("tape does not belong to this network".into()));
        }
        let batch = tape.inputs[0].rows();
        if upstream.rows() != batch || upstream.cols() != self.output_dim() {
            return Err(Error::shape(
                "Mlp::backward",
                format!("{}x{}", batch, self.output_dim()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let mut grads: Vec<Matrix> = self
            .params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        let mut g = upstream.clone();
        for l in (0..n).rev() {
            if l + 1 < n {
                let out = &tape.inputs[l + 1];
                for (gv, yv) in g.data_mut().iter_mut().zip(out.data()) {
                    *gv *= self.hidden.derivative_at_output(*yv);
                }
            }
            grads[2 * l] = g.t_matmul(&tape.inputs[l], self.exec)?;
            let db = grads[2 * l + 1].data_mut();
            for r in 0..g.rows() {
                for (d, v) in db.iter_mut().zip(g.row(r)) {
                    *d += v;
                }
            }
            g = g.matmul(&self.params[2 * l], self.exec)?;
        }
        let grads = GradBundle::new(grads);
        if !grads.global_norm().is_finite() || !g.is_finite() {
            return Err(Error::NonFinite("Mlp::backward gradients".into()));
        }
        Ok(Backprop {
            grads,
            input_grad: g,
        })
    }

    pub fn zero_grads(&self) -> GradBundle {
        GradBundle::zeros_like(&self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hand_net() -> Mlp {
        // 2-2-1 ReLU net
        let mut net = Mlp::zeros(&[2, 2, 1], Activation::Relu).unwrap();
        net.weight_mut(0)
            .data_mut()
            .copy_from_slice(&[0.5, -1.0, 1.5, 2.0]);
        net.bias_mut(0).data_mut().copy_from_slice(&[0.25, -0.5]);
        net.weight_mut(1).data_mut().copy_from_slice(&[2.0, -0.75]);
        net.bias_mut(1).data_mut().copy_from_slice(&[0.1]);
        net
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2], Activation::Tanh).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]]);
        assert_eq!(net.forward(&x).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn identity_linear_layer() {
        let mut net = Mlp::zeros(&[3, 3], Activation::Relu).unwrap();
        *net.weight_mut(0) = Matrix::identity(3);
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.5]]);
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn hand_computed_two_two_one() {
        // hidden pre = (0.5 - 1 + 0.25, 1.5 + 2 - 0.5) = (-0.25, 3.0)
        // relu -> (0, 3); out = 2*0 - 0.75*3 + 0.1 = -2.15
        let out = hand_net().forward(&Matrix::from_rows(&[[1.0, 1.0]])).unwrap();
        assert!((out.get(0, 0) - (-2.15)).abs() < 1e-15);
    }

    #[test]
    fn input_width_mismatch_reports_dims() {
        let err = hand_net().forward(&Matrix::zeros(1, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2 input columns") && msg.contains("3"), "{msg}");
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut net = hand_net();
        assert!(matches!(
            net.backward(&Matrix::zeros(1, 1)),
            Err(Error::State(_))
        ));
        net.forward_train(&Matrix::zeros(1, 2)).unwrap();
        net.backward(&Matrix::zeros(1, 1)).unwrap();
        // tape is consumed
        assert!(net.backward(&Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn linear_squared_loss_gradient() {
        // y_hat = w·x + b, loss = (y_hat - y)^2 -> dw = 2(y_hat - y) x
        let mut net = Mlp::zeros(&[3, 1], Activation::Relu).unwrap();
        net.weight_mut(0).data_mut().copy_from_slice(&[0.3, -0.2, 0.7]);
        let x = Matrix::from_rows(&[[1.0, 2.0, -1.0]]);
        let y = 0.5;
        let y_hat = net.forward_train(&x).unwrap().get(0, 0);
        let bp = net
            .backward(&Matrix::from_rows(&[[2.0 * (y_hat - y)]]))
            .unwrap();
        let dw = bp.grads.get(0).data();
        for (k, &xv) in x.row(0).iter().enumerate() {
            assert!((dw[k] - 2.0 * (y_hat - y) * xv).abs() < 1e-15);
        }
        assert!((bp.grads.get(1).data()[0] - 2.0 * (y_hat - y)).abs() < 1e-15);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 8, 8, 2], Activation::Tanh, &mut rng).unwrap();
        let x = Matrix::filled(5, 4, 0.3);
        let (_, tape) = net.forward_with_tape(&x).unwrap();
        let bp = net.backward_tape(&tape, &Matrix::zeros(5, 2)).unwrap();
        assert_eq!(bp.grads.global_norm(), 0.0);
        assert_eq!(bp.input_grad.max_abs(), 0.0);
    }

    #[test]
    fn soft_update_interpolates() {
        let mut target = Mlp::zeros(&[1, 1], Activation::Relu).unwrap();
        let mut live = target.clone();
        live.set_flat_params(&[1.0, 1.0]).unwrap();
        target.soft_update_from(&live, 0.005).unwrap();
        assert_eq!(target.flat_params(), vec![0.005, 0.005]);
        target.soft_update_from(&live, 1.0).unwrap();
        assert_eq!(target.flat_params(), live.flat_params());
    }
}
