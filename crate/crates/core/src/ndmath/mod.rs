//! Numerical substrate: matrices, MLPs with reverse-mode gradients, Adam and
//! global-norm clipping, plus the binary parameter checkpoint format.

mod checkpoint;
mod matrix;
mod mlp;
mod optim;

pub use checkpoint::{read_adam, read_f64s, read_u32, read_u64, write_adam, write_f64s, write_u32, write_u64, MLP_MAGIC};
pub use matrix::Matrix;
pub use mlp::{Activation, Backprop, Mlp, Tape};
pub use optim::{clip_global_norm, AdamState, GradBundle};

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, the derivative of [`softplus`].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
