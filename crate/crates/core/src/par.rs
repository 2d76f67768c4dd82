//! Row-parallel kernels.
//!
//! Every kernel here splits work by *output row* only. Each output element is
//! produced by the same scalar loop in the same order whichever
//! [`ExecMode`] runs it, so parallel and sequential results are bitwise
//! identical and seeded runs stay reproducible.
//!
//! With the `parallel` feature (on by default) [`ExecMode::default`] picks
//! rayon; without it everything runs on the calling thread.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Output rows below this much work (rows × inner × cols) stay sequential.
const PAR_MIN_WORK: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

impl ExecMode {
    fn use_threads(self, work: usize) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel && work >= PAR_MIN_WORK
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn for_each_row<F>(mode: ExecMode, out: &mut [f64], cols: usize, work: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if cols == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if mode.use_threads(work) {
        out.par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = (mode, work);
    for (i, row) in out.chunks_mut(cols).enumerate() {
        f(i, row);
    }
}

/// `out[i][j] = Σ_k a[i][k] · b[j][k]`, i.e. `A · Bᵀ` with `a` of shape
/// `(m, k)`, `b` of shape `(n, k)` and `out` of shape `(m, n)`.
pub fn matmul_nt(mode: ExecMode, a: &[f64], b: &[f64], k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(b.len(), n * k);
    let m = if k == 0 { out.len() / n.max(1) } else { a.len() / k };
    debug_assert_eq!(out.len(), m * n);
    for_each_row(mode, out, n, m * n * k.max(1), |i, row| {
        let ar = &a[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            *o = dot(ar, &b[j * k..(j + 1) * k]);
        }
    });
}

/// `out[i][:] = Σ_k a[i][k] · b[k][:]`, i.e. `A · B` with `a` of shape
/// `(m, k)`, `b` of shape `(k, n)`.
pub fn matmul_nn(mode: ExecMode, a: &[f64], b: &[f64], k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(b.len(), k * n);
    let m = out.len() / n.max(1);
    for_each_row(mode, out, n, m * n * k.max(1), |i, row| {
        row.fill(0.0);
        for kk in 0..k {
            let s = a[i * k + kk];
            if s == 0.0 {
                continue;
            }
            let br = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in row.iter_mut().zip(br) {
                *o += s * bv;
            }
        }
    });
}

/// `out[i][:] = Σ_r a[r][i] · b[r][:]`, i.e. `Aᵀ · B` with `a` of shape
/// `(r, m)`, `b` of shape `(r, n)` and `out` of shape `(m, n)`.
pub fn matmul_tn(mode: ExecMode, a: &[f64], b: &[f64], m: usize, n: usize, out: &mut [f64]) {
    let r = if m == 0 { 0 } else { a.len() / m };
    debug_assert_eq!(b.len(), r * n);
    for_each_row(mode, out, n, m * n * r.max(1), |i, row| {
        row.fill(0.0);
        for rr in 0..r {
            let s = a[rr * m + i];
            if s == 0.0 {
                continue;
            }
            let br = &b[rr * n..(rr + 1) * n];
            for (o, &bv) in row.iter_mut().zip(br) {
                *o += s * bv;
            }
        }
    });
}

/// Map `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel && n > 1 {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Like [`map_indexed`] but on a pool capped at `workers` threads.
pub fn map_indexed_workers<T, F>(workers: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 && n > 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
    }
    let _ = workers;
    (0..n).map(f).collect()
}
