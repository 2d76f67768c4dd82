//! Little-endian parameter checkpoints.
//!
//! An MLP blob is laid out as
//!
//! ```text
//! magic     8 bytes   b"O2OMLP01"
//! n_sizes   u32
//! sizes     u32 × n_sizes
//! act       u8        0 = relu, 1 = tanh, 2 = identity
//! params    f64 × Σ(in·out + out), layer by layer: W (row-major, out×in) then b
//! ```

use std::io::{Read, Write};

use super::{Activation, AdamState, Matrix, Mlp};
use crate::{Error, Result};

pub const MLP_MAGIC: &[u8; 8] = b"O2OMLP01";

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(vals.len() * 8);
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl Mlp {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MLP_MAGIC)?;
        write_u32(w, self.sizes().len() as u32)?;
        for &s in self.sizes() {
            write_u32(w, s as u32)?;
        }
        w.write_all(&[self.activation().code()])?;
        write_f64s(w, &self.flat_params())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Mlp> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MLP_MAGIC {
            return Err(Error::Format(format!("bad MLP magic {magic:?}")));
        }
        let n = read_u32(r)? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::Format(format!("implausible layer count {n}")));
        }
        let sizes = (0..n)
            .map(|_| read_u32(r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut act = [0u8; 1];
        r.read_exact(&mut act)?;
        let act = Activation::from_code(act[0])
            .ok_or_else(|| Error::Format(format!("unknown activation code {}", act[0])))?;
        let mut net = Mlp::zeros(&sizes, act).map_err(|e| Error::Format(e.to_string()))?;
        let flat = read_f64s(r, net.num_params())?;
        net.set_flat_params(&flat)?;
        Ok(net)
    }
}

/// Adam state: `lr f64, step u64, n u32, then for each tensor rows u32,
/// cols u32, m f64×(rows·cols), v f64×(rows·cols)`.
pub fn write_adam<W: Write>(w: &mut W, st: &AdamState) -> Result<()> {
    write_f64s(w, &[st.lr])?;
    write_u64(w, st.step_count())?;
    write_u32(w, st.first_moments().len() as u32)?;
    for (m, v) in st.first_moments().iter().zip(st.second_moments()) {
        write_u32(w, m.rows() as u32)?;
        write_u32(w, m.cols() as u32)?;
        write_f64s(w, m.data())?;
        write_f64s(w, v.data())?;
    }
    Ok(())
}

pub fn read_adam<R: Read>(r: &mut R) -> Result<AdamState> {
    let lr = read_f64s(r, 1)?[0];
    let step = read_u64(r)?;
    let n = read_u32(r)? as usize;
    let mut ms = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for _ in 0..n {
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        ms.push(Matrix::from_vec(rows, cols, read_f64s(r, rows * cols)?)?);
        vs.push(Matrix::from_vec(rows, cols, read_f64s(r, rows * cols)?)?);
    }
    Ok(AdamState::from_parts(lr, step, ms, vs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn header_layout() {
        let net = Mlp::zeros(&[2, 3, 1], Activation::Tanh).unwrap();
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], MLP_MAGIC);
        assert_eq!(&buf[8..12], &3u32.to_le_bytes());
        assert_eq!(&buf[12..16], &2u32.to_le_bytes());
        assert_eq!(buf[24], 1);
        assert_eq!(buf.len(), 25 + 8 * net.num_params());
    }

    #[test]
    fn bad_magic_rejected() {
        let buf = b"NOTANMLP\0\0\0\0".to_vec();
        assert!(matches!(
            Mlp::read_from(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn mlp_roundtrip(seed in any::<u64>(), h in 1usize..12) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let net = Mlp::new(&[3, h, 2], Activation::Relu, &mut rng).unwrap();
            let mut buf = Vec::new();
            net.write_to(&mut buf).unwrap();
            let back = Mlp::read_from(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back.sizes(), net.sizes());
            prop_assert_eq!(back.flat_params(), net.flat_params());
        }
    }

    #[test]
    fn adam_roundtrip() {
        let mut p = vec![Matrix::filled(2, 2, 1.0)];
        let mut st = AdamState::new(&p, 3e-4);
        st.step(&mut p, &crate::ndmath::GradBundle::new(vec![Matrix::filled(2, 2, 0.5)]))
            .unwrap();
        let mut buf = Vec::new();
        write_adam(&mut buf, &st).unwrap();
        assert_eq!(read_adam(&mut buf.as_slice()).unwrap(), st);
    }
}
