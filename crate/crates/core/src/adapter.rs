//! Residual adapter head `z + W2 relu(W1 z + b1) + b2`, its reverse-mode
//! gradients, plain SGD with weight decay, and the checkpoint format.
//!
//! Checkpoint layout (little-endian): magic `"MSCA"`, version `u32`, `d`
//! and `h` as `u64`, then `W1` (h×d), `b1` (h), `W2` (d×h), `b2` (d) as
//! `f64`, all row-major.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, dot, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MSCA";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Names used in error messages, in parameter order.
pub const PARAM_NAMES: [&str; 4] = ["W1", "b1", "W2", "b2"];

impl AdapterParams {
    /// All-zero parameters: the identity map.
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden, dim),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(dim, hidden),
            b2: vec![0.0; dim],
        }
    }

    /// Gaussian `W1` with std `1/sqrt(d)`, everything else zero. The output
    /// branch is zero so the initial map is exactly the identity.
    pub fn identity_init<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(dim, hidden);
        let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("positive std");
        for w in p.w1.as_mut_slice() {
            *w = normal.sample(rng);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.b2.len()
    }

    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn check_shapes(&self) -> Result<()> {
        let (d, h) = (self.dim(), self.hidden());
        check_dim(h * d, self.w1.as_slice().len())?;
        check_dim(d * h, self.w2.as_slice().len())?;
        check_dim(h, self.w1.rows())?;
        check_dim(d, self.w2.rows())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// Adapted raw embedding for one input row.
pub fn adapter_forward(z: &[f64], params: &AdapterParams) -> Result<Vec<f64>> {
    check_dim(params.dim(), z.len())?;
    Ok(forward_cached(z, params).0)
}

/// Row-wise [`adapter_forward`] over a matrix.
pub fn adapter_forward_batch(batch: &Matrix, params: &AdapterParams) -> Result<Matrix> {
    check_dim(params.dim(), batch.cols())?;
    let mut out = Matrix::zeros(batch.rows(), batch.cols());
    for i in 0..batch.rows() {
        let (y, _) = forward_cached(batch.row(i), params);
        out.row_mut(i).copy_from_slice(&y);
    }
    Ok(out)
}

/// Output and hidden pre-activations.
fn forward_cached(z: &[f64], p: &AdapterParams) -> (Vec<f64>, Vec<f64>) {
    let pre: Vec<f64> = (0..p.hidden())
        .map(|k| dot(p.w1.row(k), z) + p.b1[k])
        .collect();
    let act: Vec<f64> = pre.iter().map(|&a| a.max(0.0)).collect();
    let y = (0..p.dim())
        .map(|j| z[j] + dot(p.w2.row(j), &act) + p.b2[j])
        .collect();
    (y, pre)
}

/// Gradients of a summed loss with respect to every parameter, given the
/// loss gradient on each adapted output row. The relu derivative at 0 is 0.
pub fn adapter_backward(
    batch: &Matrix,
    params: &AdapterParams,
    upstream: &Matrix,
) -> Result<AdapterParams> {
    params.check_shapes()?;
    check_dim(params.dim(), batch.cols())?;
    check_dim(batch.rows(), upstream.rows())?;
    check_dim(batch.cols(), upstream.cols())?;
    let (d, h) = (params.dim(), params.hidden());
    let mut g = AdapterParams::zeros(d, h);
    let mut g_act = vec![0.0; h];
    for i in 0..batch.rows() {
        let z = batch.row(i);
        let gy = upstream.row(i);
        let (_, pre) = forward_cached(z, params);
        for j in 0..d {
            g.b2[j] += gy[j];
            let row = g.w2.row_mut(j);
            for k in 0..h {
                row[k] += gy[j] * pre[k].max(0.0);
            }
        }
        g_act.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..d {
            for k in 0..h {
                g_act[k] += params.w2.get(j, k) * gy[j];
            }
        }
        for k in 0..h {
            if pre[k] > 0.0 {
                let ga = g_act[k];
                g.b1[k] += ga;
                for (w, x) in g.w1.row_mut(k).iter_mut().zip(z) {
                    *w += ga * x;
                }
            }
        }
    }
    Ok(g)
}

/// `p <- p - lr * (g + weight_decay * p)`, no momentum. Parameters are left
/// untouched if any updated entry would be non-finite.
pub fn sgd_step(
    params: &mut AdapterParams,
    grads: &AdapterParams,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    check_dim(params.dim(), grads.dim())?;
    check_dim(params.hidden(), grads.hidden())?;
    let mut next = params.clone();
    for ((dst, g), name) in next.slices_mut().into_iter().zip(grads.slices()).zip(PARAM_NAMES) {
        for (p, gi) in dst.iter_mut().zip(g) {
            *p -= lr * (gi + weight_decay * *p);
            if !p.is_finite() {
                return Err(Error::NonFiniteUpdate { param: name });
            }
        }
    }
    *params = next;
    Ok(())
}

pub fn encode_checkpoint(params: &AdapterParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + params.num_params() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(params.hidden() as u64).to_le_bytes());
    for s in params.slices() {
        for x in s {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<AdapterParams> {
    let err = |pos: usize, msg: &str| Error::parse(format!("byte {pos}"), msg);
    if bytes.len() < 24 {
        return Err(err(bytes.len(), "truncated checkpoint header"));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(err(0, "bad magic, expected \"MSCA\""));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(err(4, "unsupported checkpoint version"));
    }
    let d = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let h = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let count = h
        .checked_mul(d)
        .and_then(|x| x.checked_mul(2))
        .and_then(|x| x.checked_add(h + d))
        .ok_or_else(|| err(8, "declared shape overflows"))?;
    if bytes.len() - 24 != count.saturating_mul(8) {
        return Err(err(24, "payload length does not match declared shape"));
    }
    let mut p = AdapterParams::zeros(d, h);
    let mut values = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for s in p.slices_mut() {
        for x in s.iter_mut() {
            *x = values.next().expect("length checked");
        }
    }
    if !p.is_finite() {
        return Err(Error::InvariantViolation("checkpoint holds non-finite parameters".into()));
    }
    Ok(p)
}

pub fn save_checkpoint(params: &AdapterParams, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<AdapterParams> {
    decode_checkpoint(&fs::read(path)?)
}
