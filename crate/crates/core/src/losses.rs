//! Training objectives with analytic gradients with respect to the raw
//! (pre-normalization) embeddings.
//!
//! Batch objectives take `2B` rows where rows `i` and `i + B` form a
//! positive pair. The contrastive value is the mean of the per-anchor
//! negative log-likelihoods over all `2B` anchors, so both directions of
//! every pair contribute.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, dot, norm, Center, Matrix, EPS_NORM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Objective {
    /// Squared Euclidean distance of the raw embedding to the center.
    #[serde(rename = "center")]
    #[value(name = "center")]
    Center,
    /// Negative cosine between the normalized embedding and the center.
    #[serde(rename = "ang-center")]
    #[value(name = "ang-center")]
    AngularCenter,
    /// Temperature-scaled contrastive loss measured around the origin.
    #[serde(rename = "contrastive")]
    #[value(name = "contrastive")]
    Contrastive,
    /// Contrastive loss measured around the frozen center.
    #[serde(rename = "msc")]
    #[value(name = "msc")]
    Msc,
    /// Mean-shifted contrastive plus `lambda` times the angular center term.
    #[serde(rename = "msc+ang")]
    #[value(name = "msc+ang")]
    MscPlusAngular,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::Center,
        Objective::AngularCenter,
        Objective::Contrastive,
        Objective::Msc,
        Objective::MscPlusAngular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Center => "center",
            Objective::AngularCenter => "ang-center",
            Objective::Contrastive => "contrastive",
            Objective::Msc => "msc",
            Objective::MscPlusAngular => "msc+ang",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub objective: Objective,
    /// Softmax temperature.
    pub tau: f64,
    /// Weight of the angular center term in `msc+ang`.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Msc,
            tau: 0.25,
            lambda: 1.0,
        }
    }
}

impl LossConfig {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be > 0, got {}", self.tau)));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be finite, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Loss value and `d value / d embedding` for every input row.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grads: Matrix,
}

/// `||z - c||^2`; not scale invariant.
pub fn center_loss(z: &[f64], c: &Center) -> Result<LossResult> {
    check_dim(c.dim(), z.len())?;
    let diff: Vec<f64> = z.iter().zip(c.as_slice()).map(|(a, b)| a - b).collect();
    let value = dot(&diff, &diff);
    let grads = Matrix::from_vec(1, z.len(), diff.iter().map(|x| 2.0 * x).collect())?;
    Ok(LossResult { value, grads })
}

/// `-(z / ||z||) . c`.
pub fn angular_center_loss(z: &[f64], c: &Center) -> Result<LossResult> {
    check_dim(c.dim(), z.len())?;
    let nz = nondegenerate_norm(z)?;
    let u: Vec<f64> = z.iter().map(|x| x / nz).collect();
    let value = -dot(&u, c.as_slice());
    let g_u: Vec<f64> = c.as_slice().iter().map(|x| -x).collect();
    let g_z = back_normalize(&g_u, &u, nz);
    Ok(LossResult {
        value,
        grads: Matrix::from_vec(1, z.len(), g_z)?,
    })
}

/// Contrastive loss on cosine similarities around the origin.
pub fn contrastive_loss(batch: &Matrix, cfg: &LossConfig) -> Result<LossResult> {
    cfg.validate()?;
    check_batch(batch)?;
    let (units, norms) = normalize_rows(batch)?;
    let (value, g_units) = pair_softmax_loss(&units, cfg.tau);
    let mut grads = Matrix::zeros(batch.rows(), batch.cols());
    for i in 0..batch.rows() {
        let g = back_normalize(g_units.row(i), units.row(i), norms[i]);
        grads.row_mut(i).copy_from_slice(&g);
    }
    Ok(LossResult { value, grads })
}

/// Contrastive loss on cosine similarities between `z/||z|| - c` vectors.
pub fn msc_loss(batch: &Matrix, c: &Center, cfg: &LossConfig) -> Result<LossResult> {
    cfg.validate()?;
    check_batch(batch)?;
    check_dim(c.dim(), batch.cols())?;
    let (units, norms) = normalize_rows(batch)?;
    let mut shifted = Matrix::zeros(batch.rows(), batch.cols());
    let mut shifted_norms = Vec::with_capacity(batch.rows());
    for i in 0..batch.rows() {
        let row = shifted.row_mut(i);
        for ((s, u), cc) in row.iter_mut().zip(units.row(i)).zip(c.as_slice()) {
            *s = u - cc;
        }
        let n = nondegenerate_norm(row)?;
        for s in row.iter_mut() {
            *s /= n;
        }
        shifted_norms.push(n);
    }
    let (value, g_w) = pair_softmax_loss(&shifted, cfg.tau);
    let mut grads = Matrix::zeros(batch.rows(), batch.cols());
    for i in 0..batch.rows() {
        let g_shift = back_normalize(g_w.row(i), shifted.row(i), shifted_norms[i]);
        let g = back_normalize(&g_shift, units.row(i), norms[i]);
        grads.row_mut(i).copy_from_slice(&g);
    }
    Ok(LossResult { value, grads })
}

/// `msc + lambda * mean(angular center)`.
pub fn combined_loss(batch: &Matrix, c: &Center, cfg: &LossConfig) -> Result<LossResult> {
    let mut out = msc_loss(batch, c, cfg)?;
    if cfg.lambda == 0.0 {
        return Ok(out);
    }
    let ang = mean_of_rows(batch, c, angular_center_loss)?;
    out.value += cfg.lambda * ang.value;
    for (g, a) in out.grads.as_mut_slice().iter_mut().zip(ang.grads.as_slice()) {
        *g += cfg.lambda * a;
    }
    Ok(out)
}

/// Evaluates the configured objective on a `2B`-row batch. Per-sample
/// objectives are averaged over the rows.
pub fn batch_loss(batch: &Matrix, c: &Center, cfg: &LossConfig) -> Result<LossResult> {
    cfg.validate()?;
    match cfg.objective {
        Objective::Center => {
            check_batch(batch)?;
            mean_of_rows(batch, c, center_loss)
        }
        Objective::AngularCenter => {
            check_batch(batch)?;
            mean_of_rows(batch, c, angular_center_loss)
        }
        Objective::Contrastive => contrastive_loss(batch, cfg),
        Objective::Msc => msc_loss(batch, c, cfg),
        Objective::MscPlusAngular => combined_loss(batch, c, cfg),
    }
}

fn mean_of_rows(
    batch: &Matrix,
    c: &Center,
    f: fn(&[f64], &Center) -> Result<LossResult>,
) -> Result<LossResult> {
    let n = batch.rows() as f64;
    let mut value = 0.0;
    let mut grads = Matrix::zeros(batch.rows(), batch.cols());
    for i in 0..batch.rows() {
        let r = f(batch.row(i), c)?;
        value += r.value;
        for (g, x) in grads.row_mut(i).iter_mut().zip(r.grads.row(0)) {
            *g = x / n;
        }
    }
    Ok(LossResult {
        value: value / n,
        grads,
    })
}

fn check_batch(batch: &Matrix) -> Result<()> {
    let n = batch.rows();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::BatchTooSmall { rows: n });
    }
    Ok(())
}

fn nondegenerate_norm(v: &[f64]) -> Result<f64> {
    let n = norm(v);
    if n > EPS_NORM {
        Ok(n)
    } else {
        Err(Error::DegenerateVector { norm: n })
    }
}

fn normalize_rows(batch: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut units = batch.clone();
    let mut norms = Vec::with_capacity(batch.rows());
    for i in 0..batch.rows() {
        let n = nondegenerate_norm(batch.row(i))?;
        for x in units.row_mut(i) {
            *x /= n;
        }
        norms.push(n);
    }
    Ok((units, norms))
}

/// Pulls a gradient on `w = v / ||v||` back to `v`.
fn back_normalize(g_w: &[f64], w: &[f64], v_norm: f64) -> Vec<f64> {
    let proj = dot(g_w, w);
    g_w.iter()
        .zip(w)
        .map(|(g, x)| (g - proj * x) / v_norm)
        .collect()
}

/// Mean per-anchor cross-entropy over unit rows `w`, where the positive of
/// anchor `i` is `i ± B` and every other row is a negative. Returns the
/// value and its gradient with respect to `w`.
///
/// With `P` the per-anchor softmax over `m != i` and `A = P - Pos`, the
/// gradient is `(A + A^T) W / (2B tau)`.
fn pair_softmax_loss(w: &Matrix, tau: f64) -> (f64, Matrix) {
    let n = w.rows();
    let b = n / 2;
    let partner = |i: usize| if i < b { i + b } else { i - b };

    let mut sims = Matrix::zeros(n, n);
    for i in 0..n {
        for m in i..n {
            let s = dot(w.row(i), w.row(m));
            sims.set(i, m, s);
            sims.set(m, i, s);
        }
    }

    let mut coeff = Matrix::zeros(n, n);
    let mut total = 0.0;
    for i in 0..n {
        let logits = sims.row(i);
        let max = (0..n)
            .filter(|&m| m != i)
            .map(|m| logits[m] / tau)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for m in (0..n).filter(|&m| m != i) {
            sum += (logits[m] / tau - max).exp();
        }
        let lse = max + sum.ln();
        total += lse - logits[partner(i)] / tau;
        let row = coeff.row_mut(i);
        for m in (0..n).filter(|&m| m != i) {
            row[m] = (logits[m] / tau - lse).exp();
        }
        row[partner(i)] -= 1.0;
    }

    let scale = 1.0 / (n as f64 * tau);
    let mut grads = Matrix::zeros(n, w.cols());
    for j in 0..n {
        let gj = grads.row_mut(j);
        for m in 0..n {
            let a = coeff.get(j, m) + coeff.get(m, j);
            if a != 0.0 {
                for (g, x) in gj.iter_mut().zip(w.row(m)) {
                    *g += scale * a * x;
                }
            }
        }
    }
    (total / n as f64, grads)
}
