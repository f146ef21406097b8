//! Vector primitives shared by every other module: a dense row-major
//! matrix, L2 normalization, cosine similarity, the frozen feature center
//! and mean-shifting.
//!
//! All arithmetic is `f64`. Dot products and norms sum in index order so
//! results do not depend on who calls them or from which thread.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this value are treated as directionless.
pub const EPS_NORM: f64 = 1e-12;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. An empty list gives a 0×0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// New matrix holding the selected rows in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Row-wise L2 normalization; fails on the first degenerate row.
    pub fn normalized_rows(&self) -> Result<Matrix> {
        let mut out = self.clone();
        for i in 0..self.rows {
            let n = norm(self.row(i));
            if !(n > EPS_NORM) {
                return Err(Error::DegenerateVector { norm: n });
            }
            for x in out.row_mut(i) {
                *x /= n;
            }
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[inline]
pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// Dot product, summed in index order.
#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v) {
        acc += a * b;
    }
    acc
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` onto the unit sphere.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > EPS_NORM) {
        return Err(Error::DegenerateVector { norm: n });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Cosine similarity clamped to `[-1, 1]`. Symmetric bit-for-bit.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(u.len(), v.len())?;
    let nu = norm(u);
    let nv = norm(v);
    for n in [nu, nv] {
        if !(n > EPS_NORM) {
            return Err(Error::DegenerateVector { norm: n });
        }
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Mean direction of the normalized training features, fixed before any
/// adaptation takes place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Center {
    c: Vec<f64>,
    source_count: usize,
}

impl Center {
    /// Wraps an explicit center vector. It must lie in the unit ball.
    pub fn new(c: Vec<f64>, source_count: usize) -> Result<Self> {
        let n = norm(&c);
        if !(n <= 1.0 + 1e-12) || c.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "center norm {n} exceeds the unit ball"
            )));
        }
        Ok(Self { c, source_count })
    }

    /// The origin; turns every mean-shifted quantity into its plain form.
    pub fn zero(dim: usize) -> Self {
        Self {
            c: vec![0.0; dim],
            source_count: 0,
        }
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }
}

/// Mean of the L2-normalized rows, accumulated with Neumaier summation so
/// the result does not depend on row order.
pub fn compute_center<'a, I>(train_features: I) -> Result<Center>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut sums: Vec<NeumaierSum> = Vec::new();
    let mut count = 0usize;
    for v in train_features {
        if count == 0 {
            sums = vec![NeumaierSum::default(); v.len()];
        } else {
            check_dim(sums.len(), v.len())?;
        }
        let u = l2_normalize(v)?;
        for (s, x) in sums.iter_mut().zip(&u) {
            s.add(*x);
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let c = sums.iter().map(|s| s.total() / count as f64).collect();
    Center::new(c, count)
}

/// `u - c`. The result is generally not unit length and may be zero.
pub fn mean_shift(u_normalized: &[f64], center: &Center) -> Result<Vec<f64>> {
    check_dim(center.dim(), u_normalized.len())?;
    debug_assert!((norm(u_normalized) - 1.0).abs() < 1e-6);
    Ok(u_normalized
        .iter()
        .zip(center.as_slice())
        .map(|(a, b)| a - b)
        .collect())
}

#[derive(Debug, Clone, Copy, Default)]
struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}
