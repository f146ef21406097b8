//! Seeded synthetic "pre-trained" feature clouds: normal samples inside a
//! spherical cap around a random pole, anomalies from the rest of the sphere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureSet, Label};
use crate::error::{Error, Result};
use crate::geometry::{dot, l2_normalize, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapBenchmark {
    pub dim: usize,
    pub n_train: usize,
    pub n_test_normal: usize,
    pub n_test_anomalous: usize,
    /// Angular radius of the normal cap in degrees.
    pub cap_deg: f64,
    /// When set, normal directions only vary inside this many tangent
    /// directions at the pole.
    pub intrinsic_dim: Option<usize>,
    /// Raw norms (confidence) are drawn uniformly from this range.
    pub norm_range: (f64, f64),
    pub seed: u64,
}

impl Default for CapBenchmark {
    fn default() -> Self {
        Self {
            dim: 16,
            n_train: 512,
            n_test_normal: 256,
            n_test_anomalous: 256,
            cap_deg: 15.0,
            intrinsic_dim: Some(3),
            norm_range: (0.8, 1.2),
            seed: 0,
        }
    }
}

impl CapBenchmark {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.dim < 2 {
            return bad("dim must be >= 2");
        }
        if !(self.cap_deg > 0.0 && self.cap_deg < 180.0) {
            return bad("cap angle must lie in (0, 180) degrees");
        }
        if let Some(m) = self.intrinsic_dim {
            if m == 0 || m >= self.dim {
                return bad("intrinsic dim must lie in [1, dim)");
            }
        }
        let (lo, hi) = self.norm_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("norm range must satisfy 0 < lo <= hi");
        }
        if self.n_train == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        Ok(())
    }

    /// Cosine of the cap radius.
    pub fn cap_cos(&self) -> f64 {
        self.cap_deg.to_radians().cos()
    }

    /// Unit direction at the middle of the normal cap.
    pub fn pole(&self) -> Vec<f64> {
        gaussian_unit(self.dim, &mut ChaCha8Rng::seed_from_u64(self.seed))
    }

    /// (all-normal training set, labeled test set). Test rows list the
    /// normals first, then the anomalies.
    pub fn generate(&self) -> Result<(FeatureSet, FeatureSet)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let pole = gaussian_unit(self.dim, &mut rng);
        let basis = tangent_basis(&pole, self.intrinsic_dim.unwrap_or(self.dim - 1), &mut rng);

        let mut train = Matrix::zeros(self.n_train, self.dim);
        for i in 0..self.n_train {
            let u = self.cap_point(&pole, &basis, &mut rng);
            self.scaled(&u, &mut rng, train.row_mut(i));
        }
        let n_test = self.n_test_normal + self.n_test_anomalous;
        let mut test = Matrix::zeros(n_test, self.dim);
        let mut labels = Vec::with_capacity(n_test);
        for i in 0..self.n_test_normal {
            let u = self.cap_point(&pole, &basis, &mut rng);
            self.scaled(&u, &mut rng, test.row_mut(i));
            labels.push(Label::Normal);
        }
        let cap_cos = self.cap_cos();
        for i in self.n_test_normal..n_test {
            let u = loop {
                let v = gaussian_unit(self.dim, &mut rng);
                if dot(&v, &pole) < cap_cos {
                    break v;
                }
            };
            self.scaled(&u, &mut rng, test.row_mut(i));
            labels.push(Label::Anomalous);
        }
        Ok((FeatureSet::from_matrix(&train, None)?, FeatureSet::from_matrix(&test, Some(labels))?))
    }

    /// Unit vector at angle `cap * s^(1/m)` from the pole, `s ~ U(0,1)`, along
    /// a random direction of the tangent basis.
    fn cap_point<R: Rng>(&self, pole: &[f64], basis: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
        let m = basis.len() as f64;
        let theta = self.cap_deg.to_radians() * rng.random::<f64>().powf(1.0 / m);
        let coef = gaussian_unit(basis.len(), rng);
        let mut t = vec![0.0; self.dim];
        for (b, a) in basis.iter().zip(&coef) {
            t.iter_mut().zip(b).for_each(|(x, y)| *x += a * y);
        }
        pole.iter().zip(&t).map(|(p, q)| theta.cos() * p + theta.sin() * q).collect()
    }

    fn scaled<R: Rng>(&self, u: &[f64], rng: &mut R, out: &mut [f64]) {
        let (lo, hi) = self.norm_range;
        let r = if hi > lo { rng.random_range(lo..hi) } else { lo };
        out.iter_mut().zip(u).for_each(|(o, x)| *o = r * x);
    }
}

fn gaussian_unit<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(u) = l2_normalize(&v) {
            return u;
        }
    }
}

/// `m` orthonormal vectors orthogonal to `pole` (Gram-Schmidt on gaussians).
fn tangent_basis<R: Rng>(pole: &[f64], m: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    while basis.len() < m {
        let mut v = gaussian_unit(pole.len(), rng);
        for b in std::iter::once(pole).chain(basis.iter().map(Vec::as_slice)) {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        if let Ok(u) = l2_normalize(&v) {
            if crate::geometry::norm(&v) > 1e-6 {
                basis.push(u);
            }
        }
    }
    basis
}
