//! Anomaly scoring against a gallery of normalized exemplars, k-means
//! gallery compression, ROC-AUC and report output.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{adapter_forward_batch, AdapterParams};
use crate::data::{FeatureSet, Label};
use crate::error::{Error, Result};
use crate::geometry::{check_dim, dot, l2_normalize, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GalleryKind {
    FullTrain,
    KmeansCentroids,
}

/// Unit-norm exemplars that queries are compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    exemplars: Matrix,
    kind: GalleryKind,
    kmeans_k: Option<usize>,
}

impl Gallery {
    /// Normalizes every row of `features` and keeps all of them.
    pub fn full(features: &Matrix) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        Ok(Self {
            exemplars: features.normalized_rows()?,
            kind: GalleryKind::FullTrain,
            kmeans_k: None,
        })
    }

    /// Full gallery of the adapted training features.
    pub fn from_train(train_raw: &Matrix, params: &AdapterParams) -> Result<Self> {
        Self::full(&adapter_forward_batch(train_raw, params)?)
    }

    /// Wraps rows that are already gallery exemplars (e.g. loaded centroids).
    pub fn from_exemplars(exemplars: &Matrix, kind: GalleryKind) -> Result<Self> {
        let mut g = Self::full(exemplars)?;
        g.kind = kind;
        if kind == GalleryKind::KmeansCentroids {
            g.kmeans_k = Some(exemplars.rows());
        }
        Ok(g)
    }

    pub fn exemplars(&self) -> &Matrix {
        &self.exemplars
    }

    pub fn kind(&self) -> GalleryKind {
        self.kind
    }

    pub fn kmeans_k(&self) -> Option<usize> {
        self.kmeans_k
    }

    pub fn len(&self) -> usize {
        self.exemplars.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.exemplars.cols()
    }
}

/// Sum of `1 - cos` over the `k` most similar gallery rows. Equal
/// similarities are resolved in favour of the lower row index.
pub fn knn_score(query: &[f64], gallery: &Gallery, k: usize) -> Result<f64> {
    check_dim(gallery.dim(), query.len())?;
    if k == 0 || k > gallery.len() {
        return Err(Error::KOutOfRange { k, max: gallery.len() });
    }
    let q = l2_normalize(query)?;
    let mut sims: Vec<(f64, usize)> = gallery
        .exemplars
        .iter_rows()
        .enumerate()
        .map(|(i, g)| (dot(&q, g).clamp(-1.0, 1.0), i))
        .collect();
    let by_rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < sims.len() {
        sims.select_nth_unstable_by(k - 1, by_rank);
        sims.truncate(k);
    }
    sims.sort_by(by_rank);
    Ok(sims.iter().map(|(s, _)| 1.0 - s).sum())
}

/// Result of a k-means fit on unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Cluster means, before re-normalization.
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each assignment step, ending with the
    /// value for the final means.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("at least one step")
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn kmeans_pp_seed(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total mass")
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    chosen
}

/// Lloyd's algorithm with k-means++ seeding on the given rows.
pub fn kmeans_fit(points: &Matrix, k: usize, seed: u64, max_iters: usize) -> Result<KMeansFit> {
    let n = points.rows();
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, max: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = points.select_rows(&kmeans_pp_seed(points, k, &mut rng));
    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let step: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest(points.row(i), &centroids))
            .collect();
        history.push(step.iter().map(|s| s.1).sum());
        let next: Vec<usize> = step.iter().map(|s| s.0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
        centroids = cluster_means(points, &assignments, &centroids, &step);
    }
    centroids = cluster_means(points, &assignments, &centroids, &[]);
    let final_obj = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(assignments[i])))
        .sum();
    history.push(final_obj);
    Ok(KMeansFit {
        centroids,
        assignments,
        objective_history: history,
        iterations,
    })
}

/// Means of each cluster. An empty cluster takes over the point farthest
/// from its current centroid, which can only lower the objective.
fn cluster_means(points: &Matrix, assignments: &[usize], prev: &Matrix, step: &[(usize, f64)]) -> Matrix {
    let k = prev.rows();
    let mut sums = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, x) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    let mut taken = vec![false; points.rows()];
    for j in 0..k {
        if counts[j] == 0 {
            let donor = if step.is_empty() {
                None
            } else {
                (0..points.rows())
                    .filter(|&i| !taken[i] && counts[assignments[i]] > 1)
                    .max_by(|&a, &b| step[a].1.total_cmp(&step[b].1).then(b.cmp(&a)))
            };
            match donor {
                Some(i) => {
                    taken[i] = true;
                    sums.row_mut(j).copy_from_slice(points.row(i));
                }
                None => sums.row_mut(j).copy_from_slice(prev.row(j)),
            }
            counts[j] = 1;
        } else {
            let c = counts[j] as f64;
            sums.row_mut(j).iter_mut().for_each(|s| *s /= c);
        }
    }
    sums
}

/// Compresses unit-norm training features to `k` re-normalized centroids.
pub fn kmeans_compress(train_features: &Matrix, k: usize, seed: u64, max_iters: usize) -> Result<Gallery> {
    let fit = kmeans_fit(train_features, k, seed, max_iters)?;
    Ok(Gallery {
        exemplars: fit.centroids.normalized_rows()?,
        kind: GalleryKind::KmeansCentroids,
        kmeans_k: Some(k),
    })
}

/// Probability that a random anomalous score exceeds a random normal one,
/// ties counting one half (Mann-Whitney U with midranks).
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    check_dim(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvariantViolation("NaN score".into()));
    }
    let n_anom = labels.iter().filter(|l| l.is_anomalous()).count();
    let n_norm = labels.len() - n_anom;
    if n_anom == 0 || n_norm == 0 {
        return Err(Error::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&o| labels[o].is_anomalous()).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_anom * (n_anom + 1)) as f64 / 2.0;
    Ok(u / (n_anom as f64 * n_norm as f64))
}

/// Anomalous iff `score > threshold`.
pub fn classify(score: f64, threshold: f64) -> Label {
    match score.partial_cmp(&threshold) {
        Some(Ordering::Greater) => Label::Anomalous,
        _ => Label::Normal,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scores: Vec<f64>,
    pub labels: Option<Vec<Label>>,
    pub roc_auc: Option<f64>,
    pub k: usize,
    pub gallery_kind: GalleryKind,
    pub gallery_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub auc: Option<f64>,
    pub k: usize,
    pub gallery_kind: GalleryKind,
    pub gallery_size: usize,
    pub queries: usize,
}

impl ScoreReport {
    pub fn summary(&self) -> ScoreSummary {
        ScoreSummary {
            auc: self.roc_auc,
            k: self.k,
            gallery_kind: self.gallery_kind,
            gallery_size: self.gallery_size,
            queries: self.scores.len(),
        }
    }

    /// `query_id,score,label`; the label cell is empty for unlabeled queries.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("query_id,score,label\n");
        for (i, score) in self.scores.iter().enumerate() {
            let label = self
                .labels
                .as_ref()
                .map_or(String::new(), |l| l[i].as_u8().to_string());
            s.push_str(&format!("{i},{score:?},{label}\n"));
        }
        s
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        fs::write(csv_path, self.to_csv())?;
        fs::write(json_path, serde_json::to_string_pretty(&self.summary())?)?;
        Ok(())
    }
}

/// Scores every row of `queries` (raw features) after adaptation.
pub fn score_all(queries: &Matrix, params: &AdapterParams, gallery: &Gallery, k: usize) -> Result<Vec<f64>> {
    let adapted = adapter_forward_batch(queries, params)?;
    (0..adapted.rows())
        .into_par_iter()
        .map(|i| knn_score(adapted.row(i), gallery, k))
        .collect()
}

/// Adapts and scores the test set; computes ROC-AUC when it is labeled.
pub fn evaluate(test_fs: &FeatureSet, params: &AdapterParams, gallery: &Gallery, k: usize) -> Result<ScoreReport> {
    let scores = score_all(&test_fs.to_matrix(), params, gallery, k)?;
    let labels = test_fs.labels().map(|l| l.to_vec());
    let roc_auc = labels.as_deref().map(|l| roc_auc(&scores, l)).transpose()?;
    Ok(ScoreReport {
        scores,
        labels,
        roc_auc,
        k,
        gallery_kind: gallery.kind,
        gallery_size: gallery.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[Label]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (a, la) in scores.iter().zip(labels) {
            for (b, lb) in scores.iter().zip(labels) {
                if la.is_anomalous() && !lb.is_anomalous() {
                    pairs += 1.0;
                    if a > b {
                        wins += 1.0;
                    } else if a == b {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_u8(b).unwrap()).collect()
    }

    #[test]
    fn auc_examples() {
        let l = labels(&[0, 0, 1, 1]);
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &l).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &l).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 4], &l).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &labels(&[0, 0])), Err(Error::SingleClassLabels)));
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(
            data in prop::collection::vec((0u8..6, 0u8..2), 2..50)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 * 0.1).collect();
            let l: Vec<Label> = data.iter().map(|d| Label::from_u8(d.1).unwrap()).collect();
            prop_assume!(l.iter().any(|x| x.is_anomalous()) && l.iter().any(|x| !x.is_anomalous()));
            let a = roc_auc(&scores, &l).unwrap();
            prop_assert!((a - brute_auc(&scores, &l)).abs() < 1e-12);
            let exp: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 - 1.0).collect();
            prop_assert!((roc_auc(&exp, &l).unwrap() - a).abs() < 1e-12);
        }

        #[test]
        fn auc_flip_complement(
            data in prop::collection::vec((-1e3f64..1e3, 0u8..2), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let l: Vec<Label> = data.iter().map(|d| Label::from_u8(d.1).unwrap()).collect();
            prop_assume!(l.iter().any(|x| x.is_anomalous()) && l.iter().any(|x| !x.is_anomalous()));
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert!((roc_auc(&scores, &l).unwrap() + roc_auc(&neg, &l).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_is_strict() {
        assert_eq!(classify(0.5, 0.5), Label::Normal);
        assert_eq!(classify(0.6, 0.5), Label::Anomalous);
        assert_eq!(classify(0.0, 0.0), Label::Normal);
        assert_eq!(classify(0.0, 3.0), Label::Normal);
    }

    fn gallery5() -> Gallery {
        Gallery::full(
            &Matrix::from_rows(&[
                [1.0, 0.0, 0.0],
                [0.0, 2.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 0.0, -3.0],
                [1.0, -1.0, 1.0],
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn knn_examples() {
        let g = gallery5();
        assert_eq!(knn_score(&[0.0, 5.0, 0.0], &g, 1).unwrap(), 0.0);
        let orth = Gallery::full(&Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(knn_score(&[0.0, 0.0, 2.0], &orth, 2).unwrap(), 2.0);
        assert!(matches!(knn_score(&[1.0, 0.0, 0.0], &g, 0), Err(Error::KOutOfRange { .. })));
        assert!(matches!(knn_score(&[1.0, 0.0, 0.0], &g, 6), Err(Error::KOutOfRange { .. })));
        assert!(knn_score(&[0.0, 0.0, 0.0], &g, 1).is_err());
    }

    #[test]
    fn knn_against_exhaustive_sort() {
        let g = gallery5();
        let raw = [
            [1.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 0.0, -3.0],
            [1.0, -1.0, 1.0],
        ];
        let q = [0.4, 0.9, -0.2];
        let qn = (q.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let mut sims: Vec<f64> = raw
            .iter()
            .map(|r| {
                let rn = (r.iter().map(|x| x * x).sum::<f64>()).sqrt();
                r.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / (rn * qn)
            })
            .collect();
        sims.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let expected = (1.0 - sims[0]) + (1.0 - sims[1]);
        assert!((knn_score(&q, &g, 2).unwrap() - expected).abs() < 1e-12);
        let scaled: Vec<f64> = q.iter().map(|x| x * 123.0).collect();
        assert!((knn_score(&scaled, &g, 2).unwrap() - expected).abs() < 1e-12);
        let mut prev = 0.0;
        for k in 1..=5 {
            let s = knn_score(&q, &g, k).unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }

    fn unit_rows(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap().normalized_rows().unwrap()
    }

    #[test]
    fn kmeans_single_centroid_is_normalized_mean() {
        let pts = unit_rows(&[[1.0, 0.1], [1.0, -0.3], [0.8, 0.5]]);
        let g = kmeans_compress(&pts, 1, 0, 50).unwrap();
        let mean: Vec<f64> = (0..2).map(|j| (0..3).map(|i| pts.get(i, j)).sum::<f64>() / 3.0).collect();
        let want = l2_normalize(&mean).unwrap();
        for (a, b) in g.exemplars().row(0).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(g.kind(), GalleryKind::KmeansCentroids);
        assert!(matches!(kmeans_compress(&pts, 4, 0, 10), Err(Error::KOutOfRange { .. })));
    }

    #[test]
    fn kmeans_k_equals_n_recovers_inputs() {
        let pts = unit_rows(&[[1.0, 0.1], [1.0, -0.3], [0.8, 0.5], [-1.0, 0.2], [0.0, 1.0]]);
        for seed in 0..5 {
            let g = kmeans_compress(&pts, 5, seed, 50).unwrap();
            let mut found = [false; 5];
            for c in g.exemplars().iter_rows() {
                let i = (0..5)
                    .find(|&i| sq_dist(pts.row(i), c) < 1e-24)
                    .expect("centroid equals an input");
                found[i] = true;
            }
            assert!(found.iter().all(|&f| f));
        }
    }

    /// Minimum k-means objective over every 2-way split.
    fn brute_two_means(pts: &Matrix) -> f64 {
        let n = pts.rows();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) - 1 {
            let mut total = 0.0;
            for side in [true, false] {
                let idx: Vec<usize> = (0..n).filter(|&i| ((mask >> i) & 1 == 1) == side).collect();
                let mean: Vec<f64> = (0..pts.cols())
                    .map(|j| idx.iter().map(|&i| pts.get(i, j)).sum::<f64>() / idx.len() as f64)
                    .collect();
                total += idx.iter().map(|&i| sq_dist(pts.row(i), &mean)).sum::<f64>();
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn kmeans_two_clusters_against_enumeration() {
        let pts = unit_rows(&[[1.0, 0.05], [1.0, -0.05], [0.98, 0.1], [-0.1, 1.0], [0.05, 1.0], [0.0, 0.97]]);
        let fit = kmeans_fit(&pts, 2, 7, 100).unwrap();
        assert!((fit.objective() - brute_two_means(&pts)).abs() < 1e-9);
        assert_eq!(fit.assignments[0], fit.assignments[1]);
        assert_ne!(fit.assignments[0], fit.assignments[3]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn kmeans_monotone_and_near_brute_force(
            raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 2..=8)
        ) {
            prop_assume!(raw.iter().all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-2));
            let pts = Matrix::from_rows(&raw).unwrap().normalized_rows().unwrap();
            let brute = brute_two_means(&pts);
            let mut best = f64::INFINITY;
            for seed in 0..16 {
                let fit = kmeans_fit(&pts, 2, seed, 100).unwrap();
                for w in fit.objective_history.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-12);
                }
                prop_assert!(fit.objective() >= brute - 1e-9);
                if fit.objective() > brute + 1e-9 {
                    // Lloyd fixed point: every point already sits with its nearest mean.
                    for i in 0..pts.rows() {
                        let own = sq_dist(pts.row(i), fit.centroids.row(fit.assignments[i]));
                        for c in 0..2 {
                            prop_assert!(own <= sq_dist(pts.row(i), fit.centroids.row(c)) + 1e-12);
                        }
                    }
                }
                best = best.min(fit.objective());
            }
            prop_assert!(best >= brute - 1e-9);
        }
    }

    #[test]
    fn evaluate_constructed_separation() {
        let train = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.9, 0.1, 0.0]]).unwrap();
        let params = AdapterParams::zeros(3, 3);
        let g = Gallery::from_train(&train, &params).unwrap();
        let test = FeatureSet::new(
            3,
            vec![1.0, 0.0, 0.0, 0.9, 0.1, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -2.0],
            Some(labels(&[0, 0, 1, 1])),
            None,
        )
        .unwrap();
        let r = evaluate(&test, &params, &g, 1).unwrap();
        assert_eq!(r.roc_auc, Some(1.0));
        assert!(r.scores[0].abs() < 1e-7 && r.scores[1].abs() < 1e-7);
    }

    #[test]
    fn evaluate_three_point_toy() {
        // Gallery {(1,0), (0,1)}; queries (1,1) normal, (1,0) normal, (-1,0) anomalous.
        // k = 1 scores: 1 - 1/sqrt(2), 0, 1 - 0 = 1 (best is (0,1) with cos 0).
        let train = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let params = AdapterParams::zeros(2, 2);
        let g = Gallery::from_train(&train, &params).unwrap();
        let test = FeatureSet::new(2, vec![1.0, 1.0, 1.0, 0.0, -1.0, 0.0], Some(labels(&[0, 0, 1])), None).unwrap();
        let r = evaluate(&test, &params, &g, 1).unwrap();
        let want = [1.0 - std::f64::consts::FRAC_1_SQRT_2, 0.0, 1.0];
        for (a, b) in r.scores.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(r.roc_auc, Some(1.0));
        assert_eq!(r.gallery_size, 2);
        let csv = r.to_csv();
        assert!(csv.starts_with("query_id,score,label\n0,"));
        assert_eq!(csv.lines().count(), 4);
    }
}
