//! Analysis quantities over feature matrices: uniformity, augmentation
//! similarity, confidence and angular histograms, and collapse detection
//! over a training history.
//!
//! Angles are in radians. In the mean-shifted frame a feature `z` is first
//! normalized and then shifted, `z/||z|| - c`, before any cosine is taken.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::geometry::{check_dim, cosine_sim, dot, norm, Center, Matrix, EPS_NORM};
use crate::trainer::TrainHistory;

/// Uniformity above this value marks a collapsed representation.
pub const COLLAPSE_UNIFORMITY: f64 = 1.0 - 1e-3;
pub const DEFAULT_SAMPLE_PAIRS: usize = 10_000;
pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    Origin,
    MeanShifted,
}

impl Frame {
    pub fn name(self) -> &'static str {
        match self {
            Frame::Origin => "origin",
            Frame::MeanShifted => "mean-shifted",
        }
    }
}

/// Statistics of one epoch in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub uniformity: f64,
    pub aug_similarity: f64,
    pub epoch: usize,
    pub frame: Frame,
}

/// Unit vectors representing every row in the requested frame.
pub fn frame_units(features: &Matrix, frame: Frame, c: &Center) -> Result<Matrix> {
    check_dim(c.dim(), features.cols())?;
    let mut out = features.normalized_rows()?;
    if frame == Frame::MeanShifted {
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (x, cc) in row.iter_mut().zip(c.as_slice()) {
                *x -= cc;
            }
            let n = norm(row);
            if !(n > EPS_NORM) {
                return Err(Error::DegenerateVector { norm: n });
            }
            row.iter_mut().for_each(|x| *x /= n);
        }
    }
    Ok(out)
}

/// Mean pairwise cosine similarity. Uses every distinct pair when
/// `sample_pairs` covers them all, otherwise a seeded sample of pairs.
pub fn uniformity(features: &Matrix, frame: Frame, c: &Center, sample_pairs: usize, seed: u64) -> Result<f64> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::InvariantViolation(format!("uniformity needs at least 2 rows, got {n}")));
    }
    let units = frame_units(features, frame, c)?;
    let cos = |i: usize, j: usize| dot(units.row(i), units.row(j)).clamp(-1.0, 1.0);
    let total_pairs = n * (n - 1) / 2;
    let mut sum = 0.0;
    if sample_pairs >= total_pairs {
        for i in 0..n {
            for j in i + 1..n {
                sum += cos(i, j);
            }
        }
        Ok(sum / total_pairs as f64)
    } else {
        let count = sample_pairs.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..count {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            sum += cos(i, j);
        }
        Ok(sum / count as f64)
    }
}

/// Mean cosine similarity between matching rows of two view matrices.
pub fn augmentation_similarity(first: &Matrix, second: &Matrix, frame: Frame, c: &Center) -> Result<f64> {
    check_dim(first.rows(), second.rows())?;
    if first.rows() == 0 {
        return Err(Error::InvariantViolation("no view pairs".into()));
    }
    let a = frame_units(first, frame, c)?;
    let b = frame_units(second, frame, c)?;
    let sum: f64 = (0..a.rows())
        .map(|i| dot(a.row(i), b.row(i)).clamp(-1.0, 1.0))
        .sum();
    Ok(sum / a.rows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramUnit {
    Radians,
    Norm,
}

/// Per-class counts over shared bins. The last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub unit: HistogramUnit,
    pub bin_edges: Vec<f64>,
    pub normal: Vec<u64>,
    pub anomalous: Vec<u64>,
}

impl Histogram {
    fn build(unit: HistogramUnit, lo: f64, hi: f64, bins: usize, values: &[f64], labels: &[Label]) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
        }
        check_dim(values.len(), labels.len())?;
        let width = (hi - lo) / bins as f64;
        let bin_edges = (0..=bins).map(|b| lo + width * b as f64).collect();
        let mut h = Self {
            unit,
            bin_edges,
            normal: vec![0; bins],
            anomalous: vec![0; bins],
        };
        for (&v, l) in values.iter().zip(labels) {
            let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            match l {
                Label::Normal => h.normal[b] += 1,
                Label::Anomalous => h.anomalous[b] += 1,
            }
        }
        Ok(h)
    }

    pub fn bins(&self) -> usize {
        self.normal.len()
    }

    /// Bins holding at least one sample of either class.
    pub fn occupied_bins(&self) -> usize {
        self.normal
            .iter()
            .zip(&self.anomalous)
            .filter(|(a, b)| **a + **b > 0)
            .count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Histogram of raw feature norms, equal-width over the observed range.
/// When every norm is equal the range is widened to one unit around it.
pub fn confidence_stats(raw_features: &Matrix, labels: &[Label], bins: usize) -> Result<Histogram> {
    check_dim(raw_features.rows(), labels.len())?;
    let norms: Vec<f64> = raw_features.iter_rows().map(norm).collect();
    let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Err(Error::InvariantViolation("no features to histogram".into()));
    }
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    Histogram::build(HistogramUnit::Norm, lo, hi, bins, &norms, labels)
}

/// Angle of each feature relative to the center, binned over `[0, pi]`.
///
/// * origin frame: angle between `z/||z||` and `c`;
/// * mean-shifted frame: angle between `z/||z|| - c` and `-c`, i.e. how far
///   the shifted feature points away from the direction back to the origin.
pub fn feature_angles(features: &Matrix, c: &Center, frame: Frame) -> Result<Vec<f64>> {
    let reference: Vec<f64> = match frame {
        Frame::Origin => c.as_slice().to_vec(),
        Frame::MeanShifted => c.as_slice().iter().map(|x| -x).collect(),
    };
    let units = frame_units(features, frame, c)?;
    units
        .iter_rows()
        .map(|u| cosine_sim(u, &reference).map(f64::acos))
        .collect()
}

pub fn angular_histogram(features: &Matrix, c: &Center, frame: Frame, labels: &[Label], bins: usize) -> Result<Histogram> {
    check_dim(features.rows(), labels.len())?;
    let angles = feature_angles(features, c, frame)?;
    Histogram::build(HistogramUnit::Radians, 0.0, std::f64::consts::PI, bins, &angles, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseReason {
    Uniformity,
    AucDrop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseRow {
    pub epoch: usize,
    pub uniformity: f64,
    pub auc: Option<f64>,
    pub running_max_auc: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub collapse_epoch: Option<usize>,
    pub reason: Option<CollapseReason>,
    pub rows: Vec<CollapseRow>,
}

impl CollapseReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,uniformity,auc,running_max_auc,flagged\n");
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:?}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:?},{},{},{}",
                r.epoch,
                r.uniformity,
                opt(r.auc),
                opt(r.running_max_auc),
                r.flagged
            );
        }
        s
    }
}

/// Finds the earliest epoch whose origin-frame uniformity exceeds
/// [`COLLAPSE_UNIFORMITY`] or whose AUC falls more than `auc_drop` below
/// the best AUC seen so far. `auc_by_epoch`, when given, overrides the
/// validation AUC stored in the history and is indexed like
/// [`TrainHistory::records`].
pub fn collapse_monitor(history: &TrainHistory, auc_by_epoch: Option<&[f64]>, auc_drop: f64) -> CollapseReport {
    let mut report = CollapseReport {
        collapse_epoch: None,
        reason: None,
        rows: Vec::new(),
    };
    let mut best: Option<f64> = None;
    for (idx, rec) in history.records().enumerate() {
        let auc = auc_by_epoch.map_or(rec.val_auc, |a| a.get(idx).copied());
        let mut reason = None;
        if rec.uniformity_origin > COLLAPSE_UNIFORMITY {
            reason = Some(CollapseReason::Uniformity);
        }
        if let (Some(a), Some(b)) = (auc, best) {
            if reason.is_none() && a < b - auc_drop {
                reason = Some(CollapseReason::AucDrop);
            }
        }
        best = match (best, auc) {
            (Some(b), Some(a)) => Some(b.max(a)),
            (None, a) => a,
            (b, None) => b,
        };
        if reason.is_some() && report.collapse_epoch.is_none() {
            report.collapse_epoch = Some(rec.epoch);
            report.reason = reason;
        }
        report.rows.push(CollapseRow {
            epoch: rec.epoch,
            uniformity: rec.uniformity_origin,
            auc,
            running_max_auc: best,
            flagged: reason.is_some(),
        });
    }
    report
}

/// Long-format rows `(epoch, metric, frame, value)` for every recorded
/// statistic. Metrics without a frame use the frame name `none`.
pub fn metric_rows(history: &TrainHistory) -> Vec<(usize, &'static str, &'static str, f64)> {
    let mut rows = Vec::new();
    for r in history.records() {
        rows.push((r.epoch, "uniformity", Frame::Origin.name(), r.uniformity_origin));
        rows.push((r.epoch, "uniformity", Frame::MeanShifted.name(), r.uniformity_shifted));
        rows.push((r.epoch, "aug_similarity", Frame::Origin.name(), r.aug_similarity_origin));
        rows.push((r.epoch, "aug_similarity", Frame::MeanShifted.name(), r.aug_similarity_shifted));
        if let Some(l) = r.loss {
            rows.push((r.epoch, "loss", "none", l));
        }
        if let Some(a) = r.val_auc {
            rows.push((r.epoch, "auc", "none", a));
        }
    }
    rows
}

/// Writes one `diag_<metric>_<frame>.csv` per (metric, frame) with header
/// `epoch,metric,frame,value`. Returns the files written.
pub fn write_metric_csvs(dir: &Path, history: &TrainHistory) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(String, String)> = Vec::new();
    for (epoch, metric, frame, value) in metric_rows(history) {
        let name = format!("diag_{metric}_{frame}.csv");
        let idx = match files.iter().position(|(n, _)| *n == name) {
            Some(i) => i,
            None => {
                files.push((name, String::from("epoch,metric,frame,value\n")));
                files.len() - 1
            }
        };
        let _ = writeln!(files[idx].1, "{epoch},{metric},{frame},{value:?}");
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
