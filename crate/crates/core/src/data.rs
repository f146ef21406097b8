//! Feature sets, their on-disk formats, and two-view batch construction.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "MSCF"            4 bytes magic
//! version   u32     currently 1
//! n         u64     rows
//! d         u64     dimension
//! flags     u32     bit0 = labels present, bit1 = view pairing present
//! features  n*d f32 row-major
//! labels    n u8    optional, 0 normal / 1 anomalous
//! view_of   n u64   optional, partner row of each row
//! ```
//!
//! CSV carries a required header line, one vector per row and an optional
//! trailing `label` column.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm, Matrix};

pub const MAGIC: &[u8; 4] = b"MSCF";
pub const FORMAT_VERSION: u32 = 1;
const FLAG_LABELS: u32 = 1;
const FLAG_VIEWS: u32 = 1 << 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Anomalous => 1,
        }
    }

    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(Label::Normal),
            1 => Some(Label::Anomalous),
            _ => None,
        }
    }

    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` means CSV, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

/// Raw embedding rows with optional evaluation labels and view pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    n: usize,
    d: usize,
    features: Vec<f32>,
    labels: Option<Vec<Label>>,
    view_of: Option<Vec<u64>>,
}

impl FeatureSet {
    pub fn new(
        d: usize,
        features: Vec<f32>,
        labels: Option<Vec<Label>>,
        view_of: Option<Vec<u64>>,
    ) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvariantViolation(format!(
                "feature dimension must be at least 2, got {d}"
            )));
        }
        if features.is_empty() || !features.len().is_multiple_of(d) {
            return Err(Error::InvariantViolation(format!(
                "{} values do not form a non-empty set of rows of dimension {d}",
                features.len()
            )));
        }
        let n = features.len() / d;
        if let Some(i) = features.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "non-finite value in row {}",
                i / d
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::InvariantViolation(format!(
                    "{} labels for {n} rows",
                    l.len()
                )));
            }
        }
        if let Some(v) = &view_of {
            validate_involution(v, n)?;
        }
        Ok(Self {
            n,
            d,
            features,
            labels,
            view_of,
        })
    }

    /// Rounds each entry to `f32`, the storage precision.
    pub fn from_matrix(m: &Matrix, labels: Option<Vec<Label>>) -> Result<Self> {
        let features = m.as_slice().iter().map(|&x| x as f32).collect();
        Self::new(m.cols(), features, labels, None)
    }

    pub fn with_view_of(self, view_of: Vec<u64>) -> Result<Self> {
        Self::new(self.d, self.features, self.labels, Some(view_of))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&x| f64::from(x)).collect()
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn view_of(&self) -> Option<&[u64]> {
        self.view_of.as_deref()
    }

    pub fn to_matrix(&self) -> Matrix {
        let data = self.features.iter().map(|&x| f64::from(x)).collect();
        Matrix::from_vec(self.n, self.d, data).expect("shape checked at construction")
    }

    /// True when no row is labeled anomalous.
    pub fn is_training_split(&self) -> bool {
        self.labels
            .as_ref()
            .is_none_or(|l| l.iter().all(|x| *x == Label::Normal))
    }

    /// Mean raw L2 norm, the "confidence" scale of the set.
    pub fn mean_norm(&self) -> f64 {
        let total: f64 = (0..self.n).map(|i| norm(&self.row_f64(i))).sum();
        total / self.n as f64
    }
}

fn validate_involution(view_of: &[u64], n: usize) -> Result<()> {
    if view_of.len() != n {
        return Err(Error::InvariantViolation(format!(
            "{} view indices for {n} rows",
            view_of.len()
        )));
    }
    for (i, &j) in view_of.iter().enumerate() {
        let j = j as usize;
        if j >= n || j == i || view_of[j] as usize != i {
            return Err(Error::InvariantViolation(format!(
                "view pairing is not an involution at row {i}"
            )));
        }
    }
    Ok(())
}

pub fn load_feature_set(path: &Path, format: Format) -> Result<FeatureSet> {
    let bytes = fs::read(path)?;
    match format {
        Format::Binary => decode_binary(&bytes),
        Format::Csv => {
            let text = String::from_utf8(bytes)
                .map_err(|e| Error::parse(format!("byte {}", e.utf8_error().valid_up_to()), "invalid UTF-8"))?;
            parse_csv(&text)
        }
    }
}

pub fn save_feature_set(fs_: &FeatureSet, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Binary => fs::write(path, encode_binary(fs_))?,
        Format::Csv => {
            if fs_.view_of.is_some() {
                return Err(Error::InvalidConfig(
                    "CSV cannot carry view pairings; use the binary format".into(),
                ));
            }
            let mut w = BufWriter::new(fs::File::create(path)?);
            w.write_all(render_csv(fs_).as_bytes())?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn encode_binary(fs_: &FeatureSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + fs_.features.len() * 4 + fs_.n * 9);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(fs_.n as u64).to_le_bytes());
    out.extend_from_slice(&(fs_.d as u64).to_le_bytes());
    let mut flags = 0u32;
    if fs_.labels.is_some() {
        flags |= FLAG_LABELS;
    }
    if fs_.view_of.is_some() {
        flags |= FLAG_VIEWS;
    }
    out.extend_from_slice(&flags.to_le_bytes());
    for x in &fs_.features {
        out.extend_from_slice(&x.to_le_bytes());
    }
    if let Some(labels) = &fs_.labels {
        out.extend(labels.iter().map(|l| l.as_u8()));
    }
    if let Some(v) = &fs_.view_of {
        for j in v {
            out.extend_from_slice(&j.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::parse(
                format!("byte {}", self.pos),
                format!("unexpected end of data while reading {what}"),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<FeatureSet> {
    if bytes.is_empty() {
        return Err(Error::parse("byte 0", "empty file"));
    }
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::parse("byte 0", "bad magic, expected \"MSCF\""));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::parse("byte 4", format!("unsupported version {version}")));
    }
    let n = r.u64("row count")? as usize;
    let d = r.u64("dimension")? as usize;
    let flags_at = r.pos;
    let flags = r.u32("flags")?;
    if flags & !(FLAG_LABELS | FLAG_VIEWS) != 0 {
        return Err(Error::parse(format!("byte {flags_at}"), format!("unknown flag bits {flags:#x}")));
    }
    let count = n
        .checked_mul(d)
        .filter(|c| c.checked_mul(4).is_some_and(|b| b <= bytes.len()))
        .ok_or_else(|| Error::parse(format!("byte {}", r.pos), "declared shape exceeds file size"))?;
    let raw = r.take(count * 4, "features")?;
    let features = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = if flags & FLAG_LABELS != 0 {
        let start = r.pos;
        let raw = r.take(n, "labels")?;
        let mut out = Vec::with_capacity(n);
        for (i, &b) in raw.iter().enumerate() {
            out.push(Label::from_u8(b).ok_or_else(|| {
                Error::parse(format!("byte {}", start + i), format!("invalid label byte {b}"))
            })?);
        }
        Some(out)
    } else {
        None
    };
    let view_of = if flags & FLAG_VIEWS != 0 {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(r.u64("view index")?);
        }
        Some(v)
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(Error::parse(
            format!("byte {}", r.pos),
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    FeatureSet::new(d, features, labels, view_of)
}

pub fn render_csv(fs_: &FeatureSet) -> String {
    let mut s = String::new();
    let header: Vec<String> = (0..fs_.d).map(|j| format!("f{j}")).collect();
    s.push_str(&header.join(","));
    if fs_.labels.is_some() {
        s.push_str(",label");
    }
    s.push('\n');
    for i in 0..fs_.n {
        let cells: Vec<String> = fs_.row(i).iter().map(|x| x.to_string()).collect();
        s.push_str(&cells.join(","));
        if let Some(l) = &fs_.labels {
            s.push(',');
            s.push_str(&l[i].as_u8().to_string());
        }
        s.push('\n');
    }
    s
}

pub fn parse_csv(text: &str) -> Result<FeatureSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse("line 1", "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_label = cols.last().is_some_and(|c| c.eq_ignore_ascii_case("label"));
    let d = cols.len() - usize::from(has_label);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(Error::parse(
                format!("line {lineno}"),
                format!("expected {} fields, found {}", cols.len(), cells.len()),
            ));
        }
        for (j, c) in cells[..d].iter().enumerate() {
            let v: f32 = c.parse().map_err(|_| {
                Error::parse(format!("line {lineno}"), format!("field {} is not a number: {c:?}", j + 1))
            })?;
            features.push(v);
        }
        if has_label {
            let c = cells[d];
            let l = match c.to_ascii_lowercase().as_str() {
                "0" | "normal" => Label::Normal,
                "1" | "anomalous" => Label::Anomalous,
                _ => {
                    return Err(Error::parse(format!("line {lineno}"), format!("invalid label {c:?}")))
                }
            };
            labels.push(l);
        }
    }
    if features.is_empty() {
        return Err(Error::parse("line 2", "no data rows"));
    }
    FeatureSet::new(d, features, has_label.then_some(labels), None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentMode {
    /// Use the view pairing stored with the feature set.
    PairedViews,
    /// Two noisy copies `x + eta` of each row, `eta ~ N(0, s^2 I)`.
    GaussianJitter,
}

/// How the two views of each training sample are produced.
///
/// In jitter mode the noise standard deviation is `sigma` times the mean
/// raw norm of the feature set, so `sigma` is scale-free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub mode: AugmentMode,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            mode: AugmentMode::GaussianJitter,
            sigma: 0.01,
            seed: 0,
        }
    }
}

impl AugmentationPolicy {
    pub fn jitter(sigma: f64, seed: u64) -> Self {
        Self {
            mode: AugmentMode::GaussianJitter,
            sigma,
            seed,
        }
    }

    pub fn paired() -> Self {
        Self {
            mode: AugmentMode::PairedViews,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self, fs_: &FeatureSet) -> Result<()> {
        match self.mode {
            AugmentMode::PairedViews if fs_.view_of.is_none() => Err(Error::PolicyMismatch(
                "paired views requested but the feature set has no view pairing".into(),
            )),
            AugmentMode::GaussianJitter if !(self.sigma >= 0.0 && self.sigma.is_finite()) => {
                Err(Error::InvalidConfig(format!("jitter sigma must be finite and >= 0, got {}", self.sigma)))
            }
            _ => Ok(()),
        }
    }

    /// One (first view, second view) pair per source sample, in source order.
    pub fn view_pairs(&self, fs_: &FeatureSet, seed: u64) -> Result<(Matrix, Matrix)> {
        let mut sampler = BatchSampler::new(fs_, *self, fs_.len().max(1), seed)?;
        let units = sampler.units.clone();
        let b = units.len();
        let mut first = Matrix::zeros(b, fs_.dim());
        let mut second = Matrix::zeros(b, fs_.dim());
        for (k, &(a, p)) in units.iter().enumerate() {
            sampler.fill_view(a, first.row_mut(k));
            sampler.fill_view(p, second.row_mut(k));
        }
        Ok((first, second))
    }
}

/// `2B` rows where rows `i` and `i + B` are views of the same sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub rows: Matrix,
    /// Feature-set row each batch row was derived from.
    pub source_ids: Vec<usize>,
}

impl Batch {
    /// Number of positive pairs `B`.
    pub fn pairs(&self) -> usize {
        self.rows.rows() / 2
    }
}

/// Seeded, single-owner generator of shuffled two-view batches.
pub struct BatchSampler<'a> {
    fs: &'a FeatureSet,
    policy: AugmentationPolicy,
    batch_size: usize,
    order_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    noise_std: f64,
    /// (first view row, second view row) per source sample.
    units: Vec<(usize, usize)>,
}

impl<'a> BatchSampler<'a> {
    pub fn new(
        fs_: &'a FeatureSet,
        policy: AugmentationPolicy,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !fs_.is_training_split() {
            return Err(Error::InvariantViolation(
                "training split contains rows labeled anomalous".into(),
            ));
        }
        policy.validate(fs_)?;
        let units = match (policy.mode, fs_.view_of()) {
            (AugmentMode::PairedViews, Some(v)) => v
                .iter()
                .enumerate()
                .filter(|&(i, &j)| i < j as usize)
                .map(|(i, &j)| (i, j as usize))
                .collect(),
            _ => (0..fs_.len()).map(|i| (i, i)).collect(),
        };
        let noise_std = match policy.mode {
            AugmentMode::GaussianJitter => policy.sigma * fs_.mean_norm(),
            AugmentMode::PairedViews => 0.0,
        };
        Ok(Self {
            fs: fs_,
            policy,
            batch_size,
            order_rng: ChaCha8Rng::seed_from_u64(seed),
            noise_rng: ChaCha8Rng::seed_from_u64(policy.seed),
            noise_std,
            units,
        })
    }

    /// Number of source samples an epoch draws from.
    pub fn sources(&self) -> usize {
        self.units.len()
    }

    fn fill_view(&mut self, row: usize, out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(self.fs.row(row)) {
            *o = f64::from(x);
        }
        if self.policy.mode == AugmentMode::GaussianJitter && self.noise_std > 0.0 {
            for o in out.iter_mut() {
                let eta: f64 = StandardNormal.sample(&mut self.noise_rng);
                *o += self.noise_std * eta;
            }
        }
    }

    fn source_rows_per_unit(&self) -> usize {
        match self.policy.mode {
            AugmentMode::PairedViews => 2,
            AugmentMode::GaussianJitter => 1,
        }
    }

    /// Whether an epoch yields at least one batch.
    pub fn yields_batches(&self) -> bool {
        self.source_rows_per_unit() * self.batch_size.min(self.units.len()) >= 2
    }

    /// One pass over a fresh permutation of the sources. A batch built from
    /// fewer than two distinct feature-set rows is dropped.
    pub fn next_epoch(&mut self) -> Vec<Batch> {
        let mut order: Vec<usize> = (0..self.units.len()).collect();
        order.shuffle(&mut self.order_rng);
        let d = self.fs.dim();
        let mut out = Vec::new();
        for chunk in order.chunks(self.batch_size) {
            if chunk.len() * self.source_rows_per_unit() < 2 {
                continue;
            }
            let b = chunk.len();
            let mut rows = Matrix::zeros(2 * b, d);
            let mut source_ids = vec![0; 2 * b];
            for (k, &u) in chunk.iter().enumerate() {
                let (first, second) = self.units[u];
                self.fill_view(first, rows.row_mut(k));
                self.fill_view(second, rows.row_mut(k + b));
                source_ids[k] = first;
                source_ids[k + b] = second;
            }
            out.push(Batch { rows, source_ids });
        }
        out
    }
}

/// One epoch of batches; see [`BatchSampler`] for repeated epochs.
pub fn make_batches(
    fs_: &FeatureSet,
    policy: AugmentationPolicy,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    Ok(BatchSampler::new(fs_, policy, batch_size, seed)?.next_epoch())
}
