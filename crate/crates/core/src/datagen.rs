//! Synthetic long-tailed feature sets and the on-disk feature formats.
//!
//! Class `j` of a long-tailed set has `N_j = round(N λ^j)` samples with
//! `λ = γ^(-1/(K-1))`, so the head class has `N` and the last about `N/γ`.
//! Each class is a vMF cloud around its own center.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{BayesClassifier, ClassPriors};
use crate::error::{check_dim, Error, Result};
use crate::priors::build_etf;
use crate::rng;
use crate::vmf::{UnitVector, VmfParams};

pub const MAGIC: &[u8; 4] = b"BAPF";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTailSpec {
    #[serde(rename = "K")]
    pub k: usize,
    pub n_head: u64,
    pub gamma: f64,
}

impl LongTailSpec {
    pub fn new(k: usize, n_head: u64, gamma: f64) -> Result<Self> {
        let spec = LongTailSpec { k, n_head, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config(format!("need K >= 2 classes, got {}", self.k)));
        }
        if self.n_head == 0 {
            return Err(Error::config("head class size must be >= 1"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 1.0) {
            return Err(Error::config(format!("imbalance factor must be >= 1, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.gamma.powf(-1.0 / (self.k as f64 - 1.0))
    }

    pub fn class_sizes(&self) -> Vec<u64> {
        let lambda = self.lambda();
        (0..self.k)
            .map(|j| {
                let exact = self.n_head as f64 * lambda.powi(j as i32);
                ((exact + 0.5).floor() as u64).max(1)
            })
            .collect()
    }
}

/// `N_j = round(N λ^j)`, rounding half up, never below one.
pub fn class_sizes(spec: &LongTailSpec) -> Result<Vec<u64>> {
    spec.validate()?;
    Ok(spec.class_sizes())
}

/// Labelled features, stored row-major in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    labels: Vec<u32>,
    class_counts: Vec<u64>,
    dim: usize,
    k: usize,
}

impl Dataset {
    pub fn new(features: Vec<f32>, labels: Vec<u32>, dim: usize, k: usize) -> Result<Self> {
        if dim == 0 || k == 0 {
            return Err(Error::config(format!("dataset needs p >= 1 and K >= 1, got p = {dim}, K = {k}")));
        }
        check_dim(labels.len() * dim, features.len())?;
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature"));
        }
        let mut class_counts = vec![0u64; k];
        for (row, &label) in labels.iter().enumerate() {
            if label as usize >= k {
                return Err(Error::LabelOutOfRange { row, label, k: k as u32 });
            }
            class_counts[label as usize] += 1;
        }
        Ok(Dataset { features, labels, class_counts, dim, k })
    }

    pub fn from_units(rows: &[UnitVector], labels: &[usize], k: usize) -> Result<Self> {
        check_dim(rows.len(), labels.len())?;
        let dim = rows.first().map_or(0, UnitVector::dim);
        let mut features = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_dim(dim, r.dim())?;
            features.extend(r.as_slice().iter().map(|&x| x as f32));
        }
        let labels = labels.iter().map(|&y| u32::try_from(y).map_err(|_| Error::InvalidLabel { label: y, k })).collect::<Result<_>>()?;
        Dataset::new(features, labels, dim, k)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn class_counts(&self) -> &[u64] {
        &self.class_counts
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&x| x as f64).collect()
    }

    /// Row `i` projected onto the sphere.
    pub fn unit_row(&self, i: usize) -> Result<UnitVector> {
        UnitVector::normalize(self.row_f64(i))
    }

    pub fn unit_rows(&self) -> Result<Vec<UnitVector>> {
        (0..self.len()).map(|i| self.unit_row(i)).collect()
    }

    /// Indices of the rows belonging to `class`.
    pub fn indices_of(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.label(i) == class).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterMode {
    /// Centers on a random simplex equiangular tight frame.
    #[default]
    Etf,
    /// Independent uniform directions.
    Random,
}

impl FromStr for CenterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "etf" => Ok(CenterMode::Etf),
            "random" => Ok(CenterMode::Random),
            _ => Err(Error::config(format!("unknown center mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthConfig {
    pub p: usize,
    /// Per-class κ is drawn log-uniformly from this closed range.
    pub kappa_range: (f64, f64),
    #[serde(default)]
    pub center_mode: CenterMode,
}

impl TruthConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.kappa_range;
        if self.p < 2 {
            return Err(Error::config(format!("feature dimension must be >= 2, got {}", self.p)));
        }
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::config(format!("kappa range must satisfy 0 < lo <= hi, got ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// The generating mixture, kept so the Bayes-optimal rule can be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureGroundTruth {
    components: Vec<VmfParams>,
    priors: ClassPriors,
}

impl MixtureGroundTruth {
    pub fn new(components: Vec<VmfParams>, priors: ClassPriors) -> Result<Self> {
        check_dim(components.len(), priors.len())?;
        let p = components.first().map_or(0, VmfParams::dim);
        for c in &components {
            check_dim(p, c.dim())?;
        }
        Ok(MixtureGroundTruth { components, priors })
    }

    pub fn components(&self) -> &[VmfParams] {
        &self.components
    }

    pub fn priors(&self) -> &ClassPriors {
        &self.priors
    }

    pub fn num_classes(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn centers(&self) -> Vec<UnitVector> {
        self.components.iter().map(|c| c.mu().clone()).collect()
    }

    /// Bayes rule with the true parameters.
    pub fn classifier(&self) -> Result<BayesClassifier> {
        BayesClassifier::new(self.components.clone(), self.priors.clone())
    }

    /// Same mixture with the class priors swapped, e.g. for a balanced test set.
    pub fn with_priors(&self, priors: ClassPriors) -> Result<Self> {
        MixtureGroundTruth::new(self.components.clone(), priors)
    }

    /// Draws `sizes[j]` points from class `j`, class `j` using stream `j`.
    pub fn sample(&self, sizes: &[u64], seed: u64) -> Result<Dataset> {
        self.sample_streams(sizes, seed, 0)
    }

    /// Like [`MixtureGroundTruth::sample`] but on streams disjoint from it,
    /// so a test set drawn with the training seed is still independent.
    pub fn sample_test(&self, sizes: &[u64], seed: u64) -> Result<Dataset> {
        self.sample_streams(sizes, seed, rng::STREAM_TEST_DATA)
    }

    fn sample_streams(&self, sizes: &[u64], seed: u64, base: u64) -> Result<Dataset> {
        check_dim(self.num_classes(), sizes.len())?;
        let per_class: Vec<Vec<UnitVector>> = self
            .components
            .par_iter()
            .zip(sizes.par_iter())
            .enumerate()
            .map(|(j, (c, &n))| {
                if n == 0 {
                    return Ok(Vec::new());
                }
                c.sample_with(&mut rng::stream(seed, base + j as u64), n as usize)
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (j, class) in per_class.into_iter().enumerate() {
            labels.extend(std::iter::repeat_n(j, class.len()));
            rows.extend(class);
        }
        let p = self.dim();
        let mut features = Vec::with_capacity(rows.len() * p);
        for r in &rows {
            features.extend(r.as_slice().iter().map(|&x| x as f32));
        }
        Dataset::new(features, labels.into_iter().map(|y| y as u32).collect(), p, self.num_classes())
    }
}

/// Draws a long-tailed training set; the class priors of the returned
/// ground truth are the training frequencies.
pub fn generate(spec: &LongTailSpec, truth: &TruthConfig, seed: u64) -> Result<(Dataset, MixtureGroundTruth)> {
    spec.validate()?;
    truth.validate()?;
    let k = spec.k;
    let p = truth.p;
    let centers: Vec<UnitVector> = match truth.center_mode {
        CenterMode::Etf => build_etf(k, p, seed)?.columns().to_vec(),
        CenterMode::Random => {
            let mut g = rng::stream(seed, rng::STREAM_CENTERS);
            (0..k)
                .map(|_| {
                    let v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut g)).collect();
                    UnitVector::normalize(v)
                })
                .collect::<Result<_>>()?
        }
    };
    let (lo, hi) = truth.kappa_range;
    let mut g = rng::stream(seed, rng::STREAM_KAPPAS);
    let kappas: Vec<f64> = (0..k)
        .map(|_| if lo == hi { lo } else { g.random_range(lo.ln()..=hi.ln()).exp() })
        .collect();
    let components = centers.into_iter().zip(kappas).map(|(mu, kappa)| VmfParams::new(mu, kappa)).collect::<Result<Vec<_>>>()?;
    let sizes = spec.class_sizes();
    let gt = MixtureGroundTruth::new(components, ClassPriors::from_counts(&sizes)?)?;
    let data = gt.sample(&sizes, seed)?;
    Ok((data, gt))
}

/// Accuracy of `classifier` on `test`.
pub fn accuracy(classifier: &BayesClassifier, test: &Dataset) -> Result<f64> {
    check_dim(classifier.dim(), test.dim())?;
    if test.is_empty() {
        return Err(Error::config("empty test set"));
    }
    let correct = (0..test.len())
        .into_par_iter()
        .map(|i| Ok(usize::from(classifier.predict(&test.unit_row(i)?)? == test.label(i))))
        .sum::<Result<usize>>()?;
    Ok(correct as f64 / test.len() as f64)
}

/// Accuracy of the true-parameter Bayes rule on `test`.
pub fn oracle_accuracy(truth: &MixtureGroundTruth, test: &Dataset) -> Result<f64> {
    check_dim(truth.num_classes(), test.num_classes())?;
    accuracy(&truth.classifier()?, test)
}

/// Writes CSV when the path ends in `.csv`, the binary format otherwise.
pub fn write_features(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    if is_csv(path) {
        write_csv(path, data)
    } else {
        fs::write(path, encode_binary(data)).map_err(|e| Error::io(path, e))
    }
}

/// Reads either format, chosen by extension like [`write_features`].
pub fn read_features(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    if is_csv(path) {
        read_csv(path)
    } else {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_binary(&bytes, path)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn encode_binary(data: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN as usize + 4 * (data.features.len() + data.len()));
    out.extend_from_slice(MAGIC);
    for v in [FORMAT_VERSION, data.len() as u32, data.dim as u32, data.k as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for x in &data.features {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for y in &data.labels {
        out.extend_from_slice(&y.to_le_bytes());
    }
    out
}

/// Parses the binary format; `path` is only used in error messages.
pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let found = bytes.len() as u64;
    if bytes.len() < MAGIC.len() {
        return Err(Error::Truncated { expected: HEADER_LEN, found });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf() });
    }
    if found < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN, found });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { version });
    }
    let (n, p, k) = (word(8) as u64, word(12) as u64, word(16) as u64);
    let expected = HEADER_LEN + 4 * n * p + 4 * n;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::Malformed(format!("{} trailing bytes after {expected}", found - expected)));
    }
    let body = &bytes[HEADER_LEN as usize..];
    let (feat_bytes, label_bytes) = body.split_at((4 * n * p) as usize);
    let features = feat_bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let labels: Vec<u32> = label_bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    if let Some(row) = labels.iter().position(|&y| y as u64 >= k) {
        return Err(Error::LabelOutOfRange { row, label: labels[row], k: k as u32 });
    }
    Dataset::new(features, labels, p as usize, k as usize)
}

pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = std::iter::once("label".to_string()).chain((0..data.dim).map(|j| format!("f{j}")));
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for i in 0..data.len() {
        let record = std::iter::once(data.labels[i].to_string()).chain(data.row(i).iter().map(f32::to_string));
        w.write_record(record).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads the CSV format. The file carries no class count, so `K` is taken
/// as one more than the largest label.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let dim = header.len().saturating_sub(1);
    let well_formed = header.get(0) == Some("label") && header.iter().skip(1).enumerate().all(|(j, h)| h == format!("f{j}"));
    if !well_formed || dim == 0 {
        return Err(Error::Malformed(format!("{}: expected header label,f0,...", path.display())));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let bad = |what: &str| Error::Malformed(format!("{}: row {row}: bad {what}", path.display()));
        labels.push(record[0].trim().parse::<u32>().map_err(|_| bad("label"))?);
        for field in record.iter().skip(1) {
            features.push(field.trim().parse::<f32>().map_err(|_| bad("feature"))?);
        }
    }
    let k = labels.iter().max().map_or(1, |&m| m as usize + 1);
    Dataset::new(features, labels, dim, k)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Malformed(format!("{}: {e}", path.display()))
    }
}
