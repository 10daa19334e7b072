//! Linear classifiers trained by gradient descent on fixed features: plain
//! softmax cross-entropy and logit adjustment.
//!
//! Logit adjustment adds `ln π_y` to every logit before the softmax, i.e.
//!
//! ```text
//! L_LA = -ln( π_y exp(s_y) / Σ_j π_j exp(s_j) ),   s = (W z + b) / T
//! ```

use std::f64::consts::PI;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, log_softmax, ClassPriors};
use crate::datagen::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::harness::SavedModel;
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl LinearClassifier {
    pub fn new(w: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if w.len() < 2 {
            return Err(Error::config(format!("a classifier needs K >= 2 classes, got {}", w.len())));
        }
        check_dim(w.len(), b.len())?;
        let p = w[0].len();
        if p == 0 {
            return Err(Error::config("feature dimension must be >= 1"));
        }
        for row in &w {
            check_dim(p, row.len())?;
        }
        if w.iter().flatten().chain(&b).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("linear classifier parameter"));
        }
        Ok(LinearClassifier { w, b })
    }

    /// `W_ij ~ N(0, 1) / √p`, `b = 0`, drawn from the init stream of `seed`.
    pub fn init(k: usize, p: usize, seed: u64) -> Result<Self> {
        let mut g = rng::stream(seed, rng::STREAM_INIT);
        let scale = 1.0 / (p as f64).sqrt();
        let w = (0..k).map(|_| (0..p).map(|_| { let x: f64 = StandardNormal.sample(&mut g); scale * x }).collect::<Vec<f64>>()).collect();
        LinearClassifier::new(w, vec![0.0; k])
    }

    pub fn num_classes(&self) -> usize {
        self.w.len()
    }

    pub fn dim(&self) -> usize {
        self.w[0].len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    /// `W z + b`.
    pub fn logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        Ok(self.w.iter().zip(&self.b).map(|(w, b)| linalg::dot(w, z) + b).collect())
    }

    /// Argmax of the raw logits; ties go to the lowest index.
    pub fn predict(&self, z: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(z)?))
    }

    /// Same weights with every bias shifted by `offsets`.
    pub fn with_bias_offsets(&self, offsets: &[f64]) -> Result<Self> {
        check_dim(self.num_classes(), offsets.len())?;
        LinearClassifier::new(self.w.clone(), self.b.iter().zip(offsets).map(|(b, o)| b + o).collect())
    }

    pub fn to_doc(&self) -> LinearDoc {
        LinearDoc { p: self.dim(), k: self.num_classes(), w: self.w.clone(), b: self.b.clone() }
    }

    pub fn from_doc(doc: &LinearDoc) -> Result<Self> {
        check_dim(doc.k, doc.w.len())?;
        let clf = LinearClassifier::new(doc.w.clone(), doc.b.clone())?;
        check_dim(doc.p, clf.dim())?;
        Ok(clf)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SavedModel::Linear(self.to_doc()))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        match serde_json::from_str(s)? {
            SavedModel::Linear(doc) => LinearClassifier::from_doc(&doc),
            SavedModel::Bape(_) => Err(Error::Malformed("expected a linear classifier, found a bape classifier".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDoc {
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    Softmax,
    LogitAdjusted,
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(LossMode::Softmax),
            "logit_adjusted" | "logit-adjusted" | "la" => Ok(LossMode::LogitAdjusted),
            _ => Err(Error::config(format!("unknown loss mode {s:?}"))),
        }
    }
}

/// A cross-entropy loss with its mode, class priors and temperature fixed.
#[derive(Debug, Clone)]
pub struct Objective {
    offsets: Vec<f64>,
    temperature: f64,
}

impl Objective {
    pub fn new(mode: LossMode, priors: &ClassPriors, temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::config(format!("temperature must be finite and > 0, got {temperature}")));
        }
        let offsets = match mode {
            LossMode::Softmax => vec![0.0; priors.len()],
            LossMode::LogitAdjusted => priors.as_slice().iter().map(|p| p.ln()).collect(),
        };
        Ok(Objective { offsets, temperature })
    }

    fn adjusted_logits(&self, clf: &LinearClassifier, z: &[f64], y: usize) -> Result<Vec<f64>> {
        check_dim(clf.num_classes(), self.offsets.len())?;
        if y >= clf.num_classes() {
            return Err(Error::InvalidLabel { label: y, k: clf.num_classes() });
        }
        Ok(clf.logits(z)?.iter().zip(&self.offsets).map(|(s, o)| s / self.temperature + o).collect())
    }

    pub fn loss(&self, clf: &LinearClassifier, z: &[f64], y: usize) -> Result<f64> {
        Ok(-log_softmax(&self.adjusted_logits(clf, z, y)?)[y])
    }

    /// Loss and its gradient: `∂L/∂w_j = (q_j - δ_jy) z / T`, `∂L/∂b_j = (q_j - δ_jy) / T`.
    pub fn loss_and_grad(&self, clf: &LinearClassifier, z: &[f64], y: usize) -> Result<(f64, Vec<Vec<f64>>, Vec<f64>)> {
        let lp = log_softmax(&self.adjusted_logits(clf, z, y)?);
        let db: Vec<f64> = lp
            .iter()
            .enumerate()
            .map(|(j, l)| (l.exp() - if j == y { 1.0 } else { 0.0 }) / self.temperature)
            .collect();
        let dw = db.iter().map(|d| z.iter().map(|x| d * x).collect()).collect();
        Ok((-lp[y], dw, db))
    }
}

/// `-ln p(y | z)` under the softmax or logit-adjusted model at temperature 1.
pub fn ce_loss(clf: &LinearClassifier, z: &[f64], y: usize, mode: LossMode, priors: &ClassPriors) -> Result<f64> {
    Objective::new(mode, priors, 1.0)?.loss(clf, z, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub momentum: f64,
    pub mode: LossMode,
    pub temperature: f64,
    /// Project features onto the unit sphere before training and scoring.
    pub normalize_features: bool,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            epochs: 30,
            batch_size: 64,
            weight_decay: 5e-4,
            momentum: 0.9,
            mode: LossMode::Softmax,
            temperature: 1.0,
            normalize_features: true,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be >= 1"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::config(format!("temperature must be > 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Row `i` of `data` as the baseline sees it.
pub fn input_row(data: &Dataset, i: usize, normalize: bool) -> Result<Vec<f64>> {
    if normalize {
        Ok(data.unit_row(i)?.into_inner())
    } else {
        Ok(data.row_f64(i))
    }
}

/// Mini-batch SGD with momentum and cosine learning-rate decay.
///
/// [`train`] runs it to completion; the harness drives it batch by batch so
/// other learners can consume the same shuffled stream.
#[derive(Debug)]
pub struct Trainer<'a> {
    data: &'a Dataset,
    inputs: Vec<Vec<f64>>,
    config: TrainConfig,
    objective: Objective,
    clf: LinearClassifier,
    vw: Vec<Vec<f64>>,
    vb: Vec<f64>,
    order: Vec<usize>,
    shuffle: rng::Rng,
    step: usize,
    total_steps: usize,
    loss_weight: f64,
    last_loss: f64,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::config("cannot train on an empty dataset"));
        }
        let k = data.num_classes();
        let priors = match config.mode {
            LossMode::Softmax => ClassPriors::uniform(k)?,
            LossMode::LogitAdjusted => ClassPriors::from_counts(data.class_counts())
                .map_err(|_| Error::config("logit adjustment needs every class present in the training set"))?,
        };
        let inputs = (0..data.len()).map(|i| input_row(data, i, config.normalize_features)).collect::<Result<_>>()?;
        let clf = LinearClassifier::init(k, data.dim(), config.rng_seed)?;
        let steps_per_epoch = data.len().div_ceil(config.batch_size);
        Ok(Trainer {
            data,
            inputs,
            objective: Objective::new(config.mode, &priors, config.temperature)?,
            vw: vec![vec![0.0; data.dim()]; k],
            vb: vec![0.0; k],
            order: (0..data.len()).collect(),
            shuffle: rng::stream(config.rng_seed, rng::STREAM_SHUFFLE),
            step: 0,
            total_steps: steps_per_epoch * config.epochs,
            loss_weight: 1.0,
            last_loss: f64::NAN,
            clf,
            config,
        })
    }

    /// Scales the loss gradient (weight decay is unaffected).
    pub fn with_loss_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::config(format!("loss weight must be >= 0, got {weight}")));
        }
        self.loss_weight = weight;
        Ok(self)
    }

    pub fn classifier(&self) -> &LinearClassifier {
        &self.clf
    }

    pub fn into_classifier(self) -> LinearClassifier {
        self.clf
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// One pass over the shuffled data. `on_batch` sees the row indices of
    /// every mini-batch before the update. Returns the mean training loss.
    pub fn run_epoch(&mut self, epoch: usize, mut on_batch: impl FnMut(&[usize]) -> Result<()>) -> Result<f64> {
        self.order.shuffle(&mut self.shuffle);
        let order = std::mem::take(&mut self.order);
        let mut total = 0.0;
        let mut result = Ok(());
        for batch in order.chunks(self.config.batch_size) {
            result = on_batch(batch).and_then(|_| self.update(epoch, batch));
            match result {
                Ok(()) => total += self.last_loss * batch.len() as f64,
                Err(_) => break,
            }
        }
        self.order = order;
        result?;
        Ok(total / self.data.len() as f64)
    }

    fn update(&mut self, epoch: usize, batch: &[usize]) -> Result<()> {
        let k = self.clf.num_classes();
        let p = self.clf.dim();
        let mut gw = vec![vec![0.0; p]; k];
        let mut gb = vec![0.0; k];
        let mut loss = 0.0;
        for &i in batch {
            let (l, dw, db) = self.objective.loss_and_grad(&self.clf, &self.inputs[i], self.data.label(i))?;
            loss += l;
            for j in 0..k {
                linalg::axpy(1.0, &dw[j], &mut gw[j]);
                gb[j] += db[j];
            }
        }
        let n = batch.len() as f64;
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step: self.step, last_loss: self.last_loss });
        }
        self.last_loss = loss;
        let lr = self.config.lr * 0.5 * (1.0 + (PI * self.step as f64 / self.total_steps as f64).cos());
        let mu = self.config.momentum;
        let scale = self.loss_weight / n;
        for j in 0..k {
            for c in 0..p {
                let g = scale * gw[j][c] + self.config.weight_decay * self.clf.w[j][c];
                self.vw[j][c] = mu * self.vw[j][c] + g;
                self.clf.w[j][c] -= lr * self.vw[j][c];
            }
            self.vb[j] = mu * self.vb[j] + scale * gb[j];
            self.clf.b[j] -= lr * self.vb[j];
        }
        if self.clf.w.iter().flatten().chain(&self.clf.b).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch, step: self.step, last_loss: loss });
        }
        self.step += 1;
        Ok(())
    }
}

/// Trained classifier plus the mean training loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: LinearClassifier,
    pub epoch_losses: Vec<f64>,
}

pub fn train(data: &Dataset, config: TrainConfig) -> Result<LinearClassifier> {
    Ok(train_traced(data, config)?.classifier)
}

pub fn train_traced(data: &Dataset, config: TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(data, config)?;
    let epoch_losses = (0..config.epochs).map(|e| trainer.run_epoch(e, |_| Ok(()))).collect::<Result<_>>()?;
    Ok(TrainOutcome { classifier: trainer.into_classifier(), epoch_losses })
}

/// Fraction of rows of `data` that `clf` labels correctly.
pub fn linear_accuracy(clf: &LinearClassifier, data: &Dataset, normalize: bool) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::config("empty test set"));
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        correct += usize::from(clf.predict(&input_row(data, i, normalize)?)? == data.label(i));
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mean pairwise cosine similarity among the weight rows of `tail_classes`.
pub fn minority_collapse_metric(clf: &LinearClassifier, tail_classes: &[usize]) -> Result<f64> {
    if tail_classes.len() < 2 {
        return Err(Error::config(format!("minority collapse needs at least 2 tail classes, got {}", tail_classes.len())));
    }
    let k = clf.num_classes();
    let mut units = Vec::with_capacity(tail_classes.len());
    for &c in tail_classes {
        if c >= k {
            return Err(Error::InvalidLabel { label: c, k });
        }
        let n = linalg::norm(&clf.w[c]);
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        units.push(clf.w[c].iter().map(|x| x / n).collect::<Vec<_>>());
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            sum += linalg::dot(&units[i], &units[j]);
            pairs += 1;
        }
    }
    Ok((sum / pairs as f64).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub class: usize,
    pub count: u64,
    pub weight_norm: f64,
    /// Mean raw feature norm over the class; 0 for an absent class.
    pub mean_feature_norm: f64,
    pub product: f64,
}

/// `‖w_y‖ · mean ‖z‖` per class, in class order.
pub fn norm_report(clf: &LinearClassifier, data: &Dataset) -> Result<Vec<NormRow>> {
    check_dim(clf.dim(), data.dim())?;
    check_dim(clf.num_classes(), data.num_classes())?;
    let mut sums = vec![0.0; clf.num_classes()];
    for i in 0..data.len() {
        sums[data.label(i)] += linalg::norm(&data.row_f64(i));
    }
    Ok((0..clf.num_classes())
        .map(|class| {
            let count = data.class_counts()[class];
            let weight_norm = linalg::norm(&clf.w[class]);
            let mean_feature_norm = if count == 0 { 0.0 } else { sums[class] / count as f64 };
            NormRow { class, count, weight_norm, mean_feature_norm, product: weight_norm * mean_feature_norm }
        })
        .collect())
}
