//! Experiment runner: fits BAPE and the gradient-descent baselines on the
//! same data, scores them on many/medium/few splits and writes reports.
//!
//! With fixed features the joint objective `L_BAPE + η L_LA` reduces to
//! training the logit-adjusted baseline with its gradient scaled by `η`
//! while BAPE accumulates class statistics from the same mini-batch stream.
//! Statistics are reset at the start of every epoch, so the fitted model
//! reflects exactly one pass over the training set.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{input_row, minority_collapse_metric, LinearClassifier, LinearDoc, LossMode, TrainConfig, Trainer};
use crate::classifier::{log_softmax, AdjustmentPolicy, BapeModel, BayesClassifier, ClassPriors, ClassifierDoc};
use crate::datagen::{generate, read_features, Dataset, LongTailSpec, MixtureGroundTruth, TruthConfig};
use crate::error::{check_dim, Error, Result};
use crate::estimation::{EstimationMode, PriorHyper};
use crate::linalg;
use crate::priors::{build_etf, grad_step_m0, EtfFrame};
use crate::vmf::UnitVector;

/// A classifier file: either model kind, tagged by `"kind"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SavedModel {
    Bape(ClassifierDoc),
    Linear(LinearDoc),
}

impl SavedModel {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Long-tailed training set from a vMF mixture, balanced test set of
    /// `test_per_class` samples per class from the same mixture.
    Generate { spec: LongTailSpec, truth: TruthConfig, test_per_class: u64 },
    Files { train: PathBuf, test: PathBuf },
}

/// Where the prior directions `m₀ʸ` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorDirections {
    /// Seeded simplex ETF. For generated data with ETF centers this is the
    /// same frame the centers were drawn from.
    #[default]
    Etf,
    /// Normalized training class means.
    ClassMeans,
}

impl FromStr for PriorDirections {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "etf" => Ok(PriorDirections::Etf),
            "class-means" | "class_means" => Ok(PriorDirections::ClassMeans),
            _ => Err(Error::config(format!("unknown prior directions {s:?}"))),
        }
    }
}

/// Class-size thresholds: many has more than `many` samples, few fewer than `few`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitThresholds {
    pub many: u64,
    pub few: u64,
}

impl Default for SplitThresholds {
    fn default() -> Self {
        SplitThresholds { many: 100, few: 20 }
    }
}

impl SplitThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.few > self.many + 1 {
            return Err(Error::config(format!("split thresholds out of order: few < {} but many > {}", self.few, self.many)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub prior: PriorHyper,
    pub prior_directions: PriorDirections,
    pub estimation: EstimationMode,
    pub adjustment: AdjustmentPolicy,
    pub baseline: TrainConfig,
    pub eta: f64,
    /// Fit the softmax and logit-adjusted baselines (and the ensemble).
    pub baselines: bool,
    /// Learning rate for gradient updates of `m₀`; `None` keeps the prior fixed.
    pub m0_lr: Option<f64>,
    pub splits: SplitThresholds,
    pub seeds: Vec<u64>,
    pub output: Option<OutputPaths>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::Generate {
                spec: LongTailSpec { k: 10, n_head: 500, gamma: 100.0 },
                truth: TruthConfig { p: 16, kappa_range: (10.0, 30.0), center_mode: Default::default() },
                test_per_class: 200,
            },
            prior: PriorHyper::default(),
            prior_directions: PriorDirections::Etf,
            estimation: EstimationMode::default(),
            adjustment: AdjustmentPolicy::default(),
            baseline: TrainConfig::default(),
            eta: 1.0,
            baselines: true,
            m0_lr: None,
            splits: SplitThresholds::default(),
            seeds: vec![0],
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        ExperimentConfig::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds list is empty"));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if let Some(lr) = self.m0_lr {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::config(format!("m0 learning rate must be > 0, got {lr}")));
            }
        }
        if let DataSource::Generate { spec, truth, test_per_class } = &self.data {
            spec.validate()?;
            truth.validate()?;
            if *test_per_class == 0 {
                return Err(Error::config("test_per_class must be >= 1"));
            }
        }
        self.prior.validate()?;
        self.adjustment.validate()?;
        self.baseline.validate()?;
        self.splits.validate()
    }
}

/// One (method, seed) result. Split accuracies are absent when the split
/// has no classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub seed: u64,
    pub accuracy: f64,
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
    pub oracle_accuracy: Option<f64>,
    /// Mean pairwise cosine of the tail-class weight (or mean direction) rows.
    pub minority_collapse: Option<f64>,
    /// Pearson correlation of fitted κ with log training count (BAPE rows).
    pub kappa_log_count_corr: Option<f64>,
    pub wall_time_s: f64,
}

pub const REPORT_FIELDS: [&str; 10] =
    ["method", "seed", "accuracy", "many", "medium", "few", "oracle_accuracy", "minority_collapse", "kappa_log_count_corr", "wall_time_s"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
    pub all: f64,
}

/// Per-split accuracy, grouping samples by the training count of their class.
pub fn split_accuracy(predictions: &[usize], labels: &[usize], class_counts: &[u64], thresholds: SplitThresholds) -> Result<SplitAccuracy> {
    thresholds.validate()?;
    check_dim(labels.len(), predictions.len())?;
    if labels.is_empty() {
        return Err(Error::config("no predictions to score"));
    }
    let mut hits = [0usize; 3];
    let mut totals = [0usize; 3];
    for (&p, &y) in predictions.iter().zip(labels) {
        let n = *class_counts.get(y).ok_or(Error::InvalidLabel { label: y, k: class_counts.len() })?;
        let split = if n > thresholds.many {
            0
        } else if n < thresholds.few {
            2
        } else {
            1
        };
        totals[split] += 1;
        hits[split] += usize::from(p == y);
    }
    let frac = |s: usize| (totals[s] > 0).then(|| hits[s] as f64 / totals[s] as f64);
    let all = hits.iter().sum::<usize>() as f64 / labels.len() as f64;
    Ok(SplitAccuracy { many: frac(0), medium: frac(1), few: frac(2), all })
}

/// The `⌈K/4⌉` (at least two) classes with the fewest training samples,
/// ties going to higher indices.
pub fn tail_classes(class_counts: &[u64]) -> Vec<usize> {
    let k = class_counts.len();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by_key(|&j| (class_counts[j], std::cmp::Reverse(j)));
    let mut tail: Vec<usize> = idx.into_iter().take(k.div_ceil(4).max(2).min(k)).collect();
    tail.sort_unstable();
    tail
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Prior directions for a training set.
pub fn prior_frame(data: &Dataset, source: PriorDirections, seed: u64) -> Result<EtfFrame> {
    let etf = build_etf(data.num_classes(), data.dim(), seed)?;
    match source {
        PriorDirections::Etf => Ok(etf),
        PriorDirections::ClassMeans => {
            let mut sums = vec![vec![0.0; data.dim()]; data.num_classes()];
            for i in 0..data.len() {
                linalg::axpy(1.0, data.unit_row(i)?.as_slice(), &mut sums[data.label(i)]);
            }
            let columns = sums
                .into_iter()
                .zip(etf.columns())
                .map(|(s, fallback)| UnitVector::normalize(s).or_else(|_| Ok(fallback.clone())))
                .collect::<Result<Vec<_>>>()?;
            EtfFrame::from_columns(columns)
        }
    }
}

/// Gradient of the mean BAPE loss over `batch` with respect to each `m₀ʸ`,
/// through `μ_y = m_y` with κ held fixed.
fn m0_gradients(model: &BapeModel, units: &[UnitVector], labels: &[usize], batch: &[usize]) -> Result<Vec<Vec<f64>>> {
    let fit = model.fit()?;
    let clf = &fit.classifier;
    let k = model.num_classes();
    let p = clf.dim();
    let mut grads = vec![vec![0.0; p]; k];
    for &i in batch {
        let post = clf.log_posterior(&units[i])?;
        for (c, (&label, vmf)) in clf.labels().iter().zip(clf.classes()).enumerate() {
            let w = post[c].exp() - if label == labels[i] { 1.0 } else { 0.0 };
            linalg::axpy(w * vmf.kappa() / batch.len() as f64, units[i].as_slice(), &mut grads[label]);
        }
    }
    for (y, g) in grads.iter_mut().enumerate() {
        let prior = &model.priors()[y];
        let stats = &model.stats()[y];
        let mut resultant = stats.resultant().to_vec();
        linalg::axpy(prior.beta0(), prior.m0().as_slice(), &mut resultant);
        let beta = linalg::norm(&resultant);
        if beta == 0.0 {
            g.iter_mut().for_each(|x| *x = 0.0);
            continue;
        }
        let m: Vec<f64> = resultant.iter().map(|x| x / beta).collect();
        let radial = linalg::dot(&m, g);
        linalg::axpy(-radial, &m, g);
        linalg::scale(prior.beta0() / beta, g);
    }
    Ok(grads)
}

/// Everything fitted for one seed.
#[derive(Debug, Clone)]
pub struct SeedModels {
    pub bape: BayesClassifier,
    pub bape_adjusted: BayesClassifier,
    pub excluded: Vec<usize>,
    pub softmax: Option<LinearClassifier>,
    pub logit_adjusted: Option<LinearClassifier>,
    /// Samples seen by BAPE in each epoch.
    pub epoch_counts: Vec<u64>,
}

/// Fits all models of one seed on `train`.
pub fn fit_models(config: &ExperimentConfig, train: &Dataset, seed: u64) -> Result<SeedModels> {
    let frame = prior_frame(train, config.prior_directions, seed).map_err(|e| e.with_context("bape", seed))?;
    let mut model = BapeModel::new(config.prior, &frame, train.class_counts(), config.estimation).map_err(|e| e.with_context("bape", seed))?;
    let units = train.unit_rows()?;
    let labels: Vec<usize> = (0..train.len()).map(|i| train.label(i)).collect();
    let train_cfg = TrainConfig { rng_seed: seed, ..config.baseline };

    let mut epoch_counts = Vec::new();
    let observe = |model: &mut BapeModel, batch: &[usize]| -> Result<()> {
        let zs: Vec<UnitVector> = batch.iter().map(|&i| units[i].clone()).collect();
        let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        model.observe(&zs, &ys)?;
        if let Some(lr) = config.m0_lr {
            let grads = m0_gradients(model, &units, &labels, batch)?;
            let current = EtfFrame::from_columns(model.priors().iter().map(|p| p.m0().clone()).collect())?;
            model.set_directions(&grad_step_m0(&current, &grads, lr)?)?;
        }
        Ok(())
    };

    let logit_adjusted = if config.baselines {
        let la_cfg = TrainConfig { mode: LossMode::LogitAdjusted, ..train_cfg };
        let mut trainer = Trainer::new(train, la_cfg)?.with_loss_weight(config.eta)?;
        for epoch in 0..train_cfg.epochs {
            model.reset_stats();
            trainer.run_epoch(epoch, |batch| observe(&mut model, batch)).map_err(|e| e.with_context("logit_adjusted", seed))?;
            epoch_counts.push(model.stats().iter().map(|s| s.count()).sum());
        }
        Some(trainer.into_classifier())
    } else {
        // same shuffled stream as the joint loop, without a baseline attached
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffle = crate::rng::stream(seed, crate::rng::STREAM_SHUFFLE);
        for _ in 0..train_cfg.epochs {
            use rand::seq::SliceRandom;
            model.reset_stats();
            order.shuffle(&mut shuffle);
            for batch in order.chunks(train_cfg.batch_size) {
                observe(&mut model, batch).map_err(|e| e.with_context("bape", seed))?;
            }
            epoch_counts.push(model.stats().iter().map(|s| s.count()).sum());
        }
        None
    };

    let fit = model.fit().map_err(|e| e.with_context("bape", seed))?;
    let bape_adjusted = fit.classifier.adjust(&config.adjustment).map_err(|e| e.with_context("bape+adjust", seed))?;
    let softmax = if config.baselines {
        let sm_cfg = TrainConfig { mode: LossMode::Softmax, ..train_cfg };
        Some(crate::baselines::train(train, sm_cfg).map_err(|e| e.with_context("softmax", seed))?)
    } else {
        None
    };
    Ok(SeedModels { bape: fit.classifier, bape_adjusted, excluded: fit.excluded, softmax, logit_adjusted, epoch_counts })
}

/// Train and test sets (plus ground truth when generated) for one seed.
pub fn load_data(config: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset, Option<MixtureGroundTruth>)> {
    match &config.data {
        DataSource::Generate { spec, truth, test_per_class } => {
            let (train, gt) = generate(spec, truth, seed)?;
            let test = gt.sample_test(&vec![*test_per_class; spec.k], seed)?;
            Ok((train, test, Some(gt)))
        }
        DataSource::Files { train, test } => {
            let train = read_features(train)?;
            let test = read_features(test)?;
            check_dim(train.dim(), test.dim())?;
            if test.num_classes() > train.num_classes() {
                return Err(Error::config(format!("test labels reach {} but training has K = {}", test.num_classes(), train.num_classes())));
            }
            let test = Dataset::new(test.features().to_vec(), test.labels().to_vec(), test.dim(), train.num_classes())?;
            Ok((train, test, None))
        }
    }
}

fn bayes_predictions(clf: &BayesClassifier, test_units: &[UnitVector]) -> Result<Vec<usize>> {
    test_units.par_iter().map(|z| clf.predict(z)).collect()
}

fn linear_predictions(clf: &LinearClassifier, test: &Dataset, normalize: bool) -> Result<Vec<usize>> {
    (0..test.len()).map(|i| clf.predict(&input_row(test, i, normalize)?)).collect()
}

/// Rows for every method on one seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<ReportRow>> {
    let (train, test, truth) = load_data(config, seed).map_err(|e| e.with_context("data", seed))?;
    let test_units = test.unit_rows()?;
    let labels: Vec<usize> = (0..test.len()).map(|i| test.label(i)).collect();
    let counts = train.class_counts();
    let tail = tail_classes(counts);

    let started = Instant::now();
    let models = fit_models(config, &train, seed)?;
    let fit_time = started.elapsed().as_secs_f64();

    let oracle = match &truth {
        Some(gt) => {
            let test_truth = gt.with_priors(ClassPriors::from_counts(test.class_counts()).or_else(|_| ClassPriors::uniform(test.num_classes()))?)?;
            Some(split_accuracy(&bayes_predictions(&test_truth.classifier()?, &test_units)?, &labels, counts, config.splits)?.all)
        }
        None => None,
    };

    let row = |method: &str, preds: &[usize], collapse: Option<f64>, corr: Option<f64>, secs: f64| -> Result<ReportRow> {
        let s = split_accuracy(preds, &labels, counts, config.splits)?;
        Ok(ReportRow {
            method: method.to_string(),
            seed,
            accuracy: s.all,
            many: s.many,
            medium: s.medium,
            few: s.few,
            oracle_accuracy: oracle,
            minority_collapse: collapse,
            kappa_log_count_corr: corr,
            wall_time_s: secs,
        })
    };

    let bape_collapse = |clf: &BayesClassifier| -> Option<f64> {
        let rows: Option<Vec<Vec<f64>>> =
            tail.iter().map(|t| clf.labels().iter().position(|l| l == t).map(|c| clf.classes()[c].mu().as_slice().to_vec())).collect();
        let w = rows?;
        let k = w.len();
        let lin = LinearClassifier::new(w, vec![0.0; k]).ok()?;
        minority_collapse_metric(&lin, &(0..k).collect::<Vec<_>>()).ok()
    };
    let kappa_corr = |clf: &BayesClassifier| -> Option<f64> {
        let kappas: Vec<f64> = clf.classes().iter().map(|c| c.kappa()).collect();
        let logn: Vec<f64> = clf.labels().iter().map(|&l| (counts[l].max(1) as f64).ln()).collect();
        pearson(&kappas, &logn)
    };

    let mut rows = Vec::new();
    let t = Instant::now();
    let bape_preds = bayes_predictions(&models.bape, &test_units)?;
    rows.push(row("bape", &bape_preds, bape_collapse(&models.bape), kappa_corr(&models.bape), fit_time + t.elapsed().as_secs_f64())?);
    let t = Instant::now();
    let adj_preds = bayes_predictions(&models.bape_adjusted, &test_units)?;
    rows.push(row("bape+adjust", &adj_preds, bape_collapse(&models.bape_adjusted), kappa_corr(&models.bape_adjusted), fit_time + t.elapsed().as_secs_f64())?);

    if let Some(gt) = &truth {
        let t = Instant::now();
        let test_truth = gt.with_priors(ClassPriors::from_counts(test.class_counts()).or_else(|_| ClassPriors::uniform(test.num_classes()))?)?;
        let preds = bayes_predictions(&test_truth.classifier()?, &test_units)?;
        rows.push(row("oracle", &preds, None, None, t.elapsed().as_secs_f64())?);
    }

    let normalize = config.baseline.normalize_features;
    if let (Some(sm), Some(la)) = (&models.softmax, &models.logit_adjusted) {
        for (name, clf) in [("softmax", sm), ("logit_adjusted", la)] {
            let t = Instant::now();
            let preds = linear_predictions(clf, &test, normalize)?;
            rows.push(row(name, &preds, minority_collapse_metric(clf, &tail).ok(), None, fit_time + t.elapsed().as_secs_f64())?);
        }
        let t = Instant::now();
        let temperature = config.baseline.temperature;
        let mut preds = Vec::with_capacity(test.len());
        for (i, z) in test_units.iter().enumerate() {
            let la_logits: Vec<f64> = la.logits(&input_row(&test, i, normalize)?)?.iter().map(|s| s / temperature).collect();
            let la_lp = log_softmax(&la_logits);
            let bape_lp = models.bape_adjusted.log_posterior(z)?;
            let mut combined = la_lp.iter().map(|x| 0.5 * x).collect::<Vec<_>>();
            for (c, &label) in models.bape_adjusted.labels().iter().enumerate() {
                combined[label] += 0.5 * bape_lp[c];
            }
            for &label in &models.excluded {
                combined[label] = f64::NEG_INFINITY;
            }
            preds.push(crate::classifier::argmax(&combined));
        }
        rows.push(row("ensemble", &preds, None, None, fit_time + t.elapsed().as_secs_f64())?);
    }
    Ok(rows)
}

/// All rows for all seeds, sorted by `(method, seed)`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    config.validate()?;
    let per_seed: Vec<Vec<ReportRow>> = config.seeds.par_iter().map(|&seed| run_seed(config, seed)).collect::<Result<_>>()?;
    let mut rows: Vec<ReportRow> = per_seed.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.seed.cmp(&b.seed)));
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// CSV for a `.csv` path, JSON otherwise.
    pub fn for_path(path: &Path) -> Self {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            ReportFormat::Csv
        } else {
            ReportFormat::Json
        }
    }
}

pub fn report_json(rows: &[ReportRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)? + "\n")
}

/// CSV with a header row; floats at 17 significant digits, absent values empty.
pub fn report_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Malformed(e.to_string());
    w.write_record(REPORT_FIELDS).map_err(csv_err)?;
    let f = |x: f64| format!("{x:.16e}");
    let opt = |x: Option<f64>| x.map(f).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.seed.to_string(),
            f(r.accuracy),
            opt(r.many),
            opt(r.medium),
            opt(r.few),
            opt(r.oracle_accuracy),
            opt(r.minority_collapse),
            opt(r.kappa_log_count_corr),
            f(r.wall_time_s),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Malformed(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Malformed(e.to_string()))
}

pub fn emit_report(rows: &[ReportRow], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Json => report_json(rows)?,
        ReportFormat::Csv => report_csv(rows)?,
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `label,pred,f0,...` with features projected onto the sphere;
/// `pred` is empty without a model.
pub fn dump_embeddings(data: &Dataset, model: Option<&SavedModel>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let predict: Box<dyn Fn(&UnitVector) -> Result<usize>> = match model {
        None => Box::new(|_| Ok(usize::MAX)),
        Some(SavedModel::Bape(doc)) => {
            let clf = BayesClassifier::from_doc(doc)?;
            check_dim(clf.dim(), data.dim())?;
            Box::new(move |z| clf.predict(z))
        }
        Some(SavedModel::Linear(doc)) => {
            let clf = LinearClassifier::from_doc(doc)?;
            check_dim(clf.dim(), data.dim())?;
            Box::new(move |z| clf.predict(z.as_slice()))
        }
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let header = ["label".to_string(), "pred".to_string()].into_iter().chain((0..data.dim()).map(|j| format!("f{j}")));
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(header).map_err(io)?;
    for i in 0..data.len() {
        let z = data.unit_row(i)?;
        let pred = predict(&z)?;
        let pred = if pred == usize::MAX { String::new() } else { pred.to_string() };
        let record = [data.labels()[i].to_string(), pred].into_iter().chain(z.as_slice().iter().map(|x| x.to_string()));
        w.write_record(record).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
