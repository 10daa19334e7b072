//! The explicit Bayes classifier over vMF class-conditionals.
//!
//! ```text
//! p(y | z) ∝ π_y exp(κ_y μ_yᵀz) / C_p(κ_y)
//! ```
//!
//! Parameters come from MAP estimation ([`BapeModel`]) rather than gradient
//! descent, so they can be edited after training: [`BayesClassifier::adjust`]
//! swaps the class priors for those of the test distribution and optionally
//! rewrites the concentrations.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimation::{map_estimate, posterior, scale_prior, ClassStats, EstimationMode, PriorHyper, PriorSpec};
use crate::harness::SavedModel;
use crate::linalg;
use crate::priors::EtfFrame;
use crate::vmf::{UnitVector, VmfParams};

/// Class prior probabilities `π`, strictly positive and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassPriors(Vec<f64>);

impl ClassPriors {
    pub const SUM_TOL: f64 = 1e-9;

    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::config("class priors must not be empty"));
        }
        if pi.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
            return Err(Error::config("class priors must be finite and > 0"));
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::config(format!("class priors sum to {sum}, not 1")));
        }
        Ok(ClassPriors(pi))
    }

    /// Normalizes positive weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::config("prior weights must be finite and > 0"));
        }
        let sum: f64 = weights.iter().sum();
        ClassPriors::new(weights.iter().map(|w| w / sum).collect())
    }

    /// Empirical class frequencies.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        ClassPriors::from_weights(&w)
    }

    pub fn uniform(k: usize) -> Result<Self> {
        ClassPriors::from_weights(&vec![1.0; k])
    }

    /// Exponential long-tail profile `π_j ∝ γ^(-j/(K-1))`.
    pub fn long_tail(k: usize, gamma: f64) -> Result<Self> {
        if k < 2 || !(gamma.is_finite() && gamma >= 1.0) {
            return Err(Error::config(format!("long-tail priors need K >= 2 and gamma >= 1, got K = {k}, gamma = {gamma}")));
        }
        let lambda = gamma.powf(-1.0 / (k as f64 - 1.0));
        let w: Vec<f64> = (0..k).map(|j| lambda.powi(j as i32)).collect();
        ClassPriors::from_weights(&w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ClassPriors {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ClassPriors::new(v)
    }
}

impl From<ClassPriors> for Vec<f64> {
    fn from(p: ClassPriors) -> Self {
        p.0
    }
}

/// What happens to the concentrations when a classifier is adjusted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMode {
    #[default]
    Keep,
    /// Every κ set to the unweighted mean of the fitted values.
    SharedMean,
    Fixed(f64),
}

impl FromStr for KappaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keep" => Ok(KappaMode::Keep),
            "shared-mean" | "shared_mean" => Ok(KappaMode::SharedMean),
            _ => match s.strip_prefix("fixed:") {
                Some(v) => {
                    let v: f64 = v.parse().map_err(|_| Error::config(format!("bad fixed kappa {v:?}")))?;
                    Ok(KappaMode::Fixed(v))
                }
                None => Err(Error::config(format!("unknown kappa mode {s:?}"))),
            },
        }
    }
}

/// Test-time class distribution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPriors {
    #[default]
    Uniform,
    /// Long-tail profile with the given imbalance factor.
    Imbalance(f64),
    Explicit(ClassPriors),
}

impl TargetPriors {
    pub fn resolve(&self, k: usize) -> Result<ClassPriors> {
        match self {
            TargetPriors::Uniform => ClassPriors::uniform(k),
            TargetPriors::Imbalance(gamma) => ClassPriors::long_tail(k, *gamma),
            TargetPriors::Explicit(p) => {
                check_dim(k, p.len())?;
                Ok(p.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdjustmentPolicy {
    #[serde(default)]
    pub target_priors: TargetPriors,
    #[serde(default)]
    pub kappa_mode: KappaMode,
}

impl AdjustmentPolicy {
    pub fn new(target_priors: TargetPriors, kappa_mode: KappaMode) -> Result<Self> {
        let policy = AdjustmentPolicy { target_priors, kappa_mode };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if let KappaMode::Fixed(v) = self.kappa_mode {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("fixed kappa must be finite and > 0, got {v}")));
            }
        }
        if let TargetPriors::Imbalance(g) = self.target_priors {
            if !(g.is_finite() && g >= 1.0) {
                return Err(Error::config(format!("imbalance factor must be >= 1, got {g}")));
            }
        }
        Ok(())
    }
}

/// One row of the per-class concentration diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRow {
    pub class: usize,
    pub count: u64,
    pub kappa: f64,
    pub mu_norm: f64,
}

/// Bayes classifier with one vMF component per class.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesClassifier {
    classes: Vec<VmfParams>,
    log_normalizers: Vec<f64>,
    priors: ClassPriors,
    labels: Vec<usize>,
    counts: Option<Vec<u64>>,
}

impl BayesClassifier {
    /// Classifier over labels `0..K` in order.
    pub fn new(classes: Vec<VmfParams>, priors: ClassPriors) -> Result<Self> {
        let labels = (0..classes.len()).collect();
        Self::with_labels(classes, priors, labels)
    }

    /// Classifier whose components carry the given class labels.
    pub fn with_labels(classes: Vec<VmfParams>, priors: ClassPriors, labels: Vec<usize>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::config(format!("a classifier needs K >= 2 classes, got {}", classes.len())));
        }
        check_dim(classes.len(), priors.len())?;
        check_dim(classes.len(), labels.len())?;
        let p = classes[0].dim();
        for c in &classes {
            check_dim(p, c.dim())?;
        }
        let log_normalizers = classes.iter().map(VmfParams::log_normalizer).collect::<Result<_>>()?;
        Ok(BayesClassifier { classes, log_normalizers, priors, labels, counts: None })
    }

    /// Attaches per-class training counts, marking the classifier as fitted.
    pub fn with_counts(mut self, counts: Vec<u64>) -> Result<Self> {
        check_dim(self.classes.len(), counts.len())?;
        self.counts = Some(counts);
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.classes[0].dim()
    }

    pub fn classes(&self) -> &[VmfParams] {
        &self.classes
    }

    pub fn priors(&self) -> &ClassPriors {
        &self.priors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    /// `s_y = ln π_y - ln C_p(κ_y) + κ_y μ_yᵀz`.
    pub fn logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        Ok(self
            .classes
            .iter()
            .zip(&self.log_normalizers)
            .zip(self.priors.as_slice())
            .map(|((c, ln_c), pi)| pi.ln() - ln_c + c.kappa() * linalg::dot(c.mu().as_slice(), z))
            .collect())
    }

    /// `ln p(y | z)` for every component, in component order.
    pub fn log_posterior(&self, z: &UnitVector) -> Result<Vec<f64>> {
        Ok(log_softmax(&self.logits(z.as_slice())?))
    }

    /// Label of the most probable class; ties go to the lowest component index.
    pub fn predict(&self, z: &UnitVector) -> Result<usize> {
        Ok(self.labels[argmax(&self.logits(z.as_slice())?)])
    }

    fn component(&self, label: usize) -> Result<usize> {
        self.labels.iter().position(|&l| l == label).ok_or(Error::InvalidLabel { label, k: self.classes.len() })
    }

    /// `-ln p(y | z)`.
    pub fn bape_loss(&self, z: &UnitVector, label: usize) -> Result<f64> {
        let y = self.component(label)?;
        Ok(-self.log_posterior(z)?[y])
    }

    /// Gradient of [`BayesClassifier::bape_loss`] with respect to `z` in the
    /// ambient space: `-(κ_y μ_y - Σ_y' p(y'|z) κ_y' μ_y')`.
    ///
    /// When `z = v / ‖v‖`, pass the result through [`sphere_chain_rule`] to
    /// get the gradient with respect to `v`.
    pub fn bape_loss_grad_z(&self, z: &UnitVector, label: usize) -> Result<Vec<f64>> {
        let y = self.component(label)?;
        let post = self.log_posterior(z)?;
        let mut grad = vec![0.0; self.dim()];
        for (j, (c, lp)) in self.classes.iter().zip(&post).enumerate() {
            let weight = lp.exp() - if j == y { 1.0 } else { 0.0 };
            linalg::axpy(weight * c.kappa(), c.mu().as_slice(), &mut grad);
        }
        Ok(grad)
    }

    /// New classifier with priors and concentrations replaced per `policy`.
    pub fn adjust(&self, policy: &AdjustmentPolicy) -> Result<BayesClassifier> {
        policy.validate()?;
        let priors = policy.target_priors.resolve(self.num_classes())?;
        let kappa_for = |c: &VmfParams| match policy.kappa_mode {
            KappaMode::Keep => c.kappa(),
            KappaMode::SharedMean => self.classes.iter().map(VmfParams::kappa).sum::<f64>() / self.num_classes() as f64,
            KappaMode::Fixed(v) => v,
        };
        let classes = self.classes.iter().map(|c| VmfParams::new(c.mu().clone(), kappa_for(c))).collect::<Result<Vec<_>>>()?;
        let mut out = BayesClassifier::with_labels(classes, priors, self.labels.clone())?;
        out.counts = self.counts.clone();
        Ok(out)
    }

    /// Per-class `(label, training count, κ, ‖μ‖)`.
    pub fn kappa_report(&self) -> Result<Vec<KappaRow>> {
        let counts = self.counts.as_ref().ok_or(Error::NotFitted)?;
        Ok(self
            .classes
            .iter()
            .zip(counts)
            .zip(&self.labels)
            .map(|((c, &count), &class)| KappaRow { class, count, kappa: c.kappa(), mu_norm: linalg::norm(c.mu().as_slice()) })
            .collect())
    }

    pub fn to_doc(&self) -> ClassifierDoc {
        ClassifierDoc {
            p: self.dim(),
            k: self.num_classes(),
            priors: self.priors.as_slice().to_vec(),
            classes: self
                .classes
                .iter()
                .enumerate()
                .map(|(i, c)| ClassDoc {
                    label: self.labels[i],
                    kappa: c.kappa(),
                    mu: c.mu().as_slice().to_vec(),
                    count: self.counts.as_ref().map(|n| n[i]),
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: &ClassifierDoc) -> Result<Self> {
        check_dim(doc.k, doc.classes.len())?;
        let classes = doc
            .classes
            .iter()
            .map(|c| {
                check_dim(doc.p, c.mu.len())?;
                VmfParams::new(UnitVector::new(c.mu.clone())?, c.kappa)
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = doc.classes.iter().map(|c| c.label).collect();
        let clf = BayesClassifier::with_labels(classes, ClassPriors::new(doc.priors.clone())?, labels)?;
        let counts: Option<Vec<u64>> = doc.classes.iter().map(|c| c.count).collect();
        match counts {
            Some(c) => clf.with_counts(c),
            None => Ok(clf),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SavedModel::Bape(self.to_doc()))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        match serde_json::from_str(s)? {
            SavedModel::Bape(doc) => BayesClassifier::from_doc(&doc),
            SavedModel::Linear(_) => Err(Error::Malformed("expected a bape classifier, found a linear classifier".into())),
        }
    }
}

/// Serialized form of a [`BayesClassifier`]. Floats are written in their
/// shortest exactly-round-tripping decimal form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierDoc {
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub priors: Vec<f64>,
    pub classes: Vec<ClassDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDoc {
    pub label: usize,
    pub kappa: f64,
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
}

/// Projects an ambient gradient `g = ∂L/∂z` through `z = v / ‖v‖`:
/// `∂L/∂v = (I - z zᵀ) g / ‖v‖`.
pub fn sphere_chain_rule(grad_z: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_dim(v.len(), grad_z.len())?;
    let n = linalg::norm(v);
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    let radial = linalg::dot(v, grad_z) / (n * n);
    Ok(grad_z.iter().zip(v).map(|(g, x)| (g - radial * x) / n).collect())
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    logits.iter().map(|s| s - lse).collect()
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Result of fitting: the classifier over non-degenerate classes plus the
/// labels that had to be left out.
#[derive(Debug, Clone)]
pub struct BapeFit {
    pub classifier: BayesClassifier,
    pub excluded: Vec<usize>,
}

/// Streaming MAP estimator for all classes.
///
/// Statistics accumulate through [`BapeModel::observe`]; the classifier is
/// recomputed from them on demand by [`BapeModel::fit`].
#[derive(Debug, Clone)]
pub struct BapeModel {
    stats: Vec<ClassStats>,
    priors: Vec<PriorSpec>,
    class_sizes: Vec<u64>,
    mode: EstimationMode,
}

impl BapeModel {
    /// `class_sizes` are the per-class training-set sizes `N_y` that scale
    /// the prior; `directions` supplies `m₀ʸ`.
    pub fn new(hyper: PriorHyper, directions: &EtfFrame, class_sizes: &[u64], mode: EstimationMode) -> Result<Self> {
        check_dim(directions.num_classes(), class_sizes.len())?;
        let priors = class_sizes
            .iter()
            .zip(directions.columns())
            .map(|(&n, m0)| scale_prior(hyper, m0.clone(), n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_priors(priors, class_sizes.to_vec(), mode))
    }

    pub fn from_priors(priors: Vec<PriorSpec>, class_sizes: Vec<u64>, mode: EstimationMode) -> Self {
        let dim = priors.first().map_or(0, PriorSpec::dim);
        BapeModel { stats: vec![ClassStats::new(dim); priors.len()], priors, class_sizes, mode }
    }

    pub fn num_classes(&self) -> usize {
        self.priors.len()
    }

    pub fn stats(&self) -> &[ClassStats] {
        &self.stats
    }

    pub fn priors(&self) -> &[PriorSpec] {
        &self.priors
    }

    pub fn mode(&self) -> EstimationMode {
        self.mode
    }

    pub fn set_directions(&mut self, directions: &EtfFrame) -> Result<()> {
        check_dim(self.num_classes(), directions.num_classes())?;
        for (p, m0) in self.priors.iter_mut().zip(directions.columns()) {
            *p = p.with_direction(m0.clone())?;
        }
        Ok(())
    }

    /// Adds one labelled mini-batch.
    pub fn observe(&mut self, batch: &[UnitVector], labels: &[usize]) -> Result<()> {
        check_dim(batch.len(), labels.len())?;
        let k = self.num_classes();
        for (z, &y) in batch.iter().zip(labels) {
            if y >= k {
                return Err(Error::InvalidLabel { label: y, k });
            }
            check_dim(self.stats[y].dim(), z.dim())?;
        }
        for (z, &y) in batch.iter().zip(labels) {
            self.stats[y].observe_one(z.as_slice());
        }
        Ok(())
    }

    pub fn reset_stats(&mut self) {
        self.stats.iter_mut().for_each(ClassStats::reset);
    }

    /// MAP estimates for every class, with training-frequency class priors.
    ///
    /// Classes whose posterior is degenerate (no data and no prior) are
    /// excluded and listed in [`BapeFit::excluded`].
    pub fn fit(&self) -> Result<BapeFit> {
        let mut classes = Vec::new();
        let mut labels = Vec::new();
        let mut counts = Vec::new();
        let mut excluded = Vec::new();
        for (y, (prior, stats)) in self.priors.iter().zip(&self.stats).enumerate() {
            match posterior(prior, stats) {
                Ok(post) => {
                    classes.push(map_estimate(&post, self.mode)?);
                    labels.push(y);
                    counts.push(stats.count());
                }
                Err(Error::DegeneratePosterior) => excluded.push(y),
                Err(e) => return Err(e),
            }
        }
        let weights: Vec<u64> = labels.iter().map(|&y| self.class_sizes[y].max(self.stats[y].count())).collect();
        if weights.contains(&0) {
            return Err(Error::config("class with a non-degenerate posterior but no training samples"));
        }
        let priors = ClassPriors::from_counts(&weights)?;
        let classifier = BayesClassifier::with_labels(classes, priors, labels)?.with_counts(counts)?;
        Ok(BapeFit { classifier, excluded })
    }
}
