//! Conjugate-prior MAP estimation of vMF parameters.
//!
//! The conjugate prior over `(μ, κ)` behaves like `α₀` unit pseudo-observations
//! whose resultant has length `β₀` and direction `m₀`. Combining it with the
//! sufficient statistics of `n` observations gives the posterior
//!
//! ```text
//! α = α₀ + n,   β = ‖β₀ m₀ + Σ zᵢ‖,   m = (β₀ m₀ + Σ zᵢ) / β
//! ```
//!
//! whose mode is `μ̂ = m` with `κ̂` solving `A_p(κ̂) = β / α`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::special::{mean_resultant_ratio, mean_resultant_ratio_derivative};
use crate::vmf::{UnitVector, VmfParams};

/// Resultant ratios at or above `1 - OVERFLOW_MARGIN` have no finite κ.
pub const OVERFLOW_MARGIN: f64 = 1e-9;

/// Largest permitted residual `|A_p(κ̂) - β/α|` of the exact solve.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-10;

/// Streaming sufficient statistics of one class: sample count and the
/// unnormalized resultant `Σ zᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    count: u64,
    resultant: Vec<f64>,
}

impl ClassStats {
    pub fn new(dim: usize) -> Self {
        ClassStats { count: 0, resultant: vec![0.0; dim] }
    }

    pub fn from_parts(count: u64, resultant: Vec<f64>) -> Result<Self> {
        if resultant.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("class resultant"));
        }
        let len = linalg::norm(&resultant);
        if len > count as f64 + 1e-6 {
            return Err(Error::domain(format!("resultant length {len} exceeds sample count {count}")));
        }
        Ok(ClassStats { count, resultant })
    }

    /// Statistics equivalent to `count` samples with the given mean vector.
    pub fn from_mean(count: u64, mean: &[f64]) -> Result<Self> {
        Self::from_parts(count, mean.iter().map(|m| m * count as f64).collect())
    }

    pub fn dim(&self) -> usize {
        self.resultant.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn resultant(&self) -> &[f64] {
        &self.resultant
    }

    /// `Σ zᵢ / n`, or `None` for an empty class.
    pub fn mean(&self) -> Option<Vec<f64>> {
        (self.count > 0).then(|| self.resultant.iter().map(|r| r / self.count as f64).collect())
    }

    /// Adds a mini-batch. The implied mean is the running-mean update
    /// `(n z̄ + s z̄') / (n + s)`.
    pub fn observe(&mut self, batch: &[UnitVector]) -> Result<()> {
        for z in batch {
            check_dim(self.dim(), z.dim())?;
        }
        for z in batch {
            linalg::axpy(1.0, z.as_slice(), &mut self.resultant);
        }
        self.count += batch.len() as u64;
        Ok(())
    }

    /// Adds one observation given as a raw slice that is already on the sphere.
    pub(crate) fn observe_one(&mut self, z: &[f64]) {
        linalg::axpy(1.0, z, &mut self.resultant);
        self.count += 1;
    }

    /// Value-returning form of [`ClassStats::observe`].
    pub fn updated(mut self, batch: &[UnitVector]) -> Result<Self> {
        self.observe(batch)?;
        Ok(self)
    }

    /// Combines statistics gathered independently on disjoint data.
    pub fn merge(&mut self, other: &ClassStats) -> Result<()> {
        check_dim(self.dim(), other.dim())?;
        linalg::axpy(1.0, &other.resultant, &mut self.resultant);
        self.count += other.count;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.count = 0;
        self.resultant.iter_mut().for_each(|r| *r = 0.0);
    }
}

/// Conjugate prior: `α₀` pseudo-observations with resultant `β₀ m₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    alpha0: f64,
    beta0: f64,
    m0: UnitVector,
}

impl PriorSpec {
    pub fn new(alpha0: f64, beta0: f64, m0: UnitVector) -> Result<Self> {
        if !(alpha0.is_finite() && beta0.is_finite()) {
            return Err(Error::NonFinite("prior parameters"));
        }
        if alpha0 < 0.0 || beta0 < 0.0 {
            return Err(Error::config(format!("prior needs alpha0, beta0 >= 0, got {alpha0}, {beta0}")));
        }
        if beta0 > alpha0 {
            return Err(Error::config(format!("prior beta0 = {beta0} exceeds alpha0 = {alpha0}")));
        }
        Ok(PriorSpec { alpha0, beta0, m0 })
    }

    /// The vanishing prior; MAP estimation reduces to maximum likelihood.
    pub fn flat(dim: usize) -> Result<Self> {
        PriorSpec::new(0.0, 0.0, UnitVector::basis(dim, 0)?)
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn m0(&self) -> &UnitVector {
        &self.m0
    }

    pub fn dim(&self) -> usize {
        self.m0.dim()
    }

    pub fn with_direction(&self, m0: UnitVector) -> Result<Self> {
        check_dim(self.dim(), m0.dim())?;
        Ok(PriorSpec { m0, ..self.clone() })
    }
}

/// Posterior parameters `(α, β, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSpec {
    alpha: f64,
    beta: f64,
    m: UnitVector,
}

impl PosteriorSpec {
    pub fn new(alpha: f64, beta: f64, m: UnitVector) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::NonFinite("posterior parameters"));
        }
        if beta < 0.0 {
            return Err(Error::domain(format!("posterior beta must be >= 0, got {beta}")));
        }
        Ok(PosteriorSpec { alpha, beta, m })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn m(&self) -> &UnitVector {
        &self.m
    }

    /// Reuses the posterior as the prior for the next batch of data.
    pub fn into_prior(self) -> Result<PriorSpec> {
        PriorSpec::new(self.alpha, self.beta, self.m)
    }
}

/// Combines a prior with observed statistics.
pub fn posterior(prior: &PriorSpec, stats: &ClassStats) -> Result<PosteriorSpec> {
    check_dim(prior.dim(), stats.dim())?;
    let mut v = stats.resultant.clone();
    linalg::axpy(prior.beta0, prior.m0.as_slice(), &mut v);
    let beta = linalg::norm(&v);
    if beta == 0.0 {
        return Err(Error::DegeneratePosterior);
    }
    linalg::scale(1.0 / beta, &mut v);
    let m = UnitVector::new(v)?;
    Ok(PosteriorSpec { alpha: prior.alpha0 + stats.count as f64, beta, m })
}

/// How `κ̂` is recovered from the resultant ratio `r = β/α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMode {
    /// Closed form `κ̂ = p β α / (α² - β²)`.
    #[default]
    #[serde(alias = "paper")]
    PaperApprox,
    /// Root of `A_p(κ) = β/α`.
    #[serde(alias = "exact")]
    ExactRoot,
}

impl std::str::FromStr for EstimationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" | "paper_approx" => Ok(EstimationMode::PaperApprox),
            "exact" | "exact_root" => Ok(EstimationMode::ExactRoot),
            other => Err(Error::config(format!("unknown estimation mode {other:?}"))),
        }
    }
}

/// MAP estimate `(μ̂, κ̂)` of a posterior.
pub fn map_estimate(post: &PosteriorSpec, mode: EstimationMode) -> Result<VmfParams> {
    let (alpha, beta) = (post.alpha, post.beta);
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("MAP needs alpha > 0, got {alpha}")));
    }
    let p = post.m.dim();
    let ratio = beta / alpha;
    if ratio >= 1.0 - OVERFLOW_MARGIN {
        return Err(Error::ConcentrationOverflow { ratio });
    }
    let kappa = if beta == 0.0 {
        0.0
    } else {
        match mode {
            EstimationMode::PaperApprox => approx_kappa(p, alpha, beta),
            EstimationMode::ExactRoot => solve_kappa(p, ratio)?,
        }
    };
    VmfParams::new(post.m.clone(), kappa)
}

fn approx_kappa(p: usize, alpha: f64, beta: f64) -> f64 {
    p as f64 * beta * alpha / (alpha * alpha - beta * beta)
}

/// Inverts `A_p`: the unique `κ ≥ 0` with `A_p(κ) = ratio`, for `ratio` in
/// `[0, 1 - OVERFLOW_MARGIN)`.
///
/// Safeguarded Newton iteration on a bracket, started from the closed-form
/// approximation.
pub fn solve_kappa(p: usize, ratio: f64) -> Result<f64> {
    if !(0.0..1.0 - OVERFLOW_MARGIN).contains(&ratio) {
        if ratio >= 1.0 - OVERFLOW_MARGIN {
            return Err(Error::ConcentrationOverflow { ratio });
        }
        return Err(Error::domain(format!("resultant ratio must be in [0, 1), got {ratio}")));
    }
    if ratio == 0.0 {
        return Ok(0.0);
    }
    let residual = |k: f64| -> Result<f64> { Ok(mean_resultant_ratio(p, k)? - ratio) };

    let start = approx_kappa(p, 1.0, ratio);
    let (mut lo, mut hi) = (0.0, start.max(1e-300));
    while residual(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::ConcentrationOverflow { ratio });
        }
    }

    let mut kappa = start.clamp(lo, hi);
    for _ in 0..200 {
        let f = residual(kappa)?;
        if f == 0.0 {
            return Ok(kappa);
        }
        if f < 0.0 {
            lo = kappa;
        } else {
            hi = kappa;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let slope = mean_resultant_ratio_derivative(p, kappa)?;
        let newton = kappa - f / slope;
        kappa = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    let f = residual(kappa)?;
    if f.abs() <= ROOT_RESIDUAL_TOL {
        Ok(kappa)
    } else {
        Err(Error::NoConvergence("concentration root"))
    }
}

/// Prior-strength hyperparameters expressed per training sample:
/// `α₀ʸ = α̂₀ N_y` and `β₀ʸ = β̂₀ N_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorHyper {
    pub alpha_hat: f64,
    pub beta_hat: f64,
}

impl PriorHyper {
    pub fn new(alpha_hat: f64, beta_hat: f64) -> Result<Self> {
        let h = PriorHyper { alpha_hat, beta_hat };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let PriorHyper { alpha_hat, beta_hat } = *self;
        if !(alpha_hat.is_finite() && beta_hat.is_finite() && alpha_hat >= 0.0 && beta_hat >= 0.0) {
            return Err(Error::config(format!("prior hyperparameters must be finite and >= 0, got {alpha_hat}, {beta_hat}")));
        }
        if beta_hat > alpha_hat {
            return Err(Error::config(format!("beta_hat = {beta_hat} exceeds alpha_hat = {alpha_hat}")));
        }
        Ok(())
    }
}

impl Default for PriorHyper {
    fn default() -> Self {
        PriorHyper { alpha_hat: 40.0, beta_hat: 8.0 }
    }
}

/// Prior for a class with `class_count` training samples.
pub fn scale_prior(hyper: PriorHyper, m0: UnitVector, class_count: u64) -> Result<PriorSpec> {
    hyper.validate()?;
    let n = class_count as f64;
    PriorSpec::new(hyper.alpha_hat * n, hyper.beta_hat * n, m0)
}
