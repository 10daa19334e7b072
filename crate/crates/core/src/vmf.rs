//! The von Mises-Fisher distribution on `S^{p-1}`.
//!
//! ```text
//! f_p(z | μ, κ) = exp(κ μᵀz) / C_p(κ)
//! ```
//!
//! Sampling follows Wood (1994): the cosine `w = μᵀz` is drawn by rejection
//! from a Beta envelope, the orthogonal part uniformly on `S^{p-2}`, and the
//! result is reflected from the `e_1` frame onto `μ`.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rng;
use crate::special::{log_vmf_normalizer, mean_resultant_ratio};

/// A point on the unit sphere `S^{p-1}`, `p ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Inputs whose norm is within this distance of 1 are silently rescaled.
    pub const RENORMALIZE_TOL: f64 = 1e-6;

    /// Accepts a vector that is already unit length up to float drift.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        let n = Self::checked_norm(&components)?;
        if (n - 1.0).abs() > Self::RENORMALIZE_TOL {
            return Err(Error::NotUnitNorm { norm: n });
        }
        // already unit to rounding: keep the bits so serialization round-trips
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(UnitVector(components));
        }
        Ok(Self::rescaled(components, n))
    }

    /// Projects any non-zero vector onto the sphere.
    pub fn normalize(components: Vec<f64>) -> Result<Self> {
        let n = Self::checked_norm(&components)?;
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(Self::rescaled(components, n))
    }

    /// The `i`-th standard basis vector of `R^dim`.
    pub fn basis(dim: usize, i: usize) -> Result<Self> {
        if dim < 2 || i >= dim {
            return Err(Error::domain(format!("basis vector {i} of R^{dim}")));
        }
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Ok(UnitVector(v))
    }

    fn checked_norm(components: &[f64]) -> Result<f64> {
        if components.len() < 2 {
            return Err(Error::domain(format!("unit vectors need p >= 2, got {}", components.len())));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("unit vector components"));
        }
        Ok(linalg::norm(components))
    }

    fn rescaled(mut components: Vec<f64>, norm: f64) -> Self {
        if norm != 1.0 {
            linalg::scale(1.0 / norm, &mut components);
        }
        UnitVector(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Inner product with another vector of the same dimension.
    pub fn dot(&self, other: &[f64]) -> Result<f64> {
        check_dim(self.dim(), other.len())?;
        Ok(linalg::dot(&self.0, other))
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitVector::new(v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(u: UnitVector) -> Self {
        u.0
    }
}

/// Mean direction and concentration of one vMF distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVmf")]
pub struct VmfParams {
    mu: UnitVector,
    kappa: f64,
}

#[derive(Deserialize)]
struct RawVmf {
    mu: UnitVector,
    kappa: f64,
}

impl TryFrom<RawVmf> for VmfParams {
    type Error = Error;

    fn try_from(raw: RawVmf) -> Result<Self> {
        VmfParams::new(raw.mu, raw.kappa)
    }
}

impl VmfParams {
    pub fn new(mu: UnitVector, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::domain(format!("concentration must be finite and >= 0, got {kappa}")));
        }
        Ok(VmfParams { mu, kappa })
    }

    pub fn mu(&self) -> &UnitVector {
        &self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }

    pub fn log_normalizer(&self) -> Result<f64> {
        Ok(log_vmf_normalizer(self.dim(), self.kappa)?.value())
    }

    /// Expected length of the sample mean vector, `A_p(κ)`.
    pub fn mean_resultant_length(&self) -> Result<f64> {
        mean_resultant_ratio(self.dim(), self.kappa)
    }

    /// `κ μᵀz - ln C_p(κ)`.
    pub fn log_density(&self, z: &UnitVector) -> Result<f64> {
        let cos = self.mu.dot(z.as_slice())?;
        Ok(self.kappa * cos - self.log_normalizer()?)
    }

    /// `n` draws from sub-stream 0 of `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<UnitVector>> {
        self.sample_with(&mut rng::stream(seed, 0), n)
    }

    /// `n` draws from a caller-supplied generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<UnitVector>> {
        if n == 0 {
            return Err(Error::domain("sample count must be >= 1"));
        }
        let sampler = WoodSampler::new(self.dim(), self.kappa)?;
        Ok((0..n).map(|_| self.rotate_from_e1(sampler.draw(rng))).collect())
    }

    fn rotate_from_e1(&self, mut z: Vec<f64>) -> UnitVector {
        linalg::reflect_e1_onto(self.mu.as_slice(), &mut z);
        // reflection is norm preserving; renormalize away the last ulp
        let n = linalg::norm(&z);
        UnitVector::rescaled(z, n)
    }
}

/// Wood's rejection sampler for the vMF cosine, plus the tangent direction.
struct WoodSampler {
    dim: usize,
    kappa: f64,
    b: f64,
    x0: f64,
    c: f64,
    beta: Beta<f64>,
}

impl WoodSampler {
    fn new(dim: usize, kappa: f64) -> Result<Self> {
        let m = (dim - 1) as f64;
        // b = (-2κ + √(4κ² + m²)) / m, rearranged to avoid cancellation
        let b = m / (2.0 * kappa + (4.0 * kappa * kappa + m * m).sqrt());
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + m * (1.0 - x0 * x0).ln();
        let beta = Beta::new(m / 2.0, m / 2.0).map_err(|e| Error::domain(e.to_string()))?;
        Ok(WoodSampler { dim, kappa, b, x0, c, beta })
    }

    fn draw_cosine<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m = (self.dim - 1) as f64;
        loop {
            let z = self.beta.sample(rng);
            let w = (1.0 - (1.0 + self.b) * z) / (1.0 - (1.0 - self.b) * z);
            let u: f64 = rng.random();
            if self.kappa * w + m * (1.0 - self.x0 * w).ln() - self.c >= u.ln() {
                return w;
            }
        }
    }

    /// A draw in the frame where the mean direction is `e_1`.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let w = self.draw_cosine(rng);
        let mut out = vec![0.0; self.dim];
        out[0] = w;
        let tangent = &mut out[1..];
        loop {
            for t in tangent.iter_mut() {
                *t = StandardNormal.sample(rng);
            }
            let n = linalg::norm(tangent);
            if n > 0.0 {
                let scale = (1.0 - w * w).max(0.0).sqrt() / n;
                linalg::scale(scale, tangent);
                break;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn mean_vector(samples: &[UnitVector]) -> Vec<f64> {
        let p = samples[0].dim();
        let mut m = vec![0.0; p];
        for s in samples {
            linalg::axpy(1.0, s.as_slice(), &mut m);
        }
        linalg::scale(1.0 / samples.len() as f64, &mut m);
        m
    }

    #[test]
    fn unit_vector_validation() {
        assert!(UnitVector::new(vec![1.0, 0.0]).is_ok());
        let drift = UnitVector::new(vec![1.0 + 5e-7, 0.0]).unwrap();
        assert_eq!(drift.as_slice(), &[1.0, 0.0]);
        assert!(matches!(UnitVector::new(vec![1.1, 0.0]), Err(Error::NotUnitNorm { .. })));
        assert!(UnitVector::new(vec![1.0]).is_err());
        assert!(UnitVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(matches!(UnitVector::normalize(vec![0.0, 0.0]), Err(Error::ZeroVector)));
        let n = UnitVector::normalize(vec![3.0, 4.0]).unwrap();
        assert!((n.as_slice()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn unit_vector_serde_validates() {
        let u: UnitVector = serde_json::from_str("[0.6, 0.8]").unwrap();
        assert_eq!(u.dim(), 2);
        assert!(serde_json::from_str::<UnitVector>("[2.0, 0.0]").is_err());
    }

    #[test]
    fn log_density_examples() {
        let e1 = UnitVector::basis(3, 0).unwrap();
        let any = UnitVector::normalize(vec![0.3, -0.4, 0.2]).unwrap();
        let uniform = VmfParams::new(e1.clone(), 0.0).unwrap();
        assert!((uniform.log_density(&any).unwrap() + (4.0 * PI).ln()).abs() < 1e-14);

        let one = VmfParams::new(e1.clone(), 1.0).unwrap();
        let at_mode = one.log_density(&e1).unwrap();
        let expect = 1.0 - (4.0 * PI * 1f64.sinh()).ln();
        assert!((at_mode - expect).abs() < 1e-12);
        assert!((at_mode + 1.692_463_6).abs() < 1e-7);

        let circle = VmfParams::new(UnitVector::basis(2, 0).unwrap(), 1.0).unwrap();
        let perp = UnitVector::basis(2, 1).unwrap();
        let i0_one = 1.266_065_877_752_008_4_f64;
        assert!((circle.log_density(&perp).unwrap() + (2.0 * PI * i0_one).ln()).abs() < 1e-12);

        assert!(matches!(one.log_density(&perp), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn uniform_samples_have_small_resultant() {
        let p = VmfParams::new(UnitVector::basis(8, 0).unwrap(), 0.0).unwrap();
        let s = p.sample(10_000, 11).unwrap();
        assert!(linalg::norm(&mean_vector(&s)) <= 0.05);
    }

    #[test]
    fn resultant_length_matches_bessel_ratio() {
        let mu = UnitVector::normalize((0..16).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let p = VmfParams::new(mu, 20.0).unwrap();
        let s = p.sample(50_000, 5).unwrap();
        let r = linalg::norm(&mean_vector(&s));
        let a = p.mean_resultant_length().unwrap();
        assert!((r - a).abs() <= 0.01, "{r} vs {a}");
    }

    #[test]
    fn huge_concentration_collapses_onto_mean() {
        let mu = UnitVector::normalize(vec![1.0, 2.0, -1.0]).unwrap();
        let p = VmfParams::new(mu.clone(), 1e6).unwrap();
        for z in p.sample(100, 3).unwrap() {
            assert!(mu.dot(z.as_slice()).unwrap() > 0.999);
            assert!((linalg::norm(z.as_slice()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = VmfParams::new(UnitVector::basis(5, 2).unwrap(), 3.0).unwrap();
        let a = p.sample(200, 42).unwrap();
        let b = p.sample(200, 42).unwrap();
        let bits = |v: &[UnitVector]| v.iter().flat_map(|u| u.as_slice().iter().map(|x| x.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&p.sample(200, 43).unwrap()));
        assert!(p.sample(0, 1).is_err());
    }

    fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn rotation_equivariance_in_distribution() {
        let p = 6;
        let n = 10_000;
        let mu = UnitVector::normalize(vec![1.0, 0.5, -0.2, 0.0, 0.3, 0.1]).unwrap();
        // random orthogonal matrix from orthonormalized Gaussian columns
        let mut g = rng::stream(99, 0);
        let mut q: Vec<Vec<f64>> = (0..p).map(|_| (0..p).map(|_| StandardNormal.sample(&mut g)).collect()).collect();
        assert!(linalg::orthonormalize(&mut q));
        let rotate = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; p];
            for (col, &x) in q.iter().zip(v) {
                linalg::axpy(x, col, &mut out);
            }
            out
        };
        let rotated_mu = UnitVector::normalize(rotate(mu.as_slice())).unwrap();

        let base = VmfParams::new(mu.clone(), 4.0).unwrap().sample(n, 1).unwrap();
        let direct = VmfParams::new(rotated_mu.clone(), 4.0).unwrap().sample(n, 2).unwrap();
        let rotated: Vec<UnitVector> = base.iter().map(|z| UnitVector::normalize(rotate(z.as_slice())).unwrap()).collect();

        let r1 = linalg::norm(&mean_vector(&rotated));
        let r2 = linalg::norm(&mean_vector(&direct));
        assert!((r1 - r2).abs() < 0.01);

        let cos = |v: &[UnitVector]| v.iter().map(|z| rotated_mu.dot(z.as_slice()).unwrap()).collect::<Vec<_>>();
        let d = ks_statistic(cos(&rotated), cos(&direct));
        // 5% two-sample critical value is 1.36·√(2/n) ≈ 0.019
        assert!(d < 0.019, "KS statistic {d}");
    }

    #[test]
    fn density_integrates_to_one_by_importance_sampling() {
        let p = 8;
        let params = VmfParams::new(UnitVector::normalize(vec![1.0; 8]).unwrap(), 2.5).unwrap();
        let uniform = VmfParams::new(UnitVector::basis(p, 0).unwrap(), 0.0).unwrap();
        let n = 100_000;
        let log_area = crate::special::log_sphere_area(p);
        let est: f64 = uniform
            .sample(n, 8)
            .unwrap()
            .iter()
            .map(|z| (params.log_density(z).unwrap() + log_area).exp())
            .sum::<f64>()
            / n as f64;
        assert!((est - 1.0).abs() < 0.02, "{est}");
    }
}
