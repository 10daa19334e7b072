//! Modified Bessel functions of the first kind and the von Mises-Fisher
//! normalizer, evaluated in log space.
//!
//! `ln I_ν(x)` uses the power series
//!
//! ```text
//! I_ν(x) = Σ_i (x/2)^(2i+ν) / (i! Γ(ν+i+1))
//! ```
//!
//! summed outward from its largest term so that nothing overflows, and the
//! Hankel expansion `I_ν(x) ~ e^x / √(2πx) · Σ_k (-1)^k a_k(ν) / x^k` once
//! `x > max(20, ν)` and that expansion converges to working precision.
//! The ratio `A_p(κ) = I_{p/2}(κ) / I_{p/2-1}(κ)` comes from a continued
//! fraction (or the ratio of two Hankel sums at large κ), never from the
//! quotient of two exponentiated values.
//!
//! Tested for orders up to 2048 (`p` up to 4096) and arguments up to 1e6.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

/// Switchover from the power series to the Hankel expansion.
const SERIES_ARG_LIMIT: f64 = 20.0;
const SERIES_REL_TOL: f64 = 1e-17;
const HANKEL_REL_TOL: f64 = 1e-16;
const HANKEL_MAX_TERMS: usize = 200;
const CF_REL_TOL: f64 = 2.5e-16;
const CF_MAX_ITER: usize = 20_000_000;

/// Order `ν ≥ 0` of a modified Bessel function.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if nu.is_finite() && nu >= 0.0 {
            Ok(BesselOrder(nu))
        } else {
            Err(Error::domain(format!("Bessel order must be finite and >= 0, got {nu}")))
        }
    }

    /// The order `p/2 - 1` appearing in the normalizer on `S^{p-1}`.
    pub fn for_dimension(p: usize) -> Result<Self> {
        check_dimension(p)?;
        Ok(BesselOrder(p as f64 / 2.0 - 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Natural log of the vMF normalizing constant `C_p(κ)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogNormalizer(f64);

impl LogNormalizer {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_dimension(p: usize) -> Result<()> {
    if p >= 2 {
        Ok(())
    } else {
        Err(Error::domain(format!("sphere dimension p must be >= 2, got {p}")))
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa.is_finite() && kappa >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("concentration must be finite and >= 0, got {kappa}")))
    }
}

/// `ln I_ν(x)` for `x ≥ 0`.
///
/// Returns `0` at `x = 0, ν = 0` and `-∞` at `x = 0, ν > 0`.
pub fn log_bessel_i(nu: BesselOrder, x: f64) -> Result<f64> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::domain(format!("Bessel argument must be finite and >= 0, got {x}")));
    }
    let nu = nu.0;
    if x == 0.0 {
        return Ok(if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if x > SERIES_ARG_LIMIT.max(nu) {
        if let Some(sum) = hankel_sum(nu, x) {
            return Ok(x - 0.5 * (2.0 * PI * x).ln() + sum.ln());
        }
    }
    Ok(log_bessel_series(nu, x))
}

/// Power series summed in units of its largest term.
pub(crate) fn log_bessel_series(nu: f64, x: f64) -> f64 {
    let half = 0.5 * x;
    let half_sq = half * half;
    // Terms grow while (i+1)(ν+i+1) < (x/2)^2; the peak sits at the positive
    // root of i(ν+i) = (x/2)^2.
    let peak = (0.5 * (x.hypot(nu) - nu)).floor().max(0.0);
    let log_peak = (2.0 * peak + nu) * half.ln() - libm::lgamma(peak + 1.0) - libm::lgamma(nu + peak + 1.0);

    let mut sum = 1.0;
    let mut term = 1.0;
    let mut i = peak;
    loop {
        term *= half_sq / ((i + 1.0) * (nu + i + 1.0));
        i += 1.0;
        sum += term;
        if term <= SERIES_REL_TOL * sum {
            break;
        }
    }
    let mut term = 1.0;
    let mut i = peak;
    while i > 0.0 {
        term *= i * (nu + i) / half_sq;
        i -= 1.0;
        sum += term;
        if term <= SERIES_REL_TOL * sum {
            break;
        }
    }
    log_peak + sum.ln()
}

/// `Σ_k (-1)^k a_k(ν) / x^k` of the large-argument expansion, or `None` when
/// the terms stop shrinking before reaching working precision.
pub(crate) fn hankel_sum(nu: f64, x: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut sum = 1.0;
    let mut term: f64 = 1.0;
    for k in 1..=HANKEL_MAX_TERMS {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (8.0 * k as f64 * x);
        if next == 0.0 {
            return Some(sum);
        }
        // An asymptotic series: once terms grow again, more terms make it worse.
        if k > 1 && next.abs() > term.abs() && next.abs() > HANKEL_REL_TOL * sum.abs() {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() <= HANKEL_REL_TOL * sum.abs() {
            return if sum > 0.0 { Some(sum) } else { None };
        }
    }
    None
}

/// `ln C_p(κ)` where `C_p(κ) = (2π)^{p/2} I_{p/2-1}(κ) / κ^{p/2-1}`.
///
/// At `κ = 0` this is the log surface area of `S^{p-1}`, `ln(2π^{p/2} / Γ(p/2))`.
pub fn log_vmf_normalizer(p: usize, kappa: f64) -> Result<LogNormalizer> {
    check_dimension(p)?;
    check_kappa(kappa)?;
    let half_p = p as f64 / 2.0;
    if kappa == 0.0 {
        return Ok(LogNormalizer(log_sphere_area(p)));
    }
    let nu = half_p - 1.0;
    let log_i = log_bessel_i(BesselOrder(nu), kappa)?;
    let log_kappa_pow = if nu == 0.0 { 0.0 } else { nu * kappa.ln() };
    Ok(LogNormalizer(half_p * (2.0 * PI).ln() + log_i - log_kappa_pow))
}

/// `ln |S^{p-1}| = ln 2 + (p/2) ln π - ln Γ(p/2)`.
pub fn log_sphere_area(p: usize) -> f64 {
    let half_p = p as f64 / 2.0;
    LN_2 + half_p * PI.ln() - libm::lgamma(half_p)
}

/// Mean resultant length `A_p(κ) = I_{p/2}(κ) / I_{p/2-1}(κ)`, in `[0, 1)`.
pub fn mean_resultant_ratio(p: usize, kappa: f64) -> Result<f64> {
    check_dimension(p)?;
    check_kappa(kappa)?;
    if kappa == 0.0 {
        return Ok(0.0);
    }
    bessel_ratio(p as f64 / 2.0 - 1.0, kappa)
}

/// `dA_p/dκ = 1 - A² - (p-1) A / κ`.
pub fn mean_resultant_ratio_derivative(p: usize, kappa: f64) -> Result<f64> {
    check_dimension(p)?;
    check_kappa(kappa)?;
    if kappa == 0.0 {
        return Ok(1.0 / p as f64);
    }
    let a = bessel_ratio(p as f64 / 2.0 - 1.0, kappa)?;
    Ok(1.0 - a * a - (p as f64 - 1.0) * a / kappa)
}

/// `I_{ν+1}(x) / I_ν(x)` for `x > 0`.
fn bessel_ratio(nu: f64, x: f64) -> Result<f64> {
    if x > SERIES_ARG_LIMIT.max(nu) {
        if let (Some(lo), Some(hi)) = (hankel_sum(nu, x), hankel_sum(nu + 1.0, x)) {
            return Ok(hi / lo);
        }
    }
    ratio_continued_fraction(nu, x)
}

/// `I_{ν+1}(x)/I_ν(x) = 1 / (b_1 + 1 / (b_2 + 1 / (b_3 + ...)))` with
/// `b_k = 2(ν+k)/x`, evaluated by the modified Lentz method.
fn ratio_continued_fraction(nu: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let b = |k: usize| 2.0 * (nu + k as f64) / x;
    let mut f = b(1).max(TINY);
    let mut c = f;
    let mut d = 0.0;
    for k in 2..CF_MAX_ITER {
        let bk = b(k);
        d += bk;
        if d == 0.0 {
            d = TINY;
        }
        c = bk + 1.0 / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() <= CF_REL_TOL {
            return Ok(1.0 / f);
        }
    }
    Err(Error::NoConvergence("Bessel ratio continued fraction"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(nu: f64) -> BesselOrder {
        BesselOrder::new(nu).unwrap()
    }

    /// ln I_{1/2}(x) = ln(√(2/(πx)) sinh x), written to stay finite at large x.
    fn log_i_half(x: f64) -> f64 {
        0.5 * (2.0 / (PI * x)).ln() + x + (-(-2.0 * x).exp()).ln_1p() - LN_2
    }

    /// ln I_{3/2}(x) = ln(√(2/(πx)) (cosh x - sinh x / x)).
    fn log_i_three_halves(x: f64) -> f64 {
        let e = (-2.0 * x).exp();
        // cosh x - sinh x / x = e^x/2 · ((1 + e) - (1 - e)/x)
        0.5 * (2.0 / (PI * x)).ln() + x - LN_2 + ((1.0 + e) - (1.0 - e) / x).ln()
    }

    /// Plain truncated series with term recurrence, Γ from tgamma.
    fn naive_series(nu: f64, x: f64) -> f64 {
        let h = x / 2.0;
        let mut term = h.powf(nu) / libm::tgamma(nu + 1.0);
        let mut sum = term;
        for i in 1..400 {
            let i = i as f64;
            term *= h * h / (i * (nu + i));
            sum += term;
        }
        sum
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn order_validation() {
        assert!(BesselOrder::new(-0.5).is_err());
        assert!(BesselOrder::new(f64::NAN).is_err());
        assert!(log_bessel_i(order(1.0), -1.0).is_err());
        assert!(BesselOrder::for_dimension(1).is_err());
        assert_eq!(BesselOrder::for_dimension(3).unwrap().value(), 0.5);
    }

    #[test]
    fn zero_argument() {
        assert_eq!(log_bessel_i(order(0.0), 0.0).unwrap(), 0.0);
        assert_eq!(log_bessel_i(order(2.0), 0.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn half_order_at_one() {
        let got = log_bessel_i(order(0.5), 1.0).unwrap();
        let expect = ((2.0 / PI).sqrt() * 1f64.sinh()).ln();
        assert!(rel(got.exp(), expect.exp()) < 1e-12, "{got} vs {expect}");
        assert!((got.exp() - 0.937_674_888_245_488).abs() < 1e-12);
    }

    #[test]
    fn matches_truncated_series_below_twenty() {
        for &nu in &[0.0, 0.5, 1.0, 2.5, 7.0, 15.0, 30.0] {
            for &x in &[1e-6, 0.01, 0.5, 1.0, 3.7, 10.0, 19.9, 20.0] {
                let got = log_bessel_i(order(nu), x).unwrap().exp();
                let expect = naive_series(nu, x);
                assert!(rel(got, expect) < 1e-10, "nu={nu} x={x}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn matches_half_integer_closed_forms_everywhere() {
        for &x in &[0.3, 1.0, 5.0, 19.0, 20.5, 50.0, 300.0, 1e4, 1e6] {
            let a = log_bessel_i(order(0.5), x).unwrap();
            let b = log_bessel_i(order(1.5), x).unwrap();
            // relative error of exp(result) equals the absolute error in log,
            // floored at a few ulps of the log itself
            let tol = 1e-10_f64.max(4.0 * f64::EPSILON * x);
            assert!((a - log_i_half(x)).abs() < tol, "x={x}");
            assert!((b - log_i_three_halves(x)).abs() < tol, "x={x}");
        }
    }

    #[test]
    fn hankel_and_series_agree_across_the_switchover() {
        for &nu in &[0.0, 0.5, 1.0, 3.0, 6.5, 14.0] {
            for &x in &[20.0001, 25.0, 40.0, 80.0] {
                if let Some(s) = hankel_sum(nu, x) {
                    let h = x - 0.5 * (2.0 * PI * x).ln() + s.ln();
                    let series = log_bessel_series(nu, x);
                    assert!((h - series).abs() < 1e-11, "nu={nu} x={x}: {h} vs {series}");
                }
            }
        }
        // the expansion must actually be in use for small orders just above 20
        assert!(hankel_sum(0.0, 20.5).is_some());
        // and refused where it diverges
        assert!(hankel_sum(200.0, 250.0).is_none());
    }

    #[test]
    fn recurrence_consistency() {
        // I_{ν-1}(x) - I_{ν+1}(x) = (2ν/x) I_ν(x)
        for &nu in &[1.0, 1.5, 4.0, 15.5, 63.0, 127.0] {
            for &x in &[0.7, 5.0, 21.0, 100.0, 700.0] {
                let lm = log_bessel_i(order(nu - 1.0), x).unwrap();
                let l0 = log_bessel_i(order(nu), x).unwrap();
                let lp = log_bessel_i(order(nu + 1.0), x).unwrap();
                let lhs = (lm - l0).exp() - (lp - l0).exp();
                let rhs = 2.0 * nu / x;
                assert!(rel(lhs, rhs) < 1e-8, "nu={nu} x={x}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn large_orders_and_arguments_are_finite() {
        for &nu in &[255.0, 2047.0] {
            for &x in &[1e-8, 1.0, 255.0, 1e4, 1e6] {
                let v = log_bessel_i(order(nu), x).unwrap();
                assert!(v.is_finite(), "nu={nu} x={x}");
            }
        }
    }

    #[test]
    fn normalizer_examples() {
        let got = log_vmf_normalizer(3, 1.0).unwrap().value();
        let expect = (4.0 * PI * 1f64.sinh()).ln();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 2.6925).abs() < 1e-4);

        let lim = log_vmf_normalizer(3, 0.0).unwrap().value();
        assert!((lim - (4.0 * PI).ln()).abs() < 1e-14);
        let circle = log_vmf_normalizer(2, 0.0).unwrap().value();
        assert!((circle - (2.0 * PI).ln()).abs() < 1e-14);

        assert!(log_vmf_normalizer(1, 1.0).is_err());
        assert!(log_vmf_normalizer(3, -1.0).is_err());
    }

    #[test]
    fn normalizer_is_continuous_at_zero() {
        for &p in &[2usize, 3, 8, 64, 512, 4096] {
            let at0 = log_vmf_normalizer(p, 0.0).unwrap().value();
            let near = log_vmf_normalizer(p, 1e-12).unwrap().value();
            assert!((at0 - near).abs() < 1e-8, "p={p}: {at0} vs {near}");
        }
    }

    #[test]
    fn circle_density_integrates_to_one() {
        // trapezoid rule is spectrally accurate for periodic integrands
        let n = 4000;
        for &kappa in &[0.0, 1.0, 10.0, 100.0] {
            let log_c = log_vmf_normalizer(2, kappa).unwrap().value();
            let h = 2.0 * PI / n as f64;
            let total: f64 = (0..n).map(|i| (kappa * (i as f64 * h).cos() - log_c).exp()).sum::<f64>() * h;
            assert!((total - 1.0).abs() < 1e-6, "kappa={kappa}: {total}");
        }
    }

    /// coth κ - 1/κ, switching to its Taylor series where the closed form cancels.
    fn langevin(k: f64) -> f64 {
        if k < 1e-2 {
            k / 3.0 - k.powi(3) / 45.0 + 2.0 * k.powi(5) / 945.0
        } else {
            1.0 / k.tanh() - 1.0 / k
        }
    }

    #[test]
    fn ratio_matches_coth_identity_for_p3() {
        let mut k = 1e-3;
        while k <= 1e4 {
            let got = mean_resultant_ratio(3, k).unwrap();
            let expect = langevin(k);
            assert!(rel(got, expect) < 1e-8, "kappa={k}: {got} vs {expect}");
            k *= 1.37;
        }
        let five = mean_resultant_ratio(3, 5.0).unwrap();
        assert!((five - (1.0 / 5f64.tanh() - 0.2)).abs() < 1e-14);
        assert!((five - 0.800_090_804).abs() < 1e-9);
        assert_eq!(mean_resultant_ratio(3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn ratio_agrees_with_series_quotient() {
        // independent route: quotient of two series evaluations
        for &p in &[2usize, 8, 64, 256] {
            for &k in &[0.1, 3.0, 19.0, 50.0, 49.0, 51.0, 400.0] {
                let nu = p as f64 / 2.0 - 1.0;
                let q = (log_bessel_series(nu + 1.0, k) - log_bessel_series(nu, k)).exp();
                let a = mean_resultant_ratio(p, k).unwrap();
                assert!(rel(a, q) < 1e-10, "p={p} kappa={k}: {a} vs {q}");
            }
        }
    }

    #[test]
    fn ratio_high_dimension_example() {
        let a49 = mean_resultant_ratio(64, 49.0).unwrap();
        let a50 = mean_resultant_ratio(64, 50.0).unwrap();
        let a51 = mean_resultant_ratio(64, 51.0).unwrap();
        assert!(0.0 < a50 && a50 < 1.0);
        assert!(a49 < a50 && a50 < a51);
    }

    #[test]
    fn ratio_is_monotone_on_grids() {
        for &p in &[2usize, 3, 16, 128, 1024] {
            let mut prev = 0.0;
            let mut k = 1e-3;
            while k < 1e5 {
                let a = mean_resultant_ratio(p, k).unwrap();
                assert!(a > prev && a < 1.0, "p={p} kappa={k}");
                prev = a;
                k *= 1.2;
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &p in &[2usize, 3, 32, 256] {
            for &k in &[0.5, 5.0, 50.0] {
                let h = 1e-5 * k;
                let fd = (mean_resultant_ratio(p, k + h).unwrap() - mean_resultant_ratio(p, k - h).unwrap()) / (2.0 * h);
                let d = mean_resultant_ratio_derivative(p, k).unwrap();
                assert!(rel(d, fd) < 1e-6, "p={p} kappa={k}: {d} vs {fd}");
            }
        }
    }
}
