//! Samplers and log-densities for the distribution families the models use.
//!
//! Parameterizations:
//! - normal by `(mean, variance)`;
//! - scaled inverse-χ²`(ν, s²)`, the law of `ν·s²/χ²_ν`;
//! - gamma by `(shape, rate)`;
//! - exponential by `rate`;
//! - Laplace by `(location, scale)` with density `exp(-|x-μ|/σ) / 2σ`.
//!
//! Densities are evaluated in log space only.

use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::random::RandomStream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parameters of a scaled inverse-χ² distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledInvChi2Params {
    pub dof: f64,
    pub scale: f64,
}

impl ScaledInvChi2Params {
    pub fn new(dof: f64, scale: f64) -> Result<Self> {
        if !(dof > 0.0 && dof.is_finite()) {
            return Err(Error::Domain(format!("inverse-chi2 dof must be positive, got {dof}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("inverse-chi2 scale must be positive, got {scale}")));
        }
        Ok(Self { dof, scale })
    }

    /// `ν s² / (ν - 2)`, defined for `ν > 2`.
    pub fn mean(&self) -> Option<f64> {
        (self.dof > 2.0).then(|| self.dof * self.scale / (self.dof - 2.0))
    }

    /// `2ν² s⁴ / ((ν-2)²(ν-4))`, defined for `ν > 4`.
    pub fn variance(&self) -> Option<f64> {
        let nu = self.dof;
        (nu > 4.0).then(|| 2.0 * nu * nu * self.scale * self.scale / ((nu - 2.0).powi(2) * (nu - 4.0)))
    }
}

/// Correlation of a 2×2 correlation matrix; `|rho| < 1` keeps it positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation2x2(f64);

impl Correlation2x2 {
    pub fn new(rho: f64) -> Result<Self> {
        if rho.is_finite() && rho.abs() < 1.0 {
            Ok(Self(rho))
        } else {
            Err(Error::Domain(format!("correlation must lie in (-1, 1), got {rho}")))
        }
    }

    pub fn rho(self) -> f64 {
        self.0
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {v}")))
    }
}

pub fn standard_normal(stream: &mut RandomStream) -> f64 {
    StandardNormal.sample(stream)
}

pub fn sample_normal(stream: &mut RandomStream, mean: f64, variance: f64) -> Result<f64> {
    check_finite("normal mean", mean)?;
    check_positive("normal variance", variance)?;
    Ok(mean + variance.sqrt() * standard_normal(stream))
}

pub fn sample_gamma(stream: &mut RandomStream, shape: f64, rate: f64) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(g.sample(stream))
}

pub fn sample_exponential(stream: &mut RandomStream, rate: f64) -> Result<f64> {
    check_positive("exponential rate", rate)?;
    Ok(-stream.uniform().ln() / rate)
}

/// Draws `ν s² / X` with `X ~ χ²_ν = Gamma(ν/2, rate 1/2)`.
pub fn sample_scaled_inv_chi2(stream: &mut RandomStream, params: ScaledInvChi2Params) -> Result<f64> {
    let params = ScaledInvChi2Params::new(params.dof, params.scale)?;
    let chi2 = sample_gamma(stream, 0.5 * params.dof, 0.5)?;
    let draw = params.dof * params.scale / chi2;
    if draw > 0.0 && draw.is_finite() {
        Ok(draw)
    } else {
        Err(Error::Domain(format!(
            "inverse-chi2({}, {}) draw over/underflowed",
            params.dof, params.scale
        )))
    }
}

/// Draw from the bivariate normal with means `mean`, standard deviations
/// `(tau, zeta)` and correlation `corr`.
pub fn sample_bivariate_normal(
    stream: &mut RandomStream,
    mean: (f64, f64),
    tau: f64,
    zeta: f64,
    corr: Correlation2x2,
) -> Result<(f64, f64)> {
    check_positive("tau", tau)?;
    check_positive("zeta", zeta)?;
    let rho = Correlation2x2::new(corr.rho())?.rho();
    let z1 = standard_normal(stream);
    let z2 = standard_normal(stream);
    Ok((
        mean.0 + tau * z1,
        mean.1 + zeta * (rho * z1 + (1.0 - rho * rho).sqrt() * z2),
    ))
}

/// Symmetric 2×2 matrix `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Sym2 {
    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn inverse(&self) -> Option<Sym2> {
        let d = self.det();
        (d > 0.0 && self.a > 0.0).then(|| Sym2 {
            a: self.c / d,
            b: -self.b / d,
            c: self.a / d,
        })
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2 {
            a: self.a + o.a,
            b: self.b + o.b,
            c: self.c + o.c,
        }
    }

    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2 {
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
        }
    }

    pub fn mul_vec(&self, v: (f64, f64)) -> (f64, f64) {
        (self.a * v.0 + self.b * v.1, self.b * v.0 + self.c * v.1)
    }

    /// Lower Cholesky factor `(l11, l21, l22)`.
    pub fn cholesky(&self) -> Option<(f64, f64, f64)> {
        if !(self.a > 0.0) {
            return None;
        }
        let l11 = self.a.sqrt();
        let l21 = self.b / l11;
        let rem = self.c - l21 * l21;
        (rem > 0.0).then(|| (l11, l21, rem.sqrt()))
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: (f64, f64)) -> f64 {
        self.a * v.0 * v.0 + 2.0 * self.b * v.0 * v.1 + self.c * v.1 * v.1
    }
}

/// Bivariate normal draw from a full covariance matrix.
pub fn sample_bivariate_normal_cov(stream: &mut RandomStream, mean: (f64, f64), cov: Sym2) -> Result<(f64, f64)> {
    let (l11, l21, l22) = cov
        .cholesky()
        .ok_or_else(|| Error::Domain(format!("covariance {cov:?} is not positive definite")))?;
    let z1 = standard_normal(stream);
    let z2 = standard_normal(stream);
    Ok((mean.0 + l11 * z1, mean.1 + l21 * z1 + l22 * z2))
}

/// Correlation of a 2×2 LKJ(η) matrix, via `ρ = 2·Beta(η, η) - 1`.
pub fn sample_lkj_corr_2x2(stream: &mut RandomStream, eta: f64) -> Result<Correlation2x2> {
    check_positive("LKJ eta", eta)?;
    let beta = Beta::new(eta, eta).map_err(|e| Error::Domain(e.to_string()))?;
    loop {
        let rho = 2.0 * beta.sample(stream) - 1.0;
        // Beta draws can round onto the boundary for tiny eta.
        if rho.abs() < 1.0 {
            return Ok(Correlation2x2(rho));
        }
    }
}

/// Distribution families with a log-density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Density {
    Normal { mean: f64, variance: f64 },
    ScaledInvChi2 { dof: f64, scale: f64 },
    Gamma { shape: f64, rate: f64 },
    Exponential { rate: f64 },
    Laplace { location: f64, scale: f64 },
    /// Log-density of the LKJ(η) correlation of a 2×2 matrix, normalized on (-1, 1).
    Lkj2 { eta: f64 },
}

impl Density {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Density::Normal { mean, variance } => {
                check_finite("normal mean", mean)?;
                check_positive("normal variance", variance)
            }
            Density::ScaledInvChi2 { dof, scale } => ScaledInvChi2Params::new(dof, scale).map(|_| ()),
            Density::Gamma { shape, rate } => {
                check_positive("gamma shape", shape)?;
                check_positive("gamma rate", rate)
            }
            Density::Exponential { rate } => check_positive("exponential rate", rate),
            Density::Laplace { location, scale } => {
                check_finite("laplace location", location)?;
                check_positive("laplace scale", scale)
            }
            Density::Lkj2 { eta } => check_positive("LKJ eta", eta),
        }
    }

    /// Natural-log density at `x`; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            Density::Normal { mean, variance } => normal_ln_pdf(x, mean, variance),
            Density::ScaledInvChi2 { dof, scale } => scaled_inv_chi2_ln_pdf(x, dof, scale),
            Density::Gamma { shape, rate } => gamma_ln_pdf(x, shape, rate),
            Density::Exponential { rate } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x
                }
            }
            Density::Laplace { location, scale } => laplace_ln_pdf(x, location, scale),
            Density::Lkj2 { eta } => lkj2_ln_pdf(x, eta),
        })
    }
}

pub fn log_density(density: &Density, x: f64) -> Result<f64> {
    density.ln_pdf(x)
}

#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln() + d * d / variance)
}

#[inline]
pub fn laplace_ln_pdf(x: f64, location: f64, scale: f64) -> f64 {
    -(2.0 * scale).ln() - (x - location).abs() / scale
}

/// Asymmetric Laplace log-density for quantile `q`:
/// `q(1-q)/σ · exp(-ρ_q((x-μ)/σ))` with the check loss `ρ_q`.
#[inline]
pub fn asymmetric_laplace_ln_pdf(x: f64, location: f64, scale: f64, q: f64) -> f64 {
    let u = (x - location) / scale;
    let check = if u < 0.0 { u * (q - 1.0) } else { u * q };
    (q * (1.0 - q) / scale).ln() - check
}

pub fn scaled_inv_chi2_ln_pdf(x: f64, dof: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let h = 0.5 * dof;
    h * (h * scale).ln() - ln_gamma(h) - (h + 1.0) * x.ln() - h * scale / x
}

pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    if x == 0.0 {
        return match shape.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Equal) => rate.ln(),
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// `ρ = 2B - 1` with `B ~ Beta(η, η)`, so the density on (-1, 1) is
/// `(1-ρ²)^(η-1) / (2^(2η-1) B(η, η))`.
pub fn lkj2_ln_pdf(rho: f64, eta: f64) -> f64 {
    if rho.abs() >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let ln_beta = 2.0 * ln_gamma(eta) - ln_gamma(2.0 * eta);
    (eta - 1.0) * (1.0 - rho * rho).ln() - (2.0 * eta - 1.0) * std::f64::consts::LN_2 - ln_beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn draws<F: FnMut(&mut RandomStream) -> f64>(n: usize, seed: u64, mut f: F) -> Vec<f64> {
        let mut s = RandomStream::new(seed, 0);
        (0..n).map(|_| f(&mut s)).collect()
    }

    #[test]
    fn standard_normal_mean_is_zero() {
        let x = draws(1_000_000, 11, |s| sample_normal(s, 0.0, 1.0).unwrap());
        assert!(hbm_testkit::mean(&x).abs() < 0.004);
    }

    #[test]
    fn normal_variance_matches() {
        let x = draws(1_000_000, 12, |s| sample_normal(s, 3.0, 4.0).unwrap());
        assert!((hbm_testkit::variance(&x) - 4.0).abs() < 0.03);
    }

    #[test]
    fn zero_variance_is_domain_error() {
        let mut s = RandomStream::new(1, 0);
        assert!(matches!(sample_normal(&mut s, 5.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(sample_normal(&mut s, 5.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn inv_chi2_mean() {
        let p = ScaledInvChi2Params::new(10.0, 2.0).unwrap();
        let x = draws(1_000_000, 13, |s| sample_scaled_inv_chi2(s, p).unwrap());
        assert_eq!(p.mean(), Some(2.5));
        assert!((hbm_testkit::mean(&x) - 2.5).abs() < 0.02);
    }

    #[test]
    fn inv_chi2_at_moment_boundary_still_samples() {
        let p = ScaledInvChi2Params::new(2.0, 1.0).unwrap();
        assert_eq!(p.mean(), None);
        let x = draws(1000, 14, |s| sample_scaled_inv_chi2(s, p).unwrap());
        assert!(x.iter().all(|v| *v > 0.0 && v.is_finite()));
    }

    #[test]
    fn degenerate_inv_chi2_scale_is_rejected() {
        assert!(ScaledInvChi2Params::new(3.0, 0.0).is_err());
        let mut s = RandomStream::new(1, 0);
        let p = ScaledInvChi2Params { dof: 3.0, scale: 0.0 };
        assert!(sample_scaled_inv_chi2(&mut s, p).is_err());
    }

    #[test]
    fn gamma_mean() {
        let x = draws(1_000_000, 15, |s| sample_gamma(s, 6.0, 3.0).unwrap());
        assert!((hbm_testkit::mean(&x) - 2.0).abs() < 0.01);
    }

    #[test]
    fn gamma_rejects_bad_params() {
        let mut s = RandomStream::new(1, 0);
        assert!(sample_gamma(&mut s, 0.0, 1.0).is_err());
        assert!(sample_gamma(&mut s, 1.0, -2.0).is_err());
    }

    #[test]
    fn rho2_conditional_mean_identity() {
        // shape Jν/2, rate Jν/(2ρ̂²) with J=6, ν=3, ρ̂²=4
        let (j, nu, rho2) = (6.0, 3.0, 4.0);
        let x = draws(1_000_000, 16, |s| sample_gamma(s, j * nu / 2.0, j * nu / (2.0 * rho2)).unwrap());
        assert!((hbm_testkit::mean(&x) - 4.0).abs() < 0.05);
    }

    #[test]
    fn bivariate_independent_components() {
        let mut s = RandomStream::new(17, 0);
        let c = Correlation2x2::new(0.0).unwrap();
        let (a, b): (Vec<f64>, Vec<f64>) = (0..1_000_000)
            .map(|_| sample_bivariate_normal(&mut s, (0.0, 0.0), 1.0, 1.0, c).unwrap())
            .unzip();
        assert!(hbm_testkit::correlation(&a, &b).abs() < 0.004);
    }

    #[test]
    fn bivariate_covariance() {
        let mut s = RandomStream::new(18, 0);
        let c = Correlation2x2::new(0.8).unwrap();
        let (a, b): (Vec<f64>, Vec<f64>) = (0..1_000_000)
            .map(|_| sample_bivariate_normal(&mut s, (2.0, 1.0), 2.0, 0.5, c).unwrap())
            .unzip();
        let (ma, mb) = (hbm_testkit::mean(&a), hbm_testkit::mean(&b));
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
        assert!((cov - 0.8).abs() < 0.01, "cov {cov}");
    }

    #[test]
    fn unit_correlation_is_rejected() {
        assert!(Correlation2x2::new(1.0).is_err());
        assert!(Correlation2x2::new(-1.0).is_err());
    }

    #[test]
    fn lkj_eta2_is_centered() {
        let x = draws(1_000_000, 19, |s| sample_lkj_corr_2x2(s, 2.0).unwrap().rho());
        assert!(hbm_testkit::mean(&x).abs() < 0.004);
    }

    #[test]
    fn lkj_rejects_nonpositive_eta() {
        let mut s = RandomStream::new(1, 0);
        assert!(sample_lkj_corr_2x2(&mut s, 0.0).is_err());
    }

    #[test]
    fn log_density_reference_values() {
        let lap = Density::Laplace { location: 0.0, scale: 1.0 };
        assert_abs_diff_eq!(lap.ln_pdf(0.0).unwrap(), 0.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(lap.ln_pdf(0.0).unwrap(), -0.693147, epsilon = 1e-6);
        let norm = Density::Normal { mean: 0.0, variance: 1.0 };
        assert_abs_diff_eq!(norm.ln_pdf(0.0).unwrap(), -0.918939, epsilon = 1e-6);
    }

    #[test]
    fn log_density_outside_support() {
        let d = Density::ScaledInvChi2 { dof: 4.0, scale: 1.0 };
        assert_eq!(d.ln_pdf(-1.0).unwrap(), f64::NEG_INFINITY);
        let g = Density::Gamma { shape: 2.0, rate: 1.0 };
        assert_eq!(g.ln_pdf(-0.5).unwrap(), f64::NEG_INFINITY);
        let l = Density::Lkj2 { eta: 2.0 };
        assert_eq!(l.ln_pdf(1.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn log_density_rejects_invalid_params() {
        assert!(Density::Normal { mean: 0.0, variance: 0.0 }.ln_pdf(0.0).is_err());
        assert!(Density::Exponential { rate: -1.0 }.ln_pdf(0.0).is_err());
    }

    #[test]
    fn asymmetric_laplace_median_case_is_a_laplace() {
        // q = 1/2 gives a Laplace with scale 2σ.
        let a = asymmetric_laplace_ln_pdf(1.3, 0.2, 1.5, 0.5);
        let b = laplace_ln_pdf(1.3, 0.2, 3.0);
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn sym2_cholesky_roundtrip() {
        let m = Sym2 { a: 4.0, b: 1.2, c: 0.9 };
        let (l11, l21, l22) = m.cholesky().unwrap();
        assert_abs_diff_eq!(l11 * l11, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l11 * l21, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(l21 * l21 + l22 * l22, 0.9, epsilon = 1e-12);
        let inv = m.inverse().unwrap();
        let v = m.mul_vec(inv.mul_vec((1.0, 2.0)));
        assert_abs_diff_eq!(v.0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.1, 2.0, epsilon = 1e-12);
    }
}
