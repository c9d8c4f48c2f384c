//! Closed-form constants, laws and density shapes.
//!
//! Products of Gamma values are accumulated in signed-log form by
//! [`SignedProduct`], which also names the offending factor when an argument
//! lands on a pole.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{s_cosine_factor, Cosmology, LcftParams};
use crate::specfn::{gamma_signed, ln_bessel_k, ln_gamma};

/// Distance from a non-positive integer at which a Gamma factor is declared a pole.
pub const CLOSED_POLE_TOLERANCE: f64 = 1e-8;

/// Running product `sign * exp(log_abs)`.
#[derive(Debug, Clone, Copy)]
struct SignedProduct {
    log_abs: f64,
    sign: f64,
}

impl SignedProduct {
    fn one() -> Self {
        SignedProduct { log_abs: 0.0, sign: 1.0 }
    }

    fn times(mut self, v: f64) -> Self {
        if v == 0.0 {
            self.sign = 0.0;
        } else {
            self.log_abs += v.abs().ln();
            self.sign *= v.signum();
        }
        self
    }

    /// Multiplies by `base^exponent` for a positive base.
    fn times_pow(mut self, base: f64, exponent: f64) -> Self {
        self.log_abs += exponent * base.ln();
        self
    }

    fn times_gamma(self, x: f64, factor: &str) -> Result<Self> {
        self.gamma_power(x, 1.0, factor)
    }

    fn over_gamma(self, x: f64, factor: &str) -> Result<Self> {
        self.gamma_power(x, -1.0, factor)
    }

    fn gamma_power(mut self, x: f64, power: f64, factor: &str) -> Result<Self> {
        if x <= 0.0 {
            let nearest = x.round();
            if (x - nearest).abs() < CLOSED_POLE_TOLERANCE {
                return Err(Error::Pole {
                    factor: factor.to_string(),
                    argument: x,
                    nearest: nearest as i64,
                });
            }
        }
        let g = gamma_signed(x)?;
        self.log_abs += power * g.log_abs;
        if power.fract() == 0.0 && (power as i64) % 2 != 0 {
            self.sign *= g.sign;
        } else if g.sign < 0.0 {
            return Err(Error::domain(format!(
                "non-integer power of the negative factor {factor}"
            )));
        }
        Ok(self)
    }

    fn value(&self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.log_abs.exp()
        }
    }
}

/// Where an inverse-gamma area law comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AreaLawSource {
    /// Unit-boundary-length disk with an `alpha` bulk insertion.
    AlphaInsertion,
    /// Unit-boundary-length quantum disk.
    QuantumDisk,
}

/// Inverse gamma law of the area at unit boundary length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreaLaw {
    pub shape: f64,
    pub scale: f64,
    pub provenance: AreaLawSource,
}

impl AreaLaw {
    pub fn to_inverse_gamma(&self) -> crate::dist::InverseGammaParams {
        crate::dist::InverseGammaParams::new(self.shape, self.scale)
            .expect("area law parameters are positive by construction")
    }

    /// Law at boundary length `ell`; the scale grows like `ell^2`.
    pub fn at_length(&self, ell: f64) -> AreaLaw {
        AreaLaw {
            scale: self.scale * ell * ell,
            ..*self
        }
    }
}

/// Whether a density value is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Normalization {
    ExactPdf,
    /// Only ratios of values are meaningful.
    UpToConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityShape {
    pub value: f64,
    pub normalization: Normalization,
}

fn check_extended(p: &LcftParams, alpha: f64) -> Result<()> {
    let (lo, hi) = (p.gamma() / 2.0, p.q());
    if !(alpha > lo && alpha < hi) {
        return Err(Error::domain(format!(
            "alpha = {alpha} must lie in (gamma/2, Q) = ({lo}, {hi})"
        )));
    }
    Ok(())
}

/// Bulk one-point constant with both cosmological constants positive.
pub fn u_fzz(p: &LcftParams, alpha: f64, cosmo: &Cosmology) -> Result<f64> {
    check_extended(p, alpha)?;
    if !(cosmo.mu() > 0.0) {
        return Err(Error::domain("u_fzz needs mu > 0; use u_mu_zero for mu = 0"));
    }
    let g = p.gamma();
    let q = p.q();
    let k4 = g * g / 4.0;
    // pi mu 2^{-gamma alpha} Gamma(gamma^2/4) / Gamma(1 - gamma^2/4), raised to (Q - alpha)/gamma
    let inner = SignedProduct::one()
        .times(PI * cosmo.mu())
        .times_pow(2.0, -g * alpha)
        .times_gamma(k4, "Gamma(gamma^2/4)")?
        .over_gamma(1.0 - k4, "Gamma(1 - gamma^2/4)")?;
    let prod = SignedProduct {
        log_abs: inner.log_abs * (q - alpha) / g,
        sign: 1.0,
    }
    .times(4.0 / g)
    .times_pow(2.0, -alpha * alpha / 2.0)
    .times_gamma(g * alpha / 2.0 - k4, "Gamma(gamma alpha/2 - gamma^2/4)")?
    .times_gamma(2.0 * alpha / g - 4.0 / (g * g) - 1.0, "Gamma(2 alpha/gamma - 4/gamma^2 - 1)")?
    .times(s_cosine_factor(p, alpha, cosmo)?);
    Ok(prod.value())
}

/// Moment `E[nu(R)^{(2/gamma)(Q - alpha)}]` of the boundary length.
///
/// Returns `+inf` when `alpha` is within pole tolerance above `gamma/2`.
pub fn u0_bar(p: &LcftParams, alpha: f64) -> Result<f64> {
    let g = p.gamma();
    if !(alpha > g / 2.0) {
        return Err(Error::domain(format!(
            "u0_bar needs alpha > gamma/2 = {}, got {alpha}",
            g / 2.0
        )));
    }
    if g * alpha / 2.0 - g * g / 4.0 < CLOSED_POLE_TOLERANCE {
        return Ok(f64::INFINITY);
    }
    Ok(u0_bar_product(p, alpha)?.value())
}

fn u0_bar_product(p: &LcftParams, alpha: f64) -> Result<SignedProduct> {
    let g = p.gamma();
    let arg = g * alpha / 2.0 - g * g / 4.0;
    let base = SignedProduct::one()
        .times_pow(2.0, -g * alpha / 2.0)
        .times(2.0 * PI)
        .over_gamma(1.0 - g * g / 4.0, "Gamma(1 - gamma^2/4)")?;
    SignedProduct {
        log_abs: base.log_abs * p.length_exponent(alpha),
        sign: 1.0,
    }
    .times_gamma(arg, "Gamma(gamma alpha/2 - gamma^2/4)")
}

/// One-point constant at `mu = 0`.
pub fn u_mu_zero(p: &LcftParams, alpha: f64, mu_b: f64) -> Result<f64> {
    check_extended(p, alpha)?;
    if !(mu_b > 0.0) {
        return Err(Error::domain(format!("mu_B must be positive, got {mu_b}")));
    }
    let g = p.gamma();
    let prod = SignedProduct::one()
        .times(2.0 / g)
        .times_pow(2.0, -alpha * alpha / 2.0)
        .times_pow(mu_b, p.length_exponent(alpha))
        .times_gamma(-p.length_exponent(alpha), "Gamma((2/gamma)(alpha - Q))")?
        .times(u0_bar(p, alpha)?);
    Ok(prod.value())
}

/// Mass `(2/gamma) 2^{-alpha^2/2} u0_bar(alpha) ell^{(2/gamma)(alpha-Q) - 1}` of
/// the disks with boundary length `ell`.
pub fn length_density(p: &LcftParams, alpha: f64, ell: f64) -> Result<f64> {
    let c = -p.length_exponent(alpha);
    Ok(2.0 / p.gamma() * 2f64.powf(-alpha * alpha / 2.0) * u0_bar(p, alpha)? * ell.powf(c - 1.0))
}

/// Boundary reflection coefficient `R(gamma; 1, 1)`.
pub fn r_bar(p: &LcftParams) -> Result<f64> {
    Ok(r_bar_product(p)?.value())
}

fn r_bar_product(p: &LcftParams) -> Result<SignedProduct> {
    let k4 = p.kappa() / 4.0;
    let e = 4.0 / p.kappa();
    let prod = SignedProduct::one()
        .times_pow(2.0 * PI, e - 1.0)
        .times(1.0 / (1.0 - k4));
    let g = gamma_signed(1.0 - k4)?;
    Ok(SignedProduct {
        log_abs: prod.log_abs - e * g.log_abs,
        sign: 1.0,
    })
}

/// `2 / sin(pi gamma^2 / 4)`.
pub fn mot_variance(p: &LcftParams) -> f64 {
    2.0 / p.sin_theta()
}

/// The same variance assembled from `r_bar` and `u0_bar(gamma)`.
pub fn mot_variance_from_ratio(p: &LcftParams) -> Result<f64> {
    let g = p.gamma();
    let s = p.sin_theta();
    let factor = 2f64.powf(g * g / 2.0 - 1.0) * PI * (p.q() - g).powi(2)
        / ((4.0 / (g * g) - 1.0) * s * s);
    // both factors overflow for small gamma; only their ratio is moderate
    let ratio = r_bar_product(p)?.log_abs - u0_bar_product(p, g)?.log_abs;
    Ok(ratio.exp() * factor)
}

/// Area law of the unit-boundary-length disk with an `alpha` insertion.
pub fn area_law_alpha(p: &LcftParams, alpha: f64) -> Result<AreaLaw> {
    check_extended(p, alpha)?;
    Ok(AreaLaw {
        shape: p.length_exponent(alpha),
        scale: 1.0 / (4.0 * p.sin_theta()),
        provenance: AreaLawSource::AlphaInsertion,
    })
}

/// Area law of the unit-boundary-length quantum disk.
pub fn area_law_qd(p: &LcftParams) -> AreaLaw {
    let s = p.sin_theta();
    AreaLaw {
        shape: 4.0 / p.kappa(),
        scale: 1.0 / (2.0 * mot_variance(p) * s * s),
        provenance: AreaLawSource::QuantumDisk,
    }
}

/// Disk weight whose two boundary arcs are described by [`disk_length_shape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiskWeight {
    /// Weight `gamma^2 / 2`.
    HalfGammaSq,
    /// Weight 2.
    Two,
}

/// Joint density shape of the two boundary arc lengths of a two-pointed disk.
pub fn disk_length_shape(p: &LcftParams, weight: DiskWeight, ell: f64, r: f64) -> Result<DensityShape> {
    if !(ell > 0.0 && r > 0.0) {
        return Err(Error::domain(format!("arc lengths must be positive, got {ell}, {r}")));
    }
    let e = 4.0 / p.kappa();
    let value = match weight {
        DiskWeight::HalfGammaSq => (ell * r).powf(e - 1.0) / (ell.powf(e) + r.powf(e)).powi(2),
        DiskWeight::Two => (ell + r).powf(-e - 1.0),
    };
    Ok(DensityShape {
        value,
        normalization: Normalization::UpToConstant,
    })
}

/// Moment of the bulk measure on the half-plane with an `alpha` insertion at `i`.
pub fn gmc_moment_h(p: &LcftParams, alpha: f64) -> Result<f64> {
    check_extended(p, alpha)?;
    let g = p.gamma();
    let q = p.q();
    let k4 = g * g / 4.0;
    let inner = SignedProduct::one()
        .times(PI)
        .times_pow(2.0, -g * alpha - 2.0)
        .times_gamma(k4, "Gamma(gamma^2/4)")?
        .over_gamma(1.0 - k4, "Gamma(1 - gamma^2/4)")?;
    let prod = SignedProduct {
        log_abs: inner.log_abs * (q - alpha) / g,
        sign: 1.0,
    }
    .times(2.0 / PI.sqrt())
    .times_gamma(g * alpha / 2.0 - k4, "Gamma(gamma alpha/2 - gamma^2/4)")?
    .times_gamma(alpha / g - 2.0 / (g * g), "Gamma(alpha/gamma - 2/gamma^2)")?
    .times(crate::specfn::cospi((alpha - q) / g));
    Ok(prod.value())
}

/// Closed form of the `n`-fold half-plane integral of the bulk moment.
pub fn selberg_rhs(p: &LcftParams, n: u32) -> Result<f64> {
    let g2 = p.kappa();
    let nf = n as f64;
    if n == 0 || !(nf < 2.0 / g2) {
        return Err(Error::domain(format!(
            "n = {n} invalid: need 0 < n < 2/gamma^2 = {}",
            2.0 / g2
        )));
    }
    let k4 = g2 / 4.0;
    let base = SignedProduct::one()
        .times(-PI)
        .times_pow(2.0, -(4.0 + g2 * (1.0 - 2.0 * nf) / 2.0))
        .times_gamma(k4, "Gamma(gamma^2/4)")?
        .over_gamma(1.0 - k4, "Gamma(1 - gamma^2/4)")?;
    let prod = SignedProduct {
        log_abs: base.log_abs * nf,
        sign: if n.is_multiple_of(2) { 1.0 } else { base.sign },
    }
    .times(2.0 / PI.sqrt())
    .times_gamma(1.0 - g2 * nf / 2.0, "Gamma(1 - gamma^2 n/2)")?
    .times_gamma(0.5 - nf, "Gamma(1/2 - n)")?;
    let v = prod.value();
    debug_assert!(v > 0.0);
    Ok(v)
}

/// `E[exp(-mu X)]` for `X` inverse gamma with the given shape and scale.
pub fn inverse_gamma_laplace(shape: f64, scale: f64, mu: f64) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(Error::domain(format!(
            "inverse gamma needs positive shape and scale, got {shape}, {scale}"
        )));
    }
    if !(mu >= 0.0) {
        return Err(Error::domain(format!("Laplace variable must be >= 0, got {mu}")));
    }
    if mu == 0.0 {
        return Ok(1.0);
    }
    let z = 2.0 * (mu * scale).sqrt();
    let ln = 2f64.ln() - ln_gamma(shape)? + shape * (0.5 * z).ln() + ln_bessel_k(shape, z)?;
    Ok(ln.exp())
}

/// `1 - E[exp(-mu X)]`, accurate when the transform is close to 1.
///
/// For small `z = 2 sqrt(mu b)` it uses the ascending series
/// `E[e^{-mu X}] = Gamma(1-a) [S(-a) - (z/2)^{2a} S(a)]`, where
/// `S(c) = sum_k (z/2)^{2k} / (k! Gamma(k+1+c))`,
/// with the unit leading term removed analytically.
pub fn inverse_gamma_laplace_deficit(shape: f64, scale: f64, mu: f64) -> Result<f64> {
    let l = inverse_gamma_laplace(shape, scale, mu)?;
    if mu == 0.0 {
        return Ok(0.0);
    }
    let z = 2.0 * (mu * scale).sqrt();
    let near_integer = (shape - shape.round()).abs() < 1e-3;
    if z > 1.0 || near_integer {
        return Ok(1.0 - l);
    }
    let h = 0.25 * z * z; // (z/2)^2
    let g1a = gamma_signed(1.0 - shape)?.value();
    let mut first = 0.0;
    let mut term = 1.0 / gamma_signed(1.0 - shape)?.value(); // k = 0
    for k in 1..200 {
        let kf = k as f64;
        term *= h / (kf * (kf - shape));
        first += term;
        if term.abs() < 1e-17 * first.abs() {
            break;
        }
    }
    let mut second = 0.0;
    let mut term = (-ln_gamma(1.0 + shape)?).exp();
    second += term;
    for k in 1..200 {
        let kf = k as f64;
        term *= h / (kf * (kf + shape));
        second += term;
        if term.abs() < 1e-17 * second.abs() {
            break;
        }
    }
    let zpow = h.powf(shape);
    Ok(-g1a * (first - zpow * second))
}

/// Laplace transform of the area at boundary length `ell`.
///
/// With `normalized` this is the probability transform of the inverse gamma
/// area law; otherwise it is multiplied by the mass [`length_density`].
pub fn laplace_area(p: &LcftParams, alpha: f64, ell: f64, mu: f64, normalized: bool) -> Result<f64> {
    let law = area_law_alpha(p, alpha)?;
    if !(ell > 0.0) {
        return Err(Error::domain(format!("boundary length must be positive, got {ell}")));
    }
    let norm = inverse_gamma_laplace(law.shape, law.scale * ell * ell, mu)?;
    if normalized {
        Ok(norm)
    } else {
        Ok(norm * length_density(p, alpha, ell)?)
    }
}

/// Coefficients of `exp(-mu ell^2 A - mu_B ell)` in powers of `ell`, up to order `k`.
pub fn truncation_coefficients(_mu: f64, mu_b: f64, k: usize) -> Result<Vec<f64>> {
    match k {
        0 => Ok(vec![1.0]),
        1 => Ok(vec![1.0, -mu_b]),
        _ => Err(Error::Unsupported(format!(
            "truncation order {k}: coefficients beyond first order depend on the area"
        ))),
    }
}
