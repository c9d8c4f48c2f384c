//! Inverse gamma laws and the closed-form cone exit and duration laws.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::closed::{DensityShape, Normalization};
use crate::error::{Error, Result};
use crate::specfn::{ln_gamma, x_over_sin_unchecked};

/// Inverse gamma law with density `b^a / Gamma(a) x^{-a-1} e^{-b/x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseGammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl InverseGammaParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!(
                "inverse gamma needs finite positive shape and scale, got ({shape}, {scale})"
            )));
        }
        Ok(InverseGammaParams { shape, scale })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let (a, b) = (self.shape, self.scale);
        a * b.ln() - ln_gamma(a).expect("shape is positive") - (a + 1.0) * x.ln() - b / x
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.ln_pdf(x).exp()
        }
    }

    /// `P(X <= x) = Q(a, b/x)` with `Q` the regularized upper incomplete gamma.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x.is_infinite() {
            return 1.0;
        }
        statrs::function::gamma::gamma_ur(self.shape, self.scale / x)
    }

    /// `b / (a - 1)`, or `None` when the mean is infinite.
    pub fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.scale / (self.shape - 1.0))
    }

    pub fn mode(&self) -> f64 {
        self.scale / (self.shape + 1.0)
    }

    /// `E[1/X] = a / b`, finite for every valid law.
    pub fn reciprocal_mean(&self) -> f64 {
        self.shape / self.scale
    }

    /// `Var(1/X) = a / b^2`.
    pub fn reciprocal_variance(&self) -> f64 {
        self.shape / (self.scale * self.scale)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(self.shape, 1.0).expect("shape is positive");
        self.scale / g.sample(rng)
    }
}

pub fn inv_gamma_pdf(p: &InverseGammaParams, x: f64) -> f64 {
    p.pdf(x)
}

pub fn inv_gamma_cdf(p: &InverseGammaParams, x: f64) -> f64 {
    p.cdf(x)
}

pub fn inv_gamma_sample<R: Rng + ?Sized>(p: &InverseGammaParams, rng: &mut R) -> f64 {
    p.sample(rng)
}

/// Exit-radius law on the side ray of the cone `{0 < arg z < theta}` for
/// Brownian motion started next to `u` on the real side, optionally tilted by
/// `(r/u)^{-weight_exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeExitKernel {
    pub theta: f64,
    pub u: f64,
    pub weight_exponent: f64,
}

impl ConeExitKernel {
    pub fn new(theta: f64, u: f64, weight_exponent: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 2.0 * PI) {
            return Err(Error::domain(format!("cone angle must lie in (0, 2 pi), got {theta}")));
        }
        if !(u > 0.0) {
            return Err(Error::domain(format!("start abscissa must be positive, got {u}")));
        }
        if !(weight_exponent >= 0.0 && weight_exponent < PI / theta) {
            return Err(Error::domain(format!(
                "weight exponent must lie in [0, pi/theta) = [0, {}), got {weight_exponent}",
                PI / theta
            )));
        }
        Ok(ConeExitKernel {
            theta,
            u,
            weight_exponent,
        })
    }

    pub fn plain(theta: f64, u: f64) -> Result<Self> {
        Self::new(theta, u, 0.0)
    }

    fn beta(&self) -> f64 {
        PI / self.theta
    }

    /// Normalized density in `r`.
    pub fn pdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let b = self.beta();
        let x = r / self.u;
        let xb = x.powf(b);
        let shape = x.powf(b - 1.0 - self.weight_exponent) / ((1.0 + xb) * (1.0 + xb));
        let norm = cone_power_integral_unchecked(self.theta, b - 1.0 - self.weight_exponent);
        shape / (norm * self.u)
    }

    /// `y / (1 + y)` with `y = (r/u)^{pi/theta}`; only for the untilted kernel.
    pub fn cdf(&self, r: f64) -> Result<f64> {
        if self.weight_exponent != 0.0 {
            return Err(Error::Unsupported(
                "the tilted exit law has no closed-form distribution function".into(),
            ));
        }
        if r <= 0.0 {
            return Ok(0.0);
        }
        let y = (r / self.u).powf(self.beta());
        Ok(if y.is_infinite() { 1.0 } else { y / (1.0 + y) })
    }

    /// Inverse of [`Self::cdf`]: `u (V/(1-V))^{theta/pi}`.
    pub fn quantile(&self, v: f64) -> f64 {
        self.u * (v / (1.0 - v)).powf(self.theta / PI)
    }

    /// `E[(L/u)^eps]` under this kernel, for `eps` in the admissible range.
    pub fn moment(&self, eps: f64) -> Result<f64> {
        let b = self.beta();
        let p0 = b - 1.0 - self.weight_exponent;
        let p = p0 + eps;
        if !(p > -1.0 && p < 2.0 * b - 1.0) {
            return Err(Error::domain(format!("moment order {eps} outside the admissible range")));
        }
        Ok(cone_power_integral_unchecked(self.theta, p) / cone_power_integral_unchecked(self.theta, p0))
    }
}

/// Normalized untilted exit density on the side ray.
pub fn cone_exit_pdf(theta: f64, u: f64, r: f64) -> Result<f64> {
    Ok(ConeExitKernel::plain(theta, u)?.pdf(r))
}

pub fn cone_exit_cdf(theta: f64, u: f64, r: f64) -> Result<f64> {
    ConeExitKernel::plain(theta, u)?.cdf(r)
}

/// Exact draw from the untilted exit law.
pub fn cone_exit_sample<R: Rng + ?Sized>(theta: f64, u: f64, rng: &mut R) -> Result<f64> {
    let k = ConeExitKernel::plain(theta, u)?;
    let v: f64 = rng.random();
    Ok(k.quantile(v))
}

/// `\int_0^inf x^p (1 + x^{pi/theta})^{-2} dx = (theta/pi) f(pi - theta(p+1))`
/// with `f(x) = x / sin x`, for `p in (-1, 2 pi/theta - 1)`.
pub fn cone_power_integral(theta: f64, p: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 2.0 * PI) {
        return Err(Error::domain(format!("cone angle must lie in (0, 2 pi), got {theta}")));
    }
    if !(p > -1.0 && p < 2.0 * PI / theta - 1.0) {
        return Err(Error::domain(format!(
            "power {p} outside (-1, 2 pi/theta - 1) = (-1, {})",
            2.0 * PI / theta - 1.0
        )));
    }
    Ok(cone_power_integral_unchecked(theta, p))
}

fn cone_power_integral_unchecked(theta: f64, p: f64) -> f64 {
    // f is even, so the sign of the argument does not matter
    theta / PI * x_over_sin_unchecked((PI - theta * (p + 1.0)).abs())
}

/// Duration law of a path in the cone of angle `phi` started at radius `r`,
/// conditioned to end at the vertex.
pub fn cone_duration_invgamma(phi: f64, r: f64) -> Result<InverseGammaParams> {
    if !(phi > 0.0 && phi < 2.0 * PI) {
        return Err(Error::domain(format!("cone angle must lie in (0, 2 pi), got {phi}")));
    }
    if !(r > 0.0) {
        return Err(Error::domain(format!("start radius must be positive, got {r}")));
    }
    InverseGammaParams::new(PI / phi, 0.5 * r * r)
}

/// Duration density at time `t` for a path started at `w = (x, y)` inside the
/// cone of angle `phi`, up to a constant.
pub fn cone_duration_density_shape(phi: f64, w: (f64, f64), t: f64) -> Result<DensityShape> {
    let arg = w.1.atan2(w.0);
    let arg = if arg < 0.0 { arg + 2.0 * PI } else { arg };
    if !(arg > 0.0 && arg < phi) {
        return Err(Error::domain(format!(
            "start point argument {arg} is not inside (0, {phi})"
        )));
    }
    if !(t > 0.0) {
        return Err(Error::domain(format!("time must be positive, got {t}")));
    }
    let k = PI / phi;
    let r2 = w.0 * w.0 + w.1 * w.1;
    let value = (-(1.0 + k) * t.ln() + 0.5 * k * r2.ln() - r2 / (2.0 * t)).exp() * (k * arg).sin();
    Ok(DensityShape {
        value,
        normalization: Normalization::UpToConstant,
    })
}

/// `E[(L/u)^eps]` under the `(L/u)^{-pi/phi}`-tilted exit law:
/// `f(pi theta/phi - theta eps) / f(pi theta/phi)`.
pub fn moment_ratio(theta: f64, phi: f64, eps: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < phi && phi < 2.0 * PI) {
        return Err(Error::domain(format!(
            "need 0 < theta < phi < 2 pi, got theta={theta}, phi={phi}"
        )));
    }
    if !(eps > 0.0 && eps < PI / phi) {
        return Err(Error::domain(format!(
            "eps = {eps} outside (0, pi/phi) = (0, {})",
            PI / phi
        )));
    }
    let a = PI * theta / phi;
    let v = x_over_sin_unchecked(a - theta * eps) / x_over_sin_unchecked(a);
    debug_assert!(v < 1.0);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{quad_semiinfinite, quad_semiinfinite_tol};
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn inverse_gamma_moments() {
        let p = InverseGammaParams::new(2.0, 3.0).unwrap();
        assert_eq!(p.mean(), Some(3.0));
        assert_eq!(p.mode(), 1.0);
        assert_eq!(p.reciprocal_mean(), 2.0 / 3.0);
        assert!((p.cdf(f64::INFINITY) - 1.0).abs() < 1e-10);
        assert!((p.cdf(1e12) - 1.0).abs() < 1e-10);
        assert_eq!(InverseGammaParams::new(0.5, 1.0).unwrap().mean(), None);
        assert!(InverseGammaParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn inverse_gamma_pdf_normalized() {
        for (a, b) in [(0.6, 0.35), (2.0, 3.0), (4.0, 0.1)] {
            let p = InverseGammaParams::new(a, b).unwrap();
            let r = quad_semiinfinite(|x| p.pdf(x), 0.0).unwrap();
            assert!((r.value - 1.0).abs() < 1e-8, "{a} {b} {r:?}");
            // cdf is the integral of the pdf
            let x = 0.7;
            let part = crate::quad::tanh_sinh(|t| p.pdf(t), 0.0, x, 1e-13).unwrap();
            assert!((part.value - p.cdf(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn reciprocal_mean_of_samples() {
        for (a, b) in [(2.0, 3.0), (0.6, 0.4)] {
            let p = InverseGammaParams::new(a, b).unwrap();
            let mut rng = stream(11, 0);
            let n = 1_000_000;
            let mut s = 0.0;
            for _ in 0..n {
                s += 1.0 / p.sample(&mut rng);
            }
            let m = s / n as f64;
            let se = (p.reciprocal_variance() / n as f64).sqrt();
            assert!((m - p.reciprocal_mean()).abs() < 3.0 * se, "a={a}: {m} vs {}", p.reciprocal_mean());
        }
    }

    #[test]
    fn exit_median_and_symmetry() {
        let k = ConeExitKernel::plain(PI / 4.0, 0.8).unwrap();
        assert!((k.quantile(0.5) - 0.8).abs() < 1e-15);
        assert!((k.cdf(0.8).unwrap() - 0.5).abs() < 1e-15);
        for t in [0.3, 1.7, 4.0] {
            let a = k.pdf(0.8 * t) * 0.8 * t;
            let b = k.pdf(0.8 / t) * 0.8 / t;
            assert!(((a - b) / a).abs() < 1e-12);
        }
    }

    #[test]
    fn exit_pdf_normalized() {
        for (theta, w) in [(PI / 4.0, 0.0), (PI / 4.0, 1.0), (1.2, 0.5), (4.0, 0.2)] {
            let k = ConeExitKernel::new(theta, 1.3, w).unwrap();
            let r = quad_semiinfinite_tol(|x| k.pdf(x), PI / theta - 1.0 - w, 1e-11).unwrap();
            assert!((r.value - 1.0).abs() < 1e-8, "{theta} {w}: {r:?}");
        }
    }

    #[test]
    fn exit_sampler_ks() {
        let k = ConeExitKernel::plain(PI / 4.0, 0.84).unwrap();
        let mut rng = stream(5, 1);
        let n = 1_000_000;
        let mut xs: Vec<f64> = (0..n).map(|_| cone_exit_sample(PI / 4.0, 0.84, &mut rng).unwrap()).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let c = k.cdf(x).unwrap();
            d = d.max((c - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - c).abs());
        }
        assert!(d < 1.95 / (n as f64).sqrt(), "{d}");
    }

    #[test]
    fn duration_law_examples() {
        let p = cone_duration_invgamma(PI, 1.0).unwrap();
        assert_eq!((p.shape, p.scale), (1.0, 0.5));
        assert_eq!(cone_duration_invgamma(PI / 2.0, 1.0).unwrap().shape, 2.0);
        assert_eq!(cone_duration_invgamma(PI, 3.0).unwrap().scale, 4.5);
    }

    #[test]
    fn duration_shape_normalizes_to_inverse_gamma() {
        let phi = 2.5;
        let w = (0.4, 0.9);
        let r2 = 0.4 * 0.4 + 0.9 * 0.9;
        let z = quad_semiinfinite(|t| cone_duration_density_shape(phi, w, t).unwrap().value, 0.0)
            .unwrap()
            .value;
        let law = InverseGammaParams::new(PI / phi, r2 / 2.0).unwrap();
        for t in [0.05, 0.3, 1.0, 7.0] {
            let v = cone_duration_density_shape(phi, w, t).unwrap().value / z;
            assert!(((v - law.pdf(t)) / law.pdf(t)).abs() < 1e-10);
        }
        assert!(cone_duration_density_shape(phi, (1.0, -0.1), 1.0).is_err());
        let mid = cone_duration_density_shape(phi, ((phi / 2.0).cos(), (phi / 2.0).sin()), 1.0).unwrap();
        let off = cone_duration_density_shape(phi, ((phi / 3.0).cos(), (phi / 3.0).sin()), 1.0).unwrap();
        assert!(mid.value > off.value);
    }

    #[test]
    fn moment_ratio_examples() {
        assert!((moment_ratio(PI / 2.0, PI, 1e-12).unwrap() - 1.0).abs() < 1e-10);
        let v = moment_ratio(PI / 2.0, PI, 1.0 - 1e-9).unwrap();
        assert!((v - 2.0 / PI).abs() < 1e-8);
        assert!(moment_ratio(PI / 2.0, PI, 1.0).is_err());
        assert!(moment_ratio(PI / 4.0, PI, 0.3).unwrap() > moment_ratio(PI / 4.0, PI, 0.6).unwrap());
        // agrees with the tilted kernel's own moment
        let k = ConeExitKernel::new(PI / 4.0, 1.0, 1.0).unwrap();
        assert!((k.moment(0.4).unwrap() - moment_ratio(PI / 4.0, PI, 0.4).unwrap()).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn power_integral_matches_quadrature(theta in 0.3f64..5.5, t in 0.02f64..0.98) {
            let hi = 2.0 * PI / theta - 1.0;
            let p = -1.0 + t * (hi + 1.0);
            let b = PI / theta;
            let f = |x: f64| {
                let lx = x.ln();
                let bl = b * lx;
                let softplus = if bl > 30.0 { bl + (-bl).exp() } else { bl.exp().ln_1p() };
                (p * lx - 2.0 * softplus).exp()
            };
            let q = quad_semiinfinite_tol(f, p, 1e-11).unwrap();
            let c = cone_power_integral(theta, p).unwrap();
            prop_assert!(((q.value - c) / c).abs() < 1e-8, "{} vs {}", q.value, c);
        }

        #[test]
        fn moment_ratio_decreasing(theta in 0.2f64..3.0, extra in 0.1f64..3.0, s in 0.05f64..0.9) {
            let phi = (theta + extra).min(2.0 * PI - 1e-3);
            let eps = s * PI / phi;
            let a = moment_ratio(theta, phi, eps).unwrap();
            let b = moment_ratio(theta, phi, eps * 1.05).unwrap_or(0.0);
            prop_assert!(a < 1.0 && b < a);
        }
    }
}
