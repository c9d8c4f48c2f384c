//! Double-exponential quadrature and Gauss-Legendre rules.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::error::{Error, QuadDiagnostics, Result};

/// Outcome of a converged quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    /// Difference between the last two refinement levels.
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Relative tolerance used when callers do not pass one.
pub const DEFAULT_TOL: f64 = 1e-12;

const MAX_LEVELS: usize = 12;
const H0: f64 = 0.5;

/// Sums `weight(t) f(x(t))` over nodes `t = k h` (for odd `k` only when
/// `odd_only`), walking outward from 0 until terms become negligible.
fn trapezoid_level(
    node: &dyn Fn(f64) -> Option<f64>,
    h: f64,
    t_max: f64,
    odd_only: bool,
    evals: &mut usize,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut peak = 0.0f64;
    if !odd_only {
        let v = node(0.0).unwrap_or(0.0);
        *evals += 1;
        if !v.is_finite() {
            return Err(non_finite(0.0));
        }
        sum += v;
        peak = v.abs();
    }
    for dir in [1.0, -1.0] {
        let mut k: usize = 1;
        let mut quiet = 0;
        loop {
            let t = dir * k as f64 * h;
            if t.abs() > t_max {
                break;
            }
            let Some(v) = node(t) else { break };
            *evals += 1;
            if !v.is_finite() {
                return Err(non_finite(t));
            }
            sum += v;
            peak = peak.max(v.abs());
            if v.abs() <= 1e-18 * peak && t.abs() > 1.0 {
                quiet += 1;
                if quiet >= 3 {
                    break;
                }
            } else {
                quiet = 0;
            }
            k += if odd_only { 2 } else { 1 };
        }
    }
    Ok(sum)
}

fn non_finite(t: f64) -> Error {
    Error::domain(format!("integrand is not finite at transformed node t = {t}"))
}

fn refine(
    node: &dyn Fn(f64) -> Option<f64>,
    t_max: f64,
    tol: f64,
    abs_floor: f64,
) -> Result<QuadratureResult> {
    let mut evals = 0;
    let mut h = H0;
    let mut raw = trapezoid_level(node, h, t_max, false, &mut evals)?;
    let mut estimate = h * raw;
    let mut last_diff = f64::INFINITY;
    for _ in 0..MAX_LEVELS {
        raw += trapezoid_level(node, h / 2.0, t_max, true, &mut evals)?;
        h /= 2.0;
        let next = h * raw;
        let diff = (next - estimate).abs();
        estimate = next;
        if diff <= tol * next.abs() || diff <= abs_floor {
            // The error of the finer level is far below the observed difference
            // (the rule converges quadratically in the number of levels).
            return Ok(QuadratureResult {
                value: next,
                error_estimate: diff,
                evaluations: evals,
            });
        }
        last_diff = diff;
    }
    Err(Error::Quadrature(QuadDiagnostics {
        value: estimate,
        error_estimate: last_diff,
        evaluations: evals,
        levels: MAX_LEVELS,
    }))
}

/// `\int_0^inf f(x) dx` where `f(x) ~ x^p` near zero.
///
/// The substitution `x = y^{1/(1+p)}` removes the declared endpoint behavior
/// before the exp-sinh rule `y = exp(pi/2 sinh t)` is applied.
pub fn quad_semiinfinite(f: impl Fn(f64) -> f64, singular_exponent_at_zero: f64) -> Result<QuadratureResult> {
    quad_semiinfinite_tol(f, singular_exponent_at_zero, DEFAULT_TOL)
}

pub fn quad_semiinfinite_tol(
    f: impl Fn(f64) -> f64,
    singular_exponent_at_zero: f64,
    tol: f64,
) -> Result<QuadratureResult> {
    let p = singular_exponent_at_zero;
    if !(p > -1.0) {
        return Err(Error::domain(format!(
            "endpoint exponent {p} is not integrable at zero (needs p > -1)"
        )));
    }
    let power = 1.0 / (1.0 + p);
    let node = |t: f64| -> Option<f64> {
        let s = FRAC_PI_2 * t.sinh();
        let ln_y = s;
        let ln_x = power * ln_y;
        if !(-700.0..=700.0).contains(&ln_x) {
            return None;
        }
        let x = ln_x.exp();
        // dx/dt = power * x * (pi/2) cosh t
        let w = power * x * FRAC_PI_2 * t.cosh();
        let v = f(x);
        Some(if w == 0.0 { 0.0 } else { v * w })
    };
    refine(&node, 7.0, tol, 0.0)
}

/// `\int_a^b f(x) dx` by the tanh-sinh rule.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<QuadratureResult> {
    tanh_sinh_dist(|x, _, _| f(x), a, b, tol)
}

/// Tanh-sinh rule whose integrand also receives the exact distances to both
/// endpoints, so singular endpoint behavior can be evaluated without
/// cancellation.
pub fn tanh_sinh_dist(
    f: impl Fn(f64, f64, f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<QuadratureResult> {
    if !(b > a) {
        return Err(Error::domain(format!("tanh_sinh needs a < b, got [{a}, {b}]")));
    }
    let half = 0.5 * (b - a);
    let node = |t: f64| -> Option<f64> {
        let s = FRAC_PI_2 * t.sinh();
        let e = (-2.0 * s.abs()).exp();
        // distance from the nearer endpoint: half (1 - tanh|s|) = half 2e/(1+e)
        let near = half * 2.0 * e / (1.0 + e);
        if near == 0.0 {
            return None;
        }
        let far = 2.0 * half - near;
        let (x, da, db) = if s >= 0.0 { (b - near, far, near) } else { (a + near, near, far) };
        let cosh_s = s.cosh();
        let w = half * FRAC_PI_2 * t.cosh() / (cosh_s * cosh_s);
        Some(f(x, da, db) * w)
    };
    refine(&node, 6.5, tol, 0.0)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Fixed Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre_on(f: impl Fn(f64) -> f64, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (b - a);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(&x, &w)| w * f(c + d * x))
        .sum::<f64>()
        * d
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exponential() {
        let r = quad_semiinfinite(|x| (-x).exp(), 0.0).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12, "{r:?}");
        assert!(r.error_estimate >= 0.0);
    }

    #[test]
    fn inverse_sqrt_weight() {
        let r = quad_semiinfinite(|x| x.powf(-0.5) * (-x).exp(), -0.5).unwrap();
        assert!((r.value - PI.sqrt()).abs() < 1e-11 * PI.sqrt());
    }

    #[test]
    fn integration_by_parts_identity() {
        // \int (e^{-x} - 1) x^{-3/2} dx = Gamma(-1/2)
        let r = quad_semiinfinite(|x| (-x).exp_m1() * x.powf(-1.5), -0.5).unwrap();
        let target = -2.0 * PI.sqrt();
        assert!(((r.value - target) / target).abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn rejects_non_integrable_exponent() {
        assert!(quad_semiinfinite(|x| 1.0 / x, -1.0).unwrap_err().is_domain());
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        // \int_0^1 x^{-0.9} dx = 10
        let r = tanh_sinh_dist(|_, da, _| da.powf(-0.9), 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 10.0).abs() < 1e-9, "{r:?}");
        let r = tanh_sinh(|x| x.sin(), 0.0, PI, 1e-13).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        // singular at the right end, seen through the distance argument
        let r = tanh_sinh_dist(|_, _, db| db.powf(-0.5), 2.0, 3.0, 1e-12).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let rule = gauss_legendre(10);
        let s: f64 = rule.1.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let v = gauss_legendre_on(|x| x.powi(19) + x.powi(18), -1.0, 1.0, &rule);
        assert!((v - 2.0 / 19.0).abs() < 1e-14);
        let v = gauss_legendre_on(|x| x * x, 1.0, 3.0, &rule);
        assert!((v - 26.0 / 3.0).abs() < 1e-13);
        let rule = gauss_legendre(7);
        assert!((rule.0[3]).abs() < 1e-15);
    }
}
