//! Special functions used by the closed forms.
//!
//! Everything here works in 64-bit floats. Gamma values are carried as a
//! signed logarithm so that products of many Gamma factors (some at negative
//! arguments, some huge) can be formed without overflow or sign loss.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Distance from a non-positive integer below which `gamma_signed` reports a pole.
pub const POLE_TOLERANCE: f64 = 1e-10;

/// `sin(pi x)` with argument reduction so that zeros at the integers are exact.
pub fn sinpi(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    let r = x - 2.0 * (x / 2.0).floor(); // r in [0, 2)
    let (r, sign) = if r >= 1.0 { (r - 1.0, -1.0) } else { (r, 1.0) };
    let v = if r == 0.0 {
        0.0
    } else if r < 0.25 {
        (PI * r).sin()
    } else if r <= 0.75 {
        (PI * (0.5 - r)).cos()
    } else {
        (PI * (1.0 - r)).sin()
    };
    sign * v
}

/// `cos(pi x)`, reduced the same way as [`sinpi`].
pub fn cospi(x: f64) -> f64 {
    sinpi(x + 0.5)
}

/// `Gamma(x)` represented as `sign * exp(log_abs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLogGamma {
    pub log_abs: f64,
    pub sign: f64,
}

impl SignedLogGamma {
    pub fn value(&self) -> f64 {
        self.sign * self.log_abs.exp()
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x >= 0.5`.
fn ln_gamma_lanczos(x: f64) -> f64 {
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Signed log-Gamma for any real argument off the poles.
///
/// Arguments below 1/2 go through the reflection formula
/// `Gamma(x) Gamma(1-x) = pi / sin(pi x)`.
pub fn gamma_signed(x: f64) -> Result<SignedLogGamma> {
    if x.is_nan() {
        return Err(Error::domain("Gamma of NaN"));
    }
    if x <= 0.0 {
        let nearest = x.round();
        if (x - nearest).abs() < POLE_TOLERANCE {
            return Err(Error::Pole {
                factor: "Gamma".into(),
                argument: x,
                nearest: nearest as i64,
            });
        }
    }
    if x >= 0.5 {
        return Ok(SignedLogGamma {
            log_abs: ln_gamma_lanczos(x),
            sign: 1.0,
        });
    }
    let s = sinpi(x);
    Ok(SignedLogGamma {
        log_abs: PI.ln() - s.abs().ln() - ln_gamma_lanczos(1.0 - x),
        sign: s.signum(),
    })
}

/// Plain `Gamma(x)`; overflows to infinity for large arguments.
pub fn gamma(x: f64) -> Result<f64> {
    gamma_signed(x).map(|g| g.value())
}

/// `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::domain(format!("ln_gamma needs x > 0, got {x}")));
    }
    Ok(gamma_signed(x)?.log_abs)
}

/// Modified Bessel function of the second kind, `K_nu(x)`.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    Ok(ln_bessel_k(nu, x)?.exp())
}

/// `ln K_nu(x)`.
///
/// Evaluates `K_nu(z) = 1/2 (z/2)^nu \int_0^inf exp(-s - z^2/4s) s^{-nu-1} ds`
/// after the substitution `s = (z/2) e^w`, which turns it into
/// `\int_0^inf exp(-z cosh w) cosh(nu w) dw`. The integrand decays doubly
/// exponentially, so the trapezoid rule converges geometrically in the step;
/// the step is halved until two levels agree.
pub fn ln_bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("bessel_k needs x > 0, got {x}")));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::domain(format!(
            "bessel_k takes nu >= 0 (K is even in nu), got {nu}"
        )));
    }
    // log of the integrand e^{x - x cosh w} cosh(nu w); the factor e^{-x}
    // is restored at the end so large x does not cancel
    let log_f = |w: f64| -> f64 {
        let nw = nu * w;
        let sh = (0.5 * w).sinh();
        -2.0 * x * sh * sh + nw + (0.5 * (1.0 + (-2.0 * nw).exp())).ln()
    };
    // Peak where x sinh w = nu.
    let w_peak = (nu / x).asinh();
    let f_peak = log_f(w_peak);
    // Right truncation: 60 e-folds below the peak, bracketed from a unit
    // offset and refined downward for narrow peaks (large x).
    let mut width = 1.0;
    while log_f(w_peak + width) - f_peak > -60.0 {
        width *= 2.0;
    }
    while width > 1e-300 && log_f(w_peak + 0.5 * width) - f_peak <= -60.0 {
        width *= 0.5;
    }
    let w_max = w_peak + width;

    let sum_on = |h: f64, offset: f64, stride: f64| -> f64 {
        let mut s = 0.0;
        let mut w = offset;
        while w <= w_max {
            s += (log_f(w) - f_peak).exp();
            w += stride * h;
        }
        s
    };

    let mut h = 0.5f64.min(width / 8.0);
    // Level 0: nodes 0, h, 2h, ... with half weight at w = 0.
    let mut total = sum_on(h, 0.0, 1.0) - 0.5 * (log_f(0.0) - f_peak).exp();
    let mut estimate = h * total;
    for _ in 0..30 {
        let new_nodes = sum_on(h, 0.5 * h, 1.0); // midpoints of the current grid
        total += new_nodes;
        h *= 0.5;
        let refined = h * total;
        let converged = (refined - estimate).abs() <= 1e-14 * refined.abs();
        estimate = refined;
        if converged {
            return Ok(f_peak + estimate.ln() - x);
        }
    }
    Err(Error::Quadrature(crate::error::QuadDiagnostics {
        value: f_peak + estimate.ln() - x,
        error_estimate: f64::NAN,
        evaluations: 0,
        levels: 30,
    }))
}

/// A truncated series together with what is known about its remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSum {
    pub value: f64,
    pub terms: usize,
    /// Magnitude of the first omitted term.
    pub next_term: f64,
    /// Estimated bound on the omitted remainder.
    pub tail_bound: f64,
}

fn series_term_signed(log_abs: f64, sign: f64) -> f64 {
    sign * log_abs.exp()
}

/// Generalized Chebyshev function `T_a(x) = cos(a arccos x)`, the exact
/// companion of [`chebyshev_generalized`].
pub fn chebyshev_exact(a: f64, x: f64) -> f64 {
    (a * x.acos()).cos()
}

fn check_chebyshev_args(a: f64, x: f64) -> Result<()> {
    if !(x.abs() < 1.0) {
        return Err(Error::domain(format!("generalized Chebyshev series needs |x| < 1, got {x}")));
    }
    if (a - a.round()).abs() < POLE_TOLERANCE {
        return Err(Error::domain(format!(
            "generalized Chebyshev series needs non-integer a (Gamma poles), got {a}"
        )));
    }
    Ok(())
}

fn chebyshev_term(a: f64, x: f64, n: usize) -> Result<f64> {
    if x == 0.0 && n > 0 {
        return Ok(0.0);
    }
    let prefactor = 0.5 * a * sinpi(a);
    let nf = n as f64;
    let g1 = gamma_signed(0.5 * (nf + a))?;
    let g2 = gamma_signed(0.5 * (nf - a))?;
    let log_abs = prefactor.abs().ln() + (nf - 1.0) * 2f64.ln() - PI.ln() - ln_gamma_lanczos(nf + 1.0)
        + g1.log_abs
        + g2.log_abs
        + if n > 0 { nf * x.abs().ln() } else { 0.0 };
    let mut sign = prefactor.signum() * g1.sign * g2.sign;
    if (n + 1).is_multiple_of(2) {
        // (-2)^{n-1} is negative for even n
    } else {
        sign = -sign;
    }
    if x < 0.0 && n % 2 == 1 {
        sign = -sign;
    }
    Ok(series_term_signed(log_abs, sign))
}

/// Partial sum of the power series of `cos(a arccos x)`:
/// `(a/2) sin(pi a) sum_{n < n_terms} (-2)^{n-1} / (pi n!) Gamma((n+a)/2) Gamma((n-a)/2) x^n`.
pub fn chebyshev_generalized(a: f64, x: f64, n_terms: usize) -> Result<SeriesSum> {
    check_chebyshev_args(a, x)?;
    let mut sum = 0.0;
    for n in 0..n_terms {
        sum += chebyshev_term(a, x, n)?;
    }
    let next = chebyshev_term(a, x, n_terms)?.abs();
    let after = chebyshev_term(a, x, n_terms + 1)?.abs();
    Ok(SeriesSum {
        value: sum,
        terms: n_terms,
        next_term: next,
        tail_bound: geometric_tail(next, after),
    })
}

/// Sums the generalized Chebyshev series until the terms drop below
/// `1e-14 |sum|` and the tail estimate is below `tol`.
pub fn chebyshev_generalized_auto(a: f64, x: f64, tol: f64) -> Result<SeriesSum> {
    check_chebyshev_args(a, x)?;
    sum_until_converged(|n| chebyshev_term(a, x, n), tol, 20_000)
}

/// Remainder estimate from two consecutive omitted terms: geometric tail with
/// the observed ratio, never smaller than the first omitted term.
fn geometric_tail(next: f64, after: f64) -> f64 {
    if next == 0.0 {
        return 0.0;
    }
    let r = after / next;
    if r < 1.0 {
        next / (1.0 - r)
    } else {
        f64::INFINITY
    }
}

fn sum_until_converged(
    mut term: impl FnMut(usize) -> Result<f64>,
    tol: f64,
    max_terms: usize,
) -> Result<SeriesSum> {
    let mut sum = 0.0;
    let mut prev = term(0)?;
    sum += prev;
    for n in 1..max_terms {
        let t = term(n)?;
        let tail = geometric_tail(t.abs(), term(n + 1)?.abs());
        if t.abs() < 1e-14 * sum.abs().max(f64::MIN_POSITIVE) && tail < tol {
            return Ok(SeriesSum {
                value: sum,
                terms: n,
                next_term: t.abs(),
                tail_bound: tail,
            });
        }
        sum += t;
        prev = t;
    }
    Err(Error::Quadrature(crate::error::QuadDiagnostics {
        value: sum,
        error_estimate: prev.abs(),
        evaluations: max_terms,
        levels: 0,
    }))
}

/// Parameters of the double integral
/// `\int_0^inf y^b e^{-lambda y} \int_0^inf t^c exp(-y^2 t - a^2/t) dt dy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleIntegralParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
}

impl DoubleIntegralParams {
    pub fn new(a: f64, b: f64, c: f64, lambda: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::domain(format!("double integral series needs a > 0, got {a}")));
        }
        if !(b > -1.0) {
            return Err(Error::domain(format!("double integral series needs b > -1, got {b}")));
        }
        if !(c < 0.5 * b - 0.5) {
            return Err(Error::domain(format!(
                "double integral series needs c < b/2 - 1/2 = {}, got {c}",
                0.5 * b - 0.5
            )));
        }
        if !(lambda > 0.0 && lambda < 2.0 * a) {
            return Err(Error::domain(format!(
                "double integral series needs 0 < lambda < 2a = {}, got {lambda}",
                2.0 * a
            )));
        }
        Ok(DoubleIntegralParams { a, b, c, lambda })
    }

    fn term(&self, n: usize) -> f64 {
        let Self { a, b, c, lambda } = *self;
        let nf = n as f64;
        // Both Gamma arguments are positive under the constructor's constraints.
        let log_abs = -(2f64).ln() + nf * lambda.ln() - ln_gamma_lanczos(nf + 1.0)
            + (-nf + 2.0 * c - b + 1.0) * a.ln()
            + ln_gamma_pos(0.5 * nf + 0.5 * b - c - 0.5)
            + ln_gamma_pos(0.5 * nf + 0.5 * b + 0.5);
        let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * log_abs.exp()
    }
}

fn ln_gamma_pos(x: f64) -> f64 {
    if x >= 0.5 {
        ln_gamma_lanczos(x)
    } else {
        PI.ln() - sinpi(x).abs().ln() - ln_gamma_lanczos(1.0 - x)
    }
}

/// Partial sum (first `n_terms` terms) of
/// `1/2 sum_n (-lambda)^n / n! a^{-n+2c-b+1} Gamma(n/2+b/2-c-1/2) Gamma(n/2+b/2+1/2)`.
pub fn double_integral_series(p: DoubleIntegralParams, n_terms: usize) -> SeriesSum {
    let sum: f64 = (0..n_terms).map(|n| p.term(n)).sum();
    let next = p.term(n_terms).abs();
    let after = p.term(n_terms + 1).abs();
    SeriesSum {
        value: sum,
        terms: n_terms,
        next_term: next,
        tail_bound: geometric_tail(next, after),
    }
}

/// [`double_integral_series`] summed to convergence.
pub fn double_integral_series_auto(p: DoubleIntegralParams, tol: f64) -> Result<SeriesSum> {
    sum_until_converged(|n| Ok(p.term(n)), tol, 20_000)
}

/// `f(x) = x / sin x` on `(0, pi)`.
pub fn x_over_sin(x: f64) -> Result<f64> {
    if !(x > 0.0 && x < PI) {
        return Err(Error::domain(format!("x/sin x is evaluated on (0, pi), got {x}")));
    }
    Ok(x_over_sin_unchecked(x))
}

/// `x / sin x` extended continuously to `x = 0`.
pub(crate) fn x_over_sin_unchecked(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 + x2 / 6.0 + 7.0 * x2 * x2 / 360.0
    } else {
        x / x.sin()
    }
}
