//! Coupling constants, insertion weights, cosmological constants and cone angles.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

const CONSISTENCY_TOL: f64 = 1e-12;

/// Width of the band around `x = 1` handled by the first-order expansion.
pub const DEGENERATE_BAND: f64 = 1e-12;

/// Coupling `gamma` together with the background charge and `kappa = gamma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LcftParams {
    gamma: f64,
    q: f64,
    kappa: f64,
}

impl LcftParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 2.0) {
            return Err(Error::domain(format!("gamma must lie in (0, 2), got {gamma}")));
        }
        Ok(LcftParams {
            gamma,
            q: gamma / 2.0 + 2.0 / gamma,
            kappa: gamma * gamma,
        })
    }

    /// Rebuilds parameters from all three fields, rejecting inconsistent triples.
    pub fn from_parts(gamma: f64, q: f64, kappa: f64) -> Result<Self> {
        let p = Self::new(gamma)?;
        if (p.q - q).abs() > CONSISTENCY_TOL * p.q {
            return Err(Error::domain(format!(
                "background charge {q} does not match gamma/2 + 2/gamma = {}",
                p.q
            )));
        }
        if (p.kappa - kappa).abs() > CONSISTENCY_TOL * p.kappa {
            return Err(Error::domain(format!(
                "kappa {kappa} does not match gamma^2 = {}",
                p.kappa
            )));
        }
        Ok(p)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `pi gamma^2 / 4`, the inner cone angle.
    pub fn theta(&self) -> f64 {
        PI * self.kappa / 4.0
    }

    /// `sin(pi gamma^2 / 4)`.
    pub fn sin_theta(&self) -> f64 {
        crate::specfn::sinpi(self.kappa / 4.0)
    }

    /// Moment exponent `(2/gamma)(Q - alpha)` of the boundary length.
    pub fn length_exponent(&self, alpha: f64) -> f64 {
        2.0 / self.gamma * (self.q - alpha)
    }
}

/// Shorthand for [`LcftParams::new`].
pub fn make_params(gamma: f64) -> Result<LcftParams> {
    LcftParams::new(gamma)
}

/// Range of insertion weights an [`InsertionSpec`] was validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ValidityWindow {
    /// `alpha in (2/gamma, Q)`.
    SeibergBulk,
    /// `alpha in (gamma/2, Q)`.
    Extended,
    Unrestricted,
}

impl ValidityWindow {
    pub fn bounds(&self, p: &LcftParams) -> (f64, f64) {
        match self {
            ValidityWindow::SeibergBulk => (2.0 / p.gamma, p.q),
            ValidityWindow::Extended => (p.gamma / 2.0, p.q),
            ValidityWindow::Unrestricted => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InsertionSpec {
    pub alpha: f64,
    pub delta_alpha: f64,
    pub window: ValidityWindow,
}

impl InsertionSpec {
    pub fn new(p: &LcftParams, alpha: f64, window: ValidityWindow) -> Result<Self> {
        let (lo, hi) = window.bounds(p);
        if !(alpha > lo && alpha < hi) {
            return Err(Error::domain(format!(
                "alpha = {alpha} outside the {window:?} window ({lo}, {hi})"
            )));
        }
        Ok(InsertionSpec {
            alpha,
            delta_alpha: 0.5 * alpha * (p.q - 0.5 * alpha),
            window,
        })
    }
}

/// Which form the cosine factor takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// `x < 1`: trigonometric form.
    RealS,
    /// `x > 1`: hyperbolic form.
    ImaginaryS,
    /// `x = 1` within [`DEGENERATE_BAND`].
    Degenerate,
}

/// Bulk and boundary cosmological constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cosmology {
    mu: f64,
    mu_b: f64,
    branch: Branch,
}

impl Cosmology {
    pub fn new(p: &LcftParams, mu: f64, mu_b: f64) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::domain(format!("mu must be finite and >= 0, got {mu}")));
        }
        if !(mu_b > 0.0) || !mu_b.is_finite() {
            return Err(Error::domain(format!("mu_B must be finite and > 0, got {mu_b}")));
        }
        let branch = if mu == 0.0 {
            Branch::ImaginaryS
        } else {
            classify(branch_parameter(p, mu, mu_b))
        };
        Ok(Cosmology { mu, mu_b, branch })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn mu_b(&self) -> f64 {
        self.mu_b
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    /// `(mu_B / sqrt(mu)) sqrt(sin(pi gamma^2/4))`; infinite when `mu = 0`.
    pub fn x_parameter(&self, p: &LcftParams) -> f64 {
        branch_parameter(p, self.mu, self.mu_b)
    }

    /// Cosmology with boundary constant chosen so that the branch parameter equals `x`.
    pub fn from_x(p: &LcftParams, mu: f64, x: f64) -> Result<Self> {
        if !(mu > 0.0) || !(x > 0.0) {
            return Err(Error::domain(format!("from_x needs mu > 0 and x > 0, got mu={mu}, x={x}")));
        }
        Self::new(p, mu, x * mu.sqrt() / p.sin_theta().sqrt())
    }
}

fn branch_parameter(p: &LcftParams, mu: f64, mu_b: f64) -> f64 {
    mu_b / mu.sqrt() * p.sin_theta().sqrt()
}

fn classify(x: f64) -> Branch {
    if (x - 1.0).abs() <= DEGENERATE_BAND {
        Branch::Degenerate
    } else if x < 1.0 {
        Branch::RealS
    } else {
        Branch::ImaginaryS
    }
}

/// Inner/outer cone angles and the start abscissa for a given insertion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeGeometry {
    pub theta: f64,
    pub phi: f64,
    pub u: f64,
}

impl ConeGeometry {
    /// Geometry with explicit angles; used by tests and the plain kernel checks.
    pub fn new(theta: f64, phi: f64, u: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < phi && phi < 2.0 * PI) {
            return Err(Error::domain(format!(
                "cone angles need 0 < theta < phi < 2 pi, got theta={theta}, phi={phi}"
            )));
        }
        if !(u > 0.0) {
            return Err(Error::domain(format!("start abscissa must be positive, got {u}")));
        }
        Ok(ConeGeometry { theta, phi, u })
    }

    /// `pi / phi`, the shape of the vertex duration law and the weight exponent.
    pub fn weight_exponent(&self) -> f64 {
        PI / self.phi
    }
}

/// Cone angles attached to `(gamma, alpha)` for `gamma/2 < alpha < Q - gamma/4`.
pub fn cone_geometry(p: &LcftParams, alpha: f64) -> Result<ConeGeometry> {
    let lo = p.gamma / 2.0;
    let hi = p.q - p.gamma / 4.0;
    if !(alpha > lo) {
        return Err(Error::domain(format!(
            "alpha = {alpha} must exceed gamma/2 = {lo}"
        )));
    }
    if !(alpha < hi) {
        return Err(Error::domain(format!(
            "alpha = {alpha} must be below Q - gamma/4 = {hi} (outer angle would reach 2 pi)"
        )));
    }
    let theta = p.theta();
    let phi = p.gamma * PI / (2.0 * (p.q - alpha));
    let u = 1.0 / (2.0 * p.sin_theta()).sqrt();
    ConeGeometry::new(theta, phi, u)
}

/// The cosine factor `cos((alpha - Q) pi s)` written as `cos(nu arccos x)` or
/// `cosh(nu arccosh x)` with `nu = 2(alpha - Q)/gamma`.
pub fn s_cosine_factor(p: &LcftParams, alpha: f64, cosmo: &Cosmology) -> Result<f64> {
    if cosmo.mu == 0.0 {
        return Err(Error::domain(
            "the cosine factor needs mu > 0; use the mu = 0 formula instead",
        ));
    }
    let nu = 2.0 * (alpha - p.q) / p.gamma;
    Ok(generalized_chebyshev_real(nu, cosmo.x_parameter(p)))
}

/// `T_nu(x)` for real `x >= 0`, switching between the trigonometric and
/// hyperbolic forms and linearizing across the branch point.
pub(crate) fn generalized_chebyshev_real(nu: f64, x: f64) -> f64 {
    let d = x - 1.0;
    if d.abs() <= DEGENERATE_BAND {
        1.0 + nu * nu * d
    } else if x < 1.0 {
        (nu * x.acos()).cos()
    } else {
        (nu * x.acosh()).cosh()
    }
}
