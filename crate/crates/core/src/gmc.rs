//! Lattice free-boundary field on the half-plane and its chaos measures.
//!
//! The field is represented by its averages over the cells of a graded
//! lattice. Covariances are exact cell averages of the half-plane kernel
//! for nearby cells and a second-order moment expansion for distant ones.
//! Samples come from a dense Cholesky factor applied to blocks of standard
//! normal vectors, one random stream per draw.

use std::f64::consts::PI;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use faer::linalg::matmul::triangular::{matmul, BlockStructure};
use faer::{Accum, Mat, Par, Side};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::closed::{area_law_alpha, gmc_moment_h, u0_bar, u_fzz};
use crate::error::{Error, Result};
use crate::params::{Cosmology, LcftParams};
use crate::quad::{gauss_legendre, quad_semiinfinite_tol};
use crate::rng::stream;
use crate::specfn::gamma;
use crate::stats::{effective_sample_size, ks_test_weighted, mean_stderr, weighted_mean_stderr, MeanEstimate};
use crate::verify::VerificationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    /// Cells on `[-R, R]` only.
    #[serde(rename = "boundary_1d")]
    Boundary1D,
    /// Rectangles covering `[-R, R] x [0, R]` plus boundary segments.
    #[serde(rename = "bulk_2d")]
    Bulk2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub kind: LatticeKind,
    /// Truncation radius `R`.
    pub extent: f64,
    /// Boundary cells for `Boundary1D`, cells per axis for `Bulk2D`.
    pub n_cells: usize,
    /// Boundary segments carried by a `Bulk2D` lattice (ignored in 1D).
    pub n_boundary: usize,
    /// Cell size scale at the grading focus points.
    pub grading: f64,
}

/// Largest number of cells accepted for dense factorization.
pub const MAX_DENSE_CELLS: usize = 12_500;

impl LatticeSpec {
    pub fn boundary_reference() -> Self {
        LatticeSpec {
            kind: LatticeKind::Boundary1D,
            extent: 40.0,
            n_cells: 4096,
            n_boundary: 0,
            grading: 1e-3,
        }
    }

    pub fn boundary_small() -> Self {
        LatticeSpec {
            n_cells: 512,
            ..Self::boundary_reference()
        }
    }

    pub fn bulk_reference() -> Self {
        LatticeSpec {
            kind: LatticeKind::Bulk2D,
            extent: 8.0,
            n_cells: 96,
            n_boundary: 1024,
            grading: 0.02,
        }
    }

    pub fn bulk_small() -> Self {
        LatticeSpec {
            n_cells: 24,
            n_boundary: 128,
            ..Self::bulk_reference()
        }
    }

    /// Named presets: `boundary-small`, `boundary-reference`, `bulk-small`,
    /// `bulk-reference`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "boundary-small" => Ok(Self::boundary_small()),
            "boundary-reference" => Ok(Self::boundary_reference()),
            "bulk-small" => Ok(Self::bulk_small()),
            "bulk-reference" => Ok(Self::bulk_reference()),
            other => Err(Error::domain(format!(
                "unknown lattice preset '{other}' (expected boundary-small, boundary-reference, bulk-small or bulk-reference)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 16 {
            return Err(Error::domain(format!("n_cells must be at least 16, got {}", self.n_cells)));
        }
        if !(self.extent > 2.0) {
            return Err(Error::domain(format!("extent must exceed 2, got {}", self.extent)));
        }
        if !(self.grading > 0.0 && self.grading < 1.0) {
            return Err(Error::domain(format!("grading must lie in (0, 1), got {}", self.grading)));
        }
        if self.kind == LatticeKind::Bulk2D && self.n_boundary < 16 {
            return Err(Error::domain(format!(
                "a bulk lattice needs at least 16 boundary segments, got {}",
                self.n_boundary
            )));
        }
        let total = self.total_cells();
        if total > MAX_DENSE_CELLS {
            return Err(Error::Unsupported(format!(
                "{total} cells exceed the dense factorization limit of {MAX_DENSE_CELLS}"
            )));
        }
        Ok(())
    }

    pub fn total_cells(&self) -> usize {
        match self.kind {
            LatticeKind::Boundary1D => self.n_cells,
            LatticeKind::Bulk2D => self.n_cells * self.n_cells + self.n_boundary,
        }
    }

    /// Half the resolution, used for refinement trends.
    pub fn coarsened(&self) -> Self {
        LatticeSpec {
            n_cells: (self.n_cells / 2).max(16),
            n_boundary: (self.n_boundary / 2).max(16),
            ..*self
        }
    }

    fn id(&self) -> u64 {
        let mut h = DefaultHasher::new();
        (self.kind as u8).hash(&mut h);
        self.extent.to_bits().hash(&mut h);
        self.n_cells.hash(&mut h);
        self.n_boundary.hash(&mut h);
        self.grading.to_bits().hash(&mut h);
        h.finish()
    }
}

/// A boundary segment (`y0 == y1 == 0`) or an axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Cell {
    fn segment(x0: f64, x1: f64) -> Self {
        Cell { x0, x1, y0: 0.0, y1: 0.0 }
    }

    pub fn is_segment(&self) -> bool {
        self.y1 == 0.0
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Length of a segment, area of a rectangle.
    pub fn measure(&self) -> f64 {
        if self.is_segment() {
            self.width()
        } else {
            self.width() * self.height()
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    fn size(&self) -> f64 {
        self.width().max(self.height())
    }

    fn reflected(&self) -> Self {
        Cell {
            x0: self.x0,
            x1: self.x1,
            y0: -self.y1,
            y1: -self.y0,
        }
    }
}

/// Nodes on `[lo, hi]` whose spacing grows linearly with the distance to the
/// nearest focus, starting from `delta`.
pub fn graded_nodes(lo: f64, hi: f64, foci: &[f64], delta: f64, n: usize) -> Vec<f64> {
    let uniform = 2.0 * foci.len() as f64 / (hi - lo);
    let cdf = |x: f64| {
        uniform * (x - lo)
            + foci
                .iter()
                .map(|&f| {
                    let t = x - f;
                    t.signum() * (t.abs() / delta).ln_1p()
                })
                .sum::<f64>()
    };
    let (c_lo, c_hi) = (cdf(lo), cdf(hi));
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(lo);
    for k in 1..n {
        let target = c_lo + (c_hi - c_lo) * k as f64 / n as f64;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if cdf(m) < target {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-15 * (1.0 + m.abs()) {
                break;
            }
        }
        nodes.push(0.5 * (a + b));
    }
    nodes.push(hi);
    nodes
}

/// Cells of a lattice, boundary segments first.
pub fn lattice_cells(spec: &LatticeSpec) -> Result<(Vec<Cell>, usize)> {
    spec.validate()?;
    let r = spec.extent;
    let segments = |n: usize| -> Vec<Cell> {
        graded_nodes(-r, r, &[-1.0, 0.0, 1.0], spec.grading, n)
            .windows(2)
            .map(|w| Cell::segment(w[0], w[1]))
            .collect()
    };
    match spec.kind {
        LatticeKind::Boundary1D => {
            let cells = segments(spec.n_cells);
            Ok((cells, spec.n_cells))
        }
        LatticeKind::Bulk2D => {
            let mut cells = segments(spec.n_boundary);
            let xs = graded_nodes(-r, r, &[0.0], spec.grading, spec.n_cells);
            let ys = graded_nodes(0.0, r, &[0.0, 1.0], spec.grading, spec.n_cells);
            for yw in ys.windows(2) {
                for xw in xs.windows(2) {
                    cells.push(Cell {
                        x0: xw[0],
                        x1: xw[1],
                        y0: yw[0],
                        y1: yw[1],
                    });
                }
            }
            Ok((cells, spec.n_boundary))
        }
    }
}

// Antiderivatives of log|(u, v)|: `phi_mn` is integrated m times in u and n times in v.

fn half_log_r2(u: f64, v: f64) -> f64 {
    let r2 = u * u + v * v;
    if r2 == 0.0 {
        0.0
    } else {
        0.5 * r2.ln()
    }
}

fn atan_ratio(den: f64, num: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        (num / den).atan()
    }
}

fn phi11(u: f64, v: f64) -> f64 {
    let l = half_log_r2(u, v);
    u * v * l - 1.5 * u * v + 0.5 * u * u * atan_ratio(u, v) + 0.5 * v * v * atan_ratio(v, u)
}

fn phi21(u: f64, v: f64) -> f64 {
    let l = half_log_r2(u, v);
    u.powi(3) * atan_ratio(u, v) / 6.0 + 0.5 * u * v * v * atan_ratio(v, u) - 11.0 * u * u * v / 12.0
        + l * (0.5 * u * u * v - v.powi(3) / 6.0)
}

fn phi22(u: f64, v: f64) -> f64 {
    let l = half_log_r2(u, v);
    let (u2, v2) = (u * u, v * v);
    (u2 * u * v * atan_ratio(u, v) + u * v2 * v * atan_ratio(v, u)) / 6.0 - 25.0 * u2 * v2 / 48.0
        + l * (-u2 * u2 / 24.0 + u2 * v2 / 4.0 - v2 * v2 / 24.0)
}

fn f2_1d(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        0.5 * t * t * t.abs().ln() - 0.75 * t * t
    }
}

/// Signed corner differences `(a_i - c_j, sign)` for two intervals.
fn corners(a0: f64, a1: f64, c0: f64, c1: f64) -> [(f64, f64); 4] {
    [(a1 - c0, 1.0), (a0 - c0, -1.0), (a1 - c1, -1.0), (a0 - c1, 1.0)]
}

const NEAR_FACTOR: f64 = 4.0;

/// Average of `log|x - y|` over `x` in `a` and `y` in `b`.
fn log_avg(a: &Cell, b: &Cell) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let (dx, dy) = (ax - bx, ay - by);
    let r2 = dx * dx + dy * dy;
    let size = a.size().max(b.size());
    if r2 > (NEAR_FACTOR * size).powi(2) {
        // moments of the uniform offset within the pair of cells
        let (wa, wb, ha, hb) = (a.width(), b.width(), a.height(), b.height());
        let sx = (wa * wa + wb * wb) / 12.0;
        let sy = (ha * ha + hb * hb) / 12.0;
        let mx = (wa.powi(4) + wb.powi(4)) / 80.0 + 6.0 * (wa * wa / 12.0) * (wb * wb / 12.0);
        let my = (ha.powi(4) + hb.powi(4)) / 80.0 + 6.0 * (ha * ha / 12.0) * (hb * hb / 12.0);
        let (dx2, dy2) = (dx * dx, dy * dy);
        let f2 = (dy2 - dx2) / (r2 * r2);
        // log r is harmonic: f_yyyy = f_xxxx = -f_xxyy
        let f4 = -6.0 * (dx2 * dx2 - 6.0 * dx2 * dy2 + dy2 * dy2) / (r2 * r2 * r2 * r2);
        return 0.5 * r2.ln() + 0.5 * (sx - sy) * f2 + f4 * (mx - 6.0 * sx * sy + my) / 24.0;
    }
    let us = corners(a.x0, a.x1, b.x0, b.x1);
    match (a.is_segment(), b.is_segment()) {
        (true, true) => us.iter().map(|&(u, s)| s * f2_1d(u)).sum::<f64>() / (a.width() * b.width()),
        (true, false) => seg_rect(a, b),
        (false, true) => seg_rect(b, a),
        (false, false) => {
            let vs = corners(a.y0, a.y1, b.y0, b.y1);
            let mut s = 0.0;
            for &(u, su) in &us {
                for &(v, sv) in &vs {
                    s += su * sv * phi22(u, v);
                }
            }
            s / (a.measure() * b.measure())
        }
    }
}

fn seg_rect(seg: &Cell, rect: &Cell) -> f64 {
    let s: f64 = corners(seg.x0, seg.x1, rect.x0, rect.x1)
        .iter()
        .map(|&(u, su)| su * (phi21(u, -rect.y0) - phi21(u, -rect.y1)))
        .sum();
    s / (seg.width() * rect.measure())
}

/// Average of `log|z - p|` over a rectangle.
fn log_avg_point(c: &Cell, p: (f64, f64)) -> f64 {
    let (a0, a1) = (c.x0 - p.0, c.x1 - p.0);
    let (b0, b1) = (c.y0 - p.1, c.y1 - p.1);
    (phi11(a1, b1) - phi11(a0, b1) - phi11(a1, b0) + phi11(a0, b0)) / c.measure()
}

/// `int_0^x log|t|_+ dt`.
fn log_plus_primitive(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        0.0
    } else {
        x.signum() * (a * a.ln() - a + 1.0)
    }
}

/// `int_0^x log(1 + t^2) dt`.
fn log1p_sq_primitive(x: f64) -> f64 {
    x * (x * x).ln_1p() - 2.0 * x + 2.0 * x.atan()
}

const CELL_RULE: usize = 12;

/// Tensor Gauss-Legendre average of `f` over a rectangle, with the `y`
/// variable substituted as `y = t^{1/(1-s)}` to absorb a `y^{-s}` weight.
fn rect_average(c: &Cell, s: f64, f: impl Fn(f64, f64) -> f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let e = 1.0 - s;
    let (t0, t1) = (c.y0.powf(e), c.y1.powf(e));
    let (xm, xh) = (0.5 * (c.x0 + c.x1), 0.5 * c.width());
    let (tm, th) = (0.5 * (t0 + t1), 0.5 * (t1 - t0));
    let mut acc = 0.0;
    for (&tj, &wj) in rule.0.iter().zip(&rule.1) {
        let y = (tm + th * tj).powf(1.0 / e);
        for (&xi, &wi) in rule.0.iter().zip(&rule.1) {
            acc += wi * wj * f(xm + xh * xi, y);
        }
    }
    // d y^{1-s} = (1-s) y^{-s} dy
    acc * xh * th / e / c.measure()
}

fn log_plus(x: f64, y: f64) -> f64 {
    0.5 * (x * x + y * y).ln().max(0.0)
}

/// Dense Cholesky factor of the cell-averaged covariance.
pub struct CovarianceFactor {
    spec: LatticeSpec,
    cells: Vec<Cell>,
    n_boundary: usize,
    log_plus_avg: Vec<f64>,
    variance: Vec<f64>,
    jitter: f64,
    lower: Mat<f64>,
    id: u64,
}

const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4];

impl std::fmt::Debug for CovarianceFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CovarianceFactor")
            .field("spec", &self.spec)
            .field("cells", &self.cells.len())
            .field("jitter", &self.jitter)
            .finish()
    }
}

/// Assembles and factorizes the covariance of the cell-averaged field.
pub fn build_covariance(spec: &LatticeSpec) -> Result<CovarianceFactor> {
    let (cells, n_boundary) = lattice_cells(spec)?;
    let n = cells.len();
    let rule = gauss_legendre(CELL_RULE);
    let log_plus_avg: Vec<f64> = cells
        .iter()
        .map(|c| {
            if c.is_segment() {
                (log_plus_primitive(c.x1) - log_plus_primitive(c.x0)) / c.width()
            } else {
                rect_average(c, 0.0, log_plus, &rule)
            }
        })
        .collect();
    let entry = |i: usize, j: usize| kernel_average(&cells[i], &cells[j], log_plus_avg[i], log_plus_avg[j]);
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| (j..n).map(|i| entry(i, j)).collect())
        .collect();
    let mut a = Mat::<f64>::from_fn(n, n, |i, j| if i >= j { columns[j][i - j] } else { 0.0 });
    drop(columns);
    let base: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let scale = base.iter().sum::<f64>() / n as f64;
    let mut applied = 0.0;
    let mut last_reason = String::new();
    for &rel in &JITTER_LADDER {
        let jitter = rel * scale;
        for i in 0..n {
            a[(i, i)] += jitter - applied;
        }
        applied = jitter;
        match a.llt(Side::Lower) {
            Ok(llt) => {
                let lower = llt.L().to_owned();
                return Ok(CovarianceFactor {
                    spec: *spec,
                    cells,
                    n_boundary,
                    log_plus_avg,
                    variance: base.iter().map(|v| v + jitter).collect(),
                    jitter,
                    lower,
                    id: spec.id(),
                });
            }
            Err(e) => last_reason = format!("{e:?}"),
        }
    }
    Err(Error::Factorization {
        jitter: applied,
        reason: last_reason,
    })
}

/// Cell average of `G(x, y) = -log|x - y| - log|x - conj y| + 2 log|x|_+ + 2 log|y|_+`.
fn kernel_average(a: &Cell, b: &Cell, lp_a: f64, lp_b: f64) -> f64 {
    let direct = log_avg(a, b);
    let mirror = if a.is_segment() || b.is_segment() {
        direct
    } else {
        log_avg(a, &b.reflected())
    };
    -direct - mirror + 2.0 * lp_a + 2.0 * lp_b
}

/// Pointwise half-plane kernel.
pub fn green_h(x: (f64, f64), y: (f64, f64)) -> f64 {
    let d = ((x.0 - y.0).powi(2) + (x.1 - y.1).powi(2)).sqrt();
    let m = ((x.0 - y.0).powi(2) + (x.1 + y.1).powi(2)).sqrt();
    -d.ln() - m.ln() + 2.0 * log_plus(x.0, x.1) + 2.0 * log_plus(y.0, y.1)
}

impl CovarianceFactor {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Cells `0..n_boundary` are boundary segments.
    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    /// Diagonal of the factorized matrix (jitter included).
    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Entry of the assembled matrix, recomputed from the cells.
    pub fn covariance_entry(&self, i: usize, j: usize) -> f64 {
        let v = kernel_average(&self.cells[i], &self.cells[j], self.log_plus_avg[i], self.log_plus_avg[j]);
        if i == j {
            v + self.jitter
        } else {
            v
        }
    }

    /// Cell averages of `-2q log|z|_+ + alpha G(z, i)`.
    pub fn profile(&self, q: f64, alpha: f64) -> Vec<f64> {
        self.cells
            .iter()
            .zip(&self.log_plus_avg)
            .map(|(c, &lp)| {
                let green_i = if c.is_segment() {
                    -(log1p_sq_primitive(c.x1) - log1p_sq_primitive(c.x0)) / c.width() + 2.0 * lp
                } else {
                    -log_avg_point(c, (0.0, 1.0)) - log_avg_point(c, (0.0, -1.0)) + 2.0 * lp
                };
                -2.0 * q * lp + alpha * green_i
            })
            .collect()
    }

    /// Field values for draws `first..first + count` as columns.
    fn sample_block(&self, seed: u64, first: u64, count: usize) -> Mat<f64> {
        let n = self.cells.len();
        let mut z = Mat::<f64>::zeros(n, count);
        for k in 0..count {
            let mut rng = stream(seed, first + k as u64);
            for i in 0..n {
                z[(i, k)] = rng.sample(StandardNormal);
            }
        }
        let mut h = Mat::<f64>::zeros(n, count);
        matmul(
            h.as_mut(),
            BlockStructure::Rectangular,
            Accum::Replace,
            self.lower.as_ref(),
            BlockStructure::TriangularLower,
            z.as_ref(),
            BlockStructure::Rectangular,
            1.0,
            Par::Seq,
        );
        h
    }
}

/// Cell values of one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct GffRealization {
    pub values: Vec<f64>,
    pub factor_id: u64,
    pub seed: u64,
    pub draw_id: u64,
}

/// Centered field draws `first..first + count`.
pub fn sample_gff(factor: &CovarianceFactor, seed: u64, first: u64, count: usize) -> Vec<GffRealization> {
    let h = factor.sample_block(seed, first, count);
    (0..count)
        .map(|k| GffRealization {
            values: h.col(k).iter().copied().collect(),
            factor_id: factor.id,
            seed,
            draw_id: first + k as u64,
        })
        .collect()
}

/// Field plus the insertion profile `-2Q log|z|_+ + alpha G(z, i)`; the zero
/// mode is left out.
pub fn sample_field_with_insertion(
    factor: &CovarianceFactor,
    p: &LcftParams,
    alpha: f64,
    seed: u64,
    draw_id: u64,
) -> GffRealization {
    let profile = factor.profile(p.q(), alpha);
    let mut field = sample_gff(factor, seed, draw_id, 1).remove(0);
    for (v, f) in field.values.iter_mut().zip(&profile) {
        *v += f;
    }
    field
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmcObservables {
    /// Boundary measure of the lattice window.
    pub boundary_length: f64,
    /// Bulk measure (zero on a boundary lattice).
    pub bulk_area: f64,
    pub is_weight: f64,
}

/// Per-cell coefficients `c_k` with `nu = sum c_k exp(gamma/2 phi_k)` and
/// `mu = sum a_k exp(gamma phi_k)`.
///
/// Besides the `exp(-gamma^2/8 Var_k)` lattice normalization, each
/// coefficient carries the cell average of `|x|_+^{gamma^2/2}` (boundary) or
/// `(2y)^{-gamma^2/2} |z|_+^{2 gamma^2}` (bulk): the ratio between
/// `eps^{gamma^2/4}` and `exp(-gamma^2/8 Var h_eps)` for this kernel.
#[derive(Debug, Clone)]
pub struct ChaosWeights {
    gamma: f64,
    boundary: Vec<f64>,
    bulk: Vec<f64>,
    n_boundary: usize,
}

impl ChaosWeights {
    pub fn new(factor: &CovarianceFactor, p: &LcftParams) -> Result<Self> {
        let g = p.gamma();
        let k = g * g;
        let nb = factor.n_boundary;
        let boundary = factor.cells[..nb]
            .iter()
            .zip(&factor.variance)
            .map(|(c, v)| {
                let e = k / 2.0;
                // int |x|_+^e dx
                let prim = |x: f64| {
                    let a = x.abs();
                    let m = if a <= 1.0 { a } else { 1.0 + (a.powf(e + 1.0) - 1.0) / (e + 1.0) };
                    x.signum() * m
                };
                (prim(c.x1) - prim(c.x0)) * (-k / 8.0 * v).exp()
            })
            .collect();
        let bulk = if factor.cells.len() > nb {
            if !(k / 2.0 < 1.0) {
                return Err(Error::Unsupported(format!(
                    "bulk lattice weights need gamma < sqrt(2), got {g}"
                )));
            }
            let rule = gauss_legendre(CELL_RULE);
            factor.cells[nb..]
                .iter()
                .zip(&factor.variance[nb..])
                .map(|(c, v)| {
                    let w = rect_average(
                        c,
                        k / 2.0,
                        |x, y| 2f64.powf(-k / 2.0) * (2.0 * k * log_plus(x, y)).exp(),
                        &rule,
                    );
                    c.measure() * w * (-k / 2.0 * v).exp()
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(ChaosWeights {
            gamma: g,
            boundary,
            bulk,
            n_boundary: nb,
        })
    }

    pub fn masses(&self, field: &[f64]) -> GmcObservables {
        let g = self.gamma;
        let nu = self
            .boundary
            .iter()
            .zip(&field[..self.n_boundary])
            .map(|(c, f)| c * (0.5 * g * f).exp())
            .sum();
        let mu = self
            .bulk
            .iter()
            .zip(&field[self.n_boundary..])
            .map(|(c, f)| c * (g * f).exp())
            .sum();
        GmcObservables {
            boundary_length: nu,
            bulk_area: mu,
            is_weight: 1.0,
        }
    }
}

/// Boundary and bulk masses of a field that already includes its profile.
pub fn gmc_masses(factor: &CovarianceFactor, field: &GffRealization, p: &LcftParams) -> Result<GmcObservables> {
    if field.factor_id != factor.id || field.values.len() != factor.n_cells() {
        return Err(Error::domain("field was not drawn on this lattice"));
    }
    Ok(ChaosWeights::new(factor, p)?.masses(&field.values))
}

const DRAW_BLOCK: usize = 64;

/// Per-draw observables on one lattice.
#[derive(Debug, Clone, Serialize)]
pub struct GmcSampleSet {
    pub spec: LatticeSpec,
    pub gamma: f64,
    pub alpha: f64,
    pub seed: u64,
    pub jitter: f64,
    pub draws: Vec<GmcObservables>,
}

/// Draws `n_draws` Liouville fields with an `alpha` insertion and records
/// their chaos masses. Draw `k` uses stream `k`.
pub fn simulate_observables(
    factor: &CovarianceFactor,
    p: &LcftParams,
    alpha: f64,
    n_draws: usize,
    seed: u64,
) -> Result<GmcSampleSet> {
    let weights = ChaosWeights::new(factor, p)?;
    let profile = factor.profile(p.q(), alpha);
    let blocks: Vec<(u64, usize)> = (0..n_draws)
        .step_by(DRAW_BLOCK)
        .map(|s| (s as u64, DRAW_BLOCK.min(n_draws - s)))
        .collect();
    let draws: Vec<GmcObservables> = blocks
        .par_iter()
        .flat_map_iter(|&(first, count)| {
            let h = factor.sample_block(seed, first, count);
            let mut field = vec![0.0; profile.len()];
            (0..count)
                .map(|k| {
                    for (i, (f, pr)) in field.iter_mut().zip(&profile).enumerate() {
                        *f = h[(i, k)] + pr;
                    }
                    weights.masses(&field)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(GmcSampleSet {
        spec: factor.spec,
        gamma: p.gamma(),
        alpha,
        seed,
        jitter: factor.jitter,
        draws,
    })
}

impl GmcSampleSet {
    pub fn boundary_lengths(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.boundary_length).collect()
    }

    pub fn bulk_areas(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.bulk_area).collect()
    }

    /// Sets every importance weight to `nu^exponent`.
    pub fn set_length_weights(&mut self, exponent: f64) {
        for d in &mut self.draws {
            d.is_weight = d.boundary_length.powf(exponent);
        }
    }

    /// Adds a constant `c` to every field: `nu -> e^{gamma c/2} nu`, `mu -> e^{gamma c} mu`.
    pub fn shifted(&self, c: f64) -> Self {
        let g = self.gamma;
        let mut out = self.clone();
        for d in &mut out.draws {
            d.boundary_length *= (0.5 * g * c).exp();
            d.bulk_area *= (g * c).exp();
        }
        out
    }

    /// CSV with header `stream_id,draw_id,nu,mu,weight`. The stream id of a
    /// draw equals its index.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stream_id", "draw_id", "nu", "mu", "weight"])?;
        for (k, d) in self.draws.iter().enumerate() {
            w.write_record([
                k.to_string(),
                k.to_string(),
                format!("{:e}", d.boundary_length + 0.0),
                format!("{:e}", d.bulk_area + 0.0),
                format!("{:e}", d.is_weight),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the CSV and a `<csv>.json` sidecar with the lattice and run settings.
    pub fn dump(&self, csv_path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(csv_path)?)?;
        let sidecar = json!({
            "lattice": self.spec,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "seed": self.seed,
            "jitter": self.jitter,
            "rows": self.draws.len(),
        });
        let mut path = csv_path.as_os_str().to_owned();
        path.push(".json");
        std::fs::write(path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}

fn refuse_large_moment(exponent: f64, what: &str) -> Result<()> {
    if exponent > 1.0 + 1e-12 {
        return Err(Error::Unsupported(format!(
            "{what} exponent {exponent} exceeds 1; the estimator variance is not controlled"
        )));
    }
    Ok(())
}

/// Bound on the expected boundary mass outside `[-R, R]`: the profile
/// decays like `|x|^{-2}` after the `|x|_+^{gamma^2/2}` factor.
pub fn boundary_tail_bound(extent: f64) -> f64 {
    2.0 / extent
}

/// Bound on the expected bulk mass outside the half-disk of radius `R`.
pub fn bulk_tail_bound(p: &LcftParams, alpha: f64, extent: f64) -> Result<f64> {
    let k = p.kappa();
    let angular = PI.sqrt() * gamma(0.5 - k / 4.0)? / gamma(1.0 - k / 4.0)?;
    let radial = extent.powf(k / 2.0 - 2.0) / (2.0 - k / 2.0);
    let green = (1.0 - 1.0 / (extent * extent)).powf(-p.gamma() * alpha.max(0.0));
    Ok(2f64.powf(-k / 2.0) * angular * radial * green)
}

/// A moment estimate on one lattice.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LatticeEstimate {
    pub n_cells: usize,
    pub estimate: f64,
    pub stderr: f64,
}

fn trend(target: f64, fine: &MeanEstimate, coarse: &MeanEstimate, fine_spec: &LatticeSpec, coarse_spec: &LatticeSpec) -> serde_json::Value {
    json!({
        "coarse": LatticeEstimate { n_cells: coarse_spec.total_cells(), estimate: coarse.mean, stderr: coarse.stderr },
        "fine": LatticeEstimate { n_cells: fine_spec.total_cells(), estimate: fine.mean, stderr: fine.stderr },
        "toward_target": (fine.mean - target).abs() <= (coarse.mean - target).abs(),
    })
}

/// `E[nu^{(2/gamma)(Q - alpha)}]` on a prebuilt lattice.
pub fn u0_bar_moment(factor: &CovarianceFactor, p: &LcftParams, alpha: f64, n_draws: usize, seed: u64) -> Result<MeanEstimate> {
    let e = p.length_exponent(alpha);
    refuse_large_moment(e, "boundary moment")?;
    let set = simulate_observables(factor, p, alpha, n_draws, seed)?;
    let xs: Vec<f64> = set.draws.iter().map(|d| d.boundary_length.powf(e)).collect();
    Ok(mean_stderr(&xs))
}

fn params_echo(p: &LcftParams, alpha: f64, spec: &LatticeSpec, n_draws: usize) -> serde_json::Value {
    json!({ "gamma": p.gamma(), "alpha": alpha, "lattice": spec, "n_draws": n_draws })
}

const LATTICE_CAVEAT: &str = "lattice tolerances are engineering choices; no convergence rate is known for this observable";

/// Monte Carlo boundary moment against its closed form, with the trend
/// between `spec` and a half-resolution lattice.
pub fn estimate_u0_bar(p: &LcftParams, alpha: f64, spec: &LatticeSpec, n_draws: usize, seed: u64) -> Result<VerificationReport> {
    let start = Instant::now();
    if !(alpha > p.gamma() / 2.0) {
        return Err(Error::domain(format!("alpha = {alpha} must exceed gamma/2")));
    }
    let target = u0_bar(p, alpha)?;
    let fine = u0_bar_moment(&build_covariance(spec)?, p, alpha, n_draws, seed)?;
    let coarse_spec = spec.coarsened();
    let coarse = u0_bar_moment(&build_covariance(&coarse_spec)?, p, alpha, n_draws, seed)?;
    let e = p.length_exponent(alpha);
    Ok(
        VerificationReport::statistical("gmc_u0_bar", params_echo(p, alpha, spec, n_draws), target, &fine, 0.05, 3.0)
            .with_seed(seed)
            .with_details(json!({
                "moment_exponent": e,
                "tail_bound": boundary_tail_bound(spec.extent).powf(e),
                "refinement": trend(target, &fine, &coarse, spec, &coarse_spec),
                "caveat": LATTICE_CAVEAT,
            }))
            .timed(start),
    )
}

/// Weighted reciprocal moment of `X = mu / nu^2` and the weighted KS test of
/// `X` on a prebuilt bulk lattice.
pub fn conditional_area_statistics(
    factor: &CovarianceFactor,
    p: &LcftParams,
    alpha: f64,
    n_draws: usize,
    seed: u64,
) -> Result<(MeanEstimate, crate::stats::KsResult, GmcSampleSet)> {
    if factor.spec.kind != LatticeKind::Bulk2D {
        return Err(Error::domain("the conditional area needs a bulk lattice"));
    }
    let e = p.length_exponent(alpha);
    refuse_large_moment(e, "length weight")?;
    let mut set = simulate_observables(factor, p, alpha, n_draws, seed)?;
    set.set_length_weights(e);
    let law = area_law_alpha(p, alpha)?.to_inverse_gamma();
    let x: Vec<f64> = set.draws.iter().map(|d| d.bulk_area / d.boundary_length.powi(2)).collect();
    let w: Vec<f64> = set.draws.iter().map(|d| d.is_weight).collect();
    let recip: Vec<f64> = x.iter().map(|v| 1.0 / v).collect();
    let est = weighted_mean_stderr(&recip, &w);
    let ks = ks_test_weighted(&x, &w, |v| law.cdf(v))?;
    Ok((est, ks, set))
}

/// Unit-length area law: weighted `E[1/X]` against `shape/scale`.
pub fn estimate_conditional_area(p: &LcftParams, alpha: f64, spec: &LatticeSpec, n_draws: usize, seed: u64) -> Result<VerificationReport> {
    let start = Instant::now();
    if !(alpha > p.gamma() / 2.0 && alpha < p.q()) {
        return Err(Error::domain(format!("alpha = {alpha} must lie in (gamma/2, Q)")));
    }
    let law = area_law_alpha(p, alpha)?;
    let target = law.shape / law.scale;
    let (fine, ks, _) = conditional_area_statistics(&build_covariance(spec)?, p, alpha, n_draws, seed)?;
    let coarse_spec = spec.coarsened();
    let (coarse, _, _) = conditional_area_statistics(&build_covariance(&coarse_spec)?, p, alpha, n_draws, seed)?;
    let ess_low = fine.ess < crate::conesim::ESS_FLOOR * n_draws as f64;
    Ok(VerificationReport::statistical(
        "gmc_conditional_area",
        params_echo(p, alpha, spec, n_draws),
        target,
        &fine,
        0.10,
        3.0,
    )
    .with_seed(seed)
    .with_details(json!({
        "area_law": { "shape": law.shape, "scale": law.scale },
        "ks_statistic": ks.statistic,
        "ks_p_value": ks.p_value,
        "ess_warning": ess_low,
        "tail_bound": {
            "boundary": boundary_tail_bound(spec.extent),
            "bulk": bulk_tail_bound(p, alpha, spec.extent)?,
        },
        "refinement": trend(target, &fine, &coarse, spec, &coarse_spec),
        "caveat": LATTICE_CAVEAT,
    }))
    .timed(start))
}

/// `E[mu^{(Q - alpha)/gamma}]` on a prebuilt bulk lattice.
pub fn bulk_moment(factor: &CovarianceFactor, p: &LcftParams, alpha: f64, n_draws: usize, seed: u64) -> Result<MeanEstimate> {
    if factor.spec.kind != LatticeKind::Bulk2D {
        return Err(Error::domain("the bulk moment needs a bulk lattice"));
    }
    let e = (p.q() - alpha) / p.gamma();
    if !(0.0..=0.5).contains(&e) {
        return Err(Error::Unsupported(format!(
            "bulk moment exponent {e} outside [0, 1/2]"
        )));
    }
    let set = simulate_observables(factor, p, alpha, n_draws, seed)?;
    let xs: Vec<f64> = set.draws.iter().map(|d| d.bulk_area.powf(e)).collect();
    Ok(mean_stderr(&xs))
}

pub fn estimate_bulk_moment(p: &LcftParams, alpha: f64, spec: &LatticeSpec, n_draws: usize, seed: u64) -> Result<VerificationReport> {
    let start = Instant::now();
    let target = gmc_moment_h(p, alpha)?;
    let fine = bulk_moment(&build_covariance(spec)?, p, alpha, n_draws, seed)?;
    let coarse_spec = spec.coarsened();
    let coarse = bulk_moment(&build_covariance(&coarse_spec)?, p, alpha, n_draws, seed)?;
    let e = (p.q() - alpha) / p.gamma();
    Ok(
        VerificationReport::statistical("gmc_bulk_moment", params_echo(p, alpha, spec, n_draws), target, &fine, 0.10, 3.0)
            .with_seed(seed)
            .with_details(json!({
                "moment_exponent": e,
                "tail_bound": bulk_tail_bound(p, alpha, spec.extent)?.powf(e),
                "refinement": trend(target, &fine, &coarse, spec, &coarse_spec),
                "caveat": LATTICE_CAVEAT,
            }))
            .timed(start),
    )
}

/// `int_0^inf l^{c-1} (exp(-mu l^2 x - mu_b l) - 1) dl` for `c` in `(-1, 0)`.
pub fn outer_length_integral(c: f64, mu: f64, mu_b: f64, x: f64) -> Result<f64> {
    if mu == 0.0 && mu_b == 0.0 {
        return Ok(0.0);
    }
    // l^{c-1}(e^{-s} - 1) = -(mu_b + mu x l) l^c (1 - e^{-s})/s, finite at tiny l
    let f = |l: f64| {
        let rate = mu_b + mu * x * l;
        let s = rate * l;
        let ratio = if s < 1e-12 { 1.0 - 0.5 * s } else { -(-s).exp_m1() / s };
        -rate * l.powf(c) * ratio
    };
    // integrand ~ -(mu_b l + mu x l^2) l^{c-1} near zero
    let lead = if mu_b > 0.0 { c } else { c + 1.0 };
    Ok(quad_semiinfinite_tol(f, lead, 1e-10)?.value)
}

/// Per-draw terms `nu^{(2/gamma)(Q-alpha)} J(X)` whose mean, times
/// `(2/gamma) 2^{-alpha^2/2}`, estimates `U(alpha)`.
pub fn u_terms(set: &GmcSampleSet, p: &LcftParams, alpha: f64, cosmo: &Cosmology) -> Result<Vec<f64>> {
    let e = p.length_exponent(alpha);
    let c = -e;
    set.draws
        .par_iter()
        .map(|d| {
            let x = d.bulk_area / d.boundary_length.powi(2);
            Ok(d.boundary_length.powf(e) * outer_length_integral(c, cosmo.mu(), cosmo.mu_b(), x)?)
        })
        .collect()
}

/// `U(alpha)` from a sample set: the self-normalization of the area law
/// cancels against the `U0` estimate, leaving a plain mean.
pub fn u_from_samples(set: &GmcSampleSet, p: &LcftParams, alpha: f64, cosmo: &Cosmology) -> Result<MeanEstimate> {
    let pre = 2.0 / p.gamma() * 2f64.powf(-alpha * alpha / 2.0);
    let mut est = mean_stderr(&u_terms(set, p, alpha, cosmo)?);
    est.mean *= pre;
    est.stderr *= pre;
    Ok(est)
}

pub fn estimate_u_end_to_end(
    p: &LcftParams,
    alpha: f64,
    cosmo: &Cosmology,
    spec: &LatticeSpec,
    n_draws: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let start = Instant::now();
    let g = p.gamma();
    if !(alpha > 2.0 / g && alpha < p.q() - g / 4.0) {
        return Err(Error::domain(format!("alpha = {alpha} must lie in (2/gamma, Q - gamma/4)")));
    }
    if spec.kind != LatticeKind::Bulk2D {
        return Err(Error::domain("the end-to-end estimate needs a bulk lattice"));
    }
    refuse_large_moment(p.length_exponent(alpha), "length weight")?;
    let target = u_fzz(p, alpha, cosmo)?;
    let fine_set = simulate_observables(&build_covariance(spec)?, p, alpha, n_draws, seed)?;
    let fine = u_from_samples(&fine_set, p, alpha, cosmo)?;
    let coarse_spec = spec.coarsened();
    let coarse_set = simulate_observables(&build_covariance(&coarse_spec)?, p, alpha, n_draws, seed)?;
    let coarse = u_from_samples(&coarse_set, p, alpha, cosmo)?;
    let mut weights = fine_set.clone();
    weights.set_length_weights(p.length_exponent(alpha));
    let w: Vec<f64> = weights.draws.iter().map(|d| d.is_weight).collect();
    let ess = effective_sample_size(&w);
    let mut params = params_echo(p, alpha, spec, n_draws);
    params["mu"] = json!(cosmo.mu());
    params["mu_b"] = json!(cosmo.mu_b());
    Ok(
        VerificationReport::statistical("gmc_u_end_to_end", params, target, &fine, 0.15, 3.0)
            .with_seed(seed)
            .with_details(json!({
                "ess": ess,
                "ess_warning": ess < crate::conesim::ESS_FLOOR * n_draws as f64,
                "refinement": trend(target, &fine, &coarse, spec, &coarse_spec),
                "caveat": LATTICE_CAVEAT,
            }))
            .timed(start),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gauss_legendre_on;
    use crate::stats::mean_stderr;

    fn brute_log_avg(a: &Cell, b: &Cell, mirror: bool) -> f64 {
        let rule = gauss_legendre(48);
        let sign = if mirror { -1.0 } else { 1.0 };
        let inner = |x: f64, y: f64| {
            gauss_legendre_on(
                |s| gauss_legendre_on(|t| 0.5 * ((x - s).powi(2) + (y - sign * t).powi(2)).ln(), b.y0, b.y1, &rule),
                b.x0,
                b.x1,
                &rule,
            ) / b.measure()
        };
        gauss_legendre_on(|x| gauss_legendre_on(|y| inner(x, y), a.y0, a.y1, &rule), a.x0, a.x1, &rule) / a.measure()
    }

    #[test]
    fn exact_averages_match_quadrature_for_separated_cells() {
        let a = Cell { x0: 0.0, x1: 0.5, y0: 0.2, y1: 0.6 };
        let b = Cell { x0: 1.1, x1: 1.4, y0: 0.1, y1: 0.3 };
        let exact = {
            let us = corners(a.x0, a.x1, b.x0, b.x1);
            let vs = corners(a.y0, a.y1, b.y0, b.y1);
            let mut s = 0.0;
            for &(u, su) in &us {
                for &(v, sv) in &vs {
                    s += su * sv * phi22(u, v);
                }
            }
            s / (a.measure() * b.measure())
        };
        assert!((exact - brute_log_avg(&a, &b, false)).abs() < 1e-10);
        assert!((log_avg(&a, &b.reflected()) - brute_log_avg(&a, &b, true)).abs() < 1e-10);
    }

    #[test]
    fn self_average_of_unit_square() {
        // E log|X - Y| for X, Y uniform in the unit square
        let c = Cell { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        let v = log_avg(&c, &c);
        let known = PI / 3.0 - 25.0 / 12.0 + 2f64.ln() / 3.0;
        assert!((v - known).abs() < 1e-13, "{v} vs {known}");
        assert!((v + 0.805_086_721_950_087_5).abs() < 1e-12);
    }

    #[test]
    fn segment_averages() {
        // E log|x - y| on a unit interval is -3/2
        let s = Cell::segment(2.0, 3.0);
        assert!((log_avg(&s, &s) + 1.5).abs() < 1e-14);
        let t = Cell::segment(3.0, 3.5);
        let rule = gauss_legendre(64);
        let brute = gauss_legendre_on(
            |x| gauss_legendre_on(|y| (x - y).abs().ln(), 3.0, 3.5, &rule),
            2.0,
            3.0,
            &rule,
        ) / 0.5;
        assert!((log_avg(&s, &t) - brute).abs() < 1e-5);
        let r = Cell { x0: 2.5, x1: 3.2, y0: 0.5, y1: 0.9 };
        let brute = gauss_legendre_on(
            |x| {
                gauss_legendre_on(
                    |y| gauss_legendre_on(|t| 0.5 * ((x - y).powi(2) + t * t).ln(), 0.5, 0.9, &rule),
                    2.5,
                    3.2,
                    &rule,
                )
            },
            2.0,
            3.0,
            &rule,
        ) / r.measure();
        assert!((log_avg(&s, &r) - brute).abs() < 1e-10);
    }

    #[test]
    fn point_average() {
        let c = Cell { x0: -0.2, x1: 0.3, y0: 1.5, y1: 2.0 };
        let rule = gauss_legendre(40);
        let brute = gauss_legendre_on(
            |x| gauss_legendre_on(|y| 0.5 * (x * x + (y - 1.0).powi(2)).ln(), 1.5, 2.0, &rule),
            -0.2,
            0.3,
            &rule,
        ) / c.measure();
        assert!((log_avg_point(&c, (0.0, 1.0)) - brute).abs() < 1e-12);
    }

    #[test]
    fn far_entries_match_pointwise_kernel() {
        let cell = |x: f64, y: f64, h: f64| Cell { x0: x - h, x1: x + h, y0: y - h, y1: y + h };
        let seg = |x: f64, h: f64| Cell::segment(x - h, x + h);
        let pairs = [
            (cell(0.1, 0.3, 0.005), cell(-0.4, 0.6, 0.004)),
            (cell(2.0, 1.5, 0.01), cell(3.5, 0.5, 0.01)),
            (seg(0.3, 0.005), cell(0.2, 0.5, 0.005)),
            (seg(-3.0, 0.01), seg(2.5, 0.01)),
            (cell(0.5, 0.05, 0.002), cell(0.5, 0.4, 0.004)),
        ];
        for (a, b) in pairs {
            let lp = |c: &Cell| {
                let (x, y) = c.center();
                log_plus(x, y)
            };
            let v = kernel_average(&a, &b, lp(&a), lp(&b));
            let g = green_h(a.center(), b.center());
            assert!(((v - g) / g).abs() < 1e-4, "{a:?} {b:?}: {v} vs {g}");
        }
        // the moment expansion and the exact average agree where they meet
        let a = cell(0.0, 0.5, 0.05);
        let b = cell(0.41, 0.5, 0.05);
        assert!((log_avg(&a, &b) - brute_log_avg(&a, &b, false)).abs() < 2e-6);
    }

    #[test]
    fn green_reduces_inside_unit_disk() {
        let (x, y) = ((0.3, 0.4), (-0.2, 0.1));
        let direct = -((0.5f64).powi(2) + 0.3f64.powi(2)).sqrt().ln() - ((0.5f64).powi(2) + 0.5f64.powi(2)).sqrt().ln();
        assert!((green_h(x, y) - direct).abs() < 1e-15);
    }

    #[test]
    fn graded_nodes_are_monotone_and_fine_at_foci() {
        let nodes = graded_nodes(-40.0, 40.0, &[-1.0, 0.0, 1.0], 1e-3, 512);
        assert_eq!(nodes.len(), 513);
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        let near_zero = nodes.windows(2).find(|w| w[0] <= 0.0 && w[1] >= 0.0).unwrap();
        let far = nodes.windows(2).last().unwrap();
        assert!(near_zero[1] - near_zero[0] < 1e-2 * (far[1] - far[0]));
    }

    #[test]
    fn spec_validation_and_presets() {
        assert!(LatticeSpec::preset("boundary-small").is_ok());
        assert!(LatticeSpec::preset("nope").unwrap_err().is_domain());
        let mut s = LatticeSpec::boundary_small();
        s.n_cells = 8;
        assert!(s.validate().is_err());
        s = LatticeSpec::boundary_small();
        s.extent = 2.0;
        assert!(s.validate().is_err());
        assert_eq!(LatticeSpec::bulk_reference().total_cells(), 96 * 96 + 1024);
        assert!(LatticeSpec::bulk_reference().validate().is_ok());
    }

    #[test]
    fn profile_decays_like_log() {
        let f = build_covariance(&LatticeSpec::boundary_small()).unwrap();
        let p = LcftParams::new(1.0).unwrap();
        let prof = f.profile(p.q(), 2.0);
        let last = f.cells().len() - 1;
        let (x, _) = f.cells()[last].center();
        let lp = f.log_plus_avg[last];
        // -2Q log|x| + alpha G(x, i) with G(x, i) = -log(1 + x^-2) = O(x^-2)
        assert!((prof[last] + 2.0 * p.q() * lp).abs() < 2.0 * 2.0 / (x * x));
        // the insertion cell stays finite in 2D
        let f2 = build_covariance(&LatticeSpec::bulk_small()).unwrap();
        assert!(f2.profile(p.q(), 2.0).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn centered_field_and_covariance_fidelity() {
        let spec = LatticeSpec {
            n_cells: 32,
            ..LatticeSpec::boundary_small()
        };
        let f = build_covariance(&spec).unwrap();
        let n = 10_000;
        let draws = sample_gff(&f, 3, 0, n);
        for (i, j) in [(0usize, 0usize), (5, 9), (16, 16), (16, 17), (31, 2)] {
            let xi: Vec<f64> = draws.iter().map(|d| d.values[i]).collect();
            let m = mean_stderr(&xi);
            assert!(m.mean.abs() < 5.0 * m.stderr, "mean at {i}: {m:?}");
            let prod: Vec<f64> = draws.iter().map(|d| d.values[i] * d.values[j]).collect();
            let c = mean_stderr(&prod);
            let target = f.covariance_entry(i, j);
            assert!((c.mean - target).abs() < 5.0 * c.stderr, "cov {i},{j}: {c:?} vs {target}");
        }
    }

    #[test]
    fn constant_shift_scales_masses() {
        let f = build_covariance(&LatticeSpec::bulk_small()).unwrap();
        let p = LcftParams::new(1.0).unwrap();
        let w = ChaosWeights::new(&f, &p).unwrap();
        let field = sample_field_with_insertion(&f, &p, 2.0, 9, 0);
        let base = w.masses(&field.values);
        let c = 0.7;
        let shifted: Vec<f64> = field.values.iter().map(|v| v + c).collect();
        let m = w.masses(&shifted);
        assert!((m.boundary_length / base.boundary_length - (0.5 * c).exp()).abs() < 1e-12);
        assert!((m.bulk_area / base.bulk_area - c.exp()).abs() < 1e-12);
        assert!(base.boundary_length > 0.0 && base.bulk_area > 0.0);
        assert_eq!(gmc_masses(&f, &field, &p).unwrap(), base);
    }

    #[test]
    fn small_gamma_mass_is_profile_weighted_length() {
        let f = build_covariance(&LatticeSpec::boundary_small()).unwrap();
        let p = LcftParams::new(1e-3).unwrap();
        let alpha = 0.5;
        let field = sample_field_with_insertion(&f, &p, alpha, 1, 0);
        let nu = gmc_masses(&f, &field, &p).unwrap().boundary_length;
        let prof = f.profile(p.q(), alpha);
        let lebesgue: f64 = f
            .cells()
            .iter()
            .zip(&prof)
            .map(|(c, v)| c.measure() * (0.5 * p.gamma() * v).exp())
            .sum();
        assert!(((nu - lebesgue) / lebesgue).abs() < 1e-3, "{nu} vs {lebesgue}");
    }

    #[test]
    fn zero_exponent_and_large_exponent() {
        let f = build_covariance(&LatticeSpec { n_cells: 64, ..LatticeSpec::boundary_small() }).unwrap();
        let p = LcftParams::new(1.0).unwrap();
        let m = u0_bar_moment(&f, &p, p.q(), 50, 1).unwrap();
        assert_eq!(m.mean, 1.0);
        assert_eq!(m.stderr, 0.0);
        // exponent (2/gamma)(Q - alpha) = 2 at alpha = 1.5
        assert!(matches!(u0_bar_moment(&f, &p, 1.5, 10, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn stderr_scales_with_draws() {
        let f = build_covariance(&LatticeSpec { n_cells: 128, ..LatticeSpec::boundary_small() }).unwrap();
        let p = LcftParams::new(1.0).unwrap();
        let a = u0_bar_moment(&f, &p, 2.0, 2000, 5).unwrap();
        let b = u0_bar_moment(&f, &p, 2.0, 4000, 5).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio - 2f64.sqrt()).abs() < 0.25, "{ratio}");
    }

    #[test]
    fn boundary_mean_is_close_to_closed_form() {
        // exponent 1 at gamma = 1, alpha = 2: E[nu] = int dx/(1+x^2) up to the tail
        let f = build_covariance(&LatticeSpec::boundary_small()).unwrap();
        let p = LcftParams::new(1.0).unwrap();
        let m = u0_bar_moment(&f, &p, 2.0, 2000, 11).unwrap();
        let truncated = 2.0 * 40f64.atan();
        assert!((m.mean - truncated).abs() < 4.0 * m.stderr, "{m:?} vs {truncated}");
    }

    #[test]
    fn conditional_area_is_shift_invariant() {
        let f = build_covariance(&LatticeSpec::bulk_small()).unwrap();
        let p = LcftParams::new(1.0).unwrap();
        let mut set = simulate_observables(&f, &p, 2.0, 200, 4).unwrap();
        set.set_length_weights(0.0);
        let shifted = set.shifted(1.3);
        for (a, b) in set.draws.iter().zip(&shifted.draws) {
            let xa = a.bulk_area / a.boundary_length.powi(2);
            let xb = b.bulk_area / b.boundary_length.powi(2);
            assert!(((xa - xb) / xa).abs() < 1e-12);
            assert_eq!(a.is_weight, 1.0);
        }
    }

    #[test]
    fn end_to_end_scaling_and_zero_cosmology() {
        let f = build_covariance(&LatticeSpec::bulk_small()).unwrap();
        let p = LcftParams::new(1.0).unwrap();
        let alpha = 2.2;
        let set = simulate_observables(&f, &p, alpha, 64, 8).unwrap();
        assert_eq!(outer_length_integral(-0.6, 0.0, 0.0, 3.0).unwrap(), 0.0);
        let lam: f64 = 1.7;
        let base = u_from_samples(&set, &p, alpha, &Cosmology::new(&p, 1.0, 1.0).unwrap()).unwrap();
        let scaled = u_from_samples(&set, &p, alpha, &Cosmology::new(&p, lam * lam, lam).unwrap()).unwrap();
        let factor = lam.powf(p.length_exponent(alpha));
        assert!(((scaled.mean - factor * base.mean) / scaled.mean).abs() < 1e-8);
    }

    #[test]
    fn outer_integral_closed_cases() {
        // mu = 0: int l^{c-1}(e^{-b l} - 1) dl = Gamma(c) b^{-c}
        let c = -0.6;
        let v = outer_length_integral(c, 0.0, 2.0, 1.0).unwrap();
        let t = gamma(c).unwrap() * 2f64.powf(-c);
        assert!(((v - t) / t).abs() < 1e-9);
    }

    #[test]
    fn tail_bounds() {
        let p = LcftParams::new(1.0).unwrap();
        assert_eq!(boundary_tail_bound(40.0), 0.05);
        let b8 = bulk_tail_bound(&p, 2.0, 8.0).unwrap();
        let b16 = bulk_tail_bound(&p, 2.0, 16.0).unwrap();
        // radial decay R^{gamma^2/2 - 2} times the Green factor
        let expected = 2f64.powf(1.5) * (63.0f64 / 64.0).powi(-2) / (255.0f64 / 256.0).powi(-2);
        assert!((b8 / b16 - expected).abs() < 1e-12);
    }

    #[test]
    fn csv_dump_is_deterministic() {
        let f = build_covariance(&LatticeSpec { n_cells: 64, ..LatticeSpec::boundary_small() }).unwrap();
        let p = LcftParams::new(1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        simulate_observables(&f, &p, 2.0, 100, 7).unwrap().dump(&a).unwrap();
        simulate_observables(&f, &p, 2.0, 100, 7).unwrap().dump(&b).unwrap();
        let text = std::fs::read_to_string(&a).unwrap();
        assert_eq!(text, std::fs::read_to_string(&b).unwrap());
        assert!(text.starts_with("stream_id,draw_id,nu,mu,weight\n"));
        assert_eq!(text.lines().count(), 101);
        assert!(dir.path().join("a.csv.json").exists());
    }
}
