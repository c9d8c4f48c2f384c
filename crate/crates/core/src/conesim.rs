//! Brownian motion in planar cones.
//!
//! Paths are Euler walks with an optional Brownian-bridge test for wall
//! crossings inside a step. A path that reaches the side ray produces a
//! `(A, L)` split sample; paths leaving through the real axis are rejected.
//! Every sample owns one random stream, so results are bit-identical for a
//! given seed regardless of thread count.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::InverseGammaParams;
use crate::error::{Error, Result};
use crate::params::ConeGeometry;
use crate::rng::{stream, StreamRng};
use crate::stats::{effective_sample_size, systematic_resample};

/// Discretization of a cone path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathConfig {
    /// Time step (variance per coordinate per step).
    pub dt: f64,
    /// Imaginary offset of the start point, as a fraction of `u`.
    pub start_offset_eps: f64,
    pub bridge_correction: bool,
    /// Steps allowed for a single attempt before giving up.
    pub max_steps: u64,
}

impl PathConfig {
    /// `dt = 1e-5 u^2`, offset `1e-3`, bridge test on.
    pub fn reference(u: f64) -> Self {
        PathConfig {
            dt: 1e-5 * u * u,
            start_offset_eps: 1e-3,
            bridge_correction: true,
            max_steps: 500_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.start_offset_eps > 0.0 && self.start_offset_eps < 0.1) {
            return Err(Error::domain(format!(
                "start offset must lie in (0, 0.1), got {}",
                self.start_offset_eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitSide {
    /// The positive real axis.
    RealAxis,
    /// The ray `arg z = theta`.
    Ray,
}

impl ExitSide {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExitSide::RealAxis => "real_axis",
            ExitSide::Ray => "ray",
        }
    }
}

/// First exit of a path from the cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeExit {
    pub side: ExitSide,
    pub time: f64,
    /// Distance of the exit point from the vertex.
    pub radius: f64,
}

/// Inner-leg duration, side exit radius and importance weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeSplitSample {
    pub duration_a: f64,
    pub exit_radius_l: f64,
    pub is_weight: f64,
}

/// Wall geometry of the cone `{0 < arg z < theta}`.
#[derive(Debug, Clone, Copy)]
struct Walls {
    sin_t: f64,
    cos_t: f64,
    convex: bool,
}

impl Walls {
    fn new(theta: f64) -> Self {
        Walls {
            sin_t: theta.sin(),
            cos_t: theta.cos(),
            convex: theta <= PI,
        }
    }

    /// Signed distances to the line of the real axis and to the line of the ray.
    #[inline]
    fn distances(&self, x: f64, y: f64) -> (f64, f64) {
        (y, x * self.sin_t - y * self.cos_t)
    }

    #[inline]
    fn inside(&self, d: (f64, f64)) -> bool {
        if self.convex {
            d.0 > 0.0 && d.1 > 0.0
        } else {
            d.0 > 0.0 || d.1 > 0.0
        }
    }

    /// Radius of the projection of `(x, y)` on the wall.
    fn radius_on(&self, side: ExitSide, x: f64, y: f64) -> f64 {
        match side {
            ExitSide::RealAxis => x.max(0.0),
            ExitSide::Ray => (x * self.cos_t + y * self.sin_t).max(0.0),
        }
    }
}

/// Probability that a Brownian bridge between signed distances `a, b > 0`
/// over time `dt` touches the line.
#[inline]
fn bridge_hit<R: Rng + ?Sized>(a: f64, b: f64, dt: f64, rng: &mut R) -> bool {
    let e = 2.0 * a * b / dt;
    // exp(-40) is below the resolution of a 53-bit uniform draw that matters here
    if e > 40.0 {
        return false;
    }
    rng.random::<f64>() < (-e).exp()
}

/// Simulates planar Brownian motion from `start` until it leaves the cone of
/// angle `theta`.
pub fn simulate_cone_exit<R: Rng + ?Sized>(
    theta: f64,
    start: (f64, f64),
    cfg: &PathConfig,
    rng: &mut R,
) -> Result<ConeExit> {
    if !(theta > 0.0 && theta < 2.0 * PI) {
        return Err(Error::domain(format!("cone angle must lie in (0, 2 pi), got {theta}")));
    }
    cfg.validate()?;
    let walls = Walls::new(theta);
    let (mut x, mut y) = start;
    let mut d = walls.distances(x, y);
    if !walls.inside(d) {
        return Err(Error::domain("start point is not inside the cone"));
    }
    let sigma = cfg.dt.sqrt();
    let mut t = 0.0;
    for _ in 0..cfg.max_steps {
        let nx = x + sigma * rng.sample::<f64, _>(StandardNormal);
        let ny = y + sigma * rng.sample::<f64, _>(StandardNormal);
        let nd = walls.distances(nx, ny);
        if !walls.inside(nd) {
            // Which wall was crossed first along the straight segment.
            let frac = |a: f64, b: f64| if a > 0.0 && b <= 0.0 { a / (a - b) } else { f64::INFINITY };
            let f0 = frac(d.0, nd.0);
            let f1 = frac(d.1, nd.1);
            let (side, f) = match (f0.is_finite(), f1.is_finite()) {
                (true, false) => (ExitSide::RealAxis, f0),
                (false, true) => (ExitSide::Ray, f1),
                // convex: first crossing; reflex: leaving needs both, so the later one
                _ if walls.convex == (f0 <= f1) => (ExitSide::RealAxis, f0),
                _ => (ExitSide::Ray, f1),
            };
            let px = x + f * (nx - x);
            let py = y + f * (ny - y);
            return Ok(ConeExit {
                side,
                time: t + f * cfg.dt,
                radius: walls.radius_on(side, px, py),
            });
        }
        if cfg.bridge_correction {
            let mx = 0.5 * (x + nx);
            let my = 0.5 * (y + ny);
            // For a reflex cone a line only bounds the region where the other
            // half-plane test fails.
            let wall0 = walls.convex || (d.1 <= 0.0 && nd.1 <= 0.0);
            let wall1 = walls.convex || (d.0 <= 0.0 && nd.0 <= 0.0);
            let hit0 = wall0 && d.0 > 0.0 && nd.0 > 0.0 && bridge_hit(d.0, nd.0, cfg.dt, rng);
            let hit1 = !hit0 && wall1 && d.1 > 0.0 && nd.1 > 0.0 && bridge_hit(d.1, nd.1, cfg.dt, rng);
            if hit0 || hit1 {
                let side = if hit0 { ExitSide::RealAxis } else { ExitSide::Ray };
                return Ok(ConeExit {
                    side,
                    time: t + 0.5 * cfg.dt,
                    radius: walls.radius_on(side, mx, my),
                });
            }
        }
        x = nx;
        y = ny;
        d = nd;
        t += cfg.dt;
    }
    Err(Error::Timeout {
        max_steps: cfg.max_steps,
        elapsed: t,
        radius: x.hypot(y),
    })
}

/// One attempt from `u(1 + i eps)`.
pub fn sample_exit_through_ray<R: Rng + ?Sized>(
    theta: f64,
    u: f64,
    cfg: &PathConfig,
    rng: &mut R,
) -> Result<ConeExit> {
    simulate_cone_exit(theta, (u, u * cfg.start_offset_eps), cfg, rng)
}

/// A ray exit together with the number of rejected attempts before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcceptedExit {
    pub duration: f64,
    pub radius: f64,
    pub rejected: u64,
}

/// Repeats attempts on one stream until a path leaves through the ray.
pub fn sample_until_ray<R: Rng + ?Sized>(theta: f64, u: f64, cfg: &PathConfig, rng: &mut R) -> Result<AcceptedExit> {
    let mut rejected = 0;
    loop {
        let e = sample_exit_through_ray(theta, u, cfg, rng)?;
        if e.side == ExitSide::Ray {
            return Ok(AcceptedExit {
                duration: e.time,
                radius: e.radius,
                rejected,
            });
        }
        rejected += 1;
    }
}

/// Weighted sample of `(A, L)` together with sampling diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSplitSet {
    pub geometry: ConeGeometry,
    pub config: PathConfig,
    pub seed: u64,
    pub samples: Vec<ConeSplitSample>,
    /// Rejected attempts per accepted sample.
    pub rejected: Vec<u64>,
    pub ess: f64,
    /// Set when the effective sample size falls below `ESS_FLOOR * n`.
    pub degenerate: bool,
}

/// Fraction of `n` below which the weights are reported as degenerate.
pub const ESS_FLOOR: f64 = 0.05;

impl WeightedSplitSet {
    pub fn weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.is_weight).collect()
    }

    pub fn durations(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.duration_a).collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.exit_radius_l).collect()
    }

    pub fn total_attempts(&self) -> u64 {
        self.rejected.iter().map(|r| r + 1).sum()
    }

    /// Writes `stream_id,path_id,A,L,weight,exit_side`, one row per accepted
    /// path; `path_id` counts attempts within the stream.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stream_id", "path_id", "A", "L", "weight", "exit_side"])?;
        for (i, (s, r)) in self.samples.iter().zip(&self.rejected).enumerate() {
            w.write_record([
                i.to_string(),
                r.to_string(),
                format!("{:e}", s.duration_a),
                format!("{:e}", s.exit_radius_l),
                format!("{:e}", s.is_weight),
                ExitSide::Ray.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV dump plus a JSON sidecar with the rejection accounting.
    pub fn dump(&self, csv_path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(csv_path)?)?;
        let sidecar = serde_json::json!({
            "rows": self.samples.len(),
            "attempts": self.total_attempts(),
            "rejected_real_axis": self.total_attempts() - self.samples.len() as u64,
            "ess": self.ess,
            "degenerate": self.degenerate,
            "seed": self.seed,
            "geometry": self.geometry,
            "config": self.config,
        });
        let mut side = csv_path.as_os_str().to_owned();
        side.push(".json");
        std::fs::write(side, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}

/// `n` ray exits from `u(1 + i eps)` in the inner cone, each weighted by
/// `(L/u)^{-pi/phi}`. Sample `i` uses stream `i` of `seed`.
pub fn weighted_split_sampler(geom: &ConeGeometry, n: usize, cfg: &PathConfig, seed: u64) -> Result<WeightedSplitSet> {
    cfg.validate()?;
    let k = geom.weight_exponent();
    let draws: Vec<AcceptedExit> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            sample_until_ray(geom.theta, geom.u, cfg, &mut rng)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<ConeSplitSample> = draws
        .iter()
        .map(|d| ConeSplitSample {
            duration_a: d.duration,
            exit_radius_l: d.radius,
            is_weight: (d.radius / geom.u).powf(-k),
        })
        .collect();
    let ess = effective_sample_size(&samples.iter().map(|s| s.is_weight).collect::<Vec<_>>());
    Ok(WeightedSplitSet {
        geometry: *geom,
        config: *cfg,
        seed,
        rejected: draws.iter().map(|d| d.rejected).collect(),
        samples,
        ess,
        degenerate: ess < ESS_FLOOR * n as f64,
    })
}

/// Stream offset for resampling randomness, kept clear of the path streams.
const RESAMPLE_STREAM: u64 = 1 << 62;

/// Outcome of the truncated recursion `S_n = A_1 + (L_1/u)^2 (A_2 + ...)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecursionSamples {
    pub depth: usize,
    /// `S_n` per output path.
    pub s_n: Vec<f64>,
    /// `S_{n-1}` per output path, for the monotone coupling check.
    pub s_prev: Vec<f64>,
    /// `prod_i (L_i/u)^2` per output path.
    pub residual: Vec<f64>,
    pub ess: f64,
    pub degenerate: bool,
}

/// Builds `S_n` from a weighted pool: the pool is systematically resampled to
/// equal weights, and each level uses an independent permutation of the
/// resampled indices.
pub fn recursion_from_pool(pool: &WeightedSplitSet, depth: usize, seed: u64) -> Result<RecursionSamples> {
    if depth == 0 {
        return Err(Error::domain("recursion depth must be at least 1"));
    }
    let n = pool.samples.len();
    let u2 = pool.geometry.u * pool.geometry.u;
    let mut rng = stream(seed, RESAMPLE_STREAM);
    let base = systematic_resample(&pool.weights(), n, &mut rng);
    let mut s = vec![0.0; n];
    let mut s_prev = vec![0.0; n];
    let mut prod = vec![1.0; n];
    let mut order = base.clone();
    for _ in 0..depth {
        shuffle(&mut order, &mut rng);
        s_prev.copy_from_slice(&s);
        for j in 0..n {
            let smp = &pool.samples[order[j]];
            s[j] += prod[j] * smp.duration_a;
            prod[j] *= smp.exit_radius_l * smp.exit_radius_l / u2;
        }
    }
    Ok(RecursionSamples {
        depth,
        s_n: s,
        s_prev,
        residual: prod,
        ess: pool.ess,
        degenerate: pool.degenerate,
    })
}

/// `S_n` from disjoint chains: the pool is systematically resampled to equal
/// weights, shuffled, and cut into `len / depth` groups of `depth` splits, so
/// no split enters two chains and the outputs are independent draws.
pub fn recursion_disjoint(pool: &WeightedSplitSet, depth: usize, seed: u64) -> Result<RecursionSamples> {
    if depth == 0 {
        return Err(Error::domain("recursion depth must be at least 1"));
    }
    let n = pool.samples.len();
    let m = n / depth;
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2 * depth, got: n });
    }
    let u2 = pool.geometry.u * pool.geometry.u;
    let mut rng = stream(seed, RESAMPLE_STREAM + 2);
    let mut order = systematic_resample(&pool.weights(), n, &mut rng);
    shuffle(&mut order, &mut rng);
    let mut out = RecursionSamples {
        depth,
        s_n: Vec::with_capacity(m),
        s_prev: Vec::with_capacity(m),
        residual: Vec::with_capacity(m),
        ess: pool.ess,
        degenerate: pool.degenerate,
    };
    for chain in order.chunks_exact(depth) {
        let (mut s, mut prev, mut prod) = (0.0, 0.0, 1.0);
        for &i in chain {
            let smp = &pool.samples[i];
            prev = s;
            s += prod * smp.duration_a;
            prod *= smp.exit_radius_l * smp.exit_radius_l / u2;
        }
        out.s_n.push(s);
        out.s_prev.push(prev);
        out.residual.push(prod);
    }
    Ok(out)
}

fn shuffle<R: Rng + ?Sized>(v: &mut [usize], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

/// Simulates a fresh pool and runs [`recursion_from_pool`].
pub fn recursion_fixed_point(
    geom: &ConeGeometry,
    depth: usize,
    n_paths: usize,
    cfg: &PathConfig,
    seed: u64,
) -> Result<RecursionSamples> {
    let pool = weighted_split_sampler(geom, n_paths, cfg, seed)?;
    recursion_from_pool(&pool, depth, seed)
}

/// Two-leg decomposition `T = A + (L/u)^2 Y` with `Y` drawn from the vertex
/// duration law independently of the inner leg.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoLegSamples {
    pub a: Vec<f64>,
    pub l: Vec<f64>,
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub target: InverseGammaParams,
}

pub fn two_leg_from_pool(pool: &WeightedSplitSet, seed: u64) -> Result<TwoLegSamples> {
    let g = &pool.geometry;
    let target = InverseGammaParams::new(g.weight_exponent(), 0.5 * g.u * g.u)?;
    let n = pool.samples.len();
    let mut rng: StreamRng = stream(seed, RESAMPLE_STREAM + 1);
    let idx = systematic_resample(&pool.weights(), n, &mut rng);
    let mut out = TwoLegSamples {
        a: Vec::with_capacity(n),
        l: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        t: Vec::with_capacity(n),
        target,
    };
    let u2 = g.u * g.u;
    for &i in &idx {
        let s = &pool.samples[i];
        let y = target.sample(&mut rng);
        out.a.push(s.duration_a);
        out.l.push(s.exit_radius_l);
        out.y.push(y);
        out.t.push(s.duration_a + s.exit_radius_l * s.exit_radius_l / u2 * y);
    }
    Ok(out)
}

/// `Lambda = sqrt(a2) [[sin theta, -cos theta], [0, 1]]`, taking the cone of
/// angle `theta` onto the positive quadrant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShearMap {
    pub m: [[f64; 2]; 2],
}

impl ShearMap {
    pub fn new(theta: f64, a2: f64) -> Result<Self> {
        if !(a2 > 0.0) {
            return Err(Error::domain(format!("variance must be positive, got {a2}")));
        }
        let a = a2.sqrt();
        Ok(ShearMap {
            m: [[a * theta.sin(), -a * theta.cos()], [0.0, a]],
        })
    }

    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        (
            self.m[0][0] * p.0 + self.m[0][1] * p.1,
            self.m[1][0] * p.0 + self.m[1][1] * p.1,
        )
    }

    pub fn apply_path(&self, path: &[(f64, f64)]) -> Vec<(f64, f64)> {
        path.iter().map(|&p| self.apply(p)).collect()
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }
}

pub fn shear_map(theta: f64, a2: f64, p: (f64, f64)) -> Result<(f64, f64)> {
    Ok(ShearMap::new(theta, a2)?.apply(p))
}
