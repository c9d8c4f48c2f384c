//! Weighted cone exits, the duration recursion and the cone checks on a small pool.
//!
//! Uses a coarse time step so the run takes seconds; the reference step is
//! one hundred times finer.

use fzzlab::conesim::{recursion_from_pool, PathConfig};
use fzzlab::verify::{cone_checks, cone_pool, RECURSION_DEPTH};
use fzzlab::{cone_geometry, LcftParams};

fn main() -> fzzlab::Result<()> {
    let p = LcftParams::new(1.0)?;
    let alpha = 2.0;
    let seed = 11;
    let g = cone_geometry(&p, alpha)?;
    let cfg = PathConfig {
        dt: 1e-3 * g.u * g.u,
        ..PathConfig::reference(g.u)
    };

    let pool = cone_pool(&p, alpha, 3_000, seed, Some(cfg))?;
    println!(
        "{} accepted paths from {} attempts, ESS {:.0}, degenerate {}",
        pool.samples.len(),
        pool.total_attempts(),
        pool.ess,
        pool.degenerate
    );

    let rec = recursion_from_pool(&pool, RECURSION_DEPTH, seed)?;
    let mean_inv: f64 = rec.s_n.iter().map(|s| 1.0 / s).sum::<f64>() / rec.s_n.len() as f64;
    println!("E[1/S_{RECURSION_DEPTH}] = {mean_inv:.4}");

    for r in cone_checks(&pool, &p, alpha, seed)? {
        println!(
            "{:<28} {:?}  rel_err {:.3e}  tol {:.3e}",
            r.check, r.verdict, r.rel_err, r.tolerance
        );
    }
    Ok(())
}
