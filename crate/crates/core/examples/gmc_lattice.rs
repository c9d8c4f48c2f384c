//! Lattice chaos on the small boundary preset: the boundary moment against its closed form.

use fzzlab::closed::u0_bar;
use fzzlab::gmc::{build_covariance, estimate_u0_bar, simulate_observables, LatticeSpec};
use fzzlab::LcftParams;

fn main() -> fzzlab::Result<()> {
    let p = LcftParams::new(1.0)?;
    let alpha = 2.0;
    let spec = LatticeSpec::preset("boundary-small")?;

    let factor = build_covariance(&spec)?;
    println!("{} cells, jitter {:.1e}", factor.n_cells(), factor.jitter());

    let set = simulate_observables(&factor, &p, alpha, 5, 3)?;
    for (k, d) in set.draws.iter().enumerate() {
        println!("draw {k}: boundary length {:.4}", d.boundary_length);
    }

    let report = estimate_u0_bar(&p, alpha, &spec, 4_000, 3)?;
    println!(
        "U0bar: estimate {:.4} +- {:.4}, closed {:.4}, {:?}",
        report.estimate,
        report.stderr.unwrap_or(f64::NAN),
        u0_bar(&p, alpha)?,
        report.verdict
    );
    println!("{}", report.to_json_line()?);
    Ok(())
}
