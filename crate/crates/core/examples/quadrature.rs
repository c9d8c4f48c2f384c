//! Double-exponential rules on integrals with known values.

use fzzlab::quad::{quad_semiinfinite, tanh_sinh};
use fzzlab::specfn::gamma;

fn main() -> fzzlab::Result<()> {
    // int_0^inf t^{s-1} e^{-t} dt = Gamma(s), singular at 0 for s < 1
    for s in [0.3, 1.0, 2.7] {
        let r = quad_semiinfinite(|t: f64| t.powf(s - 1.0) * (-t).exp(), s - 1.0)?;
        println!(
            "Gamma({s}): quadrature {:.15}, closed {:.15}, {} evaluations",
            r.value,
            gamma(s)?,
            r.evaluations
        );
    }

    // int_0^1 x^{-1/2} dx = 2
    let r = tanh_sinh(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-12)?;
    println!("int_0^1 x^(-1/2) dx = {:.15} (error estimate {:.1e})", r.value, r.error_estimate);
    Ok(())
}
