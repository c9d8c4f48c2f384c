//! Series representations against their closed or direct counterparts.

use fzzlab::specfn::{
    bessel_k, chebyshev_exact, chebyshev_generalized_auto, double_integral_series_auto, gamma, DoubleIntegralParams,
};

fn main() -> fzzlab::Result<()> {
    for (nu, x) in [(0.5, 1.0), (1.5, 0.2), (3.0, 40.0)] {
        println!("K_{nu}({x}) = {:.15e}", bessel_k(nu, x)?);
    }
    // K_{1/2}(x) = sqrt(pi/(2x)) e^{-x}
    let x: f64 = 1.0;
    println!("closed K_0.5(1)  = {:.15e}", (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp());

    for (a, x) in [(0.7, 0.4), (2.5, -0.8), (3.3, 0.0)] {
        let s = chebyshev_generalized_auto(a, x, 1e-15)?;
        println!(
            "T_{a}({x}): series {:.15} ({} terms, tail {:.1e}), exact {:.15}",
            s.value,
            s.terms,
            s.tail_bound,
            chebyshev_exact(a, x)
        );
    }

    let params = DoubleIntegralParams::new(1.0, 0.5, -0.5, 1.0)?;
    let s = double_integral_series_auto(params, 1e-15)?;
    println!("double integral series: {:.15} ({} terms)", s.value, s.terms);
    println!("Gamma(0.5)^2 = {:.15}", gamma(0.5)?.powi(2));
    Ok(())
}
