//! Inverse gamma area laws, their Laplace transforms and the cone exit kernel.

use fzzlab::closed::{area_law_alpha, area_law_qd, laplace_area};
use fzzlab::dist::{cone_duration_invgamma, moment_ratio, ConeExitKernel};
use fzzlab::rng::stream;
use fzzlab::{cone_geometry, LcftParams};

fn main() -> fzzlab::Result<()> {
    let p = LcftParams::new(1.0)?;
    let alpha = 2.0;

    let law = area_law_alpha(&p, alpha)?;
    println!("area law at unit length: shape {}, scale {}", law.shape, law.scale);
    println!("quantum disk law: {:?}", area_law_qd(&p));

    let ig = law.at_length(2.0).to_inverse_gamma();
    let mut rng = stream(7, 0);
    let n = 200_000;
    let mu = 0.5;
    let mc: f64 = (0..n).map(|_| (-mu * ig.sample(&mut rng)).exp()).sum::<f64>() / n as f64;
    println!(
        "E[exp(-mu A)] at ell=2: Bessel form {:.6}, Monte Carlo {:.6}",
        laplace_area(&p, alpha, 2.0, mu, true)?,
        mc
    );

    let g = cone_geometry(&p, alpha)?;
    println!("cone geometry: {g:?}");
    let kernel = ConeExitKernel::plain(g.theta, g.u)?;
    for r in [0.5, 1.0, 2.0] {
        println!("exit kernel pdf({r}) = {:.6}, cdf = {:.6}", kernel.pdf(r), kernel.cdf(r)?);
    }
    let eps = 0.5 * std::f64::consts::PI / g.phi;
    println!("moment ratio at eps={eps}: {:.6}", moment_ratio(g.theta, g.phi, eps)?);
    println!("duration law from radius u: {:?}", cone_duration_invgamma(g.phi, g.u)?);
    Ok(())
}
