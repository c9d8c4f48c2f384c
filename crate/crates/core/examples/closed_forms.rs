//! Closed-form one-point function and its companions at a few parameter points.

use fzzlab::closed::{mot_variance, r_bar, selberg_rhs, u0_bar, u_fzz, u_mu_zero};
use fzzlab::{Cosmology, LcftParams};

fn main() -> fzzlab::Result<()> {
    let p = LcftParams::new(1.0)?;
    println!("gamma = {}, Q = {}, theta = {}", p.gamma(), p.q(), p.theta());

    println!("U0bar(alpha=2)     = {}", u0_bar(&p, 2.0)?);
    println!("U(mu=0, mu_B=1)    = {}", u_mu_zero(&p, 2.2, 1.0)?);

    for x in [0.5, 2.0] {
        let cosmo = Cosmology::from_x(&p, 1.0, x)?;
        let u = u_fzz(&p, 2.2, &cosmo)?;
        println!("U(alpha=2.2, x={x}) = {u}  branch {:?}", cosmo.branch());
    }

    // alpha = 2 sits on a Gamma pole for gamma = 1
    match u_fzz(&p, 2.0, &Cosmology::new(&p, 1.0, 1.0)?) {
        Ok(v) => println!("unexpected value {v}"),
        Err(e) => println!("alpha = 2: {e}"),
    }

    for g in [0.5, 1.0, std::f64::consts::SQRT_2, 1.9] {
        let p = LcftParams::new(g)?;
        println!("gamma {g:.4}: Rbar = {:.6e}, variance = {:.6}", r_bar(&p)?, mot_variance(&p));
    }
    println!("Selberg n=1 at gamma=1: {}", selberg_rhs(&p, 1)?);
    Ok(())
}
