//! Deterministic identity suite as newline-delimited JSON.

use fzzlab::verify::{run_suite, Suite, SuiteConfig};
use fzzlab::gmc::LatticeSpec;

fn main() -> fzzlab::Result<()> {
    let gamma = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let cfg = SuiteConfig {
        gamma,
        alpha: 2.0,
        mu: 1.0,
        mu_b: 1.0,
        seed: 0,
        n_paths: 0,
        n_draws: 0,
        lattice: LatticeSpec::boundary_small(),
        path: None,
    };
    let reports = run_suite(Suite::Identities, &cfg)?;
    for r in &reports {
        println!("{}", r.to_json_line()?);
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    eprintln!("{} checks, {failed} failed", reports.len());
    Ok(())
}
