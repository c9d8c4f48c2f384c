//! CSV dumps of cone splits and lattice observables, with JSON sidecars.

use fzzlab::conesim::PathConfig;
use fzzlab::gmc::{build_covariance, simulate_observables, LatticeSpec};
use fzzlab::verify::cone_pool;
use fzzlab::{cone_geometry, LcftParams};

fn main() -> fzzlab::Result<()> {
    let dir = std::env::temp_dir().join("fzzlab-dumps");
    std::fs::create_dir_all(&dir)?;
    let p = LcftParams::new(1.0)?;

    let u = cone_geometry(&p, 2.0)?.u;
    let cfg = PathConfig {
        dt: 1e-3 * u * u,
        ..PathConfig::reference(u)
    };
    let cone_csv = dir.join("cone.csv");
    cone_pool(&p, 2.0, 200, 5, Some(cfg))?.dump(&cone_csv)?;

    let gmc_csv = dir.join("gmc.csv");
    let factor = build_covariance(&LatticeSpec::boundary_small())?;
    simulate_observables(&factor, &p, 2.0, 200, 5)?.dump(&gmc_csv)?;

    for path in [&cone_csv, &gmc_csv] {
        let text = std::fs::read_to_string(path)?;
        println!("{}: {} rows", path.display(), text.lines().count() - 1);
        for line in text.lines().take(3) {
            println!("  {line}");
        }
    }
    Ok(())
}
