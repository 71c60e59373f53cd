//! Lagrangian flow of a stream field: volume preservation and the CSV
//! export of trajectories with their Jacobian determinants.

use ismf::fields::{VelocityPreset, VelocitySource};
use ismf::flowmap::{integrate_flow, seed_lattice, FlowOptions, Interp};
use ismf::grid::Grid;

fn main() -> ismf::Result<()> {
    let g = Grid::cube(2, 1.0, 32)?;
    let v = VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: 1.0 }.build(&g)?);
    let seeds = seed_lattice(&g, 17);
    for interp in [Interp::Multilinear, Interp::Cubic] {
        let opts = FlowOptions { interp, t_end: 0.5, record_every: 50, ..Default::default() };
        let fm = integrate_flow(&v, &seeds, &opts)?;
        println!("{:>11}: max |det Dφ - 1| = {:.3e} over {} seeds", interp.as_str(), fm.max_volume_deviation()?, seeds.len());
    }

    let opts = FlowOptions { t_end: 0.2, record_every: 100, ..Default::default() };
    let fm = integrate_flow(&v, &seeds[..3], &opts)?;
    let mut out = Vec::new();
    fm.write_csv(&mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}
