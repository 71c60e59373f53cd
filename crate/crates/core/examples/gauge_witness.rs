//! Material-derivative residual of a parabolic run along the flow map, on a
//! grid and on its refinement with the step halved alongside.

use ismf::fields::{InitialPreset, VelocityPreset, VelocitySource};
use ismf::flowmap::{gauge_material_derivative_check, integrate_flow, seed_lattice, FlowOptions, Interp};
use ismf::grid::Grid;
use ismf::parabolic::{run_parabolic, ParabolicConfig};

fn main() -> ismf::Result<()> {
    let t_end = 0.0192;
    let mut prev: Option<f64> = None;
    for (n, dt) in [(16usize, 1.28e-4), (32, 6.4e-5), (64, 3.2e-5)] {
        let g = Grid::cube(2, 1.0, n)?;
        let v = VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: 1.0 }.build(&g)?);
        let u0 = InitialPreset::TiltedCosine { alpha: 0.5, k: 1.0 }.sample(&g)?.into_field();
        let mut cfg = ParabolicConfig::new(u0, v.clone(), 0.25, dt, t_end);
        cfg.record_every = 2;
        let run = run_parabolic(&cfg)?;
        let opts = FlowOptions { dt, t_end, record_every: 2, satellite_delta: None, ..Default::default() };
        let fm = integrate_flow(&v, &seed_lattice(&g, 17), &opts)?;
        let res = gauge_material_derivative_check(&run.snapshots, &fm, &v, Interp::Cubic)?;
        let worst = res.iter().map(|r| r.1).fold(0.0, f64::max);
        match prev {
            Some(p) => println!("N = {n:>3}, dt = {dt:.1e}: residual {worst:.3e}, ratio {:.2}", p / worst),
            None => println!("N = {n:>3}, dt = {dt:.1e}: residual {worst:.3e}"),
        }
        prev = Some(worst);
    }
    Ok(())
}
