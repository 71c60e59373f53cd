//! A weak-scheme run in 1D with the estimate report, followed by the same
//! data under a stream field in 2D.

use ismf::fields::{InitialPreset, VelocityPreset, VelocitySource};
use ismf::galerkin::{run_galerkin, GalerkinConfig};
use ismf::grid::Grid;

fn main() -> ismf::Result<()> {
    let g = Grid::cube(1, 1.0, 64)?;
    let u0 = InitialPreset::TiltedCosine { alpha: 1.0, k: 1.0 }.sample(&g)?.into_field();
    let cfg = GalerkinConfig::new(u0, VelocitySource::zero(g), 0.1, 12, 5e-4, 0.5);
    let run = run_galerkin(&cfg)?;
    println!("1D, v = 0, {} modes:", run.basis.len());
    for line in run.report.summary() {
        println!("  {line}");
    }

    let g = Grid::cube(2, 1.0, 32)?;
    let u0 = InitialPreset::TiltedCosine { alpha: 0.5, k: 1.0 }.sample(&g)?.into_field();
    let v = VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: 1.0 }.build(&g)?);
    let run = run_galerkin(&GalerkinConfig::new(u0, v, 0.1, 25, 1e-3, 0.25))?;
    println!("2D, psi-sine(1, 1), {} modes:", run.basis.len());
    for line in run.report.summary() {
        println!("  {line}");
    }
    println!("  overshoot max(0, sup|u_n| - 1) = {:.3e}", run.overshoot());
    Ok(())
}
