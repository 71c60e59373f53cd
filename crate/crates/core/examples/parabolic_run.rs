//! The regularized sphere-valued flow with both steppers, renormalized after
//! every step.

use ismf::fields::{InitialPreset, VelocityPreset, VelocitySource};
use ismf::grid::Grid;
use ismf::parabolic::{run_parabolic, ParabolicConfig, Stepper};

fn main() -> ismf::Result<()> {
    let g = Grid::cube(2, 1.0, 32)?;
    let u0 = InitialPreset::TiltedCosine { alpha: 0.5, k: 1.0 }.sample(&g)?.into_field();
    let v = VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: 1.0 }.build(&g)?);
    for (stepper, dt) in [(Stepper::ExplicitRk4, 1.25e-4), (Stepper::SemiImplicit, 1.25e-4)] {
        let mut cfg = ParabolicConfig::new(u0.clone(), v.clone(), 0.25, dt, 0.1);
        cfg.stepper = stepper;
        cfg.record_every = 40;
        let run = run_parabolic(&cfg)?;
        let s = &run.series;
        println!("{} dt = {dt:e}: {} samples, G(0) = {:.4}, G(T) = {:.4}", stepper.as_str(), s.times.len(), s.g[0], s.g[s.g.len() - 1]);
        for line in run.report.summary() {
            println!("  {line}");
        }
    }
    Ok(())
}
