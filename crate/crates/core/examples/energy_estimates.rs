//! Norms, velocity envelopes, and re-checking a stored report with a
//! tightened tolerance.

use std::f64::consts::PI;

use ismf::cli;
use ismf::estimates::{self, EnergyReport, Envelopes};
use ismf::fields::{InitialPreset, VelocityPreset, VelocitySource};
use ismf::galerkin::{run_galerkin, GalerkinConfig};
use ismf::grid::{Field, Grid};

fn main() -> ismf::Result<()> {
    let g = Grid::cube(2, 1.0, 64)?;
    let f = Field::scalar_fn(g, |x| (PI * x[0]).cos() * (2.0 * PI * x[1]).cos());
    let n = estimates::norms(&f, &g)?;
    println!("‖f‖² = {:.5}, ‖∇f‖² = {:.5}, ‖Δf‖² = {:.5}, ‖f‖_W13 = {:.5}", n.l2_sq, n.grad_l2_sq, n.lap_l2_sq, n.w13);
    println!("H² / (L² + ‖Δ·‖) ratio = {:.5}", estimates::h2_equivalence_ratio(&f)?);

    let g = Grid::cube(2, 1.0, 32)?;
    let v = VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: 1.0 }.build(&g)?);
    let times: Vec<f64> = (0..=5).map(|k| 0.1 * k as f64).collect();
    let env = Envelopes::from_source(&times, &v)?;
    println!("t      I(t)     S(t)     exp I");
    for k in 0..times.len() {
        println!("{:.1}  {:8.4} {:8.4} {:9.2}", times[k], env.i[k], env.s[k], env.i[k].exp());
    }

    let u0 = InitialPreset::TiltedCosine { alpha: 0.5, k: 1.0 }.sample(&g)?.into_field();
    let run = run_galerkin(&GalerkinConfig::new(u0, v, 0.1, 16, 1e-3, 0.2))?;
    let mut csv = Vec::new();
    run.report.write_csv(&mut csv)?;
    let mut stored = EnergyReport::read_csv(csv.as_slice())?;
    cli::recheck(&mut stored, &["identity=1e-14".to_string()])?;
    println!("stored report re-checked at identity = 1e-14:");
    for line in stored.summary() {
        println!("  {line}");
    }
    Ok(())
}
