//! Divergence-free, wall-tangent velocities built from potentials, and the
//! certificate that accompanies them.

use std::f64::consts::PI;

use ismf::fields::{self, VelocityPreset};
use ismf::grid::Grid;

fn main() -> ismf::Result<()> {
    let g = Grid::cube(2, 1.0, 32)?;
    let v = VelocityPreset::PsiSine { k: 1.0, l: 2.0, amplitude: 0.5 }.build(&g)?;
    let c = v.certificate();
    println!("2D psi-sine(1, 2): max div {:.1e}, max normal trace {:.1e}", c.max_div, c.max_normal_trace);
    println!("  ‖v‖∞ = {:.4}, ‖∇v‖∞ = {:.4}, ‖v‖_W13 = {:.4}", c.sup, c.grad_sup, c.w13());

    let g3 = Grid::new(&[1.0, 1.0, 2.0], &[12, 12, 24])?;
    let a = fields::vector_potential_field_3d_fn(g3, |x| {
        let s = |k: f64, y: f64| (k * PI * y).sin();
        [0.0, s(1.0, x[0]) * s(1.0, x[2] / 2.0), s(1.0, x[0]) * s(1.0, x[1])]
    })?;
    let c = a.certificate();
    println!("3D vector potential: passes = {}, max div {:.1e}, ‖∇v‖∞ = {:.4}", c.passes(), c.max_div, c.grad_sup);

    // a scaled copy keeps its certificate valid
    let half = v.scaled(0.5);
    println!("scaled by ½: ‖v‖∞ = {:.4}, recheck passes = {}", half.certificate().sup, half.recheck(1e-10, 1e-10).passes());
    Ok(())
}
