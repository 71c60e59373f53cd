//! The truncated Neumann eigenbasis: analysis, synthesis and projection.

use std::f64::consts::PI;

use ismf::grid::{self, Field, Grid};
use ismf::spectral::SpectralBasis;

fn main() -> ismf::Result<()> {
    let g = Grid::cube(2, 1.0, 32)?;
    let basis = SpectralBasis::new(&g, 10)?;
    println!("first modes and eigenvalues of 1 - Δ:");
    for (k, lambda) in basis.modes().iter().zip(basis.eigenvalues()).take(6) {
        println!("  {:?} λ = {lambda:.4}", &k[..2]);
    }

    // a field inside the span is reproduced exactly
    let inside = Field::scalar_fn(g, |x| 2.0 + (PI * x[0]).cos() - 0.5 * (PI * x[1]).cos());
    let s = basis.analyze(&inside)?;
    let back = basis.synthesize(&s)?;
    println!("round trip of a span member: {:.1e}", back.max_abs_diff(&inside)?);

    // outside the span the projection is idempotent and shrinks the norm
    let outside = Field::scalar_fn(g, |x| (3.0 * x[0] * x[1]).exp());
    let p = basis.project(&outside)?;
    let pp = basis.project(&p)?;
    println!("|P(Pf) - Pf| = {:.1e}", pp.max_abs_diff(&p)?);
    println!("‖f‖² = {:.6}, ‖Pf‖² = {:.6}", grid::l2_sq(&outside), grid::l2_sq(&p));
    Ok(())
}
