//! Second-order convergence of the Neumann Laplacian, the gradient and the
//! skew-symmetric advection on a cosine field.

use std::f64::consts::PI;

use ismf::grid::{self, Field, Grid};

fn main() -> ismf::Result<()> {
    let f = |g: Grid| Field::scalar_fn(g, |x| (PI * x[0]).cos() * (2.0 * PI * x[1]).cos());
    let mut prev: Option<[f64; 3]> = None;
    println!("{:>5} {:>12} {:>12} {:>12}", "N", "laplacian", "gradient", "advection");
    for n in [16, 32, 64, 128] {
        let g = Grid::cube(2, 1.0, n)?;
        let u = f(g);
        let lap = grid::laplacian_neumann(&u, &g)?;
        let exact_lap = u.scaled(-5.0 * PI * PI);
        let d = grid::gradient(&u, &g)?;
        let exact_dx = Field::scalar_fn(g, |x| -PI * (PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
        // v = (sin πx, 0) vanishes on the walls x = 0, 1
        let v = Field::from_fn(g, 2, |x, o| {
            o[0] = (PI * x[0]).sin();
            o[1] = 0.0;
        });
        let adv = grid::advect(&v, &u, &g)?;
        let exact_adv = Field::scalar_fn(g, |x| {
            let vx = (PI * x[0]).sin();
            let ux = -PI * (PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
            let div = PI * (PI * x[0]).cos();
            // ½(v·∇u + ∇·(vu)) = v·∇u + ½ u ∇·v
            vx * ux + 0.5 * div * (PI * x[0]).cos() * (2.0 * PI * x[1]).cos()
        });
        let e = [
            lap.max_abs_diff(&exact_lap)?,
            d[0].max_abs_diff(&exact_dx)?,
            adv.max_abs_diff(&exact_adv)?,
        ];
        match prev {
            Some(p) => println!(
                "{n:>5} {:>12.3e} {:>12.3e} {:>12.3e}   ratios {:.2} {:.2} {:.2}",
                e[0], e[1], e[2], p[0] / e[0], p[1] / e[1], p[2] / e[2]
            ),
            None => println!("{n:>5} {:>12.3e} {:>12.3e} {:>12.3e}", e[0], e[1], e[2]),
        }
        prev = Some(e);
    }
    Ok(())
}
