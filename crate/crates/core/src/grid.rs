//! Cell-centered boxes with homogeneous Neumann walls and the second-order
//! stencils used by every solver in the crate.
//!
//! Samples live at cell centers `x_i = (i + 1/2) h`. Ghost values outside a
//! wall are mirror reflections of the boundary cell: even reflection for
//! Neumann data, odd reflection for quantities that must vanish on the wall
//! (the normal component of an admissible velocity, a stream function). The
//! reflection rule for each component is described by a [`Closure`].

use crate::error::{Error, Result};

/// Rectangular box `[0, L_1] x ... x [0, L_m]` split into `N_1 x ... x N_m` cells.
///
/// Storage is row-major over cells with axis 0 slowest. Unused axes (for
/// `dim < 3`) carry one cell of unit length so that index arithmetic stays
/// uniform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: [f64; 3],
    cells: [usize; 3],
}

impl Grid {
    /// Smallest per-axis cell count accepted; the widest stencil reaches two cells.
    pub const MIN_CELLS: usize = 4;

    pub fn new(extents: &[f64], cells: &[usize]) -> Result<Self> {
        let dim = extents.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "grid dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if cells.len() != dim {
            return Err(Error::shape(
                format!("{dim} cell counts"),
                format!("{} cell counts", cells.len()),
            ));
        }
        let mut e = [1.0; 3];
        let mut n = [1usize; 3];
        for axis in 0..dim {
            if !(extents[axis].is_finite() && extents[axis] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "extent along axis {axis} must be positive, got {}",
                    extents[axis]
                )));
            }
            if cells[axis] < Self::MIN_CELLS {
                return Err(Error::InvalidArgument(format!(
                    "axis {axis} has {} cells; at least {} are required",
                    cells[axis],
                    Self::MIN_CELLS
                )));
            }
            e[axis] = extents[axis];
            n[axis] = cells[axis];
        }
        Ok(Self {
            dim,
            extents: e,
            cells: n,
        })
    }

    /// Cube `[0, L]^dim` with `n` cells per axis.
    pub fn cube(dim: usize, extent: f64, n: usize) -> Result<Self> {
        Self::new(&vec![extent; dim], &vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.cells[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        self.extents().iter().product()
    }

    /// Quadrature weight of one cell (midpoint rule).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.cells[axis + 1..].iter().product()
    }

    pub fn multi_index(&self, ix: usize) -> [usize; 3] {
        let mut rest = ix;
        let mut out = [0usize; 3];
        for axis in (0..3).rev() {
            out[axis] = rest % self.cells[axis];
            rest /= self.cells[axis];
        }
        out
    }

    pub fn linear_index(&self, mi: [usize; 3]) -> usize {
        (mi[0] * self.cells[1] + mi[1]) * self.cells[2] + mi[2]
    }

    /// Cell center coordinates; entries past `dim` are zero.
    pub fn center(&self, ix: usize) -> [f64; 3] {
        let mi = self.multi_index(ix);
        let mut x = [0.0; 3];
        for (axis, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = (mi[axis] as f64 + 0.5) * self.spacing(axis);
        }
        x
    }

    /// Does the point lie in the closed box inflated by `tol`?
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.dim).all(|a| x[a] >= -tol && x[a] <= self.extents[a] + tol)
    }
}

/// Reflection parity of a ghost value across a wall.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// Ghost-cell rule for every component of a field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Closure {
    /// Even mirror for every component: homogeneous Neumann data.
    Neumann,
    /// Component `j` is odd across walls normal to axis `j`, all others even:
    /// a velocity tangent to the walls.
    Tangent,
    /// Odd mirror for every component: data vanishing on the walls.
    Dirichlet,
}

impl Closure {
    pub fn parity(self, component: usize, axis: usize) -> Parity {
        match self {
            Closure::Neumann => Parity::Even,
            Closure::Dirichlet => Parity::Odd,
            Closure::Tangent if component == axis => Parity::Odd,
            Closure::Tangent => Parity::Even,
        }
    }
}

/// Component-interleaved samples at cell centers: `data[cell * ncomp + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    ncomp: usize,
    data: Vec<f64>,
}

pub type ScalarField = Field;
pub type Vec3Field = Field;
pub type VecMField = Field;

impl Field {
    pub fn zeros(grid: Grid, ncomp: usize) -> Self {
        Self {
            grid,
            ncomp,
            data: vec![0.0; grid.len() * ncomp],
        }
    }

    pub fn from_data(grid: Grid, ncomp: usize, data: Vec<f64>) -> Result<Self> {
        if ncomp == 0 {
            return Err(Error::InvalidArgument("a field needs at least one component".into()));
        }
        if data.len() != grid.len() * ncomp {
            return Err(Error::shape(grid.len() * ncomp, data.len()));
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::DegenerateData {
                cell: k / ncomp,
                reason: "non-finite value".into(),
            });
        }
        Ok(Self { grid, ncomp, data })
    }

    /// Sample `f(x, out)` at every cell center.
    pub fn from_fn(grid: Grid, ncomp: usize, mut f: impl FnMut([f64; 3], &mut [f64])) -> Self {
        let mut out = Self::zeros(grid, ncomp);
        for ix in 0..grid.len() {
            let x = grid.center(ix);
            f(x, &mut out.data[ix * ncomp..(ix + 1) * ncomp]);
        }
        out
    }

    pub fn scalar_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        Self::from_fn(grid, 1, |x, o| o[0] = f(x))
    }

    pub fn constant(grid: Grid, value: &[f64]) -> Self {
        Self::from_fn(grid, value.len(), |_, o| o.copy_from_slice(value))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, ix: usize) -> &[f64] {
        &self.data[ix * self.ncomp..(ix + 1) * self.ncomp]
    }

    pub fn at_mut(&mut self, ix: usize) -> &mut [f64] {
        &mut self.data[ix * self.ncomp..(ix + 1) * self.ncomp]
    }

    pub fn vec3(&self, ix: usize) -> [f64; 3] {
        let s = self.at(ix);
        [s[0], s[1], s[2]]
    }

    /// Extract one component as a scalar field.
    pub fn component(&self, c: usize) -> Field {
        let data = self.data.iter().skip(c).step_by(self.ncomp).copied().collect();
        Field {
            grid: self.grid,
            ncomp: 1,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn expect_on(&self, grid: &Grid) -> Result<()> {
        if &self.grid != grid {
            return Err(Error::shape(format!("{grid:?}"), format!("{:?}", self.grid)));
        }
        Ok(())
    }

    pub fn expect_ncomp(&self, ncomp: usize) -> Result<()> {
        if self.ncomp != ncomp {
            return Err(Error::shape(
                format!("{ncomp} components"),
                format!("{} components", self.ncomp),
            ));
        }
        Ok(())
    }

    pub fn expect_like(&self, other: &Field) -> Result<()> {
        self.expect_on(&other.grid)?;
        self.expect_ncomp(other.ncomp)
    }

    /// `alpha * self + beta * other`.
    pub fn lin_comb(&self, alpha: f64, other: &Field, beta: f64) -> Result<Field> {
        self.expect_like(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(Field { data, ..*self })
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        Field {
            data: self.data.iter().map(|x| alpha * x).collect(),
            ..*self
        }
    }

    pub fn axpy(&mut self, alpha: f64, x: &Field) -> Result<()> {
        self.expect_like(x)?;
        for (y, xv) in self.data.iter_mut().zip(&x.data) {
            *y += alpha * xv;
        }
        Ok(())
    }

    /// Pointwise Euclidean norm of the component vector.
    pub fn pointwise_norms(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.ncomp)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norms().into_iter().fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.expect_like(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    // value of component `c` one cell away along `axis`, mirrored at walls
    #[inline]
    fn shifted(&self, ix: usize, mi: &[usize; 3], axis: usize, c: usize, fwd: bool, parity: Parity) -> f64 {
        let n = self.grid.cells[axis];
        let stride = self.grid.stride(axis);
        let nb = if fwd {
            (mi[axis] + 1 < n).then(|| ix + stride)
        } else {
            (mi[axis] > 0).then(|| ix - stride)
        };
        match nb {
            Some(j) => self.data[j * self.ncomp + c],
            None => parity.sign() * self.data[ix * self.ncomp + c],
        }
    }
}

/// Centered first difference along `axis` with the given ghost rule.
pub fn derivative(f: &Field, axis: usize, closure: Closure) -> Field {
    let g = f.grid;
    let inv = 1.0 / (2.0 * g.spacing(axis));
    let mut out = Field::zeros(g, f.ncomp);
    for ix in 0..g.len() {
        let mi = g.multi_index(ix);
        for c in 0..f.ncomp {
            let p = closure.parity(c, axis);
            let fp = f.shifted(ix, &mi, axis, c, true, p);
            let fm = f.shifted(ix, &mi, axis, c, false, p);
            out.data[ix * f.ncomp + c] = (fp - fm) * inv;
        }
    }
    out
}

/// Centered second difference along `axis` with the given ghost rule.
pub fn second_difference(f: &Field, axis: usize, closure: Closure) -> Field {
    let g = f.grid;
    let inv = 1.0 / (g.spacing(axis) * g.spacing(axis));
    let mut out = Field::zeros(g, f.ncomp);
    for ix in 0..g.len() {
        let mi = g.multi_index(ix);
        for c in 0..f.ncomp {
            let p = closure.parity(c, axis);
            let fp = f.shifted(ix, &mi, axis, c, true, p);
            let fm = f.shifted(ix, &mi, axis, c, false, p);
            let f0 = f.data[ix * f.ncomp + c];
            out.data[ix * f.ncomp + c] = (fp - 2.0 * f0 + fm) * inv;
        }
    }
    out
}

/// Second-order Laplacian with even mirror ghosts (discrete `∂u/∂ν = 0`).
pub fn laplacian_neumann(f: &Field, g: &Grid) -> Result<Field> {
    f.expect_on(g)?;
    let mut out = Field::zeros(*g, f.ncomp);
    for axis in 0..g.dim() {
        let d2 = second_difference(f, axis, Closure::Neumann);
        out.axpy(1.0, &d2)?;
    }
    Ok(out)
}

/// Centered gradient: one field per axis, each with the input's components.
pub fn gradient(f: &Field, g: &Grid) -> Result<Vec<Field>> {
    gradient_with(f, g, Closure::Neumann)
}

pub fn gradient_with(f: &Field, g: &Grid, closure: Closure) -> Result<Vec<Field>> {
    f.expect_on(g)?;
    Ok((0..g.dim()).map(|a| derivative(f, a, closure)).collect())
}

fn expect_velocity(v: &Field, g: &Grid) -> Result<()> {
    v.expect_on(g)?;
    v.expect_ncomp(g.dim())
}

/// Centered divergence of a velocity whose normal components are reflected
/// oddly across the walls (zero wall flux).
pub fn divergence(v: &Field, g: &Grid) -> Result<Field> {
    expect_velocity(v, g)?;
    let mut out = Field::zeros(*g, 1);
    for axis in 0..g.dim() {
        let d = derivative(&v.component(axis), axis, Closure::Dirichlet);
        out.axpy(1.0, &d)?;
    }
    Ok(out)
}

/// Plain centered transport `v · ∇_h f` (Neumann ghosts for `f`).
pub fn transport(v: &Field, f: &Field, g: &Grid) -> Result<Field> {
    expect_velocity(v, g)?;
    f.expect_on(g)?;
    let nc = f.ncomp;
    let mut out = Field::zeros(*g, nc);
    for axis in 0..g.dim() {
        let d = derivative(f, axis, Closure::Neumann);
        for ix in 0..g.len() {
            let va = v.data[ix * g.dim() + axis];
            for c in 0..nc {
                out.data[ix * nc + c] += va * d.data[ix * nc + c];
            }
        }
    }
    Ok(out)
}

/// Skew-symmetric advection `½(v·∇f + div_h(v f))`.
///
/// With odd ghosts for `v`'s normal component the sum
/// `Σ <advect(v,f), f> h^m` telescopes to zero exactly.
pub fn advect(v: &Field, f: &Field, g: &Grid) -> Result<Field> {
    expect_velocity(v, g)?;
    f.expect_on(g)?;
    let nc = f.ncomp;
    let mut out = transport(v, f, g)?;
    for axis in 0..g.dim() {
        let mut flux = f.clone();
        for ix in 0..g.len() {
            let va = v.data[ix * g.dim() + axis];
            for c in 0..nc {
                flux.data[ix * nc + c] *= va;
            }
        }
        let d = derivative(&flux, axis, Closure::Dirichlet);
        out.axpy(1.0, &d)?;
    }
    for x in out.data.iter_mut() {
        *x *= 0.5;
    }
    Ok(out)
}

/// Midpoint quadrature of a scalar field.
pub fn integrate(f: &Field, g: &Grid) -> Result<f64> {
    f.expect_on(g)?;
    f.expect_ncomp(1)?;
    Ok(f.data.iter().sum::<f64>() * g.cell_volume())
}

/// L² pairing `∫ <a, b> dx` summed over components.
pub fn inner(a: &Field, b: &Field) -> Result<f64> {
    a.expect_like(b)?;
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum();
    Ok(s * a.grid.cell_volume())
}

pub fn l2_sq(f: &Field) -> f64 {
    f.data.iter().map(|x| x * x).sum::<f64>() * f.grid.cell_volume()
}

/// `∫ |∇_h f|² dx` with Neumann ghosts.
pub fn grad_l2_sq(f: &Field) -> f64 {
    (0..f.grid.dim())
        .map(|a| l2_sq(&derivative(f, a, Closure::Neumann)))
        .sum()
}

/// Largest one-sided estimate of the wall-normal derivative over all walls.
///
/// Uses the quadratic through the three cells nearest the wall, so the
/// estimate is second-order accurate: `(-2 f0 + 3 f1 - f2) / h`.
pub fn wall_normal_derivative(f: &Field) -> f64 {
    let g = f.grid;
    let nc = f.ncomp;
    let mut worst: f64 = 0.0;
    for axis in 0..g.dim() {
        let n = g.cells[axis];
        let h = g.spacing(axis);
        let stride = g.stride(axis);
        for ix in 0..g.len() {
            let mi = g.multi_index(ix);
            let step: isize = if mi[axis] == 0 {
                stride as isize
            } else if mi[axis] == n - 1 {
                -(stride as isize)
            } else {
                continue;
            };
            let i1 = (ix as isize + step) as usize;
            let i2 = (ix as isize + 2 * step) as usize;
            for c in 0..nc {
                let d = (-2.0 * f.data[ix * nc + c] + 3.0 * f.data[i1 * nc + c]
                    - f.data[i2 * nc + c])
                    / h;
                worst = worst.max(d.abs());
            }
        }
    }
    worst
}

/// Average a field onto a grid with half the cells per axis.
///
/// Fine cells `2i, 2i+1` cover coarse cell `i`, so the result is a
/// second-order accurate sample at coarse cell centers.
pub fn restrict(fine: &Field, coarse: &Grid) -> Result<Field> {
    let fg = fine.grid;
    if fg.dim() != coarse.dim()
        || (0..fg.dim()).any(|a| {
            fg.cells[a] != 2 * coarse.cells[a] || (fg.extents[a] - coarse.extents[a]).abs() > 1e-12
        })
    {
        return Err(Error::InvalidArgument(
            "restriction needs the same box with exactly twice the cells per axis".into(),
        ));
    }
    let nc = fine.ncomp;
    let mut out = Field::zeros(*coarse, nc);
    let weight = 1.0 / (1usize << fg.dim()) as f64;
    for ix in 0..fg.len() {
        let mi = fg.multi_index(ix);
        let cmi = [mi[0] / 2, if fg.dim() > 1 { mi[1] / 2 } else { 0 }, if fg.dim() > 2 { mi[2] / 2 } else { 0 }];
        let cix = coarse.linear_index(cmi);
        for c in 0..nc {
            out.data[cix * nc + c] += weight * fine.data[ix * nc + c];
        }
    }
    Ok(out)
}
