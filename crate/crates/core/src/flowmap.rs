//! Flow map `∂_t φ = γ v(φ_t(x), t)`, `φ₀ = id`, of an admissible field.
//!
//! Particles are advanced with RK4 through a point interpolant of the
//! velocity (see [`VelocityInterpolant`]). Jacobians come from satellite
//! particles started a small distance `δ` from each seed along every axis, or
//! from neighbouring seeds of a lattice.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{AdmissibleField, VelocitySource};
use crate::grid::{Closure, Field, Grid, Parity};
use crate::parabolic::Snapshot;

/// Interpolation of cell-centred data between cell centres.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interp {
    /// Tensor-product linear weights: continuous, first derivatives jump.
    Multilinear,
    /// Tensor-product Catmull–Rom cubics: continuously differentiable and
    /// third-order accurate.
    Cubic,
}

impl std::str::FromStr for Interp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "multilinear" => Ok(Interp::Multilinear),
            "cubic" => Ok(Interp::Cubic),
            other => Err(Error::InvalidArgument(format!("unknown interpolation `{other}`"))),
        }
    }
}

impl Interp {
    pub fn as_str(self) -> &'static str {
        match self {
            Interp::Multilinear => "multilinear",
            Interp::Cubic => "cubic",
        }
    }
}

/// Weights of one axis of a tensor-product interpolant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kernel {
    Linear,
    CatmullRom,
    /// Cubic B-spline; the data must be prefiltered coefficients.
    BSpline,
}

impl From<Interp> for Kernel {
    fn from(m: Interp) -> Self {
        match m {
            Interp::Multilinear => Kernel::Linear,
            Interp::Cubic => Kernel::CatmullRom,
        }
    }
}

/// Cubic B-spline weights for nodes `-1, 0, 1, 2` at offset `s ∈ [0, 1)`.
fn bspline_weights(s: f64) -> ([f64; 4], [f64; 4]) {
    let (s2, s3, r) = (s * s, s * s * s, 1.0 - s);
    (
        [
            r * r * r / 6.0,
            (3.0 * s3 - 6.0 * s2 + 4.0) / 6.0,
            (-3.0 * s3 + 3.0 * s2 + 3.0 * s + 1.0) / 6.0,
            s3 / 6.0,
        ],
        [-0.5 * r * r, 0.5 * (3.0 * s2 - 4.0 * s), 0.5 * (-3.0 * s2 + 2.0 * s + 1.0), 0.5 * s2],
    )
}

/// Cubic B-spline coefficients interpolating `f` at the cell centres, for
/// data continued across each wall by reflection with `parity(c, axis)`.
///
/// Each axis is solved as the periodic system of the reflected line (period
/// `2n`) with the causal/anticausal recursions of the pole `√3 - 2`; the
/// coefficients inherit the reflection parity.
fn bspline_prefilter(f: &Field, parity: &dyn Fn(usize, usize) -> Parity) -> Field {
    let g = *f.grid();
    let nc = f.ncomp();
    let z = 3f64.sqrt() - 2.0;
    let mut c = f.clone();
    for axis in 0..g.dim() {
        let n = g.cells()[axis];
        let m = 2 * n;
        let stride = g.stride(axis);
        let zm = z.powi(m as i32);
        let mut line = vec![0.0; m];
        let mut y = vec![0.0; m];
        for start in (0..g.len()).filter(|&ix| g.multi_index(ix)[axis] == 0) {
            for comp in 0..nc {
                let sign = if parity(comp, axis) == Parity::Odd { -1.0 } else { 1.0 };
                for j in 0..n {
                    let v = c.data()[(start + j * stride) * nc + comp];
                    line[j] = v;
                    line[m - 1 - j] = sign * v;
                }
                let mut acc = 0.0;
                let mut zk = 1.0;
                for k in 0..m {
                    acc += zk * line[(m - k) % m];
                    zk *= z;
                }
                y[0] = acc / (1.0 - zm);
                for k in 1..m {
                    y[k] = line[k] + z * y[k - 1];
                }
                let mut acc = 0.0;
                let mut zk = 1.0;
                for k in 0..m {
                    acc += zk * y[(m - 1 + k) % m];
                    zk *= z;
                }
                line[m - 1] = acc / (1.0 - zm);
                for k in (0..m - 1).rev() {
                    line[k] = y[k] + z * line[k + 1];
                }
                for j in 0..n {
                    c.data_mut()[(start + j * stride) * nc + comp] = -6.0 * z * line[j];
                }
            }
        }
    }
    c
}

/// Catmull–Rom weights for nodes `-1, 0, 1, 2` at offset `s ∈ [0, 1)`.
fn cubic_weights(s: f64) -> ([f64; 4], [f64; 4]) {
    let (s2, s3) = (s * s, s * s * s);
    (
        [
            0.5 * (-s3 + 2.0 * s2 - s),
            0.5 * (3.0 * s3 - 5.0 * s2 + 2.0),
            0.5 * (-3.0 * s3 + 4.0 * s2 + s),
            0.5 * (s3 - s2),
        ],
        [
            0.5 * (-3.0 * s2 + 4.0 * s - 1.0),
            0.5 * (9.0 * s2 - 10.0 * s),
            0.5 * (-9.0 * s2 + 8.0 * s + 1.0),
            0.5 * (3.0 * s2 - 2.0 * s),
        ],
    )
}

/// Mirror an out-of-range index back into `0..n`, returning the sign flip.
fn mirror(i: isize, n: usize, parity: Parity) -> (usize, f64) {
    let n = n as isize;
    let sign = if parity == Parity::Odd { -1.0 } else { 1.0 };
    if i < 0 {
        ((-1 - i) as usize, sign)
    } else if i >= n {
        ((2 * n - 1 - i) as usize, sign)
    } else {
        (i as usize, 1.0)
    }
}

/// Interpolated value and gradient of `f` at `x`; ghosts follow `closure`.
///
/// `grad[a * ncomp + c] = ∂_a f_c`. Points must lie within half a cell of
/// the box.
pub fn sample(f: &Field, x: &[f64], closure: Closure, mode: Interp, out: &mut [f64], grad: Option<&mut [f64]>) {
    sample_with(f, x, &|c, a| closure.parity(c, a), mode.into(), out, grad)
}

/// [`sample`] with an arbitrary ghost parity per (component, axis).
fn sample_with(
    f: &Field,
    x: &[f64],
    parity: &dyn Fn(usize, usize) -> Parity,
    kernel: Kernel,
    out: &mut [f64],
    grad: Option<&mut [f64]>,
) {
    let g = f.grid();
    let dim = g.dim();
    let nc = f.ncomp();
    let (np, lo) = match kernel {
        Kernel::Linear => (2usize, 0isize),
        Kernel::CatmullRom | Kernel::BSpline => (4usize, -1isize),
    };
    let mut base = [0isize; 3];
    let mut w = [[0.0; 4]; 3];
    let mut dw = [[0.0; 4]; 3];
    for a in 0..dim {
        let h = g.spacing(a);
        let xi = x[a] / h - 0.5;
        let i0 = xi.floor();
        let s = xi - i0;
        base[a] = i0 as isize + lo;
        let (cw, cd) = match kernel {
            Kernel::Linear => ([1.0 - s, s, 0.0, 0.0], [-1.0, 1.0, 0.0, 0.0]),
            Kernel::CatmullRom => cubic_weights(s),
            Kernel::BSpline => bspline_weights(s),
        };
        w[a] = cw;
        dw[a] = cd.map(|d| d / h);
    }
    // per-axis node indices and reflection signs; unused axes carry one node
    let mut idx = [[0usize; 4]; 3];
    let mut sign = [[[1.0f64; 4]; 3]; 3];
    let mut count = [1usize; 3];
    for a in 0..dim {
        count[a] = np;
        for k in 0..np {
            let i = base[a] + k as isize;
            idx[a][k] = mirror(i, g.cells()[a], Parity::Even).0;
            for c in 0..nc.min(3) {
                sign[c][a][k] = mirror(i, g.cells()[a], parity(c, a)).1;
            }
        }
    }
    for a in dim..3 {
        w[a][0] = 1.0;
        dw[a][0] = 0.0;
    }
    out[..nc].fill(0.0);
    let mut grad = grad;
    if let Some(gr) = grad.as_deref_mut() {
        gr[..dim * nc].fill(0.0);
    }
    let data = f.data();
    let strides = [g.stride(0), g.stride(1), g.stride(2)];
    for k0 in 0..count[0] {
        for k1 in 0..count[1] {
            for k2 in 0..count[2] {
                let ks = [k0, k1, k2];
                let cell = idx[0][k0] * strides[0] + idx[1][k1] * strides[1] + idx[2][k2] * strides[2];
                let vals = &data[cell * nc..(cell + 1) * nc];
                let wv = [w[0][k0], w[1][k1], w[2][k2]];
                let weight = wv[0] * wv[1] * wv[2];
                for (c, v) in vals.iter().enumerate() {
                    let sg = if c < 3 { sign[c][0][k0] * sign[c][1][k1] * sign[c][2][k2] } else { 1.0 };
                    out[c] += weight * sg * v;
                }
                if let Some(gr) = grad.as_deref_mut() {
                    for d in 0..dim {
                        let mut wd = dw[d][ks[d]];
                        for a in 0..3 {
                            if a != d {
                                wd *= wv[a];
                            }
                        }
                        for (c, v) in vals.iter().enumerate() {
                            let sg = if c < 3 { sign[c][0][k0] * sign[c][1][k1] * sign[c][2][k2] } else { 1.0 };
                            gr[d * nc + c] += wd * sg * v;
                        }
                    }
                }
            }
        }
    }
}

fn potential_parity(dim: usize) -> fn(usize, usize) -> Parity {
    if dim == 2 {
        |_, _| Parity::Odd
    } else {
        |c, a| if c == a { Parity::Even } else { Parity::Odd }
    }
}

/// One velocity sample prepared for point evaluation.
#[derive(Clone, Debug)]
enum Prepared {
    /// B-spline coefficients of a stream function (2D) or vector potential
    /// (3D); the velocity is the exact curl of the spline.
    Potential(Field),
    Sampled(Field, Interp),
}

impl Prepared {
    fn new(f: &AdmissibleField, mode: Interp) -> Self {
        match (mode, f.potential()) {
            (Interp::Cubic, Some(p)) => Prepared::Potential(bspline_prefilter(p, &potential_parity(p.grid().dim()))),
            _ => Prepared::Sampled(f.field().clone(), mode),
        }
    }

    fn eval(&self, x: &[f64; 3]) -> [f64; 3] {
        match self {
            Prepared::Potential(c) => {
                let dim = c.grid().dim();
                let mut val = [0.0; 3];
                let mut grad = [0.0; 9];
                sample_with(c, x, &potential_parity(dim), Kernel::BSpline, &mut val, Some(&mut grad));
                if dim == 2 {
                    [grad[1], -grad[0], 0.0]
                } else {
                    let d = |a: usize, c: usize| grad[a * 3 + c];
                    [d(1, 2) - d(2, 1), d(2, 0) - d(0, 2), d(0, 1) - d(1, 0)]
                }
            }
            Prepared::Sampled(f, mode) => {
                let mut out = [0.0; 3];
                sample(f, x, Closure::Tangent, *mode, &mut out, None);
                out
            }
        }
    }
}

/// A velocity source prepared for evaluation at arbitrary points.
///
/// In cubic mode a field built as a curl is evaluated as the curl of the
/// cubic spline of its potential, which is divergence free and wall tangent
/// at every point and continuously differentiable. Other fields are
/// interpolated directly with mirror ghosts.
#[derive(Clone, Debug)]
pub struct VelocityInterpolant {
    times: Vec<f64>,
    samples: Vec<Prepared>,
}

impl VelocityInterpolant {
    pub fn new(src: &VelocitySource, mode: Interp) -> Self {
        match src {
            VelocitySource::Static(f) => Self { times: vec![0.0], samples: vec![Prepared::new(f, mode)] },
            VelocitySource::Trajectory { times, fields } => Self {
                times: times.clone(),
                samples: fields.iter().map(|f| Prepared::new(f, mode)).collect(),
            },
        }
    }

    pub fn at(&self, x: &[f64; 3], t: f64) -> [f64; 3] {
        if self.samples.len() == 1 {
            return self.samples[0].eval(x);
        }
        let (k, w) = VelocitySource::bracket(&self.times, t);
        let a = self.samples[k].eval(x);
        if w == 0.0 {
            return a;
        }
        let b = self.samples[k + 1].eval(x);
        [0, 1, 2].map(|i| (1.0 - w) * a[i] + w * b[i])
    }
}

/// Seeds at `(i + ½) L / m` along every axis, in row-major order.
pub fn seed_lattice(grid: &Grid, per_axis: usize) -> Vec<[f64; 3]> {
    let dim = grid.dim();
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|k| {
            let mut x = [0.0; 3];
            let mut rest = k;
            for a in (0..dim).rev() {
                let i = rest % per_axis;
                rest /= per_axis;
                x[a] = (i as f64 + 0.5) * grid.extents()[a] / per_axis as f64;
            }
            x
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FlowOptions {
    pub gamma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub interp: Interp,
    /// Record positions every this many steps (the last step always).
    pub record_every: usize,
    /// Satellite offset for Jacobians; `None` integrates the seeds only.
    pub satellite_delta: Option<f64>,
    /// Escape tolerance as a fraction of the shortest box side.
    pub tol_conf: f64,
    /// `m` when the seeds form an `m^dim` lattice from [`seed_lattice`].
    pub lattice: Option<usize>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            dt: 1e-3,
            t_end: 1.0,
            interp: Interp::Cubic,
            record_every: 1,
            satellite_delta: Some(1e-5),
            tol_conf: 1e-6,
            lattice: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowMap {
    pub dim: usize,
    pub gamma: f64,
    pub seeds: Vec<[f64; 3]>,
    pub times: Vec<f64>,
    /// `positions[k][s]`: seed `s` at `times[k]`.
    pub positions: Vec<Vec<[f64; 3]>>,
    /// `satellites[k][s * 2 dim + 2 a + {0: -δ, 1: +δ}]`
    pub satellites: Option<Vec<Vec<[f64; 3]>>>,
    pub satellite_start: Option<Vec<[f64; 3]>>,
    pub lattice: Option<usize>,
}

/// Integrate every seed (and its satellites) with RK4.
pub fn integrate_flow(v: &VelocitySource, seeds: &[[f64; 3]], opts: &FlowOptions) -> Result<FlowMap> {
    let g = *v.grid();
    let dim = g.dim();
    if !(opts.dt > 0.0) || opts.record_every == 0 {
        return Err(Error::InvalidArgument("flow integration needs dt > 0 and record_every ≥ 1".into()));
    }
    let tol = opts.tol_conf * g.extents().iter().copied().fold(f64::INFINITY, f64::min);
    for (s, x) in seeds.iter().enumerate() {
        if !g.contains(x, 0.0) {
            return Err(Error::InvalidArgument(format!("seed {s} at {x:?} lies outside the box")));
        }
    }
    if let Some(m) = opts.lattice {
        if m.pow(dim as u32) != seeds.len() {
            return Err(Error::InvalidArgument(format!("{} seeds do not form a {m}^{dim} lattice", seeds.len())));
        }
    }
    let steps = (opts.t_end / opts.dt).round() as usize;
    let mut particles: Vec<(usize, [f64; 3])> = seeds.iter().copied().enumerate().collect();
    let mut satellite_start = None;
    if let Some(delta) = opts.satellite_delta {
        let mut start = Vec::with_capacity(seeds.len() * 2 * dim);
        for (s, x) in seeds.iter().enumerate() {
            for a in 0..dim {
                for sign in [-1.0, 1.0] {
                    let mut y = *x;
                    y[a] += sign * delta;
                    start.push(y);
                    particles.push((s, y));
                }
            }
        }
        satellite_start = Some(start);
    }
    let record_at: Vec<usize> = (0..=steps)
        .filter(|k| k % opts.record_every == 0 || *k == steps)
        .collect();
    let gamma = opts.gamma;
    let dt = opts.dt;
    let vel = VelocityInterpolant::new(v, opts.interp);
    let tracks: Vec<Result<Vec<[f64; 3]>>> = particles
        .par_iter()
        .map(|&(seed, x0)| {
            let mut x = x0;
            let mut track = Vec::with_capacity(record_at.len());
            track.push(x);
            let f = |y: &[f64; 3], t: f64| vel.at(y, t).map(|c| gamma * c);
            let shift = |y: &[f64; 3], k: &[f64; 3], w: f64| {
                let mut z = *y;
                for a in 0..dim {
                    z[a] += w * k[a];
                }
                z
            };
            for k in 0..steps {
                let t = k as f64 * dt;
                if gamma != 0.0 {
                    let k1 = f(&x, t);
                    let k2 = f(&shift(&x, &k1, 0.5 * dt), t + 0.5 * dt);
                    let k3 = f(&shift(&x, &k2, 0.5 * dt), t + 0.5 * dt);
                    let k4 = f(&shift(&x, &k3, dt), t + dt);
                    for a in 0..dim {
                        x[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
                    }
                }
                if !g.contains(&x, tol) || x.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Confinement { seed, time: (k + 1) as f64 * dt });
                }
                if (k + 1) % opts.record_every == 0 || k + 1 == steps {
                    track.push(x);
                }
            }
            Ok(track)
        })
        .collect();
    let mut tracks_ok = Vec::with_capacity(tracks.len());
    for t in tracks {
        tracks_ok.push(t?);
    }
    let times: Vec<f64> = record_at.iter().map(|&k| k as f64 * dt).collect();
    let ns = seeds.len();
    let positions = (0..times.len()).map(|k| tracks_ok[..ns].iter().map(|tr| tr[k]).collect()).collect();
    let satellites = opts
        .satellite_delta
        .map(|_| (0..times.len()).map(|k| tracks_ok[ns..].iter().map(|tr| tr[k]).collect()).collect());
    Ok(FlowMap {
        dim,
        gamma,
        seeds: seeds.to_vec(),
        times,
        positions,
        satellites,
        satellite_start,
        lattice: opts.lattice,
    })
}

fn det(m: &[[f64; 3]; 3], dim: usize) -> f64 {
    match dim {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

/// Per-seed Jacobian determinants and whether one-sided differences were used.
#[derive(Clone, Debug, PartialEq)]
pub struct Determinants {
    pub det: Vec<f64>,
    pub one_sided: Vec<bool>,
}

impl Determinants {
    pub fn max_deviation(&self) -> f64 {
        self.det.iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max)
    }
}

impl FlowMap {
    fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .ok_or_else(|| Error::Misaligned(format!("no flow-map sample at t = {t}")))
    }

    /// `det Dφ_t` per seed, from satellites when present, else from lattice
    /// neighbours (one-sided at the lattice edges, flagged).
    pub fn jacobian_det(&self, t: f64) -> Result<Determinants> {
        let k = self.time_index(t)?;
        self.jacobian_det_at(k)
    }

    pub fn jacobian_det_at(&self, k: usize) -> Result<Determinants> {
        let dim = self.dim;
        let ns = self.seeds.len();
        if let (Some(sat), Some(start)) = (&self.satellites, &self.satellite_start) {
            let now = &sat[k];
            let det = (0..ns)
                .map(|s| {
                    let mut m = [[0.0; 3]; 3];
                    for a in 0..dim {
                        let (lo, hi) = (s * 2 * dim + 2 * a, s * 2 * dim + 2 * a + 1);
                        let sep = start[hi][a] - start[lo][a];
                        for i in 0..dim {
                            m[i][a] = (now[hi][i] - now[lo][i]) / sep;
                        }
                    }
                    det(&m, dim)
                })
                .collect();
            return Ok(Determinants { det, one_sided: vec![false; ns] });
        }
        let m = self
            .lattice
            .ok_or_else(|| Error::InvalidArgument("Jacobians need satellites or a seed lattice".into()))?;
        let pos = &self.positions[k];
        let stride = |a: usize| m.pow((dim - 1 - a) as u32);
        let mut dets = Vec::with_capacity(ns);
        let mut flags = Vec::with_capacity(ns);
        for s in 0..ns {
            let mut mat = [[0.0; 3]; 3];
            let mut one_sided = false;
            for a in 0..dim {
                let i = (s / stride(a)) % m;
                let (lo, hi) = if i == 0 {
                    one_sided = true;
                    (s, s + stride(a))
                } else if i == m - 1 {
                    one_sided = true;
                    (s - stride(a), s)
                } else {
                    (s - stride(a), s + stride(a))
                };
                let sep = self.seeds[hi][a] - self.seeds[lo][a];
                for r in 0..dim {
                    mat[r][a] = (pos[hi][r] - pos[lo][r]) / sep;
                }
            }
            dets.push(det(&mat, dim));
            flags.push(one_sided);
        }
        Ok(Determinants { det: dets, one_sided: flags })
    }

    /// `max_t max_seeds |det Dφ_t - 1|`.
    pub fn max_volume_deviation(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in 0..self.times.len() {
            worst = worst.max(self.jacobian_det_at(k)?.max_deviation());
        }
        Ok(worst)
    }

    /// Trajectories and determinants: `seed_ix,t,x[,y[,z]],det`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["seed_ix".to_string(), "t".to_string()];
        header.extend(["x", "y", "z"][..self.dim].iter().map(|s| s.to_string()));
        header.push("det".into());
        out.write_record(&header)?;
        for k in 0..self.times.len() {
            let dets = self.jacobian_det_at(k).ok();
            for (s, p) in self.positions[k].iter().enumerate() {
                let mut row = vec![s.to_string(), self.times[k].to_string()];
                row.extend(p[..self.dim].iter().map(|x| x.to_string()));
                row.push(dets.as_ref().map(|d| d.det[s].to_string()).unwrap_or_default());
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// `max_seeds |d/dt u(φ_t(x), t) - (∂_t u + γ v·∇u)(φ_t(x), t)|` at every
/// interior snapshot, with `d/dt` by central differences between snapshots
/// and `u`, `∇u`, `∂_t u` interpolated to the particle positions.
pub fn gauge_material_derivative_check(
    snapshots: &[Snapshot],
    fm: &FlowMap,
    v: &VelocitySource,
    interp: Interp,
) -> Result<Vec<(f64, f64)>> {
    if snapshots.len() != fm.times.len() {
        return Err(Error::Misaligned(format!(
            "{} snapshots against {} flow-map samples",
            snapshots.len(),
            fm.times.len()
        )));
    }
    for (s, &t) in snapshots.iter().zip(&fm.times) {
        if (s.t - t).abs() > 1e-9 * (1.0 + t.abs()) {
            return Err(Error::Misaligned(format!("snapshot at t = {} against flow map at t = {t}", s.t)));
        }
    }
    let dim = fm.dim;
    let vel = VelocityInterpolant::new(v, interp);
    let pulled = |k: usize, s: usize| {
        let mut out = [0.0; 3];
        sample(&snapshots[k].u, &fm.positions[k][s], Closure::Neumann, interp, &mut out, None);
        out
    };
    let mut series = Vec::new();
    for k in 1..snapshots.len().saturating_sub(1) {
        let span = snapshots[k + 1].t - snapshots[k - 1].t;
        let t = snapshots[k].t;
        let worst = (0..fm.seeds.len())
            .into_par_iter()
            .map(|s| {
                let x = &fm.positions[k][s];
                let (a, b) = (pulled(k + 1, s), pulled(k - 1, s));
                let mut du = [0.0; 3];
                let mut grad = [0.0; 9];
                let mut val = [0.0; 3];
                sample(&snapshots[k].dtu, x, Closure::Neumann, interp, &mut du, None);
                sample(&snapshots[k].u, x, Closure::Neumann, interp, &mut val, Some(&mut grad));
                let vel = vel.at(x, t);
                (0..3)
                    .map(|c| {
                        let lhs = (a[c] - b[c]) / span;
                        let adv: f64 = (0..dim).map(|d| vel[d] * grad[d * 3 + c]).sum();
                        (lhs - du[c] - fm.gamma * adv).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .reduce(|| 0.0, f64::max);
        series.push((t, worst));
    }
    Ok(series)
}
