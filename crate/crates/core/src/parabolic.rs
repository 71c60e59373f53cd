//! Intrinsic parabolic scheme `∂_t u = ε τ_v(u) + u × τ_v(u)` on the grid.
//!
//! The tension field is `τ_v(u) = Δu + |∇u|² u + u × (v·∇u)`. The energy
//! density `|∇u|²` is discretized as `e_h = -<Δ_h u, u> / |u|²`, which makes
//! `Δ_h u + e_h u` the exact tangential part of `Δ_h u`; for `|u| = 1` both
//! agree with `|∇u|²` to second order, and the form-1 reconstruction of `Δ_h u`
//! from `(u, ∂_t u)` becomes an identity at the stencil level.

use std::str::FromStr;

use log::{debug, info, warn};

use crate::error::{Error, Result};
use crate::estimates::{self, EnergyReport, Envelopes, ParabolicSeries, Tolerances};
use crate::fields::{self, cross3, dot3, VelocitySource};
use crate::grid::{self, Field, Grid};

/// Energy density `e_h = -<Δ_h u, u> / |u|²` at every cell.
fn energy_density(u: &Field, lap: &Field) -> Vec<f64> {
    (0..u.grid().len())
        .map(|ix| {
            let a = u.vec3(ix);
            let r2 = dot3(a, a);
            if r2 > 0.0 {
                -dot3(lap.vec3(ix), a) / r2
            } else {
                0.0
            }
        })
        .collect()
}

/// `τ_v(u) = Δ_h u + e_h u + u × (v · ∇_h u)` with plain centered transport.
pub fn tension_v(u: &Field, v: &Field, g: &Grid) -> Result<Field> {
    u.expect_ncomp(3)?;
    let lap = grid::laplacian_neumann(u, g)?;
    let tr = grid::transport(v, u, g)?;
    let e = energy_density(u, &lap);
    let mut out = lap;
    for ix in 0..g.len() {
        let a = u.vec3(ix);
        let c = cross3(a, tr.vec3(ix));
        let o = out.at_mut(ix);
        for k in 0..3 {
            o[k] += e[ix] * a[k] + c[k];
        }
    }
    Ok(out)
}

/// `ε τ_v(u) + u × τ_v(u)`.
pub fn parabolic_rhs(u: &Field, v: &Field, eps: f64, g: &Grid) -> Result<Field> {
    let tau = tension_v(u, v, g)?;
    Ok(combine_rhs(u, &tau, eps))
}

fn combine_rhs(u: &Field, tau: &Field, eps: f64) -> Field {
    let g = *u.grid();
    let mut out = Field::zeros(g, 3);
    for ix in 0..g.len() {
        let t = tau.vec3(ix);
        let c = cross3(u.vec3(ix), t);
        let o = out.at_mut(ix);
        for k in 0..3 {
            o[k] = eps * t[k] + c[k];
        }
    }
    out
}

/// `max |<u × τ, u>|` over cells.
pub fn cross_orthogonality(u: &Field, tau: &Field) -> f64 {
    (0..u.grid().len())
        .map(|ix| {
            let a = u.vec3(ix);
            dot3(cross3(a, tau.vec3(ix)), a).abs()
        })
        .fold(0.0, f64::max)
}

/// `‖Δ_h u - R‖_{L²}` with
/// `R = (ε ∂_t u - u × ∂_t u) / (1 + ε²) - e_h u - u × (v · ∇_h u)`.
pub fn reconstruct_laplacian_residual(u: &Field, dtu: &Field, v: &Field, eps: f64, g: &Grid) -> Result<f64> {
    u.expect_ncomp(3)?;
    u.expect_like(dtu)?;
    let lap = grid::laplacian_neumann(u, g)?;
    let tr = grid::transport(v, u, g)?;
    let e = energy_density(u, &lap);
    let scale = 1.0 / (1.0 + eps * eps);
    let mut sum = 0.0;
    for ix in 0..g.len() {
        let a = u.vec3(ix);
        let d = dtu.vec3(ix);
        let ud = cross3(a, d);
        let ut = cross3(a, tr.vec3(ix));
        let l = lap.vec3(ix);
        for k in 0..3 {
            let r = scale * (eps * d[k] - ud[k]) - e[ix] * a[k] - ut[k];
            sum += (l[k] - r) * (l[k] - r);
        }
    }
    Ok((sum * g.cell_volume()).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stepper {
    ExplicitRk4,
    /// Crank–Nicolson for `εΔ` with Heun (predictor–corrector) for the rest.
    SemiImplicit,
}

impl FromStr for Stepper {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "explicit-rk4" => Ok(Stepper::ExplicitRk4),
            "semi-implicit" => Ok(Stepper::SemiImplicit),
            other => Err(Error::InvalidArgument(format!("unknown stepper `{other}`"))),
        }
    }
}

impl Stepper {
    pub fn as_str(self) -> &'static str {
        match self {
            Stepper::ExplicitRk4 => "explicit-rk4",
            Stepper::SemiImplicit => "semi-implicit",
        }
    }
}

pub const DEFAULT_GUARD: f64 = 0.2;
pub const CG_TOL: f64 = 1e-10;
/// Largest allowed one-sided normal derivative of `u₀` at the walls.
pub const DEFAULT_COMPAT_TOL: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct ParabolicConfig {
    pub eps: f64,
    pub dt: f64,
    pub t_end: f64,
    pub velocity: VelocitySource,
    pub u0: Field,
    pub renormalize: bool,
    pub stepper: Stepper,
    pub guard: f64,
    /// Diagnostics every this many steps (the last step is always recorded).
    pub record_every: usize,
    pub compat_tol: f64,
    pub tolerances: Tolerances,
}

impl ParabolicConfig {
    pub fn new(u0: Field, velocity: VelocitySource, eps: f64, dt: f64, t_end: f64) -> Self {
        Self {
            eps,
            dt,
            t_end,
            velocity,
            u0,
            renormalize: true,
            stepper: Stepper::ExplicitRk4,
            guard: DEFAULT_GUARD,
            record_every: 1,
            compat_tol: DEFAULT_COMPAT_TOL,
            tolerances: Tolerances::default(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u0.grid()
    }

    /// `guard · h² / (1 + ε)`.
    pub fn max_stable_dt(&self) -> f64 {
        let h = self.grid().min_spacing();
        self.guard * h * h / (1.0 + self.eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1], got {}", self.eps)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        if self.stepper == Stepper::ExplicitRk4 && self.dt > self.max_stable_dt() {
            return Err(Error::InvalidArgument(format!(
                "dt = {} exceeds the explicit stability guard {:.4e}",
                self.dt,
                self.max_stable_dt()
            )));
        }
        fields::SpinField::new(self.u0.clone(), fields::SphereMode::ExactSphere)?;
        self.velocity.field_at(0.0).expect_on(self.grid())?;
        let trace = grid::wall_normal_derivative(&self.u0);
        if trace > self.compat_tol {
            return Err(Error::InvalidArgument(format!(
                "initial data violates the Neumann compatibility condition: wall normal derivative {trace:.3e} > {:.3e}",
                self.compat_tol
            )));
        }
        Ok(())
    }
}

/// Where and why a run stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct BlowUp {
    pub time: f64,
    pub last_valid: f64,
    pub reason: String,
}

impl From<BlowUp> for Error {
    fn from(b: BlowUp) -> Self {
        Error::BlowUp { time: b.time, last_valid: b.last_valid, reason: b.reason }
    }
}

/// Solve `(I - α Δ_h) x = b` (Neumann ghosts) by conjugate gradients.
pub fn solve_helmholtz(b: &Field, alpha: f64, x0: &Field, tol: f64) -> Result<(Field, usize)> {
    let g = *b.grid();
    let apply = |x: &Field| -> Result<Field> {
        let lap = grid::laplacian_neumann(x, &g)?;
        x.lin_comb(1.0, &lap, -alpha)
    };
    let dot = |a: &Field, c: &Field| -> f64 { a.data().iter().zip(c.data()).map(|(p, q)| p * q).sum() };
    let bnorm = dot(b, b).sqrt();
    let mut x = x0.clone();
    if bnorm == 0.0 {
        return Ok((Field::zeros(g, b.ncomp()), 0));
    }
    let mut r = b.lin_comb(1.0, &apply(&x)?, -1.0)?;
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let max_iter = 10 * g.len() * b.ncomp();
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok((x, it));
        }
        let ap = apply(&p)?;
        let step = rr / dot(&p, &ap);
        x.axpy(step, &p)?;
        r.axpy(-step, &ap)?;
        let rr_next = dot(&r, &r);
        p = r.lin_comb(1.0, &p, rr_next / rr)?;
        rr = rr_next;
    }
    if rr.sqrt() <= tol * bnorm {
        return Ok((x, max_iter));
    }
    Err(Error::CgNotConverged { iterations: max_iter, residual: rr.sqrt() / bnorm })
}

/// One step from `(u, t)`; renormalizes afterwards when configured.
///
/// Returns the new field and the sphere drift before renormalization.
pub fn step(u: &Field, cfg: &ParabolicConfig, t: f64) -> Result<(Field, f64)> {
    let g = *u.grid();
    let dt = cfg.dt;
    let f = |x: &Field, s: f64| parabolic_rhs(x, &cfg.velocity.field_at(s), cfg.eps, &g);
    let mut next = match cfg.stepper {
        Stepper::ExplicitRk4 => {
            let k1 = f(u, t)?;
            let k2 = f(&u.lin_comb(1.0, &k1, 0.5 * dt)?, t + 0.5 * dt)?;
            let k3 = f(&u.lin_comb(1.0, &k2, 0.5 * dt)?, t + 0.5 * dt)?;
            let k4 = f(&u.lin_comb(1.0, &k3, dt)?, t + dt)?;
            let mut out = u.clone();
            out.axpy(dt / 6.0, &k1)?;
            out.axpy(dt / 3.0, &k2)?;
            out.axpy(dt / 3.0, &k3)?;
            out.axpy(dt / 6.0, &k4)?;
            out
        }
        Stepper::SemiImplicit => {
            let alpha = 0.5 * dt * cfg.eps;
            // N(u) = rhs(u) - εΔ_h u, treated explicitly
            let explicit = |x: &Field, s: f64| -> Result<Field> {
                let lap = grid::laplacian_neumann(x, &g)?;
                f(x, s)?.lin_comb(1.0, &lap, -cfg.eps)
            };
            let lap_u = grid::laplacian_neumann(u, &g)?;
            let half = u.lin_comb(1.0, &lap_u, alpha)?;
            let n0 = explicit(u, t)?;
            let (pred, _) = solve_helmholtz(&half.lin_comb(1.0, &n0, dt)?, alpha, u, CG_TOL)?;
            let n1 = explicit(&pred, t + dt)?;
            let mut b = half;
            b.axpy(0.5 * dt, &n0)?;
            b.axpy(0.5 * dt, &n1)?;
            solve_helmholtz(&b, alpha, &pred, CG_TOL)?.0
        }
    };
    let drift = fields::sphere_drift(&next);
    if cfg.renormalize && next.is_finite() {
        fields::normalize_in_place(&mut next)?;
    }
    Ok((next, drift))
}

fn detect_blowup(u: &Field, drift: f64) -> Option<String> {
    if !u.is_finite() || !drift.is_finite() {
        return Some("non-finite values".into());
    }
    let g = *u.grid();
    for a in 0..g.dim() {
        let d = grid::derivative(u, a, grid::Closure::Neumann);
        let s = d.pointwise_norms().into_iter().fold(0.0, f64::max) * g.spacing(a);
        if s > 10.0 {
            return Some(format!("sup |∇_h u| h = {s:.3e} > 10"));
        }
    }
    if drift > 0.5 {
        return Some(format!("sphere drift {drift:.3e} > 0.5 within one step"));
    }
    None
}

/// Diagnostics of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: Field,
    /// `∂_t u` from the right-hand side.
    pub dtu: Field,
}

#[derive(Clone, Debug)]
pub struct ParabolicRun {
    pub series: ParabolicSeries,
    pub report: EnergyReport,
    pub snapshots: Vec<Snapshot>,
    pub blowup: Option<BlowUp>,
    /// Largest sphere drift observed before renormalization in any step.
    pub max_step_drift: f64,
}

impl ParabolicRun {
    pub fn final_field(&self) -> &Field {
        &self.snapshots.last().expect("at least the initial snapshot").u
    }
}

fn record(series: &mut ParabolicSeries, snaps: &mut Vec<Snapshot>, cfg: &ParabolicConfig, u: &Field, t: f64, drift: f64) -> Result<()> {
    let g = *u.grid();
    let vf = cfg.velocity.field_at(t);
    let tau = tension_v(u, &vf, &g)?;
    let dtu = combine_rhs(u, &tau, cfg.eps);
    let nu = estimates::norms(u, &g)?;
    let nd = estimates::norms(&dtu, &g)?;
    let w13 = estimates::sample_velocity(&cfg.velocity, t).w13;
    series.times.push(t);
    series.h1_sq.push(nu.h1_sq);
    series.h2_surrogate_sq.push(nu.h2_surrogate_sq);
    series.dtu_h1_sq.push(nd.h1_sq);
    series.g.push(estimates::functional_g(&nu, &nd, cfg.eps));
    series.form1_residual.push(reconstruct_laplacian_residual(u, &dtu, &vf, cfg.eps, &g)?);
    series.lap_norm.push(nu.lap_l2_sq.sqrt());
    series.equ_norm_ratio.push(estimates::equ_norm_ratio(&nu, &nd, w13));
    series.sphere_drift.push(drift);
    series.orth.push(cross_orthogonality(u, &tau));
    series.trace.push(grid::wall_normal_derivative(&dtu));
    snaps.push(Snapshot { t, u: u.clone(), dtu });
    Ok(())
}

/// Integrate to `t_end` or until blow-up and evaluate the diagnostics.
pub fn run_parabolic(cfg: &ParabolicConfig) -> Result<ParabolicRun> {
    cfg.validate()?;
    let tol = &cfg.tolerances;
    cfg.velocity.certify(tol.tol_div, tol.tol_bc)?;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    if ((steps as f64) * cfg.dt - cfg.t_end).abs() > 1e-9 * cfg.t_end.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "t_end = {} is not a whole number of steps of dt = {}",
            cfg.t_end, cfg.dt
        )));
    }
    info!("parabolic: {steps} steps of dt = {} ({:?})", cfg.dt, cfg.stepper);
    let mut series = ParabolicSeries::default();
    let mut snapshots = Vec::new();
    let mut u = cfg.u0.clone();
    record(&mut series, &mut snapshots, cfg, &u, 0.0, fields::sphere_drift(&u))?;
    let mut blowup = None;
    let mut max_step_drift: f64 = 0.0;
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let t_next = (k + 1) as f64 * cfg.dt;
        let (next, pre_drift) = match step(&u, cfg, t) {
            Ok(x) => x,
            Err(Error::DegenerateData { reason, .. }) => {
                blowup = Some(BlowUp { time: t_next, last_valid: t, reason });
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(reason) = detect_blowup(&next, pre_drift) {
            warn!("parabolic: blow-up at t = {t_next} ({reason})");
            blowup = Some(BlowUp { time: t_next, last_valid: t, reason });
            break;
        }
        max_step_drift = max_step_drift.max(pre_drift);
        u = next;
        if (k + 1) % cfg.record_every == 0 || k + 1 == steps {
            record(&mut series, &mut snapshots, cfg, &u, t_next, fields::sphere_drift(&u))?;
        }
        if (k + 1) % 500 == 0 {
            debug!("parabolic: t = {t_next:.4}, G = {:.6e}", series.g.last().copied().unwrap_or(f64::NAN));
        }
    }
    let env = Envelopes::from_source(&series.times, &cfg.velocity)?;
    let report = estimates::check_parabolic_bounds(&series, &env, cfg.renormalize, tol)?;
    Ok(ParabolicRun { series, report, snapshots, blowup, max_step_drift })
}
