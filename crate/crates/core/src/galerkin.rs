//! Weak scheme: the ε-regularized Galerkin system with clipped precession
//!
//! `∂_t u_n = εΔu_n + P_n(J(u_n) × Δu_n - v·∇u_n)`, `u_n(0) = P_n u₀`,
//!
//! integrated with classical RK4 on the coefficients. The running time
//! integrals entering the estimates are carried as extra ODE components so
//! they share the integrator's accuracy.

use log::{debug, info};

use crate::error::{Error, Result};
use crate::estimates::{self, EnergyReport, Envelopes, InitialData, Tolerances, WeakSeries};
use crate::fields::{cross3, VelocitySource};
use crate::grid::{self, Field, Grid};
use crate::spectral::{self, SpectralBasis, SpectralState};

/// `J(u) = u / max(1, |u|)` at every cell.
pub fn clip_j(u: &Field) -> Field {
    let mut out = u.clone();
    for ix in 0..u.grid().len() {
        let c = out.at_mut(ix);
        let r = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1.0 {
            for x in c.iter_mut() {
                *x /= r;
            }
        }
    }
    out
}

/// Switches for the three right-hand-side terms; all on by default.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub diffusion: bool,
    pub precession: bool,
    pub advection: bool,
}

impl Default for Terms {
    fn default() -> Self {
        Self { diffusion: true, precession: true, advection: true }
    }
}

#[derive(Clone, Debug)]
pub struct GalerkinConfig {
    pub eps: f64,
    pub modes: usize,
    pub dt: f64,
    pub t_end: f64,
    pub velocity: VelocitySource,
    /// Initial data sampled at cell centers (three components).
    pub u0: Field,
    pub guard: f64,
    pub terms: Terms,
    pub tolerances: Tolerances,
}

pub const DEFAULT_GUARD: f64 = 1.0;

impl GalerkinConfig {
    pub fn new(u0: Field, velocity: VelocitySource, eps: f64, modes: usize, dt: f64, t_end: f64) -> Self {
        Self {
            eps,
            modes,
            dt,
            t_end,
            velocity,
            u0,
            guard: DEFAULT_GUARD,
            terms: Terms::default(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u0.grid()
    }

    /// Largest step allowed by the explicit stability heuristic.
    pub fn max_stable_dt(&self, lambda_max: f64) -> f64 {
        let g = self.grid();
        let inv_h = (0..g.dim()).map(|a| 1.0 / g.spacing(a)).fold(0.0, f64::max);
        self.guard / (self.eps * lambda_max + self.velocity.max_sup() * inv_h + lambda_max)
    }

    pub fn validate(&self, lambda_max: f64) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1], got {}", self.eps)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        self.u0.expect_ncomp(3)?;
        self.velocity.field_at(0.0).expect_on(self.grid())?;
        let limit = self.max_stable_dt(lambda_max);
        if self.dt > limit {
            return Err(Error::InvalidArgument(format!(
                "dt = {} exceeds the stability guard {limit:.4e}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// The integrator: basis, velocity and switches.
pub struct GalerkinSystem<'a> {
    pub basis: SpectralBasis,
    cfg: &'a GalerkinConfig,
}

/// Derivatives of the coefficients and of the carried time integrals.
struct Rates {
    dg: Vec<f64>,
    diss: f64,
    lap_diss: f64,
    dtu: f64,
}

impl<'a> GalerkinSystem<'a> {
    pub fn new(cfg: &'a GalerkinConfig) -> Result<Self> {
        let basis = SpectralBasis::new(cfg.grid(), cfg.modes)?;
        cfg.validate(basis.lambda_max())?;
        Ok(Self { basis, cfg })
    }

    /// `dg/dt` at state `g` and time `t`.
    pub fn rhs(&self, s: &SpectralState, t: f64) -> Result<Vec<f64>> {
        Ok(self.rates(&s.coeffs, t)?.dg)
    }

    fn rates(&self, coeffs: &[f64], t: f64) -> Result<Rates> {
        let cfg = self.cfg;
        let b = &self.basis;
        let s = SpectralState { coeffs: coeffs.to_vec(), ncomp: 3, t };
        let mut dg = vec![0.0; coeffs.len()];
        if cfg.terms.precession || cfg.terms.advection {
            let g = *b.grid();
            let u = b.synthesize(&s)?;
            let mut nonlinear = Field::zeros(g, 3);
            if cfg.terms.precession {
                let lap = b.synthesize_weighted(&s, |m| 1.0 - b.eigenvalues()[m])?;
                let j = clip_j(&u);
                for ix in 0..g.len() {
                    nonlinear.at_mut(ix).copy_from_slice(&cross3(j.vec3(ix), lap.vec3(ix)));
                }
            }
            if cfg.terms.advection {
                let v = cfg.velocity.field_at(t);
                let adv = grid::advect(&v, &u, &g)?;
                nonlinear.axpy(-1.0, &adv)?;
            }
            dg = b.analyze(&nonlinear)?.coeffs;
        }
        if cfg.terms.diffusion {
            for (m, lam) in b.eigenvalues().iter().enumerate() {
                for c in 0..3 {
                    dg[m * 3 + c] -= cfg.eps * (lam - 1.0) * coeffs[m * 3 + c];
                }
            }
        }
        Ok(Rates {
            diss: 2.0 * cfg.eps * b.weighted_sq(&s, 1),
            lap_diss: 2.0 * cfg.eps * b.weighted_sq(&s, 2),
            dtu: dg.iter().map(|x| x * x).sum(),
            dg,
        })
    }

    /// One classical RK4 step of the coefficients alone.
    pub fn step_rk4(&self, s: &SpectralState, dt: f64) -> Result<SpectralState> {
        let (next, _) = self.step_augmented(s, [0.0; 3], dt)?;
        Ok(next)
    }

    fn step_augmented(&self, s: &SpectralState, acc: [f64; 3], dt: f64) -> Result<(SpectralState, [f64; 3])> {
        let t = s.t;
        let g0 = &s.coeffs;
        let shifted = |k: &Rates, w: f64| -> Vec<f64> { g0.iter().zip(&k.dg).map(|(x, d)| x + w * d).collect() };
        let k1 = self.rates(g0, t)?;
        let k2 = self.rates(&shifted(&k1, 0.5 * dt), t + 0.5 * dt)?;
        let k3 = self.rates(&shifted(&k2, 0.5 * dt), t + 0.5 * dt)?;
        let k4 = self.rates(&shifted(&k3, dt), t + dt)?;
        let coeffs: Vec<f64> = (0..g0.len())
            .map(|i| g0[i] + dt / 6.0 * (k1.dg[i] + 2.0 * k2.dg[i] + 2.0 * k3.dg[i] + k4.dg[i]))
            .collect();
        let combine = |f: fn(&Rates) -> f64| dt / 6.0 * (f(&k1) + 2.0 * f(&k2) + 2.0 * f(&k3) + f(&k4));
        let acc = [
            acc[0] + combine(|r| r.diss),
            acc[1] + combine(|r| r.lap_diss),
            acc[2] + combine(|r| r.dtu),
        ];
        let next = SpectralState { coeffs, ncomp: 3, t: t + dt };
        if !next.is_finite() {
            return Err(Error::BlowUp { time: t + dt, last_valid: t, reason: "non-finite coefficients".into() });
        }
        Ok((next, acc))
    }
}

/// A finished weak-scheme run.
#[derive(Clone, Debug)]
pub struct GalerkinRun {
    pub basis: SpectralBasis,
    pub eps: f64,
    pub times: Vec<f64>,
    pub states: Vec<SpectralState>,
    pub series: WeakSeries,
    pub init: InitialData,
    pub report: EnergyReport,
}

impl GalerkinRun {
    pub fn field(&self, k: usize) -> Result<Field> {
        self.basis.synthesize(&self.states[k])
    }

    pub fn final_field(&self) -> Result<Field> {
        self.field(self.states.len() - 1)
    }

    /// `exp(I(t)) ∫|∇u₀|² + ∫|u₀|²` at every recorded time.
    pub fn h1_bound_envelope(&self) -> Vec<f64> {
        self.report
            .envelopes
            .i
            .iter()
            .map(|i| i.exp() * self.init.grad_l2_sq + self.init.l2_sq)
            .collect()
    }

    /// Largest `|u_n|` over cells and recorded times.
    pub fn sup_abs(&self) -> f64 {
        self.series.sup_abs.iter().copied().fold(0.0, f64::max)
    }

    /// `max(0, sup |u_n| - 1)`.
    pub fn overshoot(&self) -> f64 {
        (self.sup_abs() - 1.0).max(0.0)
    }
}

/// Integrate to `t_end`, recording every step, and check the weak bounds.
pub fn run_galerkin(cfg: &GalerkinConfig) -> Result<GalerkinRun> {
    let sys = GalerkinSystem::new(cfg)?;
    let tol = &cfg.tolerances;
    cfg.velocity.certify(tol.tol_div, tol.tol_bc)?;
    let b = &sys.basis;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    if ((steps as f64) * cfg.dt - cfg.t_end).abs() > 1e-9 * cfg.t_end.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "t_end = {} is not a whole number of steps of dt = {}",
            cfg.t_end, cfg.dt
        )));
    }
    info!("galerkin: {} modes, {steps} steps of dt = {}", b.len(), cfg.dt);

    let mut state = b.analyze(&cfg.u0)?;
    let init = InitialData {
        l2_sq: grid::l2_sq(&cfg.u0),
        grad_l2_sq: spectral::cosine_grad_energy(&cfg.u0),
        projected_l2_sq: state.norm_sq(),
    };
    let mut series = WeakSeries::default();
    let mut states = Vec::with_capacity(steps + 1);
    let mut acc = [0.0; 3];
    let push = |s: &SpectralState, acc: [f64; 3], series: &mut WeakSeries| -> Result<()> {
        let u = b.synthesize(s)?;
        series.times.push(s.t);
        series.l2_sq.push(s.norm_sq());
        series.grad_l2_sq.push(b.weighted_sq(s, 1));
        series.sup_abs.push(u.pointwise_norms().into_iter().fold(0.0, f64::max));
        series.diss_accum.push(acc[0]);
        series.lap_diss_accum.push(acc[1]);
        series.dtu_accum.push(acc[2]);
        Ok(())
    };
    push(&state, acc, &mut series)?;
    states.push(state.clone());
    for k in 0..steps {
        let (mut next, a) = sys.step_augmented(&state, acc, cfg.dt)?;
        // pin the clock to the step grid so sample times are exact multiples
        next.t = (k + 1) as f64 * cfg.dt;
        state = next;
        acc = a;
        push(&state, acc, &mut series)?;
        states.push(state.clone());
        if (k + 1) % 100 == 0 {
            debug!("galerkin: t = {:.4}, |g|² = {:.10e}", state.t, state.norm_sq());
        }
    }
    let env = Envelopes::from_source(&series.times, &cfg.velocity)?;
    let report = estimates::check_weak_bounds(&series, &init, &env, cfg.eps, tol)?;
    Ok(GalerkinRun {
        basis: sys.basis.clone(),
        eps: cfg.eps,
        times: series.times.clone(),
        states,
        series,
        init,
        report,
    })
}

/// `sup_t ‖u_a(t) - u_b(t)‖_{L²}` over common sample times.
///
/// Runs on the same grid are compared through their coefficients (the
/// smaller basis is a prefix of the larger one); a run on a grid with twice
/// the cells per axis is averaged onto the coarser grid first.
pub fn cauchy_sup_l2(a: &GalerkinRun, b: &GalerkinRun) -> Result<f64> {
    let (ga, gb) = (a.basis.grid(), b.basis.grid());
    let mut worst: f64 = 0.0;
    let mut j = 0;
    for (i, &t) in a.times.iter().enumerate() {
        while j < b.times.len() && b.times[j] < t - 1e-12 {
            j += 1;
        }
        if j == b.times.len() {
            break;
        }
        if (b.times[j] - t).abs() > 1e-12 {
            continue;
        }
        let d = if ga == gb {
            let (x, y) = (&a.states[i].coeffs, &b.states[j].coeffs);
            let n = x.len().max(y.len());
            (0..n)
                .map(|k| {
                    let d = x.get(k).copied().unwrap_or(0.0) - y.get(k).copied().unwrap_or(0.0);
                    d * d
                })
                .sum::<f64>()
        } else {
            let (fa, fb) = (a.field(i)?, b.field(j)?);
            let (coarse, fine) = if ga.len() < gb.len() { (fa, fb) } else { (fb, fa) };
            let r = grid::restrict(&fine, coarse.grid())?;
            grid::l2_sq(&r.lin_comb(1.0, &coarse, -1.0)?)
        };
        worst = worst.max(d.sqrt());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{InitialPreset, VelocityPreset};
    use std::f64::consts::PI;

    fn tilted(g: Grid, alpha: f64) -> Field {
        InitialPreset::TiltedCosine { alpha, k: 1.0 }.sample(&g).unwrap().into_field()
    }

    #[test]
    fn clip_examples() {
        let g = Grid::cube(1, 1.0, 4).unwrap();
        let check = |input: [f64; 3], expect: [f64; 3]| {
            let out = clip_j(&Field::constant(g, &input));
            for c in 0..3 {
                assert!((out.at(1)[c] - expect[c]).abs() < 1e-15);
            }
        };
        check([0.0, 0.0, 2.0], [0.0, 0.0, 1.0]);
        check([0.3, 0.0, 0.0], [0.3, 0.0, 0.0]);
        check([3.0, 4.0, 0.0], [0.6, 0.8, 0.0]);
    }

    #[test]
    fn constant_state_is_stationary() {
        let g = Grid::cube(2, 1.0, 8).unwrap();
        let u0 = Field::constant(g, &[0.0, 0.6, 0.8]);
        let v = VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: 1.0 }.build(&g).unwrap());
        let cfg = GalerkinConfig::new(u0.clone(), v, 0.1, 10, 1e-3, 0.05);
        let sys = GalerkinSystem::new(&cfg).unwrap();
        let s = sys.basis.analyze(&u0).unwrap();
        assert!(sys.rhs(&s, 0.0).unwrap().iter().all(|x| x.abs() < 1e-12));
        let run = run_galerkin(&cfg).unwrap();
        assert!(run.final_field().unwrap().max_abs_diff(&u0).unwrap() < 1e-10);
        assert!(run.report.all_hard_pass(), "{:?}", run.report.summary());
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = Grid::cube(1, PI, 16).unwrap();
        let cfg = GalerkinConfig::new(Field::zeros(g, 3), VelocitySource::zero(g), 0.1, 8, 1e-3, 0.01);
        let sys = GalerkinSystem::new(&cfg).unwrap();
        let s = SpectralState::zeros(8, 3);
        assert_eq!(sys.step_rk4(&s, 1e-3).unwrap().coeffs, s.coeffs);
    }

    #[test]
    fn small_single_mode_decays_linearly() {
        // u = δ mode_k e: J(u) ∥ u ∥ Δu, so the cross term vanishes to O(δ²)
        let g = Grid::cube(1, PI, 32).unwrap();
        let delta = 1e-3;
        let cfg = GalerkinConfig::new(Field::zeros(g, 3), VelocitySource::zero(g), 0.2, 8, 1e-3, 0.0);
        let sys = GalerkinSystem::new(&cfg).unwrap();
        let k = 3;
        let mut s = SpectralState::zeros(8, 3);
        s.coeffs[k * 3] = delta * 0.6;
        s.coeffs[k * 3 + 2] = delta * 0.8;
        let dg = sys.rhs(&s, 0.0).unwrap();
        let lam = sys.basis.eigenvalues()[k];
        let mut remainder: f64 = 0.0;
        for (i, d) in dg.iter().enumerate() {
            let linear = -0.2 * (sys.basis.eigenvalues()[i / 3] - 1.0) * s.coeffs[i];
            remainder = remainder.max((d - linear).abs());
        }
        assert!(remainder <= delta * delta, "{remainder}");
        assert!((dg[k * 3] + 0.2 * (lam - 1.0) * 0.6 * delta).abs() <= delta * delta);
    }

    #[test]
    fn nonlinear_terms_are_orthogonal_to_the_state() {
        let g = Grid::cube(2, 1.0, 16).unwrap();
        let u0 = InitialPreset::RandomSmooth { seed: 5, modes: 3 }.sample(&g).unwrap().into_field();
        let v = VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: 1.0 }.build(&g).unwrap());
        let mut cfg = GalerkinConfig::new(u0.clone(), v, 0.1, 20, 1e-4, 0.0);
        cfg.terms.diffusion = false;
        let sys = GalerkinSystem::new(&cfg).unwrap();
        let s = sys.basis.analyze(&u0).unwrap();
        let dg = sys.rhs(&s, 0.0).unwrap();
        let pairing: f64 = dg.iter().zip(&s.coeffs).map(|(a, b)| a * b).sum();
        let scale: f64 = dg.iter().map(|x| x * x).sum::<f64>().sqrt() * s.norm_sq().sqrt();
        assert!(pairing.abs() <= 1e-12 * scale, "{pairing} vs {scale}");
    }

    #[test]
    fn pure_diffusion_matches_exponential() {
        let g = Grid::cube(1, PI, 32).unwrap();
        let mut cfg = GalerkinConfig::new(tilted(g, 1.0), VelocitySource::zero(g), 0.1, 12, 1e-3, 0.0);
        cfg.terms.precession = false;
        cfg.terms.advection = false;
        let sys = GalerkinSystem::new(&cfg).unwrap();
        let s = sys.basis.analyze(&cfg.u0).unwrap();
        let stability_poly = |z: f64| 1.0 - z + z * z / 2.0 - z.powi(3) / 6.0 + z.powi(4) / 24.0;
        for (m, lam) in sys.basis.eigenvalues().iter().enumerate() {
            for budget in [0.1, 0.05] {
                let dt = budget / (0.1 * lam);
                let z = 0.1 * (lam - 1.0) * dt;
                let next = sys.step_rk4(&s, dt).unwrap();
                for c in 0..3 {
                    let g0 = s.coeffs[m * 3 + c];
                    if g0.abs() < 1e-12 {
                        continue;
                    }
                    let exact = g0 * (-z).exp();
                    let rel = (next.coeffs[m * 3 + c] - exact).abs() / exact.abs();
                    // the step is exactly RK4's stability polynomial ...
                    let predicted = (stability_poly(z) - (-z).exp()).abs() / (-z).exp();
                    assert!((rel - predicted).abs() <= 1e-12, "mode {m}");
                    // ... whose remainder z⁵/120 stays below 1e-8 for z ≤ 0.05
                    if budget <= 0.05 {
                        assert!(rel <= 1e-8, "mode {m}: {rel}");
                    }
                }
            }
        }
    }

    #[test]
    fn rk4_local_order() {
        // |u| < 1 keeps the clip inactive so the right-hand side is smooth
        let g = Grid::cube(2, 1.0, 16).unwrap();
        let u0 = tilted(g, 0.8).scaled(0.7);
        let v = VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: 1.0 }.build(&g).unwrap());
        let cfg = GalerkinConfig::new(u0.clone(), v, 0.1, 12, 1e-3, 0.0);
        let sys = GalerkinSystem::new(&cfg).unwrap();
        let s = sys.basis.analyze(&u0).unwrap();
        let defect = |dt: f64| {
            let one = sys.step_rk4(&s, dt).unwrap();
            let half = sys.step_rk4(&sys.step_rk4(&s, dt / 2.0).unwrap(), dt / 2.0).unwrap();
            one.coeffs.iter().zip(&half.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let order = (defect(2e-2) / defect(1e-2)).log2() - 1.0;
        assert!(order >= 3.8, "order {order}");
    }

    #[test]
    fn l2_law_in_one_dimension() {
        let g = Grid::cube(1, PI, 64).unwrap();
        let u0 = tilted(g, 1.0);
        let cfg = GalerkinConfig::new(u0, VelocitySource::zero(g), 0.1, 16, 1e-3, 0.2);
        let run = run_galerkin(&cfg).unwrap();
        let last = run.times.len() - 1;
        let lhs = run.series.l2_sq[last] + run.series.diss_accum[last];
        assert!((lhs - run.init.l2_sq).abs() / run.init.l2_sq <= 1e-6);
        assert!(run.report.all_hard_pass(), "{:?}", run.report.summary());
        assert!(run.series.grad_l2_sq.windows(2).all(|w| w[1] <= w[0] + 1e-14));
    }

    #[test]
    fn guard_and_argument_errors() {
        let g = Grid::cube(1, PI, 32).unwrap();
        let u0 = tilted(g, 1.0);
        let base = GalerkinConfig::new(u0, VelocitySource::zero(g), 0.1, 16, 1e-3, 0.1);
        let mut c = base.clone();
        c.dt = 1.0;
        assert!(matches!(GalerkinSystem::new(&c), Err(Error::InvalidArgument(_))));
        let mut c = base.clone();
        c.eps = 0.0;
        assert!(GalerkinSystem::new(&c).is_err());
        let mut c = base;
        c.modes = 64;
        assert!(GalerkinSystem::new(&c).is_err());
    }

    #[test]
    fn inadmissible_velocity_is_refused() {
        let g = Grid::cube(2, 1.0, 8).unwrap();
        let u0 = tilted(g, 1.0);
        let base = VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: 1.0 }.build(&g).unwrap();
        let mut cfg = GalerkinConfig::new(u0, VelocitySource::Static(base), 0.1, 10, 1e-3, 0.01);
        cfg.tolerances.tol_bc = 0.0;
        cfg.tolerances.tol_div = 0.0;
        // rounding leaves traces of order 1e-16, which a zero tolerance rejects
        match run_galerkin(&cfg) {
            Err(Error::Inadmissible(_)) | Ok(_) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn identical_configs_are_bit_identical() {
        let g = Grid::cube(2, 1.0, 8).unwrap();
        let u0 = InitialPreset::RandomSmooth { seed: 1, modes: 2 }.sample(&g).unwrap().into_field();
        let v = VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: 1.0 }.build(&g).unwrap());
        let cfg = GalerkinConfig::new(u0, v, 0.1, 10, 1e-3, 0.02);
        let a = run_galerkin(&cfg).unwrap();
        let b = run_galerkin(&cfg).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn cauchy_distance_between_bases() {
        let g = Grid::cube(1, PI, 32).unwrap();
        let u0 = tilted(g, 1.0);
        let a = run_galerkin(&GalerkinConfig::new(u0.clone(), VelocitySource::zero(g), 0.1, 8, 1e-3, 0.05)).unwrap();
        let b = run_galerkin(&GalerkinConfig::new(u0, VelocitySource::zero(g), 0.1, 16, 1e-3, 0.05)).unwrap();
        assert_eq!(cauchy_sup_l2(&a, &a).unwrap(), 0.0);
        let d = cauchy_sup_l2(&a, &b).unwrap();
        assert!(d > 0.0 && d < 1e-3, "{d}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn smooth(g: Grid, seed: u64) -> Field {
            InitialPreset::RandomSmooth { seed, modes: 2 }.sample(&g).unwrap().into_field()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn weak_bounds_hold_for_random_data(seed in 0u64..1000, eps in 0.05f64..1.0, amp in -2.0f64..2.0) {
                let g = Grid::cube(2, 1.0, 8).unwrap();
                let v = VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: amp }.build(&g).unwrap());
                let cfg = GalerkinConfig::new(smooth(g, seed), v, eps, 6, 1e-3, 0.02);
                let run = run_galerkin(&cfg).unwrap();
                for name in [estimates::L2_LAW, estimates::H1_GRONWALL, estimates::DTU_BOUND, estimates::H1_WEAK] {
                    prop_assert!(run.report.record(name).unwrap().passes(), "{name}");
                }
                let again = run_galerkin(&cfg).unwrap();
                prop_assert_eq!(&run.states, &again.states);
            }

            #[test]
            fn zero_data_gives_zero_left_sides(eps in 0.05f64..1.0, amp in -2.0f64..2.0) {
                let g = Grid::cube(2, 1.0, 8).unwrap();
                let v = VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude: amp }.build(&g).unwrap());
                let cfg = GalerkinConfig::new(Field::zeros(g, 3), v, eps, 6, 1e-3, 0.01);
                let run = run_galerkin(&cfg).unwrap();
                prop_assert!(run.report.all_hard_pass());
                for r in &run.report.records {
                    prop_assert!(r.lhs.iter().all(|&x| x == 0.0), "{}", r.name);
                }
            }
        }
    }
}
