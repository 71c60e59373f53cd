//! Acceptance criteria, one verdict line each. Runs without the libtest
//! harness so the lines are always printed; exits nonzero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use ismf::cli;
use ismf::estimates::{self, h2_equivalence_ratio, weak_form_residual};
use ismf::fields::{grad_operator_norms, InitialPreset, VelocityPreset, VelocitySource};
use ismf::flowmap::{gauge_material_derivative_check, integrate_flow, seed_lattice, FlowOptions, Interp};
use ismf::galerkin::{cauchy_sup_l2, run_galerkin, GalerkinConfig, GalerkinRun, GalerkinSystem};
use ismf::grid::{self, Field, Grid};
use ismf::parabolic::{run_parabolic, ParabolicConfig};
use ismf::spectral::SpectralBasis;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {e}"))
    }
}

fn stream(g: &Grid, amplitude: f64) -> VelocitySource {
    VelocitySource::Static(VelocityPreset::PsiSine { k: 1.0, l: 1.0, amplitude }.build(g).unwrap())
}

fn tilted(g: &Grid, alpha: f64, k: f64) -> Field {
    InitialPreset::TiltedCosine { alpha, k }.sample(g).unwrap().into_field()
}

fn within(t: Duration, limit: f64) -> bool {
    t.as_secs_f64() < limit
}

fn c1_l2_law() -> Outcome {
    let start = Instant::now();
    let g = Grid::cube(1, 1.0, 64).unwrap();
    let u0 = tilted(&g, 1.0, 1.0);
    let mut cfg = GalerkinConfig::new(u0.clone(), VelocitySource::zero(g), 0.1, 16, 1e-3, 1.0);
    // dt = 1e-3 sits inside the RK4 stability interval for λ_max(16) but
    // above the default heuristic guard
    cfg.guard = 2.5;
    let run = match run_galerkin(&cfg) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let s = &run.series;
    let last = s.times.len() - 1;
    let u0_sq = grid::l2_sq(&u0);
    let rel = (s.l2_sq[last] + s.diss_accum[last] - u0_sq).abs() / u0_sq;
    let law = run.report.record(estimates::L2_LAW).map_or(false, |r| r.passes());
    let elapsed = start.elapsed();
    Outcome::new(
        rel <= 1e-6 && law && within(elapsed, 30.0),
        format!("relative defect {rel:.3e} (tol 1e-6), L2-law-3.3 record pass = {law}, {:.1}s", elapsed.as_secs_f64()),
    )
}

/// The 2D run shared by criteria 2 and 3.
fn weak_2d() -> ismf::Result<(GalerkinRun, f64, Duration)> {
    let start = Instant::now();
    let g = Grid::cube(2, 1.0, 32).unwrap();
    let v = stream(&g, 1.0);
    let grad_sup = grad_operator_norms(&v.field_at(0.0)).into_iter().fold(0.0, f64::max);
    let cfg = GalerkinConfig::new(tilted(&g, 0.5, 1.0), v, 0.1, 25, 1e-3, 0.5);
    let run = run_galerkin(&cfg)?;
    Ok((run, grad_sup, start.elapsed()))
}

fn c2_h1_gronwall(run: &GalerkinRun, grad_sup: f64, elapsed: Duration) -> Outcome {
    let near = (grad_sup / (PI * PI) - 1.0).abs() < 0.05;
    let s = &run.series;
    let lhs = (0..s.times.len()).map(|k| s.l2_sq[k] + s.grad_l2_sq[k]).fold(0.0, f64::max);
    // I(T) = 2 ∫ ‖∇v‖_∞ for a static field
    let t_end = *s.times.last().unwrap();
    let rhs = (2.0 * grad_sup * t_end).exp() * run.init.grad_l2_sq + run.init.l2_sq;
    let slack = rhs * (1.0 + 1e-3) - lhs;
    let rec = run.report.record(estimates::H1_WEAK).map_or(false, |r| r.passes());
    Outcome::new(
        near && slack >= 0.0 && rec && within(elapsed, 300.0),
        format!(
            "‖∇v‖∞ = {grad_sup:.4} (π² = {:.4}), sup‖u‖²_H1 = {lhs:.6e} ≤ {rhs:.6e}, slack {slack:.3e}, H1-weak-1.2 record pass = {rec}, {:.1}s",
            PI * PI,
            elapsed.as_secs_f64()
        ),
    )
}

fn c3_dtu(run: &GalerkinRun) -> Outcome {
    match run.report.record(estimates::DTU_BOUND) {
        Some(r) => Outcome::new(
            r.passes() && r.tol == 1e-3,
            format!("∫∫|∂t u|² = {:.6e}, min slack {:.3e} at tol {:e}", r.max_lhs(), r.min_slack(), r.tol),
        ),
        None => Outcome::new(false, "dtU-3.5 record missing"),
    }
}

fn c4_overshoot() -> Outcome {
    let g = Grid::cube(2, 1.0, 32).unwrap();
    let (u0, v) = (tilted(&g, 0.5, 1.0), stream(&g, 1.0));
    let mut shoots = Vec::new();
    for n in [8, 16, 32] {
        match run_galerkin(&GalerkinConfig::new(u0.clone(), v.clone(), 0.05, n, 1e-3, 0.5)) {
            Ok(r) => shoots.push(r.overshoot()),
            Err(e) => return Outcome::error(e),
        }
    }
    let pass = shoots.windows(2).all(|w| w[1] <= w[0]);
    Outcome::new(pass, format!("overshoot at n = 8, 16, 32: {:.3e}, {:.3e}, {:.3e}", shoots[0], shoots[1], shoots[2]))
}

fn c5_eps_cauchy() -> Outcome {
    let g = Grid::cube(2, 1.0, 32).unwrap();
    let (u0, v) = (tilted(&g, 0.5, 1.0), stream(&g, 1.0));
    let eps = [0.1, 0.05, 0.025, 0.0125];
    let runs: ismf::Result<Vec<GalerkinRun>> = eps
        .par_iter()
        .map(|&e| run_galerkin(&GalerkinConfig::new(u0.clone(), v.clone(), e, 25, 1e-3, 0.5)))
        .collect();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let mut cauchy = Vec::new();
    for w in runs.windows(2) {
        match cauchy_sup_l2(&w[0], &w[1]) {
            Ok(d) => cauchy.push(d),
            Err(e) => return Outcome::error(e),
        }
    }
    let phi = cli::sweep_test_function(&g);
    let mut weak = Vec::new();
    for r in &runs[..3] {
        let snaps: Vec<Field> = (0..r.times.len()).map(|k| r.field(k).unwrap()).collect();
        match weak_form_residual(&r.times, &snaps, &u0, &v, &phi) {
            Ok(w) => weak.push(w),
            Err(e) => return Outcome::error(e),
        }
    }
    let strictly = cauchy.windows(2).all(|w| w[1] < w[0]);
    let decreasing = weak.windows(2).all(|w| w[1] <= w[0]);
    Outcome::new(
        strictly && decreasing,
        format!(
            "sup‖u^ε − u^ε/2‖ for ε = 0.1, 0.05, 0.025: {:.3e}, {:.3e}, {:.3e}; weak residual {:.3e}, {:.3e}, {:.3e}",
            cauchy[0], cauchy[1], cauchy[2], weak[0], weak[1], weak[2]
        ),
    )
}

/// Criteria 6, 7 and 8 share one renormalized 2D parabolic run recorded at
/// every step.
fn parabolic_2d() -> ismf::Result<ismf::parabolic::ParabolicRun> {
    let g = Grid::cube(2, 1.0, 32).unwrap();
    let mut cfg = ParabolicConfig::new(tilted(&g, 0.5, 1.0), stream(&g, 1.0), 0.25, 1.25e-4, 0.25);
    if cfg.dt > cfg.max_stable_dt() {
        return Err(ismf::Error::InvalidArgument("dt above the guard".into()));
    }
    cfg.renormalize = true;
    cfg.record_every = 1;
    run_parabolic(&cfg)
}

fn c6_structure(run: &ismf::parabolic::ParabolicRun) -> Outcome {
    let s = &run.series;
    let sphere = s.sphere_drift.iter().copied().fold(0.0, f64::max);
    let orth = s.orth.iter().copied().fold(0.0, f64::max);
    let steps = s.times.len() - 1;
    Outcome::new(
        sphere <= 1e-12 && orth <= 1e-12 && run.blowup.is_none(),
        format!("{steps} steps: max ||u|−1| = {sphere:.3e}, max |<u×τ,u>| = {orth:.3e} (tol 1e-12)"),
    )
}

fn c7_form1(run: &ismf::parabolic::ParabolicRun) -> Outcome {
    let s = &run.series;
    let worst = s
        .form1_residual
        .iter()
        .zip(&s.lap_norm)
        .map(|(r, l)| r / l)
        .fold(0.0, f64::max);
    let every = s.form1_residual.iter().zip(&s.lap_norm).all(|(r, l)| *r <= 1e-10 * l);
    Outcome::new(
        every,
        format!("{} snapshots: max residual / ‖Δ_h u‖ = {worst:.3e} (tol 1e-10)", s.times.len()),
    )
}

fn c8_g_bound(run: &ismf::parabolic::ParabolicRun) -> Outcome {
    let g = &run.series.g;
    let ratio = g.iter().copied().fold(0.0, f64::max) / g[0];
    let fitted = run.report.fitted(estimates::G_RATE);
    let finite = fitted.is_some_and(f64::is_finite);
    Outcome::new(
        ratio <= 10.0 && finite && run.blowup.is_none(),
        format!("max G / G(0) = {ratio:.4} (≤ 10), fitted Ĉ = {fitted:?}"),
    )
}

fn c9_gauge() -> Outcome {
    let g = Grid::cube(2, 1.0, 64).unwrap();
    let v = stream(&g, 1.0);
    let seeds = seed_lattice(&g, 33);
    let fm = match integrate_flow(&v, &seeds, &FlowOptions { record_every: 100, ..Default::default() }) {
        Ok(f) => f,
        Err(e) => return Outcome::error(e),
    };
    let det = match fm.max_volume_deviation() {
        Ok(d) => d,
        Err(e) => return Outcome::error(e),
    };

    // material-derivative residual under simultaneous (dt, h) halving
    let t_end = 0.0192;
    let mut residual = Vec::new();
    for (n, dt) in [(32usize, 6.4e-5), (64, 3.2e-5)] {
        let g = Grid::cube(2, 1.0, n).unwrap();
        let v = stream(&g, 1.0);
        let mut cfg = ParabolicConfig::new(tilted(&g, 0.5, 1.0), v.clone(), 0.25, dt, t_end);
        cfg.record_every = 2;
        let run = match run_parabolic(&cfg) {
            Ok(r) => r,
            Err(e) => return Outcome::error(e),
        };
        let opts = FlowOptions { dt, t_end, record_every: 2, satellite_delta: None, ..Default::default() };
        let check = integrate_flow(&v, &seed_lattice(&g, 17), &opts)
            .and_then(|fm| gauge_material_derivative_check(&run.snapshots, &fm, &v, Interp::Cubic));
        match check {
            Ok(r) => residual.push(r.iter().map(|x| x.1).fold(0.0, f64::max)),
            Err(e) => return Outcome::error(e),
        }
    }
    let ratio = residual[0] / residual[1];
    // a particle leaving the box is an error above, so reaching here means
    // zero escapes
    Outcome::new(
        det <= 1e-4 && ratio >= 3.0,
        format!(
            "max |det Dφ − 1| = {det:.3e} (tol 1e-4), residual {:.3e} → {:.3e}, ratio {ratio:.2} (≥ 3), 0 escapes",
            residual[0], residual[1]
        ),
    )
}

fn max_err(a: &Field, b: &Field) -> f64 {
    a.max_abs_diff(b).unwrap()
}

fn kernel_ratio(err: impl Fn(usize) -> f64) -> f64 {
    err(32) / err(64)
}

fn c10_kernels() -> Outcome {
    // f = cos(πx) cos(2πy) with its exact derivatives
    let f = |g: Grid| Field::scalar_fn(g, |x| (PI * x[0]).cos() * (2.0 * PI * x[1]).cos());
    let fx = |x: [f64; 3]| -PI * (PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
    let fy = |x: [f64; 3]| -2.0 * PI * (PI * x[0]).cos() * (2.0 * PI * x[1]).sin();
    let lap = kernel_ratio(|n| {
        let g = Grid::cube(2, 1.0, n).unwrap();
        let exact = Field::scalar_fn(g, |x| -5.0 * PI * PI * (PI * x[0]).cos() * (2.0 * PI * x[1]).cos());
        max_err(&grid::laplacian_neumann(&f(g), &g).unwrap(), &exact)
    });
    let grad = kernel_ratio(|n| {
        let g = Grid::cube(2, 1.0, n).unwrap();
        let d = grid::gradient(&f(g), &g).unwrap();
        max_err(&d[0], &Field::scalar_fn(g, fx)).max(max_err(&d[1], &Field::scalar_fn(g, fy)))
    });
    // v = curl of sin(πx) sin(πy)
    let adv = kernel_ratio(|n| {
        let g = Grid::cube(2, 1.0, n).unwrap();
        let v = Field::from_fn(g, 2, |x, o| {
            o[0] = PI * (PI * x[0]).sin() * (PI * x[1]).cos();
            o[1] = -PI * (PI * x[0]).cos() * (PI * x[1]).sin();
        });
        let exact = Field::scalar_fn(g, |x| {
            let (vx, vy) = (PI * (PI * x[0]).sin() * (PI * x[1]).cos(), -PI * (PI * x[0]).cos() * (PI * x[1]).sin());
            vx * fx(x) + vy * fy(x)
        });
        max_err(&grid::advect(&v, &f(g), &g).unwrap(), &exact)
    });
    let orders_ok = [lap, grad, adv].iter().all(|r| (3.5..=4.5).contains(r));

    // one-step defect of RK4 against two half steps
    let g = Grid::cube(2, 1.0, 16).unwrap();
    let u0 = tilted(&g, 0.8, 1.0).scaled(0.7);
    let cfg = GalerkinConfig::new(u0.clone(), stream(&g, 1.0), 0.1, 12, 1e-3, 0.0);
    let sys = GalerkinSystem::new(&cfg).unwrap();
    let s0 = sys.basis.analyze(&u0).unwrap();
    let defect = |dt: f64| {
        let one = sys.step_rk4(&s0, dt).unwrap();
        let half = sys.step_rk4(&sys.step_rk4(&s0, dt / 2.0).unwrap(), dt / 2.0).unwrap();
        one.coeffs.iter().zip(&half.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let rk4 = (defect(2e-2) / defect(1e-2)).log2() - 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = Grid::cube(2, 1.0, 24).unwrap();
    let noise = Field::from_fn(g, 3, |_, o| o.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0)));
    let basis = SpectralBasis::new(&g, 30).unwrap();
    let p1 = basis.project(&noise).unwrap();
    let p2 = basis.project(&p1).unwrap();
    let idem = max_err(&p1, &p2);

    let v = stream(&g, 1.0);
    let a = grid::advect(&v.field_at(0.0), &noise, &g).unwrap();
    let skew = grid::inner(&a, &noise).unwrap().abs();

    Outcome::new(
        orders_ok && rk4 >= 3.8 && idem <= 1e-12 && skew <= 1e-12,
        format!(
            "ratios Δ {lap:.3}, ∇ {grad:.3}, advection {adv:.3}; RK4 local order {rk4:.3}; |P(Pf) − Pf| = {idem:.1e}; |<adv f, f>| = {skew:.1e}"
        ),
    )
}

fn c11_equivalence() -> Outcome {
    // products of cosines in both axes, plus two mixtures; the constant is
    // left out since its ratio is exactly 1 on every grid
    let family = |g: Grid| -> Vec<Field> {
        let mut out = Vec::new();
        for a in 0..4 {
            for b in (0..4).filter(|&b| a + b > 0) {
                out.push(Field::scalar_fn(g, move |x| {
                    (a as f64 * PI * x[0]).cos() * (b as f64 * PI * x[1]).cos()
                }));
            }
        }
        out.push(Field::scalar_fn(g, |x| 1.0 + 0.5 * (PI * x[0]).cos() - 0.25 * (2.0 * PI * x[1]).cos()));
        out.push(Field::scalar_fn(g, |x| (PI * x[0]).cos() * (3.0 * PI * x[1]).cos() + 0.3 * (2.0 * PI * x[0]).cos()));
        out
    };
    let c: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let g = Grid::cube(2, 1.0, n).unwrap();
            family(g).iter().map(|f| h2_equivalence_ratio(f).unwrap()).fold(0.0, f64::max)
        })
        .collect();
    let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
    let spread = (hi - lo) / lo;
    Outcome::new(
        spread <= 0.2,
        format!("Ĉ at N = 32, 64, 128: {:.4}, {:.4}, {:.4}; spread {:.2}% (≤ 20%)", c[0], c[1], c[2], 100.0 * spread),
    )
}

fn main() -> ExitCode {
    let jobs: Vec<Box<dyn Fn() -> Vec<(usize, Outcome)> + Sync>> = vec![
        Box::new(|| vec![(1, c1_l2_law())]),
        Box::new(|| match weak_2d() {
            Ok((run, grad_sup, t)) => vec![(2, c2_h1_gronwall(&run, grad_sup, t)), (3, c3_dtu(&run))],
            Err(e) => vec![(2, Outcome::error(&e)), (3, Outcome::error(e))],
        }),
        Box::new(|| vec![(4, c4_overshoot())]),
        Box::new(|| vec![(5, c5_eps_cauchy())]),
        Box::new(|| match parabolic_2d() {
            Ok(run) => vec![(6, c6_structure(&run)), (7, c7_form1(&run)), (8, c8_g_bound(&run))],
            Err(e) => vec![(6, Outcome::error(&e)), (7, Outcome::error(&e)), (8, Outcome::error(e))],
        }),
        Box::new(|| vec![(9, c9_gauge())]),
        Box::new(|| vec![(10, c10_kernels())]),
        Box::new(|| vec![(11, c11_equivalence())]),
    ];
    let mut results: Vec<(usize, Outcome)> = jobs.par_iter().flat_map(|job| job()).collect();
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, o) in &results {
        println!("criterion {id:>2}: {}  {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
