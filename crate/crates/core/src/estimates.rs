//! Norms, time envelopes and pass/fail checks of the a priori estimates.
//!
//! Every check is a pure function of stored series, so a finished run can be
//! re-verified from its CSV output alone.

use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fields::{cross3, VelocitySource};
use crate::grid::{self, Closure, Field, Grid};

/// Tolerances used by the checks. Keys accepted by [`Tolerances::set`] match
/// the field names.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Relative tolerance of conservation identities.
    pub identity: f64,
    /// Relative slack on Gronwall-type envelopes.
    pub envelope: f64,
    /// Form-1 residual relative to `‖Δ_h u‖`.
    pub form1: f64,
    pub sphere: f64,
    pub orth: f64,
    /// Allowed growth factor `G(t) / G(0)`.
    pub g_factor: f64,
    pub tol_div: f64,
    pub tol_bc: f64,
    /// Allowed `|det Dφ - 1|`.
    pub tol_vol: f64,
    /// Allowed material-derivative residual (max over seeds and times).
    pub tol_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-6,
            envelope: 1e-3,
            form1: 1e-10,
            sphere: 1e-12,
            orth: 1e-12,
            g_factor: 10.0,
            tol_div: 1e-10,
            tol_bc: 1e-10,
            tol_vol: 1e-4,
            tol_residual: 1e-2,
        }
    }
}

impl Tolerances {
    pub const KEYS: [&'static str; 10] = [
        "identity", "envelope", "form1", "sphere", "orth", "g_factor", "tol_div", "tol_bc", "tol_vol", "tol_residual",
    ];

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::config(format!("tolerances.{key}"), format!("must be a finite nonnegative number, got {value}")));
        }
        let slot = match key {
            "identity" => &mut self.identity,
            "envelope" => &mut self.envelope,
            "form1" => &mut self.form1,
            "sphere" => &mut self.sphere,
            "orth" => &mut self.orth,
            "g_factor" => &mut self.g_factor,
            "tol_div" => &mut self.tol_div,
            "tol_bc" => &mut self.tol_bc,
            "tol_vol" => &mut self.tol_vol,
            "tol_residual" => &mut self.tol_residual,
            _ => return Err(Error::config(format!("tolerances.{key}"), "unknown tolerance")),
        };
        *slot = value;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        Some(match key {
            "identity" => self.identity,
            "envelope" => self.envelope,
            "form1" => self.form1,
            "sphere" => self.sphere,
            "orth" => self.orth,
            "g_factor" => self.g_factor,
            "tol_div" => self.tol_div,
            "tol_bc" => self.tol_bc,
            "tol_vol" => self.tol_vol,
            "tol_residual" => self.tol_residual,
            _ => return None,
        })
    }
}

/// Grid norms of a field. Squared quantities carry the `_sq` suffix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormSet {
    pub l2_sq: f64,
    pub grad_l2_sq: f64,
    pub h1_sq: f64,
    pub lap_l2_sq: f64,
    /// `‖u‖² + ‖Δ_h u‖²`
    pub h2_surrogate_sq: f64,
    /// `‖u‖² + ‖Δ_h u‖²_{H¹}`
    pub h3_surrogate_sq: f64,
    /// Full stencil `H²` norm: `‖u‖²_{H¹} + Σ_{a,b} ‖∂_a ∂_b u‖²`.
    pub h2_stencil_sq: f64,
    pub sup_abs: f64,
    pub l3: f64,
    /// `(‖f‖³_{L³} + ‖∇f‖³_{L³})^{1/3}` with the Frobenius norm of `∇f`.
    pub w13: f64,
}

/// Norms with Neumann ghosts.
pub fn norms(f: &Field, g: &Grid) -> Result<NormSet> {
    f.expect_on(g)?;
    let l2_sq = grid::l2_sq(f);
    let grads = grid::gradient(f, g)?;
    let grad_l2_sq: f64 = grads.iter().map(grid::l2_sq).sum();
    let lap = grid::laplacian_neumann(f, g)?;
    let lap_l2_sq = grid::l2_sq(&lap);
    let mut second = 0.0;
    for a in 0..g.dim() {
        for b in 0..g.dim() {
            let d = if a == b {
                grid::second_difference(f, a, Closure::Neumann)
            } else {
                grid::derivative(&grads[a], b, Closure::Neumann)
            };
            second += grid::l2_sq(&d);
        }
    }
    let vol = g.cell_volume();
    let pointwise = f.pointwise_norms();
    let grad_pointwise: Vec<f64> = (0..g.len())
        .map(|ix| {
            grads
                .iter()
                .map(|d| d.at(ix).iter().map(|x| x * x).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let cube_sum = |v: &[f64]| v.iter().map(|x| x.powi(3)).sum::<f64>() * vol;
    let l3_cubed = cube_sum(&pointwise);
    Ok(NormSet {
        l2_sq,
        grad_l2_sq,
        h1_sq: l2_sq + grad_l2_sq,
        lap_l2_sq,
        h2_surrogate_sq: l2_sq + lap_l2_sq,
        h3_surrogate_sq: l2_sq + lap_l2_sq + grid::grad_l2_sq(&lap),
        h2_stencil_sq: l2_sq + grad_l2_sq + second,
        sup_abs: pointwise.iter().copied().fold(0.0, f64::max),
        l3: l3_cubed.cbrt(),
        w13: (l3_cubed + cube_sum(&grad_pointwise)).cbrt(),
    })
}

/// `‖u‖_{H²,stencil} / (‖u‖ + ‖Δ_h u‖)`, the ratio bounded by the
/// equivalence of the `H²` norm with the graph norm of the Laplacian.
pub fn h2_equivalence_ratio(f: &Field) -> Result<f64> {
    let n = norms(f, f.grid())?;
    Ok(n.h2_stencil_sq.sqrt() / (n.l2_sq.sqrt() + n.lap_l2_sq.sqrt()))
}

/// Velocity quantities entering the envelopes at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VelocitySample {
    pub sup: f64,
    pub grad_sup: f64,
    pub dt_h1_sq: f64,
    pub w13: f64,
}

impl VelocitySample {
    /// `‖∂_t v‖²_{H¹} + ‖v‖⁴_∞ + ‖∇v‖²_∞`
    pub fn forcing(&self) -> f64 {
        self.dt_h1_sq + self.sup.powi(4) + self.grad_sup.powi(2)
    }
}

pub fn sample_velocity(source: &VelocitySource, t: f64) -> VelocitySample {
    let v = source.at(t);
    let c = v.certificate();
    let dt_h1_sq = match source {
        VelocitySource::Static(_) => 0.0,
        VelocitySource::Trajectory { .. } => {
            let d = source.time_derivative(t);
            let g = *d.grid();
            let grad: f64 = (0..g.dim())
                .map(|a| grid::l2_sq(&grid::derivative(&d, a, Closure::Tangent)))
                .sum();
            grid::l2_sq(&d) + grad
        }
    };
    VelocitySample { sup: c.sup, grad_sup: c.grad_sup, dt_h1_sq, w13: c.w13() }
}

/// Running time integrals by the trapezoid rule:
/// `I(t) = 2∫‖∇v‖_∞`, `S(t) = ∫‖v‖²_∞`, `F(t) = ∫ f`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Envelopes {
    pub times: Vec<f64>,
    pub samples: Vec<VelocitySample>,
    pub i: Vec<f64>,
    pub s: Vec<f64>,
    pub f_int: Vec<f64>,
}

impl Envelopes {
    pub fn new(times: Vec<f64>, samples: Vec<VelocitySample>) -> Result<Self> {
        if times.len() != samples.len() {
            return Err(Error::Misaligned(format!("{} times but {} velocity samples", times.len(), samples.len())));
        }
        let accumulate = |q: &dyn Fn(&VelocitySample) -> f64| {
            let mut out = Vec::with_capacity(times.len());
            let mut acc = 0.0;
            for k in 0..times.len() {
                if k > 0 {
                    acc += 0.5 * (times[k] - times[k - 1]) * (q(&samples[k]) + q(&samples[k - 1]));
                }
                out.push(acc);
            }
            out
        };
        let i = accumulate(&|v| 2.0 * v.grad_sup);
        let s = accumulate(&|v| v.sup * v.sup);
        let f_int = accumulate(&|v| v.forcing());
        Ok(Self { times, samples, i, s, f_int })
    }

    pub fn from_source(times: &[f64], source: &VelocitySource) -> Result<Self> {
        let samples = match source {
            // one certificate serves every time of a static field
            VelocitySource::Static(_) => vec![sample_velocity(source, 0.0); times.len()],
            VelocitySource::Trajectory { .. } => times.iter().map(|&t| sample_velocity(source, t)).collect(),
        };
        Self::new(times.to_vec(), samples)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    /// `lhs <= rhs (1 + tol)` at every sample.
    Inequality,
    /// `|lhs - rhs| <= tol |rhs|` at every sample.
    Identity,
    /// `lhs <= tol` at every sample (`rhs` unused).
    Absolute,
}

impl CheckKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckKind::Inequality => "inequality",
            CheckKind::Identity => "identity",
            CheckKind::Absolute => "absolute",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inequality" => Ok(CheckKind::Inequality),
            "identity" => Ok(CheckKind::Identity),
            "absolute" => Ok(CheckKind::Absolute),
            other => Err(Error::Format(format!("unknown check kind `{other}`"))),
        }
    }
}

/// One estimate evaluated along a run.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRecord {
    pub name: String,
    pub kind: CheckKind,
    /// Hard checks decide the exit status; soft ones are reported only.
    pub hard: bool,
    pub tol: f64,
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl EstimateRecord {
    /// Positive where the check holds, negative where it is violated.
    pub fn slack(&self) -> Vec<f64> {
        self.lhs
            .iter()
            .zip(&self.rhs)
            .map(|(&l, &r)| match self.kind {
                CheckKind::Inequality => r * (1.0 + self.tol) - l,
                CheckKind::Identity => self.tol * r.abs() - (l - r).abs(),
                CheckKind::Absolute => self.tol - l,
            })
            .collect()
    }

    pub fn passes(&self) -> bool {
        self.first_violation().is_none()
    }

    /// Time of the first sample where the check fails (NaN counts as failure).
    pub fn first_violation(&self) -> Option<f64> {
        self.slack()
            .iter()
            .position(|s| !(*s >= 0.0))
            .map(|k| self.times[k])
    }

    pub fn min_slack(&self) -> f64 {
        self.slack().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_lhs(&self) -> f64 {
        self.lhs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn summary_line(&self) -> String {
        let verdict = match (self.passes(), self.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        let mut line = format!(
            "{verdict} {} [{}{}] max lhs {:.6e}, min slack {:.6e}, tol {:e}",
            self.name,
            self.kind.as_str(),
            if self.hard { "" } else { ", soft" },
            self.max_lhs(),
            self.min_slack(),
            self.tol
        );
        if let Some(t) = self.first_violation() {
            line.push_str(&format!(", first violation at t = {t}"));
        }
        line
    }
}

/// All checks of one run plus the velocity envelopes they used.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyReport {
    pub records: Vec<EstimateRecord>,
    pub envelopes: Envelopes,
    /// Fitted constants, reported but never asserted.
    pub fitted: Vec<(String, f64)>,
}

impl EnergyReport {
    pub fn record(&self, name: &str) -> Option<&EstimateRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn all_hard_pass(&self) -> bool {
        self.records.iter().filter(|r| r.hard).all(|r| r.passes())
    }

    pub fn fitted(&self, name: &str) -> Option<f64> {
        self.fitted.iter().find(|(n, _)| n == name).map(|(_, c)| *c)
    }

    pub fn summary(&self) -> Vec<String> {
        let mut lines: Vec<String> = self.records.iter().map(|r| r.summary_line()).collect();
        for (name, c) in &self.fitted {
            lines.push(format!("INFO {name} = {c:.6e}"));
        }
        lines
    }

    /// Long-format table: `name,kind,hard,tol,t,lhs,rhs`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["name", "kind", "hard", "tol", "t", "lhs", "rhs"])?;
        for r in &self.records {
            for k in 0..r.times.len() {
                out.write_record([
                    r.name.clone(),
                    r.kind.as_str().to_string(),
                    r.hard.to_string(),
                    r.tol.to_string(),
                    r.times[k].to_string(),
                    r.lhs[k].to_string(),
                    r.rhs[k].to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

impl EnergyReport {
    /// Records back from the table written by [`EnergyReport::write_csv`].
    /// Envelopes and fitted constants are not part of the table.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut records: Vec<EstimateRecord> = Vec::new();
        for (line, row) in rd.records().enumerate() {
            let row = row?;
            let field = |i: usize| row.get(i).ok_or_else(|| Error::Format(format!("row {}: missing column {i}", line + 2)));
            let num = |i: usize| -> Result<f64> {
                let s = field(i)?;
                s.parse::<f64>().map_err(|e| Error::Format(format!("row {}: `{s}`: {e}", line + 2)))
            };
            let name = field(0)?;
            let (t, lhs, rhs) = (num(4)?, num(5)?, num(6)?);
            match records.last_mut() {
                Some(r) if r.name == name => {
                    r.times.push(t);
                    r.lhs.push(lhs);
                    r.rhs.push(rhs);
                }
                _ => records.push(EstimateRecord {
                    name: name.to_string(),
                    kind: CheckKind::parse(field(1)?)?,
                    hard: field(2)? == "true",
                    tol: num(3)?,
                    times: vec![t],
                    lhs: vec![lhs],
                    rhs: vec![rhs],
                }),
            }
        }
        Ok(Self { records, ..Default::default() })
    }
}

/// Norm series of a weak-scheme run, one entry per recorded time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeakSeries {
    pub times: Vec<f64>,
    pub l2_sq: Vec<f64>,
    pub grad_l2_sq: Vec<f64>,
    pub sup_abs: Vec<f64>,
    /// `2ε ∫₀ᵗ ∫|∇u|²`
    pub diss_accum: Vec<f64>,
    /// `2ε ∫₀ᵗ ∫|Δu|²`
    pub lap_diss_accum: Vec<f64>,
    /// `∫₀ᵗ ∫|∂_t u|²`
    pub dtu_accum: Vec<f64>,
}

/// Quantities of the initial data the weak bounds refer to.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InitialData {
    /// `∫|u₀|²`
    pub l2_sq: f64,
    /// `∫|∇u₀|²`
    pub grad_l2_sq: f64,
    /// `∫|P_n u₀|²`, which the discrete L² law conserves.
    pub projected_l2_sq: f64,
}

fn aligned(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Misaligned(format!("{} against {} samples", a.len(), b.len())));
    }
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        if (x - y).abs() > 1e-9 * (1.0 + x.abs()) {
            return Err(Error::Misaligned(format!("sample {k}: t = {x} against t = {y}")));
        }
    }
    Ok(())
}

pub const L2_LAW: &str = "L2-law-3.3";
pub const H1_GRONWALL: &str = "H1-gronwall-3.4";
pub const LAP_DISSIPATION: &str = "lap-dissipation-3.4";
pub const DTU_BOUND: &str = "dtU-3.5";
pub const H1_WEAK: &str = "H1-weak-1.2";
pub const MAX_PRINCIPLE: &str = "maxprin-3.6";
pub const G_BOUND: &str = "G-bound-4.5";
pub const FORM1: &str = "form1-4.2";
pub const GAUGE: &str = "gauge-1.5";
pub const SPHERE: &str = "sphere";
pub const ORTH: &str = "orth";
pub const TRACE: &str = "trace-4.3";
pub const EQU_NORM: &str = "equ-norm";
pub const G_RATE: &str = "G-rate-constant";

/// Check the energy law, the Gronwall envelopes and the `∂_t u` bound of a
/// weak-scheme run.
pub fn check_weak_bounds(
    series: &WeakSeries,
    init: &InitialData,
    env: &Envelopes,
    eps: f64,
    tol: &Tolerances,
) -> Result<EnergyReport> {
    aligned(&series.times, &env.times)?;
    let t = series.times.clone();
    let n = t.len();
    for (name, v) in [
        ("l2_sq", &series.l2_sq),
        ("grad_l2_sq", &series.grad_l2_sq),
        ("sup_abs", &series.sup_abs),
        ("diss_accum", &series.diss_accum),
        ("lap_diss_accum", &series.lap_diss_accum),
        ("dtu_accum", &series.dtu_accum),
    ] {
        if v.len() != n {
            return Err(Error::Misaligned(format!("{name} has {} samples, times have {n}", v.len())));
        }
    }
    let running_sup = |v: &[f64]| {
        let mut m = f64::NEG_INFINITY;
        v.iter().map(|&x| {
            m = m.max(x);
            m
        }).collect::<Vec<f64>>()
    };
    let g0 = init.grad_l2_sq;
    let exp_i: Vec<f64> = env.i.iter().map(|i| i.exp()).collect();
    let i_exp_i: Vec<f64> = env.i.iter().zip(&exp_i).map(|(i, e)| 1.0 + i * e).collect();

    let record = |name: &str, kind, hard, tol: f64, lhs: Vec<f64>, rhs: Vec<f64>| EstimateRecord {
        name: name.into(),
        kind,
        hard,
        tol,
        times: t.clone(),
        lhs,
        rhs,
    };
    let h1: Vec<f64> = series.l2_sq.iter().zip(&series.grad_l2_sq).map(|(a, b)| a + b).collect();
    let records = vec![
        record(
            L2_LAW,
            CheckKind::Identity,
            true,
            tol.identity,
            series.l2_sq.iter().zip(&series.diss_accum).map(|(a, b)| a + b).collect(),
            vec![init.projected_l2_sq; n],
        ),
        record(
            H1_GRONWALL,
            CheckKind::Inequality,
            true,
            tol.envelope,
            running_sup(&series.grad_l2_sq),
            exp_i.iter().map(|e| e * g0).collect(),
        ),
        record(
            LAP_DISSIPATION,
            CheckKind::Inequality,
            true,
            tol.envelope,
            series.lap_diss_accum.clone(),
            i_exp_i.iter().map(|c| c * g0).collect(),
        ),
        record(
            DTU_BOUND,
            CheckKind::Inequality,
            true,
            tol.envelope,
            series.dtu_accum.clone(),
            env.s
                .iter()
                .zip(&i_exp_i)
                .map(|(s, c)| ((1.0 + eps) / eps + 2.0 * s) * c * g0)
                .collect(),
        ),
        record(
            H1_WEAK,
            CheckKind::Inequality,
            true,
            tol.envelope,
            running_sup(&h1),
            exp_i.iter().map(|e| e * g0 + init.l2_sq).collect(),
        ),
        record(
            MAX_PRINCIPLE,
            CheckKind::Inequality,
            false,
            tol.sphere,
            running_sup(&series.sup_abs),
            vec![1.0; n],
        ),
    ];
    Ok(EnergyReport { records, envelopes: env.clone(), fitted: Vec::new() })
}

/// Diagnostic series of a parabolic run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParabolicSeries {
    pub times: Vec<f64>,
    pub h1_sq: Vec<f64>,
    pub h2_surrogate_sq: Vec<f64>,
    pub dtu_h1_sq: Vec<f64>,
    pub g: Vec<f64>,
    pub form1_residual: Vec<f64>,
    /// `‖Δ_h u‖_{L²}`, the scale of the form-1 residual.
    pub lap_norm: Vec<f64>,
    pub equ_norm_ratio: Vec<f64>,
    pub sphere_drift: Vec<f64>,
    /// `max |<u × τ, u>|` over cells.
    pub orth: Vec<f64>,
    /// Largest wall-normal derivative of `∂_t u`.
    pub trace: Vec<f64>,
}

/// `G = (1 + ε²) ‖u‖²_{H²} + ‖∂_t u‖²_{H¹} + 1`.
pub fn functional_g(u: &NormSet, dtu: &NormSet, eps: f64) -> f64 {
    (1.0 + eps * eps) * u.h2_surrogate_sq + dtu.h1_sq + 1.0
}

/// `‖u‖²_{H³} / (1 + ‖u‖²_{H²} + ‖∂_t u‖²_{H¹} + ‖v‖²_{W^{1,3}})³`.
pub fn equ_norm_ratio(u: &NormSet, dtu: &NormSet, w13: f64) -> f64 {
    u.h3_surrogate_sq / (1.0 + u.h2_surrogate_sq + dtu.h1_sq + w13 * w13).powi(3)
}

/// Smallest `Ĉ` with `dG/dt <= Ĉ (G + ‖v‖²_{W^{1,3}})⁴ + Ĉ g` on every
/// sample interval, with `dG/dt` by differences and the right side averaged
/// over the interval ends.
pub fn fit_g_constant(times: &[f64], g: &[f64], w13: &[f64], forcing: &[f64]) -> f64 {
    let mut c: f64 = 0.0;
    for k in 1..times.len() {
        let rate = (g[k] - g[k - 1]) / (times[k] - times[k - 1]);
        if rate <= 0.0 {
            continue;
        }
        let side = |j: usize| (g[j] + w13[j] * w13[j]).powi(4) + forcing[j];
        c = c.max(rate / (0.5 * (side(k) + side(k - 1))));
    }
    c
}

/// Check the geometric structure, the form-1 identity and `G` growth of a
/// parabolic run.
pub fn check_parabolic_bounds(
    series: &ParabolicSeries,
    env: &Envelopes,
    renormalized: bool,
    tol: &Tolerances,
) -> Result<EnergyReport> {
    aligned(&series.times, &env.times)?;
    let t = series.times.clone();
    let n = t.len();
    for (name, v) in [
        ("h1_sq", &series.h1_sq),
        ("h2_surrogate_sq", &series.h2_surrogate_sq),
        ("dtu_h1_sq", &series.dtu_h1_sq),
        ("G", &series.g),
        ("form1_residual", &series.form1_residual),
        ("lap_norm", &series.lap_norm),
        ("equ_norm_ratio", &series.equ_norm_ratio),
        ("sphere_drift", &series.sphere_drift),
        ("orth", &series.orth),
        ("trace", &series.trace),
    ] {
        if v.len() != n {
            return Err(Error::Misaligned(format!("{name} has {} samples, times have {n}", v.len())));
        }
    }
    if n == 0 {
        return Err(Error::Misaligned("empty series".into()));
    }
    let record = |name: &str, kind, hard, tol: f64, lhs: Vec<f64>, rhs: Vec<f64>| EstimateRecord {
        name: name.into(),
        kind,
        hard,
        tol,
        times: t.clone(),
        lhs,
        rhs,
    };
    let form1_scaled: Vec<f64> = series
        .form1_residual
        .iter()
        .zip(&series.lap_norm)
        .map(|(r, l)| if *l > 0.0 { r / l } else { *r })
        .collect();
    let records = vec![
        record(SPHERE, CheckKind::Absolute, renormalized, tol.sphere, series.sphere_drift.clone(), vec![0.0; n]),
        record(ORTH, CheckKind::Absolute, true, tol.orth, series.orth.clone(), vec![0.0; n]),
        record(FORM1, CheckKind::Absolute, true, tol.form1, form1_scaled, vec![0.0; n]),
        record(
            G_BOUND,
            CheckKind::Inequality,
            true,
            0.0,
            series.g.clone(),
            vec![tol.g_factor * series.g[0]; n],
        ),
        record(TRACE, CheckKind::Absolute, false, f64::INFINITY, series.trace.clone(), vec![0.0; n]),
    ];
    let w13: Vec<f64> = env.samples.iter().map(|s| s.w13).collect();
    let forcing: Vec<f64> = env.samples.iter().map(|s| s.forcing()).collect();
    let fitted = vec![
        (G_RATE.to_string(), fit_g_constant(&t, &series.g, &w13, &forcing)),
        (
            format!("{EQU_NORM}-constant"),
            series.equ_norm_ratio.iter().copied().fold(0.0, f64::max),
        ),
    ];
    Ok(EnergyReport { records, envelopes: env.clone(), fitted })
}

/// A smooth test field `φ(x,t) = cos(ωt) Σ_k a_k Π_j cos(k_j π x_j / L_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineTest {
    pub terms: Vec<([usize; 3], [f64; 3])>,
    pub omega: f64,
    pub extents: [f64; 3],
}

impl CosineTest {
    pub fn new(grid: &Grid, terms: Vec<([usize; 3], [f64; 3])>, omega: f64) -> Self {
        let mut extents = [1.0; 3];
        extents[..grid.dim()].copy_from_slice(grid.extents());
        Self { terms, omega, extents }
    }

    /// `(φ, ∂_t φ, ∇φ)` at `(x, t)`; `grad[a][c] = ∂_a φ_c`.
    pub fn eval(&self, x: [f64; 3], t: f64, dim: usize) -> ([f64; 3], [f64; 3], [[f64; 3]; 3]) {
        let (ct, st) = ((self.omega * t).cos(), (self.omega * t).sin());
        let mut val = [0.0; 3];
        let mut grad = [[0.0; 3]; 3];
        for (k, a) in &self.terms {
            let mut cs = [1.0; 3];
            let mut ds = [0.0; 3];
            for j in 0..dim {
                let w = k[j] as f64 * PI / self.extents[j];
                cs[j] = (w * x[j]).cos();
                ds[j] = -w * (w * x[j]).sin();
            }
            let b: f64 = cs[..dim].iter().product();
            for c in 0..3 {
                val[c] += a[c] * b;
            }
            for j in 0..dim {
                let mut p = ds[j];
                for i in 0..dim {
                    if i != j {
                        p *= cs[i];
                    }
                }
                for c in 0..3 {
                    grad[j][c] += a[c] * p;
                }
            }
        }
        let dt = val.map(|v| -self.omega * st * v);
        let val = val.map(|v| ct * v);
        for row in grad.iter_mut() {
            for x in row.iter_mut() {
                *x *= ct;
            }
        }
        (val, dt, grad)
    }
}

/// `|∫<u,φ>(T) - ∫<u₀,φ>(0) - ∫∫<u,∂_t φ> + ∫∫<v·∇u, φ> + ∫∫<u×∇u, ∇φ>|`
/// with trapezoid time quadrature over the snapshots and centered stencils
/// in space.
pub fn weak_form_residual(
    times: &[f64],
    snapshots: &[Field],
    u0: &Field,
    v: &VelocitySource,
    phi: &CosineTest,
) -> Result<f64> {
    if times.len() != snapshots.len() || times.is_empty() {
        return Err(Error::Misaligned(format!("{} times but {} snapshots", times.len(), snapshots.len())));
    }
    let g = *u0.grid();
    u0.expect_ncomp(3)?;
    let dim = g.dim();
    let vol = g.cell_volume();
    let pair_at = |u: &Field, t: f64| -> f64 {
        (0..g.len())
            .map(|ix| {
                let (p, _, _) = phi.eval(g.center(ix), t, dim);
                let a = u.vec3(ix);
                a[0] * p[0] + a[1] * p[1] + a[2] * p[2]
            })
            .sum::<f64>()
            * vol
    };
    let integrand = |u: &Field, t: f64| -> Result<f64> {
        u.expect_like(u0)?;
        let vt = v.field_at(t);
        let grads = grid::gradient(u, &g)?;
        let transport = grid::transport(&vt, u, &g)?;
        let mut acc = 0.0;
        for ix in 0..g.len() {
            let (p, pt, pg) = phi.eval(g.center(ix), t, dim);
            let a = u.vec3(ix);
            let tr = transport.vec3(ix);
            acc -= a[0] * pt[0] + a[1] * pt[1] + a[2] * pt[2];
            acc += tr[0] * p[0] + tr[1] * p[1] + tr[2] * p[2];
            for (j, gj) in grads.iter().enumerate() {
                let c = cross3(a, gj.vec3(ix));
                acc += c[0] * pg[j][0] + c[1] * pg[j][1] + c[2] * pg[j][2];
            }
        }
        Ok(acc * vol)
    };
    let mut total = pair_at(&snapshots[snapshots.len() - 1], times[times.len() - 1]) - pair_at(u0, times[0]);
    let mut prev = integrand(&snapshots[0], times[0])?;
    for k in 1..times.len() {
        let cur = integrand(&snapshots[k], times[k])?;
        total += 0.5 * (times[k] - times[k - 1]) * (prev + cur);
        prev = cur;
    }
    Ok(total.abs())
}
