//! Subcommands behind the `ismf` binary.
//!
//! Each command writes its verdict lines to the supplied writer and returns
//! the process exit status: 0 when every hard check passes, 1 when one
//! fails, 2 for configuration problems and 3 for blow-up or particle escape.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::config::{RunConfig, Scheme};
use crate::error::{Error, Result};
use crate::estimates::{self, CheckKind, CosineTest, EnergyReport, EstimateRecord, Tolerances};
use crate::fields::VelocitySource;
use crate::flowmap::{self, FlowOptions};
use crate::galerkin::{self, GalerkinRun};
use crate::grid::{self, Field, Grid};
use crate::io;
use crate::parabolic::{self, ParabolicRun, Snapshot};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ESTIMATE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;

pub const GAUGE_RESIDUAL: &str = "gauge-1.5-residual";

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub tol_overrides: Vec<String>,
}

/// Exit status for an error that ended a command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BlowUp { .. } | Error::Confinement { .. } | Error::CgNotConverged { .. } => EXIT_BLOWUP,
        _ => EXIT_CONFIG,
    }
}

fn finish(out: &mut dyn Write, r: Result<i32>) -> i32 {
    match r {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "ERROR {e}");
            exit_code(&e)
        }
    }
}

fn load(opts: &Options) -> Result<RunConfig> {
    let path = opts
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config", "a config file is required"))?;
    let mut cfg = RunConfig::load(path)?;
    for spec in &opts.tol_overrides {
        RunConfig::apply_override(&mut cfg.tolerances, spec)?;
    }
    if let Some(dir) = &opts.out {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut f = create(path)?;
    for l in lines {
        writeln!(f, "{l}")?;
    }
    f.flush()?;
    Ok(())
}

fn write_meta(dir: &Path, entries: &[(&str, String)]) -> Result<()> {
    let lines: Vec<String> = entries.iter().map(|(k, v)| format!("{k} = {v}")).collect();
    write_lines(&dir.join("run.meta"), &lines)
}

/// Indices `0..len` to dump: every `every`-th plus the first and last.
fn snapshot_indices(len: usize, every: usize) -> Vec<usize> {
    (0..len)
        .filter(|&k| k == 0 || k + 1 == len || (every > 0 && k % every == 0))
        .collect()
}

/// Per-sample pass flags of the records sampled on `times`.
fn pass_columns(report: &EnergyReport, times: &[f64]) -> Vec<(String, Vec<bool>)> {
    report
        .records
        .iter()
        .filter(|r| r.times.len() == times.len())
        .map(|r| (format!("pass_{}", r.name), r.slack().iter().map(|s| *s >= 0.0).collect()))
        .collect()
}

fn write_series(path: &Path, columns: &[(&str, &[f64])], flags: &[(String, Vec<bool>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = columns.iter().map(|(n, _)| n.to_string()).collect();
    header.extend(flags.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    let rows = columns.first().map_or(0, |c| c.1.len());
    for k in 0..rows {
        let mut row: Vec<String> = columns.iter().map(|(_, c)| c[k].to_string()).collect();
        row.extend(flags.iter().map(|(_, f)| (f[k] as u8).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn verdict(report: &EnergyReport, out: &mut dyn Write, dir: &Path, file: &str) -> Result<i32> {
    let lines = report.summary();
    for l in &lines {
        writeln!(out, "{l}")?;
    }
    write_lines(&dir.join(file), &lines)?;
    Ok(if report.all_hard_pass() { EXIT_OK } else { EXIT_ESTIMATE })
}

/// A finished run of either scheme.
pub enum RunOutput {
    Galerkin(GalerkinRun),
    Parabolic(ParabolicRun),
}

impl RunOutput {
    pub fn report(&self) -> &EnergyReport {
        match self {
            RunOutput::Galerkin(r) => &r.report,
            RunOutput::Parabolic(r) => &r.report,
        }
    }

    /// `(t, u)` at every recorded time.
    pub fn trajectory(&self) -> Result<Vec<(f64, Field)>> {
        match self {
            RunOutput::Galerkin(r) => (0..r.times.len()).map(|k| Ok((r.times[k], r.field(k)?))).collect(),
            RunOutput::Parabolic(r) => Ok(r.snapshots.iter().map(|s| (s.t, s.u.clone())).collect()),
        }
    }
}

/// Execute the configured scheme and write its outputs under `cfg.out_dir`.
pub fn execute(cfg: &RunConfig, out: &mut dyn Write) -> Result<(i32, RunOutput)> {
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("run.ini"), cfg.to_ini())?;
    match cfg.scheme {
        Scheme::Galerkin => {
            let gc = cfg.galerkin_config()?;
            let run = galerkin::run_galerkin(&gc)?;
            let s = &run.series;
            let env = run.h1_bound_envelope();
            write_series(
                &dir.join("series.csv"),
                &[
                    ("t", &s.times),
                    ("l2_sq", &s.l2_sq),
                    ("grad_l2_sq", &s.grad_l2_sq),
                    ("sup_abs_u", &s.sup_abs),
                    ("diss_accum", &s.diss_accum),
                    ("h1_bound_envelope", &env),
                ],
                &pass_columns(&run.report, &s.times),
            )?;
            run.report.write_csv(create(&dir.join("report.csv"))?)?;
            run.basis.write_summary_csv(create(&dir.join("basis.csv"))?)?;
            for k in snapshot_indices(run.states.len(), cfg.snapshot_every) {
                io::save_binary(&run.field(k)?, &dir.join(format!("u_{k:06}.bin")))?;
            }
            let code = verdict(&run.report, out, dir, "summary.txt")?;
            write_meta(
                dir,
                &[
                    ("scheme", "galerkin".into()),
                    ("modes", run.basis.len().to_string()),
                    ("samples", run.times.len().to_string()),
                    ("t_final", run.times.last().copied().unwrap_or(0.0).to_string()),
                    ("overshoot", run.overshoot().to_string()),
                    ("exit", code.to_string()),
                ],
            )?;
            Ok((code, RunOutput::Galerkin(run)))
        }
        Scheme::Parabolic => {
            let pc = cfg.parabolic_config()?;
            let run = parabolic::run_parabolic(&pc)?;
            let s = &run.series;
            write_series(
                &dir.join("series.csv"),
                &[
                    ("t", &s.times),
                    ("h1_sq", &s.h1_sq),
                    ("h2_surrogate_sq", &s.h2_surrogate_sq),
                    ("dtu_h1_sq", &s.dtu_h1_sq),
                    ("G", &s.g),
                    ("form1_residual", &s.form1_residual),
                    ("equ_norm_ratio", &s.equ_norm_ratio),
                    ("sphere_drift", &s.sphere_drift),
                ],
                &pass_columns(&run.report, &s.times),
            )?;
            run.report.write_csv(create(&dir.join("report.csv"))?)?;
            let mut index = csv::Writer::from_writer(create(&dir.join("snapshots.csv"))?);
            index.write_record(["index", "t", "u_file", "dtu_file"])?;
            for k in snapshot_indices(run.snapshots.len(), cfg.snapshot_every) {
                let snap = &run.snapshots[k];
                let (uf, df) = (format!("u_{k:06}.bin"), format!("dtu_{k:06}.bin"));
                io::save_binary(&snap.u, &dir.join(&uf))?;
                io::save_binary(&snap.dtu, &dir.join(&df))?;
                index.write_record([k.to_string(), snap.t.to_string(), uf, df])?;
            }
            index.flush()?;
            let mut code = verdict(&run.report, out, dir, "summary.txt")?;
            if let Some(b) = &run.blowup {
                writeln!(out, "BLOWUP at t = {} ({}); last valid time {}", b.time, b.reason, b.last_valid)?;
                code = EXIT_BLOWUP;
            }
            write_meta(
                dir,
                &[
                    ("scheme", "parabolic".into()),
                    ("stepper", pc.stepper.as_str().into()),
                    ("samples", s.times.len().to_string()),
                    ("t_final", s.times.last().copied().unwrap_or(0.0).to_string()),
                    ("max_step_drift", run.max_step_drift.to_string()),
                    ("blowup", run.blowup.as_ref().map_or("none".into(), |b| b.last_valid.to_string())),
                    ("exit", code.to_string()),
                ],
            )?;
            Ok((code, RunOutput::Parabolic(run)))
        }
    }
}

pub fn cmd_run(opts: &Options, out: &mut dyn Write) -> i32 {
    let r = (|| {
        let cfg = load(opts)?;
        info!("run: {} scheme into {}", cfg.scheme.as_str(), cfg.out_dir.display());
        let (code, _) = execute(&cfg, out)?;
        writeln!(out, "RESULT {}", if code == EXIT_OK { "pass" } else { "fail" })?;
        Ok(code)
    })();
    finish(out, r)
}

/// `sup_t ‖a(t) - b(t)‖_{L²}` over common times; a grid with twice the
/// cells per axis is averaged onto the coarser one first.
pub fn trajectory_distance(a: &[(f64, Field)], b: &[(f64, Field)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    for (t, fa) in a {
        let Some((_, fb)) = b.iter().find(|(s, _)| (s - t).abs() <= 1e-9 * (1.0 + t.abs())) else {
            continue;
        };
        matched += 1;
        let (ga, gb) = (*fa.grid(), *fb.grid());
        let d = if ga == gb {
            fa.lin_comb(1.0, fb, -1.0)?
        } else if ga.len() < gb.len() {
            fa.lin_comb(1.0, &grid::restrict(fb, &ga)?, -1.0)?
        } else {
            grid::restrict(fa, &gb)?.lin_comb(1.0, fb, -1.0)?
        };
        worst = worst.max(grid::l2_sq(&d).sqrt());
    }
    if matched == 0 {
        return Err(Error::Misaligned("trajectories share no sample times".into()));
    }
    Ok(worst)
}

/// The fixed smooth test field the sweep evaluates the weak form against.
pub fn sweep_test_function(g: &Grid) -> CosineTest {
    let mut terms = vec![([1, 0, 0], [0.3, -0.2, 0.1])];
    if g.dim() > 1 {
        terms.push(([0, 1, 0], [0.1, 0.2, -0.3]));
    }
    if g.dim() > 2 {
        terms.push(([0, 0, 1], [-0.2, 0.1, 0.2]));
    }
    CosineTest::new(g, terms, 1.0)
}

/// Residual of the `ε → 0` weak form along a run.
pub fn weak_residual(cfg: &RunConfig, traj: &[(f64, Field)]) -> Result<f64> {
    let g = cfg.grid()?;
    let v = cfg.velocity_source()?;
    let u0 = cfg.initial_field()?;
    let (times, snaps): (Vec<f64>, Vec<Field>) = traj.iter().cloned().unzip();
    estimates::weak_form_residual(&times, &snaps, &u0, &v, &sweep_test_function(&g))
}

#[derive(Clone, Debug, PartialEq)]
struct SweepPoint {
    eps: f64,
    modes: Option<usize>,
    cells: Vec<usize>,
}

impl SweepPoint {
    fn key(&self, param: &str) -> String {
        match param {
            "epsilon" => format!("modes={},cells={}", self.modes.map_or("-".into(), |m| m.to_string()), self.cells[0]),
            "modes" => format!("epsilon={},cells={}", self.eps, self.cells[0]),
            _ => format!("epsilon={},modes={}", self.eps, self.modes.map_or("-".into(), |m| m.to_string())),
        }
    }

    fn value(&self, param: &str) -> String {
        match param {
            "epsilon" => self.eps.to_string(),
            "modes" => self.modes.map_or("-".into(), |m| m.to_string()),
            _ => self.cells[0].to_string(),
        }
    }

    /// Larger is finer.
    fn fineness(&self, param: &str) -> f64 {
        match param {
            "epsilon" => -self.eps,
            "modes" => self.modes.unwrap_or(0) as f64,
            _ => self.cells[0] as f64,
        }
    }

    fn dir_name(&self) -> String {
        format!(
            "eps{}_n{}_N{}",
            self.eps,
            self.modes.map_or("-".into(), |m| m.to_string()),
            self.cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("x")
        )
    }
}

/// Exit code, verdict lines, trajectory and weak residual of one sub-run.
type SubRun = (i32, Vec<String>, Vec<(f64, Field)>, f64);

/// One row of the convergence table.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub parameter: String,
    pub value: String,
    /// The other parameters, held fixed along the row's group.
    pub fixed: String,
    /// Distance to the next-finer run of the group.
    pub cauchy: Option<f64>,
    /// Previous row's distance over this one.
    pub ratio: Option<f64>,
    pub weak_residual: f64,
}

pub fn write_sweep_table<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["parameter", "value", "fixed", "cauchy_sup_l2", "ratio", "weak_residual"])?;
    for r in rows {
        out.write_record([
            r.parameter.clone(),
            r.value.clone(),
            r.fixed.clone(),
            opt(r.cauchy),
            opt(r.ratio),
            r.weak_residual.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Run the cross-product of the sweep lists and tabulate Cauchy differences.
pub fn sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<(i32, Vec<SweepRow>)> {
    let sw = &cfg.sweep;
    if sw.is_empty() {
        return Err(Error::config("sweep", "no sweep lists given"));
    }
    let eps = if sw.epsilon.is_empty() { vec![cfg.eps] } else { sw.epsilon.clone() };
    let modes: Vec<Option<usize>> = if sw.modes.is_empty() { vec![cfg.modes] } else { sw.modes.iter().map(|&m| Some(m)).collect() };
    if cfg.scheme == Scheme::Parabolic && !sw.modes.is_empty() {
        return Err(Error::config("sweep.modes", "mode sweeps need the galerkin scheme"));
    }
    let cells: Vec<Vec<usize>> = if sw.cells.is_empty() {
        vec![cfg.cells.clone()]
    } else {
        sw.cells.iter().map(|&n| vec![n; cfg.cells.len()]).collect()
    };
    let mut points = Vec::new();
    for &e in &eps {
        for &m in &modes {
            for c in &cells {
                points.push(SweepPoint { eps: e, modes: m, cells: c.clone() });
            }
        }
    }
    fs::create_dir_all(&cfg.out_dir)?;
    info!("sweep: {} runs", points.len());
    let results: Vec<Result<SubRun>> = points
        .par_iter()
        .map(|p| {
            let mut sub = cfg.clone();
            sub.eps = p.eps;
            sub.modes = p.modes;
            sub.cells = p.cells.clone();
            sub.out_dir = cfg.out_dir.join(p.dir_name());
            let mut lines = Vec::new();
            let (code, run) = execute(&sub, &mut lines)?;
            let traj = run.trajectory()?;
            let weak = weak_residual(&sub, &traj)?;
            let text = String::from_utf8_lossy(&lines).lines().map(|l| format!("[{}] {l}", p.dir_name())).collect();
            Ok((code, text, traj, weak))
        })
        .collect();
    let mut code = EXIT_OK;
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        let (c, lines, traj, weak) = r?;
        for l in lines {
            writeln!(out, "{l}")?;
        }
        code = code.max(c);
        runs.push((traj, weak));
    }
    let mut rows = Vec::new();
    for (param, listed) in [("epsilon", !sw.epsilon.is_empty()), ("modes", !sw.modes.is_empty()), ("cells", !sw.cells.is_empty())] {
        if !listed {
            continue;
        }
        let mut groups: Vec<String> = points.iter().map(|p| p.key(param)).collect();
        groups.sort();
        groups.dedup();
        for key in groups {
            let mut members: Vec<usize> = (0..points.len()).filter(|&i| points[i].key(param) == key).collect();
            members.sort_by(|&a, &b| points[a].fineness(param).total_cmp(&points[b].fineness(param)));
            let mut prev: Option<f64> = None;
            for (j, &i) in members.iter().enumerate() {
                let cauchy = match members.get(j + 1) {
                    Some(&next) => Some(trajectory_distance(&runs[i].0, &runs[next].0)?),
                    None => None,
                };
                let ratio = match (prev, cauchy) {
                    (Some(a), Some(b)) => Some(a / b),
                    _ => None,
                };
                rows.push(SweepRow {
                    parameter: param.into(),
                    value: points[i].value(param),
                    fixed: key.clone(),
                    cauchy,
                    ratio,
                    weak_residual: runs[i].1,
                });
                prev = cauchy;
            }
            let diffs: Vec<f64> = rows.iter().filter(|r| r.parameter == param && r.fixed == key).filter_map(|r| r.cauchy).collect();
            if diffs.len() > 1 {
                let monotone = diffs.windows(2).all(|w| w[1] < w[0]);
                writeln!(
                    out,
                    "{} sweep {param} ({key}) Cauchy differences {}",
                    if monotone { "PASS" } else { "WARN" },
                    if monotone { "strictly decreasing" } else { "not monotone" }
                )?;
            }
        }
    }
    write_sweep_table(&rows, create(&cfg.out_dir.join("convergence.csv"))?)?;
    Ok((code, rows))
}

pub fn cmd_sweep(opts: &Options, out: &mut dyn Write) -> i32 {
    let r = (|| {
        let cfg = load(opts)?;
        let (code, _) = sweep(&cfg, out)?;
        writeln!(out, "RESULT {}", if code == EXIT_OK { "pass" } else { "fail" })?;
        Ok(code)
    })();
    finish(out, r)
}

/// Snapshots of a finished parabolic run directory, in index order.
pub fn load_snapshots(dir: &Path, grid: &Grid) -> Result<Vec<Snapshot>> {
    let mut rd = csv::Reader::from_path(dir.join("snapshots.csv"))?;
    let mut snaps = Vec::new();
    for row in rd.records() {
        let row = row?;
        let t: f64 = row
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("snapshots.csv: bad time column".into()))?;
        let read = |col: usize| -> Result<Field> {
            let name = row.get(col).ok_or_else(|| Error::Format("snapshots.csv: missing file column".into()))?;
            let f = fs::File::open(dir.join(name))?;
            let field = io::read_binary(std::io::BufReader::new(f), grid.extents())?;
            field.expect_on(grid)?;
            Ok(field)
        };
        snaps.push(Snapshot { t, u: read(2)?, dtu: read(3)? });
    }
    Ok(snaps)
}

/// Outcome of the flow-map checks.
#[derive(Clone, Debug)]
pub struct GaugeResult {
    pub report: EnergyReport,
    pub max_det_deviation: f64,
    pub residual: Vec<(f64, f64)>,
}

/// Integrate the flow map along the snapshot times and check volume
/// preservation and the material-derivative identity.
pub fn gauge(cfg: &RunConfig, snapshots: &[Snapshot], v: &VelocitySource, dir: &Path) -> Result<GaugeResult> {
    let g = *v.grid();
    let gs = &cfg.gauge;
    if snapshots.len() < 2 {
        return Err(Error::config("output.snapshot_every", "the gauge check needs at least two snapshots"));
    }
    let spacing = snapshots[1].t - snapshots[0].t;
    for w in snapshots.windows(2) {
        if ((w[1].t - w[0].t) - spacing).abs() > 1e-9 * spacing.max(1.0) {
            return Err(Error::Misaligned("snapshots are not uniformly spaced".into()));
        }
    }
    let dt = gs.dt.unwrap_or(spacing);
    let sub = (spacing / dt).round() as usize;
    if sub == 0 || ((sub as f64) * dt - spacing).abs() > 1e-9 * spacing {
        return Err(Error::config("gauge.dt", format!("must divide the snapshot spacing {spacing}")));
    }
    let t_end = snapshots.last().expect("two snapshots").t;
    if snapshots[0].t != 0.0 {
        return Err(Error::Misaligned("snapshots must start at t = 0".into()));
    }
    let opts = FlowOptions {
        gamma: gs.gamma,
        dt,
        t_end,
        interp: gs.interp,
        record_every: sub,
        satellite_delta: Some(gs.delta),
        tol_conf: 1e-6,
        lattice: Some(gs.seeds),
    };
    let seeds = flowmap::seed_lattice(&g, gs.seeds);
    let fm = flowmap::integrate_flow(v, &seeds, &opts)?;
    let mut dev = Vec::with_capacity(fm.times.len());
    for k in 0..fm.times.len() {
        dev.push(fm.jacobian_det_at(k)?.max_deviation());
    }
    let residual = if snapshots.len() >= 3 {
        flowmap::gauge_material_derivative_check(snapshots, &fm, v, gs.interp)?
    } else {
        Vec::new()
    };
    fm.write_csv(create(&dir.join("gauge_det.csv"))?)?;
    let mut w = csv::Writer::from_writer(create(&dir.join("gauge_residual.csv"))?);
    w.write_record(["t", "residual"])?;
    for (t, r) in &residual {
        w.write_record([t.to_string(), r.to_string()])?;
    }
    w.flush()?;
    let tol = &cfg.tolerances;
    let n = fm.times.len();
    let mut records = vec![EstimateRecord {
        name: estimates::GAUGE.into(),
        kind: CheckKind::Absolute,
        hard: true,
        tol: tol.tol_vol,
        times: fm.times.clone(),
        lhs: dev.clone(),
        rhs: vec![0.0; n],
    }];
    if !residual.is_empty() {
        records.push(EstimateRecord {
            name: GAUGE_RESIDUAL.into(),
            kind: CheckKind::Absolute,
            hard: true,
            tol: tol.tol_residual,
            times: residual.iter().map(|r| r.0).collect(),
            lhs: residual.iter().map(|r| r.1).collect(),
            rhs: vec![0.0; residual.len()],
        });
    }
    let max_det_deviation = dev.iter().copied().fold(0.0, f64::max);
    Ok(GaugeResult { report: EnergyReport { records, ..Default::default() }, max_det_deviation, residual })
}

pub fn cmd_gauge(opts: &Options, out: &mut dyn Write) -> i32 {
    let r = (|| {
        let mut cfg = load(opts)?;
        let (run_cfg, snapshots, dir) = match cfg.gauge.run_dir.clone() {
            Some(run_dir) => {
                let mut stored = RunConfig::load(&run_dir.join("run.ini"))?;
                stored.tolerances = cfg.tolerances;
                stored.gauge = cfg.gauge.clone();
                if stored.scheme != Scheme::Parabolic {
                    return Err(Error::config("gauge.run_dir", "the gauge check needs a parabolic run"));
                }
                let snaps = load_snapshots(&run_dir, &stored.grid()?)?;
                let dir = opts.out.clone().unwrap_or(run_dir);
                (stored, snaps, dir)
            }
            None => {
                if cfg.scheme != Scheme::Parabolic {
                    return Err(Error::config("run.scheme", "the gauge check needs the parabolic scheme"));
                }
                // the material derivative needs every recorded sample
                cfg.snapshot_every = 1;
                let (code, run) = execute(&cfg, out)?;
                if code == EXIT_BLOWUP {
                    return Ok(code);
                }
                let RunOutput::Parabolic(run) = run else { unreachable!("scheme checked above") };
                let dir = cfg.out_dir.clone();
                (cfg, run.snapshots, dir)
            }
        };
        fs::create_dir_all(&dir)?;
        let v = run_cfg.velocity_source()?;
        let res = gauge(&run_cfg, &snapshots, &v, &dir)?;
        res.report.write_csv(create(&dir.join("gauge_report.csv"))?)?;
        let code = verdict(&res.report, out, &dir, "gauge_summary.txt")?;
        writeln!(out, "RESULT {}", if code == EXIT_OK { "pass" } else { "fail" })?;
        Ok(code)
    })();
    finish(out, r)
}

/// Tolerance key each named check is evaluated at.
pub fn tolerance_key(name: &str) -> Option<&'static str> {
    Some(match name {
        estimates::L2_LAW => "identity",
        estimates::H1_GRONWALL
        | estimates::LAP_DISSIPATION
        | estimates::DTU_BOUND
        | estimates::H1_WEAK => "envelope",
        estimates::FORM1 => "form1",
        estimates::SPHERE | estimates::MAX_PRINCIPLE => "sphere",
        estimates::ORTH => "orth",
        estimates::G_BOUND => "g_factor",
        estimates::GAUGE => "tol_vol",
        GAUGE_RESIDUAL => "tol_residual",
        _ => return None,
    })
}

/// Re-evaluate stored records, applying tolerance overrides.
pub fn recheck(report: &mut EnergyReport, overrides: &[String]) -> Result<()> {
    let mut tol = Tolerances::default();
    let mut touched = Vec::new();
    for spec in overrides {
        RunConfig::apply_override(&mut tol, spec)?;
        let key = spec.split_once('=').map_or(spec.as_str(), |(k, _)| k).trim();
        touched.push(key.strip_prefix("tolerances.").unwrap_or(key).to_string());
    }
    for r in &mut report.records {
        let Some(key) = tolerance_key(&r.name) else { continue };
        if !touched.iter().any(|t| t == key) {
            continue;
        }
        let value = tol.get(key).expect("known key");
        if r.name == estimates::G_BOUND {
            let g0 = r.lhs.first().copied().unwrap_or(0.0);
            r.rhs.iter_mut().for_each(|x| *x = value * g0);
        } else {
            r.tol = value;
        }
    }
    Ok(())
}

pub fn cmd_verify(opts: &Options, dir: Option<&Path>, out: &mut dyn Write) -> i32 {
    let r = (|| {
        let dir: PathBuf = match (dir, &opts.out, &opts.config) {
            (Some(d), _, _) => d.to_path_buf(),
            (None, Some(d), _) => d.clone(),
            (None, None, Some(_)) => load(opts)?.out_dir,
            _ => return Err(Error::config("verify", "give a run directory, --out or --config")),
        };
        let mut code = EXIT_OK;
        let mut found = false;
        for file in ["report.csv", "gauge_report.csv"] {
            let path = dir.join(file);
            if !path.exists() {
                continue;
            }
            found = true;
            let mut report = EnergyReport::read_csv(fs::File::open(&path)?)?;
            recheck(&mut report, &opts.tol_overrides)?;
            for l in report.summary() {
                writeln!(out, "{l}")?;
            }
            if !report.all_hard_pass() {
                code = EXIT_ESTIMATE;
            }
        }
        if !found {
            return Err(Error::config("verify", format!("no report found in {}", dir.display())));
        }
        if let Ok(meta) = fs::read_to_string(dir.join("run.meta")) {
            if let Some(b) = meta.lines().find_map(|l| l.strip_prefix("blowup = ")) {
                if b != "none" {
                    warn!("run blew up; last valid time {b}");
                    writeln!(out, "BLOWUP recorded; last valid time {b}")?;
                    code = EXIT_BLOWUP;
                }
            }
        }
        writeln!(out, "RESULT {}", if code == EXIT_OK { "pass" } else { "fail" })?;
        Ok(code)
    })();
    finish(out, r)
}
