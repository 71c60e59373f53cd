//! Run configuration: flat `key = value` text under `[section]` headers.
//!
//! ```text
//! [run]
//! scheme = parabolic
//!
//! [grid]
//! cells = 32, 32
//!
//! [initial]
//! preset = tilted-cosine(0.5, 1)
//!
//! [velocity]
//! preset = psi-sine(1, 1)
//!
//! [solver]
//! epsilon = 0.25
//! dt = 1e-4
//! t_end = 0.25
//! ```
//!
//! Unknown sections and keys are rejected so that typos surface as config
//! errors naming the offending key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimates::Tolerances;
use crate::fields::{self, InitialPreset, VelocityPreset, VelocitySource};
use crate::flowmap::Interp;
use crate::galerkin::GalerkinConfig;
use crate::grid::{Field, Grid};
use crate::io;
use crate::parabolic::{ParabolicConfig, Stepper, DEFAULT_COMPAT_TOL, DEFAULT_GUARD};

/// Parsed sections in key order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (no, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(format!("line {}", no + 1), "unterminated section header"))?
                    .trim();
                sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", no + 1), "expected `key = value`"))?;
            let section = current
                .as_ref()
                .ok_or_else(|| Error::config(key.trim(), "key appears before any section header"))?;
            let key = key.trim().to_string();
            let slot = sections.get_mut(section).expect("section inserted on header");
            if slot.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::config(format!("{section}.{key}"), "duplicate key"));
            }
        }
        Ok(Self { sections })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections.entry(section.into()).or_default().insert(key.into(), value.into());
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key)
            .ok_or_else(|| Error::config(format!("{section}.{key}"), "missing required key"))
    }

    fn parse_opt<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|s| s.parse::<T>().map_err(|e| Error::config(format!("{section}.{key}"), format!("`{s}`: {e}"))))
            .transpose()
    }

    fn parse_req<T: FromStr>(&self, section: &str, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parse_opt(section, key)?
            .ok_or_else(|| Error::config(format!("{section}.{key}"), "missing required key"))
    }

    fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(raw) = self.get(section, key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<T>().map_err(|e| Error::config(format!("{section}.{key}"), format!("`{s}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn check_known(&self) -> Result<()> {
        for (section, keys) in &self.sections {
            let known: &[&str] = match section.as_str() {
                "run" => &["scheme", "seed"],
                "grid" => &["extents", "cells"],
                "initial" => &["preset"],
                "velocity" => &["preset", "trajectory"],
                "solver" => &[
                    "epsilon", "modes", "dt", "t_end", "stepper", "renormalize", "guard", "record_every", "compat_tol",
                ],
                "output" => &["dir", "snapshot_every"],
                "tolerances" => &Tolerances::KEYS,
                "sweep" => &["epsilon", "modes", "cells"],
                "gauge" => &["run_dir", "seeds", "dt", "t_end", "gamma", "interp", "delta"],
                other => return Err(Error::config(other, "unknown section")),
            };
            if let Some(k) = keys.keys().find(|k| !known.contains(&k.as_str())) {
                return Err(Error::config(format!("{section}.{k}"), "unknown key"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Galerkin,
    Parabolic,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "galerkin" => Ok(Scheme::Galerkin),
            "parabolic" => Ok(Scheme::Parabolic),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Galerkin => "galerkin",
            Scheme::Parabolic => "parabolic",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VelocitySpec {
    Preset(VelocityPreset),
    /// Manifest of `t path` lines; each file is a binary dump of a stream
    /// function (2D, one component) or vector potential (3D, three).
    Trajectory(PathBuf),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSpec {
    pub epsilon: Vec<f64>,
    pub modes: Vec<usize>,
    /// Cells per axis.
    pub cells: Vec<usize>,
}

impl SweepSpec {
    pub fn is_empty(&self) -> bool {
        self.epsilon.is_empty() && self.modes.is_empty() && self.cells.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaugeSpec {
    pub run_dir: Option<PathBuf>,
    /// Seeds per axis.
    pub seeds: usize,
    /// Flow-map step; defaults to the solver step.
    pub dt: Option<f64>,
    /// Defaults to the solver's `t_end`.
    pub t_end: Option<f64>,
    pub gamma: f64,
    pub interp: Interp,
    pub delta: f64,
}

impl Default for GaugeSpec {
    fn default() -> Self {
        Self { run_dir: None, seeds: 33, dt: None, t_end: None, gamma: 1.0, interp: Interp::Cubic, delta: 1e-5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub seed: Option<u64>,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
    pub initial: InitialPreset,
    pub velocity: VelocitySpec,
    pub eps: f64,
    pub modes: Option<usize>,
    pub dt: f64,
    pub t_end: f64,
    pub stepper: Stepper,
    pub renormalize: bool,
    pub guard: Option<f64>,
    pub record_every: usize,
    pub compat_tol: f64,
    pub out_dir: PathBuf,
    /// Dump fields every this many recorded samples; 0 keeps the first and last only.
    pub snapshot_every: usize,
    pub tolerances: Tolerances,
    pub sweep: SweepSpec,
    pub gauge: GaugeSpec,
    /// Directory relative paths in the file resolve against.
    pub base_dir: PathBuf,
}

fn cfg_err(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(key, other.to_string()),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::fs::canonicalize(parent)?;
        Self::from_ini(&Ini::parse(&text)?, &base)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_ini(&Ini::parse(text)?, Path::new("."))
    }

    pub fn from_ini(ini: &Ini, base: &Path) -> Result<Self> {
        ini.check_known()?;
        let scheme: Scheme = ini.parse_req("run", "scheme")?;
        let cells: Vec<usize> = ini
            .list("grid", "cells")?
            .ok_or_else(|| Error::config("grid.cells", "missing required key"))?;
        let extents: Vec<f64> = ini.list("grid", "extents")?.unwrap_or_else(|| vec![1.0; cells.len()]);
        if extents.len() != cells.len() {
            return Err(Error::config("grid.extents", format!("{} extents for {} axes", extents.len(), cells.len())));
        }
        Grid::new(&extents, &cells).map_err(cfg_err("grid.cells"))?;
        let initial: InitialPreset = ini.require("initial", "preset")?.parse().map_err(cfg_err("initial.preset"))?;
        let velocity = match (ini.get("velocity", "preset"), ini.get("velocity", "trajectory")) {
            (Some(_), Some(_)) => {
                return Err(Error::config("velocity.trajectory", "give either a preset or a trajectory, not both"))
            }
            (Some(p), None) => VelocitySpec::Preset(p.parse().map_err(cfg_err("velocity.preset"))?),
            (None, Some(t)) => VelocitySpec::Trajectory(base.join(t)),
            (None, None) => VelocitySpec::Preset(VelocityPreset::Zero),
        };
        let eps: f64 = ini.parse_req("solver", "epsilon")?;
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::config("solver.epsilon", format!("must lie in (0, 1], got {eps}")));
        }
        let modes: Option<usize> = ini.parse_opt("solver", "modes")?;
        if scheme == Scheme::Galerkin && modes.is_none() {
            return Err(Error::config("solver.modes", "missing required key for the galerkin scheme"));
        }
        let dt: f64 = ini.parse_req("solver", "dt")?;
        let t_end: f64 = ini.parse_req("solver", "t_end")?;
        if !(dt > 0.0 && t_end > 0.0) {
            return Err(Error::config("solver.dt", "dt and t_end must be positive"));
        }
        let stepper = match ini.get("solver", "stepper") {
            Some(s) => s.parse().map_err(cfg_err("solver.stepper"))?,
            None => Stepper::ExplicitRk4,
        };
        let record_every = ini.parse_opt("solver", "record_every")?.unwrap_or(1usize);
        if record_every == 0 {
            return Err(Error::config("solver.record_every", "must be at least 1"));
        }
        let mut tolerances = Tolerances::default();
        for key in Tolerances::KEYS {
            if let Some(v) = ini.parse_opt::<f64>("tolerances", key)? {
                tolerances.set(key, v)?;
            }
        }
        let sweep = SweepSpec {
            epsilon: ini.list("sweep", "epsilon")?.unwrap_or_default(),
            modes: ini.list("sweep", "modes")?.unwrap_or_default(),
            cells: ini.list("sweep", "cells")?.unwrap_or_default(),
        };
        let gauge = GaugeSpec {
            run_dir: ini.get("gauge", "run_dir").map(|p| base.join(p)),
            seeds: ini.parse_opt("gauge", "seeds")?.unwrap_or(33),
            dt: ini.parse_opt("gauge", "dt")?,
            t_end: ini.parse_opt("gauge", "t_end")?,
            gamma: ini.parse_opt("gauge", "gamma")?.unwrap_or(1.0),
            interp: match ini.get("gauge", "interp") {
                Some(s) => s.parse().map_err(cfg_err("gauge.interp"))?,
                None => Interp::Cubic,
            },
            delta: ini.parse_opt("gauge", "delta")?.unwrap_or(1e-5),
        };
        if gauge.seeds < 2 {
            return Err(Error::config("gauge.seeds", "need at least two seeds per axis"));
        }
        Ok(Self {
            scheme,
            seed: ini.parse_opt("run", "seed")?,
            extents,
            cells,
            initial,
            velocity,
            eps,
            modes,
            dt,
            t_end,
            stepper,
            renormalize: ini.parse_opt("solver", "renormalize")?.unwrap_or(true),
            guard: ini.parse_opt("solver", "guard")?,
            record_every,
            compat_tol: ini.parse_opt("solver", "compat_tol")?.unwrap_or(DEFAULT_COMPAT_TOL),
            out_dir: base.join(ini.get("output", "dir").unwrap_or("out")),
            snapshot_every: ini.parse_opt("output", "snapshot_every")?.unwrap_or(0),
            tolerances,
            sweep,
            gauge,
            base_dir: base.to_path_buf(),
        })
    }

    /// Apply a `KEY=VAL` tolerance override (`KEY` with or without the
    /// `tolerances.` prefix).
    pub fn apply_override(tol: &mut Tolerances, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::config(spec, "expected KEY=VAL"))?;
        let key = key.trim();
        let key = key.strip_prefix("tolerances.").unwrap_or(key);
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| Error::config(format!("tolerances.{key}"), format!("{e}")))?;
        tol.set(key, value)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(&self.extents, &self.cells)
    }

    pub fn initial_field(&self) -> Result<Field> {
        let preset = match (&self.initial, self.seed) {
            (InitialPreset::RandomSmooth { modes, .. }, Some(seed)) => {
                InitialPreset::RandomSmooth { seed, modes: *modes }
            }
            (p, _) => p.clone(),
        };
        Ok(preset.sample(&self.grid()?)?.into_field())
    }

    pub fn velocity_source(&self) -> Result<VelocitySource> {
        let g = self.grid()?;
        match &self.velocity {
            VelocitySpec::Preset(p) => Ok(VelocitySource::Static(p.build(&g).map_err(cfg_err("velocity.preset"))?)),
            VelocitySpec::Trajectory(path) => load_trajectory(path, &g),
        }
    }

    pub fn galerkin_config(&self) -> Result<GalerkinConfig> {
        let modes = self.modes.ok_or_else(|| Error::config("solver.modes", "missing required key"))?;
        let mut cfg = GalerkinConfig::new(self.initial_field()?, self.velocity_source()?, self.eps, modes, self.dt, self.t_end);
        if let Some(g) = self.guard {
            cfg.guard = g;
        }
        cfg.tolerances = self.tolerances;
        Ok(cfg)
    }

    pub fn parabolic_config(&self) -> Result<ParabolicConfig> {
        let mut cfg = ParabolicConfig::new(self.initial_field()?, self.velocity_source()?, self.eps, self.dt, self.t_end);
        cfg.stepper = self.stepper;
        cfg.renormalize = self.renormalize;
        cfg.guard = self.guard.unwrap_or(DEFAULT_GUARD);
        cfg.record_every = self.record_every;
        cfg.compat_tol = self.compat_tol;
        cfg.tolerances = self.tolerances;
        Ok(cfg)
    }

    /// Stable `key = value` rendering used for the copy stored with a run.
    pub fn to_ini(&self) -> String {
        let list = |v: &[String]| v.join(", ");
        let mut s = String::new();
        s.push_str(&format!("[run]\nscheme = {}\n", self.scheme.as_str()));
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed = {seed}\n"));
        }
        s.push_str(&format!(
            "\n[grid]\nextents = {}\ncells = {}\n",
            list(&self.extents.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
            list(&self.cells.iter().map(|x| x.to_string()).collect::<Vec<_>>())
        ));
        s.push_str(&format!("\n[initial]\npreset = {}\n", initial_name(&self.initial)));
        match &self.velocity {
            VelocitySpec::Preset(p) => s.push_str(&format!("\n[velocity]\npreset = {}\n", velocity_name(p))),
            VelocitySpec::Trajectory(p) => s.push_str(&format!("\n[velocity]\ntrajectory = {}\n", p.display())),
        }
        s.push_str(&format!("\n[solver]\nepsilon = {}\n", self.eps));
        if let Some(n) = self.modes {
            s.push_str(&format!("modes = {n}\n"));
        }
        s.push_str(&format!(
            "dt = {}\nt_end = {}\nstepper = {}\nrenormalize = {}\nrecord_every = {}\ncompat_tol = {}\n",
            self.dt,
            self.t_end,
            self.stepper.as_str(),
            self.renormalize,
            self.record_every,
            self.compat_tol
        ));
        if let Some(g) = self.guard {
            s.push_str(&format!("guard = {g}\n"));
        }
        s.push_str("\n[tolerances]\n");
        for key in Tolerances::KEYS {
            s.push_str(&format!("{key} = {}\n", self.tolerances.get(key).expect("known key")));
        }
        s
    }
}

pub fn initial_name(p: &InitialPreset) -> String {
    match p {
        InitialPreset::Constant(d) => format!("constant({}, {}, {})", d[0], d[1], d[2]),
        InitialPreset::TiltedCosine { alpha, k } => format!("tilted-cosine({alpha}, {k})"),
        InitialPreset::RandomSmooth { seed, modes } => format!("random-smooth({seed}, {modes})"),
    }
}

pub fn velocity_name(p: &VelocityPreset) -> String {
    match p {
        VelocityPreset::Zero => "zero".into(),
        VelocityPreset::PsiSine { k, l, amplitude } => format!("psi-sine({k}, {l}, {amplitude})"),
    }
}

/// Read a velocity trajectory manifest: one `t path` pair per line.
pub fn load_trajectory(manifest: &Path, grid: &Grid) -> Result<VelocitySource> {
    let key = "velocity.trajectory";
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| Error::config(key, format!("cannot read {}: {e}", manifest.display())))?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for line in text.lines().map(|l| l.split('#').next().unwrap_or("").trim()).filter(|l| !l.is_empty()) {
        let (t, file) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| Error::config(key, format!("expected `t path`, got `{line}`")))?;
        let t: f64 = t.parse().map_err(|e| Error::config(key, format!("time `{t}`: {e}")))?;
        let f = std::fs::File::open(dir.join(file.trim()))?;
        let pot = io::read_binary(std::io::BufReader::new(f), grid.extents())?;
        pot.expect_on(grid)?;
        let v = match grid.dim() {
            2 => fields::stream_function_field_2d(&pot)?,
            3 => fields::vector_potential_field_3d(&pot)?,
            _ => return Err(Error::config(key, "trajectories need a 2D or 3D grid")),
        };
        times.push(t);
        samples.push(v);
    }
    VelocitySource::trajectory(times, samples)
}
