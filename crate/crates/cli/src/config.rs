//! Flat `key = value` experiment configuration with dotted section names.
//!
//! ```text
//! # comment
//! weight.case = axis
//! weight.exponent = 0.5
//! sweep.p = [1.5, 2, 7/3, 3]
//! evolve.u0 = bump(0, 1, 1)
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use fujita_lab::evolve::{EvolveConfig, SmallData};
use fujita_lab::kernel::TimeScheme;
use fujita_lab::profile::Profile;
use fujita_lab::semigroup::{DataScaling, NormKind};
use fujita_lab::weights::{WeightCase, WeightSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Syntax { path: String, line: usize, message: String },
    #[error("{path}:{line}: field `{key}`: {message}")]
    Field { path: String, line: usize, key: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Initial datum; a corollary profile without `p` follows the run's `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub profile: Profile,
    pub follow_p: bool,
}

impl DataSpec {
    pub fn resolve(&self, p: f64) -> Profile {
        match (&self.profile, self.follow_p) {
            (Profile::Corollary { delta, .. }, true) => Profile::Corollary { delta: *delta, p },
            (profile, _) => profile.clone(),
        }
    }
}

impl fmt::Display for DataSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.profile, self.follow_p) {
            (Profile::Corollary { delta, .. }, true) => write!(f, "corollary_profile({delta})"),
            (Profile::Table { .. }, _) => write!(f, "{}", self.profile),
            (p, _) => write!(f, "{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolveMode {
    Continuation,
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub case: WeightCase,
    pub exponent: f64,
    pub dimension: usize,

    pub grid_radius: f64,
    pub grid_cells: usize,
    pub grid_grading: f64,

    pub kernel_times: Vec<f64>,
    pub kernel_scheme: TimeScheme,

    pub evolve: EvolveConfig,
    pub evolve_u0: DataSpec,
    pub evolve_mode: EvolveMode,

    pub global_radius: f64,
    pub global_cells: usize,
    pub global_grading: f64,
    pub global_horizon: f64,
    pub global_delta: f64,
    pub global_mode: SmallData,
    pub global_calibrate: bool,
    pub global_max_halvings: usize,

    pub sweep_p: Vec<f64>,
    pub sweep_alpha: Vec<f64>,
    pub sweep_subcritical_u0: DataSpec,
    pub sweep_supercritical_u0: DataSpec,

    pub decay_pairs: Vec<(f64, f64, NormKind)>,
    pub decay_times: Vec<f64>,
    pub decay_scaling: DataScaling,
    pub decay_profile: DataSpec,

    pub lorentz_cases: usize,
    pub lorentz_r: Vec<f64>,

    /// Table paths referenced by data descriptors, for the manifest.
    table_sources: BTreeMap<String, PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let inf = f64::INFINITY;
        Self {
            case: WeightCase::AxisPower,
            exponent: 0.5,
            dimension: 1,
            grid_radius: 64.0,
            grid_cells: 256,
            grid_grading: 2.0,
            kernel_times: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            kernel_scheme: TimeScheme::Exponential,
            evolve: EvolveConfig { qs: vec![2.0, inf], ..EvolveConfig::default() },
            evolve_u0: DataSpec { profile: Profile::Bump { center: 0.0, width: 1.0, height: 1.0 }, follow_p: false },
            evolve_mode: EvolveMode::Continuation,
            global_radius: 4096.0,
            global_cells: 256,
            global_grading: 2.0,
            global_horizon: 262144.0,
            global_delta: 1.0,
            global_mode: SmallData::WeakCritical,
            global_calibrate: true,
            global_max_halvings: 8,
            sweep_p: vec![1.5, 2.0, 7.0 / 3.0, 3.0],
            sweep_alpha: vec![0.5],
            sweep_subcritical_u0: DataSpec {
                profile: Profile::Bump { center: 0.0, width: 1.0, height: 1.0 },
                follow_p: false,
            },
            sweep_supercritical_u0: DataSpec { profile: Profile::Corollary { delta: 1.0, p: 2.0 }, follow_p: true },
            decay_pairs: vec![
                (1.0, inf, NormKind::Strong),
                (1.0, 2.0, NormKind::Strong),
                (2.0, inf, NormKind::Strong),
                (2.0, inf, NormKind::Weak),
            ],
            decay_times: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            decay_scaling: DataScaling::ParabolicRescaled,
            decay_profile: DataSpec { profile: Profile::Bump { center: 0.0, width: 1.0, height: 1.0 }, follow_p: false },
            lorentz_cases: 50,
            lorentz_r: vec![1.0, 2.0, 4.0],
            table_sources: BTreeMap::new(),
        }
    }
}

const KEYS: &[&str] = &[
    "weight.case",
    "weight.exponent",
    "weight.dimension",
    "grid.radius",
    "grid.cells",
    "grid.grading",
    "kernel.times",
    "kernel.scheme",
    "kernel.steps",
    "evolve.p",
    "evolve.u0",
    "evolve.mode",
    "evolve.horizon",
    "evolve.duhamel_steps",
    "evolve.picard_tol",
    "evolve.max_picard",
    "evolve.blowup_factor",
    "evolve.qs",
    "evolve.ladder_start",
    "global.radius",
    "global.cells",
    "global.grading",
    "global.horizon",
    "global.delta",
    "global.mode",
    "global.r",
    "global.calibrate",
    "global.max_halvings",
    "sweep.p",
    "sweep.alpha",
    "sweep.subcritical_u0",
    "sweep.supercritical_u0",
    "decay.pairs",
    "decay.times",
    "decay.scaling",
    "decay.profile",
    "lorentz.cases",
    "lorentz.r",
];

struct Entry {
    line: usize,
    value: String,
}

struct Parser {
    path: String,
    base: PathBuf,
    entries: BTreeMap<String, Entry>,
}

impl Parser {
    fn field(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let line = self.entries.get(key).map(|e| e.line).unwrap_or(0);
        ConfigError::Field { path: self.path.clone(), line, key: key.to_string(), message: message.into() }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn number(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => parse_number(s).map_err(|m| self.field(key, m)),
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s.parse::<usize>().map_err(|_| self.field(key, format!("expected a nonnegative integer, got `{s}`"))),
        }
    }

    fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(s) => {
                let items = split_list(s);
                if items.is_empty() {
                    return Err(self.field(key, "list is empty"));
                }
                items.iter().map(|x| parse_number(x)).collect::<Result<_, _>>().map_err(|m| self.field(key, m))
            }
        }
    }

    fn word<'a>(&'a self, key: &str, default: &'a str, choices: &[&str]) -> Result<&'a str, ConfigError> {
        let v = self.raw(key).unwrap_or(default);
        if choices.contains(&v) {
            Ok(v)
        } else {
            Err(self.field(key, format!("expected one of {}, got `{v}`", choices.join(", "))))
        }
    }

    fn data(&self, key: &str, default: &DataSpec, sources: &mut BTreeMap<String, PathBuf>) -> Result<DataSpec, ConfigError> {
        let Some(s) = self.raw(key) else { return Ok(default.clone()) };
        let (name, args) = parse_call(s).ok_or_else(|| self.field(key, format!("expected name(args), got `{s}`")))?;
        if name == "table" {
            if args.len() != 1 {
                return Err(self.field(key, "table(path) takes one argument"));
            }
            let path = self.base.join(args[0].trim_matches('"'));
            let profile = Profile::load_table(&path).map_err(|e| self.field(key, e.to_string()))?;
            sources.insert(key.to_string(), path);
            return Ok(DataSpec { profile, follow_p: false });
        }
        let nums: Vec<f64> = args.iter().map(|a| parse_number(a)).collect::<Result<_, _>>().map_err(|m| self.field(key, m))?;
        let arity = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(self.field(key, format!("{name} takes {n} arguments, got {}", nums.len())))
            }
        };
        let spec = match name {
            "bump" => {
                arity(3)?;
                DataSpec { profile: Profile::Bump { center: nums[0], width: nums[1], height: nums[2] }, follow_p: false }
            }
            "corollary_profile" if nums.len() == 1 => {
                DataSpec { profile: Profile::Corollary { delta: nums[0], p: 2.0 }, follow_p: true }
            }
            "corollary_profile" => {
                arity(2)?;
                DataSpec { profile: Profile::Corollary { delta: nums[0], p: nums[1] }, follow_p: false }
            }
            "indicator" => {
                arity(1)?;
                DataSpec { profile: Profile::Indicator { radius: nums[0] }, follow_p: false }
            }
            other => {
                return Err(self.field(
                    key,
                    format!("unknown data descriptor `{other}` (expected bump, corollary_profile, indicator, table)"),
                ))
            }
        };
        spec.profile.validate().map_err(|e| self.field(key, e.to_string()))?;
        Ok(spec)
    }
}

fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let lower = s.to_ascii_lowercase();
    if lower == "inf" || lower == "infinity" {
        return Ok(f64::INFINITY);
    }
    let value = if let Some((a, b)) = s.split_once('/') {
        let (a, b) = (a.trim().parse::<f64>(), b.trim().parse::<f64>());
        match (a, b) {
            (Ok(a), Ok(b)) if b != 0.0 => a / b,
            _ => return Err(format!("expected a number or fraction, got `{s}`")),
        }
    } else {
        s.parse::<f64>().map_err(|_| format!("expected a number, got `{s}`"))?
    };
    if value.is_nan() {
        return Err(format!("`{s}` is not a number"));
    }
    Ok(value)
}

fn split_list(s: &str) -> Vec<String> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    inner.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn parse_call(s: &str) -> Option<(&str, Vec<String>)> {
    let s = s.trim();
    let open = s.find('(')?;
    if !s.ends_with(')') {
        return None;
    }
    let name = s[..open].trim();
    let args = s[open + 1..s.len() - 1].split(',').map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect();
    Some((name, args))
}

/// `(q, r, kind)` triples written as `strong(1, inf)` or `weak(2, 4)`.
fn parse_pairs(s: &str) -> Result<Vec<(f64, f64, NormKind)>, String> {
    let mut out = Vec::new();
    let mut rest = s.trim().trim_start_matches('[').trim_end_matches(']').trim();
    while !rest.is_empty() {
        let close = rest.find(')').ok_or_else(|| format!("unterminated pair in `{s}`"))?;
        let (name, args) = parse_call(&rest[..=close]).ok_or_else(|| format!("bad pair in `{s}`"))?;
        let kind = match name {
            "strong" => NormKind::Strong,
            "weak" => NormKind::Weak,
            other => return Err(format!("pair kind must be strong or weak, got `{other}`")),
        };
        if args.len() != 2 {
            return Err(format!("{name}(q, r) takes two exponents"));
        }
        out.push((parse_number(&args[0])?, parse_number(&args[1])?, kind));
        rest = rest[close + 1..].trim_start().trim_start_matches(',').trim_start();
    }
    if out.is_empty() {
        return Err("no pairs given".into());
    }
    Ok(out)
}

fn show(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x}")
    }
}

fn show_list(xs: &[f64]) -> String {
    format!("[{}]", xs.iter().map(|x| show(*x)).collect::<Vec<_>>().join(", "))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &path.display().to_string(), &base)
    }

    /// Parses and validates; `base` resolves relative table paths.
    pub fn parse(text: &str, path: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { path: path.to_string(), line, message };
            let (key, value) = content.split_once('=').ok_or_else(|| syntax(format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(syntax(format!("unknown field `{key}`")));
            }
            if entries.insert(key.to_string(), Entry { line, value: value.trim().to_string() }).is_some() {
                return Err(syntax(format!("field `{key}` given twice")));
            }
        }
        let p = Parser { path: path.to_string(), base: base.to_path_buf(), entries };
        let d = ExperimentConfig::default();
        let mut sources = BTreeMap::new();

        let case = match p.word("weight.case", "axis", &["axis", "radial"])? {
            "axis" => WeightCase::AxisPower,
            _ => WeightCase::RadialPower,
        };
        let exponent = p.number("weight.exponent", d.exponent)?;
        let dimension = p.count("weight.dimension", d.dimension)?;
        let checked_spec = |alpha: f64, key: &str| {
            WeightSpec::new(case, alpha, dimension).map_err(|e| {
                let key = if p.raw(key).is_some() { key } else { "weight.exponent" };
                p.field(key, e.to_string())
            })
        };
        checked_spec(exponent, "weight.exponent")?;

        let grid_radius = p.number("grid.radius", d.grid_radius)?;
        let grid_cells = p.count("grid.cells", d.grid_cells)?;
        let grid_grading = p.number("grid.grading", d.grid_grading)?;
        if !(grid_radius > 0.0 && grid_radius.is_finite()) {
            return Err(p.field("grid.radius", "must be positive"));
        }
        if grid_cells < 16 {
            return Err(p.field("grid.cells", "must be at least 16"));
        }
        if !(grid_grading >= 1.0) {
            return Err(p.field("grid.grading", "must be >= 1"));
        }

        let kernel_times = p.list("kernel.times", &d.kernel_times)?;
        if kernel_times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(p.field("kernel.times", "times must be positive"));
        }
        let kernel_scheme = match p.word("kernel.scheme", "exponential", &["exponential", "implicit"])? {
            "exponential" => TimeScheme::Exponential,
            _ => {
                let steps = p.count("kernel.steps", 200)?;
                if steps == 0 {
                    return Err(p.field("kernel.steps", "must be positive"));
                }
                TimeScheme::BackwardEuler { steps }
            }
        };

        let evolve = EvolveConfig {
            p: p.number("evolve.p", d.evolve.p)?,
            horizon: p.number("evolve.horizon", d.evolve.horizon)?,
            duhamel_steps: p.count("evolve.duhamel_steps", d.evolve.duhamel_steps)?,
            picard_tol: p.number("evolve.picard_tol", d.evolve.picard_tol)?,
            max_picard: p.count("evolve.max_picard", d.evolve.max_picard)?,
            blowup_factor: p.number("evolve.blowup_factor", d.evolve.blowup_factor)?,
            qs: p.list("evolve.qs", &d.evolve.qs)?,
            ladder_start: p.number("evolve.ladder_start", d.evolve.ladder_start)?,
        };
        if let Err(e) = evolve.validate() {
            let key = ["evolve.p", "evolve.horizon", "evolve.duhamel_steps", "evolve.picard_tol", "evolve.qs"]
                .into_iter()
                .find(|k| p.raw(k).is_some())
                .unwrap_or("evolve.p");
            return Err(p.field(key, e.to_string()));
        }
        let evolve_u0 = p.data("evolve.u0", &d.evolve_u0, &mut sources)?;
        let evolve_mode = match p.word("evolve.mode", "continuation", &["continuation", "local"])? {
            "continuation" => EvolveMode::Continuation,
            _ => EvolveMode::Local,
        };

        let global_radius = p.number("global.radius", d.global_radius)?;
        let global_cells = p.count("global.cells", d.global_cells)?;
        let global_grading = p.number("global.grading", d.global_grading)?;
        let global_horizon = p.number("global.horizon", d.global_horizon)?;
        let global_delta = p.number("global.delta", d.global_delta)?;
        if !(global_radius > 0.0 && global_horizon > 0.0 && global_delta > 0.0) {
            return Err(p.field("global.radius", "global radius, horizon and delta must be positive"));
        }
        if global_cells < 16 || !(global_grading >= 1.0) {
            return Err(p.field("global.cells", "global grid needs >= 16 cells and grading >= 1"));
        }
        let global_mode = match p.word("global.mode", "weak", &["weak", "balanced"])? {
            "weak" => SmallData::WeakCritical,
            _ => {
                let r = p.number("global.r", 1.0)?;
                if !(r >= 1.0) {
                    return Err(p.field("global.r", "must be >= 1"));
                }
                SmallData::Balanced { r }
            }
        };
        let global_calibrate = p.word("global.calibrate", "true", &["true", "false"])? == "true";
        let global_max_halvings = p.count("global.max_halvings", d.global_max_halvings)?;

        let sweep_p = p.list("sweep.p", &d.sweep_p)?;
        if let Some(bad) = sweep_p.iter().find(|x| !(**x > 1.0 && x.is_finite())) {
            return Err(p.field("sweep.p", format!("p must exceed 1, got {bad}")));
        }
        let sweep_alpha = p.list("sweep.alpha", &[exponent])?;
        for a in &sweep_alpha {
            checked_spec(*a, "sweep.alpha")?;
        }
        let sweep_subcritical_u0 = p.data("sweep.subcritical_u0", &d.sweep_subcritical_u0, &mut sources)?;
        let sweep_supercritical_u0 = p.data("sweep.supercritical_u0", &d.sweep_supercritical_u0, &mut sources)?;

        let decay_pairs = match p.raw("decay.pairs") {
            None => d.decay_pairs.clone(),
            Some(s) => parse_pairs(s).map_err(|m| p.field("decay.pairs", m))?,
        };
        for (q, r, kind) in &decay_pairs {
            if !(*q >= 1.0 && r >= q) || (*kind == NormKind::Weak && *q <= 1.0) {
                return Err(p.field("decay.pairs", format!("need 1 <= q <= r (q > 1 for weak), got ({q}, {r})")));
            }
        }
        let decay_times = p.list("decay.times", &d.decay_times)?;
        if decay_times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(p.field("decay.times", "times must be positive"));
        }
        let decay_scaling = match p.word("decay.scaling", "rescaled", &["rescaled", "fixed"])? {
            "rescaled" => DataScaling::ParabolicRescaled,
            _ => DataScaling::Fixed,
        };
        let decay_profile = p.data("decay.profile", &d.decay_profile, &mut sources)?;

        let lorentz_cases = p.count("lorentz.cases", d.lorentz_cases)?;
        let lorentz_r = p.list("lorentz.r", &d.lorentz_r)?;
        if lorentz_r.iter().any(|r| !(*r >= 1.0 && r.is_finite())) {
            return Err(p.field("lorentz.r", "exponents must be finite and >= 1"));
        }

        Ok(Self {
            case,
            exponent,
            dimension,
            grid_radius,
            grid_cells,
            grid_grading,
            kernel_times,
            kernel_scheme,
            evolve,
            evolve_u0,
            evolve_mode,
            global_radius,
            global_cells,
            global_grading,
            global_horizon,
            global_delta,
            global_mode,
            global_calibrate,
            global_max_halvings,
            sweep_p,
            sweep_alpha,
            sweep_subcritical_u0,
            sweep_supercritical_u0,
            decay_pairs,
            decay_times,
            decay_scaling,
            decay_profile,
            lorentz_cases,
            lorentz_r,
            table_sources: sources,
        })
    }

    pub fn spec(&self) -> WeightSpec {
        self.spec_with(self.exponent)
    }

    pub fn spec_with(&self, alpha: f64) -> WeightSpec {
        WeightSpec::new(self.case, alpha, self.dimension).expect("validated at parse time")
    }

    /// Every field in config syntax; parsing it back gives the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let case = match self.case {
            WeightCase::AxisPower => "axis",
            WeightCase::RadialPower => "radial",
        };
        let data = |key: &str, spec: &DataSpec| match self.table_sources.get(key) {
            Some(path) => format!("table({})", path.display()),
            None => spec.to_string(),
        };
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("weight.case", case.into());
        put("weight.exponent", show(self.exponent));
        put("weight.dimension", self.dimension.to_string());
        put("grid.radius", show(self.grid_radius));
        put("grid.cells", self.grid_cells.to_string());
        put("grid.grading", show(self.grid_grading));
        put("kernel.times", show_list(&self.kernel_times));
        match self.kernel_scheme {
            TimeScheme::Exponential => put("kernel.scheme", "exponential".into()),
            TimeScheme::BackwardEuler { steps } => {
                put("kernel.scheme", "implicit".into());
                put("kernel.steps", steps.to_string());
            }
        }
        put("evolve.p", show(self.evolve.p));
        put("evolve.u0", data("evolve.u0", &self.evolve_u0));
        put("evolve.mode", if self.evolve_mode == EvolveMode::Local { "local" } else { "continuation" }.into());
        put("evolve.horizon", show(self.evolve.horizon));
        put("evolve.duhamel_steps", self.evolve.duhamel_steps.to_string());
        put("evolve.picard_tol", show(self.evolve.picard_tol));
        put("evolve.max_picard", self.evolve.max_picard.to_string());
        put("evolve.blowup_factor", show(self.evolve.blowup_factor));
        put("evolve.qs", show_list(&self.evolve.qs));
        put("evolve.ladder_start", show(self.evolve.ladder_start));
        put("global.radius", show(self.global_radius));
        put("global.cells", self.global_cells.to_string());
        put("global.grading", show(self.global_grading));
        put("global.horizon", show(self.global_horizon));
        put("global.delta", show(self.global_delta));
        match self.global_mode {
            SmallData::WeakCritical => put("global.mode", "weak".into()),
            SmallData::Balanced { r } => {
                put("global.mode", "balanced".into());
                put("global.r", show(r));
            }
        }
        put("global.calibrate", self.global_calibrate.to_string());
        put("global.max_halvings", self.global_max_halvings.to_string());
        put("sweep.p", show_list(&self.sweep_p));
        put("sweep.alpha", show_list(&self.sweep_alpha));
        put("sweep.subcritical_u0", data("sweep.subcritical_u0", &self.sweep_subcritical_u0));
        put("sweep.supercritical_u0", data("sweep.supercritical_u0", &self.sweep_supercritical_u0));
        let pairs: Vec<String> = self
            .decay_pairs
            .iter()
            .map(|(q, r, k)| format!("{}({}, {})", if *k == NormKind::Weak { "weak" } else { "strong" }, show(*q), show(*r)))
            .collect();
        put("decay.pairs", format!("[{}]", pairs.join(", ")));
        put("decay.times", show_list(&self.decay_times));
        put("decay.scaling", if self.decay_scaling == DataScaling::Fixed { "fixed" } else { "rescaled" }.into());
        put("decay.profile", data("decay.profile", &self.decay_profile));
        put("lorentz.cases", self.lorentz_cases.to_string());
        put("lorentz.r", show_list(&self.lorentz_r));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(text, "test.cfg", Path::new("."))
    }

    #[test]
    fn defaults_round_trip() {
        let d = ExperimentConfig::default();
        let text = d.to_text();
        let back = parse(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back, d);
    }

    #[test]
    fn fractions_lists_and_descriptors() {
        let c = parse("sweep.p = [1.5, 2, 7/3, 3]\nevolve.u0 = corollary_profile(0.5)\ndecay.pairs = strong(1, inf), weak(2, 4)\n").unwrap();
        assert_eq!(c.sweep_p[2], 7.0 / 3.0);
        assert_eq!(c.evolve_u0.resolve(3.0), Profile::Corollary { delta: 0.5, p: 3.0 });
        assert_eq!(c.decay_pairs[1], (2.0, 4.0, NormKind::Weak));
    }

    #[test]
    fn diagnostics_cite_line_and_field() {
        let err = parse("# header\nweight.case = axis\nweight.exponent = 1.2\n").unwrap_err().to_string();
        assert!(err.contains("test.cfg:3"), "{err}");
        assert!(err.contains("weight.exponent"), "{err}");
        assert!(err.contains("a < 1 (condition A)"), "{err}");
        let err = parse("grid.cels = 4\n").unwrap_err().to_string();
        assert!(err.contains(":1:") && err.contains("unknown field `grid.cels`"), "{err}");
        let err = parse("sweep.p = [2, x]\n").unwrap_err().to_string();
        assert!(err.contains("sweep.p") && err.contains("`x`"), "{err}");
    }
}
