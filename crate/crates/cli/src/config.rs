//! Run configuration: a flat `key = value` text format with dotted keys.
//!
//! ```text
//! # comment
//! mode = fixed_point
//! d = 2
//! grid.n = 32
//! contraction.sweep = 0.4, 0.2, 0.1
//! ```
//!
//! Every key has a default, unknown and repeated keys are rejected, and
//! [`RunConfig::serialize`] writes every key in a fixed order so that
//! parse, serialize, parse is the identity.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use kinetofluid_core::constitutive::{LawVariant, ViscosityLaw};

/// Parse or validation failure, located at a line when the key was given.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FixedPoint,
    SmallData,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::FixedPoint => "fixed_point",
            Mode::SmallData => "small_data",
        }
    }
}

/// Representation of the kinetic unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repr {
    Particles,
    Grid,
}

impl Repr {
    fn as_str(self) -> &'static str {
        match self {
            Repr::Particles => "particles",
            Repr::Grid => "grid",
        }
    }
}

/// Data-size handling in small-data mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    /// Use the data as configured.
    None,
    /// Rescale kinetic and fluid data together to size `eps / 2`.
    Fit,
}

impl Scaling {
    fn as_str(self) -> &'static str {
        match self {
            Scaling::None => "none",
            Scaling::Fit => "fit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub d: usize,
    pub grid_n: usize,
    pub grid_l: f64,
    pub phase_nx: usize,
    pub phase_nv: usize,
    /// `None` picks the velocity box from the data.
    pub phase_v_max: Option<f64>,
    pub repr: Repr,
    pub mass: f64,
    pub vth: f64,
    pub amplitude: f64,
    pub density_mode: u32,
    pub particles_n: usize,
    pub seed: u64,
    pub u0_amplitude: f64,
    pub dealias: bool,
    pub cfl_cap: f64,
    pub law_variant: LawVariant,
    pub law_q: f64,
    pub law_m0: f64,
    pub law_sigma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub kappa: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub m_cap: f64,
    pub k: u32,
    pub p: f64,
    pub eps: f64,
    pub bound_m: f64,
    pub horizon: f64,
    pub scaling: Scaling,
    pub sweep: Vec<f64>,
    pub perturbation: f64,
    pub out_dir: String,
    pub every: usize,
    pub golden: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::FixedPoint,
            d: 2,
            grid_n: 32,
            grid_l: 2.0 * std::f64::consts::PI,
            phase_nx: 32,
            phase_nv: 64,
            phase_v_max: None,
            repr: Repr::Particles,
            mass: 0.05,
            vth: 0.5,
            amplitude: 0.3,
            density_mode: 1,
            particles_n: 4000,
            seed: 7,
            u0_amplitude: 0.05,
            dealias: true,
            cfl_cap: 0.5,
            law_variant: LawVariant::PowerLawA,
            law_q: 4.0,
            law_m0: 1.0,
            law_sigma: 0.0,
            dt: 0.01,
            t_end: 0.5,
            kappa: 3.0,
            tol: 1e-9,
            max_iter: 50,
            m_cap: 1e3,
            k: 3,
            p: 6.0,
            eps: 1e-3,
            bound_m: 1.0,
            horizon: 5.0,
            scaling: Scaling::None,
            sweep: vec![0.4, 0.2, 0.1, 0.05],
            perturbation: 0.02,
            out_dir: "out".into(),
            every: 10,
            golden: None,
        }
    }
}

/// Canonical key order; also the set of accepted keys.
pub const KEYS: &[&str] = &[
    "mode",
    "d",
    "grid.n",
    "grid.L",
    "phase.n_x",
    "phase.n_v",
    "phase.V_max",
    "kinetic.repr",
    "kinetic.mass",
    "kinetic.vth",
    "kinetic.amplitude",
    "kinetic.mode",
    "particles.N",
    "particles.seed",
    "particles.sampler",
    "fluid.u0_amplitude",
    "fluid.dealias",
    "fluid.cfl_cap",
    "law.variant",
    "law.q",
    "law.m0",
    "law.sigma",
    "time.dt",
    "time.T",
    "coupling.kappa",
    "coupling.tol",
    "coupling.max_iter",
    "coupling.M_cap",
    "weights.k",
    "weights.p",
    "small_data.eps",
    "small_data.M",
    "small_data.horizon",
    "small_data.scale",
    "contraction.sweep",
    "contraction.perturbation",
    "output.dir",
    "output.every",
    "output.golden",
];

/// A parsed file: the configuration plus the line of each explicit key.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub config: RunConfig,
    pub lines: HashMap<&'static str, usize>,
    /// Directory the file was read from; relative paths resolve against it.
    pub base: Option<PathBuf>,
}

impl Parsed {
    /// Full validation with errors pointing at the offending key's line.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.config.validate().map_err(|(key, message)| ConfigError {
            line: self.lines.get(key).copied(),
            message: if self.lines.contains_key(key) { message } else { format!("{message} (default value)") },
        })
    }

    /// Resolves a configured path against the file's directory.
    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        match &self.base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, found `{v}`"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, found `{v}`"))
    }
}

fn parse_int<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("expected a nonnegative integer, found `{v}`"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, found `{v}`")),
    }
}

/// Quoted or bare path value. Quotes allow `#` and surrounding spaces.
fn parse_string(v: &str) -> Result<String, String> {
    if let Some(inner) = v.strip_prefix('"') {
        let inner = inner.strip_suffix('"').ok_or_else(|| "unterminated quoted string".to_string())?;
        if inner.contains('"') {
            return Err("quotes inside a quoted string are not supported".into());
        }
        Ok(inner.to_string())
    } else if v.is_empty() {
        Err("empty value".into())
    } else {
        Ok(v.to_string())
    }
}

fn quote(s: &str) -> String {
    format!("\"{s}\"")
}

/// Strips a trailing comment that is not inside quotes.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Parsed, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut lines = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = strip_comment(raw).trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError { line: Some(line), message };
            let (key, value) = body.split_once('=').ok_or_else(|| err(format!("expected `key = value`, found `{body}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let known = KEYS.iter().find(|k| **k == key).ok_or_else(|| err(format!("unknown key `{key}`")))?;
            if let Some(first) = lines.insert(*known, line) {
                return Err(err(format!("duplicate key `{key}` (first set on line {first})")));
            }
            cfg.set(known, value).map_err(|m| err(format!("{key}: {m}")))?;
        }
        Ok(Parsed { config: cfg, lines, base: None })
    }

    pub fn from_file(path: &Path) -> Result<Parsed, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let mut parsed = Self::parse(&text)?;
        parsed.base = path.parent().map(Path::to_path_buf);
        Ok(parsed)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "mode" => {
                self.mode = match v {
                    "fixed_point" => Mode::FixedPoint,
                    "small_data" => Mode::SmallData,
                    _ => return Err(format!("expected fixed_point or small_data, found `{v}`")),
                }
            }
            "d" => self.d = parse_int(v)?,
            "grid.n" => self.grid_n = parse_int(v)?,
            "grid.L" => self.grid_l = parse_f64(v)?,
            "phase.n_x" => self.phase_nx = parse_int(v)?,
            "phase.n_v" => self.phase_nv = parse_int(v)?,
            "phase.V_max" => self.phase_v_max = if v == "auto" { None } else { Some(parse_f64(v)?) },
            "kinetic.repr" => {
                self.repr = match v {
                    "particles" => Repr::Particles,
                    "grid" => Repr::Grid,
                    _ => return Err(format!("expected particles or grid, found `{v}`")),
                }
            }
            "kinetic.mass" => self.mass = parse_f64(v)?,
            "kinetic.vth" => self.vth = parse_f64(v)?,
            "kinetic.amplitude" => self.amplitude = parse_f64(v)?,
            "kinetic.mode" => self.density_mode = parse_int(v)?,
            "particles.N" => self.particles_n = parse_int(v)?,
            "particles.seed" => self.seed = parse_int(v)?,
            "particles.sampler" => {
                if v != "maxwellian" {
                    return Err(format!("the only sampler is maxwellian, found `{v}`"));
                }
            }
            "fluid.u0_amplitude" => self.u0_amplitude = parse_f64(v)?,
            "fluid.dealias" => self.dealias = parse_bool(v)?,
            "fluid.cfl_cap" => self.cfl_cap = parse_f64(v)?,
            "law.variant" => {
                self.law_variant =
                    LawVariant::parse(v).ok_or_else(|| format!("unknown law `{v}`; expected power_law_a, power_law_b or newtonian"))?
            }
            "law.q" => self.law_q = parse_f64(v)?,
            "law.m0" => self.law_m0 = parse_f64(v)?,
            "law.sigma" => self.law_sigma = parse_f64(v)?,
            "time.dt" => self.dt = parse_f64(v)?,
            "time.T" => self.t_end = parse_f64(v)?,
            "coupling.kappa" => self.kappa = parse_f64(v)?,
            "coupling.tol" => self.tol = parse_f64(v)?,
            "coupling.max_iter" => self.max_iter = parse_int(v)?,
            "coupling.M_cap" => self.m_cap = parse_f64(v)?,
            "weights.k" => self.k = parse_int(v)?,
            "weights.p" => self.p = parse_f64(v)?,
            "small_data.eps" => self.eps = parse_f64(v)?,
            "small_data.M" => self.bound_m = parse_f64(v)?,
            "small_data.horizon" => self.horizon = parse_f64(v)?,
            "small_data.scale" => {
                self.scaling = match v {
                    "none" => Scaling::None,
                    "fit" => Scaling::Fit,
                    _ => return Err(format!("expected none or fit, found `{v}`")),
                }
            }
            "contraction.sweep" => {
                self.sweep = v.split(',').map(|s| parse_f64(s.trim())).collect::<Result<_, _>>()?;
            }
            "contraction.perturbation" => self.perturbation = parse_f64(v)?,
            "output.dir" => self.out_dir = parse_string(v)?,
            "output.every" => self.every = parse_int(v)?,
            "output.golden" => self.golden = if v == "none" { None } else { Some(parse_string(v)?) },
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    /// Value of `key` in canonical text form.
    pub fn value(&self, key: &str) -> String {
        match key {
            "mode" => self.mode.as_str().into(),
            "d" => self.d.to_string(),
            "grid.n" => self.grid_n.to_string(),
            "grid.L" => self.grid_l.to_string(),
            "phase.n_x" => self.phase_nx.to_string(),
            "phase.n_v" => self.phase_nv.to_string(),
            "phase.V_max" => self.phase_v_max.map_or("auto".into(), |v| v.to_string()),
            "kinetic.repr" => self.repr.as_str().into(),
            "kinetic.mass" => self.mass.to_string(),
            "kinetic.vth" => self.vth.to_string(),
            "kinetic.amplitude" => self.amplitude.to_string(),
            "kinetic.mode" => self.density_mode.to_string(),
            "particles.N" => self.particles_n.to_string(),
            "particles.seed" => self.seed.to_string(),
            "particles.sampler" => "maxwellian".into(),
            "fluid.u0_amplitude" => self.u0_amplitude.to_string(),
            "fluid.dealias" => self.dealias.to_string(),
            "fluid.cfl_cap" => self.cfl_cap.to_string(),
            "law.variant" => self.law_variant.as_str().into(),
            "law.q" => self.law_q.to_string(),
            "law.m0" => self.law_m0.to_string(),
            "law.sigma" => self.law_sigma.to_string(),
            "time.dt" => self.dt.to_string(),
            "time.T" => self.t_end.to_string(),
            "coupling.kappa" => self.kappa.to_string(),
            "coupling.tol" => self.tol.to_string(),
            "coupling.max_iter" => self.max_iter.to_string(),
            "coupling.M_cap" => self.m_cap.to_string(),
            "weights.k" => self.k.to_string(),
            "weights.p" => self.p.to_string(),
            "small_data.eps" => self.eps.to_string(),
            "small_data.M" => self.bound_m.to_string(),
            "small_data.horizon" => self.horizon.to_string(),
            "small_data.scale" => self.scaling.as_str().into(),
            "contraction.sweep" => self.sweep.iter().map(f64::to_string).collect::<Vec<_>>().join(", "),
            "contraction.perturbation" => self.perturbation.to_string(),
            "output.dir" => quote(&self.out_dir),
            "output.every" => self.every.to_string(),
            "output.golden" => self.golden.as_deref().map_or("none".into(), quote),
            _ => panic!("unknown key `{key}`"),
        }
    }

    /// Every key, one per line, in canonical order.
    pub fn serialize(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.value(k))).collect()
    }

    pub fn law(&self) -> Result<ViscosityLaw, String> {
        ViscosityLaw::new(self.law_variant, self.law_q, self.law_m0, self.law_sigma).map_err(|e| e.to_string())
    }

    /// Semantic checks; the error names the key to blame.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let need = |ok: bool, key: &'static str, msg: String| if ok { Ok(()) } else { Err((key, msg)) };
        need((1..=3).contains(&self.d), "d", format!("dimension must be 1, 2 or 3, got {}", self.d))?;
        need(
            self.grid_n >= 4 && self.grid_n.is_power_of_two(),
            "grid.n",
            format!("grid size must be a power of two >= 4, got {}", self.grid_n),
        )?;
        need(self.grid_l > 0.0, "grid.L", format!("box length must be positive, got {}", self.grid_l))?;
        need(self.t_end > 0.0, "time.T", format!("horizon must be positive, got {}", self.t_end))?;
        need(self.dt > 0.0 && self.dt <= self.t_end, "time.dt", format!("need 0 < dt <= T, got dt = {}", self.dt))?;
        let cells = self.dt * self.grid_n as f64 / self.grid_l;
        need(
            cells <= 1.0,
            "time.dt",
            format!("dt * n / L = {cells:.3} exceeds 1: a unit speed would cross more than one cell per step"),
        )?;
        need(self.k >= 3, "weights.k", format!("velocity weight order k must be >= 3, got {}", self.k))?;
        let p_min = 5f64.max((2.0 * self.k as f64 + 3.0) / 2.0);
        need(self.p > p_min, "weights.p", format!("decay order p = {} must exceed max(5, (2k+3)/2) = {p_min}", self.p))?;
        if let Err(e) = self.law() {
            let key = match self.law_variant {
                LawVariant::PowerLawB if !(self.law_sigma >= 0.0) => "law.sigma",
                _ if !(self.law_m0 > 0.0) => "law.m0",
                LawVariant::Newtonian => "law.variant",
                _ => "law.q",
            };
            return Err((key, e));
        }
        need(self.cfl_cap > 0.0, "fluid.cfl_cap", format!("CFL cap must be positive, got {}", self.cfl_cap))?;
        need(self.mass >= 0.0, "kinetic.mass", format!("mass must be >= 0, got {}", self.mass))?;
        need(self.vth > 0.0, "kinetic.vth", format!("thermal speed must be positive, got {}", self.vth))?;
        need(
            (0.0..1.0).contains(&self.amplitude),
            "kinetic.amplitude",
            format!("density modulation must lie in [0, 1), got {}", self.amplitude),
        )?;
        need(self.density_mode >= 1, "kinetic.mode", "density mode must be >= 1".into())?;
        match self.repr {
            Repr::Grid => {
                need(self.d == 1, "kinetic.repr", format!("the phase grid needs d = 1, got d = {}", self.d))?;
                need(
                    self.phase_nx == self.grid_n,
                    "phase.n_x",
                    format!("phase n_x = {} must equal grid.n = {}", self.phase_nx, self.grid_n),
                )?;
                need(self.phase_nv >= 4, "phase.n_v", format!("need at least 4 velocity cells, got {}", self.phase_nv))?;
                if let Some(v) = self.phase_v_max {
                    need(v > 0.0, "phase.V_max", format!("velocity box must be positive, got {v}"))?;
                }
            }
            Repr::Particles => need(self.particles_n >= 1, "particles.N", "need at least one particle".into())?,
        }
        need(self.kappa >= 0.0, "coupling.kappa", format!("drag coefficient must be >= 0, got {}", self.kappa))?;
        need(self.tol > 0.0, "coupling.tol", format!("tolerance must be positive, got {}", self.tol))?;
        need(self.max_iter >= 1, "coupling.max_iter", "need at least one iteration".into())?;
        need(self.m_cap > 0.0, "coupling.M_cap", format!("ball radius must be positive, got {}", self.m_cap))?;
        if self.mode == Mode::SmallData {
            need(self.eps > 0.0, "small_data.eps", format!("eps must be positive, got {}", self.eps))?;
            need(self.bound_m > 0.0, "small_data.M", format!("M must be positive, got {}", self.bound_m))?;
            need(
                self.horizon >= self.t_end,
                "small_data.horizon",
                format!("horizon {} is shorter than the window T = {}", self.horizon, self.t_end),
            )?;
        }
        need(!self.sweep.is_empty() && self.sweep.iter().all(|&t| t > 0.0), "contraction.sweep", "sweep horizons must be positive".into())?;
        need(self.every >= 1, "output.every", "output stride must be >= 1".into())?;
        need(!self.out_dir.is_empty(), "output.dir", "output directory must not be empty".into())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = c.serialize();
        assert_eq!(RunConfig::parse(&text).unwrap().config, c);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = RunConfig::parse("d = 2\n\n grid.n = x\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = RunConfig::parse("d = 2\nd = 3\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("line 1"));
        let e = RunConfig::parse("# ok\nbogus.key = 1\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(RunConfig::parse("time.dt 0.1").unwrap_err().message.contains("key = value"));
    }

    #[test]
    fn weight_orders_are_checked() {
        let p = RunConfig::parse("weights.k = 4\nweights.p = 5.5\n").unwrap();
        let e = p.validate().unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("5.5"));
        let p = RunConfig::parse("weights.k = 2\n").unwrap();
        assert_eq!(p.validate().unwrap_err().line, Some(1));
        // p = 5 is excluded even though (2k + 3)/2 = 4.5
        let p = RunConfig::parse("weights.p = 5\n").unwrap();
        assert_eq!(p.validate().unwrap_err().line, Some(1));
        assert!(RunConfig::parse("weights.p = 5.01\n").unwrap().validate().is_ok());
    }

    #[test]
    fn comments_and_quotes() {
        let p = RunConfig::parse("output.dir = \"a # b\"  # trailing\n").unwrap();
        assert_eq!(p.config.out_dir, "a # b");
        let p = RunConfig::parse("contraction.sweep = 0.3 ,0.1\nphase.V_max = auto\noutput.golden = none\n").unwrap();
        assert_eq!(p.config.sweep, vec![0.3, 0.1]);
        assert_eq!(p.config.phase_v_max, None);
    }
}
