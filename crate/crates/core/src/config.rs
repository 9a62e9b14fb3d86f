//! Run configuration: a flat `dotted.key = value` document with `#` comments.
//!
//! ```text
//! grid.nx = 512
//! grid.lx = 64pi          # "pi", "2pi", "2*pi" and plain reals are accepted
//! ic.kind = gaussian_vortex
//! ic.amplitude = 1e-3
//! time.t_end = 50
//! time.stepper = primitive
//! diag.cadence = 0.5
//! output.csv = out/series.csv
//! ```

use std::fmt;
use std::path::PathBuf;

use crate::diagnostics::NormParams;
use crate::state::{IcKind, InitialCondition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepperKind {
    Primitive,
    Duhamel,
    BForm,
}

impl StepperKind {
    pub fn name(self) -> &'static str {
        match self {
            StepperKind::Primitive => "primitive",
            StepperKind::Duhamel => "duhamel",
            StepperKind::BForm => "bform",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "primitive" => Some(StepperKind::Primitive),
            "duhamel" => Some(StepperKind::Duhamel),
            "bform" => Some(StepperKind::BForm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: f64,
    pub stepper: StepperKind,
    pub nonlinear: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagConfig {
    pub n: f64,
    pub eps: f64,
    pub cadence: f64,
    pub fit_lo: f64,
    pub fit_hi: f64,
}

impl DiagConfig {
    pub fn norm_params(&self) -> NormParams {
        NormParams {
            n: self.n,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub snapshot_dir: Option<PathBuf>,
    pub snapshot_cadence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub ic: InitialCondition,
    pub time: TimeConfig,
    pub diag: DiagConfig,
    pub output: OutputConfig,
    pub seed: u64,
}

const BOX: f64 = 64.0 * std::f64::consts::PI;

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig {
                nx: 256,
                ny: 256,
                lx: BOX,
                ly: BOX,
            },
            ic: InitialCondition::default(),
            time: TimeConfig {
                t_end: 50.0,
                dt: 1e-2,
                stepper: StepperKind::Primitive,
                nonlinear: true,
            },
            diag: DiagConfig {
                n: 5.0,
                eps: 0.01,
                cadence: 0.5,
                fit_lo: 5.0,
                fit_hi: 50.0,
            },
            output: OutputConfig {
                csv: None,
                snapshot_dir: None,
                snapshot_cadence: 10.0,
            },
            seed: 0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "grid.nx",
    "grid.ny",
    "grid.lx",
    "grid.ly",
    "ic.kind",
    "ic.amplitude",
    "ic.sigma",
    "ic.swirl",
    "ic.mode",
    "ic.noise",
    "ic.file",
    "time.t_end",
    "time.dt",
    "time.stepper",
    "time.nonlinear",
    "diag.N",
    "diag.eps",
    "diag.cadence",
    "diag.fit_lo",
    "diag.fit_hi",
    "output.csv",
    "output.snapshot_dir",
    "output.snapshot_cadence",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line, or 0 for whole-document checks.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: ", self.line)?;
        }
        if !self.key.is_empty() {
            write!(f, "{}: ", self.key)?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Parses reals, with an optional `pi` suffix: `64pi`, `2*pi`, `pi`.
pub fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    let (head, scale) = match s.strip_suffix("pi") {
        Some(h) => (h.trim().trim_end_matches('*').trim(), std::f64::consts::PI),
        None => (s, 1.0),
    };
    let v = if head.is_empty() && scale != 1.0 {
        1.0
    } else {
        head.parse::<f64>().ok()?
    };
    Some(v * scale).filter(|v| v.is_finite())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "on" | "yes" | "1" => Some(true),
        "false" | "off" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn nearest_key(key: &str) -> &'static str {
    KEYS.iter()
        .copied()
        .min_by_key(|k| strsim::levenshtein(key, k))
        .expect("key table is nonempty")
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let real = || parse_real(value).ok_or_else(|| format!("expected a real number, got `{value}`"));
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| format!("expected a non-negative integer, got `{value}`"))
        };
        let path = || {
            if value.is_empty() {
                Err("path must not be empty".to_string())
            } else {
                Ok(PathBuf::from(value))
            }
        };
        match key {
            "grid.nx" => self.grid.nx = count()?,
            "grid.ny" => self.grid.ny = count()?,
            "grid.lx" => self.grid.lx = real()?,
            "grid.ly" => self.grid.ly = real()?,
            "ic.kind" => {
                self.ic.kind = IcKind::parse(value)
                    .ok_or_else(|| format!("unknown kind `{value}` (gaussian_vortex, shear, single_mode, file)"))?
            }
            "ic.amplitude" => self.ic.amplitude = real()?,
            "ic.sigma" => self.ic.sigma = real()?,
            "ic.swirl" => self.ic.swirl = real()?,
            "ic.mode" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                match parts.as_slice() {
                    [a, b] => match (a.parse(), b.parse()) {
                        (Ok(a), Ok(b)) => self.ic.mode = (a, b),
                        _ => return Err(format!("expected two integers `mx, my`, got `{value}`")),
                    },
                    _ => return Err(format!("expected two integers `mx, my`, got `{value}`")),
                }
            }
            "ic.noise" => self.ic.noise = real()?,
            "ic.file" => self.ic.file = Some(path()?),
            "time.t_end" => self.time.t_end = real()?,
            "time.dt" => self.time.dt = real()?,
            "time.stepper" => {
                self.time.stepper = StepperKind::parse(value)
                    .ok_or_else(|| format!("unknown stepper `{value}` (primitive, duhamel, bform)"))?
            }
            "time.nonlinear" => {
                self.time.nonlinear =
                    parse_bool(value).ok_or_else(|| format!("expected true or false, got `{value}`"))?
            }
            "diag.N" => self.diag.n = real()?,
            "diag.eps" => self.diag.eps = real()?,
            "diag.cadence" => self.diag.cadence = real()?,
            "diag.fit_lo" => self.diag.fit_lo = real()?,
            "diag.fit_hi" => self.diag.fit_hi = real()?,
            "output.csv" => self.output.csv = Some(path()?),
            "output.snapshot_dir" => self.output.snapshot_dir = Some(path()?),
            "output.snapshot_cadence" => self.output.snapshot_cadence = real()?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| format!("expected a non-negative integer, got `{value}`"))?;
                self.ic.seed = self.seed;
            }
            _ => {
                return Err(format!(
                    "unknown key `{key}`; nearest valid key is `{}`",
                    nearest_key(key)
                ))
            }
        }
        Ok(())
    }

    /// Whole-config checks; every violation is reported.
    pub fn validate(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut bad = |key: &str, msg: String| out.push((key.to_string(), msg));
        for (key, n) in [("grid.nx", self.grid.nx), ("grid.ny", self.grid.ny)] {
            if n < 4 || n % 2 != 0 {
                bad(key, format!("must be even and at least 4, got {n}"));
            }
        }
        for (key, l) in [("grid.lx", self.grid.lx), ("grid.ly", self.grid.ly)] {
            if !(l > 0.0) {
                bad(key, format!("must be positive, got {l}"));
            }
        }
        if !(self.ic.amplitude >= 0.0) {
            bad(
                "ic.amplitude",
                format!("must be non-negative, got {}", self.ic.amplitude),
            );
        }
        if !(self.ic.sigma > 0.0) {
            bad("ic.sigma", format!("must be positive, got {}", self.ic.sigma));
        }
        if !(self.ic.noise >= 0.0) {
            bad("ic.noise", format!("must be non-negative, got {}", self.ic.noise));
        }
        if self.ic.kind == IcKind::File && self.ic.file.is_none() {
            bad("ic.file", "required when ic.kind = file".to_string());
        }
        if !(self.time.t_end >= 1.0) {
            bad("time.t_end", format!("t_end must be ≥ 1, got {}", self.time.t_end));
        }
        if !(self.time.dt > 0.0) {
            bad("time.dt", format!("dt must be > 0, got {}", self.time.dt));
        }
        if !(self.diag.n >= 0.0) {
            bad("diag.N", format!("must be non-negative, got {}", self.diag.n));
        }
        if !(self.diag.eps > 0.0) {
            bad("diag.eps", format!("must be positive, got {}", self.diag.eps));
        }
        if !(self.diag.cadence > 0.0) {
            bad(
                "diag.cadence",
                format!("cadence must be > 0, got {}", self.diag.cadence),
            );
        }
        if !(self.diag.fit_lo < self.diag.fit_hi && self.diag.fit_lo > 0.0) {
            bad(
                "diag.fit_lo",
                format!(
                    "fit window must satisfy 0 < fit_lo < fit_hi, got {}:{}",
                    self.diag.fit_lo, self.diag.fit_hi
                ),
            );
        }
        if !(self.output.snapshot_cadence > 0.0) {
            bad(
                "output.snapshot_cadence",
                format!("must be > 0, got {}", self.output.snapshot_cadence),
            );
        }
        out
    }

    /// Resolved configuration in the input syntax, defaults included.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("grid.nx", self.grid.nx.to_string());
        kv("grid.ny", self.grid.ny.to_string());
        kv("grid.lx", self.grid.lx.to_string());
        kv("grid.ly", self.grid.ly.to_string());
        kv("ic.kind", self.ic.kind.name().to_string());
        kv("ic.amplitude", self.ic.amplitude.to_string());
        kv("ic.sigma", self.ic.sigma.to_string());
        kv("ic.swirl", self.ic.swirl.to_string());
        kv("ic.mode", format!("{}, {}", self.ic.mode.0, self.ic.mode.1));
        kv("ic.noise", self.ic.noise.to_string());
        if let Some(p) = &self.ic.file {
            kv("ic.file", p.display().to_string());
        }
        kv("time.t_end", self.time.t_end.to_string());
        kv("time.dt", self.time.dt.to_string());
        kv("time.stepper", self.time.stepper.name().to_string());
        kv("time.nonlinear", self.time.nonlinear.to_string());
        kv("diag.N", self.diag.n.to_string());
        kv("diag.eps", self.diag.eps.to_string());
        kv("diag.cadence", self.diag.cadence.to_string());
        kv("diag.fit_lo", self.diag.fit_lo.to_string());
        kv("diag.fit_hi", self.diag.fit_hi.to_string());
        if let Some(p) = &self.output.csv {
            kv("output.csv", p.display().to_string());
        }
        if let Some(p) = &self.output.snapshot_dir {
            kv("output.snapshot_dir", p.display().to_string());
        }
        kv("output.snapshot_cadence", self.output.snapshot_cadence.to_string());
        kv("seed", self.seed.to_string());
        s
    }
}

/// Splits a document into `(line, key, value)` entries, reporting syntax
/// errors and duplicate keys.
pub fn parse_entries(text: &str) -> (Vec<(usize, String, String)>, Vec<ConfigError>) {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            errors.push(ConfigError {
                line,
                key: String::new(),
                message: format!("expected `key = value`, got `{body}`"),
            });
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if let Some((first, ..)) = entries.iter().find(|(_, key, _)| *key == k) {
            errors.push(ConfigError {
                line,
                key: k,
                message: format!("duplicate key (first set on line {first})"),
            });
            continue;
        }
        entries.push((line, k, v));
    }
    (entries, errors)
}

/// Parses and validates a document. `ny`/`ly` default to `nx`/`lx`.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let (entries, mut errors) = parse_entries(text);
    let mut cfg = RunConfig::default();
    let has = |k: &str| entries.iter().any(|(_, key, _)| key == k);
    let (ny_set, ly_set) = (has("grid.ny"), has("grid.ly"));
    for (line, key, value) in &entries {
        if let Err(message) = cfg.set(key, value) {
            errors.push(ConfigError {
                line: *line,
                key: key.clone(),
                message,
            });
        }
    }
    if !ny_set {
        cfg.grid.ny = cfg.grid.nx;
    }
    if !ly_set {
        cfg.grid.ly = cfg.grid.lx;
    }
    for (key, message) in cfg.validate() {
        // a defaulted ny/ly repeats the nx/lx error
        if (key == "grid.ny" && !ny_set) || (key == "grid.ly" && !ly_set) {
            continue;
        }
        let line = entries.iter().find(|(_, k, _)| *k == key).map_or(0, |(l, ..)| *l);
        errors.push(ConfigError { line, key, message });
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        errors.sort_by_key(|e| e.line);
        Err(ConfigErrors(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config("# nothing but a comment\n\n").unwrap();
        assert_eq!(cfg.grid.nx, 256);
        assert_eq!(cfg.grid.ny, 256);
        assert!((cfg.grid.lx - 64.0 * PI).abs() < 1e-12);
        assert_eq!(cfg.time.dt, 1e-2);
        assert_eq!(cfg.diag.n, 5.0);
        assert_eq!((cfg.diag.fit_lo, cfg.diag.fit_hi), (5.0, 50.0));
        assert!(cfg.echo().contains("grid.nx = 256"));
    }

    #[test]
    fn echo_round_trips() {
        let text = "grid.nx = 64\ngrid.lx = 2pi\nic.kind = shear\nic.mode = 2, -1\ntime.stepper = duhamel\nseed = 7\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.grid.ny, 64);
        assert_eq!(cfg.ic.mode, (2, -1));
        assert_eq!(cfg.ic.seed, 7);
        assert_eq!(parse_config(&cfg.echo()).unwrap(), cfg);
    }

    #[test]
    fn reals_with_pi() {
        assert_eq!(parse_real("pi"), Some(PI));
        assert_eq!(parse_real("64pi"), Some(64.0 * PI));
        assert_eq!(parse_real("2 * pi"), Some(2.0 * PI));
        assert_eq!(parse_real("1e-3"), Some(1e-3));
        assert_eq!(parse_real("abc"), None);
        assert_eq!(parse_real("inf"), None);
    }

    #[test]
    fn t_end_below_one_is_rejected() {
        let err = parse_config("time.t_end = 0.5").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, 1);
        assert!(err.0[0].message.contains("t_end must be ≥ 1"));
    }

    #[test]
    fn unknown_key_names_nearest() {
        let err = parse_config("vicosity = 1").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("vicosity") && msg.contains("nearest valid key"), "{msg}");
        let err = parse_config("grid.nz = 1").unwrap_err();
        assert!(err.to_string().contains("`grid.nx`"));
    }

    #[test]
    fn errors_are_aggregated() {
        let text = "grid.nx = 7\ntime.dt = -1\nic.kind = vortex\nbogus line\ntime.dt = 2\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<usize> = err.0.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![1, 2, 3, 4, 5], "{err}");
    }
}
