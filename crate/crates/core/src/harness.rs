//! Experiment orchestration: single runs with a fitted-rate summary,
//! and Cartesian parameter sweeps.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{parse_config, parse_entries, ConfigError, ConfigErrors, RunConfig, KEYS};
use crate::diagnostics::{decay_fit, exponential_r_squared, DecayFit, FitError};
use crate::integrator::{run, RunError, RunRecord};

/// Report keys fitted in every summary, with the predicted exponent.
pub const RATE_TARGETS: [(&str, f64); 4] = [
    ("raw.u_inf", -1.0),
    ("raw.v_inf", -1.5),
    ("raw.psi_inf", -0.5),
    ("raw.P_inf", -0.5),
];

/// Accepted exponent windows on a finite periodic box, per rate target.
pub const RATE_WINDOWS: [(&str, f64, f64); 4] = [
    ("raw.u_inf", -1.35, -0.70),
    ("raw.v_inf", -1.85, -1.15),
    ("raw.psi_inf", -0.80, -0.25),
    ("raw.P_inf", -0.85, -0.25),
];

/// Minimum log-log R² for a fit to count as a power law.
pub const MIN_R_SQUARED: f64 = 0.9;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "MHD_LAB_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub enum FitStatus {
    PowerLaw,
    /// Poor log-log fit, or an exponential law explains the data better.
    NonPowerLaw,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub key: String,
    pub target: Option<f64>,
    pub fit: Option<DecayFit>,
    pub status: FitStatus,
}

impl FitOutcome {
    /// Whether the exponent lies in the acceptance window for this key.
    /// Keys without a window are never in range.
    pub fn in_window(&self) -> bool {
        let Some(fit) = self.fit else { return false };
        RATE_WINDOWS
            .iter()
            .find(|(k, ..)| *k == self.key)
            .is_some_and(|&(_, lo, hi)| fit.exponent >= lo && fit.exponent <= hi && fit.r_squared >= MIN_R_SQUARED)
    }
}

/// Fits `series` over `window` and classifies the result.
pub fn classify_fit(key: &str, target: Option<f64>, series: &[(f64, f64)], window: (f64, f64)) -> FitOutcome {
    let (fit, status) = match decay_fit(series, window) {
        Ok(fit) => {
            let exp_r2 = exponential_r_squared(series, window).unwrap_or(0.0);
            let status = if fit.r_squared < MIN_R_SQUARED || exp_r2 > fit.r_squared {
                FitStatus::NonPowerLaw
            } else {
                FitStatus::PowerLaw
            };
            (Some(fit), status)
        }
        Err(FitError::NonPositive { .. }) => (None, FitStatus::Skipped("nonpositive series".into())),
        Err(e) => (None, FitStatus::Skipped(e.to_string())),
    };
    FitOutcome {
        key: key.to_string(),
        target,
        fit,
        status,
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub t_final: f64,
    pub steps: usize,
    /// Last reported `(key, weighted value)` of the raw norms.
    pub final_norms: Vec<(String, f64)>,
    pub fits: Vec<FitOutcome>,
    pub max_divergence: f64,
    pub max_energy_residual: f64,
}

impl RunSummary {
    pub fn from_record(cfg: &RunConfig, record: &RunRecord) -> Self {
        let window = (cfg.diag.fit_lo, cfg.diag.fit_hi);
        let last = record.reports.last();
        let final_norms = last
            .map(|r| {
                r.components
                    .iter()
                    .filter(|c| c.key.starts_with("raw."))
                    .map(|c| (c.key.to_string(), c.raw))
                    .collect()
            })
            .unwrap_or_default();
        let mut fits: Vec<FitOutcome> = RATE_TARGETS
            .iter()
            .map(|&(key, target)| classify_fit(key, Some(target), &record.series(key), window))
            .collect();
        fits.push(classify_fit("raw.u_2", None, &record.series("raw.u_2"), window));
        let max_energy_residual = record
            .energy_rows()
            .iter()
            .map(|r| r.residual.abs())
            .fold(0.0, f64::max);
        Self {
            t_final: last.map_or(1.0, |r| r.t),
            steps: record.steps,
            final_norms,
            fits,
            max_divergence: record.max_divergence,
            max_energy_residual,
        }
    }

    pub fn fit(&self, key: &str) -> Option<&FitOutcome> {
        self.fits.iter().find(|f| f.key == key)
    }

    /// Rate targets whose fit misses its acceptance window.
    pub fn rates_out_of_window(&self) -> Vec<&FitOutcome> {
        self.fits
            .iter()
            .filter(|f| f.target.is_some() && !f.in_window())
            .collect()
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "t = {} after {} steps", self.t_final, self.steps)?;
        writeln!(f, "final norms:")?;
        for (k, v) in &self.final_norms {
            writeln!(f, "  {k:<12} {v:.6e}")?;
        }
        writeln!(f, "decay exponents:")?;
        for o in &self.fits {
            let target = o.target.map_or("-".to_string(), |t| format!("{t}"));
            match (&o.fit, &o.status) {
                (_, FitStatus::Skipped(why)) => writeln!(f, "  {:<12} target {target:>5}  skipped ({why})", o.key)?,
                (Some(fit), status) => {
                    let flag = if *status == FitStatus::NonPowerLaw {
                        "  non-power-law"
                    } else {
                        ""
                    };
                    writeln!(
                        f,
                        "  {:<12} target {target:>5}  fitted {:+.4} ± {:.4}  R² {:.4}{flag}",
                        o.key, fit.exponent, fit.stderr, fit.r_squared
                    )?
                }
                (None, _) => writeln!(f, "  {:<12} target {target:>5}  no fit", o.key)?,
            }
        }
        writeln!(f, "max relative divergence {:.3e}", self.max_divergence)?;
        write!(f, "max energy residual {:.3e}", self.max_energy_residual)
    }
}

/// Runs one experiment, writing its configured artifacts.
pub fn run_experiment(cfg: &RunConfig) -> Result<(RunRecord, RunSummary), RunError> {
    let record = run(cfg)?;
    let summary = RunSummary::from_record(cfg, &record);
    Ok((record, summary))
}

/// Worker count: `requested`, capped by the thread environment variable.
pub fn thread_cap(requested: usize) -> usize {
    let env = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    env.map_or(requested, |n| requested.min(n)).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RunConfig,
    /// `(config key, raw values)` in declaration order.
    pub axes: Vec<(String, Vec<String>)>,
    pub parallelism: usize,
    pub cap: usize,
    pub out_dir: PathBuf,
    /// `ny`/`ly` follow swept `nx`/`lx` when the document leaves them unset.
    pub tie_ny: bool,
    pub tie_ly: bool,
}

pub const DEFAULT_SWEEP_CAP: usize = 64;

impl SweepSpec {
    pub fn points(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Axis values of point `i`, last axis fastest.
    pub fn assignment(&self, mut i: usize) -> Vec<(&str, &str)> {
        let mut out = vec![("", ""); self.axes.len()];
        for (slot, (key, values)) in out.iter_mut().zip(&self.axes).rev() {
            *slot = (key.as_str(), values[i % values.len()].as_str());
            i /= values.len();
        }
        out
    }

    pub fn point_dir(&self, i: usize) -> PathBuf {
        self.out_dir.join(format!("point_{i:03}"))
    }

    /// Configuration of point `i` with its outputs inside the point directory.
    pub fn point_config(&self, i: usize) -> Result<RunConfig, String> {
        let mut cfg = self.base.clone();
        for (key, value) in self.assignment(i) {
            cfg.set(key, value).map_err(|e| format!("{key} = {value}: {e}"))?;
        }
        if self.tie_ny {
            cfg.grid.ny = cfg.grid.nx;
        }
        if self.tie_ly {
            cfg.grid.ly = cfg.grid.lx;
        }
        let dir = self.point_dir(i);
        cfg.output.csv = Some(dir.join("norms.csv"));
        if cfg.output.snapshot_dir.is_some() {
            cfg.output.snapshot_dir = Some(dir.join("snapshots"));
        }
        let problems = cfg.validate();
        if let Some((k, m)) = problems.first() {
            return Err(format!("{k}: {m}"));
        }
        Ok(cfg)
    }
}

/// Parses a sweep document: a run configuration plus `sweep.*` keys.
///
/// `sweep.<config key> = v1, v2, ...` declares an axis; `sweep.parallelism`,
/// `sweep.cap` and `sweep.out_dir` control execution.
pub fn parse_sweep(text: &str) -> Result<SweepSpec, ConfigErrors> {
    let (entries, mut errors) = parse_entries(text);
    let mut base_text = String::new();
    let mut axes = Vec::new();
    let mut parallelism = 1;
    let mut cap = DEFAULT_SWEEP_CAP;
    let mut out_dir = None;
    let mut err = |line: usize, key: &str, message: String| {
        errors.push(ConfigError {
            line,
            key: key.to_string(),
            message,
        })
    };
    // keep line numbers aligned for the base document
    for raw in text.lines() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if !body.starts_with("sweep.") {
            base_text.push_str(raw);
        }
        base_text.push('\n');
    }
    let has = |k: &str| {
        entries
            .iter()
            .any(|(_, key, _)| key == k || key == &format!("sweep.{k}"))
    };
    let (tie_ny, tie_ly) = (!has("grid.ny"), !has("grid.ly"));
    for (line, key, value) in &entries {
        let Some(rest) = key.strip_prefix("sweep.") else {
            continue;
        };
        let count = |v: &str| v.parse::<usize>().ok().filter(|&n| n > 0);
        match rest {
            "parallelism" => match count(value) {
                Some(n) => parallelism = n,
                None => err(*line, key, format!("expected a positive integer, got `{value}`")),
            },
            "cap" => match count(value) {
                Some(n) => cap = n,
                None => err(*line, key, format!("expected a positive integer, got `{value}`")),
            },
            "out_dir" => out_dir = Some(PathBuf::from(value)),
            axis if KEYS.contains(&axis) => {
                // ic.mode values contain commas and are separated by `;`
                let sep = if axis == "ic.mode" { ';' } else { ',' };
                let values: Vec<String> = value
                    .split(sep)
                    .map(|v| v.trim().to_string())
                    .filter(|v| !v.is_empty())
                    .collect();
                if values.is_empty() {
                    err(*line, key, "axis has no values".into());
                    continue;
                }
                let mut probe = RunConfig::default();
                for v in &values {
                    if let Err(m) = probe.set(axis, v) {
                        err(*line, key, format!("value `{v}`: {m}"));
                    }
                }
                axes.push((axis.to_string(), values));
            }
            other => {
                let nearest = ["parallelism", "cap", "out_dir"]
                    .iter()
                    .chain(KEYS)
                    .min_by_key(|k| strsim::levenshtein(k, other))
                    .map(|k| format!("sweep.{k}"))
                    .unwrap_or_default();
                err(
                    *line,
                    key,
                    format!("unknown sweep key; nearest valid key is `{nearest}`"),
                );
            }
        }
    }
    let base = match parse_config(&base_text) {
        Ok(cfg) => Some(cfg),
        Err(ConfigErrors(es)) => {
            errors.extend(es);
            None
        }
    };
    let mut spec = SweepSpec {
        base: base.unwrap_or_default(),
        axes,
        parallelism,
        cap,
        out_dir: out_dir.unwrap_or_else(|| PathBuf::from("sweep_out")),
        tie_ny,
        tie_ly,
    };
    if spec.axes.is_empty() {
        errors.push(ConfigError {
            line: 0,
            key: "sweep".into(),
            message: "at least one `sweep.<key> = values` axis is required".into(),
        });
    } else if spec.points() > spec.cap {
        errors.push(ConfigError {
            line: 0,
            key: "sweep.cap".into(),
            message: format!("{} points exceed the cap of {}", spec.points(), spec.cap),
        });
    }
    if errors.is_empty() {
        spec.parallelism = spec.parallelism.max(1);
        Ok(spec)
    } else {
        errors.sort_by_key(|e| e.line);
        Err(ConfigErrors(errors))
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub dir: PathBuf,
    pub assignment: Vec<(String, String)>,
    pub outcome: Result<RunSummary, String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub index_path: PathBuf,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.outcome.is_err()).count()
    }

    /// Fitted exponent of `key` at every successful point, in point order.
    pub fn exponents(&self, key: &str) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| {
                p.outcome
                    .as_ref()
                    .ok()
                    .and_then(|s| s.fit(key))
                    .and_then(|f| f.fit)
                    .map(|f| f.exponent)
            })
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("writing index: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

fn run_point(spec: &SweepSpec, i: usize) -> SweepPoint {
    let assignment = spec
        .assignment(i)
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let dir = spec.point_dir(i);
    let outcome = (|| {
        let cfg = spec.point_config(i)?;
        fs::create_dir_all(&dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
        fs::write(dir.join("config.txt"), cfg.echo()).map_err(|e| format!("writing config echo: {e}"))?;
        let (_, summary) = run_experiment(&cfg).map_err(|e| e.to_string())?;
        fs::write(dir.join("summary.txt"), format!("{summary}\n")).map_err(|e| format!("writing summary: {e}"))?;
        Ok(summary)
    })();
    SweepPoint {
        index: i,
        dir,
        assignment,
        outcome,
    }
}

/// Runs every point of the sweep. Point failures are recorded, not fatal.
pub fn sweep(spec: &SweepSpec) -> Result<SweepReport, SweepError> {
    fs::create_dir_all(&spec.out_dir).map_err(|source| SweepError::Io {
        path: spec.out_dir.clone(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap(spec.parallelism))
        .build()?;
    let points: Vec<SweepPoint> =
        pool.install(|| (0..spec.points()).into_par_iter().map(|i| run_point(spec, i)).collect());
    let index_path = spec.out_dir.join("index.csv");
    write_index(&index_path, spec, &points)?;
    Ok(SweepReport { points, index_path })
}

fn write_index(path: &Path, spec: &SweepSpec, points: &[SweepPoint]) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["point".into(), "dir".into()];
    header.extend(spec.axes.iter().map(|(k, _)| k.clone()));
    header.push("status".into());
    for (key, _) in RATE_TARGETS {
        header.push(format!("{key}.exponent"));
        header.push(format!("{key}.r2"));
    }
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![p.index.to_string(), p.dir.display().to_string()];
        row.extend(p.assignment.iter().map(|(_, v)| v.clone()));
        match &p.outcome {
            Ok(summary) => {
                row.push("ok".into());
                for (key, _) in RATE_TARGETS {
                    match summary.fit(key).and_then(|f| f.fit) {
                        Some(fit) => {
                            row.push(format!("{:e}", fit.exponent));
                            row.push(format!("{:e}", fit.r_squared));
                        }
                        None => row.extend([String::new(), String::new()]),
                    }
                }
            }
            Err(e) => {
                row.push(format!("error: {e}"));
                row.extend(std::iter::repeat_n(String::new(), 2 * RATE_TARGETS.len()));
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ColumnError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("no column named `{name}`; available: {available}")]
    Missing { name: String, available: String },
    #[error("row {row}: cannot parse `{value}` as a number")]
    Parse { row: usize, value: String },
}

/// Reads `(t, column)` pairs from a run CSV.
pub fn read_series(path: &Path, column: &str) -> Result<Vec<(f64, f64)>, ColumnError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let missing = |name: &str| ColumnError::Missing {
        name: name.to_string(),
        available: headers.iter().collect::<Vec<_>>().join(", "),
    };
    let ti = find("t").ok_or_else(|| missing("t"))?;
    let ci = find(column).ok_or_else(|| missing(column))?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| {
            rec[i].trim().parse::<f64>().map_err(|_| ColumnError::Parse {
                row: row + 1,
                value: rec[i].to_string(),
            })
        };
        out.push((num(ti)?, num(ci)?));
    }
    Ok(out)
}
