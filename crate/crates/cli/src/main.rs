use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mhdlab_core::config::parse_config;
use mhdlab_core::diagnostics::decay_fit;
use mhdlab_core::harness::{classify_fit, parse_sweep, read_series, run_experiment, sweep, FitStatus};
use mhdlab_core::integrator::RunError;
use mhdlab_core::kernels::check_kernel_bounds;
use mhdlab_core::lp::lemma_dilation_sweep;
use mhdlab_core::spectral::Grid2D;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_RATES: u8 = 4;

#[derive(Parser)]
#[command(name = "mhd-lab", version, about = "2D damped MHD decay laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        config: PathBuf,
        /// Exit 4 unless every fitted rate lies in its acceptance window.
        #[arg(long)]
        assert_rates: bool,
        /// Skip the resolved-config echo.
        #[arg(long)]
        quiet: bool,
    },
    /// Run the Cartesian product of a sweep spec.
    Sweep { spec: PathBuf },
    /// Check the kernel bounds on a (t, xi) grid; CSV on stdout or --out.
    KernelsCheck {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 100.0)]
        t_max: f64,
        #[arg(long, default_value_t = 4.0)]
        xi_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ratio sweep of the nonlocal L1 inequality over x-dilations, as CSV.
    LemmaCheck {
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 64.0)]
        length: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 2.0)]
        n0: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        sigmas: Vec<f64>,
    },
    /// Log-log decay fit of one column of a run CSV.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        column: String,
        /// Fit window `lo:hi`.
        #[arg(long, default_value = "5:50", value_parser = parse_window)]
        window: (f64, f64),
    },
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((num(lo)?, num(hi)?))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn run_error_code(e: &RunError) -> u8 {
    match e {
        RunError::Config(_) | RunError::Init(_) | RunError::Io { .. } => EXIT_CONFIG,
        RunError::NumericalAbort { .. } | RunError::Step { .. } => EXIT_NUMERICAL,
        RunError::Snapshot(_) => EXIT_FAILURE,
    }
}

fn cmd_run(path: PathBuf, assert_rates: bool, quiet: bool) -> u8 {
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errs) => {
            eprintln!("{}:\n{errs}", path.display());
            return EXIT_CONFIG;
        }
    };
    if !quiet {
        println!("# resolved configuration\n{}", cfg.echo());
    }
    let summary = match run_experiment(&cfg) {
        Ok((_, s)) => s,
        Err(e) => {
            eprintln!("run failed: {e}");
            return run_error_code(&e);
        }
    };
    println!("{summary}");
    if assert_rates {
        let bad = summary.rates_out_of_window();
        if !bad.is_empty() {
            for o in bad {
                let got = o.fit.map_or("no fit".to_string(), |f| {
                    format!("{:+.4} (R² {:.3})", f.exponent, f.r_squared)
                });
                eprintln!("rate out of window: {} {got}", o.key);
            }
            return EXIT_RATES;
        }
    }
    0
}

fn cmd_sweep(path: PathBuf) -> u8 {
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let spec = match parse_sweep(&text) {
        Ok(s) => s,
        Err(errs) => {
            eprintln!("{}:\n{errs}", path.display());
            return EXIT_CONFIG;
        }
    };
    println!("{} points -> {}", spec.points(), spec.out_dir.display());
    let report = match sweep(&spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("sweep failed: {e}");
            return EXIT_FAILURE;
        }
    };
    for p in &report.points {
        let assign: Vec<String> = p.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
        match &p.outcome {
            Ok(s) => {
                let exps: Vec<String> = s
                    .fits
                    .iter()
                    .filter(|f| f.target.is_some())
                    .map(|f| match f.fit {
                        Some(fit) => format!("{} {:+.3}", f.key, fit.exponent),
                        None => format!("{} -", f.key),
                    })
                    .collect();
                println!("point {:03} [{}] {}", p.index, assign.join(" "), exps.join("  "));
            }
            Err(e) => println!("point {:03} [{}] FAILED: {e}", p.index, assign.join(" ")),
        }
    }
    println!("index: {}", report.index_path.display());
    if report.failures() > 0 {
        EXIT_NUMERICAL
    } else {
        0
    }
}

fn cmd_kernels_check(n: usize, t_max: f64, xi_max: f64, out: Option<PathBuf>) -> u8 {
    let report = check_kernel_bounds(&linspace(0.0, t_max, n), &linspace(-xi_max, xi_max, n));
    let csv = report.to_csv();
    let written = match &out {
        Some(p) => fs::write(p, csv),
        None => io::stdout().write_all(csv.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("writing report: {e}");
        return EXIT_FAILURE;
    }
    let failures = report.failures().count();
    eprintln!(
        "{} samples, {failures} violations, max ratio {:.6}",
        report.samples.len(),
        report.max_ratio
    );
    if failures == 0 {
        0
    } else {
        EXIT_FAILURE
    }
}

fn cmd_lemma_check(n: usize, length: f64, alpha: f64, eps: f64, n0: f64, sigmas: &[f64]) -> u8 {
    let grid = match Grid2D::new(n, n, length, length) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    if !(alpha > 0.0 && alpha <= 1.0 && eps > 0.0) {
        eprintln!("need 0 < alpha <= 1 and eps > 0");
        return EXIT_CONFIG;
    }
    println!("sigma,ratio");
    for (s, r) in lemma_dilation_sweep(&grid, sigmas, alpha, eps, n0) {
        println!("{s},{r:e}");
    }
    0
}

fn cmd_fit(path: PathBuf, column: &str, window: (f64, f64)) -> u8 {
    let series = match read_series(&path, column) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = decay_fit(&series, window) {
        eprintln!("fit failed: {e}");
        return EXIT_FAILURE;
    }
    let o = classify_fit(column, None, &series, window);
    let fit = o.fit.expect("fit succeeded above");
    println!("column {column}");
    println!("window {}:{}", window.0, window.1);
    println!("samples {}", fit.samples);
    println!("exponent {:.6}", fit.exponent);
    println!("stderr {:.6}", fit.stderr);
    println!("r_squared {:.6}", fit.r_squared);
    if o.status == FitStatus::NonPowerLaw {
        println!("flag non-power-law");
    }
    0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            assert_rates,
            quiet,
        } => cmd_run(config, assert_rates, quiet),
        Command::Sweep { spec } => cmd_sweep(spec),
        Command::KernelsCheck { n, t_max, xi_max, out } => cmd_kernels_check(n, t_max, xi_max, out),
        Command::LemmaCheck {
            n,
            length,
            alpha,
            eps,
            n0,
            sigmas,
        } => cmd_lemma_check(n, length, alpha, eps, n0, &sigmas),
        Command::Fit { csv, column, window } => cmd_fit(csv, &column, window),
    };
    ExitCode::from(code)
}
