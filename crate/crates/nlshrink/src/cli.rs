//! Implementations behind the `nlshrink` command-line tool.
//!
//! Each command reads its inputs, runs the corresponding pipeline and
//! writes CSV/JSON outputs carrying a metadata block (version, seed,
//! config echo). Exit codes: 0 success, 2 invalid input, 3 numerical
//! non-convergence (best-effort outputs are still written).

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use serde_json::json;

use crate::fit::{fit_spectrum, FitOptions};
use crate::io;
use crate::linalg::{eigh, reconstruct, sample_covariance};
use crate::mc::{run_study, StudyConfig};
use crate::mp::{cdf_trapezoid, solve_grid, Concentration};
use crate::shrink::{
    self, estimate_cov, estimate_precision, linear_shrinkage,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NON_CONVERGED: i32 = 3;

fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Numeric options shared by the estimation commands.
#[derive(Debug, Args, Clone)]
pub struct FitFlags {
    /// SLP iteration cap per start
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Random restarts after a failed first start (0..=50)
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Seed for restart randomness
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Density floor and half-plane margin (0 < epsilon <= 1e-2)
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// Grid points for the spectrum fit (default: number of eigenvalues)
    #[arg(long)]
    pub grid_points: Option<usize>,
}

impl FitFlags {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-2) {
            return Err(Error::InvalidInput(format!(
                "epsilon {} outside (0, 1e-2]",
                self.epsilon
            )));
        }
        if self.restarts > 50 {
            return Err(Error::InvalidInput("restarts must be at most 50".into()));
        }
        Ok(())
    }

    pub fn to_options(&self) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            restarts: self.restarts,
            seed: self.seed,
            epsilon: self.epsilon,
            grid_points: self.grid_points,
            ..FitOptions::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Input observations: CSV rows or a {"n","p","data"} JSON container
    #[arg(long)]
    pub input: PathBuf,
    /// Output basename: writes <output>.csv and <output>.json
    #[arg(long)]
    pub output: PathBuf,
    /// Estimator: nonlinear | linear | cv | sample
    #[arg(long, default_value = "nonlinear")]
    pub method: String,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Serialize)]
struct EstimateMeta {
    version: String,
    method: String,
    n: usize,
    p: usize,
    seed: u64,
    objective: Option<f64>,
    converged: Option<bool>,
    iterations: Option<usize>,
    restarts_used: Option<usize>,
    shrinkage_factors: Vec<f64>,
    sign_warning: bool,
    config: serde_json::Value,
}

fn run_matrix_estimate(args: &EstimateArgs, precision: bool) -> Result<i32> {
    args.fit.validate()?;
    let data = io::read_data(&args.input)?;
    let options = args.fit.to_options();
    let mut exit = EXIT_OK;
    let (matrix, factors, fitted) = match args.method.as_str() {
        "nonlinear" => {
            let report = if precision {
                estimate_precision(&data, &options)?
            } else {
                estimate_cov(&data, &options)?
            };
            if !report.fit.diagnostics.converged {
                exit = EXIT_NON_CONVERGED;
            }
            (
                report.matrix,
                report.factors.clone(),
                Some(report.fit.diagnostics.clone()).zip(Some(report.fit.objective)),
            )
        }
        "linear" => {
            let sbar = linear_shrinkage(&data)?;
            let eig = eigh(&sbar)?;
            let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            let (matrix, values) = if precision {
                let inv: Vec<f64> = values.iter().map(|v| 1.0 / v).collect();
                (reconstruct(&eig, &inv)?, inv)
            } else {
                (sbar, values)
            };
            (
                matrix,
                shrink::ShrinkageFactors {
                    values,
                    kind: if precision {
                        shrink::FactorKind::Precision
                    } else {
                        shrink::FactorKind::Covariance
                    },
                    method: "linear",
                    sign_warning: false,
                },
                None,
            )
        }
        "cv" => {
            if precision {
                return Err(Error::InvalidInput(
                    "cross-validation estimates the covariance matrix only".into(),
                ));
            }
            let factors = shrink::cross_validation_factors(&data)?;
            let eig = eigh(&sample_covariance(&data))?;
            (reconstruct(&eig, &factors.values)?, factors, None)
        }
        "sample" => {
            let s = sample_covariance(&data);
            let eig = eigh(&s)?;
            let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            let (matrix, values) = if precision {
                let inv: Vec<f64> = values.iter().map(|v| 1.0 / v).collect();
                (reconstruct(&eig, &inv)?, inv)
            } else {
                (s, values)
            };
            (
                matrix,
                shrink::ShrinkageFactors {
                    values,
                    kind: if precision {
                        shrink::FactorKind::Precision
                    } else {
                        shrink::FactorKind::Covariance
                    },
                    method: "sample",
                    sign_warning: false,
                },
                None,
            )
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown method '{other}' (expected nonlinear|linear|cv|sample)"
            )))
        }
    };

    let matrix_path = args.output.with_extension("csv");
    let meta_path = args.output.with_extension("json");
    io::write_matrix_csv(&matrix_path, &matrix)?;
    let (diag, objective) = match &fitted {
        Some((d, o)) => (Some(d), Some(*o)),
        None => (None, None),
    };
    let meta = EstimateMeta {
        version: version().to_string(),
        method: args.method.clone(),
        n: data.n(),
        p: data.p(),
        seed: args.fit.seed,
        objective,
        converged: diag.map(|d| d.converged),
        iterations: diag.map(|d| d.iterations),
        restarts_used: diag.map(|d| d.restarts_used),
        shrinkage_factors: factors.values.clone(),
        sign_warning: factors.sign_warning,
        config: json!({
            "input": args.input,
            "method": args.method,
            "max_iter": args.fit.max_iter,
            "restarts": args.fit.restarts,
            "epsilon": args.fit.epsilon,
        }),
    };
    io::write_json(&meta_path, &meta)?;
    Ok(exit)
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<i32> {
    run_matrix_estimate(args, false)
}

pub fn cmd_precision(args: &EstimateArgs) -> Result<i32> {
    run_matrix_estimate(args, true)
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Input CSV: observations, or eigenvalues with --eigenvalues
    #[arg(long)]
    pub input: PathBuf,
    /// Treat the input as a list of sample eigenvalues
    #[arg(long, default_value_t = false)]
    pub eigenvalues: bool,
    /// Sample size n (required with --eigenvalues)
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// Output JSON path
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub fit: FitFlags,
}

pub fn cmd_spectrum(args: &SpectrumArgs) -> Result<i32> {
    args.fit.validate()?;
    let (lambdas, conc) = if args.eigenvalues {
        let values = io::read_values(&args.input)?;
        let n = args.sample_size.ok_or_else(|| {
            Error::InvalidInput("--sample-size is required with --eigenvalues".into())
        })?;
        let conc = Concentration::from_dims(values.len(), n)?;
        (values, conc)
    } else {
        let data = io::read_data(&args.input)?;
        let conc = Concentration::from_dims(data.p(), data.n())?;
        let eig = eigh(&sample_covariance(&data))?;
        (eig.eigenvalues.iter().copied().collect(), conc)
    };
    let mut sorted = lambdas;
    sorted.sort_by(f64::total_cmp);
    let fit = fit_spectrum(&sorted, &conc, &args.fit.to_options())?;
    let payload = json!({
        "metadata": {
            "version": version(),
            "seed": args.fit.seed,
            "config": {
                "input": args.input,
                "concentration": conc.value(),
                "max_iter": args.fit.max_iter,
                "restarts": args.fit.restarts,
                "epsilon": args.fit.epsilon,
            },
        },
        "grid": fit.solution.grid,
        "weights": fit.mixture.weights(),
        "m_real": fit.solution.m.iter().map(|m| m.re).collect::<Vec<_>>(),
        "m_imag": fit.solution.m.iter().map(|m| m.im).collect::<Vec<_>>(),
        "objective": fit.objective,
        "converged": fit.diagnostics.converged,
        "iterations": fit.diagnostics.iterations,
        "restarts_used": fit.diagnostics.restarts_used,
        "max_residual": fit.diagnostics.max_residual,
    });
    io::write_json(&args.output, &payload)?;
    Ok(if fit.diagnostics.converged {
        EXIT_OK
    } else {
        EXIT_NON_CONVERGED
    })
}

#[derive(Debug, Args)]
pub struct MpSolveArgs {
    /// Population spectrum JSON: {"grid": [...], "weights": [...]}
    #[arg(long)]
    pub spectrum: PathBuf,
    /// Concentration ratio p/n in (0, 1)
    #[arg(long)]
    pub concentration: f64,
    /// Output JSON path
    #[arg(long)]
    pub output: PathBuf,
    /// Evaluation grid size
    #[arg(long, default_value_t = 512)]
    pub points: usize,
    /// Grid range override (defaults to the support with a 10% margin)
    #[arg(long)]
    pub x_min: Option<f64>,
    #[arg(long)]
    pub x_max: Option<f64>,
}

pub fn cmd_mp_solve(args: &MpSolveArgs) -> Result<i32> {
    if args.points < 2 {
        return Err(Error::InvalidInput("need at least 2 grid points".into()));
    }
    let spectrum = io::read_spectrum(&args.spectrum)?;
    let mix = spectrum.to_mixture()?;
    let conc = Concentration::from_ratio(args.concentration)?;
    let sup = crate::mp::support(&mix, &conc)?;
    let (lo, hi) = (sup.lower_edge(), sup.upper_edge());
    let margin = 0.1 * (hi - lo).max(1e-3);
    let x_min = args.x_min.unwrap_or((lo - margin).max(1e-8));
    let x_max = args.x_max.unwrap_or(hi + margin);
    if !(x_max > x_min) {
        return Err(Error::InvalidInput("x-max must exceed x-min".into()));
    }
    let grid: Vec<f64> = (0..args.points)
        .map(|i| x_min + (x_max - x_min) * i as f64 / (args.points - 1) as f64)
        .collect();
    let sol = solve_grid(&mix, &conc, &grid)?;
    let payload = json!({
        "metadata": {
            "version": version(),
            "config": {
                "spectrum": args.spectrum,
                "concentration": args.concentration,
                "points": args.points,
            },
        },
        "support": sup.intervals,
        "grid": sol.grid,
        "density": sol.density(),
        "cdf": cdf_trapezoid(&sol),
        "m_real": sol.m.iter().map(|m| m.re).collect::<Vec<_>>(),
        "m_imag": sol.m.iter().map(|m| m.im).collect::<Vec<_>>(),
    });
    io::write_json(&args.output, &payload)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Study configuration JSON (see the README for the schema)
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report JSON output path
    #[arg(long)]
    pub output: PathBuf,
    /// Optional CSV summary table
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Optional per-replication shrinkage trace CSV (λ_i, d_i pairs)
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Worker threads (default: available parallelism or NLSHRINK_THREADS)
    #[arg(long)]
    pub threads: Option<usize>,
    /// CI mode: require an explicit seed
    #[arg(long, default_value_t = false)]
    pub ci: bool,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    if args.ci && args.seed.is_none() {
        return Err(Error::InvalidInput("--seed is mandatory in CI mode".into()));
    }
    let text = std::fs::read_to_string(&args.config)?;
    let mut config: StudyConfig = serde_json::from_str(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.trace.is_some() {
        config.trace = true;
    }
    init_thread_pool(args.threads);
    let report = run_study(&config)?;
    let payload = json!({
        "metadata": {
            "version": version(),
            "seed": config.seed,
            "config": &config,
        },
        "report": &report,
    });
    io::write_json(&args.output, &payload)?;
    if let Some(csv) = &args.csv {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(csv)?);
        writeln!(out, "estimator,mean_loss,prial,prial_se")?;
        for row in &report.rows {
            writeln!(
                out,
                "{},{},{},{}",
                row.name, row.mean_loss, row.prial, row.prial_se
            )?;
        }
    }
    if let Some(trace_path) = &args.trace {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(trace_path)?);
        writeln!(out, "replication,lambda,d")?;
        for (rep, lambda, d) in &report.trace {
            writeln!(out, "{rep},{lambda},{d}")?;
        }
    }
    Ok(if report.failures == 0 {
        EXIT_OK
    } else {
        EXIT_NON_CONVERGED
    })
}

/// Builds the global rayon pool honouring `--threads` or NLSHRINK_THREADS.
/// Later calls are no-ops (the pool can only be set once per process).
pub fn init_thread_pool(threads: Option<usize>) {
    let from_env = std::env::var("NLSHRINK_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(t) = threads.or(from_env) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
}

/// Maps command results onto process exit codes, printing failures to
/// standard error.
pub fn exit_code(result: Result<i32>) -> i32 {
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) | Error::Json(_) | Error::InvalidInput(_)
                | Error::DimensionMismatch(..) | Error::ConcentrationOutOfRange { .. } => {
                    EXIT_INVALID
                }
                _ => EXIT_NON_CONVERGED,
            }
        }
    }
}
