use std::fmt::Write as _;
use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use usd_core::closed_forms::{self, ClosedFormResult};
use usd_core::corpus::run_corpus;
use usd_core::phase_bound::PhaseVector;
use usd_core::report::{emit_report, to_flat_csv, to_json, ReportFormat};
use usd_core::schmidt::{self, PhaseShiftReport};
use usd_core::solver::{
    brute_force_oracle, default_grid_resolution, reconstruct_povm, OracleResult, PovmReport,
};
use usd_core::{
    minimize_bound, parse_stateset, BoundResult, MinimizerConfig, SolverConfig, SolverResult,
    StateSet, UsdError,
};

/// Unambiguous discrimination of linearly independent pure states.
#[derive(Debug, Parser)]
#[command(name = "usd", version)]
struct Cli {
    /// Seed for the multi-start phase minimizer.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Command tolerance: gradient tolerance for `bound`, final barrier
    /// weight for `solve` and `examples`, residual tolerance for `schmidt`
    /// and `closed-form`.
    #[arg(long, global = true)]
    tol: Option<f64>,

    #[arg(long, global = true, default_value = "text", value_parser = parse_format)]
    format: ReportFormat,

    /// Rescale states to unit norm and priors to sum 1 instead of rejecting.
    #[arg(long, global = true)]
    normalize: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimize the phase bound.
    Bound {
        /// Instance file, or `-` for stdin.
        instance: PathBuf,
        /// Number of random starts.
        #[arg(long, default_value_t = 64)]
        starts: usize,
    },
    /// Solve for the optimal success probabilities.
    Solve {
        instance: PathBuf,
        /// Cross-check against the grid search.
        #[arg(long)]
        oracle: bool,
        /// Grid resolution for `--oracle`.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Schmidt spectrum and conversion probability at given phases.
    Schmidt {
        instance: PathBuf,
        /// Phases theta_2..theta_N; defaults to the bound minimizer.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
    },
    /// Closed-form bounds that apply to the instance.
    ClosedForm { instance: PathBuf },
    /// Run the built-in corpus.
    Examples {
        /// Case name substring or `*` glob.
        filter: Option<String>,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: UsdError| e.to_string())
}

const SCHMIDT_TOL: f64 = 1e-12;
const CLOSED_FORM_TOL: f64 = 2e-6;
const ORACLE_SLACK: f64 = 1e-9;

/// Input and usage problems (exit 2). Tolerance failures go through
/// `Output::pass` instead.
struct Failure(String);

impl From<UsdError> for Failure {
    fn from(e: UsdError) -> Self {
        Failure(e.to_string())
    }
}

struct Output {
    body: String,
    pass: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{}", out.body);
            if out.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path, normalize: bool) -> Result<StateSet, Failure> {
    let text = if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Failure(format!("stdin: {e}")))?;
        s
    } else {
        std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?
    };
    Ok(parse_stateset(&text, normalize)?)
}

fn check_tol(tol: Option<f64>) -> Result<(), Failure> {
    match tol {
        Some(t) if !(t.is_finite() && t > 0.0) => {
            Err(Failure(format!("--tol must be positive, got {t}")))
        }
        _ => Ok(()),
    }
}

fn minimizer(cli: &Cli) -> MinimizerConfig {
    MinimizerConfig {
        seed: cli.seed,
        ..MinimizerConfig::default()
    }
}

fn render<T: Serialize>(
    value: &T,
    format: ReportFormat,
    text: impl FnOnce() -> String,
) -> Result<String, Failure> {
    Ok(match format {
        ReportFormat::Text => text(),
        ReportFormat::Json => to_json(value)? + "\n",
        ReportFormat::Csv => to_flat_csv(value)?,
    })
}

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    check_tol(cli.tol)?;
    match &cli.command {
        Command::Bound { instance, starts } => bound(cli, instance, *starts),
        Command::Solve {
            instance,
            oracle,
            grid,
        } => solve(cli, instance, *oracle, *grid),
        Command::Schmidt { instance, theta } => schmidt_cmd(cli, instance, theta.as_deref()),
        Command::ClosedForm { instance } => closed_form(cli, instance),
        Command::Examples { filter } => examples(cli, filter.as_deref()),
    }
}

fn bound(cli: &Cli, path: &Path, starts: usize) -> Result<Output, Failure> {
    let set = load(path, cli.normalize)?;
    let mut cfg = MinimizerConfig {
        starts,
        ..minimizer(cli)
    };
    if let Some(t) = cli.tol {
        cfg.grad_tol = t;
    }
    let r = minimize_bound(&set, &cfg)?;
    let body = render(&r, cli.format, || bound_text(&r))?;
    Ok(Output {
        body,
        pass: r.converged,
    })
}

fn bound_text(r: &BoundResult) -> String {
    format!(
        "bound          {:.10}\nargmin         {}\nstarts         {}\ngradient norm  {:.3e}\nconverged      {}\n",
        r.value,
        join(r.argmin.as_slice()),
        r.starts_used,
        r.best_gradient_norm,
        r.converged
    )
}

#[derive(Serialize)]
struct SolveOutput {
    #[serde(flatten)]
    result: SolverResult,
    povm: PovmReport,
    oracle: Option<OracleResult>,
}

fn solve(cli: &Cli, path: &Path, oracle: bool, grid: Option<usize>) -> Result<Output, Failure> {
    let set = load(path, cli.normalize)?;
    let mut cfg = SolverConfig {
        minimizer: minimizer(cli),
        ..SolverConfig::default()
    };
    if let Some(t) = cli.tol {
        cfg.t_final = t.min(cfg.t_start);
    }
    let result = usd_core::solve_optimal(&set, &cfg)?;
    let povm = reconstruct_povm(&set, &result.gamma_opt.gamma)?;
    let oracle = if oracle || grid.is_some() {
        let res = grid.unwrap_or_else(|| default_grid_resolution(set.len()));
        Some(brute_force_oracle(&set, res)?)
    } else {
        None
    };
    let pass = result.converged
        && povm.valid
        && oracle
            .as_ref()
            .is_none_or(|o| o.value <= result.p_opt + ORACLE_SLACK);
    let out = SolveOutput {
        result,
        povm,
        oracle,
    };
    let body = render(&out, cli.format, || solve_text(&out))?;
    Ok(Output { body, pass })
}

fn solve_text(out: &SolveOutput) -> String {
    let r = &out.result;
    let mut s = String::new();
    let _ = writeln!(s, "gamma_opt      {}", join(&r.gamma_opt.gamma));
    let _ = writeln!(s, "p_opt          {:.10}", r.p_opt);
    let _ = writeln!(s, "class          {}", r.class.label);
    let _ = writeln!(
        s,
        "evidence       {}",
        serde_json::to_string(&r.class.evidence).unwrap_or_default()
    );
    let _ = writeln!(s, "sigma_min      {:.3e}", r.gamma_opt.sigma_min);
    let _ = writeln!(s, "dual bound     {:.10}", r.dual_bound);
    let _ = writeln!(s, "phase bound    {:.10}", r.bound);
    let _ = writeln!(s, "bound gap      {:.3e}", r.bound_gap);
    let p = &out.povm;
    let _ = writeln!(
        s,
        "povm           {} (success residual {:.1e}, min eigenvalue {:.1e}, inconclusive {:.1e})",
        if p.valid { "valid" } else { "INVALID" },
        p.success_residual,
        p.success_min_eigenvalue,
        p.inconclusive_min_eigenvalue
    );
    if let Some(o) = &out.oracle {
        let _ = writeln!(
            s,
            "oracle         {:.10} (grid {}, diff {:.3e})",
            o.value,
            o.resolution,
            r.p_opt - o.value
        );
    }
    s
}

#[derive(Serialize)]
struct SchmidtOutput {
    theta: PhaseVector,
    eta_norms_sq: Vec<f64>,
    spectrum: Vec<f64>,
    conversion_probability: f64,
    vidal_probability: f64,
    phase_shift: Vec<PhaseShiftReport>,
    normalization_residual: f64,
    max_residual: f64,
}

fn schmidt_cmd(cli: &Cli, path: &Path, theta: Option<&[f64]>) -> Result<Output, Failure> {
    let set = load(path, cli.normalize)?;
    let n = set.len();
    let theta = match theta {
        Some(free) if free.len() != n - 1 => {
            return Err(Failure(format!(
                "--theta needs {} values (theta_2..theta_N), got {}",
                n - 1,
                free.len()
            )))
        }
        Some(free) => PhaseVector::from_free(free),
        None => minimize_bound(&set, &minimizer(cli))?.argmin,
    };
    let fam = schmidt::eta_family(&set, &theta)?;
    let spectrum = schmidt::schmidt_spectrum(&set, &theta)?;
    let conversion = schmidt::conversion_probability(&set, &theta)?;
    let vidal = schmidt::vidal_probability(&spectrum);
    let phase_shift = (0..n)
        .map(|k| schmidt::check_phase_shift_equivalence(&set, k, &theta))
        .collect::<Result<Vec<_>, _>>()?;
    let normalization_residual = fam.norms_sq.iter().sum::<f64>() - n as f64;
    let max_residual = phase_shift
        .iter()
        .map(|r| r.difference.abs())
        .chain([(conversion - vidal).abs()])
        .fold(normalization_residual.abs() / n as f64, f64::max);
    let out = SchmidtOutput {
        theta,
        eta_norms_sq: fam.norms_sq,
        spectrum: spectrum.coeffs().to_vec(),
        conversion_probability: conversion,
        vidal_probability: vidal,
        phase_shift,
        normalization_residual,
        max_residual,
    };
    let pass = max_residual <= cli.tol.unwrap_or(SCHMIDT_TOL);
    let body = render(&out, cli.format, || schmidt_text(&out))?;
    Ok(Output { body, pass })
}

fn schmidt_text(o: &SchmidtOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "theta          {}", join(o.theta.as_slice()));
    let _ = writeln!(s, "|eta_k|^2      {}", join(&o.eta_norms_sq));
    let _ = writeln!(s, "spectrum       {}", join(&o.spectrum));
    let _ = writeln!(s, "conversion     {:.10}", o.conversion_probability);
    let _ = writeln!(s, "vidal          {:.10}", o.vidal_probability);
    for r in &o.phase_shift {
        let _ = writeln!(s, "shift k={:<5}  {:.3e}", r.k, r.difference);
    }
    let _ = writeln!(s, "sum - N        {:.3e}", o.normalization_residual);
    s
}

#[derive(Serialize)]
struct ClosedFormOutput {
    bound: f64,
    forms: Vec<ClosedFormResult>,
    max_residual: Option<f64>,
}

fn closed_form(cli: &Cli, path: &Path) -> Result<Output, Failure> {
    let set = load(path, cli.normalize)?;
    let bound = minimize_bound(&set, &minimizer(cli))?.value;
    let forms = closed_forms::evaluate_all(&set);
    let max_residual = forms
        .iter()
        .filter_map(|f| f.value)
        .map(|v| (v - bound).abs())
        .reduce(f64::max);
    let pass = max_residual.is_none_or(|r| r <= cli.tol.unwrap_or(CLOSED_FORM_TOL));
    let out = ClosedFormOutput {
        bound,
        forms,
        max_residual,
    };
    let body = render(&out, cli.format, || {
        let mut s = String::new();
        for f in &out.forms {
            match (f.value, &f.reason) {
                (Some(v), _) => {
                    let _ = writeln!(s, "{:<28}  {v:.10}", f.formula.as_str());
                }
                (None, reason) => {
                    let _ = writeln!(
                        s,
                        "{:<28}  n/a ({})",
                        f.formula,
                        reason.as_deref().unwrap_or("")
                    );
                }
            }
        }
        let _ = writeln!(s, "{:<28}  {bound:.10}", "minimized bound");
        s
    })?;
    Ok(Output { body, pass })
}

fn examples(cli: &Cli, filter: Option<&str>) -> Result<Output, Failure> {
    let mut cfg = SolverConfig {
        minimizer: minimizer(cli),
        ..SolverConfig::default()
    };
    if let Some(t) = cli.tol {
        cfg.t_final = t.min(cfg.t_start);
    }
    let report = run_corpus(filter, &cfg)?;
    let body = emit_report(&report, cli.format)?;
    Ok(Output {
        body,
        pass: report.all_pass,
    })
}
