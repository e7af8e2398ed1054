//! Command-line front end for the compact wave-equation solver: single runs,
//! convergence studies, stability certificates and the problem catalog.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use compactwave::extensions::{run_nonuniform_time, run_variable, VariableCoefficients};
use compactwave::problems;
use compactwave::scheme::{run, run_second_order, RunReport, SchemeState};
use compactwave::stability;
use compactwave::study::{run_study, MeshFamily, StudyMethod, StudySpec, TimeFamily};
use compactwave::SolverError;

mod config;
mod expr;
mod report;

use config::{echo_config, parse_config, resolve, ConfigFile, Method, ResolvedCase};

/// 17 significant digits, scientific notation; the fixed output format.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Parser)]
#[command(
    name = "compactwave",
    about = "Explicit fourth-order vector compact solver for the n-dimensional wave equation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSVs and the summary; falls back to the
    /// config's output.dir, then to "out".
    #[arg(long)]
    out: Option<PathBuf>,
    /// Thread cap for the parallel line solves; the COMPACTWAVE_THREADS
    /// environment variable is honored when the flag is absent.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the stability gate of the configuration.
    #[arg(long)]
    enforce_stability: Option<bool>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one case; emits the energy ledger, error norms, snapshots and
    /// a machine-readable summary.
    Run(CommonArgs),
    /// Refine the case jointly in space and time and fit convergence orders.
    Converge {
        #[command(flatten)]
        common: CommonArgs,
        /// Refinement levels (at least 3).
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Print the stability certificate without running.
    Stability(CommonArgs),
    /// List the built-in problems.
    Problems {
        /// Machine-readable tab-separated listing.
        #[arg(long)]
        machine: bool,
    },
}

enum CliError {
    Solver(SolverError),
    Io(std::io::Error),
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Solver(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

// Exit codes: 2 config, 3 stability rejection, 4 divergence, 5 I/O.
fn exit_code(err: &CliError) -> u8 {
    match err {
        CliError::Solver(SolverError::StabilityRejected { .. }) => 3,
        CliError::Solver(SolverError::Diverged { .. }) => 4,
        CliError::Solver(_) => 2,
        CliError::Io(_) => 5,
    }
}

fn describe(err: &CliError) -> String {
    match err {
        CliError::Solver(e) => e.to_string(),
        CliError::Io(e) => format!("i/o error: {e}"),
    }
}

fn main() -> ExitCode {
    // Die quietly when stdout closes early (e.g. piping into `head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => with_setup(args, cmd_run),
        Command::Converge { common, levels } => with_setup(common, move |case, cfg, out| {
            cmd_converge(case, cfg, out, levels)
        }),
        Command::Stability(args) => with_setup(args, cmd_stability),
        Command::Problems { machine } => cmd_problems(machine),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}

fn configure_threads(flag: Option<usize>) {
    let cap = flag.or_else(|| {
        std::env::var("COMPACTWAVE_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(k) = cap {
        // A failure here means a pool already exists; keep going with it.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global();
    }
}

fn with_setup(
    args: CommonArgs,
    body: impl FnOnce(ResolvedCase, ConfigFile, &Path) -> Result<(), CliError>,
) -> Result<(), CliError> {
    configure_threads(args.threads);
    let text = fs::read_to_string(&args.config)?;
    let cfg = parse_config(&text)?;
    let mut case = resolve(&cfg)?;
    if let Some(enforce) = args.enforce_stability {
        case.scheme.enforce_stability = enforce;
    }
    let out = args
        .out
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out)?;
    body(case, cfg, &out)
}

fn execute(case: &ResolvedCase) -> Result<(SchemeState, RunReport), SolverError> {
    let problem = &case.problem;
    if let Some(rho) = &case.rho {
        let coeffs = VariableCoefficients::new(
            &case.grid,
            rho.clone(),
            case.var_speeds.clone().unwrap_or_default(),
            case.rho_floor,
        )?;
        if case.method == Method::SecondOrder {
            return Err(SolverError::InvalidConfig(
                "the second-order control has no variable-coefficient form".into(),
            ));
        }
        return run_variable(
            problem,
            &case.grid,
            &case.tmesh,
            &coeffs,
            &case.scheme,
            &case.options,
        );
    }
    match case.method {
        Method::SecondOrder => run_second_order(
            problem,
            &case.grid,
            &case.tmesh,
            &case.scheme,
            &case.options,
        ),
        Method::Compact => {
            if case.tmesh.is_uniform() {
                run(
                    problem,
                    &case.grid,
                    &case.tmesh,
                    &case.scheme,
                    &case.options,
                )
            } else {
                run_nonuniform_time(
                    problem,
                    &case.grid,
                    &case.tmesh,
                    &case.scheme,
                    &case.options,
                )
            }
        }
    }
}

fn cmd_run(case: ResolvedCase, cfg: ConfigFile, out: &Path) -> Result<(), CliError> {
    let (state, run_report) = execute(&case).map_err(CliError::Solver)?;

    // Optional round-off-model injection into the auxiliary equations:
    // rerun with constant b_k and report how far the solution moves.
    let perturbation = if case.bk_injection != 0.0 {
        let dirty_case = ResolvedCase {
            problem: case.problem.clone().with_constant_b(case.bk_injection),
            ..clone_case(&case)
        };
        let (dirty, _) = execute(&dirty_case).map_err(CliError::Solver)?;
        let mut sup = 0.0f64;
        for (a, b) in state.v_curr.as_slice().iter().zip(dirty.v_curr.as_slice()) {
            sup = sup.max((a - b).abs());
        }
        Some(sup)
    } else {
        None
    };

    let mut summary = String::new();
    summary.push_str(&echo_config(&case, &cfg));
    summary.push('\n');
    summary.push_str(&report::report_toml(&run_report, perturbation));
    fs::write(out.join("summary.toml"), summary)?;

    if let Some(ledger) = &run_report.energy {
        report::write_ledger_csv(&out.join("ledger.csv"), ledger)?;
    }
    if let Some(errors) = &run_report.errors {
        report::write_errors_csv(&out.join("errors.csv"), errors, &case.tmesh)?;
    }
    if case.snapshots {
        report::write_snapshot_csv(&out.join("snapshot_final.csv"), &state.v_curr)?;
    }

    println!(
        "run '{}': {} steps, dt {}, final sup {}",
        case.name,
        run_report.steps,
        fmt_f64(run_report.dt),
        fmt_f64(run_report.final_sup)
    );
    let c = &run_report.certificate;
    println!(
        "stability [{}]: step-ratio {} (slack {}), spectral {} (slack {})",
        c.method.as_str(),
        if c.condition1_ok { "ok" } else { "VIOLATED" },
        fmt_f64(c.condition1_slack),
        if c.condition2_ok { "ok" } else { "VIOLATED" },
        fmt_f64(c.condition2_slack)
    );
    if !c.ok() && !case.scheme.enforce_stability {
        eprintln!("warning: stability conditions not satisfied; run proceeded unchecked");
    }
    if let Some(errors) = &run_report.errors {
        println!(
            "errors vs exact: energy {}, l2 {}",
            fmt_f64(errors.energy),
            fmt_f64(errors.l2)
        );
    }
    if let Some(p) = perturbation {
        println!("auxiliary injection perturbation sup {}", fmt_f64(p));
    }
    println!("wrote {}", out.join("summary.toml").display());
    Ok(())
}

fn clone_case(case: &ResolvedCase) -> ResolvedCase {
    ResolvedCase {
        name: case.name.clone(),
        problem: case.problem.clone(),
        rho: case.rho.clone(),
        var_speeds: case.var_speeds.clone(),
        rho_floor: case.rho_floor,
        grid: Arc::clone(&case.grid),
        tmesh: case.tmesh.clone(),
        scheme: case.scheme.clone(),
        method: case.method,
        options: case.options.clone(),
        bk_injection: case.bk_injection,
        snapshots: case.snapshots,
        extents: case.extents.clone(),
        cells: case.cells.clone(),
        grading: case.grading.clone(),
        total_time: case.total_time,
        time_grading: case.time_grading,
        dt_safety: case.dt_safety,
    }
}

fn cmd_converge(
    case: ResolvedCase,
    cfg: ConfigFile,
    out: &Path,
    levels: usize,
) -> Result<(), CliError> {
    let built = problems::BuiltProblem {
        problem: case.problem.clone(),
        rho: case.rho.clone(),
        var_speeds: case.var_speeds.clone(),
        rho_floor: case.rho_floor,
    };
    let mesh = if case.grading.iter().all(|&c| c == 1.0) {
        MeshFamily::Uniform
    } else {
        MeshFamily::Graded {
            compression: case.grading.clone(),
        }
    };
    let time = if case.time_grading == 1.0 {
        TimeFamily::Uniform
    } else {
        TimeFamily::Graded {
            compression: case.time_grading,
        }
    };
    let spec = StudySpec {
        extents: case.extents.clone(),
        base_cells: case.cells.clone(),
        levels,
        total_time: case.total_time,
        dt_safety: case.dt_safety,
        mesh,
        time,
        method: match case.method {
            Method::Compact => StudyMethod::Compact,
            Method::SecondOrder => StudyMethod::SecondOrder,
        },
    };
    let study = run_study(&built, &case.scheme, &spec).map_err(CliError::Solver)?;

    report::write_orders_csv(&out.join("orders.csv"), &study)?;
    let mut summary = String::new();
    summary.push_str(&echo_config(&case, &cfg));
    summary.push('\n');
    summary.push_str(&report::study_toml(&study));
    fs::write(out.join("summary.toml"), summary)?;

    println!("convergence study '{}', {} levels:", case.name, levels);
    println!("level cells        h_max         dt            energy_error  l2_error      order");
    for r in &study.rows {
        let cells = r
            .cells
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("x");
        println!(
            "{:>5} {:<12} {:<13.6e} {:<13.6e} {:<13.6e} {:<13.6e} {}",
            r.level,
            cells,
            r.h_max,
            r.dt,
            r.energy_error,
            r.l2_error,
            r.order_energy
                .map(|o| format!("{o:.3}"))
                .unwrap_or_else(|| "-".into())
        );
    }
    println!(
        "fitted slopes: energy {:.3}, l2 {:.3}",
        study.slope_energy, study.slope_l2
    );
    println!("wrote {}", out.join("orders.csv").display());
    Ok(())
}

fn cmd_stability(case: ResolvedCase, _cfg: ConfigFile, out: &Path) -> Result<(), CliError> {
    let h_t = case.tmesh.max_step();
    let cert = if let Some(rho) = &case.rho {
        let coeffs = VariableCoefficients::new(
            &case.grid,
            rho.clone(),
            case.var_speeds.clone().unwrap_or_default(),
            case.rho_floor,
        )
        .map_err(CliError::Solver)?;
        stability::frozen_coefficient_certificate(
            &case.grid,
            &coeffs.a_sq,
            h_t,
            case.scheme.eps,
            case.scheme.eps0,
        )
    } else {
        stability::certificate(
            &case.grid,
            &case.scheme.speeds,
            h_t,
            case.scheme.eps,
            case.scheme.eps0,
        )
        .map_err(CliError::Solver)?
    };
    let text = format!("[certificate]\n{}", report::certificate_toml(&cert));
    fs::write(out.join("stability.toml"), &text)?;
    println!("case '{}', dt = {}", case.name, fmt_f64(h_t));
    print!("{text}");
    println!("sufficient dt = {}", fmt_f64(cert.sufficient_dt));
    Ok(())
}

fn cmd_problems(machine: bool) -> Result<(), CliError> {
    let catalog = problems::catalog();
    if machine {
        for e in &catalog {
            println!(
                "{}\t{}\t{}\t{}\t{}\t{}",
                e.id, e.dim, e.has_exact, e.forced, e.variable_coefficients, e.description
            );
        }
    } else {
        println!("built-in problems ({}):", catalog.len());
        for e in &catalog {
            let mut tags = Vec::new();
            if e.has_exact {
                tags.push("exact");
            }
            if e.forced {
                tags.push("forced");
            }
            if e.variable_coefficients {
                tags.push("variable-coefficients");
            }
            if !e.homogeneous_boundary {
                tags.push("inhomogeneous-boundary");
            }
            println!(
                "  {:<26} {}d  {} [{}]",
                e.id,
                e.dim,
                e.description,
                tags.join(", ")
            );
        }
    }
    Ok(())
}
