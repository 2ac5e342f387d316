//! `placement`: validate repositories, estimate ability from response files,
//! replay the SQL worked example, run recovery simulations and serve the API.
//!
//! Exit codes: 0 success, 1 domain failure, 2 usage or I/O error.

mod responses;
mod trace;

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use placement_core::engine::SelectionMode;
use placement_core::fixtures::{self, printed};
use placement_core::ims::{Repository, RepositoryError, Severity};
use placement_core::irt::{estimate_ability, AbilityEstimate, EstimationConfig};
use placement_core::simulation::{evenly_spaced_bank, run_recovery, SimulationSpec};
use placement_core::Execution;
use placement_server::{router, serve, AppState, ServerConfig};

macro_rules! say {
    ($out:expr) => {
        $out.push('\n')
    };
    ($out:expr, $($arg:tt)*) => {{
        use std::fmt::Write as _;
        writeln!($out, $($arg)*).expect("writing to a String")
    }};
}

macro_rules! put {
    ($out:expr, $($arg:tt)*) => {{
        use std::fmt::Write as _;
        write!($out, $($arg)*).expect("writing to a String")
    }};
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Domain(_) => 1,
            Self::Usage(_) | Self::Io { .. } => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "placement", version, about = "2PL placement-test toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Fixed,
    Adaptive,
}

impl From<Mode> for SelectionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Fixed => SelectionMode::FixedByImportance,
            Mode::Adaptive => SelectionMode::AdaptiveMaxInfo,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a repository directory; exits 1 if any finding is an error.
    Validate {
        repo_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Estimate ability from a CSV response file (item_id,a,b,u).
    Estimate {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta0: f64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        #[arg(long, default_value_t = 50)]
        max_iterations: usize,
        /// Print every iteration as an `i U_i b P_i Q_i Num Denom` table.
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Reproduce the SQL worked example and check it against the reference values.
    DemoPaper {
        #[arg(long, default_value_t = fixtures::THETA_INITIAL, allow_hyphen_values = true)]
        theta0: f64,
    },
    /// Parameter-recovery simulation on an evenly spaced bank.
    Simulate {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-2,-1,0,1,2")]
        thetas: Vec<f64>,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
        items: u32,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
        reps: u32,
        #[arg(long, default_value_t = 20240529)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Mode::Fixed)]
        mode: Mode,
        /// Items administered per examinee (default: the whole bank).
        #[arg(long)]
        test_length: Option<usize>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta0: f64,
        /// Run replications on one thread.
        #[arg(long)]
        sequential: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Serve the HTTP API until interrupted.
    Serve {
        #[arg(long, env = "PLACEMENT_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, env = "PLACEMENT_REPO")]
        repo: PathBuf,
        #[arg(long, env = "PLACEMENT_STATIC_DIR")]
        static_dir: Option<PathBuf>,
        /// Session logs (default: <repo>/sessions).
        #[arg(long, env = "PLACEMENT_SESSIONS_DIR")]
        sessions_dir: Option<PathBuf>,
        #[arg(long, env = "PLACEMENT_THETA0", default_value_t = 0.0, allow_hyphen_values = true)]
        theta0: f64,
        #[arg(long, env = "PLACEMENT_TOLERANCE", default_value_t = 1e-5)]
        tolerance: f64,
        #[arg(long, env = "PLACEMENT_MAX_ITERATIONS", default_value_t = 50)]
        max_iterations: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = String::new();
    let result = match cli.command {
        Command::Validate { repo_dir, format } => validate(&mut out, repo_dir, format),
        Command::Estimate {
            responses,
            theta0,
            tolerance,
            max_iterations,
            trace,
            format,
        } => estimate(&mut out, responses, config(theta0, tolerance, max_iterations), trace, format),
        Command::DemoPaper { theta0 } => demo_paper(&mut out, theta0),
        Command::Simulate {
            thetas,
            items,
            reps,
            seed,
            mode,
            test_length,
            theta0,
            sequential,
            format,
        } => {
            let spec = SimulationSpec {
                true_thetas: thetas,
                replications: reps as usize,
                bank: evenly_spaced_bank(items as usize, -2.5, 2.5, 1.0).expect("unit discrimination is valid"),
                seed,
                mode: mode.into(),
                test_length,
                config: EstimationConfig::default().with_theta_initial(theta0),
                execution: if sequential { Execution::Sequential } else { Execution::Parallel },
            };
            simulate(&mut out, &spec, format)
        }
        Command::Serve {
            listen,
            repo,
            static_dir,
            sessions_dir,
            theta0,
            tolerance,
            max_iterations,
        } => {
            let mut cfg = ServerConfig::new(repo);
            cfg.static_dir = static_dir;
            cfg.sessions_dir = sessions_dir;
            cfg.estimation = config(theta0, tolerance, max_iterations);
            run_server(listen, cfg)
        }
    };
    emit(&out);
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn config(theta0: f64, tolerance: f64, max_iterations: usize) -> EstimationConfig {
    EstimationConfig {
        theta_initial: theta0,
        tolerance,
        max_iterations,
        ..EstimationConfig::default()
    }
}

fn validate(out: &mut String, repo_dir: PathBuf, format: Format) -> Result<ExitCode, CliError> {
    let repo = Repository::load_dir(&repo_dir).map_err(|e| match e {
        RepositoryError::Io { path, source } => CliError::Io { path, source },
        model @ RepositoryError::Model { .. } => CliError::Domain(model.to_string()),
    })?;
    let report = repo.validate();
    let errors = report.errors().count();
    let warnings = report.findings.len() - errors;
    match format {
        Format::Json => say!(out, "{}", serde_json::to_string_pretty(&report.findings).expect("findings serialize")),
        Format::Text | Format::Csv => {
            for f in &report.findings {
                let level = match f.severity() {
                    Severity::Error => "error",
                    Severity::Warning => "warning",
                };
                say!(out, "{level}: {f}");
            }
            say!(out, 
                "{} competences, {} items, {} learners: {errors} errors, {warnings} warnings",
                repo.competences.len(),
                repo.items.len(),
                repo.profiles.len()
            );
        }
    }
    Ok(if report.has_errors() { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn estimate(out: &mut String, path: PathBuf, config: EstimationConfig, show_trace: bool, format: Format) -> Result<ExitCode, CliError> {
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let rows = responses::read_responses(&path)?;
    let responses: Vec<_> = rows.iter().map(|r| r.response).collect();
    let est = estimate_ability(&responses, &config).map_err(|e| CliError::Domain(e.to_string()))?;
    match format {
        Format::Text => {
            if show_trace {
                for row in &est.trace {
                    say!(out, "iteration {} (theta_{} = {})", row.s + 1, row.s, row.theta_s);
                    put!(out, "{}", trace::table(row));
                    say!(out, "{}\n", trace::step_line(row));
                }
            }
            say!(out, "theta: {}", est.theta);
            say!(out, "standard_error: {}", est.standard_error);
            say!(out, "status: {}", est.status);
            say!(out, "iterations: {}", est.iterations);
        }
        Format::Csv => {
            say!(out, "theta,standard_error,status,iterations");
            say!(out, "{},{},{},{}", est.theta, est.standard_error, est.status, est.iterations);
        }
        Format::Json => {
            let mut v = serde_json::json!({
                "theta": est.theta,
                "standardError": est.standard_error,
                "status": est.status.as_str(),
                "iterations": est.iterations,
            });
            if show_trace {
                v["trace"] = serde_json::to_value(&est.trace).expect("trace serializes");
            }
            say!(out, "{}", serde_json::to_string_pretty(&v).expect("json"));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn check(out: &mut String, label: &str, got: f64, want: f64, tol: f64) -> bool {
    let pass = (got - want).abs() <= tol;
    say!(out, 
        "  {label} = {got:.10}, expected {want} +/- {tol:e}: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn demo_paper(out: &mut String, theta0: f64) -> Result<ExitCode, CliError> {
    let responses = fixtures::responses();
    let config = EstimationConfig::default().with_theta_initial(theta0);
    let est: AbilityEstimate = estimate_ability(&responses, &config).map_err(|e| CliError::Domain(e.to_string()))?;
    let at_reference_start = theta0 == fixtures::THETA_INITIAL;
    let wrong: Vec<String> = fixtures::INCORRECT_ITEMS.iter().map(|i| i.to_string()).collect();
    say!(out, 
        "SQL placement test: {} items, a = 1, b = 0.1 .. 2.0, answered wrongly at {}; theta_0 = {theta0}\n",
        fixtures::ITEM_COUNT,
        wrong.join(" ")
    );

    let titled = [("First iteration", &printed::ITERATION_1), ("Second iteration", &printed::ITERATION_2)];
    for ((name, reference), row) in titled.iter().zip(&est.trace) {
        say!(out, "{name}: theta_{} = {}", row.s, row.theta_s);
        put!(out, "{}", trace::table(row));
        say!(out, "{}", trace::step_line(row));
        if at_reference_start {
            say!(out, 
                "  largest P/Q gap to the printed cells: {:.5}",
                trace::max_cell_gap(row, &reference.p, &reference.q)
            );
        }
        say!(out);
    }
    if let Some(last) = est.trace.last() {
        say!(out, "Final table: theta = {}", last.theta_s);
        put!(out, "{}", trace::table(last));
        if at_reference_start {
            say!(out, 
                "  largest P/Q gap to the printed cells: {:.5}",
                trace::max_cell_gap(last, &printed::FINAL.p, &printed::FINAL.q)
            );
        }
        say!(out);
    }
    say!(out, 
        "estimate: theta = {}, standard error = {}, status {}, {} Newton steps\n",
        est.theta, est.standard_error, est.status, est.iterations
    );

    say!(out, "checks:");
    let mut pass = true;
    if at_reference_start {
        let theta1 = est.trace.first().map_or(f64::NAN, |r| r.proposal());
        pass &= check(out, "theta_1", theta1, 1.4829, 1e-3);
    } else {
        say!(out, "  theta_1: skipped (theta_0 differs from the reference start)");
    }
    pass &= check(out, "final theta", est.theta, 1.4882, 1e-3);
    say!(out, "{}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn simulate(out: &mut String, spec: &SimulationSpec, format: Format) -> Result<ExitCode, CliError> {
    let report = run_recovery(spec).map_err(|e| CliError::Usage(e.to_string()))?;
    match format {
        Format::Text => put!(out, "{report}"),
        Format::Csv => put!(out, "{}", report.to_csv()),
        Format::Json => say!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    Ok(ExitCode::SUCCESS)
}

// A closed stdout (e.g. piped into `head`) is not an error.
fn emit(out: &str) {
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error: writing output: {e}");
        }
    }
}

fn run_server(listen: SocketAddr, config: ServerConfig) -> Result<ExitCode, CliError> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let state = AppState::load(&config).map_err(|e| match e {
        placement_server::ServerError::Repository(RepositoryError::Io { path, source }) => CliError::Io { path, source },
        other => CliError::Domain(other.to_string()),
    })?;
    let runtime = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
        path: PathBuf::from("<runtime>"),
        source,
    })?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(|e| CliError::Usage(format!("cannot listen on {listen}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| CliError::Usage(e.to_string()))?;
        println!("listening on http://{addr}");
        std::io::stdout().flush().ok();
        let app = router(Arc::new(state), config.static_dir.as_deref());
        serve(listener, app, async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await
        .map_err(|source| CliError::Io {
            path: PathBuf::from(addr.to_string()),
            source,
        })?;
        eprintln!("shut down cleanly");
        Ok(ExitCode::SUCCESS)
    })
}
