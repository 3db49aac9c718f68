//! `ulca` command line: batch fits, the backward-selection evaluation, and
//! the server.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use ulca::backward::eval::{evaluate_setting, EvalSetting};
use ulca::dataset::{write_matrix_csv, Dataset};
use ulca::error::UlcaError;
use ulca::group_stats::compute_group_stats;
use ulca::model::{fit_with_stats, FitMode, UlcaParams};
use ulca::solvers::{Backend, SolverConfig};

use crate::app::{self, AppState, ServeError, ServerConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_PORT_IN_USE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "ulca", version, about = "Unified linear comparative analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a projection to a labeled CSV and write M and Z.
    Fit(FitArgs),
    /// Project a CSV with a previously written projection matrix.
    Transform(TransformArgs),
    /// Run the mimicked-gesture evaluation of backward selection.
    EvalBackward(EvalArgs),
    /// Serve the HTTP and WebSocket interface.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Pca,
    Lda,
    /// LDA with group-size weights.
    LdaWeighted,
    Cpca,
    Ccpca,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaArg {
    Auto,
    Fixed(f64),
}

fn parse_alpha(s: &str) -> Result<AlphaArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(AlphaArg::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(AlphaArg::Fixed(v)),
        _ => Err(format!(
            "expected `auto` or a non-negative number, got `{s}`"
        )),
    }
}

fn parse_weight(s: &str) -> Result<f64, String> {
    let t = s.trim();
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite() && *v >= 0.0)
        .ok_or_else(|| format!("`{t}` is not a non-negative weight"))
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "label")]
    pub label_col: String,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    #[arg(long, value_parser = parse_weight, value_delimiter = ',', num_args = 1..)]
    pub w_tg: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_weight, value_delimiter = ',', num_args = 1..)]
    pub w_bg: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_weight, value_delimiter = ',', num_args = 1..)]
    pub w_bw: Option<Vec<f64>>,
    /// `auto` for trace-ratio mode, or a fixed non-negative α.
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: Option<AlphaArg>,
    #[arg(long, default_value_t = 0.0)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma1: f64,
    #[arg(long, default_value = "evd")]
    pub backend: Backend,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, value_enum, conflicts_with_all = ["w_tg", "w_bg", "w_bw"])]
    pub preset: Option<Preset>,
    /// Target group for the pca/cpca/ccpca presets, by name or index.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub out_proj: Option<PathBuf>,
    #[arg(long)]
    pub out_embedding: Option<PathBuf>,
    /// Treat solver non-convergence as an error.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "label")]
    pub label_col: String,
    /// Projection CSV as written by `fit --out-proj`.
    #[arg(long)]
    pub proj: PathBuf,
    #[arg(long)]
    pub standardize: bool,
    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_budget(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(m) if m > 0 => Ok(m),
        _ => Err(format!("`{s}` is not a positive budget")),
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub c: usize,
    /// Comma-separated evaluation budgets.
    #[arg(long, value_parser = parse_budget, value_delimiter = ',', default_value = "10,20,40,80")]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    pub label_col: String,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub snapshot_dir: Option<PathBuf>,
    /// Directory holding the built UI (`index.html` plus `assets/`).
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<UlcaError> for Failure {
    fn from(e: UlcaError) -> Self {
        let code = match e {
            UlcaError::InvalidParams(_) | UlcaError::DimensionMismatch(_) => EXIT_USAGE,
            UlcaError::EigenFailure | UlcaError::SingularDenominator => EXIT_SOLVER,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub n: usize,
    pub d: usize,
    pub dims: usize,
    pub mode: FitMode,
    pub backend: Backend,
    pub objective: f64,
    pub alpha_used: f64,
    pub iterations: usize,
    pub converged: bool,
    pub params_used: UlcaParams,
}

fn resolve_target(data: &Dataset, target: Option<&str>) -> Result<usize, Failure> {
    let Some(t) = target else { return Ok(0) };
    data.group_index(t)
        .or_else(|| t.parse::<usize>().ok().filter(|&i| i < data.c()))
        .ok_or_else(|| Failure::usage(format!("unknown target group `{t}`")))
}

fn load(path: &PathBuf, label_col: &str, standardize: bool) -> Result<Dataset, Failure> {
    let data = Dataset::from_csv_path(path, label_col).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(if standardize {
        data.standardized()
    } else {
        data
    })
}

fn fit_params(args: &FitArgs, data: &Dataset) -> Result<UlcaParams, Failure> {
    let c = data.c();
    let mut params = match args.preset {
        Some(preset) => {
            let target = resolve_target(data, args.target.as_deref())?;
            match preset {
                Preset::Pca => UlcaParams::pca(c, target),
                Preset::Lda => UlcaParams::lda(c),
                Preset::LdaWeighted => UlcaParams::lda_count_weighted(&compute_group_stats(data)?),
                // Fixed α = 1 unless `--alpha` says otherwise.
                Preset::Cpca => UlcaParams::cpca(c, target, Some(1.0)),
                Preset::Ccpca => UlcaParams::ccpca(c, target, Some(1.0)),
            }
        }
        None => {
            if args.w_tg.is_none() && args.w_bg.is_none() && args.w_bw.is_none() {
                return Err(Failure::usage(
                    "give --preset or at least one of --w-tg/--w-bg/--w-bw",
                ));
            }
            let or_zeros = |w: &Option<Vec<f64>>| w.clone().unwrap_or_else(|| vec![0.0; c]);
            UlcaParams {
                w_tg: or_zeros(&args.w_tg),
                w_bg: or_zeros(&args.w_bg),
                w_bw: or_zeros(&args.w_bw),
                alpha: None,
                gamma0: 0.0,
                gamma1: 0.0,
                dprime: 2,
            }
        }
    };
    match args.alpha {
        Some(AlphaArg::Auto) => params.alpha = None,
        Some(AlphaArg::Fixed(a)) => params.alpha = Some(a),
        None => {}
    }
    params.gamma0 = args.gamma0;
    params.gamma1 = args.gamma1;
    params.dprime = args.dims;
    for (name, w) in [
        ("--w-tg", &params.w_tg),
        ("--w-bg", &params.w_bg),
        ("--w-bw", &params.w_bw),
    ] {
        if w.len() != c {
            return Err(Failure::usage(format!(
                "{name} has {} entries but the data has {c} groups",
                w.len()
            )));
        }
    }
    Ok(params)
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: format!("{}: {e}", path.display()),
    })
}

fn component_names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

pub fn cmd_fit(args: &FitArgs) -> Result<FitReport, Failure> {
    if args.dims == 0 {
        return Err(Failure::usage("--dims must be at least 1"));
    }
    let data = load(&args.data, &args.label_col, args.standardize)?;
    if args.dims > data.d() {
        return Err(Failure::usage(format!(
            "--dims {} exceeds the {} attributes in the data",
            args.dims,
            data.d()
        )));
    }
    let params = fit_params(args, &data)?;
    let stats = compute_group_stats(&data)?;
    let fit = fit_with_stats(
        &data,
        &stats,
        &params,
        &SolverConfig::with_backend(args.backend),
    )?;
    let p = &fit.projection;
    if !p.converged {
        if args.strict {
            return Err(Failure {
                code: EXIT_SOLVER,
                message: format!("solver did not converge after {} iterations", p.iterations),
            });
        }
        eprintln!(
            "warning: solver did not converge after {} iterations",
            p.iterations
        );
    }

    if let Some(path) = &args.out_proj {
        let mut header = vec!["attribute".to_string()];
        header.extend(component_names("m", args.dims));
        write_matrix_csv(
            create(path)?,
            &header,
            Some(data.attribute_names()),
            &p.matrix,
        )?;
    }
    if let Some(path) = &args.out_embedding {
        write_matrix_csv(
            create(path)?,
            &component_names("z", args.dims),
            None,
            &fit.embedding,
        )?;
    }
    Ok(FitReport {
        n: data.n(),
        d: data.d(),
        dims: args.dims,
        mode: fit.mode,
        backend: p.backend,
        objective: p.objective,
        alpha_used: p.alpha_used,
        iterations: p.iterations,
        converged: p.converged,
        params_used: fit.params_used.clone(),
    })
}

/// Reads a projection CSV: header row, attribute name first, then one
/// column per component.
pub fn read_projection(path: &PathBuf) -> Result<(Vec<String>, DMatrix<f64>), Failure> {
    let bad = |m: String| Failure {
        code: EXIT_DATA,
        message: format!("{}: {m}", path.display()),
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let k = rdr
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .len()
        .saturating_sub(1);
    if k == 0 {
        return Err(bad("no component columns".into()));
    }
    let mut names = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        names.push(rec[0].to_string());
        for f in rec.iter().skip(1) {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| bad(format!("`{f}` is not a number")))?,
            );
        }
    }
    Ok((
        names.clone(),
        DMatrix::from_row_slice(names.len(), k, &values),
    ))
}

pub fn cmd_transform(args: &TransformArgs) -> Result<(), Failure> {
    let data = load(&args.data, &args.label_col, args.standardize)?;
    let (names, m) = read_projection(&args.proj)?;
    if names != data.attribute_names() {
        return Err(Failure {
            code: EXIT_DATA,
            message: "projection attributes do not match the data columns".into(),
        });
    }
    let z = data.x() * &m;
    let header = component_names("z", m.ncols());
    match &args.out {
        Some(path) => write_matrix_csv(create(path)?, &header, None, &z)?,
        None => write_matrix_csv(io::stdout().lock(), &header, None, &z)?,
    }
    Ok(())
}

pub fn cmd_eval_backward(args: &EvalArgs) -> Result<ulca::backward::eval::EvalReport, Failure> {
    if args.c < 2 || args.d < 2 || args.n < args.c * 3 {
        return Err(Failure::usage(
            "need c >= 2, d >= 2 and at least 3 points per group",
        ));
    }
    let setting = EvalSetting {
        n: args.n,
        d: args.d,
        c: args.c,
        budgets: args.m.clone(),
        trials: args.trials,
        seed: args.seed,
    };
    Ok(evaluate_setting(&setting)?)
}

pub fn cmd_serve(args: &ServeArgs) -> Result<(), Failure> {
    let config = ServerConfig {
        dataset_path: args.data.clone(),
        label_col: args.label_col.clone(),
        standardize: args.standardize,
        snapshot_dir: args.snapshot_dir.clone(),
        static_dir: args.static_dir.clone(),
    };
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: e.to_string(),
    })?;
    runtime
        .block_on(async move {
            let state = AppState::new(config)?;
            let listener = app::bind(addr).await?;
            eprintln!("listening on http://{}", listener.local_addr()?);
            app::serve(listener, state, shutdown_signal()).await?;
            Ok::<(), ServeError>(())
        })
        .map_err(|e| Failure {
            code: match e {
                ServeError::PortInUse(_) => EXIT_PORT_IN_USE,
                ServeError::Dataset(_) => EXIT_DATA,
                ServeError::Io(_) => EXIT_FAILURE,
            },
            message: e.to_string(),
        })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(io::Error::other)
        .and_then(|_| writeln!(out))
        .map_err(|e| Failure {
            code: EXIT_FAILURE,
            message: e.to_string(),
        })
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Fit(args) => print_json(&cmd_fit(&args)?),
        Command::Transform(args) => cmd_transform(&args),
        Command::EvalBackward(args) => print_json(&cmd_eval_backward(&args)?),
        Command::Serve(args) => cmd_serve(&args),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
