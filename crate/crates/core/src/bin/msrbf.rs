use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msrbf::harness::{
    build_problem, condition_report, condition_report_iterative, run_experiment, ConditionRow,
    ExperimentConfig, DENSE_EIGEN_LIMIT,
};
use msrbf::{CompressionParams, Error, KernelFamily, Preconditioner};

/// Multiscale Matérn interpolation with samplet-compressed systems.
#[derive(Parser)]
#[command(name = "msrbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv, blocks.csv and meta.json.
    Run(Overrides),
    /// Report extremal eigenvalues and condition numbers of the diagonal blocks.
    Condition(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    kernel: Option<KernelFamily>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    /// Polynomial degree of the samplets (q + 1 vanishing moments).
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    cg_tol: Option<f64>,
    /// none | diag
    #[arg(long)]
    precond: Option<Preconditioner>,
    #[arg(long)]
    seed: Option<u64>,
    /// Point cloud or data file.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Comma-separated coordinates of the cloud target's centre.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(self) -> msrbf::Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(&self.config)?;
        if let Some(v) = self.kernel {
            c.kernel = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.levels {
            c.levels = v;
        }
        if let Some(v) = self.q {
            c.q = v;
        }
        if let Some(v) = self.rho {
            c.rho = Some(v);
        }
        if let Some(v) = self.kappa {
            c.kappa = v;
        }
        if let Some(v) = self.cg_tol {
            c.cg_tol = v;
        }
        if let Some(v) = self.precond {
            c.precond = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.points {
            c.points = Some(v);
        }
        if let Some(v) = self.x0 {
            c.x0 = Some(v);
        }
        if let Some(v) = self.out {
            c.out = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |o| format!("{o:.2}"))
}

fn run(cfg: ExperimentConfig) -> msrbf::Result<()> {
    let report = run_experiment(&cfg)?;
    println!(
        "{:>5} {:>9} {:>11} {:>11} {:>11} {:>8} {:>8} {:>8} {:>5}",
        "level", "N", "h", "error_2", "error_inf", "order_2", "ord_inf", "%nz", "CG"
    );
    for r in &report.table.rows {
        println!(
            "{:>5} {:>9} {:>11.4e} {:>11.3e} {:>11.3e} {:>8} {:>8} {:>8.3} {:>5}",
            r.level,
            r.n,
            r.h,
            r.error_2,
            r.error_inf,
            fmt_opt(r.order_2),
            fmt_opt(r.order_inf),
            r.nnz_percent,
            r.cg_iterations
        );
    }
    println!("results written to {}", report.out_dir.display());
    report.into_result().map(|_| ())
}

fn condition(cfg: ExperimentConfig) -> msrbf::Result<()> {
    let problem = build_problem::<f64>(&cfg)?;
    let h = &problem.hierarchy;
    let mut rows: Vec<ConditionRow> = Vec::new();
    for l in 1..=h.num_levels() {
        if h.level(l - 1).len() <= DENSE_EIGEN_LIMIT {
            rows.extend(condition_report(h, cfg.kernel, &[l])?);
        } else {
            let params = CompressionParams {
                rho: cfg.rho_for(h.dim()),
                kappa: cfg.kappa,
                tail_tol: Some(cfg.tail_tol),
            };
            rows.extend(condition_report_iterative(
                h,
                cfg.kernel,
                &[l],
                cfg.q,
                params,
                100,
            )?);
        }
    }
    std::fs::create_dir_all(&cfg.out)?;
    let mut w = csv::Writer::from_path(cfg.out.join("condition.csv"))?;
    println!(
        "{:>5} {:>9} {:>12} {:>12} {:>12} method",
        "level", "N", "lambda_min", "lambda_max", "cond"
    );
    for r in &rows {
        println!(
            "{:>5} {:>9} {:>12.4e} {:>12.4e} {:>12.4e} {}",
            r.level, r.n, r.lambda_min, r.lambda_max, r.cond, r.method
        );
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (overrides, action): (Overrides, fn(ExperimentConfig) -> msrbf::Result<()>) =
        match cli.command {
            Command::Run(o) => (o, run),
            Command::Condition(o) => (o, condition),
        };
    let result = overrides.apply().and_then(action);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_solver_failure() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}
