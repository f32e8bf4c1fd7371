//! Command-line driver for the level-set curvature verification suite.
//!
//! Exit codes: 0 when every row passes, 1 on verification failure, 2 on
//! usage errors (bad flags, unknown scenarios, unwritable output paths).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use levelcurv::report::{
    pointwise_csv, run_pointwise, run_verify, verification_csv, PointwiseConfig, VerifyConfig,
};

#[derive(Parser)]
#[command(
    name = "levelcurv",
    about = "Verify total-mean-curvature comparison identities on level-set foliations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare both sides of the integral identity per scenario and order.
    Verify(VerifyArgs),
    /// Compare the closed-form derivative of Φ_r with the finite-difference
    /// oracle at random interior points.
    Pointwise(PointwiseArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario spec, repeatable, e.g. `euclid_shell(3,0.5,1)`. With no
    /// scenarios given (and none in the config file) the report is empty.
    #[arg(long = "scenario")]
    scenarios: Vec<String>,

    /// Run every cataloged scenario.
    #[arg(long)]
    all: bool,

    /// Orders to check: comma list (`0,1,2`) or range (`0..3`, inclusive).
    /// Defaults to every valid order per scenario.
    #[arg(long)]
    r: Option<String>,

    /// RNG seed for sampled points.
    #[arg(long)]
    seed: Option<u64>,

    /// Write the report to this path.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Report format for --out.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Key-value config file; command-line flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Surface grid, e.g. `64x128` or `32x32x32`.
    #[arg(long)]
    grid: Option<String>,

    /// Outer quadrature nodes for the coarea t-integral.
    #[arg(long = "t-nodes")]
    t_nodes: Option<usize>,

    /// Relative tolerance on |LHS − RHS|.
    #[arg(long)]
    tol: Option<f64>,

    /// Absolute tolerance for near-zero rows.
    #[arg(long = "abs-tol")]
    abs_tol: Option<f64>,
}

#[derive(Args)]
struct PointwiseArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Sample points per (scenario, r) row.
    #[arg(long)]
    points: Option<usize>,

    /// Base finite-difference step; default 1e-4 times the chart diameter.
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Entries a config file can carry; flags take precedence.
#[derive(Default)]
struct FileConfig {
    scenarios: Vec<String>,
    all: bool,
    r: Option<String>,
    grid: Option<String>,
    t_nodes: Option<usize>,
    tol: Option<f64>,
    abs_tol: Option<f64>,
    seed: Option<u64>,
    points: Option<usize>,
    h: Option<f64>,
}

fn parse_config_file(path: &PathBuf) -> anyhow::Result<FileConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut cfg = FileConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "scenario" => cfg.scenarios.push(value.to_string()),
            "all" => cfg.all = value.parse().context("`all` must be true/false")?,
            "r" => cfg.r = Some(value.to_string()),
            "grid" => cfg.grid = Some(value.to_string()),
            "t_nodes" => cfg.t_nodes = Some(value.parse().context("`t_nodes`")?),
            "tol" => cfg.tol = Some(value.parse().context("`tol`")?),
            "abs_tol" => cfg.abs_tol = Some(value.parse().context("`abs_tol`")?),
            "seed" => cfg.seed = Some(value.parse().context("`seed`")?),
            "points" => cfg.points = Some(value.parse().context("`points`")?),
            "h" => cfg.h = Some(value.parse().context("`h`")?),
            other => return Err(anyhow!("line {}: unknown key `{other}`", lineno + 1)),
        }
    }
    Ok(cfg)
}

fn parse_orders(spec: &str) -> anyhow::Result<Vec<usize>> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let lo: usize = a.trim().parse().context("order range start")?;
        let hi: usize = b.trim().parse().context("order range end")?;
        if hi < lo {
            return Err(anyhow!("empty order range `{spec}`"));
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| anyhow!("order `{s}`: {e}"))
        })
        .collect()
}

fn parse_grid(spec: &str) -> anyhow::Result<Vec<usize>> {
    spec.split(['x', 'X'])
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| anyhow!("grid `{s}`: {e}"))
        })
        .collect()
}

fn scenario_list(common: &CommonArgs, file: &FileConfig) -> Vec<String> {
    if common.all || file.all {
        return levelcurv::scenarios::catalog()
            .into_iter()
            .map(str::to_string)
            .collect();
    }
    if !common.scenarios.is_empty() {
        common.scenarios.clone()
    } else {
        file.scenarios.clone()
    }
}

fn write_output(path: &PathBuf, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents)
        .with_context(|| format!("cannot write report to {}", path.display()))
}

fn init_workers() {
    if let Ok(value) = std::env::var("LEVELCURV_WORKERS") {
        if let Ok(workers) = value.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build_global();
        }
    }
}

fn run() -> anyhow::Result<bool> {
    let cli = Cli::try_parse().map_err(|e| anyhow!(e.to_string()))?;
    init_workers();

    match cli.command {
        Command::Verify(args) => {
            let file = match &args.common.config {
                Some(path) => parse_config_file(path)?,
                None => FileConfig::default(),
            };
            let rs = match args.common.r.as_deref().or(file.r.as_deref()) {
                Some(spec) => Some(parse_orders(spec)?),
                None => None,
            };
            let grid = match args.grid.as_deref().or(file.grid.as_deref()) {
                Some(spec) => Some(parse_grid(spec)?),
                None => None,
            };
            let config = VerifyConfig {
                scenarios: scenario_list(&args.common, &file),
                rs,
                grid,
                t_nodes: args.t_nodes.or(file.t_nodes).unwrap_or(32),
                tol_rel: args.tol.or(file.tol).unwrap_or(1e-4),
                tol_abs: args.abs_tol.or(file.abs_tol).unwrap_or(1e-9),
                seed: args.common.seed.or(file.seed).unwrap_or(0),
            };
            let report = run_verify(&config)?;

            println!(
                "{:<28} {:>2} {:>14} {:>14} {:>10} {:>8} {:>6}",
                "scenario", "r", "lhs", "rhs", "rel_err", "order", "pass"
            );
            for row in &report.rows {
                println!(
                    "{:<28} {:>2} {:>14.8e} {:>14.8e} {:>10.2e} {:>8} {:>6}",
                    row.scenario,
                    row.r,
                    row.lhs,
                    row.rhs,
                    row.rel_error,
                    row.convergence_order
                        .map(|p| format!("{p:.2}"))
                        .unwrap_or_else(|| "-".into()),
                    if row.pass { "ok" } else { "FAIL" }
                );
                if let Some(err) = &row.error {
                    println!("  error: {err}");
                }
            }
            if let Some(path) = &args.common.out {
                let contents = match args.common.format {
                    Format::Json => serde_json::to_string_pretty(&report)?,
                    Format::Csv => verification_csv(&report),
                };
                write_output(path, &contents)?;
            }
            Ok(report.all_pass)
        }
        Command::Pointwise(args) => {
            let file = match &args.common.config {
                Some(path) => parse_config_file(path)?,
                None => FileConfig::default(),
            };
            let rs = match args.common.r.as_deref().or(file.r.as_deref()) {
                Some(spec) => Some(parse_orders(spec)?),
                None => None,
            };
            let config = PointwiseConfig {
                scenarios: scenario_list(&args.common, &file),
                rs,
                points: args.points.or(file.points).unwrap_or(100),
                h: args.h.or(file.h),
                seed: args.common.seed.or(file.seed).unwrap_or(0),
            };
            let report = run_pointwise(&config)?;

            println!(
                "{:<28} {:>2} {:>12} {:>12} {:>7} {:>10} {:>6}",
                "scenario", "r", "res(h)", "res(h/2)", "slope", "C", "pass"
            );
            for row in &report.rows {
                println!(
                    "{:<28} {:>2} {:>12.4e} {:>12.4e} {:>7} {:>10.3e} {:>6}",
                    row.scenario,
                    row.r,
                    row.max_residual_h,
                    row.max_residual_half,
                    row.slope
                        .map(|s| format!("{s:.2}"))
                        .unwrap_or_else(|| "-".into()),
                    row.c_factor,
                    if row.pass { "ok" } else { "FAIL" }
                );
                if let Some(err) = &row.error {
                    println!("  error: {err}");
                }
            }
            if let Some(path) = &args.common.out {
                let contents = match args.common.format {
                    Format::Json => serde_json::to_string_pretty(&report)?,
                    Format::Csv => pointwise_csv(&report),
                };
                write_output(path, &contents)?;
            }
            Ok(report.all_pass)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
