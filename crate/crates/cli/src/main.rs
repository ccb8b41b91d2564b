//! `linagg`: runs the experiment campaigns and writes their tables.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or a
//! campaign errors, 2 for usage and configuration errors.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linagg_core::bounds::{self, BoundResult};
use linagg_core::experiments::{self, ExperimentConfig};
use serde_json::json;

const USAGE: u8 = 2;
const CHECKS_FAILED: u8 = 1;

#[derive(Parser)]
#[command(name = "linagg", version, about = "Least-squares ERM over a linear span: rate and lower-bound campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Excess-risk rates in N and M, OLS cross-check, small-ball bound coverage
    Rate(CampaignArgs),
    /// Small-ball pair, moment constant, B and Paley-Zygmund estimates
    Constants(CampaignArgs),
    /// Evaluate the closed-form bounds and print them as CSV
    Bounds(BoundArgs),
    /// Rare-spike variance tail, polynomial excess tail, non-unique ERM
    LowerBounds(CampaignArgs),
    /// Empirical small-ball fractions over random directions
    SmallBall(CampaignArgs),
    /// Multiplier process tail and design isomorphy
    Multiplier(CampaignArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Rate(_) => "rate",
            Command::Constants(_) => "constants",
            Command::Bounds(_) => "bounds",
            Command::LowerBounds(_) => "lower-bounds",
            Command::SmallBall(_) => "small-ball",
            Command::Multiplier(_) => "multiplier",
        }
    }
}

#[derive(Args)]
struct CampaignArgs {
    /// TOML file merged over the preset
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `master_seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = "desk", value_parser = ["ci", "desk"])]
    preset: String,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 4000)]
    n: usize,
    /// Confidence parameter
    #[arg(long, default_value_t = 10.0)]
    x: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    kappa0: f64,
    /// Defaults to the Gaussian two-sided tail at `kappa0`
    #[arg(long)]
    beta0: Option<f64>,
    /// Defaults to M
    #[arg(long)]
    b: Option<f64>,
    /// Fourth moment of the noise; defaults to the Gaussian value 3 sigma^4
    #[arg(long)]
    m4: Option<f64>,
    /// Defaults to the Gaussian value 3^(1/4)
    #[arg(long)]
    theta0: Option<f64>,
    /// L4 norm of the noise; defaults to 3^(1/4) sigma
    #[arg(long)]
    sigma4: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    let name = cli.command.name();
    match cli.command {
        Command::Bounds(args) => cmd_bounds(&args),
        Command::Rate(args)
        | Command::Constants(args)
        | Command::LowerBounds(args)
        | Command::SmallBall(args)
        | Command::Multiplier(args) => cmd_campaign(name, &args),
    }
}

fn cmd_bounds(a: &BoundArgs) -> ExitCode {
    let beta0 = a
        .beta0
        .unwrap_or_else(|| linagg_core::constants::gaussian_two_sided_tail(a.kappa0));
    let rows: [(&str, BoundResult); 3] = [
        ("theorem_a", bounds::bound_theorem_a(beta0, a.kappa0, a.sigma, a.m, a.n, a.x)),
        (
            "catoni",
            bounds::bound_catoni(
                a.b.unwrap_or(a.m as f64),
                a.m4.unwrap_or(3.0 * a.sigma.powi(4)),
                a.m,
                a.n,
                a.x,
            ),
        ),
        (
            "theorem_2",
            bounds::bound_theorem_2(
                a.theta0.unwrap_or(3f64.powf(0.25)),
                a.sigma4.unwrap_or(3f64.powf(0.25) * a.sigma),
                a.m,
                a.n,
                a.x,
            ),
        ),
    ];
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::stdout().lock());
    let mut write = || -> Result<(), csv::Error> {
        w.write_record(["bound", "value", "probability", "valid", "clamped", "detail"])?;
        for (name, r) in &rows {
            w.write_record([
                name.to_string(),
                r.value.to_string(),
                r.probability.to_string(),
                r.valid.to_string(),
                r.clamped.to_string(),
                r.detail.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    match write() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CHECKS_FAILED)
        }
    }
}

fn cmd_campaign(command: &str, args: &CampaignArgs) -> ExitCode {
    let cfg = match config::load(&args.preset, args.config.as_deref(), args.seed) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(USAGE);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.workers).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(USAGE);
        }
    };
    match run(command, args, &cfg, &pool) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(CHECKS_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CHECKS_FAILED)
        }
    }
}

fn run(
    command: &str,
    args: &CampaignArgs,
    cfg: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> Result<bool, Box<dyn std::error::Error>> {
    let declared = experiments::declared_outputs(command).ok_or("unknown command")?;
    let mut outputs: Vec<&str> = declared.to_vec();
    outputs.push("summary.json");

    fs::create_dir_all(&args.out)?;
    let mut manifest = json!({
        "command": command,
        "config_path": args.config.as_ref().map(|p| p.display().to_string()),
        "preset": args.preset,
        "master_seed": cfg.master_seed,
        "out_dir": args.out.display().to_string(),
        "version": env!("CARGO_PKG_VERSION"),
        "started_at": now(),
        "finished_at": null,
        "workers": pool.current_num_threads(),
        "outputs": outputs,
        "config": cfg,
    });
    write_json(&args.out.join("manifest.json"), &manifest)?;

    log::info!("running `{command}` with seed {}", cfg.master_seed);
    let report = pool.install(|| experiments::run_command(command, cfg))?;
    for file in &report.files {
        fs::write(args.out.join(&file.name), &file.contents)?;
    }
    fs::write(args.out.join("summary.json"), report.summary_json(cfg))?;

    manifest["finished_at"] = json!(now());
    manifest["pass"] = json!(report.pass());
    write_json(&args.out.join("manifest.json"), &manifest)?;

    let mut out = std::io::stdout().lock();
    for c in &report.checks {
        writeln!(out, "[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail)?;
    }
    Ok(report.pass())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}
