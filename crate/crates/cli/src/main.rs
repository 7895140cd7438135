use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;
use wiplab_cli::config::{parse_kv, validate, ExperimentConfig, ExperimentKind};
use wiplab_cli::experiments::{run_with_workers, write_outputs};

/// Numerical laboratory for weak-invariance-principle rates and fast-slow
/// homogenization of chaotic interval maps.
#[derive(Parser)]
#[command(name = "wiplab", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Kolmogorov distance of W_n(1) against the Gaussian limit.
    Clt(Common),
    /// Empirical Prokhorov distance of W_n ensembles against Brownian ones.
    WipRate(Common),
    /// Gordin decomposition residuals and the three variance estimators.
    DecompCheck(Common),
    /// Concentration rate of the quadratic-variation profile.
    VnkScaling(Common),
    /// Fast-slow paths against the limiting SDE across an eps grid.
    FastslowRate(Common),
    /// Solver-vs-oracle equivalence suite for the Prokhorov matcher.
    ProkhorovSelftest(Common),
    /// Theoretical rate tables.
    RateTable(Common),
}

fn split(cmd: Cmd) -> (ExperimentKind, Common) {
    match cmd {
        Cmd::Clt(c) => (ExperimentKind::Clt, c),
        Cmd::WipRate(c) => (ExperimentKind::WipRate, c),
        Cmd::DecompCheck(c) => (ExperimentKind::DecompCheck, c),
        Cmd::VnkScaling(c) => (ExperimentKind::VnkScaling, c),
        Cmd::FastslowRate(c) => (ExperimentKind::FastslowRate, c),
        Cmd::ProkhorovSelftest(c) => (ExperimentKind::ProkhorovSelftest, c),
        Cmd::RateTable(c) => (ExperimentKind::RateTable, c),
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = split(cli.cmd);

    let mut kvs: BTreeMap<String, String> = match &common.config {
        None => BTreeMap::new(),
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error.kind = config");
                    eprintln!("error.message = cannot read {}: {e}", path.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match parse_kv(&text) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error.kind = config");
                    eprintln!("error.message = {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
        }
    };
    if let Some(seed) = common.seed {
        kvs.insert("seed".into(), seed.to_string());
    }
    if let Some(workers) = common.workers {
        kvs.insert("workers".into(), workers.to_string());
    }
    if let Some(out) = &common.out {
        kvs.insert("out".into(), out.display().to_string());
    }

    let cfg = match ExperimentConfig::from_map(kind, kvs) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error.kind = config");
            eprintln!("error.message = {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let violations = validate(&cfg);
    if !violations.is_empty() {
        eprintln!("error.kind = config");
        for v in &violations {
            eprintln!("error.violation.{} = {}", v.field, v.message);
        }
        return ExitCode::from(EXIT_CONFIG);
    }

    let started = Instant::now();
    let output = match run_with_workers(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error.kind = runtime");
            eprintln!("error.message = {e:#}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let wall = started.elapsed().as_secs_f64();
    match write_outputs(&cfg, &output, &cfg.out, wall) {
        Ok(_) => {
            println!(
                "{}: {} distance rows, {} fit rows, {} rate rows -> {}",
                cfg.kind.name(),
                output.distances.len(),
                output.fits.len(),
                output.rates.len(),
                cfg.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error.kind = runtime");
            eprintln!("error.message = {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
