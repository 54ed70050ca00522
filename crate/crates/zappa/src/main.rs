use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use zappa::config::RunConfig;
use zappa::pipeline::{resolve_out_dir, Pipeline};

/// Multiscale dispersion laboratory: derive macroscale advection-diffusion
/// coefficients from a nonlocal microscale jump process, simulate both
/// scales, and measure the macroscale model's error.
#[derive(Parser)]
#[command(name = "zappa", version, about)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override single config keys, e.g. --set grid.nx=2048 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory (else config output_dir, else $ZAPPA_OUT, else ./zappa-out).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Cap the worker-thread count; results are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive slow-manifold shape functions and macroscale coefficients.
    Derive,
    /// Run the deterministic microscale solver, write snapshots.
    Micro,
    /// Run the jump-process Monte Carlo and fit transport coefficients.
    Mc,
    /// Solve the macroscale advection-diffusion equation.
    Macro,
    /// Compute the defect residual of the macroscale model.
    Residual,
    /// Compare micro-derived and macroscale mean fields.
    Compare,
    /// Full pipeline: derive, micro, mc, macro, residual, compare.
    All,
}

fn load_config(cli: &Cli) -> zappa::Result<RunConfig> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| {
            zappa::Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?,
        None => String::new(),
    };
    RunConfig::from_toml_with_overrides(&text, &cli.overrides)
}

fn run(cli: &Cli) -> zappa::Result<()> {
    let cfg = load_config(cli)?;
    if let Some(threads) = cli.threads {
        if threads > 0 {
            // Worker count never changes results; ignore re-initialization.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    let out_dir = resolve_out_dir(cli.out.as_deref(), &cfg);
    let pipeline = Pipeline::new(cfg, out_dir)?;
    let files = match cli.command {
        Command::Derive => pipeline.cmd_derive()?,
        Command::Micro => pipeline.cmd_micro()?,
        Command::Mc => pipeline.cmd_mc()?,
        Command::Macro => pipeline.cmd_macro()?,
        Command::Residual => pipeline.cmd_residual()?,
        Command::Compare => pipeline.cmd_compare()?,
        Command::All => pipeline.cmd_all()?,
    };
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == 2 {
                eprintln!("usage: zappa [--config FILE] [--set KEY=VALUE] [--out DIR] <COMMAND>");
                eprintln!("run `zappa --help` for details");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
