use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbrec_core::config::{validate_config, Purpose, RunConfig};
use cbrec_core::Error;

mod commands;

#[derive(Parser)]
#[command(name = "cbrec", version, about = "Potential reconstruction from boundary flux data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem and write the flux at x = ℓ.
    Forward(Common),
    /// Reconstruct (p, p_Γ) from a flux measurement.
    Reconstruct(Common),
    /// Flux-to-potential distance ratios over a perturbation ensemble.
    Stability(Common),
    /// Carleman inequality ratios over a test-function ensemble and an s sweep.
    Carleman(Common),
    /// Boundary samples with ∂_ν ψ and the observation set flags.
    Geometry(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ensembles and sweeps.
    #[arg(long)]
    threads: Option<usize>,
}

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidGrid(_)
        | Error::Shape { .. }
        | Error::Positivity { .. }
        | Error::Config(_)
        | Error::Parse(_)
        | Error::Io(_) => EXIT_CONFIG,
        Error::Invariant(_)
        | Error::OutsideWindow { .. }
        | Error::SingularStep { .. }
        | Error::NonFinite { .. }
        | Error::Extension { .. }
        | Error::CgBreakdown { .. } => EXIT_NUMERICAL,
    }
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("cbrec-core".to_string(), cbrec_core::VERSION.to_string()),
        ("cbrec-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ])
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let (name, purpose, args) = match &cli.command {
        Command::Forward(a) => ("forward", Purpose::Forward, a),
        Command::Reconstruct(a) => ("reconstruct", Purpose::Reconstruct, a),
        Command::Stability(a) => ("stability", Purpose::Stability, a),
        Command::Carleman(a) => ("carleman", Purpose::Carleman, a),
        Command::Geometry(a) => ("geometry", Purpose::Geometry, a),
    };

    let mut cfg = match RunConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let violations = validate_config(&cfg, purpose);
    if !violations.is_empty() {
        eprintln!("invalid configuration {}:", args.config.display());
        for v in &violations {
            eprintln!("  - {v}");
        }
        return ExitCode::from(EXIT_CONFIG);
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };

    let result = pool.install(|| -> cbrec_core::Result<()> {
        let mut writer = cbrec_core::io::RunWriter::create(&args.out)?;
        match purpose {
            Purpose::Forward => commands::forward(&cfg, &mut writer)?,
            Purpose::Reconstruct => commands::reconstruct(&cfg, &mut writer)?,
            Purpose::Stability => commands::stability(&cfg, &mut writer)?,
            Purpose::Carleman => commands::carleman(&cfg, &mut writer)?,
            Purpose::Geometry => commands::geometry(&cfg, &mut writer)?,
        }
        writer.finish(name, &cfg, args.threads, versions())?;
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
