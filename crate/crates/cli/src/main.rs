use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kqlab::{run_config, Config, Kind};

#[derive(Parser)]
#[command(name = "kqlab", version, about = "Quantized Monge-Ampere energy experiments on the radial projective line")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Energy convergence E_k(u) -> E_theta(u).
    Quantize(Common),
    /// Bergman measures against the equilibrium measure.
    Bergman(Common),
    /// Energies and variations along weak geodesics.
    Geodesic(Common),
    /// Envelopes P_theta(f).
    Envelope(Common),
    /// Ambient Bergman kernels: anchors, expansion, peak sections.
    Asymptotics(Common),
    /// Morse-type bounds and global domination.
    Morse(Common),
    /// Comparison of plain and twisted Bergman densities.
    Compare(Common),
    /// The key-estimate inequality chain.
    Chain(Common),
    /// Every experiment in the config.
    Run(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Quantize(a) => (Some(Kind::Quantize), a),
        Command::Bergman(a) => (Some(Kind::Bergman), a),
        Command::Geodesic(a) => (Some(Kind::Geodesic), a),
        Command::Envelope(a) => (Some(Kind::Envelope), a),
        Command::Asymptotics(a) => (Some(Kind::Asymptotics), a),
        Command::Morse(a) => (Some(Kind::Morse), a),
        Command::Compare(a) => (Some(Kind::Compare), a),
        Command::Chain(a) => (Some(Kind::Chain), a),
        Command::Run(a) => (None, a),
    };

    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    let mut cfg = match Config::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    let report = match run_config(&cfg, kind) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = report.write(&out) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    print!("{}", report.summary());
    let failed = report.failures().count();
    println!(
        "{} of {} checks passed; results in {}",
        report.ledger.len() - failed,
        report.ledger.len(),
        out.display()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
