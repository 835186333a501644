use std::path::PathBuf;
use std::process::ExitCode;

use berwald_cli::{run, Command, Overrides, RunConfig, EXIT_ERROR};
use clap::{Parser, Subcommand};

/// Numerical checks for generalized Berwald 3-manifolds.
#[derive(Parser, Debug)]
#[command(name = "berwald", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Recover the torsion scalar over the sample plan and classify.
    Analyze(Args),
    /// Check compatibility residuals and length drift along random loops.
    VerifyConnection(Args),
    /// Classify, with Killing diagnostics when the config names a field.
    Classify(Args),
    /// Write the indicatrix at one point as an OBJ mesh.
    ExportIndicatrix(Args),
    /// Parallel transport along the configured curve.
    Transport(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_theta: Option<usize>,
    #[arg(long)]
    n_phi: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Base point `x,y,z` of `export-indicatrix`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    point: Option<[f64; 3]>,
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("{c:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|p| format!("expected x,y,z, got {} values", p.len()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BERWALD_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { 0 });
        }
    };
    let (command, args) = match cli.command {
        Cmd::Analyze(a) => (Command::Analyze, a),
        Cmd::VerifyConnection(a) => (Command::VerifyConnection, a),
        Cmd::Classify(a) => (Command::Classify, a),
        Cmd::ExportIndicatrix(a) => (Command::ExportIndicatrix, a),
        Cmd::Transport(a) => (Command::Transport, a),
    };
    let overrides = Overrides {
        out: args.out,
        n_theta: args.n_theta,
        n_phi: args.n_phi,
        seed: args.seed,
        point: args.point,
    };
    let result = RunConfig::load(&args.config).and_then(|mut config| {
        config.apply(&overrides);
        run(command, &config)
    });
    match result {
        Ok(outcome) => {
            println!("{}", outcome.headline);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
