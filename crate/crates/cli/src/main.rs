use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use textcause_cli::commands::{self, CliError, Command};

#[derive(Parser)]
#[command(
    name = "textcause",
    version,
    about = "Causal effects of text properties from proxy labels"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic review corpus, or sample one from a world file.
    Generate(Common),
    /// Improve lexicon proxy labels with a PU-style text classifier.
    Boost(Common),
    /// Cross-validated representation adjustment on a corpus.
    Adjust(Common),
    /// Naive, stratified and measurement-corrected estimates on a corpus.
    Estimate(Common),
    /// Full estimator grid over simulated corpora.
    Benchmark(Common),
    /// Sign-crossing scenario with a latent confounding property.
    Crossing(Common),
    /// Estimates as a function of proxy accuracy.
    Sensitivity(Common),
    /// Check the identification identities on world files.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (JSON or key=value lines).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set simulation.beta_c=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, common) = match cli.command {
        Cmd::Generate(c) => (Command::Generate, c),
        Cmd::Boost(c) => (Command::Boost, c),
        Cmd::Adjust(c) => (Command::Adjust, c),
        Cmd::Estimate(c) => (Command::Estimate, c),
        Cmd::Benchmark(c) => (Command::Benchmark, c),
        Cmd::Crossing(c) => (Command::Crossing, c),
        Cmd::Sensitivity(c) => (Command::Sensitivity, c),
        Cmd::Verify(c) => (Command::Verify, c),
    };
    match execute(command, common) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command, common: Common) -> Result<String, CliError> {
    let mut config = commands::load_config(common.config.as_deref(), &common.overrides)?;
    if let Some(out) = common.output {
        config.output = Some(out);
    }
    let outcome = commands::run(command, &config)?;
    let mut text = outcome.summary;
    for f in &outcome.files {
        text += &format!("\nwrote {}", f.display());
    }
    Ok(text)
}
