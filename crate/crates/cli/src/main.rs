use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinflip_core::{figure_command, run_scenario, Error, Figure, ScenarioConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_STRICT: u8 = 4;

#[derive(Parser)]
#[command(name = "simulate", version, about = "Four-level spin CNOT simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write traces, tomograms, fidelities and a report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "SIM_OUT_DIR", default_value = "out")]
        out: PathBuf,
        /// paper-literal | consistent
        #[arg(long)]
        mode: Option<String>,
        /// Treat validity warnings as fatal.
        #[arg(long)]
        strict: bool,
    },
    /// Write the data behind one figure: fig2, fig3, fig4, fig6 or fig7.
    Figure {
        name: String,
        #[arg(long, env = "SIM_OUT_DIR", default_value = "out")]
        out: PathBuf,
        /// Base config; defaults apply when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        /// Config overrides as --key=value.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        strict: bool,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Numerical { .. } | Error::StepSize { .. } => EXIT_NUMERICAL,
        _ => 1,
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(err))
}

/// Prints warnings; returns false when they are fatal.
fn report_warnings(cfg: &ScenarioConfig, strict: bool) -> Result<bool, Error> {
    let warnings = cfg.warnings()?;
    for w in &warnings {
        eprintln!("warning[{}]: {}", w.code, w.message);
    }
    Ok(!(strict && !warnings.is_empty()))
}

fn load(config: Option<&Path>, overrides: &[String]) -> Result<ScenarioConfig, Error> {
    let base = match config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    base.with_overrides(overrides)
}

fn list(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, mode, strict } => {
            let overrides: Vec<String> = mode.map(|m| format!("mode={m}")).into_iter().collect();
            load(Some(&config), &overrides).and_then(|cfg| {
                if !report_warnings(&cfg, strict)? {
                    return Ok(Some(EXIT_STRICT));
                }
                list(&run_scenario(&cfg, &out)?);
                Ok(None)
            })
        }
        Command::Figure { name, out, config, strict, overrides } => {
            let figure: Figure = match name.parse() {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            load(config.as_deref(), &overrides).and_then(|cfg| {
                if !report_warnings(&cfg, strict)? {
                    return Ok(Some(EXIT_STRICT));
                }
                list(&figure_command(figure, &cfg, &out)?);
                Ok(None)
            })
        }
        Command::Validate { config, strict } => load(Some(&config), &[]).and_then(|cfg| {
            if !report_warnings(&cfg, strict)? {
                return Ok(Some(EXIT_STRICT));
            }
            println!("{}: ok (hash {})", config.display(), cfg.hash());
            Ok(None)
        }),
    };
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(code)) => {
            eprintln!("error: validity warnings are fatal under --strict");
            ExitCode::from(code)
        }
        Err(e) => fail(&e),
    }
}
