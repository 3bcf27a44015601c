use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use conemarket::io::Num;
use conemarket_cli::config::{config_from_value, OutputConfig};
use conemarket_cli::{execute, render, CliError, Command, Format};

#[derive(Debug, Parser)]
#[command(
    name = "conemarket",
    version,
    about = "Solvency-cone market models on scenario trees"
)]
struct Args {
    /// One of: validate, solve, brute, decompose, predict, transfer, invariance.
    command: String,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Initial endowment, comma separated (overrides the config).
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Solver gap tolerance (overrides `solver.tol`).
    #[arg(long, allow_hyphen_values = true)]
    tol: Option<f64>,
    /// Brute-force grid step (overrides `solver.grid`).
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized model transforms.
    #[arg(long)]
    seed: Option<u64>,
    /// Report format: json or text.
    #[arg(long)]
    format: Option<String>,
}

fn parse_x(text: &str) -> Result<Vec<Num>, CliError> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map(Num)
                .map_err(|_| CliError::Usage(format!("--x: invalid number {:?}", p.trim())))
        })
        .collect()
}

/// Runs a command; the report is returned when it goes to stdout.
fn run(args: Args) -> Result<(i32, Option<String>), CliError> {
    let command = Command::parse(&args.command)?;
    let text = fs::read_to_string(&args.config).map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("malformed JSON: {e}")))?;
    match value.get("command").and_then(|c| c.as_str()) {
        Some(c) if c != command.name() => {
            return Err(CliError::Usage(format!(
                "command {:?} does not match the config's command {c:?}",
                command.name()
            )))
        }
        _ => {}
    }
    if let Some(obj) = value.as_object_mut() {
        obj.insert("command".into(), command.name().into());
    }
    let mut config = config_from_value(value)?;
    if let Some(x) = &args.x {
        config.x = Some(parse_x(x)?);
    }
    if let Some(tol) = args.tol {
        config.solver.tol = Num(tol);
    }
    if let Some(grid) = args.grid {
        config.solver.grid = Num(grid);
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.out.is_some() || args.format.is_some() {
        let mut out = config.output.clone().unwrap_or(OutputConfig {
            path: None,
            format: Format::Json,
        });
        if let Some(p) = args.out {
            out.path = Some(p);
        }
        if let Some(f) = args.format {
            out.format = match f.as_str() {
                "json" => Format::Json,
                "text" => Format::Text,
                other => {
                    return Err(CliError::Usage(format!(
                        "--format: expected json or text, got {other:?}"
                    )))
                }
            };
        }
        config.output = Some(out);
    }
    let base = args.config.parent().map(PathBuf::from).unwrap_or_default();
    config.resolve_files(&base)?;
    config.check()?;
    let outcome = execute(&config)?;
    let rendered = render(&outcome.report, config.format());
    match config.output_path() {
        Some(p) => {
            fs::write(p, rendered).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Ok((outcome.exit_code, None))
        }
        None => Ok((outcome.exit_code, Some(rendered))),
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(args) {
        Ok((code, stdout)) => {
            if let Some(text) = stdout {
                print!("{text}");
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("conemarket: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
