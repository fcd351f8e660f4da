use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use invalid_iv_cli::analysis::{check_methods, prepare_input};
use invalid_iv_cli::{load_analysis_config, load_simulation_config, run_analysis, run_simulation, AnalysisConfig, CliError, InputKind};

#[derive(Parser)]
#[command(name = "iviv", version, about = "Causal effect estimation with possibly invalid instruments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured methods and write report.json, forest.csv and optionally forest.svg.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured input file.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        input_kind: Option<InputKind>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; all cores by default.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a simulation file and write experiment.csv and experiment.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Parse the input (and configuration, if given) and print its dimensions.
    ValidateInput {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        input_kind: Option<InputKind>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn analysis_config(config: Option<&PathBuf>, input: Option<PathBuf>, kind: Option<InputKind>, seed: Option<u64>) -> Result<AnalysisConfig, CliError> {
    let mut cfg = match config {
        Some(path) => load_analysis_config(path)?,
        None => AnalysisConfig::default(),
    };
    if input.is_some() {
        cfg.input = input;
    }
    if let Some(k) = kind {
        cfg.input_kind = k;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Analyze { config, input, input_kind, out_dir, seed, jobs } => {
            let cfg = analysis_config(Some(&config), input, input_kind, seed)?;
            let out = run_analysis(&cfg, jobs)?;
            for path in out.write(&out_dir, cfg.plot)? {
                eprintln!("wrote {}", path.display());
            }
            let failures = out.report.failures();
            for m in out.report.methods.iter().filter(|m| m.error.is_some()) {
                eprintln!("method {} failed: {}", m.label, m.error.as_deref().unwrap_or(""));
            }
            Ok(if failures > 0 { 1 } else { 0 })
        }
        Command::Simulate { config, out_dir, seed, jobs } => {
            let cfg = load_simulation_config(&config)?;
            let table = run_simulation(&cfg, seed, jobs)?;
            for row in table.rows.iter().filter(|r| r.failures > 0) {
                eprintln!("method {}: {} of {} replications failed ({})", row.method, row.failures, table.reps, row.first_error.as_deref().unwrap_or(""));
            }
            for path in invalid_iv_cli::simulate::write_table(&table, &out_dir)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(0)
        }
        Command::ValidateInput { input, input_kind, config } => {
            let cfg = analysis_config(config.as_ref(), input, input_kind, None)?;
            check_methods(&cfg.methods, cfg.input_kind)?;
            let (_, summary) = prepare_input(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
