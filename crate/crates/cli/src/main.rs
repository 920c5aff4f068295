use clap::Parser;
use hinf_cli::{emit_frequency_response, load_config, run_config, CliError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Delay-constrained H-infinity synthesis front-end: runs the configured
/// modes, re-verifies every result from the serialized artifacts, and writes
/// a JSON report.
#[derive(Parser)]
#[command(name = "hinf", version)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Mode to run instead of the config's list; repeatable.
    #[arg(long)]
    mode: Vec<String>,
    /// Fixed level to test instead of searching for the smallest.
    #[arg(long)]
    gamma: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write sigma_max-vs-theta CSV data here; with several modes the mode
    /// name is appended before the extension.
    #[arg(long)]
    freq_csv: Option<PathBuf>,
    /// Debug-level logging.
    #[arg(long)]
    verbose: bool,
}

const FREQ_GRID: usize = 1024;

fn suffixed(path: &Path, mode: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("response");
    let name = match path.extension().and_then(|s| s.to_str()) {
        Some(ext) => format!("{stem}.{mode}.{ext}"),
        None => format!("{stem}.{mode}"),
    };
    path.with_file_name(name)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn run(args: &Args) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let report = run_config(&config, &args.mode, args.gamma)?;
    if let Some(base) = &args.freq_csv {
        for run in &report.runs {
            let csv = emit_frequency_response(&config, run, FREQ_GRID)?;
            let path = if report.runs.len() == 1 {
                base.clone()
            } else {
                suffixed(base, &run.report.mode)
            };
            write_file(&path, &csv)?;
        }
    }
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Verification(e.to_string()))?;
    match &args.out {
        Some(path) => write_file(path, &format!("{text}\n"))?,
        None => println!("{text}"),
    }
    for run in &report.runs {
        log::info!(
            "{}: level {:.9}, closed loop {:.9}",
            run.report.mode,
            run.report.gamma,
            run.report.achieved
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::new()
        .filter_level(if args.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .init();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
