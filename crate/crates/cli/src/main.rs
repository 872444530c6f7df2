mod batch;
mod config;

use std::process::ExitCode;

use clap::Parser;
use relight_core::imageio;

use config::{Cli, FileConfig, Job};

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RELIGHT_LOG", "warn"))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let job = match cli
        .config
        .as_deref()
        .map(FileConfig::load)
        .transpose()
        .and_then(|file| Job::resolve(&cli, file))
    {
        Ok(job) => job,
        Err(e) => {
            eprintln!("relight: {e}");
            return ExitCode::from(2);
        }
    };

    let results = batch::run_all(&job);
    let mut lines = String::new();
    let mut failed = 0;
    for (input, result) in job.inputs.iter().zip(results) {
        match result {
            Ok(reports) => {
                for r in reports {
                    let line = serde_json::to_string(&r).expect("metric report serializes");
                    println!("{line}");
                    lines.push_str(&line);
                    lines.push('\n');
                }
            }
            Err(e) => {
                failed += 1;
                eprintln!("relight: {}: {e}", input.display());
            }
        }
    }
    if job.metrics && !lines.is_empty() {
        if let Err(e) = imageio::write_atomic(&job.out_dir.join("metrics.jsonl"), lines.as_bytes()) {
            eprintln!("relight: write stage failed: {e}");
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("relight: {failed} of {} image(s) failed", job.inputs.len());
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
