use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use striplab_cli::{report, run, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "striplab", version, about = "Localization experiments on random block operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir` of the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, env = "STRIPLAB_THREADS")]
        threads: Option<usize>,
        /// Log filter, e.g. `info` or `striplab_cli=debug`.
        #[arg(long, default_value = "warn")]
        log: String,
    },
    /// Verify a finished run and print its checks.
    Report { manifest: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, threads, log } => {
            env_logger::Builder::new().parse_filters(&log).init();
            ExperimentConfig::load(&config).and_then(|cfg| run(&cfg, &RunOptions { out, threads })).map(|o| {
                for c in &o.manifest.checks {
                    println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                println!("manifest: {}", o.manifest_path.display());
                o.exit_code()
            })
        }
        Command::Report { manifest } => report(&manifest).map(|r| {
            print!("{}", r.text);
            i32::from(!r.passed)
        }),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
