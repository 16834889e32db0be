use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use waymark_cli::{cmd_replay, cmd_run, cmd_validate, CliError, Overrides, RunOptions, EXIT_INVALID};

#[derive(Parser)]
#[command(name = "waymark", version, about = "Declarative guidance engine for visual analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Intervals {
    /// Seconds between guidance ticks
    #[arg(long)]
    guidance_interval: Option<f64>,
    /// Seconds between inference ticks
    #[arg(long)]
    inference_interval: Option<f64>,
    /// Evaluate strategies on one thread
    #[arg(long)]
    sequential: bool,
}

impl Intervals {
    fn overrides(&self) -> Overrides {
        Overrides {
            guidance_interval: self.guidance_interval,
            inference_interval: self.inference_interval,
            sequential: self.sequential,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Serve a bundle: REST under /api, suggestions on /ws
    Run {
        config_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Write the event log here instead of stdout
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        intervals: Intervals,
    },
    /// Check a bundle and print findings
    Validate { config_dir: PathBuf },
    /// Replay a timeline on a virtual clock and write the event trace
    Replay {
        config_dir: PathBuf,
        timeline: PathBuf,
        /// Trace file; stdout when omitted
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        intervals: Intervals,
    },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config_dir } => match cmd_validate(&config_dir) {
            Ok(report) => {
                eprintln!("{report}");
                if report.is_ok() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_INVALID as u8)
                }
            }
            Err(e) => fail(e),
        },
        Command::Replay {
            config_dir,
            timeline,
            trace,
            intervals,
        } => match cmd_replay(&config_dir, &timeline, &intervals.overrides()) {
            Ok(text) => match trace {
                Some(path) => match std::fs::write(&path, text) {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(source) => fail(CliError::Io { path, source }),
                },
                None => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
            },
            Err(e) => fail(e),
        },
        Command::Run {
            config_dir,
            port,
            host,
            log,
            intervals,
        } => {
            let runtime = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let opts = RunOptions {
                addr: SocketAddr::new(host, port),
                log,
                overrides: intervals.overrides(),
            };
            match runtime.block_on(cmd_run(&config_dir, opts)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
    }
}
