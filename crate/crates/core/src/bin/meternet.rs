//! Command-line front end: run scenarios, compare them, or dump a waveform.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use meternet::scenario::{
    compare, load_scenario, run_scenario, write_compare_csv, RunError, Scenario,
};
use meternet::waveform::{generate, WaveformConfig};

#[derive(Parser)]
#[command(name = "meternet", version, about = "Smart-meter network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the seed in the file.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several scenarios and print one comparison row per scenario.
    Compare {
        #[arg(long = "scenario", required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write compare.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a three-phase waveform as CSV.
    GenWaveform {
        /// Seconds of signal.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noise standard deviation relative to amplitude.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, RunError> {
    let mut s = load_scenario(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<(), RunError> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Run { scenario, seed, out } => {
            let s = load(&scenario, seed)?;
            let (outcome, files) = run_scenario(&s, out.as_deref())?;
            if !quiet {
                print!("{}", outcome.summary_text());
                for f in files {
                    println!("wrote {}", f.display());
                }
            }
            Ok(())
        }
        Command::Compare { scenarios, seed, out } => {
            let set = scenarios
                .iter()
                .map(|p| load(p, seed))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = compare(&set)?;
            if let Some(dir) = out {
                let path = dir.join("compare.csv");
                let io_err = |source| RunError::Io {
                    path: path.clone(),
                    source,
                };
                fs::create_dir_all(&dir).map_err(io_err)?;
                let file = fs::File::create(&path).map_err(io_err)?;
                write_compare_csv(&rows, BufWriter::new(file)).map_err(|e| RunError::Io {
                    path: path.clone(),
                    source: io::Error::other(e),
                })?;
            }
            if !quiet {
                write_compare_csv(&rows, io::stdout().lock()).map_err(|e| RunError::Io {
                    path: "<stdout>".into(),
                    source: io::Error::other(e),
                })?;
            }
            Ok(())
        }
        Command::GenWaveform {
            duration,
            seed,
            noise,
            out,
        } => {
            let cfg = WaveformConfig {
                seed,
                noise_stddev: noise,
                ..WaveformConfig::default()
            };
            let wave = generate(&cfg, duration).map_err(|e| {
                RunError::Usage(format!("waveform: {e}"))
            })?;
            let (path, sink): (PathBuf, Box<dyn Write>) = match out {
                Some(p) => {
                    let f = fs::File::create(&p).map_err(|source| RunError::Io {
                        path: p.clone(),
                        source,
                    })?;
                    (p, Box::new(BufWriter::new(f)))
                }
                None => ("<stdout>".into(), Box::new(io::stdout().lock())),
            };
            wave.write_csv(sink).map_err(|e| RunError::Io {
                path,
                source: io::Error::other(e),
            })
        }
    }
}
