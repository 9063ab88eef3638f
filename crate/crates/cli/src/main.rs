use clap::Parser;
use repton_cli::config::ExperimentKind;
use repton_cli::run::EXIT_RUNTIME;
use repton_cli::{run_experiment, ExperimentConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Parser)]
#[command(name = "repton", version, about = "Spectral simulator and property checks for a singular density-fluctuation SPDE")]
struct Args {
    /// Experiment to run; must match `kind` in the config.
    experiment: ExperimentKind,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "REPTON_THREADS")]
    threads: Option<usize>,
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn write_log(dir: &Path, lines: &[String]) {
    let mut text = lines.join("\n");
    text.push('\n');
    if let Err(e) = std::fs::write(dir.join("run.log"), text) {
        eprintln!("warning: could not write run.log: {e}");
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut config = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME as u8);
        }
    };
    if config.kind != args.experiment {
        eprintln!(
            "error: config kind `{}` does not match the `{}` subcommand",
            config.kind.name(),
            args.experiment.name()
        );
        return ExitCode::from(EXIT_RUNTIME as u8);
    }
    if let Some(out) = args.out {
        config.output = out;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let started = unix_seconds();
    let clock = Instant::now();
    let outcome = run_experiment(&config);
    let mut log = vec![
        format!("started_unix {started:.3}"),
        format!("finished_unix {:.3}", unix_seconds()),
        format!("elapsed_seconds {:.3}", clock.elapsed().as_secs_f64()),
        format!("experiment {}", config.kind.name()),
        format!("config_path {}", args.config.display()),
        format!("config_hash {}", config.hash()),
        format!("seed {}", config.seed),
        format!("threads {}", rayon::current_num_threads()),
    ];
    let code = match outcome {
        Ok(o) => {
            log.push(format!("verdict {:?}", o.verdict));
            log.push(format!("incomplete {}", o.incomplete));
            for f in &o.files {
                log.push(format!("wrote {}", f.display()));
            }
            o.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            log.push(format!("error {e}"));
            EXIT_RUNTIME
        }
    };
    log.push(format!("exit_code {code}"));
    if config.output.is_dir() {
        write_log(&config.output, &log);
    }
    ExitCode::from(code as u8)
}
