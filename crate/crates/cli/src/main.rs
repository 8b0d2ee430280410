use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};
use hyper_opl::experiment::{
    emit_outputs, prepare_outputs, read_rows, run_sweep, run_tune, summarize, write_summary, SweepConfig,
    MANIFEST_FILE, ROWS_FILE, SUMMARY_FILE,
};
use hyper_opl::realdata::write_fixture;

#[derive(Parser)]
#[command(name = "hyper-opl", version, about = "Off-policy learning sweeps with secondary rewards")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a sweep and write rows, summary and manifest.
    Sweep {
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Recompute the summary table of a finished sweep directory.
    Summarize {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Tune the mixture weight on one simulated problem and print the grid.
    Tune {
        #[arg(long)]
        seed: u64,
        /// Simulation index whose problem is tuned.
        #[arg(long, default_value_t = 0)]
        sim: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the small bundled real-data fixture.
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
}

/// `--config FILE` plus one `--<key>` flag per config key.
struct ConfigArgs {
    file: Option<PathBuf>,
    overrides: Vec<(&'static str, String)>,
}

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let overrides = SweepConfig::KEYS
            .iter()
            .filter(|&&k| k != "seed")
            .filter_map(|&k| m.get_one::<String>(k).map(|v| (k, v.clone())))
            .collect();
        Ok(Self {
            file: m.get_one::<PathBuf>("config").cloned(),
            overrides,
        })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: Command) -> Command {
        let cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value file, e.g. a previous run's manifest"),
        );
        SweepConfig::KEYS
            .iter()
            .filter(|&&k| k != "seed")
            .fold(cmd, |cmd, &k| cmd.arg(Arg::new(k).long(flag(k)).value_name("VALUE")))
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

impl ConfigArgs {
    fn resolve(&self, seed: u64) -> hyper_opl::Result<SweepConfig> {
        let mut cfg = SweepConfig::default();
        if let Some(path) = &self.file {
            cfg.apply_text(&fs::read_to_string(path)?)?;
        }
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sweep(cfg: &SweepConfig, out: &Path) -> hyper_opl::Result<usize> {
    let paths = prepare_outputs(out, cfg)?;
    let rows = run_sweep(cfg)?;
    let cells = summarize(&rows, cfg.ci_resamples, cfg.seed)?;
    emit_outputs(&paths, &rows, &cells)?;
    let errors: Vec<_> = rows.iter().filter(|r| r.is_error()).collect();
    for r in &errors {
        if let Err(e) = &r.outcome {
            eprintln!("error row: {}={:?} sim {} {}: {e}", cfg.axis, r.axis_value, r.sim, r.method);
        }
    }
    eprintln!("{} rows ({} errors) written to {}", rows.len(), errors.len(), out.display());
    Ok(errors.len())
}

fn resummarize(dir: &Path) -> hyper_opl::Result<usize> {
    let cfg = SweepConfig::from_text(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let rows = read_rows(&dir.join(ROWS_FILE))?;
    write_summary(&dir.join(SUMMARY_FILE), &summarize(&rows, cfg.ci_resamples, cfg.seed)?)?;
    Ok(rows.iter().filter(|r| r.is_error()).count())
}

fn tune(cfg: &SweepConfig, sim: usize) -> hyper_opl::Result<usize> {
    let result = run_tune(cfg, sim)?;
    println!("gamma,mean_value");
    for score in &result.table {
        println!("{:?},{:?}", score.gamma, score.mean());
    }
    println!("# gamma_hat = {:?}", result.gamma_hat);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Cmd::Sweep { seed, out, config } => config.resolve(*seed).and_then(|cfg| sweep(&cfg, out)),
        Cmd::Summarize { dir } => resummarize(dir),
        Cmd::Tune { seed, sim, config } => config.resolve(*seed).and_then(|cfg| tune(&cfg, *sim)),
        Cmd::Fixture { out } => write_fixture(out).map(|()| 0),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
