use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use ncim_core::metrics::Algorithm;
use ncim_sim::config::Experiment;
use ncim_sim::experiment::run_to_dir;
use ncim_sim::presets::{desk_scale, preset};

#[derive(Parser)]
#[command(name = "ncim", version, about = "Grant-free NC-IM access simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a TOML experiment and write one CSV per experiment.
    Run {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Comma-separated algorithm names.
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<String>>,
        #[arg(long)]
        desk_scale: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> anyhow::Result<()> {
    let Command::Run {
        preset: name,
        config,
        trials,
        seed,
        out,
        algorithms,
        desk_scale: desk,
        threads,
    } = Cli::parse().command;

    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let mut experiments = match (name, config) {
        (Some(p), _) => preset(&p)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            vec![Experiment::from_toml(&text)
                .with_context(|| format!("parsing {}", path.display()))?]
        }
        (None, None) => bail!("one of --preset or --config is required"),
    };
    let algorithms = algorithms
        .map(|v| {
            v.iter()
                .map(|s| s.parse::<Algorithm>())
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    for exp in &mut experiments {
        if desk {
            desk_scale(exp);
        }
        if let Some(t) = trials {
            exp.params.trials = t;
            exp.params.extended_trials = exp.params.extended_trials.max(t);
        }
        if let Some(s) = seed {
            exp.params.master_seed = s;
        }
        if let Some(a) = &algorithms {
            exp.params.algorithms = a.clone();
        }
        let path = run_to_dir(exp, &out)?;
        println!("{}", path.display());
    }
    Ok(())
}
