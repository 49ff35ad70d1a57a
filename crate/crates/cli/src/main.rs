use std::path::PathBuf;
use std::process::ExitCode;

use bdpi_core::approximator::Network;
use bdpi_core::harness::{
    emit_plot, read_run_dir, run_setting_with, seed_scores, summarize, ConfigFile,
    ExperimentConfig, Setting, Statistics,
};
use bdpi_core::navsim::{scripted_expert, NavSim, SENSOR_COUNT};
use bdpi_core::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bdpi",
    version,
    about = "BDPI sensor-to-camera transfer experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one setting for every seed and log per-episode returns.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        setting: Setting,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write the actor of the best-scoring seed here (a source policy for
        /// the transfer settings).
        #[arg(long)]
        save_advisor: Option<PathBuf>,
        /// Source policy checkpoint, required by the transfer settings.
        #[arg(long)]
        advisor: Option<PathBuf>,
        /// Save every seed's full agent under this directory.
        #[arg(long)]
        save_agents: Option<PathBuf>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Aggregate every run CSV in a directory into per-episode statistics.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw learning curves from a statistics file.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Record one episode of the scripted expert, or of a saved actor acting
    /// greedily, as a trajectory CSV.
    Rollout {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        actor: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            setting,
            seeds,
            episodes,
            out,
            save_advisor,
            advisor,
            save_agents,
            quiet,
        } => {
            let file = load_config(config.as_ref())?;
            let experiment = ExperimentConfig::new(&file, setting, seeds, episodes, out, advisor);
            let (records, agents) = run_setting_with(&experiment, |r| {
                if !quiet {
                    eprintln!(
                        "{} seed {} episode {} return {} steps {}",
                        r.setting, r.seed, r.episode, r.total_return, r.env_steps
                    );
                }
            })?;
            println!("wrote {}", experiment.csv_path().display());
            if let Some(path) = save_advisor {
                let scores = seed_scores(&records);
                let best = scores
                    .iter()
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|s| s.0)
                    .or_else(|| agents.first().map(|a| a.seed));
                if let Some(seed) = best {
                    let trained = agents.iter().find(|a| a.seed == seed).expect("seed ran");
                    trained.agent.actor().save(&path)?;
                    println!("saved the actor of seed {seed} to {}", path.display());
                }
            }
            if let Some(dir) = save_agents {
                for t in &agents {
                    t.agent.save(dir.join(format!("seed-{}", t.seed)))?;
                }
                println!("saved {} agents under {}", agents.len(), dir.display());
            }
        }
        Command::Summarize { input, out } => {
            let stats = summarize(&read_run_dir(&input)?)?;
            stats.write_csv(&out)?;
            print!("{}", stats.ranking());
        }
        Command::Plot { input, out } => {
            let stats = Statistics::read_csv(&input)?;
            emit_plot(&stats, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Rollout {
            config,
            seed,
            actor,
            out,
        } => {
            let file = load_config(config.as_ref())?;
            let actor = actor.map(Network::load).transpose()?;
            let mut sim = NavSim::new(file.scene)?;
            sim.record_trajectory();
            let mut obs = sim.reset(seed);
            let mut total = 0.0;
            loop {
                let action = match &actor {
                    None => scripted_expert(&obs.sensors),
                    Some(net) if net.input_width() == SENSOR_COUNT => {
                        argmax(&net.forward(&obs.sensors)?)
                    }
                    Some(net) => argmax(&net.forward(&obs.camera)?),
                };
                let (next, reward, done) = sim.step(action)?;
                total += reward;
                obs = next;
                if done {
                    break;
                }
            }
            sim.write_trajectory(&out)?;
            println!("return {total}; wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
