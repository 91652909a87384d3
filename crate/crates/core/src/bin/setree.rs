use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use setree::format::{fmt6, to_stable_json, Header};
use setree::gridworld::{run_demo, DemoConfig, GridworldSpec};
use setree::{abstract_states, one_dim_entropy, optimize, similarity_graph, sparsify};
use setree::{EmbeddingSet, Error, Graph, OptimizeConfig, Result, TrajectoryLog};

/// Structural-entropy encoding trees and state abstraction.
#[derive(Parser)]
#[command(name = "setree", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the one-dimensional structural entropy of a TSV edge list.
    Entropy {
        /// Edge list: `u<TAB>v<TAB>weight` per line, `#` starts a comment.
        edges: PathBuf,
    },
    /// Sparsify the cosine similarity graph of an embedding CSV.
    Sparsify {
        /// Embedding CSV: label followed by the vector components.
        embeddings: PathBuf,
        /// Directory receiving `sparse.tsv` and `curve.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedily optimize an encoding tree for an edge list.
    OptimizeTree {
        edges: PathBuf,
        /// Maximum tree height.
        #[arg(long, default_value_t = 3)]
        k_cap: usize,
        /// Path of the encoding tree JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Abstract an embedding set and write the report JSON.
    Abstract {
        embeddings: PathBuf,
        /// Trajectory JSON Lines; enables the relation reconstruction loss.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        k_cap: usize,
        /// Recorded in the report header.
        #[arg(long)]
        seed: Option<u64>,
        /// Path of the report JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the gridworld abstraction and Q-learning demo.
    DemoGridworld {
        #[arg(long, default_value_t = 6)]
        width: usize,
        #[arg(long, default_value_t = 6)]
        height: usize,
        /// Observation noise scale.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Observations per cell.
        #[arg(long, default_value_t = 5)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        k_cap: usize,
        /// Q-learning training episodes.
        #[arg(long, default_value_t = 2000)]
        episodes: usize,
        /// Random-exploration steps for the relation graphs (0 disables).
        #[arg(long, default_value_t = 2000)]
        exploration_steps: usize,
        #[arg(long)]
        seed: u64,
        /// Directory receiving `rewards.csv` and `report.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Entropy { edges } => {
            let g = Graph::read_edge_list(&edges)?;
            println!("{}", fmt6(one_dim_entropy(&g)?));
        }
        Command::Sparsify { embeddings, out } => {
            let e = EmbeddingSet::read_csv(&embeddings)?;
            let r = sparsify(&similarity_graph(&e)?)?;
            ensure_dir(&out)?;
            write(&out.join("sparse.tsv"), &r.graph.to_edge_list())?;
            write(&out.join("curve.csv"), &r.curve_csv())?;
            println!("k_star {}", r.k_star);
        }
        Command::OptimizeTree { edges, k_cap, out } => {
            let g = Graph::read_edge_list(&edges)?;
            let outcome = optimize(&g, &OptimizeConfig::with_k_cap(k_cap))?;
            write(&out, &outcome.tree.to_json(g.labels(), Some(Header::new(None)))?)?;
            println!("initial_entropy {}", fmt6(outcome.initial_entropy));
            println!("final_entropy {}", fmt6(outcome.final_entropy));
            print!("{}", outcome.log_csv());
        }
        Command::Abstract {
            embeddings,
            trajectory,
            k_cap,
            seed,
            out,
        } => {
            let e = EmbeddingSet::read_csv(&embeddings)?;
            let log = trajectory.as_deref().map(TrajectoryLog::read_jsonl).transpose()?;
            let cfg = OptimizeConfig::with_k_cap(k_cap);
            let run = abstract_states(&e, log.as_ref(), &cfg)?;
            let report = run.report(&e, &cfg, seed)?;
            write(&out, &to_stable_json(&report)?)?;
            println!("clusters {}", report.clusters.len());
            println!("final_entropy {}", fmt6(report.entropy.tree_final));
        }
        Command::DemoGridworld {
            width,
            height,
            sigma,
            samples,
            k_cap,
            episodes,
            exploration_steps,
            seed,
            out,
        } => {
            let cfg = DemoConfig {
                spec: GridworldSpec::new(width, height, sigma),
                samples,
                k_cap,
                episodes,
                exploration_steps,
                seed,
            };
            let demo = run_demo(&cfg)?;
            ensure_dir(&out)?;
            write(&out.join("rewards.csv"), &demo.rewards_csv())?;
            write(&out.join("report.json"), &to_stable_json(&demo.report)?)?;
            println!("ari {}", fmt6(demo.report.ari));
            if let Some(l) = &demo.report.learning {
                println!("eval_mean_reward {}", fmt6(l.eval_mean_reward));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
