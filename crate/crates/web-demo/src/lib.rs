//! wasm-bindgen bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON string; the plain `*_json` functions hold the
//! logic so they can be exercised natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use setree::format::{to_stable_json, TOOL_VERSION};
use setree::gridworld::{
    generate_observations, optimal_mean_return, run_pipeline, train_q, CellAbstraction, GridworldSpec, PipelineConfig,
    QConfig,
};
use setree::{optimize, Graph, OptimizeConfig, Result, TreeFile};

#[derive(Serialize)]
struct Operator {
    step: usize,
    kind: String,
    beta1: usize,
    beta2: usize,
    delta: f64,
}

#[derive(Serialize)]
struct TreeResult {
    initial_entropy: f64,
    final_entropy: f64,
    operators: Vec<Operator>,
    clusters: Vec<Vec<String>>,
    tree: TreeFile,
}

pub fn optimize_edges_json(edges: &str, k_cap: usize) -> Result<String> {
    let g = Graph::parse_edge_list(edges, "input")?;
    let out = optimize(&g, &OptimizeConfig::with_k_cap(k_cap))?;
    let clusters = out
        .tree
        .root_partition()
        .into_values()
        .map(|vs| vs.into_iter().map(|v| g.label(v).to_string()).collect())
        .collect();
    let operators = out
        .log
        .iter()
        .enumerate()
        .map(|(i, op)| Operator {
            step: i + 1,
            kind: op.kind.to_string(),
            beta1: op.beta1.0,
            beta2: op.beta2.0,
            delta: op.delta,
        })
        .collect();
    to_stable_json(&TreeResult {
        initial_entropy: out.initial_entropy,
        final_entropy: out.final_entropy,
        operators,
        clusters,
        tree: out.tree.to_file(g.labels()),
    })
}

#[derive(Serialize)]
struct GridResult {
    width: usize,
    height: usize,
    ari: f64,
    k_star: Option<usize>,
    entropy_curve: Vec<(usize, f64)>,
    abstract_states: usize,
    /// Abstract state of each observation, grouped by cell in row-major order.
    cells: Vec<Vec<usize>>,
}

fn observations(
    width: usize,
    height: usize,
    sigma: f64,
    samples: usize,
    seed: u64,
) -> Result<(GridworldSpec, setree::gridworld::PipelineResult)> {
    let spec = GridworldSpec::new(width, height, sigma);
    let obs = generate_observations(&spec, samples, seed)?;
    let res = run_pipeline(
        &spec,
        &obs,
        &PipelineConfig {
            k_cap: 3,
            exploration_steps: 0,
        },
        seed,
    )?;
    Ok((spec, res))
}

pub fn abstract_gridworld_json(width: usize, height: usize, sigma: f64, samples: usize, seed: u64) -> Result<String> {
    let (spec, res) = observations(width, height, sigma, samples, seed)?;
    let (k_star, entropy_curve) = match &res.run {
        Some(run) => (Some(run.sparse.k_star), run.sparse.entropy_curve.clone()),
        None => (None, Vec::new()),
    };
    to_stable_json(&GridResult {
        width: spec.width,
        height: spec.height,
        ari: res.ari,
        k_star,
        entropy_curve,
        abstract_states: res.abstraction.state_count(),
        cells: res.abstraction.per_cell,
    })
}

#[derive(Serialize)]
struct Learning {
    label: &'static str,
    returns: Vec<f64>,
    eval_mean_reward: f64,
    eval_success_rate: f64,
}

#[derive(Serialize)]
struct TrainResult {
    oracle_mean_return: f64,
    runs: Vec<Learning>,
}

/// Q-learning with the learned abstraction next to the identity and constant
/// baselines.
pub fn train_agents_json(
    width: usize,
    height: usize,
    sigma: f64,
    samples: usize,
    episodes: usize,
    seed: u64,
) -> Result<String> {
    let (spec, res) = observations(width, height, sigma, samples, seed)?;
    let cfg = QConfig {
        episodes,
        ..QConfig::default()
    };
    let mut runs = Vec::new();
    for (label, abstraction) in [
        ("learned", res.abstraction.clone()),
        ("identity", CellAbstraction::identity(&spec)),
        ("constant", CellAbstraction::constant(&spec)),
    ] {
        let q = train_q(&spec, &abstraction, &cfg, seed)?;
        runs.push(Learning {
            label,
            returns: q.training_returns,
            eval_mean_reward: q.eval_mean_reward,
            eval_success_rate: q.eval_success_rate,
        });
    }
    to_stable_json(&TrainResult {
        oracle_mean_return: optimal_mean_return(&spec),
        runs,
    })
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn version() -> String {
    TOOL_VERSION.to_string()
}

#[wasm_bindgen(js_name = optimizeEdges)]
pub fn optimize_edges(edges: &str, k_cap: usize) -> std::result::Result<String, JsError> {
    js(optimize_edges_json(edges, k_cap))
}

#[wasm_bindgen(js_name = abstractGridworld)]
pub fn abstract_gridworld(
    width: usize,
    height: usize,
    sigma: f64,
    samples: usize,
    seed: u64,
) -> std::result::Result<String, JsError> {
    js(abstract_gridworld_json(width, height, sigma, samples, seed))
}

#[wasm_bindgen(js_name = trainAgents)]
pub fn train_agents(
    width: usize,
    height: usize,
    sigma: f64,
    samples: usize,
    episodes: usize,
    seed: u64,
) -> std::result::Result<String, JsError> {
    js(train_agents_json(width, height, sigma, samples, episodes, seed))
}
