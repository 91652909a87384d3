//! Desk-scale gridworld: noisy observations of grid cells, abstraction of the
//! observation set, and tabular Q-learning over the resulting abstract states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::abstraction::{Step, TrajectoryLog};
use crate::error::{Error, Result};
use crate::format::{fmt6, Header};
use crate::graph::EmbeddingSet;
use crate::optimizer::OptimizeConfig;
use crate::pipeline::{abstract_states, AbstractionReport, AbstractionRun};

pub const ACTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub goal: (usize, usize),
    pub step_reward: f64,
    pub episode_cap: usize,
    pub sigma: f64,
    pub obs_dim: usize,
}

impl Default for GridworldSpec {
    fn default() -> Self {
        GridworldSpec::new(6, 6, 0.0)
    }
}

impl GridworldSpec {
    /// `width x height` grid with the goal in the far corner.
    pub fn new(width: usize, height: usize, sigma: f64) -> Self {
        GridworldSpec {
            width,
            height,
            goal: (width.saturating_sub(1), height.saturating_sub(1)),
            step_reward: -1.0,
            episode_cap: 100,
            sigma,
            obs_dim: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        if self.goal.0 >= self.width || self.goal.1 >= self.height {
            return Err(Error::invalid("goal lies outside the grid"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma must be a finite non-negative number"));
        }
        if self.obs_dim == 0 || self.episode_cap == 0 {
            return Err(Error::invalid("observation dimension and episode cap must be positive"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn goal_cell(&self) -> usize {
        self.goal.1 * self.width + self.goal.0
    }

    /// Deterministic move: 0 up, 1 down, 2 left, 3 right; walls keep the agent
    /// in place. Returns `(next cell, reward, reached goal)`.
    pub fn step(&self, cell: usize, action: usize) -> (usize, f64, bool) {
        let (x, y) = (cell % self.width, cell / self.width);
        let (nx, ny) = match action {
            0 => (x, y.saturating_sub(1)),
            1 => (x, (y + 1).min(self.height - 1)),
            2 => (x.saturating_sub(1), y),
            _ => ((x + 1).min(self.width - 1), y),
        };
        let next = ny * self.width + nx;
        (next, self.step_reward, next == self.goal_cell())
    }

    fn random_start(&self, rng: &mut impl Rng) -> usize {
        let goal = self.goal_cell();
        let k = rng.random_range(0..self.cells() - 1);
        if k >= goal {
            k + 1
        } else {
            k
        }
    }
}

/// Observation set with the generating cell of every row.
#[derive(Debug, Clone)]
pub struct Observations {
    pub embeddings: EmbeddingSet,
    pub cell_of: Vec<usize>,
    /// Row indices of each cell's observations.
    pub rows_of_cell: Vec<Vec<usize>>,
}

/// Each observation is a fixed random unit-norm lift of its one-hot cell plus
/// Gaussian noise with expected norm `sigma`.
pub fn generate_observations(spec: &GridworldSpec, samples: usize, seed: u64) -> Result<Observations> {
    spec.validate()?;
    if samples == 0 {
        return Err(Error::invalid("need at least one sample per cell"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = spec.obs_dim;
    let lift: Vec<Vec<f64>> = (0..spec.cells())
        .map(|_| {
            let col: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = crate::graph::norm(&col);
            col.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.sigma / (dim as f64).sqrt())
        .map_err(|e| Error::invalid(format!("bad noise scale: {e}")))?;
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    let mut cell_of = Vec::new();
    let mut rows_of_cell = vec![Vec::new(); spec.cells()];
    for (cell, base) in lift.iter().enumerate() {
        for k in 0..samples {
            let z: Vec<f64> = if spec.sigma > 0.0 {
                base.iter().map(|x| x + noise.sample(&mut rng)).collect()
            } else {
                base.clone()
            };
            rows_of_cell[cell].push(vectors.len());
            labels.push(format!("c{cell}_{k}"));
            vectors.push(z);
            cell_of.push(cell);
        }
    }
    Ok(Observations {
        embeddings: EmbeddingSet::new(labels, vectors)?,
        cell_of,
        rows_of_cell,
    })
}

/// Uniform-random exploration over observation labels; each visit to a cell
/// emits one of its observations at random. Reaching the goal restarts from a
/// random non-goal cell.
pub fn exploration_log(spec: &GridworldSpec, obs: &Observations, steps: usize, seed: u64) -> Result<TrajectoryLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label = |cell: usize, rng: &mut ChaCha8Rng| {
        let rows = &obs.rows_of_cell[cell];
        obs.embeddings.labels()[rows[rng.random_range(0..rows.len())]].clone()
    };
    let mut out = Vec::with_capacity(steps);
    let mut cell = if spec.cells() > 1 {
        spec.random_start(&mut rng)
    } else {
        0
    };
    for _ in 0..steps {
        let a = rng.random_range(0..ACTIONS);
        let (next, r, done) = spec.step(cell, a);
        out.push(Step {
            s: label(cell, &mut rng),
            a,
            r,
            s2: label(next, &mut rng),
        });
        cell = if done && spec.cells() > 1 {
            spec.random_start(&mut rng)
        } else {
            next
        };
    }
    TrajectoryLog::new(out)
}

/// Candidate abstract states of every cell (one per observation of the cell).
#[derive(Debug, Clone, PartialEq)]
pub struct CellAbstraction {
    pub per_cell: Vec<Vec<usize>>,
}

impl CellAbstraction {
    pub fn identity(spec: &GridworldSpec) -> Self {
        CellAbstraction {
            per_cell: (0..spec.cells()).map(|c| vec![c]).collect(),
        }
    }

    pub fn constant(spec: &GridworldSpec) -> Self {
        CellAbstraction {
            per_cell: vec![vec![0]; spec.cells()],
        }
    }

    pub fn from_assignment(obs: &Observations, assignment: &[usize]) -> Self {
        CellAbstraction {
            per_cell: obs
                .rows_of_cell
                .iter()
                .map(|rows| rows.iter().map(|&r| assignment[r]).collect())
                .collect(),
        }
    }

    pub fn state_count(&self) -> usize {
        self.per_cell.iter().flatten().max().map_or(0, |m| m + 1)
    }

    fn observe(&self, cell: usize, rng: &mut impl Rng) -> usize {
        let c = &self.per_cell[cell];
        if c.len() == 1 {
            c[0]
        } else {
            c[rng.random_range(0..c.len())]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub episodes: usize,
    pub eval_episodes: usize,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            learning_rate: 0.1,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            episodes: 2000,
            eval_episodes: 100,
        }
    }
}

impl QConfig {
    /// Linear decay over the first half of training, then constant.
    fn epsilon(&self, episode: usize) -> f64 {
        let span = (self.episodes / 2).max(1) as f64;
        let frac = (episode as f64 / span).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone)]
pub struct QTable {
    values: Vec<[f64; ACTIONS]>,
}

impl QTable {
    pub fn new(states: usize) -> Self {
        QTable {
            values: vec![[0.0; ACTIONS]; states],
        }
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state][action]
    }

    pub fn states(&self) -> usize {
        self.values.len()
    }

    /// Greedy action, smallest index on ties.
    pub fn greedy(&self, state: usize) -> usize {
        let row = &self.values[state];
        let mut best = 0;
        for a in 1..ACTIONS {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }

    fn max_value(&self, state: usize) -> f64 {
        self.values[state].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct QRun {
    pub table: QTable,
    /// Return of every training episode.
    pub training_returns: Vec<f64>,
    pub eval_mean_reward: f64,
    /// Fraction of greedy evaluation episodes that reached the goal.
    pub eval_success_rate: f64,
    /// No greedy evaluation episode reached the goal.
    pub failed: bool,
}

/// ε-greedy tabular Q-learning over abstract states, then greedy evaluation
/// from random non-goal starts.
pub fn train_q(spec: &GridworldSpec, abstraction: &CellAbstraction, cfg: &QConfig, seed: u64) -> Result<QRun> {
    spec.validate()?;
    if abstraction.per_cell.len() != spec.cells() || abstraction.per_cell.iter().any(Vec::is_empty) {
        return Err(Error::invalid("abstraction must cover every cell"));
    }
    if spec.cells() < 2 {
        return Err(Error::invalid("grid needs a non-goal cell to train on"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = QTable::new(abstraction.state_count());
    let mut returns = Vec::with_capacity(cfg.episodes);
    for ep in 0..cfg.episodes {
        let eps = cfg.epsilon(ep);
        let mut cell = spec.random_start(&mut rng);
        let mut state = abstraction.observe(cell, &mut rng);
        let mut total = 0.0;
        for _ in 0..spec.episode_cap {
            let a = if rng.random::<f64>() < eps {
                rng.random_range(0..ACTIONS)
            } else {
                table.greedy(state)
            };
            let (next, r, done) = spec.step(cell, a);
            let next_state = abstraction.observe(next, &mut rng);
            let target = if done {
                r
            } else {
                r + cfg.gamma * table.max_value(next_state)
            };
            let q = &mut table.values[state][a];
            *q += cfg.learning_rate * (target - *q);
            total += r;
            cell = next;
            state = next_state;
            if done {
                break;
            }
        }
        returns.push(total);
    }

    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e7a1);
    let mut sum = 0.0;
    let mut successes = 0usize;
    for _ in 0..cfg.eval_episodes {
        let mut cell = spec.random_start(&mut eval_rng);
        let mut total = 0.0;
        for _ in 0..spec.episode_cap {
            let state = abstraction.observe(cell, &mut eval_rng);
            let (next, r, done) = spec.step(cell, table.greedy(state));
            total += r;
            cell = next;
            if done {
                successes += 1;
                break;
            }
        }
        sum += total;
    }
    let n = cfg.eval_episodes.max(1) as f64;
    Ok(QRun {
        table,
        training_returns: returns,
        eval_mean_reward: sum / n,
        eval_success_rate: successes as f64 / n,
        failed: successes == 0,
    })
}

/// Undiscounted optimal state values of the true grid MDP.
pub fn value_iteration(spec: &GridworldSpec) -> Vec<f64> {
    let goal = spec.goal_cell();
    let mut v = vec![0.0; spec.cells()];
    loop {
        let mut change: f64 = 0.0;
        for cell in 0..spec.cells() {
            if cell == goal {
                continue;
            }
            let best = (0..ACTIONS)
                .map(|a| {
                    let (next, r, done) = spec.step(cell, a);
                    if done {
                        r
                    } else {
                        r + v[next]
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max);
            change = change.max((best - v[cell]).abs());
            v[cell] = best;
        }
        if change < 1e-12 {
            return v;
        }
    }
}

/// Expected optimal return from a uniform non-goal start.
pub fn optimal_mean_return(spec: &GridworldSpec) -> f64 {
    let v = value_iteration(spec);
    let goal = spec.goal_cell();
    let (s, c) = v
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != goal)
        .fold((0.0, 0usize), |(s, c), (_, x)| (s + x, c + 1));
    if c == 0 {
        0.0
    } else {
        s / c as f64
    }
}

/// Adjusted Rand index between two labelings. Two single-cluster labelings
/// count as identical.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("labelings differ in length"));
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let pairs = |k: u64| (k * k.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|&k| pairs(k)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let expected = rows * cols / pairs(n as u64);
    let max = (rows + cols) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub k_cap: usize,
    /// Exploration steps used for the relation graphs; 0 skips the SI loss.
    pub exploration_steps: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_cap: 3,
            exploration_steps: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// `None` for a single-cell grid, which has nothing to abstract.
    pub run: Option<AbstractionRun>,
    pub assignment: Vec<usize>,
    pub ari: f64,
    pub abstraction: CellAbstraction,
}

/// Abstracts the observation set and scores the root-children partition
/// against the generating cells.
pub fn run_pipeline(
    spec: &GridworldSpec,
    obs: &Observations,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PipelineResult> {
    if spec.cells() == 1 {
        let assignment = vec![0; obs.cell_of.len()];
        return Ok(PipelineResult {
            run: None,
            abstraction: CellAbstraction::from_assignment(obs, &assignment),
            ari: adjusted_rand_index(&assignment, &obs.cell_of)?,
            assignment,
        });
    }
    let log = if cfg.exploration_steps > 0 {
        Some(exploration_log(spec, obs, cfg.exploration_steps, seed)?)
    } else {
        None
    };
    let opt = OptimizeConfig::with_k_cap(cfg.k_cap);
    let run = abstract_states(&obs.embeddings, log.as_ref(), &opt)?;
    let assignment = run.assignment.clone();
    let ari = adjusted_rand_index(&assignment, &obs.cell_of)?;
    Ok(PipelineResult {
        abstraction: CellAbstraction::from_assignment(obs, &assignment),
        run: Some(run),
        assignment,
        ari,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoConfig {
    pub spec: GridworldSpec,
    pub samples: usize,
    pub k_cap: usize,
    pub episodes: usize,
    pub exploration_steps: usize,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            spec: GridworldSpec::default(),
            samples: 5,
            k_cap: 3,
            episodes: QConfig::default().episodes,
            exploration_steps: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LearningSummary {
    pub abstract_states: usize,
    pub episodes: usize,
    pub eval_mean_reward: f64,
    pub eval_success_rate: f64,
    pub failed: bool,
    pub oracle_mean_return: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub header: Header,
    pub grid: GridworldSpec,
    pub samples: usize,
    pub ari: f64,
    /// Abstract state of every cell's first observation, row-major.
    pub cell_states: Vec<usize>,
    pub learning: Option<LearningSummary>,
    pub abstraction: Option<AbstractionReport>,
}

#[derive(Debug, Clone)]
pub struct DemoOutput {
    pub report: DemoReport,
    pub training_returns: Vec<f64>,
}

impl DemoOutput {
    pub fn rewards_csv(&self) -> String {
        let mut out = String::from("episode,return\n");
        for (i, r) in self.training_returns.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, fmt6(*r)));
        }
        out
    }
}

/// Observations, abstraction, and Q-learning over the learned abstract states.
/// A single-cell grid has no non-goal start, so learning is skipped.
pub fn run_demo(cfg: &DemoConfig) -> Result<DemoOutput> {
    let spec = &cfg.spec;
    let obs = generate_observations(spec, cfg.samples, cfg.seed)?;
    let pcfg = PipelineConfig {
        k_cap: cfg.k_cap,
        exploration_steps: cfg.exploration_steps,
    };
    let res = run_pipeline(spec, &obs, &pcfg, cfg.seed)?;
    let abstraction = match &res.run {
        Some(run) => Some(run.report(&obs.embeddings, &OptimizeConfig::with_k_cap(cfg.k_cap), Some(cfg.seed))?),
        None => None,
    };
    let (learning, training_returns) = if spec.cells() > 1 {
        let qcfg = QConfig {
            episodes: cfg.episodes,
            ..QConfig::default()
        };
        let q = train_q(spec, &res.abstraction, &qcfg, cfg.seed)?;
        let summary = LearningSummary {
            abstract_states: res.abstraction.state_count(),
            episodes: cfg.episodes,
            eval_mean_reward: q.eval_mean_reward,
            eval_success_rate: q.eval_success_rate,
            failed: q.failed,
            oracle_mean_return: optimal_mean_return(spec),
        };
        (Some(summary), q.training_returns)
    } else {
        (None, Vec::new())
    };
    Ok(DemoOutput {
        report: DemoReport {
            header: Header::new(Some(cfg.seed)),
            grid: *spec,
            samples: cfg.samples,
            ari: res.ari,
            cell_states: res.abstraction.per_cell.iter().map(|c| c[0]).collect(),
            learning,
            abstraction,
        },
        training_returns,
    })
}
