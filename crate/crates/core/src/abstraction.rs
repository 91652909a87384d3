//! Quantities computed on an optimized encoding tree: cluster centers and the
//! clustering loss, entropy-weighted aggregation of representations, relation
//! graphs built from trajectories and their reconstruction loss, and discrete
//! state abstractions.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::entropy::{conditional_entropy_with, structural_probability_with, EntropyTable};
use crate::error::{Error, Result};
use crate::graph::{EmbeddingSet, Graph};
use crate::optimizer::{optimize, OptimizeConfig};
use crate::tree::{EncodingTree, NodeId};

/// Cluster centers plus the soft assignment `Q` and its sharpened target `P`.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub centers: Vec<(NodeId, Vec<f64>)>,
    pub soft_assignment: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
}

impl ClusterModel {
    pub fn fit(g: &Graph, t: &EncodingTree, e: &EmbeddingSet) -> Result<Self> {
        let centers = cluster_centers(g, t, e)?;
        let vectors: Vec<Vec<f64>> = centers.iter().map(|c| c.1.clone()).collect();
        let q = soft_assignment(e, &vectors)?;
        let p = target_distribution(&q)?;
        Ok(ClusterModel {
            centers,
            soft_assignment: q,
            target: p,
        })
    }

    pub fn loss(&self) -> Result<f64> {
        clustering_loss(&self.target, &self.soft_assignment)
    }
}

fn check_embeddings(g: &Graph, e: &EmbeddingSet) -> Result<()> {
    if g.vertex_count() != e.count() {
        return Err(Error::invalid(format!(
            "{} embeddings for {} graph vertices",
            e.count(),
            g.vertex_count()
        )));
    }
    Ok(())
}

/// Center of each root child: its members' embeddings weighted by the
/// normalized structural probability.
pub fn cluster_centers(g: &Graph, t: &EncodingTree, e: &EmbeddingSet) -> Result<Vec<(NodeId, Vec<f64>)>> {
    check_embeddings(g, e)?;
    let table = EntropyTable::new(g, t)?;
    let dim = e.dimension();
    t.node(t.root())
        .children
        .iter()
        .map(|&c| {
            let probs = structural_probability_with(t, &table, c)?;
            let mut center = vec![0.0; dim];
            for (v, p) in probs {
                for (x, z) in center.iter_mut().zip(e.vector(v)) {
                    *x += p * z;
                }
            }
            Ok((c, center))
        })
        .collect()
}

/// `Q[i][j] ∝ (1 + |z_i - C_j|^2)^-1`, normalized over centers.
pub fn soft_assignment(e: &EmbeddingSet, centers: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if centers.is_empty() {
        return Err(Error::invalid("soft assignment needs at least one center"));
    }
    if let Some(c) = centers.iter().find(|c| c.len() != e.dimension()) {
        return Err(Error::invalid(format!(
            "center of dimension {} for embeddings of dimension {}",
            c.len(),
            e.dimension()
        )));
    }
    Ok(e.vectors()
        .iter()
        .map(|z| {
            let raw: Vec<f64> = centers
                .iter()
                .map(|c| {
                    let d2: f64 = z.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    1.0 / (1.0 + d2)
                })
                .collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect())
}

/// `P[i][j] ∝ Q[i][j]^2 / f_j` with `f_j = Σ_i Q[i][j]`, normalized per row.
pub fn target_distribution(q: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let cols = q.first().map_or(0, Vec::len);
    if q.iter().any(|row| row.len() != cols) {
        return Err(Error::invalid("ragged assignment matrix"));
    }
    let mut freq = vec![0.0; cols];
    for row in q {
        for (f, x) in freq.iter_mut().zip(row) {
            *f += x;
        }
    }
    if let Some(j) = freq.iter().position(|&f| f <= 0.0) {
        return Err(Error::DegenerateCluster(j));
    }
    Ok(q.iter()
        .map(|row| {
            let raw: Vec<f64> = row.iter().zip(&freq).map(|(x, f)| x * x / f).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect())
}

/// `KL(P || Q)` summed over rows, natural log.
pub fn clustering_loss(p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<f64> {
    if p.len() != q.len() || p.iter().zip(q).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::invalid("P and Q shapes differ"));
    }
    let mut total = 0.0;
    for (i, (pr, qr)) in p.iter().zip(q).enumerate() {
        for (j, (&pij, &qij)) in pr.iter().zip(qr).enumerate() {
            if pij <= 0.0 {
                continue;
            }
            if qij <= 0.0 {
                return Err(Error::Divergence { row: i, col: j });
            }
            total += pij * (pij / qij).ln();
        }
    }
    Ok(total)
}

/// Abstract representation of every tree node.
#[derive(Debug, Clone)]
pub struct LevelRepresentations {
    reps: Vec<Option<Vec<f64>>>,
}

impl LevelRepresentations {
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.reps.get(id.0)?.as_deref()
    }

    /// `(node, height, vector)` for every node.
    pub fn iter<'a>(&'a self, t: &'a EncodingTree) -> impl Iterator<Item = (NodeId, usize, &'a [f64])> + 'a {
        t.node_ids()
            .map(move |id| (id, t.node(id).height, self.get(id).expect("every node aggregated")))
    }
}

/// Child weights used by [`aggregate`]: assigned entropies normalized over the
/// siblings, uniform when they are all zero.
pub fn aggregation_weights(t: &EncodingTree, table: &EntropyTable, node: NodeId) -> Vec<f64> {
    let kids = &t.node(node).children;
    let raw: Vec<f64> = kids.iter().map(|&c| table.get(c)).collect();
    let s: f64 = raw.iter().sum();
    if s > 0.0 {
        raw.into_iter().map(|x| x / s).collect()
    } else {
        vec![1.0 / kids.len() as f64; kids.len()]
    }
}

/// Bottom-up aggregation: leaves carry the input embeddings, each internal
/// node the entropy-weighted combination of its children.
pub fn aggregate(t: &EncodingTree, g: &Graph, e: &EmbeddingSet) -> Result<LevelRepresentations> {
    check_embeddings(g, e)?;
    let table = EntropyTable::new(g, t)?;
    let mut reps: Vec<Option<Vec<f64>>> = vec![None; t.slot_count()];
    let mut order: Vec<NodeId> = t.node_ids().collect();
    order.sort_by_key(|&id| (t.node(id).height, id));
    for id in order {
        let node = t.node(id);
        let rep = if node.is_leaf() {
            e.vector(node.vertices[0]).to_vec()
        } else {
            let weights = aggregation_weights(t, &table, id);
            let mut acc = vec![0.0; e.dimension()];
            for (&c, w) in node.children.iter().zip(weights) {
                let child = reps[c.0].as_ref().expect("children aggregated first");
                for (a, x) in acc.iter_mut().zip(child) {
                    *a += w * x;
                }
            }
            acc
        };
        reps[id.0] = Some(rep);
    }
    Ok(LevelRepresentations { reps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub s: String,
    pub a: usize,
    pub r: f64,
    pub s2: String,
}

/// Sampled `(state, action, reward, next state)` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub steps: Vec<Step>,
    pub action_count: usize,
}

impl TrajectoryLog {
    pub fn new(steps: Vec<Step>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::invalid("trajectory log is empty"));
        }
        if let Some(i) = steps.iter().position(|s| !s.r.is_finite()) {
            return Err(Error::invalid(format!("step {i} has a non-finite reward")));
        }
        let action_count = steps.iter().map(|s| s.a).max().unwrap_or(0) + 1;
        Ok(TrajectoryLog { steps, action_count })
    }

    /// JSON Lines, one `{"s","a","r","s2"}` record per line.
    pub fn parse_jsonl(text: &str, source: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let step: Step = serde_json::from_str(line).map_err(|err| Error::Parse {
                path: source.to_string(),
                line: i + 1,
                message: err.to_string(),
            })?;
            steps.push(step);
        }
        TrajectoryLog::new(steps)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = Error::read_file(path)?;
        TrajectoryLog::parse_jsonl(&text, &path.display().to_string())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Steps resolved to vertex indices.
    fn resolve(&self, labels: &[String]) -> Result<Vec<(usize, usize, f64, usize)>> {
        let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        self.steps
            .iter()
            .map(|st| {
                let look = |l: &str| {
                    index
                        .get(l)
                        .copied()
                        .ok_or_else(|| Error::invalid(format!("trajectory state {l:?} has no embedding")))
                };
                Ok((look(&st.s)?, st.a, st.r, look(&st.s2)?))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Transition,
    Action,
    Reward,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::Transition, Relation::Action, Relation::Reward];
}

/// Relation graphs of one level.
#[derive(Debug, Clone)]
pub struct LevelRelations {
    pub level: usize,
    /// Tree node behind each graph vertex.
    pub nodes: Vec<NodeId>,
    pub transition: Graph,
    pub action: Graph,
    pub reward: Graph,
    /// Empirical `P(v | u)` before symmetrization, self-transitions included.
    pub transition_probs: Vec<BTreeMap<usize, f64>>,
}

impl LevelRelations {
    pub fn graph(&self, r: Relation) -> &Graph {
        match r {
            Relation::Transition => &self.transition,
            Relation::Action => &self.action,
            Relation::Reward => &self.reward,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelationGraphs {
    pub levels: Vec<LevelRelations>,
}

/// Reward weight floor: min-max normalized rewards land in `[2e-9, 1]`.
const REWARD_FLOOR: f64 = 2.0 * crate::graph::EDGE_WEIGHT_FLOOR;

/// Builds transition, action and reward graphs over the level-`h` nodes for
/// `h = 0..levels`. `labels` resolves the log's state labels to the tree's
/// vertices.
pub fn build_relation_graphs(
    t: &EncodingTree,
    labels: &[String],
    log: &TrajectoryLog,
    levels: usize,
) -> Result<RelationGraphs> {
    if labels.len() != t.vertex_count() {
        return Err(Error::invalid("labels do not match the tree's vertices"));
    }
    let steps = log.resolve(labels)?;
    let mut out = Vec::with_capacity(levels);
    for h in 0..levels.max(1) {
        let nodes = t.level_nodes(h);
        let pos: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let of = |v: usize| pos[&t.ancestor_at_level(v, h)];
        let m = nodes.len();

        let mut out_count = vec![0usize; m];
        let mut pair_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut out_action: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut pair_action: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
        let mut reward_sum: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for &(s, a, r, s2) in &steps {
            let (u, v) = (of(s), of(s2));
            out_count[u] += 1;
            *pair_count.entry((u, v)).or_default() += 1;
            *out_action.entry((u, a)).or_default() += 1;
            *pair_action.entry((u, a, v)).or_default() += 1;
            if u != v {
                let e = reward_sum.entry((u.min(v), u.max(v))).or_default();
                e.0 += r;
                e.1 += 1;
            }
        }

        let mut transition_probs = vec![BTreeMap::new(); m];
        for (&(u, v), &c) in &pair_count {
            transition_probs[u].insert(v, c as f64 / out_count[u] as f64);
        }
        let mut action_max: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&(u, a, v), &c) in &pair_action {
            let p = c as f64 / out_action[&(u, a)] as f64;
            let e = action_max.entry((u, v)).or_insert(0.0);
            *e = e.max(p);
        }
        let symmetric = |directed: &BTreeMap<(usize, usize), f64>| {
            let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for (&(u, v), &p) in directed {
                if u != v {
                    *acc.entry((u.min(v), u.max(v))).or_default() += p / 2.0;
                }
            }
            acc.into_iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|((u, v), w)| (u, v, w))
                .collect::<Vec<_>>()
        };
        let trans_directed: BTreeMap<(usize, usize), f64> = transition_probs
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |(&v, &p)| ((u, v), p)))
            .collect();

        let means: Vec<((usize, usize), f64)> = reward_sum.iter().map(|(&k, &(s, c))| (k, s / c as f64)).collect();
        let lo = means.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
        let hi = means.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        let reward_edges: Vec<(usize, usize, f64)> = means
            .iter()
            .map(|&((u, v), x)| {
                let w = if hi > lo {
                    REWARD_FLOOR + (1.0 - REWARD_FLOOR) * (x - lo) / (hi - lo)
                } else {
                    0.5
                };
                (u, v, w)
            })
            .collect();

        let graph_labels: Vec<String> = nodes.iter().map(|n| format!("n{n}")).collect();
        out.push(LevelRelations {
            level: h,
            transition: Graph::new(graph_labels.clone(), symmetric(&trans_directed))?,
            action: Graph::new(graph_labels.clone(), symmetric(&action_max))?,
            reward: Graph::new(graph_labels, reward_edges)?,
            nodes,
            transition_probs,
        });
    }
    Ok(RelationGraphs { levels: out })
}

/// Reconstructed and empirical conditional distributions of one relation
/// graph. Row `i` holds `p(j | i)` over all other non-isolated vertices `j`
/// (diagonal fixed at 0).
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub vertices: Vec<usize>,
    pub reconstructed: Vec<Vec<f64>>,
    pub empirical: Vec<Vec<f64>>,
}

/// Optimizes an encoding tree for `g` (isolated vertices dropped) and
/// reconstructs pairwise probabilities from conditional structural entropy,
/// normalized per source. `None` when fewer than two vertices remain.
pub fn reconstruct_relation(g: &Graph, cfg: &OptimizeConfig) -> Result<Option<Reconstruction>> {
    let vertices: Vec<usize> = (0..g.vertex_count()).filter(|&v| g.degrees()[v] > 0.0).collect();
    if vertices.len() < 2 {
        return Ok(None);
    }
    let sub = g.induced(&vertices)?;
    let tree = optimize(&sub, cfg)?.tree;
    let table = EntropyTable::new(&sub, &tree)?;
    let n = sub.vertex_count();
    let mut reconstructed = Vec::with_capacity(n);
    let mut empirical = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![0.0; n];
        for (j, x) in row.iter_mut().enumerate() {
            if j != i {
                *x = conditional_entropy_with(&tree, &table, tree.leaf(i), tree.leaf(j))?;
            }
        }
        reconstructed.push(normalize_off_diagonal(row, i));
        let mut emp = vec![0.0; n];
        for &(j, w) in sub.neighbors(i) {
            emp[j] = w;
        }
        empirical.push(normalize_off_diagonal(emp, i));
    }
    Ok(Some(Reconstruction {
        vertices,
        reconstructed,
        empirical,
    }))
}

fn normalize_off_diagonal(mut row: Vec<f64>, diag: usize) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    let others = row.len() - 1;
    for (j, x) in row.iter_mut().enumerate() {
        if j == diag {
            *x = 0.0;
        } else if s > 0.0 {
            *x /= s;
        } else {
            *x = 1.0 / others as f64;
        }
    }
    row
}

/// Mean over sources of the per-source mean squared error across targets
/// (the source itself excluded).
pub fn relation_mse(reconstructed: &[Vec<f64>], empirical: &[Vec<f64>]) -> Result<f64> {
    if reconstructed.len() != empirical.len() {
        return Err(Error::invalid("reconstruction and empirical matrices differ in size"));
    }
    let n = reconstructed.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, (r, e)) in reconstructed.iter().zip(empirical).enumerate() {
        if r.len() != n || e.len() != n {
            return Err(Error::invalid("relation matrices must be square"));
        }
        let se: f64 = (0..n).filter(|&j| j != i).map(|j| (r[j] - e[j]).powi(2)).sum();
        total += se / (n - 1) as f64;
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct RelationLoss {
    pub level: usize,
    pub relation: Relation,
    pub loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SiLoss {
    pub parts: Vec<RelationLoss>,
    pub total: f64,
}

/// Reconstruction loss of every relation graph at every level, summed.
pub fn si_loss(graphs: &RelationGraphs, cfg: &OptimizeConfig) -> Result<SiLoss> {
    let mut parts = Vec::new();
    for level in &graphs.levels {
        for r in Relation::ALL {
            let loss = match reconstruct_relation(level.graph(r), cfg)? {
                Some(rec) => relation_mse(&rec.reconstructed, &rec.empirical)?,
                None => 0.0,
            };
            parts.push(RelationLoss {
                level: level.level,
                relation: r,
                loss,
            });
        }
    }
    let total = parts.iter().map(|p| p.loss).sum();
    Ok(SiLoss { parts, total })
}

fn dense_ids(nodes: impl Iterator<Item = NodeId>) -> Vec<usize> {
    let mut ids: HashMap<NodeId, usize> = HashMap::new();
    nodes
        .map(|n| {
            let next = ids.len();
            *ids.entry(n).or_insert(next)
        })
        .collect()
}

/// Maps each vertex to the dense id of its highest non-root ancestor with
/// height at most `level`. Requires `1 <= level <= height - 1`.
pub fn discrete_abstraction(t: &EncodingTree, level: usize) -> Result<Vec<usize>> {
    let h = t.height();
    if level == 0 || level + 1 > h {
        return Err(Error::domain(format!(
            "abstraction level {level} outside 1..={} for a tree of height {h}",
            h.saturating_sub(1)
        )));
    }
    Ok(dense_ids((0..t.vertex_count()).map(|v| t.ancestor_at_level(v, level))))
}

/// Maps each vertex to the dense id of the root child containing it.
pub fn root_children_abstraction(t: &EncodingTree) -> Vec<usize> {
    dense_ids((0..t.vertex_count()).map(|v| {
        let path = t.path_to_root(t.leaf(v));
        path[path.len() - 2]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Nest;
    use approx::assert_abs_diff_eq;

    fn emb(rows: &[&[f64]]) -> EmbeddingSet {
        EmbeddingSet::new(
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    fn cycle4() -> Graph {
        Graph::with_vertex_count(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]).unwrap()
    }

    #[test]
    fn centers_examples() {
        let g = cycle4();
        let t = EncodingTree::from_clusters(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let e = emb(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[2.0, 2.0]]);
        let centers = cluster_centers(&g, &t, &e).unwrap();
        assert_abs_diff_eq!(centers[0].1[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(centers[0].1[1], 0.5, epsilon = 1e-12);

        // singleton cluster keeps its member's embedding
        let nest = Nest::Node(vec![
            Nest::Node(vec![Nest::Leaf(0)]),
            Nest::Node(vec![Nest::Leaf(1), Nest::Leaf(2), Nest::Leaf(3)]),
        ]);
        let t = EncodingTree::from_nest(4, &nest).unwrap();
        let centers = cluster_centers(&g, &t, &e).unwrap();
        assert_eq!(centers[0].1, vec![1.0, 0.0]);

        let short = emb(&[&[1.0], &[2.0]]);
        assert!(cluster_centers(&g, &t, &short).is_err());
    }

    #[test]
    fn centers_follow_structural_probability() {
        // weights exp(-0.25):exp(-0.5) on (1,0),(0,1)
        let z = (-0.25f64).exp() + (-0.5f64).exp();
        let (a, b) = ((-0.25f64).exp() / z, (-0.5f64).exp() / z);
        assert_abs_diff_eq!(a, 0.5622, epsilon = 1e-4);
        assert_abs_diff_eq!(b, 0.4378, epsilon = 1e-4);
        // path 0-1-2-3 with clusters {0,1},{2,3}: leaf entropies differ
        let g = Graph::with_vertex_count(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let t = EncodingTree::from_clusters(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let table = EntropyTable::new(&g, &t).unwrap();
        let (h0, h1) = (table.get(t.leaf(0)), table.get(t.leaf(1)));
        let e = emb(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        let c = &cluster_centers(&g, &t, &e).unwrap()[0].1;
        let z = (-h0).exp() + (-h1).exp();
        assert_abs_diff_eq!(c[0], (-h0).exp() / z, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], (-h1).exp() / z, epsilon = 1e-12);
    }

    #[test]
    fn soft_assignment_examples() {
        let e = emb(&[&[0.0, 1.0]]);
        let q = soft_assignment(&e, &[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(q[0][0], 0.5, epsilon = 1e-12);
        let e = emb(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let q = soft_assignment(&e, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(q, vec![vec![1.0], vec![1.0]]);
        let e = emb(&[&[1.0, 0.0]]);
        let q = soft_assignment(&e, &[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(q[0][0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[0][1], 1.0 / 3.0, epsilon = 1e-12);
        assert!(soft_assignment(&e, &[]).is_err());
    }

    #[test]
    fn target_examples() {
        let p = target_distribution(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(p[0], vec![1.0, 0.0]);
        let p = target_distribution(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_abs_diff_eq!(p[1][0], 0.5, epsilon = 1e-12);
        // frozen from a numpy evaluation of Q^2/f renormalized
        let q = vec![vec![0.8, 0.2], vec![0.6, 0.4]];
        let p = target_distribution(&q).unwrap();
        assert_abs_diff_eq!(p[0][0], 0.8727272727272727, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0][1], 0.12727272727272723, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1][0], 0.49090909090909096, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1][1], 0.509090909090909, epsilon = 1e-12);
        assert_abs_diff_eq!(clustering_loss(&p, &q).unwrap(), 0.04267416441264739, epsilon = 1e-12);
        assert!(matches!(
            target_distribution(&[vec![1.0, 0.0], vec![1.0, 0.0]]),
            Err(Error::DegenerateCluster(1))
        ));
    }

    #[test]
    fn clustering_loss_examples() {
        let q = vec![vec![0.3, 0.7]];
        assert_eq!(clustering_loss(&q, &q).unwrap(), 0.0);
        let l = clustering_loss(&[vec![1.0, 0.0]], &[vec![0.5, 0.5]]).unwrap();
        assert_abs_diff_eq!(l, std::f64::consts::LN_2, epsilon = 1e-12);
        assert!(matches!(
            clustering_loss(&[vec![0.5, 0.5]], &[vec![1.0, 0.0]]),
            Err(Error::Divergence { row: 0, col: 1 })
        ));
    }

    #[test]
    fn aggregate_examples() {
        // node with one child
        let g = Graph::with_vertex_count(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let nest = Nest::Node(vec![Nest::Node(vec![Nest::Leaf(0)]), Nest::Leaf(1), Nest::Leaf(2)]);
        let t = EncodingTree::from_nest(3, &nest).unwrap();
        let e = emb(&[&[2.0, 0.0], &[0.0, 2.0], &[1.0, 1.0]]);
        let reps = aggregate(&t, &g, &e).unwrap();
        let wrapper = t.node(t.leaf(0)).parent.unwrap();
        assert_eq!(reps.get(wrapper).unwrap(), &[2.0, 0.0]);

        // equal-entropy children give the mean
        let g = cycle4();
        let t = EncodingTree::from_clusters(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let e = emb(&[&[2.0, 0.0], &[0.0, 2.0], &[1.0, 1.0], &[3.0, 3.0]]);
        let reps = aggregate(&t, &g, &e).unwrap();
        let c = t.node(t.leaf(0)).parent.unwrap();
        assert_eq!(reps.get(c).unwrap(), &[1.0, 1.0]);
        for (id, _, v) in reps.iter(&t) {
            assert_eq!(v.len(), 2, "node {id}");
        }
    }

    #[test]
    fn aggregate_weighted_children() {
        // leaf entropies in ratio 3:1 → weights (0.75, 0.25)
        let weights = [0.75, 0.25];
        let reps = [[1.0, 0.0], [0.0, 1.0]];
        let mixed: Vec<f64> = (0..2)
            .map(|d| weights[0] * reps[0][d] + weights[1] * reps[1][d])
            .collect();
        assert_eq!(mixed, vec![0.75, 0.25]);

        let g = Graph::with_vertex_count(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let t = EncodingTree::from_clusters(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let table = EntropyTable::new(&g, &t).unwrap();
        let c = t.node(t.leaf(0)).parent.unwrap();
        let w = aggregation_weights(&t, &table, c);
        let (h0, h1) = (table.get(t.leaf(0)), table.get(t.leaf(1)));
        assert_abs_diff_eq!(w[0], h0 / (h0 + h1), epsilon = 1e-12);
        let e = emb(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        let reps = aggregate(&t, &g, &e).unwrap();
        assert_abs_diff_eq!(reps.get(c).unwrap()[0], w[0], epsilon = 1e-12);
    }

    #[test]
    fn aggregate_zero_entropy_falls_back_to_uniform() {
        let g = Graph::with_vertex_count(4, [(0, 1, 1.0)]).unwrap();
        let t = EncodingTree::from_clusters(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let e = emb(&[&[1.0, 0.0], &[0.0, 1.0], &[4.0, 0.0], &[0.0, 4.0]]);
        let reps = aggregate(&t, &g, &e).unwrap();
        let c = t.node(t.leaf(2)).parent.unwrap();
        assert_eq!(reps.get(c).unwrap(), &[2.0, 2.0]);
    }

    fn steps(list: &[(&str, usize, f64, &str)]) -> TrajectoryLog {
        TrajectoryLog::new(
            list.iter()
                .map(|&(s, a, r, s2)| Step {
                    s: s.into(),
                    a,
                    r,
                    s2: s2.into(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn relation_graph_loop() {
        let t = EncodingTree::flat(2).unwrap();
        let labels = vec!["s0".to_string(), "s1".to_string()];
        let log = steps(&[("s0", 0, -1.0, "s1"), ("s1", 0, -1.0, "s0"), ("s0", 0, -1.0, "s1")]);
        let rg = build_relation_graphs(&t, &labels, &log, 1).unwrap();
        let lvl = &rg.levels[0];
        assert_eq!(lvl.transition.edges(), &[(0, 1, 1.0)]);
        assert_eq!(lvl.action.edges(), &[(0, 1, 1.0)]);
        // single reward value: degenerate range maps to 0.5
        assert_eq!(lvl.reward.edges(), &[(0, 1, 0.5)]);
    }

    #[test]
    fn relation_graph_uniform_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut list = Vec::new();
        let mut s = 0usize;
        for _ in 0..4000 {
            let s2 = rng.random_range(0..2usize);
            list.push(Step {
                s: format!("s{s}"),
                a: 0,
                r: -1.0,
                s2: format!("s{s2}"),
            });
            s = s2;
        }
        let log = TrajectoryLog::new(list).unwrap();
        let t = EncodingTree::flat(2).unwrap();
        let labels = vec!["s0".to_string(), "s1".to_string()];
        let rg = build_relation_graphs(&t, &labels, &log, 1).unwrap();
        let w = rg.levels[0].action.weight(0, 1).unwrap();
        assert!((w - 0.5).abs() < 0.05, "{w}");
        for row in &rg.levels[0].transition_probs {
            assert_abs_diff_eq!(row.values().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn relation_graph_rewards_and_levels() {
        let t = EncodingTree::from_clusters(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let labels: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
        let log = steps(&[
            ("s0", 0, -1.0, "s1"),
            ("s1", 1, 0.0, "s2"),
            ("s2", 0, -1.0, "s3"),
            ("s3", 1, -3.0, "s0"),
        ]);
        let rg = build_relation_graphs(&t, &labels, &log, 2).unwrap();
        assert_eq!(rg.levels.len(), 2);
        let l0 = &rg.levels[0];
        assert_eq!(l0.nodes.len(), 4);
        // means: (0,1) -1, (1,2) 0, (2,3) -1, (0,3) -3
        assert_abs_diff_eq!(l0.reward.weight(1, 2).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l0.reward.weight(0, 3).unwrap(), REWARD_FLOOR, epsilon = 1e-15);
        let l1 = &rg.levels[1];
        assert_eq!(l1.nodes.len(), 2);
        // cluster-level: {0,1}->{0,1}, {0,1}->{2,3}, {2,3}->{2,3}, {2,3}->{0,1}
        assert_eq!(l1.transition.edges(), &[(0, 1, 0.5)]);
        assert!(build_relation_graphs(&t, &labels[..3], &log, 1).is_err());
    }

    #[test]
    fn empty_and_unknown_logs() {
        assert!(TrajectoryLog::new(Vec::new()).is_err());
        assert!(TrajectoryLog::parse_jsonl("\n", "x").is_err());
        let log = TrajectoryLog::parse_jsonl("{\"s\":\"a\",\"a\":0,\"r\":1.0,\"s2\":\"zz\"}\n", "x").unwrap();
        let t = EncodingTree::flat(1).unwrap();
        assert!(build_relation_graphs(&t, &["a".into()], &log, 1).is_err());
        assert!(matches!(
            TrajectoryLog::parse_jsonl("{\"s\":1}\n", "x"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn mse_examples() {
        let r = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(relation_mse(&r, &r).unwrap(), 0.0);
        // rows average their own squared error, then rows are averaged
        let rec = vec![vec![0.6, 0.4], vec![1.0, 0.0]];
        let emp = vec![vec![0.5, 0.5], vec![1.0, 0.0]];
        assert_abs_diff_eq!(relation_mse(&rec, &emp).unwrap(), 0.005, epsilon = 1e-12);
    }

    #[test]
    fn two_state_reconstruction_is_exact() {
        let g = Graph::with_vertex_count(2, [(0, 1, 0.3)]).unwrap();
        let rec = reconstruct_relation(&g, &OptimizeConfig::default()).unwrap().unwrap();
        assert_eq!(rec.reconstructed, rec.empirical);
        let single = Graph::with_vertex_count(3, [(0, 1, 1.0)]).unwrap();
        let rec = reconstruct_relation(&single, &OptimizeConfig::default())
            .unwrap()
            .unwrap();
        assert_eq!(rec.vertices, vec![0, 1]);
        let none = Graph::with_vertex_count(2, []).unwrap();
        assert!(reconstruct_relation(&none, &OptimizeConfig::default())
            .unwrap()
            .is_none());
    }

    #[test]
    fn si_loss_sums_parts() {
        let t = EncodingTree::from_clusters(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let labels: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
        let log = steps(&[
            ("s0", 0, -1.0, "s1"),
            ("s1", 1, 0.0, "s2"),
            ("s2", 0, -1.0, "s3"),
            ("s3", 1, -3.0, "s0"),
            ("s0", 1, -1.0, "s2"),
        ]);
        let rg = build_relation_graphs(&t, &labels, &log, 3).unwrap();
        let loss = si_loss(&rg, &OptimizeConfig::default()).unwrap();
        assert_eq!(loss.parts.len(), 9);
        assert!(loss.parts.iter().all(|p| p.loss >= 0.0));
        assert_abs_diff_eq!(
            loss.total,
            loss.parts.iter().map(|p| p.loss).sum::<f64>(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn discrete_abstraction_examples() {
        let flat = EncodingTree::flat(4).unwrap();
        assert!(matches!(discrete_abstraction(&flat, 1), Err(Error::Domain(_))));
        assert_eq!(root_children_abstraction(&flat), vec![0, 1, 2, 3]);

        let t = EncodingTree::from_clusters(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(discrete_abstraction(&t, 1).unwrap(), vec![0, 0, 1, 1]);
        assert!(discrete_abstraction(&t, 2).is_err());
        assert!(discrete_abstraction(&t, 0).is_err());

        // branch {0,1,2} is deeper than the lone leaf 3
        let nest = Nest::Node(vec![
            Nest::Node(vec![Nest::Node(vec![Nest::Leaf(0), Nest::Leaf(1)]), Nest::Leaf(2)]),
            Nest::Leaf(3),
        ]);
        let t = EncodingTree::from_nest(4, &nest).unwrap();
        assert_eq!(discrete_abstraction(&t, 2).unwrap(), vec![0, 0, 0, 1]);
        assert_eq!(discrete_abstraction(&t, 1).unwrap(), vec![0, 0, 1, 2]);
        assert_eq!(root_children_abstraction(&t), vec![0, 0, 0, 1]);
    }
}
