//! Structural entropy of graphs under encoding trees.
//!
//! All logarithms are base 2. Every quantity is a ratio of weights, so scaling
//! all edge weights by a positive constant leaves the results unchanged.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tree::{EncodingTree, NodeId};

/// Cut, volume and assigned entropy of one tree node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEntropy {
    pub node: NodeId,
    /// Total weight of edges with exactly one endpoint in the node.
    pub g_alpha: f64,
    /// Sum of degrees of the node's vertices.
    pub v_alpha: f64,
    pub assigned_se: f64,
}

/// `-(g / vol) * log2(v / v_parent)`, zero when the node has no cut or no
/// volume.
pub(crate) fn assigned_term(g: f64, v: f64, v_parent: f64, vol: f64) -> f64 {
    if g <= 0.0 || v <= 0.0 || vol <= 0.0 {
        return 0.0;
    }
    -(g / vol) * (v / v_parent).log2()
}

/// Shannon entropy of the degree-stationary distribution.
pub fn one_dim_entropy(g: &Graph) -> Result<f64> {
    let vol = g.volume();
    if vol <= 0.0 {
        return Err(Error::invalid("graph has zero volume"));
    }
    if let Some(v) = g.degrees().iter().position(|&d| d <= 0.0) {
        return Err(Error::invalid(format!("vertex {} ({}) is isolated", v, g.label(v))));
    }
    Ok(g.degrees()
        .iter()
        .map(|&d| {
            let p = d / vol;
            -p * p.log2()
        })
        .sum())
}

fn check_alignment(g: &Graph, t: &EncodingTree) -> Result<()> {
    if g.vertex_count() != t.vertex_count() {
        return Err(Error::invalid(format!(
            "tree covers {} vertices but graph has {}",
            t.vertex_count(),
            g.vertex_count()
        )));
    }
    Ok(())
}

fn cut_and_volume(g: &Graph, vertices: &[usize], inside: &mut [bool]) -> (f64, f64) {
    for &v in vertices {
        inside[v] = true;
    }
    let mut cut = 0.0;
    let mut volume = 0.0;
    for &v in vertices {
        volume += g.degrees()[v];
        for &(u, w) in g.neighbors(v) {
            if !inside[u] {
                cut += w;
            }
        }
    }
    for &v in vertices {
        inside[v] = false;
    }
    (cut, volume)
}

pub fn node_entropy(g: &Graph, t: &EncodingTree, id: NodeId) -> Result<NodeEntropy> {
    check_alignment(g, t)?;
    let node = t.try_node(id)?;
    let parent = node
        .parent
        .ok_or_else(|| Error::domain("assigned entropy is undefined for the root"))?;
    let mut inside = vec![false; g.vertex_count()];
    let (cut, volume) = cut_and_volume(g, &node.vertices, &mut inside);
    let parent_volume: f64 = t.node(parent).vertices.iter().map(|&v| g.degrees()[v]).sum();
    Ok(NodeEntropy {
        node: id,
        g_alpha: cut,
        v_alpha: volume,
        assigned_se: assigned_term(cut, volume, parent_volume, g.volume()),
    })
}

pub fn assigned_entropy(g: &Graph, t: &EncodingTree, id: NodeId) -> Result<f64> {
    node_entropy(g, t, id).map(|n| n.assigned_se)
}

/// Assigned entropy of every live non-root node, indexed by node id slot.
#[derive(Debug, Clone)]
pub struct EntropyTable {
    values: Vec<Option<f64>>,
}

impl EntropyTable {
    pub fn new(g: &Graph, t: &EncodingTree) -> Result<Self> {
        check_alignment(g, t)?;
        let vol = g.volume();
        let mut inside = vec![false; g.vertex_count()];
        let mut volumes = vec![0.0; t.slot_count()];
        let mut cuts = vec![0.0; t.slot_count()];
        for id in t.node_ids() {
            let (c, v) = cut_and_volume(g, &t.node(id).vertices, &mut inside);
            cuts[id.0] = c;
            volumes[id.0] = v;
        }
        let values = (0..t.slot_count())
            .map(|i| {
                let node = t.get(NodeId(i))?;
                let p = node.parent?;
                Some(assigned_term(cuts[i], volumes[i], volumes[p.0], vol))
            })
            .collect();
        Ok(EntropyTable { values })
    }

    /// Panics for the root or a dead id.
    pub fn get(&self, id: NodeId) -> f64 {
        self.values[id.0].expect("non-root live node")
    }

    pub fn total(&self) -> f64 {
        self.values.iter().flatten().sum()
    }

    /// Sum of assigned entropies from `from` up to, but excluding, `stop`.
    /// `stop` must be a proper ancestor of `from`.
    pub fn path_sum(&self, t: &EncodingTree, from: NodeId, stop: NodeId) -> f64 {
        let mut sum = 0.0;
        let mut cur = from;
        while cur != stop {
            sum += self.get(cur);
            cur = t.node(cur).parent.expect("stop is an ancestor");
        }
        sum
    }
}

/// Sum of assigned entropies over all non-root nodes.
pub fn tree_entropy(g: &Graph, t: &EncodingTree) -> Result<f64> {
    Ok(EntropyTable::new(g, t)?.total())
}

/// Normalized structural probability of each vertex inside the root child
/// `center`: proportional to `exp(-sum of assigned entropies from the leaf up
/// to, excluding, center)`. Returned as `(vertex, probability)` sorted by
/// vertex.
pub fn structural_probability(g: &Graph, t: &EncodingTree, center: NodeId) -> Result<Vec<(usize, f64)>> {
    let table = EntropyTable::new(g, t)?;
    structural_probability_with(t, &table, center)
}

pub(crate) fn structural_probability_with(
    t: &EncodingTree,
    table: &EntropyTable,
    center: NodeId,
) -> Result<Vec<(usize, f64)>> {
    let node = t.try_node(center)?;
    if node.parent != Some(t.root()) {
        return Err(Error::domain(format!("node {center} is not a child of the root")));
    }
    let raw: Vec<(usize, f64)> = node
        .vertices
        .iter()
        .map(|&v| (v, (-table.path_sum(t, t.leaf(v), center)).exp()))
        .collect();
    let total: f64 = raw.iter().map(|r| r.1).sum();
    Ok(raw.into_iter().map(|(v, x)| (v, x / total)).collect())
}

/// Conditional structural entropy of leaf `j` given leaf `i`: the assigned
/// entropies on the path from `j` up to, excluding, their lowest common
/// ancestor.
pub fn conditional_entropy(g: &Graph, t: &EncodingTree, i: NodeId, j: NodeId) -> Result<f64> {
    let table = EntropyTable::new(g, t)?;
    conditional_entropy_with(t, &table, i, j)
}

pub(crate) fn conditional_entropy_with(t: &EncodingTree, table: &EntropyTable, i: NodeId, j: NodeId) -> Result<f64> {
    if i == j {
        return Err(Error::domain("conditional entropy needs two distinct leaves"));
    }
    for id in [i, j] {
        if !t.try_node(id)?.is_leaf() {
            return Err(Error::domain(format!("node {id} is not a leaf")));
        }
    }
    let delta = t.lowest_common_ancestor(i, j);
    Ok(table.path_sum(t, j, delta))
}
