//! Encoding trees: rooted hierarchical partitions of a graph's vertex set.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{to_stable_json, Header};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Sorted vertex indices covered by this node.
    pub vertices: Vec<usize>,
    pub height: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Nested description of a tree, used to build trees by hand and by the
/// exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub enum Nest {
    Leaf(usize),
    Node(Vec<Nest>),
}

/// Arena-backed encoding tree. Node ids are arena slots; removed nodes leave
/// holes so ids stay stable across optimizer operations.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingTree {
    nodes: Vec<Option<TreeNode>>,
    root: NodeId,
    leaf_of: Vec<NodeId>,
}

impl EncodingTree {
    /// Root with one singleton leaf per vertex. Leaf of vertex `v` has id `v`;
    /// the root has id `n`.
    pub fn flat(vertex_count: usize) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::invalid("encoding tree needs at least one vertex"));
        }
        let root = NodeId(vertex_count);
        let mut nodes: Vec<Option<TreeNode>> = (0..vertex_count)
            .map(|v| {
                Some(TreeNode {
                    parent: Some(root),
                    children: Vec::new(),
                    vertices: vec![v],
                    height: 0,
                })
            })
            .collect();
        nodes.push(Some(TreeNode {
            parent: None,
            children: (0..vertex_count).map(NodeId).collect(),
            vertices: (0..vertex_count).collect(),
            height: 1,
        }));
        Ok(EncodingTree {
            nodes,
            root,
            leaf_of: (0..vertex_count).map(NodeId).collect(),
        })
    }

    /// Builds a tree from a nested description. Leaves get ids `0..n` by
    /// vertex, internal nodes are numbered afterwards in preorder starting
    /// with the root.
    pub fn from_nest(vertex_count: usize, nest: &Nest) -> Result<Self> {
        let Nest::Node(_) = nest else {
            return Err(Error::invalid("root of a nested tree must be an internal node"));
        };
        let mut nodes: Vec<Option<TreeNode>> = vec![None; vertex_count];
        fn build(nest: &Nest, parent: Option<NodeId>, nodes: &mut Vec<Option<TreeNode>>, n: usize) -> Result<NodeId> {
            match nest {
                Nest::Leaf(v) => {
                    if *v >= n {
                        return Err(Error::Index { index: *v, count: n });
                    }
                    if nodes[*v].is_some() {
                        return Err(Error::invalid(format!("vertex {v} appears twice")));
                    }
                    nodes[*v] = Some(TreeNode {
                        parent,
                        children: Vec::new(),
                        vertices: vec![*v],
                        height: 0,
                    });
                    Ok(NodeId(*v))
                }
                Nest::Node(kids) => {
                    if kids.is_empty() {
                        return Err(Error::invalid("internal node without children"));
                    }
                    let id = NodeId(nodes.len());
                    nodes.push(None);
                    let children = kids
                        .iter()
                        .map(|k| build(k, Some(id), nodes, n))
                        .collect::<Result<Vec<_>>>()?;
                    let mut vertices: Vec<usize> = children
                        .iter()
                        .flat_map(|c| nodes[c.0].as_ref().unwrap().vertices.iter().copied())
                        .collect();
                    vertices.sort_unstable();
                    let height = 1 + children
                        .iter()
                        .map(|c| nodes[c.0].as_ref().unwrap().height)
                        .max()
                        .unwrap_or(0);
                    nodes[id.0] = Some(TreeNode {
                        parent,
                        children,
                        vertices,
                        height,
                    });
                    Ok(id)
                }
            }
        }
        let root = build(nest, None, &mut nodes, vertex_count)?;
        if let Some(v) = nodes[..vertex_count].iter().position(Option::is_none) {
            return Err(Error::invalid(format!("vertex {v} is not covered by the tree")));
        }
        let tree = EncodingTree {
            nodes,
            root,
            leaf_of: (0..vertex_count).map(NodeId).collect(),
        };
        tree.validate()?;
        Ok(tree)
    }

    /// Root → one node per cluster → singleton leaves.
    pub fn from_clusters(vertex_count: usize, clusters: &[Vec<usize>]) -> Result<Self> {
        let nest = Nest::Node(
            clusters
                .iter()
                .map(|c| Nest::Node(c.iter().map(|&v| Nest::Leaf(v)).collect()))
                .collect(),
        );
        EncodingTree::from_nest(vertex_count, &nest)
    }

    pub fn vertex_count(&self) -> usize {
        self.leaf_of.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn height(&self) -> usize {
        self.node(self.root).height
    }

    pub fn leaf(&self, vertex: usize) -> NodeId {
        self.leaf_of[vertex]
    }

    pub fn get(&self, id: NodeId) -> Option<&TreeNode> {
        self.nodes.get(id.0).and_then(Option::as_ref)
    }

    /// Panics on a dead or unknown id; use [`EncodingTree::get`] or
    /// [`EncodingTree::try_node`] for untrusted ids.
    pub fn node(&self, id: NodeId) -> &TreeNode {
        self.get(id).expect("live tree node")
    }

    pub fn try_node(&self, id: NodeId) -> Result<&TreeNode> {
        self.get(id)
            .ok_or_else(|| Error::domain(format!("no tree node with id {id}")))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.get(id).is_some()
    }

    /// Live node ids in ascending order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_some())
            .map(|(i, _)| NodeId(i))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_some()).count()
    }

    pub(crate) fn slot_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self, mut id: NodeId) -> usize {
        let mut d = 0;
        while let Some(p) = self.node(id).parent {
            d += 1;
            id = p;
        }
        d
    }

    /// Path from `id` up to and including the root.
    pub fn path_to_root(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.node(cur).parent {
            out.push(p);
            cur = p;
        }
        out
    }

    pub fn lowest_common_ancestor(&self, a: NodeId, b: NodeId) -> NodeId {
        let pa = self.path_to_root(a);
        let pb = self.path_to_root(b);
        let mut lca = self.root;
        for (x, y) in pa.iter().rev().zip(pb.iter().rev()) {
            if x != y {
                break;
            }
            lca = *x;
        }
        lca
    }

    /// Highest proper descendant-of-root ancestor of `vertex`'s leaf whose
    /// height is at most `level` (the leaf itself at level 0).
    pub fn ancestor_at_level(&self, vertex: usize, level: usize) -> NodeId {
        let mut cur = self.leaf(vertex);
        while let Some(p) = self.node(cur).parent {
            if p == self.root || self.node(p).height > level {
                break;
            }
            cur = p;
        }
        cur
    }

    /// Nodes (excluding the root) that are some vertex's level-`level`
    /// ancestor, in order of their smallest vertex.
    pub fn level_nodes(&self, level: usize) -> Vec<NodeId> {
        let mut seen = Vec::new();
        for v in 0..self.vertex_count() {
            let a = self.ancestor_at_level(v, level);
            if !seen.contains(&a) {
                seen.push(a);
            }
        }
        seen
    }

    /// Checks every encoding-tree invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertex_count();
        let root = self.try_node(self.root)?;
        if root.parent.is_some() {
            return Err(Error::invalid("root has a parent"));
        }
        if root.vertices != (0..n).collect::<Vec<_>>() {
            return Err(Error::invalid("root does not cover every vertex"));
        }
        let mut reached = 0;
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            reached += 1;
            let node = self.try_node(id)?;
            if node.is_leaf() {
                if node.vertices.len() != 1 {
                    return Err(Error::invalid(format!("leaf {id} is not a singleton")));
                }
                if node.height != 0 {
                    return Err(Error::invalid(format!("leaf {id} has height {}", node.height)));
                }
                if self.leaf_of[node.vertices[0]] != id {
                    return Err(Error::invalid(format!(
                        "leaf index for vertex {} is stale",
                        node.vertices[0]
                    )));
                }
                continue;
            }
            let mut union = Vec::with_capacity(node.vertices.len());
            let mut max_h = 0;
            for &c in &node.children {
                let child = self.try_node(c)?;
                if child.parent != Some(id) {
                    return Err(Error::invalid(format!("node {c} does not point back to parent {id}")));
                }
                union.extend_from_slice(&child.vertices);
                max_h = max_h.max(child.height);
                stack.push(c);
            }
            union.sort_unstable();
            if union.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("children of {id} overlap")));
            }
            if union != node.vertices {
                return Err(Error::invalid(format!("children of {id} do not partition it")));
            }
            if node.height != max_h + 1 {
                return Err(Error::invalid(format!("node {id} has stale height")));
            }
        }
        if reached != self.node_count() {
            return Err(Error::invalid("tree has unreachable nodes"));
        }
        Ok(())
    }

    // --- crate-internal mutation used by the optimizer ---

    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut TreeNode {
        self.nodes[id.0].as_mut().expect("live tree node")
    }

    pub(crate) fn push_node(&mut self, node: TreeNode) -> NodeId {
        self.nodes.push(Some(node));
        NodeId(self.nodes.len() - 1)
    }

    pub(crate) fn remove_node(&mut self, id: NodeId) -> TreeNode {
        self.nodes[id.0].take().expect("live tree node")
    }

    /// Recomputes heights from `id` upwards, stopping once nothing changes.
    pub(crate) fn refresh_heights_from(&mut self, id: NodeId) {
        let mut cur = Some(id);
        while let Some(c) = cur {
            let h = {
                let node = self.node(c);
                if node.is_leaf() {
                    0
                } else {
                    1 + node.children.iter().map(|&k| self.node(k).height).max().unwrap_or(0)
                }
            };
            let node = self.node_mut(c);
            if node.height == h && c != id {
                break;
            }
            node.height = h;
            cur = node.parent;
        }
    }

    // --- JSON file format ---

    pub fn to_file(&self, labels: &[String]) -> TreeFile {
        TreeFile {
            header: None,
            root: self.root,
            nodes: self
                .node_ids()
                .map(|id| {
                    let n = self.node(id);
                    TreeFileNode {
                        id,
                        parent: n.parent,
                        children: n.children.clone(),
                        vertices: n.vertices.iter().map(|&v| labels[v].clone()).collect(),
                        height: n.height,
                    }
                })
                .collect(),
        }
    }

    pub fn to_json(&self, labels: &[String], header: Option<Header>) -> Result<String> {
        let mut file = self.to_file(labels);
        file.header = header;
        to_stable_json(&file)
    }

    /// Rebuilds a tree from its file form, resolving vertex labels against
    /// `labels` (the graph's vertex labels).
    pub fn from_file(file: &TreeFile, labels: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let slots = file.nodes.iter().map(|n| n.id.0 + 1).max().unwrap_or(0);
        let mut nodes: Vec<Option<TreeNode>> = vec![None; slots];
        let mut leaf_of = vec![None; labels.len()];
        for n in &file.nodes {
            if nodes[n.id.0].is_some() {
                return Err(Error::invalid(format!("duplicate node id {}", n.id)));
            }
            let mut vertices = n
                .vertices
                .iter()
                .map(|l| {
                    index
                        .get(l.as_str())
                        .copied()
                        .ok_or_else(|| Error::invalid(format!("unknown vertex label {l:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            vertices.sort_unstable();
            if n.children.is_empty() {
                if vertices.len() != 1 {
                    return Err(Error::invalid(format!("leaf {} is not a singleton", n.id)));
                }
                leaf_of[vertices[0]] = Some(n.id);
            }
            nodes[n.id.0] = Some(TreeNode {
                parent: n.parent,
                children: n.children.clone(),
                vertices,
                height: n.height,
            });
        }
        let leaf_of = leaf_of
            .into_iter()
            .enumerate()
            .map(|(v, l)| l.ok_or_else(|| Error::invalid(format!("vertex {:?} has no leaf", labels[v]))))
            .collect::<Result<Vec<_>>>()?;
        if file.root.0 >= slots {
            return Err(Error::invalid("root id not present"));
        }
        let tree = EncodingTree {
            nodes,
            root: file.root,
            leaf_of,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn read_json(path: &Path, labels: &[String]) -> Result<Self> {
        let text = Error::read_file(path)?;
        let file: TreeFile = serde_json::from_str(&text)?;
        EncodingTree::from_file(&file, labels)
    }

    /// Cluster membership of each root child, by node id.
    pub fn root_partition(&self) -> BTreeMap<NodeId, Vec<usize>> {
        self.node(self.root)
            .children
            .iter()
            .map(|&c| (c, self.node(c).vertices.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFile {
    #[serde(default, skip_serializing_if = "Option::is_none", skip_deserializing)]
    pub header: Option<Header>,
    pub nodes: Vec<TreeFileNode>,
    pub root: NodeId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFileNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub vertices: Vec<String>,
    pub height: usize,
}
