//! Greedy structural-entropy minimization over encoding trees with the merge
//! and combine operators, plus an exhaustive optimum for small graphs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::entropy::{assigned_term, tree_entropy};
use crate::error::{Error, Result};
use crate::format::fmt6;
use crate::graph::Graph;
use crate::tree::{EncodingTree, Nest, NodeId, TreeNode};

/// Operators are applied only when they lower the entropy by more than this.
pub const MIN_IMPROVEMENT: f64 = 1e-10;
/// Relative width of the band in which candidate deltas count as tied.
const TIE_TOLERANCE: f64 = 1e-12;
/// Largest graph accepted by [`brute_force_optimum`].
pub const BRUTE_FORCE_MAX_VERTICES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptimizeConfig {
    /// Maximal encoding-tree height K.
    pub k_cap: usize,
    /// Safety bound on applied operators; `None` means `10 * n^2`.
    pub max_iterations: Option<usize>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            k_cap: 3,
            max_iterations: None,
        }
    }
}

impl OptimizeConfig {
    pub fn with_k_cap(k_cap: usize) -> Self {
        OptimizeConfig {
            k_cap,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Merge,
    Combine,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::Merge => "merge",
            OperatorKind::Combine => "combine",
        })
    }
}

/// One applied operator. `delta` is entropy before minus entropy after.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaSe {
    pub kind: OperatorKind,
    pub beta1: NodeId,
    pub beta2: NodeId,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub initial_tree: EncodingTree,
    pub tree: EncodingTree,
    pub initial_entropy: f64,
    pub final_entropy: f64,
    pub log: Vec<DeltaSe>,
}

impl OptimizeOutcome {
    /// `step,kind,beta1,beta2,delta` CSV of the applied operators.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("step,kind,beta1,beta2,delta\n");
        for (i, op) in self.log.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                op.kind,
                op.beta1,
                op.beta2,
                fmt6(op.delta)
            ));
        }
        out
    }
}

pub fn init_flat_tree(g: &Graph) -> Result<EncodingTree> {
    EncodingTree::flat(g.vertex_count())
}

fn check_siblings(t: &EncodingTree, b1: NodeId, b2: NodeId) -> Result<NodeId> {
    if b1 == b2 {
        return Err(Error::domain("operator needs two distinct nodes"));
    }
    let p1 = t.try_node(b1)?.parent;
    let p2 = t.try_node(b2)?.parent;
    match (p1, p2) {
        (Some(a), Some(b)) if a == b => Ok(a),
        _ => Err(Error::domain(format!("nodes {b1} and {b2} are not siblings"))),
    }
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_unstable();
    out
}

fn apply_merge(t: &mut EncodingTree, b1: NodeId, b2: NodeId) {
    let parent = t.node(b1).parent.expect("sibling has a parent");
    let removed = t.remove_node(b2);
    for &c in &removed.children {
        t.node_mut(c).parent = Some(b1);
    }
    {
        let node = t.node_mut(b1);
        node.children.extend_from_slice(&removed.children);
        node.vertices = union_sorted(&node.vertices, &removed.vertices);
        node.height = node.height.max(removed.height);
    }
    t.node_mut(parent).children.retain(|&c| c != b2);
    t.refresh_heights_from(b1);
}

fn apply_combine(t: &mut EncodingTree, b1: NodeId, b2: NodeId) -> NodeId {
    let parent = t.node(b1).parent.expect("sibling has a parent");
    let (n1, n2) = (t.node(b1), t.node(b2));
    let node = TreeNode {
        parent: Some(parent),
        children: vec![b1, b2],
        vertices: union_sorted(&n1.vertices, &n2.vertices),
        height: n1.height.max(n2.height) + 1,
    };
    let beta = t.push_node(node);
    t.node_mut(b1).parent = Some(beta);
    t.node_mut(b2).parent = Some(beta);
    let children = &mut t.node_mut(parent).children;
    let pos = children.iter().position(|&c| c == b1).expect("b1 under parent");
    children[pos] = beta;
    children.retain(|&c| c != b2);
    t.refresh_heights_from(beta);
    beta
}

/// Fuses two non-leaf siblings into one node (id `b1`) whose children are
/// `b1`'s followed by `b2`'s.
pub fn merge(t: &EncodingTree, b1: NodeId, b2: NodeId) -> Result<EncodingTree> {
    check_siblings(t, b1, b2)?;
    if t.node(b1).is_leaf() || t.node(b2).is_leaf() {
        return Err(Error::domain("merge operands must be non-leaf nodes"));
    }
    let mut out = t.clone();
    apply_merge(&mut out, b1, b2);
    Ok(out)
}

fn combined_root_height(t: &EncodingTree, b1: NodeId, b2: NodeId) -> usize {
    let parent = t.node(b1).parent.expect("sibling has a parent");
    let sub = t.node(b1).height.max(t.node(b2).height) + 1;
    t.height().max(t.depth(parent) + 1 + sub)
}

/// Inserts a new node (fresh id, at `b1`'s position) with exactly `b1` and
/// `b2` as children.
pub fn combine(t: &EncodingTree, b1: NodeId, b2: NodeId, k_cap: usize) -> Result<EncodingTree> {
    check_siblings(t, b1, b2)?;
    let height = combined_root_height(t, b1, b2);
    if height > k_cap {
        return Err(Error::HeightCap { height, cap: k_cap });
    }
    let mut out = t.clone();
    apply_combine(&mut out, b1, b2);
    Ok(out)
}

/// Incremental bookkeeping for Algorithm-style greedy descent.
struct State<'g> {
    g: &'g Graph,
    tree: EncodingTree,
    vol: f64,
    volume: Vec<f64>,
    cut: Vec<f64>,
    /// Sum of the children's cuts.
    child_cut: Vec<f64>,
    /// Edge weight between each node and each of its siblings.
    adj: Vec<BTreeMap<NodeId, f64>>,
    owner: Vec<Option<NodeId>>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    a: NodeId,
    b: NodeId,
    delta: f64,
}

impl<'g> State<'g> {
    fn new(g: &'g Graph, tree: EncodingTree) -> Self {
        let slots = tree.slot_count();
        let mut s = State {
            g,
            vol: g.volume(),
            volume: vec![0.0; slots],
            cut: vec![0.0; slots],
            child_cut: vec![0.0; slots],
            adj: vec![BTreeMap::new(); slots],
            owner: vec![None; g.vertex_count()],
            tree,
        };
        let ids: Vec<NodeId> = s.tree.node_ids().collect();
        for &id in &ids {
            let (c, v) = s.cut_and_volume(id);
            s.cut[id.0] = c;
            s.volume[id.0] = v;
        }
        for &id in &ids {
            s.child_cut[id.0] = s.tree.node(id).children.iter().map(|c| s.cut[c.0]).sum();
        }
        for &(u, v, w) in g.edges() {
            let (lu, lv) = (s.tree.leaf(u), s.tree.leaf(v));
            let lca = s.tree.lowest_common_ancestor(lu, lv);
            let a = s.child_toward(lca, lu);
            let b = s.child_toward(lca, lv);
            *s.adj[a.0].entry(b).or_default() += w;
            *s.adj[b.0].entry(a).or_default() += w;
        }
        s
    }

    fn cut_and_volume(&self, id: NodeId) -> (f64, f64) {
        let verts = &self.tree.node(id).vertices;
        let mut inside = vec![false; self.g.vertex_count()];
        for &v in verts {
            inside[v] = true;
        }
        let mut cut = 0.0;
        let mut vol = 0.0;
        for &v in verts {
            vol += self.g.degrees()[v];
            cut += self
                .g
                .neighbors(v)
                .iter()
                .filter(|(u, _)| !inside[*u])
                .map(|(_, w)| w)
                .sum::<f64>();
        }
        (cut, vol)
    }

    fn child_toward(&self, ancestor: NodeId, mut node: NodeId) -> NodeId {
        loop {
            let p = self.tree.node(node).parent.expect("ancestor above node");
            if p == ancestor {
                return node;
            }
            node = p;
        }
    }

    fn term(&self, g: f64, v: f64, vp: f64) -> f64 {
        assigned_term(g, v, vp, self.vol)
    }

    fn merge_delta(&self, a: NodeId, b: NodeId, w: f64) -> f64 {
        let p = self.tree.node(a).parent.expect("sibling");
        let vp = self.volume[p.0];
        let (v1, v2) = (self.volume[a.0], self.volume[b.0]);
        let (g1, g2) = (self.cut[a.0], self.cut[b.0]);
        let vb = v1 + v2;
        let gb = (g1 + g2 - 2.0 * w).max(0.0);
        let mut delta = self.term(g1, v1, vp) + self.term(g2, v2, vp) - self.term(gb, vb, vp);
        for (gc, vi) in [(self.child_cut[a.0], v1), (self.child_cut[b.0], v2)] {
            if gc > 0.0 && vi > 0.0 {
                delta += gc / self.vol * (vi / vb).log2();
            }
        }
        delta
    }

    fn combine_delta(&self, a: NodeId, b: NodeId, w: f64) -> f64 {
        let p = self.tree.node(a).parent.expect("sibling");
        let vp = self.volume[p.0];
        let (v1, v2) = (self.volume[a.0], self.volume[b.0]);
        let (g1, g2) = (self.cut[a.0], self.cut[b.0]);
        let vb = v1 + v2;
        let gb = (g1 + g2 - 2.0 * w).max(0.0);
        self.term(g1, v1, vp) + self.term(g2, v2, vp)
            - self.term(gb, vb, vp)
            - self.term(g1, v1, vb)
            - self.term(g2, v2, vb)
    }

    /// Sibling pairs joined by at least one edge, `a < b`. Pairs without a
    /// connecting edge never lower the entropy under either operator.
    fn adjacent_pairs(&self) -> Vec<(NodeId, NodeId, f64)> {
        let mut out = Vec::new();
        for a in self.tree.node_ids() {
            for (&b, &w) in self.adj[a.0].range(NodeId(a.0 + 1)..) {
                out.push((a, b, w));
            }
        }
        out
    }

    fn pick(candidates: &[Candidate]) -> Option<Candidate> {
        let best = candidates.iter().map(|c| c.delta).fold(f64::NEG_INFINITY, f64::max);
        if best <= MIN_IMPROVEMENT {
            return None;
        }
        let band = TIE_TOLERANCE * best.abs().max(1.0);
        candidates
            .iter()
            .filter(|c| c.delta >= best - band)
            .min_by_key(|c| (c.a, c.b))
            .copied()
    }

    fn best_merge(&self) -> Option<Candidate> {
        let cands: Vec<Candidate> = self
            .adjacent_pairs()
            .into_iter()
            .filter(|(a, b, _)| !self.tree.node(*a).is_leaf() && !self.tree.node(*b).is_leaf())
            .map(|(a, b, w)| Candidate {
                a,
                b,
                delta: self.merge_delta(a, b, w),
            })
            .collect();
        Self::pick(&cands)
    }

    fn best_combine(&self, k_cap: usize) -> Option<Candidate> {
        let mut depth: HashMap<NodeId, usize> = HashMap::new();
        let mut stack = vec![(self.tree.root(), 0usize)];
        while let Some((id, d)) = stack.pop() {
            depth.insert(id, d);
            for &c in &self.tree.node(id).children {
                if !self.tree.node(c).is_leaf() {
                    stack.push((c, d + 1));
                }
            }
        }
        let cands: Vec<Candidate> = self
            .adjacent_pairs()
            .into_iter()
            .filter(|(a, b, _)| {
                let p = self.tree.node(*a).parent.expect("sibling");
                let sub = self.tree.node(*a).height.max(self.tree.node(*b).height) + 1;
                depth[&p] + 1 + sub <= k_cap
            })
            .map(|(a, b, w)| Candidate {
                a,
                b,
                delta: self.combine_delta(a, b, w),
            })
            .collect();
        Self::pick(&cands)
    }

    /// Edge weight between children of `x` and children of `y` (both under
    /// the same node after a merge), keyed by child pair.
    fn cross_child_weights(&mut self, x: NodeId, y: NodeId) -> Vec<(NodeId, NodeId, f64)> {
        for &c in &self.tree.node(x).children.clone() {
            for &v in &self.tree.node(c).vertices {
                self.owner[v] = Some(c);
            }
        }
        let mut acc: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
        for &d in &self.tree.node(y).children {
            for &u in &self.tree.node(d).vertices {
                for &(v, w) in self.g.neighbors(u) {
                    if let Some(c) = self.owner[v] {
                        *acc.entry((c, d)).or_default() += w;
                    }
                }
            }
        }
        for &c in &self.tree.node(x).children {
            for &v in &self.tree.node(c).vertices {
                self.owner[v] = None;
            }
        }
        acc.into_iter().map(|((c, d), w)| (c, d, w)).collect()
    }

    fn reroute_sibling_links(&mut self, from: &[NodeId], to: NodeId) {
        let mut links: BTreeMap<NodeId, f64> = BTreeMap::new();
        for &f in from {
            for (s, w) in std::mem::take(&mut self.adj[f.0]) {
                if !from.contains(&s) {
                    *links.entry(s).or_default() += w;
                }
            }
        }
        for (&s, &w) in &links {
            for f in from {
                self.adj[s.0].remove(f);
            }
            *self.adj[s.0].entry(to).or_default() += w;
        }
        self.adj[to.0] = links;
    }

    fn do_merge(&mut self, a: NodeId, b: NodeId) {
        let p = self.tree.node(a).parent.expect("sibling");
        let w = self.adj[a.0].get(&b).copied().unwrap_or(0.0);
        let cross = self.cross_child_weights(a, b);
        for (c, d, x) in cross {
            *self.adj[c.0].entry(d).or_default() += x;
            *self.adj[d.0].entry(c).or_default() += x;
        }
        let gb = (self.cut[a.0] + self.cut[b.0] - 2.0 * w).max(0.0);
        self.child_cut[p.0] += gb - self.cut[a.0] - self.cut[b.0];
        self.volume[a.0] += self.volume[b.0];
        self.cut[a.0] = gb;
        self.child_cut[a.0] += self.child_cut[b.0];
        self.reroute_sibling_links(&[a, b], a);
        apply_merge(&mut self.tree, a, b);
    }

    fn do_combine(&mut self, a: NodeId, b: NodeId) {
        let p = self.tree.node(a).parent.expect("sibling");
        let w = self.adj[a.0].get(&b).copied().unwrap_or(0.0);
        let beta = apply_combine(&mut self.tree, a, b);
        debug_assert_eq!(beta.0, self.volume.len());
        let gb = (self.cut[a.0] + self.cut[b.0] - 2.0 * w).max(0.0);
        self.volume.push(self.volume[a.0] + self.volume[b.0]);
        self.cut.push(gb);
        self.child_cut.push(self.cut[a.0] + self.cut[b.0]);
        self.adj.push(BTreeMap::new());
        self.child_cut[p.0] += gb - self.cut[a.0] - self.cut[b.0];
        self.reroute_sibling_links(&[a, b], beta);
        if w > 0.0 {
            self.adj[a.0].insert(b, w);
            self.adj[b.0].insert(a, w);
        }
    }
}

/// Initial tree: flat for connected graphs, otherwise root → one node per
/// multi-vertex component → leaves (isolated vertices hang off the root).
fn initial_tree(g: &Graph) -> Result<EncodingTree> {
    let comps = g.components();
    if comps.len() <= 1 {
        return EncodingTree::flat(g.vertex_count());
    }
    let nest = Nest::Node(
        comps
            .iter()
            .map(|c| match c.as_slice() {
                [v] => Nest::Leaf(*v),
                _ => Nest::Node(c.iter().map(|&v| Nest::Leaf(v)).collect()),
            })
            .collect(),
    );
    EncodingTree::from_nest(g.vertex_count(), &nest)
}

/// Greedy descent: apply the best entropy-lowering merge if any, otherwise the
/// best combine within the height cap, restarting after every operator; stop
/// when neither improves. Ties go to the lexicographically smallest pair.
pub fn optimize(g: &Graph, cfg: &OptimizeConfig) -> Result<OptimizeOutcome> {
    if cfg.k_cap < 2 {
        return Err(Error::domain(format!("k_cap must be at least 2, got {}", cfg.k_cap)));
    }
    let n = g.vertex_count();
    let tree = initial_tree(g)?;
    let initial_entropy = tree_entropy(g, &tree)?;
    let max_iter = cfg.max_iterations.unwrap_or(10 * n * n).max(1);
    let mut state = State::new(g, tree.clone());
    let mut log = Vec::new();
    let mut current = initial_entropy;
    loop {
        if log.len() >= max_iter {
            return Err(Error::Internal(format!("optimizer exceeded {max_iter} iterations")));
        }
        if let Some(c) = state.best_merge() {
            state.do_merge(c.a, c.b);
            log.push(DeltaSe {
                kind: OperatorKind::Merge,
                beta1: c.a,
                beta2: c.b,
                delta: c.delta,
            });
            current -= c.delta;
            continue;
        }
        match state.best_combine(cfg.k_cap) {
            Some(c) => {
                state.do_combine(c.a, c.b);
                log.push(DeltaSe {
                    kind: OperatorKind::Combine,
                    beta1: c.a,
                    beta2: c.b,
                    delta: c.delta,
                });
                current -= c.delta;
            }
            None => break,
        }
    }
    let tree = state.tree;
    let final_entropy = tree_entropy(g, &tree)?;
    debug_assert!((final_entropy - current).abs() < 1e-6);
    Ok(OptimizeOutcome {
        initial_tree: initial_tree(g)?,
        tree,
        initial_entropy,
        final_entropy,
        log,
    })
}

/// Exhaustive minimum of the tree entropy over all encoding trees of height at
/// most `k_cap`. Single-child chains never change the entropy, so only trees
/// whose internal nodes have at least two children are enumerated.
pub fn brute_force_optimum(g: &Graph, k_cap: usize) -> Result<(EncodingTree, f64)> {
    let n = g.vertex_count();
    if n > BRUTE_FORCE_MAX_VERTICES {
        return Err(Error::domain(format!(
            "exhaustive search supports at most {BRUTE_FORCE_MAX_VERTICES} vertices, got {n}"
        )));
    }
    if k_cap == 0 {
        return Err(Error::domain("k_cap must be positive"));
    }
    if n == 1 {
        let t = EncodingTree::flat(1)?;
        let h = tree_entropy(g, &t)?;
        return Ok((t, h));
    }
    let full = (1u32 << n) - 1;
    let vol = g.volume();
    let mut volume = vec![0.0; 1 << n];
    let mut cut = vec![0.0; 1 << n];
    for mask in 1..=full {
        for v in 0..n {
            if mask & (1 << v) != 0 {
                volume[mask as usize] += g.degrees()[v];
            }
        }
        for &(u, v, w) in g.edges() {
            if ((mask >> u) & 1) != ((mask >> v) & 1) {
                cut[mask as usize] += w;
            }
        }
    }
    let mut search = Exhaustive {
        vol,
        volume,
        cut,
        memo: HashMap::new(),
    };
    let (value, nest) = search.inner(full, k_cap);
    let nest = nest.ok_or_else(|| Error::Internal("no encoding tree found".into()))?;
    let tree = EncodingTree::from_nest(n, &nest)?;
    let h = tree_entropy(g, &tree)?;
    debug_assert!((h - value).abs() < 1e-9);
    Ok((tree, h))
}

struct Exhaustive {
    vol: f64,
    volume: Vec<f64>,
    cut: Vec<f64>,
    memo: HashMap<(u32, usize), (f64, Option<Nest>)>,
}

impl Exhaustive {
    fn term(&self, block: u32, parent: u32) -> f64 {
        assigned_term(
            self.cut[block as usize],
            self.volume[block as usize],
            self.volume[parent as usize],
            self.vol,
        )
    }

    /// Best subtree below a node covering `set` (|set| >= 2) with height at
    /// most `budget`.
    fn inner(&mut self, set: u32, budget: usize) -> (f64, Option<Nest>) {
        if let Some(hit) = self.memo.get(&(set, budget)) {
            return hit.clone();
        }
        let mut part_memo: HashMap<u32, (f64, Vec<u32>)> = HashMap::new();
        let (value, blocks) = self.partition(set, set, budget, &mut part_memo);
        let result = if value.is_finite() {
            let kids = blocks
                .iter()
                .map(|&b| {
                    if b.count_ones() == 1 {
                        Nest::Leaf(b.trailing_zeros() as usize)
                    } else {
                        self.inner(b, budget - 1).1.expect("feasible block")
                    }
                })
                .collect();
            (value, Some(Nest::Node(kids)))
        } else {
            (f64::INFINITY, None)
        };
        self.memo.insert((set, budget), result.clone());
        result
    }

    fn partition(
        &mut self,
        rest: u32,
        set: u32,
        budget: usize,
        memo: &mut HashMap<u32, (f64, Vec<u32>)>,
    ) -> (f64, Vec<u32>) {
        if rest == 0 {
            return (0.0, Vec::new());
        }
        if let Some(hit) = memo.get(&rest) {
            return hit.clone();
        }
        let low = rest & rest.wrapping_neg();
        let others = rest & !low;
        let mut best = (f64::INFINITY, Vec::new());
        // every subset of `others`, joined with the lowest element
        let mut sub = others;
        loop {
            let block = sub | low;
            if block != set {
                let block_cost = if block.count_ones() == 1 {
                    Some(self.term(block, set))
                } else if budget >= 2 {
                    let (inner, _) = self.inner(block, budget - 1);
                    inner.is_finite().then(|| self.term(block, set) + inner)
                } else {
                    None
                };
                if let Some(cost) = block_cost {
                    let (tail, mut blocks) = self.partition(rest & !block, set, budget, memo);
                    let total = cost + tail;
                    if total < best.0 {
                        blocks.insert(0, block);
                        best = (total, blocks);
                    }
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & others;
        }
        memo.insert(rest, best.clone());
        best
    }
}
