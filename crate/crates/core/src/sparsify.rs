//! k-NN sparsification with k chosen by one-dimensional entropy minimization.

use std::collections::BTreeSet;

use crate::entropy::one_dim_entropy;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Largest k tried by [`sparsify`], further capped by `n - 1`.
pub const MAX_K: usize = 32;

#[derive(Debug, Clone)]
pub struct SparsifyResult {
    pub k_star: usize,
    pub graph: Graph,
    /// `(k, H1(G_k))` for every k that left no vertex isolated.
    pub entropy_curve: Vec<(usize, f64)>,
}

impl SparsifyResult {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("k,entropy\n");
        for (k, h) in &self.entropy_curve {
            out.push_str(&format!("{k},{}\n", crate::format::fmt6(*h)));
        }
        out
    }
}

/// Keeps edge `(u, v)` iff it is among the `k` heaviest edges of `u` or of
/// `v`. Ties rank the smaller neighbor index first.
pub fn knn_graph(g: &Graph, k: usize) -> Result<Graph> {
    let n = g.vertex_count();
    if k == 0 || k + 1 > n {
        return Err(Error::domain(format!("k = {k} outside 1..={}", n.saturating_sub(1))));
    }
    let mut keep = BTreeSet::new();
    let mut ranked: Vec<(usize, f64)> = Vec::new();
    for u in 0..n {
        ranked.clear();
        ranked.extend_from_slice(g.neighbors(u));
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(v, _) in ranked.iter().take(k) {
            keep.insert((u.min(v), u.max(v)));
        }
    }
    let edges = keep
        .into_iter()
        .map(|(u, v)| (u, v, g.weight(u, v).expect("edge exists")));
    Graph::new(g.labels().to_vec(), edges)
}

/// Sweeps k over `1..=min(n - 1, MAX_K)` and keeps the k-NN graph with minimum
/// one-dimensional entropy (smallest k on ties).
pub fn sparsify(g: &Graph) -> Result<SparsifyResult> {
    let n = g.vertex_count();
    if n < 2 {
        return Err(Error::invalid("sparsification needs at least two vertices"));
    }
    let k_max = (n - 1).min(MAX_K);
    let mut curve = Vec::with_capacity(k_max);
    let mut best: Option<(usize, f64, Graph)> = None;
    for k in 1..=k_max {
        let gk = knn_graph(g, k)?;
        if gk.degrees().iter().any(|&d| d <= 0.0) {
            continue;
        }
        let h = one_dim_entropy(&gk)?;
        curve.push((k, h));
        if best.as_ref().is_none_or(|b| h < b.1) {
            best = Some((k, h, gk));
        }
    }
    let (k_star, _, graph) = best.ok_or_else(|| Error::invalid("every k-NN candidate leaves an isolated vertex"))?;
    Ok(SparsifyResult {
        k_star,
        graph,
        entropy_curve: curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn complete(n: usize, w: impl Fn(usize, usize) -> f64) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v, w(u, v)));
            }
        }
        Graph::with_vertex_count(n, edges).unwrap()
    }

    #[test]
    fn knn_full_k_is_identity() {
        let g = complete(5, |u, v| 0.1 + (u * 7 + v) as f64 / 50.0);
        assert_eq!(knn_graph(&g, 4).unwrap(), g);
    }

    #[test]
    fn knn_path_unchanged() {
        let g = Graph::with_vertex_count(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        assert_eq!(knn_graph(&g, 1).unwrap(), g);
    }

    #[test]
    fn knn_union_symmetrization() {
        let g = Graph::with_vertex_count(3, [(0, 1, 0.9), (0, 2, 0.5), (1, 2, 0.1)]).unwrap();
        let k1 = knn_graph(&g, 1).unwrap();
        assert_eq!(k1.edges(), &[(0, 1, 0.9), (0, 2, 0.5)]);
    }

    #[test]
    fn knn_rejects_bad_k() {
        let g = complete(3, |_, _| 1.0);
        assert!(matches!(knn_graph(&g, 0), Err(Error::Domain(_))));
        assert!(matches!(knn_graph(&g, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn two_vertices() {
        let g = Graph::with_vertex_count(2, [(0, 1, 0.3)]).unwrap();
        let r = sparsify(&g).unwrap();
        assert_eq!(r.k_star, 1);
        assert_eq!(r.graph, g);
        assert_eq!(r.entropy_curve.len(), 1);
    }

    #[test]
    fn uniform_complete_prefers_k1_star() {
        let g = complete(5, |_, _| 1.0);
        let r = sparsify(&g).unwrap();
        assert_eq!(r.k_star, 1);
        // smallest-index tie-break makes k=1 a star centered on vertex 0
        assert_eq!(r.graph.edge_count(), 4);
        assert_eq!(r.graph.degree(0).unwrap(), 4.0);
        let (_, h_full) = *r.entropy_curve.last().unwrap();
        assert_abs_diff_eq!(h_full, 5f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn two_cliques_curve() {
        // intra 0.9 within {0,1,2} and {3,4,5}, 0.1 across. Curve frozen from an
        // independent brute-force evaluation (enumerate top-k lists, then H1).
        let g = complete(6, |u, v| if (u < 3) == (v < 3) { 0.9 } else { 0.1 });
        let r = sparsify(&g).unwrap();
        let expected = [
            2.4999999999999996,
            2.584962500721156,
            2.583322517341329,
            2.5845851224117915,
            2.5849625007211565,
        ];
        assert_eq!(r.entropy_curve.len(), expected.len());
        for ((k, h), e) in r.entropy_curve.iter().zip(expected) {
            assert_abs_diff_eq!(*h, e, epsilon = 1e-12,);
            assert!(*k >= 1);
        }
        assert_eq!(r.k_star, 1);
        assert_eq!(r.graph.components(), vec![vec![0, 1, 2], vec![3, 4, 5]]);
    }

    #[test]
    fn isolated_candidates_are_skipped() {
        // vertex 2 only connects to 0 with the weakest weight; with k=1 the
        // union rule still keeps it (it is 2's own top edge).
        let g = Graph::with_vertex_count(3, [(0, 1, 1.0), (0, 2, 0.1)]).unwrap();
        let r = sparsify(&g).unwrap();
        assert!(r.graph.degrees().iter().all(|&d| d > 0.0));
        // a vertex with no edges at all makes every candidate invalid
        let g = Graph::with_vertex_count(3, [(0, 1, 1.0)]).unwrap();
        assert!(matches!(sparsify(&g), Err(Error::InvalidInput(_))));
    }
}
