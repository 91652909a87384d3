//! Weighted undirected graphs over state vertices and the embedding sets they
//! are built from.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::fmt6;

/// Edges whose absolute cosine similarity is at or below this floor are
/// dropped when building similarity graphs.
pub const EDGE_WEIGHT_FLOOR: f64 = 1e-9;

/// Weighted undirected simple graph with dense `0..n` vertex indices.
///
/// Edges are stored once with `u < v`, sorted lexicographically. Degrees are
/// cached at construction; the graph is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    labels: Vec<String>,
    edges: Vec<(usize, usize, f64)>,
    adjacency: Vec<Vec<(usize, f64)>>,
    degrees: Vec<f64>,
}

impl Graph {
    pub fn new(labels: Vec<String>, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("graph must have at least one vertex"));
        }
        let mut seen: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (u, v, w) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::Index { index: x, count: n });
                }
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop on vertex {u}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(format!("edge ({u}, {v}) has non-positive weight {w}")));
            }
            let key = (u.min(v), u.max(v));
            if seen.insert(key, w).is_some() {
                return Err(Error::invalid(format!("duplicate edge ({}, {})", key.0, key.1)));
            }
        }
        let edges: Vec<_> = seen.into_iter().map(|((u, v), w)| (u, v, w)).collect();
        let mut adjacency = vec![Vec::new(); n];
        let mut degrees = vec![0.0; n];
        for &(u, v, w) in &edges {
            adjacency[u].push((v, w));
            adjacency[v].push((u, w));
            degrees[u] += w;
            degrees[v] += w;
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        Ok(Graph {
            labels,
            edges,
            adjacency,
            degrees,
        })
    }

    /// Graph whose labels are the decimal vertex indices.
    pub fn with_vertex_count(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        Graph::new((0..n).map(|i| i.to_string()).collect(), edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        self.adjacency
            .get(u)?
            .binary_search_by_key(&v, |&(x, _)| x)
            .ok()
            .map(|i| self.adjacency[u][i].1)
    }

    pub fn degree(&self, v: usize) -> Result<f64> {
        self.degrees.get(v).copied().ok_or(Error::Index {
            index: v,
            count: self.vertex_count(),
        })
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn volume(&self) -> f64 {
        self.degrees.iter().sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }

    /// Same graph with every edge weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Graph::new(
            self.labels.clone(),
            self.edges.iter().map(|&(u, v, w)| (u, v, w * factor)),
        )
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.vertex_count();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Subgraph induced by `vertices` (re-indexed in the given order).
    pub fn induced(&self, vertices: &[usize]) -> Result<Self> {
        let mut index = HashMap::with_capacity(vertices.len());
        for (i, &v) in vertices.iter().enumerate() {
            if v >= self.vertex_count() {
                return Err(Error::Index {
                    index: v,
                    count: self.vertex_count(),
                });
            }
            index.insert(v, i);
        }
        let labels = vertices.iter().map(|&v| self.labels[v].clone()).collect();
        let edges = self.edges.iter().filter_map(|&(u, v, w)| {
            let (a, b) = (index.get(&u)?, index.get(&v)?);
            Some((*a, *b, w))
        });
        Graph::new(labels, edges)
    }

    /// Serializes as the tab-separated edge-list format.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(u, v, w) in &self.edges {
            let _ = writeln!(out, "{}\t{}\t{}", self.labels[u], self.labels[v], fmt6(w));
        }
        out
    }

    /// Parses the edge-list format: `<label_u>\t<label_v>\t<weight>` per line,
    /// `#` comments and blank lines ignored. Vertices are indexed in order of
    /// first appearance.
    pub fn parse_edge_list(text: &str, source: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut labels: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut seen = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(
                    lineno,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let weight: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("invalid weight {:?}", fields[2])))?;
            if !(weight.is_finite() && weight > 0.0) {
                return Err(parse_err(lineno, format!("weight must be positive, got {weight}")));
            }
            let mut ids = [0usize; 2];
            for (slot, name) in ids.iter_mut().zip(&fields[..2]) {
                let name = name.trim();
                if name.is_empty() {
                    return Err(parse_err(lineno, "empty vertex label".into()));
                }
                *slot = *index.entry(name.to_string()).or_insert_with(|| {
                    labels.push(name.to_string());
                    labels.len() - 1
                });
            }
            if ids[0] == ids[1] {
                return Err(parse_err(lineno, format!("self-loop on {:?}", fields[0])));
            }
            let key = (ids[0].min(ids[1]), ids[0].max(ids[1]));
            if let Some(prev) = seen.insert(key, lineno) {
                return Err(parse_err(lineno, format!("duplicate edge (first seen on line {prev})")));
            }
            edges.push((ids[0], ids[1], weight));
        }
        if labels.is_empty() {
            return Err(parse_err(0, "edge list contains no edges".into()));
        }
        Graph::new(labels, edges)
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = Error::read_file(path)?;
        Graph::parse_edge_list(&text, &path.display().to_string())
    }
}

/// Per-state real vectors (level-0 abstract representations).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    labels: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(labels: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::invalid("embedding set is empty"));
        }
        if labels.len() != vectors.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} vectors",
                labels.len(),
                vectors.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        for (i, z) in vectors.iter().enumerate() {
            if z.len() != dim {
                return Err(Error::invalid(format!(
                    "row {i} has dimension {} (expected {dim})",
                    z.len()
                )));
            }
            if z.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("row {i} has a non-finite entry")));
            }
            if z.iter().all(|&x| x == 0.0) {
                return Err(Error::invalid(format!("row {i} ({}) is a zero vector", labels[i])));
            }
        }
        Ok(EmbeddingSet { labels, vectors })
    }

    pub fn count(&self) -> usize {
        self.vectors.len()
    }

    pub fn dimension(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Parses `label,x0,...,x{d-1}` CSV with a header row.
    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty embedding file".into()))?;
        let dim = header.split(',').count().saturating_sub(1);
        if dim == 0 {
            return Err(parse_err(1, "header must name at least one coordinate".into()));
        }
        let mut labels = Vec::new();
        let mut vectors = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
            if fields.len() != dim + 1 {
                return Err(parse_err(
                    lineno,
                    format!("expected {} fields, found {}", dim + 1, fields.len()),
                ));
            }
            let z = fields[1..]
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("invalid number {f:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if z.iter().all(|&x| x == 0.0) {
                return Err(parse_err(lineno, "zero-norm embedding row".into()));
            }
            labels.push(fields[0].trim().to_string());
            vectors.push(z);
        }
        if vectors.is_empty() {
            return Err(parse_err(1, "no embedding rows".into()));
        }
        EmbeddingSet::new(labels, vectors)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = Error::read_file(path)?;
        EmbeddingSet::parse_csv(&text, &path.display().to_string())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for d in 0..self.dimension() {
            let _ = write!(out, ",x{d}");
        }
        out.push('\n');
        for (label, z) in self.labels.iter().zip(&self.vectors) {
            out.push_str(label);
            for x in z {
                let _ = write!(out, ",{}", fmt6(*x));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Complete graph weighted by absolute cosine similarity; pairs at or below
/// [`EDGE_WEIGHT_FLOOR`] get no edge.
pub fn similarity_graph(e: &EmbeddingSet) -> Result<Graph> {
    let n = e.count();
    if n < 2 {
        return Err(Error::invalid("similarity graph needs at least two embeddings"));
    }
    let norms: Vec<f64> = e.vectors().iter().map(|z| norm(z)).collect();
    if let Some(i) = norms.iter().position(|&x| x == 0.0 || !x.is_finite()) {
        return Err(Error::invalid(format!("embedding {i} has zero norm")));
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let cos = dot(e.vector(i), e.vector(j)) / (norms[i] * norms[j]);
            let w = cos.abs().min(1.0);
            if w > EDGE_WEIGHT_FLOOR {
                edges.push((i, j, w));
            }
        }
    }
    Graph::new(e.labels().to_vec(), edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn triangle() -> Graph {
        Graph::with_vertex_count(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn degree_examples() {
        assert_eq!(triangle().degree(0).unwrap(), 2.0);
        let g = Graph::with_vertex_count(3, [(0, 1, 1.0)]).unwrap();
        assert_eq!(g.degree(2).unwrap(), 0.0);
        let star = Graph::with_vertex_count(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        assert_eq!(star.degree(0).unwrap(), 3.0);
        assert!(matches!(star.degree(4), Err(Error::Index { index: 4, count: 4 })));
    }

    #[test]
    fn volume_examples() {
        assert_eq!(triangle().volume(), 6.0);
        let g = Graph::with_vertex_count(2, [(0, 1, 0.5)]).unwrap();
        assert_eq!(g.volume(), 1.0);
        let g = Graph::with_vertex_count(3, []).unwrap();
        assert_eq!(g.volume(), 0.0);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::with_vertex_count(2, [(0, 0, 1.0)]).is_err());
        assert!(Graph::with_vertex_count(2, [(0, 1, 0.0)]).is_err());
        assert!(Graph::with_vertex_count(2, [(0, 1, -1.0)]).is_err());
        assert!(Graph::with_vertex_count(2, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(Graph::with_vertex_count(2, [(0, 2, 1.0)]).is_err());
    }

    fn emb(rows: &[&[f64]]) -> EmbeddingSet {
        EmbeddingSet::new(
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn similarity_examples() {
        let g = similarity_graph(&emb(&[&[1.0, 0.0], &[1.0, 0.0]])).unwrap();
        assert_eq!(g.edges(), &[(0, 1, 1.0)]);
        let g = similarity_graph(&emb(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(g.edge_count(), 0);
        let g = similarity_graph(&emb(&[&[1.0, 0.0], &[-1.0, 0.0]])).unwrap();
        assert_eq!(g.edges(), &[(0, 1, 1.0)]);
    }

    #[test]
    fn zero_vector_rejected() {
        let err = EmbeddingSet::new(vec!["a".into(), "b".into()], vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn edge_list_parsing() {
        let g = Graph::parse_edge_list("# tri\na\tb\t1\nb\tc\t1\n\nc\ta\t1.0\n", "t").unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.labels(), &["a", "b", "c"]);
        assert_eq!(g.volume(), 6.0);

        match Graph::parse_edge_list("a\tb\t1\nb\tc\t-2\n", "f.tsv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Graph::parse_edge_list("a\tb\n", "f"),
            Err(Error::Parse { line: 1, .. })
        ));
        let back = Graph::parse_edge_list(&g.to_edge_list(), "rt").unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn embedding_csv_parsing() {
        let e = EmbeddingSet::parse_csv("label,x0,x1\na,1,0\nb,0.5,0.5\n", "e").unwrap();
        assert_eq!(e.count(), 2);
        assert_eq!(e.dimension(), 2);
        assert!(matches!(
            EmbeddingSet::parse_csv("label,x0,x1\na,0,0\n", "e"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(EmbeddingSet::parse_csv("", "e").is_err());
    }

    #[test]
    fn components_and_induced() {
        let g = Graph::with_vertex_count(5, [(0, 1, 1.0), (3, 4, 2.0)]).unwrap();
        assert_eq!(g.components(), vec![vec![0, 1], vec![2], vec![3, 4]]);
        let sub = g.induced(&[3, 4]).unwrap();
        assert_eq!(sub.edges(), &[(0, 1, 2.0)]);
        assert_eq!(sub.labels(), &["3", "4"]);
    }
}
