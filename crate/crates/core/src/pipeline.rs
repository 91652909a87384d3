//! End-to-end abstraction of an embedding set and the JSON report it produces.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::abstraction::{
    aggregate, build_relation_graphs, root_children_abstraction, si_loss, ClusterModel, LevelRepresentations, SiLoss,
    TrajectoryLog,
};
use crate::entropy::one_dim_entropy;
use crate::error::Result;
use crate::format::Header;
use crate::graph::{similarity_graph, EmbeddingSet};
use crate::optimizer::{optimize, OptimizeConfig, OptimizeOutcome};
use crate::sparsify::{sparsify, SparsifyResult};

#[derive(Debug, Clone)]
pub struct AbstractionRun {
    pub sparse: SparsifyResult,
    pub outcome: OptimizeOutcome,
    pub clusters: ClusterModel,
    pub clustering_loss: f64,
    /// Root-child cluster of every embedding row.
    pub assignment: Vec<usize>,
    pub levels: LevelRepresentations,
    pub si_loss: Option<SiLoss>,
}

/// Similarity graph, sparsification, tree optimization and the downstream
/// metrics. The SI loss is computed only when a trajectory log is given.
pub fn abstract_states(e: &EmbeddingSet, log: Option<&TrajectoryLog>, cfg: &OptimizeConfig) -> Result<AbstractionRun> {
    let complete = similarity_graph(e)?;
    let sparse = sparsify(&complete)?;
    let outcome = optimize(&sparse.graph, cfg)?;
    let clusters = ClusterModel::fit(&sparse.graph, &outcome.tree, e)?;
    let clustering_loss = clusters.loss()?;
    let assignment = root_children_abstraction(&outcome.tree);
    let levels = aggregate(&outcome.tree, &sparse.graph, e)?;
    let si_loss = match log {
        Some(log) => {
            let graphs = build_relation_graphs(&outcome.tree, e.labels(), log, cfg.k_cap)?;
            Some(si_loss(&graphs, cfg)?)
        }
        None => None,
    };
    Ok(AbstractionRun {
        sparse,
        outcome,
        clusters,
        clustering_loss,
        assignment,
        levels,
        si_loss,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterSummary {
    pub id: usize,
    pub node: usize,
    pub size: usize,
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropySummary {
    pub sparse_one_dim: f64,
    pub tree_initial: f64,
    pub tree_final: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AbstractionReport {
    pub header: Header,
    pub k_star: usize,
    pub k_cap: usize,
    pub entropy: EntropySummary,
    pub operators: usize,
    pub tree_height: usize,
    pub assignments: BTreeMap<String, usize>,
    pub clusters: Vec<ClusterSummary>,
    pub clustering_loss: f64,
    pub si_loss: Option<SiLoss>,
}

impl AbstractionRun {
    pub fn report(&self, e: &EmbeddingSet, cfg: &OptimizeConfig, seed: Option<u64>) -> Result<AbstractionReport> {
        let assignments = e
            .labels()
            .iter()
            .cloned()
            .zip(self.assignment.iter().copied())
            .collect();
        // root children are numbered by first member, matching the assignment ids
        let mut clusters: Vec<ClusterSummary> = self
            .clusters
            .centers
            .iter()
            .map(|(node, center)| {
                let members = &self.outcome.tree.node(*node).vertices;
                ClusterSummary {
                    id: self.assignment[members[0]],
                    node: node.0,
                    size: members.len(),
                    center: center.clone(),
                }
            })
            .collect();
        clusters.sort_by_key(|c| c.id);
        Ok(AbstractionReport {
            header: Header::new(seed),
            k_star: self.sparse.k_star,
            k_cap: cfg.k_cap,
            entropy: EntropySummary {
                sparse_one_dim: one_dim_entropy(&self.sparse.graph)?,
                tree_initial: self.outcome.initial_entropy,
                tree_final: self.outcome.final_entropy,
            },
            operators: self.outcome.log.len(),
            tree_height: self.outcome.tree.height(),
            assignments,
            clusters,
            clustering_loss: self.clustering_loss,
            si_loss: self.si_loss.clone(),
        })
    }
}
