//! Structural-entropy encoding trees and hierarchical state abstraction.
//!
//! The pipeline runs from state embeddings to a cosine similarity graph, a
//! k-NN sparsification chosen by one-dimensional structural entropy, a greedy
//! merge/combine search for a low-entropy encoding tree, and the abstraction
//! quantities computed on that tree (cluster centers, soft assignments,
//! entropy-weighted aggregation and relation-graph reconstruction losses).
//!
//! ```
//! use setree::{one_dim_entropy, optimize, Graph, OptimizeConfig};
//!
//! let g = Graph::with_vertex_count(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)])?;
//! assert_eq!(one_dim_entropy(&g)?, 2.0);
//!
//! let out = optimize(&g, &OptimizeConfig::with_k_cap(2))?;
//! assert!((out.final_entropy - 1.5).abs() < 1e-12);
//! assert_eq!(out.tree.root_partition().len(), 2);
//! # Ok::<(), setree::Error>(())
//! ```

pub mod abstraction;
pub mod entropy;
pub mod error;
pub mod format;
pub mod graph;
pub mod gridworld;
pub mod optimizer;
pub mod pipeline;
pub mod sparsify;
pub mod tree;

pub use abstraction::{
    aggregate, build_relation_graphs, clustering_loss, discrete_abstraction, reconstruct_relation,
    root_children_abstraction, si_loss, soft_assignment, target_distribution, ClusterModel, LevelRelations,
    LevelRepresentations, Relation, RelationGraphs, SiLoss, Step, TrajectoryLog,
};
pub use entropy::{
    assigned_entropy, conditional_entropy, node_entropy, one_dim_entropy, structural_probability, tree_entropy,
    EntropyTable, NodeEntropy,
};
pub use error::{Error, Result};
pub use graph::{similarity_graph, EmbeddingSet, Graph, EDGE_WEIGHT_FLOOR};
pub use optimizer::{
    brute_force_optimum, combine, init_flat_tree, merge, optimize, DeltaSe, OperatorKind, OptimizeConfig,
    OptimizeOutcome,
};
pub use pipeline::{abstract_states, AbstractionReport, AbstractionRun};
pub use sparsify::{knn_graph, sparsify, SparsifyResult};
pub use tree::{EncodingTree, Nest, NodeId, TreeFile, TreeFileNode, TreeNode};
