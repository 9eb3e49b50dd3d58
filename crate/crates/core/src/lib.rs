//! Conditional-dependency networks over categorical sequence alignments.
//!
//! The pipeline runs alignment → pairwise contingency statistics → metagraph
//! (nodes = columns, subnodes = categories) → user-driven filtering and edge
//! edits → a log-linear scoring model, with echo-based realignment and a
//! cylinder layout for display.

pub mod alignment;
pub mod artifacts;
pub mod contingency;
pub mod crf;
mod error;
pub mod fmt;
pub mod layout;
pub mod metagraph;
pub mod realign;
pub mod synth;

pub use alignment::{Alphabet, AlignmentMatrix, Format, ValidationReport};
pub use contingency::{
    all_pairs_scan, edge_statistics, fisher_exact_ln_p, fisher_exact_p, joint_counts, marginals,
    scan_pairs, DependencyEdge, EdgeKey, EdgeSet, EdgeState, JointTable, MarginalProfile,
    PairEdges,
};
pub use crf::{edges_for_pairs, pssm_score, CrfModel, ScoreReport, Selection};
pub use error::{Error, Result};
pub use layout::{compute_layout, CylinderScene, LayoutParams};
pub use metagraph::{
    detect_cycles, EditAction, FilterSpec, Metagraph, SignFilter, VisibleSubgraph,
};
pub use realign::{
    apply_shifts, assign_shifts, detect_echoes, realign_iterate, EchoGroup, EchoParams,
    RealignReport, ShiftAssignment,
};
