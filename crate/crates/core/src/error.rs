use thiserror::Error;

use crate::tree::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("forest records contain a cycle or a node unreachable from any root (node {0})")]
    Cycle(usize),
    #[error("node {node} names parent {parent} which does not list it as a child")]
    Orphan { node: usize, parent: usize },
    #[error("node {child} appears more than once among children")]
    DuplicateChild { child: usize },
    #[error("node reference {0} is out of range")]
    UnknownNode(usize),
    #[error("sequence is not a depth-first order: node {0} does not follow an ancestor chain")]
    NotDepthFirst(usize),
    #[error("missing length for non-root node {0:?}")]
    MissingLength(NodeId),
    #[error("per-node array has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("hard cap of {cap} nodes exceeded after {explored} nodes ({trees} complete trees)")]
    HardCap {
        cap: usize,
        explored: usize,
        trees: usize,
    },

    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("law has no exact enumerator for type {0}")]
    NoEnumerator(u64),
    #[error("degenerate law: {0}")]
    Degenerate(String),

    #[error("mean matrix not irreducible: type {0} does not communicate with type {1}")]
    Reducible(u64, u64),
    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("truncation leak {leak:e} exceeds threshold {threshold:e}; widen K")]
    TruncationLeak { leak: f64, threshold: f64 },
    #[error("type {0} lies outside the retained truncation; widen K")]
    OutsideTruncation(u64),
    #[error("eta^2 = {0:e} is negative beyond tolerance: inconsistent inputs")]
    NegativeEta2(f64),
    #[error("spine cannot continue: offspring of type {0} carries zero b-mass")]
    ZeroMass(u64),

    #[error("root type {root} differs from distinguished type {x0}")]
    RootType { root: u64, x0: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
