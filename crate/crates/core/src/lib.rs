//! Workbench for hierarchical dialogue-policy learning on composite tasks.
//!
//! A composite task bundles several subtasks (e.g. two restaurant bookings)
//! into one dialogue; the agent only gets credit when every subtask is
//! completed. The crate provides:
//!
//! - [`ontology`]: subtask schemas, seeded synthetic entity databases and
//!   constraint queries;
//! - [`env`]: a seeded dialogue simulator with a semantic-error-rate noise
//!   channel, belief tracking and intrinsic/extrinsic rewards;
//! - [`tensor`]: a small dense numeric layer (affine/MLP passes, Adam,
//!   finite-difference gradient checking);
//! - [`comnet`]: typed-graph policy networks with per-type weight sharing,
//!   plus a flat MLP baseline;
//! - [`hrl`]: two-level Q-learning (options framework) with replay buffers
//!   and target networks;
//! - [`rule`]: the hand-crafted upper-bound agent;
//! - [`harness`]: experiment orchestration — milestone training protocol,
//!   checkpoints, transfer, reports and the interactive chat driver.

pub mod comnet;
pub mod env;
pub mod harness;
pub mod hrl;
pub mod ontology;
pub mod rng;
pub mod rule;
pub mod tensor;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("unsatisfiable coverage: entity_count {entity_count} < largest informable slot cardinality {max_cardinality} (slot '{slot}')")]
    UnsatisfiableCoverage {
        entity_count: usize,
        max_cardinality: usize,
        slot: String,
    },

    #[error("unknown slot '{slot}' in subtask '{subtask}'")]
    UnknownSlot { subtask: String, slot: String },

    #[error("unknown subtask '{0}'")]
    UnknownSubtask(String),

    #[error("shape mismatch: {op} got {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("input dimension mismatch at node {node}: expected {expected}, got {got}")]
    NodeInputMismatch {
        node: usize,
        expected: usize,
        got: usize,
    },

    #[error("episode finished")]
    EpisodeFinished,

    #[error("no subtask available")]
    NoSubtaskAvailable,

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(f64),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("transfer mismatch: {0}")]
    TransferMismatch(String),

    #[error("mismatched milestone grids: {0}")]
    MilestoneGrid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
