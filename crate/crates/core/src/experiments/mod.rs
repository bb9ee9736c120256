//! Desk-scale experiments: hierarchical tree embedding and the constrained
//! descent demo.

pub mod descent;
pub mod tree;

pub use descent::{
    descent_demo, export_trajectories, read_trajectory, trajectory_file_names, write_trajectory, DescentArm,
    DescentParams, DescentRun, TrajectoryPoint,
};
pub use tree::{embed_tree, EmbeddingParams, EmbeddingRun, EmbeddingSpace, TreeSpec};

/// Seeds used by every multi-seed experiment.
pub const SEEDS: [u64; 3] = [0, 333, 777];
