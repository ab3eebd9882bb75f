//! Random utility inverse reinforcement learning for vehicle trajectories
//! observed on a sensor graph.

pub mod generative;
pub mod network;
pub mod rucore;
pub mod inference;
pub mod predict;
pub mod eval;
pub mod baselines;
pub mod synth;
