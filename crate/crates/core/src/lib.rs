//! Hybrid quantum-classical mixture-of-experts laboratory.
//!
//! A simulated quantum gating network (angle embedding, layered RY/CZ ansatz,
//! computational-basis routing) sits next to linear and deep classical routers,
//! all driving linear experts. The crate also carries the exact and noisy
//! circuit simulators, three gradient backends, the training loop and the
//! experiment harness used by the `qmoe` command-line tool.

pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod gradients;
pub mod metrics;
pub mod models;
pub mod noise;
pub mod quantum;
pub mod rng;
pub mod training;

pub use checkpoint::Checkpoint;
pub use error::{ErrorKind, QmoeError, Result};
pub use experiments::{ExperimentConfig, ExperimentKind, MetricsReport};
pub use gradients::{GradientBackend, ProbJacobian};
pub use models::{HybridModel, ModelSpec, Router, RouterSpec};
pub use noise::DensityMatrix;
pub use quantum::{CircuitSpec, ExpertMapping, ParamVector, QuantumState};
pub use training::{fit, TrainConfig, TrainTrace};
