//! Byzantine-robust federated learning simulator.
//!
//! The crate implements spatial-temporal pattern analysis (STPA), a robust
//! aggregation rule that filters each round's client updates by clustering
//! their pseudo-gradients on cosine similarity and then scales the global
//! step by how well the aggregate agrees with a momentum forecast. FedAvg,
//! Krum, coordinate-wise median and trimmed mean are provided as baselines,
//! together with Gaussian-Byzantine, noisy-data, label-flipping, IPM and
//! ALiE adversaries and a cross-silo / cross-device round simulator.
//!
//! Runnable walkthroughs live in `examples/`; `fedstpa` is the command-line
//! front end.

pub mod aggregation;
pub mod attack;
pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod rng;
pub mod simulation;
pub mod stpa;
pub mod vector;

pub use aggregation::AggregationRule;
pub use attack::AttackSpec;
pub use data::LabeledDataset;
pub use error::{Error, IdxError, Result};
pub use model::{Architecture, TrainConfig};
pub use simulation::{run_experiment, Experiment, RoundLog, Scenario, ScenarioConfig};
pub use stpa::{stpa_round, MomentumState, StpaConfig};
pub use vector::{ClientUpdate, ParamVector};
