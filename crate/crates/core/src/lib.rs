//! Temporal mean-field games with batched decision protocols.
//!
//! A population of `N` exchangeable agents is summarized by its distribution
//! over observations. At every step only part of the population acts; the rest
//! drift under a passive kernel. This crate provides the deterministic
//! population recursion, exact equilibrium computation by forward-backward
//! fixed-point iteration, an `N`-agent policy-gradient learner, and the
//! resource-selection and queueing environments.

pub mod distribution;
pub mod dynamics;
pub mod environments;
pub mod equilibrium;
pub mod error;
pub mod learning;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod protocol;
pub mod rng;
pub mod trajectory;

pub use distribution::{Distribution, NORMALIZATION_TOLERANCE};
pub use error::{Error, Result};
pub use model::{ClosureModel, MeanFieldModel, RegularityConstants, TabularModel};
pub use policy::{policy_probabilities, Policy, PolicyParams, TabularPolicy};
pub use protocol::{Protocol, ProtocolSchedule};
pub use trajectory::{AgentRecord, TrajectoryRecord};
