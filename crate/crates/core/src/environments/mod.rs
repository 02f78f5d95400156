//! The resource-selection and queueing games, with their myopic baselines.

pub mod dqg;
pub mod srsg;

pub use dqg::{make_dqg, DqgConfig, DqgModel, DqgMyopic};
pub use srsg::{make_srsg, SrsgConfig, SrsgModel, SrsgMyopic};
