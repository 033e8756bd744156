//! Property-based acceptance checks and the synthetic comparison
//! experiment.

pub mod criteria;
pub mod experiment;
pub mod pipeline;
pub mod toy;
