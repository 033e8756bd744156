pub mod acceptance;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod topic_model;
pub mod training;

pub use error::{Error, Result};
