//! Independent reference computations used to check the main code paths.

pub mod dd;
pub mod reference;
pub mod rouge;

pub use dd::Dd;
pub use reference::{reference_gradient_check, reference_loss, GroupCheck, ReferenceCheck};
