//! Distills discrete emotion labels into a 3-d continuous representation,
//! trains condition-interchangeable expression-editing GANs on it, and
//! provides the latent-space analysis and evaluation tooling around them.

pub mod corpus;
pub mod types;

pub use types::{ClassList, MoodVector};
