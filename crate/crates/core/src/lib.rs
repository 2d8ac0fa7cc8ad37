//! Structural auditing of published neural-network models.
//!
//! A model graph ([`graph::GraphDoc`]) is canonicalized into an abstract
//! architecture ([`aptm::Aptm`]) whose layer order does not depend on how
//! branches were written down. Structural n-gram counts ([`features`]) feed a
//! small MLP classifier ([`learner`]) that predicts what a model is; the
//! [`audit`] module compares those predictions with the metadata the
//! publisher declared. [`namelint`] tags the parts of a model identifier.

pub mod aptm;
pub mod audit;
pub mod bench;
pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod graph;
pub mod learner;
pub mod namelint;
pub mod pipeline;

pub use error::{Error, Result};
