//! Modular domain adaptation for L1-regularized bag-of-words linear
//! classifiers.
//!
//! A model producer trains on labeled multi-domain text and publishes a
//! self-contained model file ([`modelfmt`]). A consumer applies it to an
//! unseen domain, supplying a label-distribution estimate (domain-specific
//! bias) and unlabeled target text (domain-specific normalization), and
//! estimates target accuracy without retraining ([`adapt`]).

pub mod adapt;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod modelfmt;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
