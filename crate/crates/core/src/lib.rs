//! Message passing graph variational autoencoder for small organic molecules.
//!
//! This crate is `no_std` (it needs `alloc`) and carries everything that is
//! pure computation:
//!
//! - [`tensor`] / [`tape`]: dense tensors and a define-by-run reverse-mode tape
//! - [`gradcheck`]: central finite-difference checks against the tape
//! - [`molgraph`], [`canon`], [`smiles`]: the categorical molecule model,
//!   canonical labeling and the SMILES dialect used for ingestion
//! - [`mpnn`], [`encoder`], [`decoder`], [`vae`]: the model itself
//! - [`optim`]: the Adam optimizer with bias correction
//! - [`metrics`]: validity / uniqueness / novelty and discrete statistics
//!
//! File formats, the training loop driver and the CLI live in the `mpgvae`
//! crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod batch;
pub mod canon;
pub mod checks;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod molgraph;
pub mod mpnn;
pub mod nn;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod smiles;
pub mod tape;
pub mod tensor;
pub mod vae;

pub use canon::{canonical_form, CanonicalForm};
pub use config::ModelConfig;
pub use error::{Error, Result};
pub use molgraph::{AtomCategory, AtomHistogram, BondCategory, MolGraph, N_SLOTS};
pub use params::ParamStore;
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
pub use vae::{Architecture, Model};
