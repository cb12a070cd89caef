//! Attack detection for CoAP traffic on autoencoder latent features.
//!
//! The pipeline, one module per stage:
//!
//! - [`coap_wire`]: CoAP message codec.
//! - [`traffic_synth`]: seeded captures with DoS, MITM and cross-protocol attacks.
//! - [`ingest`]: frames to a flat, labeled table of protocol fields.
//! - [`preprocess`]: MAC, one-hot and min-max encoding of that table.
//! - [`autoenc`]: the autoencoder that compresses rows to `N` latent values.
//! - [`trees`]: decision tree, random forest and gradient boosting.
//! - [`eval`]: metrics, grid search and the latent-size sweep.
//! - [`cli`]: the `coap-latent` binary.
//!
//! The guide in `book/` walks through each stage; its examples run as doctests.

pub mod autoenc;
pub mod cli;
pub mod coap_wire;
pub mod eval;
pub mod ingest;
pub mod matrix;
pub mod preprocess;
pub mod traffic_synth;
pub mod trees;

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/codec.md")]
    pub mod codec {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    pub mod synthesis {}
    #[doc = include_str!("../../../book/src/features.md")]
    pub mod features {}
    #[doc = include_str!("../../../book/src/autoencoder.md")]
    pub mod autoencoder {}
    #[doc = include_str!("../../../book/src/trees.md")]
    pub mod trees {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
