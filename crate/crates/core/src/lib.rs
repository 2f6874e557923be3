//! Frame-embedding sequence classification: an LSTM encoder fused with
//! multi-head self-attention, trained with class-weighted cross-entropy.
//!
//! Data arrives as per-video embedding sequences (`.embs` files listed in a
//! manifest), is subsampled and padded to a fixed length, and flows through
//! [`model::forward`]. [`train`] holds the exact backward pass and the
//! optimizer, [`eval`] the metrics.

pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
