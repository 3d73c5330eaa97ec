//! Traditional and peephole LSTM networks written from scratch, together with
//! variance-preserving weight initialization and the tooling to check it.
//!
//! - [`math`]: dense matrices, the seeded generator, QR orthogonalization.
//! - [`cell`]: forward dynamics of both cell kinds.
//! - [`init`]: variance configurations, condition validators, the catalogue
//!   of configurations and the weight samplers (including the normalized and
//!   orthogonal baselines).
//! - [`probe`]: Monte-Carlo estimates of output and cell-state variance at
//!   initialization.
//! - [`train`]: loss, backpropagation through time, gradient checking and
//!   momentum gradient descent.
//! - [`data`]: UCR and panel loaders, synthetic series, standardization and
//!   splitting.
//! - [`bench`]: initializer-by-seed training grids and their summaries.
//! - [`cli`]: the command runner behind the `lstm-varinit` binary.

// `!(x >= 0.0)` rejects NaN on purpose; index loops mirror the equations.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod cell;
pub mod cli;
pub mod data;
pub mod error;
pub mod init;
pub mod math;
pub mod probe;
pub mod train;

pub use error::{Error, Result};
