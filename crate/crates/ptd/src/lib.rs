//! Persistent-transient duality networks for human-object interaction
//! motion forecasting.
//!
//! The crate is organized in layers:
//!
//! * [`tensor`], [`tape`], [`nn`], [`params`], [`gradcheck`] — a minimal
//!   reverse-mode autodiff substrate over dense 64-bit tensors, with
//!   finite-difference verification;
//! * [`scene`] — scene sequences and the scene file format;
//! * [`model`] — the duality network: persistent graph-attention channel,
//!   egocentric transient channels, the transient switch, and the
//!   autoregressive rollout;
//! * [`train`] — losses, switch labels, Adam, and two-stage training;
//! * [`synth`] — a deterministic scenario generator with exact ground-truth
//!   interaction windows;
//! * [`eval`] — metrics, baselines, generalization sweeps, ablation runs;
//! * [`cli`] — the `ptd` command-line pipelines.
//!
//! The `book/` directory holds a longer guide; its code snippets compile and
//! run as this crate's doc-tests (see [`guide`]).

pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod nn;
pub mod params;
pub mod scene;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use params::ParamSet;
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
pub mod cli;
pub mod model;
pub mod synth;
pub mod train;
