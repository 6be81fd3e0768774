//! Temporal action localization with boundary voting: a small autograd
//! engine, data IO, labeling, the TEM/VEM/PEM modules, proposal generation
//! and evaluation.


#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]
pub mod autograd;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod labeling;
pub mod par;
pub mod pem;
pub mod pipeline;
pub mod plot;
pub mod proposals;
pub mod synth;
pub mod tem;
mod train;
pub mod vem;

pub use error::{Error, Result};
