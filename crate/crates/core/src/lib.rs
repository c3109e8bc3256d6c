//! Association engine for multi-camera multi-target tracking.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithmic
//! stage: the single-camera tracker, tracklet refinement, ground-plane
//! geometry, cross-camera identity association, the 3D HOTA metric family and
//! a deterministic synthetic scene generator. File formats, configuration and
//! the command line live in the `mcmt` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assign;
pub mod assoc;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod pipeline;
pub mod refine;
pub mod sct;
pub mod synth;

pub use error::{Error, Result};
pub use model::*;
pub use nalgebra;
