//! Simulated multi-channel room impulse responses, Radon-transform
//! beamforming maps, and a compact convolutional-recurrent network trained
//! to jointly detect and localize the four sidewalls of a room.
//!
//! The pipeline is:
//!
//! 1. [`geometry`] samples a convex room and a device pose and derives the
//!    per-wall regression targets.
//! 2. [`acoustics`] renders image-source impulse responses for every
//!    microphone of the circular array and applies the preprocessing chain.
//! 3. [`radon`] turns the clipped responses into a normalized angle × range
//!    beamforming image.
//! 4. [`dataset`] persists samples and manifests.
//! 5. [`nnet`] and [`losses`] train the network; [`eval`] scores it.

pub mod acoustics;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod nnet;
pub mod par;
pub mod radon;
pub mod record;

pub use error::{Error, Result};
pub use par::Execution;
