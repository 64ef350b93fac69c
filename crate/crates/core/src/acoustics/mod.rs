//! Image-source room impulse responses, preprocessing and measurement noise.
//!
//! Amplitudes follow `gain / distance` (no `4π`), reflection coefficients are
//! `sqrt(1 - alpha)`, and every transducer is omnidirectional. Only relative
//! amplitudes matter downstream because beamforming maps are normalized.

pub mod image;
pub mod noise;
pub mod rir;

pub use image::{enumerate_images, is_visible, reflection_coefficient, room_planes, ImageSource, Plane};
pub use noise::{add_noise, pink_noise};
pub use rir::{
    add_fractional_impulse, direct_cut_index, kernel_tap, render_images, simulate_setup, synthesize_rir,
    truncate_direct, zero_clip, AcousticConfig, RirSet, DEFAULT_DIRECT_MARGIN, KERNEL_HALF_WIDTH,
};
