//! Gradient-domain weighted guided filtering and dual-illumination Retinex
//! enhancement for low-light and unevenly lit images.

pub mod config;
pub mod edge;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod guided;
pub mod image;
pub mod io;
pub mod par;
pub mod retinex;
pub mod stats;
pub mod window;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use image::{invert, max_channel, ColorImage, ImagePlane, Invert};
