//! Full-wave workbench for wearable button antennas: closed-form patch sizing,
//! layered body phantoms, a Yee-grid time-domain solver and post-processing
//! into S11, radiation patterns, averaged SAR and link range.

pub mod cavity;
pub mod constants;
pub mod error;
pub mod fdtd;
pub mod geometry;
pub mod grid;
pub mod link;
pub mod material;
pub mod post;
pub mod validation;
pub mod voxel;

pub use error::{Error, Result};
