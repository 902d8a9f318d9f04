//! Continual neural mapping.
//!
//! A single sinusoidal MLP is trained, frame by frame, into the signed distance
//! function of a scene observed by a posed depth camera. Old geometry is kept
//! alive by replaying a fixed-size reservoir of past surface samples and by
//! sign-labeling random off-surface points with the previous network.

pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod field;
pub mod geometry;
pub mod replay;
pub mod scene;
pub mod trainer;

pub use error::{Error, Result};
