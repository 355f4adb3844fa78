//! Beam-hardening simulation and blind non-linearity correction for
//! parallel-beam CT.

pub mod correction;
pub mod error;
pub mod geometry;
pub mod io;
pub mod materials;
pub mod metrics;
pub mod phantoms;
pub mod projection;
pub mod reconstruction;
pub mod segmentation;
pub mod spectrum;
pub mod stats;

pub use error::{Error, Result, Stage};
