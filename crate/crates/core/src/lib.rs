//! Zero-shot relative pose estimation between two instances of an object
//! category, from per-view semantic feature grids and depth maps.
//!
//! The pipeline matches a reference view against every target view with
//! cyclical-distance correspondences, picks the best target view, lifts the
//! matches to 3D and fits a similarity transform with RANSAC + Umeyama.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod geom;
pub mod io;
pub mod pipeline;
pub mod solver;
pub mod synth;
pub mod viewsel;

pub use error::{Error, Result};
