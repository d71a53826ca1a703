//! Structured-light 3D mosaicing for endoscopic-style image sequences.
//!
//! A rigidly coupled camera + laser-dot projector sweeps a surface; each
//! frame yields a handful of triangulated 3D points. Consecutive frames are
//! registered by maximizing image mutual information over a 6-DOF rigid
//! motion whose induced homography is constrained by those points. Chaining
//! the pairwise motions places every viewpoint in a common frame, from which
//! textured point clouds / meshes and 2D mosaics are assembled. A synthetic
//! phantom simulator with exact ground truth closes the loop for evaluation.

pub mod error;
pub mod evaluation;
pub mod formats;
pub mod geometry;
pub mod imaging;
pub mod mosaic;
pub mod registration;
pub mod simplex;
pub mod simulator;
pub mod triangulation;

pub use error::{Error, Result};
