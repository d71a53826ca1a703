//! Synthetic phantom simulator: parametric surfaces, procedural texture,
//! scripted camera trajectories and a renderer producing frames with exact
//! ground truth.

pub mod render;
pub mod surface;
pub mod texture;
pub mod trajectory;

pub use render::{
    simulate_frame, simulate_sequence, to_frames, GroundTruth, SimulatedFrame, SimulationConfig,
};
pub use surface::PhantomSurface;
pub use texture::PhantomTexture;
pub use trajectory::{arc_steps, constant_translation, poses_from_deltas};
