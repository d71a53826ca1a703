//! Camera trajectories for the simulator, expressed as per-pair rigid deltas.
//!
//! `deltas[k]` is the ground-truth pairwise transform between viewpoints k
//! and k+1: it maps frame-(k+1) camera coordinates into frame-k camera
//! coordinates, exactly what pairwise registration estimates. Poses map
//! camera coordinates to world coordinates and satisfy
//! `pose[k+1] = compose(pose[k], deltas[k])`.

use crate::geometry::{compose_rigid, RigidTransform3D, Vec3};

/// `n_frames - 1` identical translation steps.
pub fn constant_translation(n_frames: usize, step: Vec3) -> Vec<RigidTransform3D> {
    vec![RigidTransform3D::new(0.0, 0.0, 0.0, step); n_frames.saturating_sub(1)]
}

/// Identical steps combining a translation with a rotation about the camera
/// x axis (angles in radians). Used for sweeping the interior of a cavity.
pub fn arc_steps(n_frames: usize, step: Vec3, x_rotation: f64) -> Vec<RigidTransform3D> {
    vec![
        RigidTransform3D::new(0.0, x_rotation, 0.0, step);
        n_frames.saturating_sub(1)
    ]
}

/// Integrate deltas into world poses starting from `initial`.
pub fn poses_from_deltas(
    initial: &RigidTransform3D,
    deltas: &[RigidTransform3D],
) -> Vec<RigidTransform3D> {
    let mut poses = Vec::with_capacity(deltas.len() + 1);
    poses.push(*initial);
    for d in deltas {
        let last = *poses.last().expect("poses is nonempty");
        poses.push(compose_rigid(&last, d));
    }
    poses
}
