//! Accuracy metrics against simulator ground truth: per-pair 3D / 2D
//! registration errors, reconstructed-surface distances and trajectory
//! statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_rigid, project, CameraIntrinsics, Point3D, RigidTransform3D};
use crate::simulator::PhantomSurface;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for n < 2.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { mean, std, min, max, count: values.len() })
    }
}

/// Mean 3D distance (mm) between the images of `points` under the true and
/// estimated transforms.
pub fn epsilon_3d(
    truth: &RigidTransform3D,
    estimate: &RigidTransform3D,
    points: &[Point3D],
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let sum: f64 = points
        .iter()
        .map(|p| (apply_rigid(truth, p) - apply_rigid(estimate, p)).norm())
        .sum();
    Ok(sum / points.len() as f64)
}

/// Mean pixel distance between the projections of the transformed points.
pub fn epsilon_2d(
    truth: &RigidTransform3D,
    estimate: &RigidTransform3D,
    k: &CameraIntrinsics,
    points: &[Point3D],
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mut sum = 0.0;
    for p in points {
        let a = project(k, &apply_rigid(truth, p))?;
        let b = project(k, &apply_rigid(estimate, p))?;
        sum += (a - b).norm();
    }
    Ok(sum / points.len() as f64)
}

/// Distance statistics from world-frame points to the phantom surface (mm).
pub fn surface_error(points: &[Point3D], surface: &PhantomSurface) -> Result<Stats> {
    let d: Vec<f64> = points.iter().map(|p| surface.distance(p)).collect();
    Stats::of(&d)
}

/// Statistics of the per-pair translation magnitudes (mm).
pub fn translation_stats(deltas: &[RigidTransform3D]) -> Result<Stats> {
    let norms: Vec<f64> = deltas.iter().map(|d| d.translation.norm()).collect();
    Stats::of(&norms)
}

/// Rotation angle of a rigid transform (radians), from the matrix trace.
pub fn rotation_angle(t: &RigidTransform3D) -> f64 {
    let r = t.rotation();
    ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Statistics of the per-pair rotation angles (radians).
pub fn rotation_stats(deltas: &[RigidTransform3D]) -> Result<Stats> {
    let angles: Vec<f64> = deltas.iter().map(rotation_angle).collect();
    Stats::of(&angles)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairError {
    pub index: usize,
    pub epsilon_3d_mm: f64,
    pub epsilon_2d_px: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceReport {
    pub pairs: Vec<PairError>,
    pub error_3d_mm: Stats,
    pub error_2d_px: Stats,
}

/// Per-pair errors over a sequence: entry k compares the estimated and true
/// transforms of pair (k, k+1) on that pair's laser points (frame k+1
/// coordinates).
pub fn sequence_report(
    truth: &[RigidTransform3D],
    estimates: &[RigidTransform3D],
    k: &CameraIntrinsics,
    pair_points: &[Vec<Point3D>],
) -> Result<SequenceReport> {
    if truth.len() != estimates.len() || truth.len() != pair_points.len() {
        return Err(Error::InvalidInput(format!(
            "mismatched sequence lengths: {} truth, {} estimates, {} point sets",
            truth.len(),
            estimates.len(),
            pair_points.len()
        )));
    }
    let mut pairs = Vec::with_capacity(truth.len());
    for (i, ((t, e), pts)) in truth.iter().zip(estimates).zip(pair_points).enumerate() {
        pairs.push(PairError {
            index: i,
            epsilon_3d_mm: epsilon_3d(t, e, pts)?,
            epsilon_2d_px: epsilon_2d(t, e, k, pts)?,
        });
    }
    let e3: Vec<f64> = pairs.iter().map(|p| p.epsilon_3d_mm).collect();
    let e2: Vec<f64> = pairs.iter().map(|p| p.epsilon_2d_px).collect();
    Ok(SequenceReport { pairs, error_3d_mm: Stats::of(&e3)?, error_2d_px: Stats::of(&e2)? })
}
