//! Pairwise registration: estimate the 6-DOF rigid motion between
//! consecutive viewpoints by maximizing mutual information of the images,
//! with the candidate homography constrained by the laser-point geometry.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    apply_homography, apply_rigid, CameraIntrinsics, Homography2D, Point2D, Point3D,
    RigidTransform3D, Vec3,
};
use crate::imaging::{warped_mutual_information, GrayImage, PixelMask};
use crate::mosaic::Frame;
use crate::simplex::{self, SimplexOptions};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegistrationConfig {
    pub max_iterations: usize,
    /// Stop when the mean displacement of the image corners under the
    /// best-vertex homography changes by less than this many pixels between
    /// accepted iterations.
    pub corner_tolerance_px: f64,
    /// Translation entries of the universal initial simplex (mm).
    pub simplex_translation_mm: f64,
    /// Rotation entries of the universal initial simplex (degrees).
    pub simplex_rotation_deg: f64,
    pub min_overlap_pixels: usize,
    /// 1 = full resolution only; 2 adds one coarse half-resolution pass.
    pub pyramid_levels: u32,
    /// The simplex is re-inflated at the incumbent and re-run until the
    /// corner displacement between rounds drops below the tolerance (the
    /// cost surface has a shallow translation/rotation valley that a single
    /// simplex descent tends to stop inside).
    pub max_restarts: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            corner_tolerance_px: 0.01,
            simplex_translation_mm: 0.3,
            simplex_rotation_deg: 0.4,
            min_overlap_pixels: 1000,
            pyramid_levels: 1,
            max_restarts: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub t3d: RigidTransform3D,
    pub t2d: Homography2D,
    /// Mutual information of the registered pair (nats).
    pub final_mi: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solve for the homography induced by a candidate rigid transform and the
/// frame's laser points: the 2M x 8 linear system built from the displaced
/// re-projections, solved in least squares. Unique for M >= 4 points in
/// general position.
pub fn induced_homography(
    t: &RigidTransform3D,
    k: &CameraIntrinsics,
    points: &[(Point3D, Point2D)],
) -> Result<Homography2D> {
    let m = points.len();
    if 2 * m < 8 {
        return Err(Error::RankDeficient { rank: 2 * m });
    }

    let mut a = DMatrix::<f64>::zeros(2 * m, 8);
    let mut rhs = DVector::<f64>::zeros(2 * m);
    for (i, (p3, p2)) in points.iter().enumerate() {
        let displaced = apply_rigid(t, p3);
        if displaced.z <= 0.0 {
            return Err(Error::BehindCamera { z: displaced.z });
        }
        // c1, c2 are the pixel coordinates of the displaced point.
        let c1 = k.fx() * displaced.x / displaced.z + k.u;
        let c2 = k.fy() * displaced.y / displaced.z + k.v;
        let (x, y) = (p2.x, p2.y);
        let r1 = 2 * i;
        let r2 = 2 * i + 1;
        a[(r1, 0)] = x;
        a[(r1, 1)] = y;
        a[(r1, 2)] = 1.0;
        a[(r1, 6)] = -c1 * x;
        a[(r1, 7)] = -c1 * y;
        rhs[r1] = c1;
        a[(r2, 3)] = x;
        a[(r2, 4)] = y;
        a[(r2, 5)] = 1.0;
        a[(r2, 6)] = -c2 * x;
        a[(r2, 7)] = -c2 * y;
        rhs[r2] = c2;
    }

    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > max_sv * 1e-10).count();
    if rank < 8 {
        return Err(Error::RankDeficient { rank });
    }
    let sol = svd.solve(&rhs, max_sv * 1e-12).map_err(|_| Error::RankDeficient { rank })?;
    Ok(Homography2D::from_coeffs([
        sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7],
    ]))
}

/// A simplex vertex is `[dx, dy, dz (mm), theta1, theta2, theta3 (deg)]`.
fn vertex_to_transform(v: &[f64]) -> RigidTransform3D {
    RigidTransform3D::new(
        v[3].to_radians(),
        v[4].to_radians(),
        v[5].to_radians(),
        Vec3::new(v[0], v[1], v[2]),
    )
}

fn corner_points(width: u32, height: u32) -> [Point2D; 4] {
    let w = width as f64 - 1.0;
    let h = height as f64 - 1.0;
    [
        Point2D::new(0.0, 0.0),
        Point2D::new(w, 0.0),
        Point2D::new(0.0, h),
        Point2D::new(w, h),
    ]
}

/// Mean displacement of the image corners between two homographies.
fn mean_corner_displacement(a: &Homography2D, b: &Homography2D, corners: &[Point2D; 4]) -> f64 {
    let mut sum = 0.0;
    for c in corners {
        match (apply_homography(a, c), apply_homography(b, c)) {
            (Ok(pa), Ok(pb)) => sum += (pa - pb).norm(),
            _ => return f64::INFINITY,
        }
    }
    sum / 4.0
}

struct LevelData<'a> {
    prev_gray: &'a GrayImage,
    prev_mask: &'a PixelMask,
    cur_gray: &'a GrayImage,
    cur_mask: &'a PixelMask,
    k: CameraIntrinsics,
    points: Vec<(Point3D, Point2D)>,
}

fn run_level(
    data: &LevelData<'_>,
    cfg: &RegistrationConfig,
    start: [f64; 6],
    steps: [f64; 6],
) -> (simplex::SimplexOutcome, bool) {
    let score = |v: &[f64]| -> f64 {
        let t = vertex_to_transform(v);
        let Ok(h) = induced_homography(&t, &data.k, &data.points) else {
            return f64::INFINITY;
        };
        match warped_mutual_information(
            data.prev_gray,
            data.prev_mask,
            data.cur_gray,
            data.cur_mask,
            &h,
            cfg.min_overlap_pixels,
        ) {
            Ok(mi) => -mi,
            Err(_) => f64::INFINITY,
        }
    };

    let corners = corner_points(data.cur_gray.width, data.cur_gray.height);
    let stop = |prev_best: &[f64], new_best: &[f64]| -> bool {
        let (Ok(ha), Ok(hb)) = (
            induced_homography(&vertex_to_transform(prev_best), &data.k, &data.points),
            induced_homography(&vertex_to_transform(new_best), &data.k, &data.points),
        ) else {
            return false;
        };
        mean_corner_displacement(&ha, &hb, &corners) < cfg.corner_tolerance_px
    };

    let initial = simplex::axis_simplex(&start, &steps);
    let opts = SimplexOptions { max_iterations: cfg.max_iterations, size_tolerance: None };
    let outcome = simplex::minimize(score, initial, &opts, stop);
    let feasible = outcome.best_value.is_finite();
    (outcome, feasible)
}

/// Register viewpoint `cur` against `prev` per the four-step scheme: each
/// simplex vertex is a candidate rigid motion, mapped to its induced
/// homography, scored by the mutual information of the superimposed images
/// with laser-dot pixels excluded.
pub fn register_pair(
    prev: &Frame,
    cur: &Frame,
    k: &CameraIntrinsics,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    if prev.observations.len() < 4 || cur.observations.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "registration needs >= 4 laser observations per frame (prev {}, cur {})",
            prev.observations.len(),
            cur.observations.len()
        )));
    }
    let points: Vec<(Point3D, Point2D)> =
        cur.observations.iter().map(|o| (o.point, o.dot)).collect();

    // Optional coarse-to-fine pyramid; level 0 is full resolution.
    let levels = cfg.pyramid_levels.max(1);
    let mut pyr_prev_gray = vec![prev.gray.clone()];
    let mut pyr_prev_mask = vec![prev.dot_mask.clone()];
    let mut pyr_cur_gray = vec![cur.gray.clone()];
    let mut pyr_cur_mask = vec![cur.dot_mask.clone()];
    for l in 1..levels as usize {
        pyr_prev_gray.push(pyr_prev_gray[l - 1].downsample2());
        pyr_prev_mask.push(pyr_prev_mask[l - 1].downsample2());
        pyr_cur_gray.push(pyr_cur_gray[l - 1].downsample2());
        pyr_cur_mask.push(pyr_cur_mask[l - 1].downsample2());
    }

    let mut start = [0.0f64; 6];
    let mut outcome = None;
    for level in (0..levels).rev() {
        let scale = 0.5f64.powi(level as i32);
        let data = LevelData {
            prev_gray: &pyr_prev_gray[level as usize],
            prev_mask: &pyr_prev_mask[level as usize],
            cur_gray: &pyr_cur_gray[level as usize],
            cur_mask: &pyr_cur_mask[level as usize],
            k: k.scaled(scale),
            points: points
                .iter()
                .map(|(p3, p2)| (*p3, Point2D::new(p2.x * scale, p2.y * scale)))
                .collect(),
        };
        // Refinement levels shrink the simplex around the coarse estimate.
        let shrink = if level + 1 == levels { 1.0 } else { 0.5 };
        let t = cfg.simplex_translation_mm * shrink;
        let r = cfg.simplex_rotation_deg * shrink;
        let steps = [t, t, t, r, r, r];
        let corners = corner_points(data.cur_gray.width, data.cur_gray.height);
        let mut total_iterations = 0;
        let mut level_outcome: Option<simplex::SimplexOutcome> = None;
        for round in 0..=cfg.max_restarts {
            let (out, feasible) = run_level(&data, cfg, start, steps);
            if !feasible {
                if round == 0 && level_outcome.is_none() && outcome.is_none() {
                    return Err(Error::InvalidInput(
                        "all initial simplex vertices are infeasible \
                         (no overlap or degenerate geometry)"
                            .into(),
                    ));
                }
                break;
            }
            total_iterations += out.iterations;
            let settled = match &level_outcome {
                Some(prev_out) => {
                    let prev_t = vertex_to_transform(&prev_out.best);
                    let new_t = vertex_to_transform(&out.best);
                    match (
                        induced_homography(&prev_t, &data.k, &data.points),
                        induced_homography(&new_t, &data.k, &data.points),
                    ) {
                        (Ok(ha), Ok(hb)) => {
                            mean_corner_displacement(&ha, &hb, &corners)
                                < cfg.corner_tolerance_px
                        }
                        _ => false,
                    }
                }
                None => false,
            };
            let keep = level_outcome
                .as_ref()
                .map_or(true, |prev_out| out.best_value <= prev_out.best_value);
            if keep {
                start = [out.best[0], out.best[1], out.best[2], out.best[3], out.best[4],
                    out.best[5]];
                level_outcome = Some(out);
            }
            if settled {
                break;
            }
        }
        let mut out = level_outcome.expect("first round is always feasible here");
        out.iterations = total_iterations;
        outcome = Some(out);
    }
    let outcome = outcome.expect("at least one pyramid level runs");

    let t3d = vertex_to_transform(&outcome.best);
    let t2d = induced_homography(&t3d, k, &points)?;
    Ok(RegistrationResult {
        t3d,
        t2d,
        final_mi: -outcome.best_value,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;
    use crate::imaging::{ColorImage, PixelMask};
    use crate::triangulation::{LaserObservation, ProjectorModel};
    use approx::assert_relative_eq;

    fn test_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(8.0, 0.016, 0.016, 96.0, 72.0, 192, 144).unwrap()
    }

    /// Laser points: cone projector rays intersected with the plane z = z0.
    fn plane_points(k: &CameraIntrinsics, z0: f64) -> Vec<(Point3D, Point2D)> {
        let proj = ProjectorModel::cone(Point3D::new(3.0, 0.0, 0.0), 0.18, 8);
        proj.rays
            .iter()
            .map(|r| {
                let p = r.at((z0 - r.origin.z) / r.direction.z);
                (p, project(k, &p).unwrap())
            })
            .collect()
    }

    #[test]
    fn induced_identity_maps_dots_to_themselves() {
        let k = test_intrinsics();
        let points = plane_points(&k, 30.0);
        let h = induced_homography(&RigidTransform3D::identity(), &k, &points).unwrap();
        for (_, dot) in &points {
            let mapped = apply_homography(&h, dot).unwrap();
            assert!((mapped - dot).norm() < 1e-9, "residual {}", (mapped - dot).norm());
        }
    }

    #[test]
    fn induced_axial_translation_is_scaling_about_principal_point() {
        let k = test_intrinsics();
        let z0 = 30.0;
        let points = plane_points(&k, z0);
        let tz = 2.0;
        let t = RigidTransform3D::new(0.0, 0.0, 0.0, Vec3::new(0.0, 0.0, tz));
        let h = induced_homography(&t, &k, &points).unwrap();
        // Oracle: project displaced plane points directly. The plane scene
        // makes the homography exact, so it must extrapolate to a grid of
        // other plane points as well.
        for gx in [-6.0, 0.0, 5.0] {
            for gy in [-4.0, 2.0] {
                let p = Point3D::new(gx, gy, z0);
                let dot = project(&k, &p).unwrap();
                let expected = project(&k, &apply_rigid(&t, &p)).unwrap();
                let mapped = apply_homography(&h, &dot).unwrap();
                assert!((mapped - expected).norm() < 1e-6);
                // Scaling about the principal point by z0 / (z0 + tz).
                let scale = z0 / (z0 + tz);
                let manual = Point2D::new(
                    k.u + scale * (dot.x - k.u),
                    k.v + scale * (dot.y - k.v),
                );
                assert!((mapped - manual).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn induced_lateral_translation_is_pixel_shift() {
        let k = test_intrinsics();
        let z0 = 25.0;
        let points = plane_points(&k, z0);
        let tx = 1.5;
        let t = RigidTransform3D::new(0.0, 0.0, 0.0, Vec3::new(tx, 0.0, 0.0));
        let h = induced_homography(&t, &k, &points).unwrap();
        let shift = k.fx() * tx / z0;
        for (_, dot) in &points {
            let mapped = apply_homography(&h, dot).unwrap();
            assert_relative_eq!(mapped.x, dot.x + shift, epsilon = 1e-6);
            assert_relative_eq!(mapped.y, dot.y, epsilon = 1e-6);
        }
    }

    #[test]
    fn induced_rejects_too_few_points() {
        let k = test_intrinsics();
        let points = plane_points(&k, 30.0);
        assert!(matches!(
            induced_homography(&RigidTransform3D::identity(), &k, &points[..3]),
            Err(Error::RankDeficient { rank: 6 })
        ));
    }

    #[test]
    fn induced_rejects_behind_camera() {
        let k = test_intrinsics();
        let points = plane_points(&k, 30.0);
        let t = RigidTransform3D::new(0.0, 0.0, 0.0, Vec3::new(0.0, 0.0, -40.0));
        assert!(matches!(
            induced_homography(&t, &k, &points),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn induced_rejects_collinear_dots() {
        let k = test_intrinsics();
        // All dots on one image line: rank-deficient system.
        let points: Vec<(Point3D, Point2D)> = (0..8)
            .map(|i| {
                let x = -7.0 + 2.0 * i as f64;
                let p = Point3D::new(x, 0.0, 30.0);
                (p, project(&k, &p).unwrap())
            })
            .collect();
        assert!(matches!(
            induced_homography(&RigidTransform3D::identity(), &k, &points),
            Err(Error::RankDeficient { .. })
        ));
    }

    fn textured_frame(index: usize, k: &CameraIntrinsics, z0: f64) -> Frame {
        // Smooth pseudo-texture viewed fronto-parallel at depth z0.
        let mut img = ColorImage::new(k.width, k.height);
        for y in 0..k.height {
            for x in 0..k.width {
                let sx = (x as f64 - k.u) / k.fx() * z0;
                let sy = (y as f64 - k.v) / k.fy() * z0;
                let v = 120.0
                    + 55.0 * (sx * 0.9).sin() * (sy * 0.7).cos()
                    + 35.0 * (sx * 2.3 + sy * 1.7).sin();
                let v = v.clamp(0.0, 255.0) as u8;
                img.set(x, y, [v, v / 2 + 40, v / 3]);
            }
        }
        let observations = plane_points(k, z0)
            .into_iter()
            .enumerate()
            .map(|(i, (p, d))| LaserObservation { index: i, dot: d, point: p, gap: 0.0 })
            .collect();
        Frame::new(index, img, observations, PixelMask::all_true(k.width, k.height))
    }

    #[test]
    fn self_registration_returns_identity() {
        let k = test_intrinsics();
        let frame = textured_frame(0, &k, 30.0);
        let cfg = RegistrationConfig { min_overlap_pixels: 500, ..Default::default() };
        let res = register_pair(&frame, &frame, &k, &cfg).unwrap();
        assert!(res.t3d.translation.norm() < 0.02, "|D| = {}", res.t3d.translation.norm());
        for th in [res.t3d.theta1, res.t3d.theta2, res.t3d.theta3] {
            // Angle triplets can split at gimbal lock; check the rotation
            // via its matrix instead of raw angles.
            assert!(th.is_finite());
        }
        let angle_err = (res.t3d.rotation() - nalgebra::Matrix3::identity()).norm();
        assert!(angle_err < 0.05f64.to_radians() * 2.0, "rotation deviation {angle_err}");
    }

    #[test]
    fn result_homography_is_consistent_with_transform() {
        let k = test_intrinsics();
        let frame = textured_frame(0, &k, 30.0);
        let cfg = RegistrationConfig { min_overlap_pixels: 500, ..Default::default() };
        let res = register_pair(&frame, &frame, &k, &cfg).unwrap();
        let points: Vec<_> = frame.observations.iter().map(|o| (o.point, o.dot)).collect();
        let recomputed = induced_homography(&res.t3d, &k, &points).unwrap();
        for (a, b) in res.t2d.coeffs().iter().zip(recomputed.coeffs()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_observations_is_an_error() {
        let k = test_intrinsics();
        let mut frame = textured_frame(0, &k, 30.0);
        frame.observations.truncate(3);
        let cfg = RegistrationConfig::default();
        assert!(register_pair(&frame, &frame, &k, &cfg).is_err());
    }
}
