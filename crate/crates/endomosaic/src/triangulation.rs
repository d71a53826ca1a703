//! Structured-light 3D point reconstruction: fixed projector rays, per-frame
//! camera rays, and their intersection producing the laser points of a
//! viewpoint.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point2D, Point3D, Vec3};

/// A ray with unit direction, in camera coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray3D {
    pub origin: Point3D,
    pub direction: Vec3,
}

impl Ray3D {
    pub fn new(origin: Point3D, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if n < 1e-12 {
            return Err(Error::InvalidInput("ray direction has zero length".into()));
        }
        Ok(Self { origin, direction: direction / n })
    }

    pub fn at(&self, t: f64) -> Point3D {
        self.origin + self.direction * t
    }
}

/// The fixed laser projector: M rays expressed in the camera coordinate
/// system. Camera and projector are rigidly coupled, so the ray equations do
/// not change from frame to frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectorModel {
    pub rays: Vec<Ray3D>,
}

impl ProjectorModel {
    /// Rays on a cone around +z: `m` rays at evenly spaced azimuths, each
    /// tilted so that `tan(half_angle) = cone_tangent`. The origin offset from
    /// the camera center is the triangulation baseline.
    pub fn cone(origin: Point3D, cone_tangent: f64, m: usize) -> Self {
        Self::cone_with_offset(origin, cone_tangent, m, 0.0)
    }

    /// Cone rays with the azimuths rotated by `azimuth_offset` (radians).
    ///
    /// With the projector offset from the camera along x only, rays at
    /// azimuths a and pi - a share the same epipolar line (their y/z slope is
    /// equal), which defeats nearest-line dot matching. An offset whose
    /// double is not a multiple of the azimuth spacing breaks the symmetry.
    pub fn cone_with_offset(
        origin: Point3D,
        cone_tangent: f64,
        m: usize,
        azimuth_offset: f64,
    ) -> Self {
        let rays = (0..m)
            .map(|i| {
                let phi = azimuth_offset + 2.0 * std::f64::consts::PI * i as f64 / m as f64;
                let dir = Vec3::new(cone_tangent * phi.cos(), cone_tangent * phi.sin(), 1.0);
                Ray3D::new(origin, dir).expect("cone direction is nonzero")
            })
            .collect();
        Self { rays }
    }

    /// Default projector: 8 rays on a 0.25-tangent cone, 3 mm baseline
    /// along x, azimuths offset to keep all epipolar lines distinct.
    pub fn standard() -> Self {
        Self::cone_with_offset(Point3D::new(3.0, 0.0, 0.0), 0.25, 8, 10f64.to_radians())
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// One reconstructed laser point: image dot, triangulated 3D point and the
/// ray-to-ray miss distance (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserObservation {
    /// Index of the projector ray this dot was matched to.
    pub index: usize,
    pub dot: Point2D,
    pub point: Point3D,
    pub gap: f64,
}

/// Back-project an image dot to the camera ray through the optical center.
pub fn camera_ray(k: &CameraIntrinsics, dot: &Point2D) -> Ray3D {
    let dir = Vec3::new((dot.x - k.u) * k.lx / k.f, (dot.y - k.v) * k.ly / k.f, 1.0);
    Ray3D::new(Point3D::origin(), dir).expect("back-projected direction is nonzero")
}

/// Intersect two rays as the midpoint of the common perpendicular segment
/// between the supporting lines, returning the midpoint and the segment
/// length (gap). Exactly intersecting rays give gap 0.
pub fn intersect_rays(a: &Ray3D, b: &Ray3D) -> Result<(Point3D, f64)> {
    let n = a.direction.cross(&b.direction);
    let n2 = n.norm_squared();
    if n.norm() < 1e-9 {
        return Err(Error::ParallelRays { cross_norm: n.norm() });
    }
    let w = b.origin - a.origin;
    let t = Matrix3::from_columns(&[w, b.direction, n]).determinant() / n2;
    let s = Matrix3::from_columns(&[w, a.direction, n]).determinant() / n2;
    let pa = a.at(t);
    let pb = b.at(s);
    Ok((nalgebra::center(&pa, &pb), (pa - pb).norm()))
}

/// The image-plane line swept by a projector ray, as normalized coefficients
/// (a, b, c) with a^2 + b^2 = 1 and signed distance `a x + b y + c`.
pub fn epipolar_line(k: &CameraIntrinsics, ray: &Ray3D) -> Result<(f64, f64, f64)> {
    // Two points on the ray with positive depth.
    let pick = |z_target: f64| -> Result<Point2D> {
        if ray.direction.z.abs() < 1e-12 {
            return Err(Error::InvalidInput("projector ray is parallel to the image plane".into()));
        }
        let t = (z_target - ray.origin.z) / ray.direction.z;
        crate::geometry::project(k, &ray.at(t))
    };
    let p1 = pick(10.0)?;
    let p2 = pick(60.0)?;
    let a = p2.y - p1.y;
    let b = p1.x - p2.x;
    let n = (a * a + b * b).sqrt();
    if n < 1e-9 {
        return Err(Error::InvalidInput("degenerate epipolar line".into()));
    }
    let (a, b) = (a / n, b / n);
    let c = -(a * p1.x + b * p1.y);
    Ok((a, b, c))
}

/// Match segmented dots to projector rays by nearest epipolar line and
/// triangulate each match. Ambiguous assignments (two dots claiming one ray)
/// are a `MatchingFailure`.
pub fn reconstruct_frame_points(
    k: &CameraIntrinsics,
    proj: &ProjectorModel,
    dots: &[Point2D],
) -> Result<Vec<LaserObservation>> {
    let lines: Vec<(f64, f64, f64)> =
        proj.rays.iter().map(|r| epipolar_line(k, r)).collect::<Result<_>>()?;

    let mut claimed: Vec<Option<usize>> = vec![None; proj.len()];
    let mut assignment = Vec::with_capacity(dots.len());
    for (di, dot) in dots.iter().enumerate() {
        let (best, _) = lines
            .iter()
            .enumerate()
            .map(|(i, (a, b, c))| (i, (a * dot.x + b * dot.y + c).abs()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .ok_or_else(|| Error::MatchingFailure("projector has no rays".into()))?;
        if let Some(prev) = claimed[best] {
            return Err(Error::MatchingFailure(format!(
                "dots {prev} and {di} both claim projector ray {best}"
            )));
        }
        claimed[best] = Some(di);
        assignment.push((di, best));
    }

    let mut observations = Vec::with_capacity(assignment.len());
    for (di, ray_idx) in assignment {
        let cam = camera_ray(k, &dots[di]);
        let (point, gap) = intersect_rays(&cam, &proj.rays[ray_idx])?;
        observations.push(LaserObservation { index: ray_idx, dot: dots[di], point, gap });
    }
    observations.sort_by_key(|o| o.index);
    Ok(observations)
}
