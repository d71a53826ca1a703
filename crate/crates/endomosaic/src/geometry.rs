//! Core 3D/2D geometric types and transform algebra: perspective projection,
//! rigid motion with x-convention Euler angles, and plane homographies.
//!
//! Conventions used throughout the crate:
//! - 3D quantities are in millimetres, 2D quantities in pixels.
//! - Rotations are active, frames are right handed, a positive angle is a
//!   counterclockwise rotation when looking down the axis toward the origin.
//! - Angles are radians internally; degrees only appear at file/CLI
//!   boundaries.

use nalgebra::{Matrix3, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point2D = Point2<f64>;
pub type Point3D = Point3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Pinhole camera parameters. `f` is the focal length in mm, `lx`/`ly` the
/// sensor pixel pitch in mm/pixel and `(u, v)` the principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub f: f64,
    pub lx: f64,
    pub ly: f64,
    pub u: f64,
    pub v: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(f: f64, lx: f64, ly: f64, u: f64, v: f64, width: u32, height: u32) -> Result<Self> {
        if !(f > 0.0 && lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidInput(format!(
                "focal length and pixel pitch must be positive (f={f}, lx={lx}, ly={ly})"
            )));
        }
        if !(0.0 <= u && u < width as f64 && 0.0 <= v && v < height as f64) {
            return Err(Error::InvalidInput(format!(
                "principal point ({u}, {v}) outside the {width}x{height} image"
            )));
        }
        Ok(Self { f, lx, ly, u, v, width, height })
    }

    /// Focal length expressed in pixels along x.
    pub fn fx(&self) -> f64 {
        self.f / self.lx
    }

    /// Focal length expressed in pixels along y.
    pub fn fy(&self) -> f64 {
        self.f / self.ly
    }

    /// The 3x3 projection matrix K.
    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx(), 0.0, self.u, 0.0, self.fy(), self.v, 0.0, 0.0, 1.0)
    }

    /// Scale the intrinsics for an image resized by `factor` (e.g. 0.5 for
    /// half resolution).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            f: self.f,
            lx: self.lx / factor,
            ly: self.ly / factor,
            u: self.u * factor,
            v: self.v * factor,
            width: (self.width as f64 * factor).round() as u32,
            height: (self.height as f64 * factor).round() as u32,
        }
    }
}

/// Perspective projection of a camera-frame point onto the image plane.
pub fn project(k: &CameraIntrinsics, p: &Point3D) -> Result<Point2D> {
    if p.z <= 0.0 {
        return Err(Error::NonPositiveDepth { z: p.z });
    }
    Ok(Point2D::new(k.fx() * p.x / p.z + k.u, k.fy() * p.y / p.z + k.v))
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Rotation matrix from x-convention Euler angles: a rotation of `theta1`
/// about z, then `theta2` about the rotated x', then `theta3` about the
/// rotated z''. As a product of fixed-axis elementary matrices this is
/// `Rz(theta3) * Rx(theta2) * Rz(theta1)`.
pub fn rotation_from_euler(theta1: f64, theta2: f64, theta3: f64) -> Mat3 {
    rot_z(theta3) * rot_x(theta2) * rot_z(theta1)
}

/// Recover x-convention Euler angles from a rotation matrix, with
/// `theta2 in [0, pi]`. At gimbal lock (`theta2` near 0 or pi) the split
/// between `theta1` and `theta3` is not unique; the matrix round trip is the
/// contract, not the angle triplet.
pub fn euler_from_rotation(r: &Mat3) -> (f64, f64, f64) {
    let theta2 = r[(2, 2)].clamp(-1.0, 1.0).acos();
    let s2 = theta2.sin();
    if s2 > 1e-10 {
        let theta1 = r[(2, 0)].atan2(r[(2, 1)]);
        let theta3 = r[(0, 2)].atan2(-r[(1, 2)]);
        (theta1, theta2, theta3)
    } else if r[(2, 2)] > 0.0 {
        // theta2 ~ 0: R = Rz(theta1 + theta3)
        (r[(1, 0)].atan2(r[(0, 0)]), 0.0, 0.0)
    } else {
        // theta2 ~ pi: R = Rz(theta3 - theta1) * Rx(pi)
        (0.0, std::f64::consts::PI, r[(1, 0)].atan2(r[(0, 0)]))
    }
}

/// 6-DOF rigid motion, stored as x-convention Euler angles (radians) plus a
/// translation in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform3D {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub translation: Vec3,
}

impl RigidTransform3D {
    pub fn identity() -> Self {
        Self { theta1: 0.0, theta2: 0.0, theta3: 0.0, translation: Vec3::zeros() }
    }

    pub fn new(theta1: f64, theta2: f64, theta3: f64, translation: Vec3) -> Self {
        Self { theta1, theta2, theta3, translation }
    }

    pub fn from_parts(rotation: &Mat3, translation: Vec3) -> Self {
        let (theta1, theta2, theta3) = euler_from_rotation(rotation);
        Self { theta1, theta2, theta3, translation }
    }

    pub fn rotation(&self) -> Mat3 {
        rotation_from_euler(self.theta1, self.theta2, self.theta3)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.rotation() - Mat3::identity()).norm() < tol && self.translation.norm() < tol
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation();
        let rt = r.transpose();
        Self::from_parts(&rt, -(rt * self.translation))
    }
}

/// Apply a rigid transform: `R * p + D`.
pub fn apply_rigid(t: &RigidTransform3D, p: &Point3D) -> Point3D {
    Point3D::from(t.rotation() * p.coords + t.translation)
}

/// Compose rigid transforms so that
/// `apply_rigid(compose_rigid(a, b), p) == apply_rigid(a, apply_rigid(b, p))`.
pub fn compose_rigid(a: &RigidTransform3D, b: &RigidTransform3D) -> RigidTransform3D {
    let ra = a.rotation();
    RigidTransform3D::from_parts(&(ra * b.rotation()), ra * b.translation + a.translation)
}

/// 8-parameter projective map between image planes, with `a33` fixed to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography2D {
    coeffs: [f64; 8],
}

impl Homography2D {
    pub fn identity() -> Self {
        Self { coeffs: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0] }
    }

    /// Build from the 8 coefficients `[a11, a12, a13, a21, a22, a23, a31, a32]`.
    pub fn from_coeffs(coeffs: [f64; 8]) -> Self {
        Self { coeffs }
    }

    /// Build from an arbitrary 3x3 projective matrix, rescaling so a33 = 1.
    pub fn from_matrix(m: &Mat3) -> Result<Self> {
        let a33 = m[(2, 2)];
        if a33.abs() < 1e-12 {
            return Err(Error::DegenerateHomography);
        }
        let n = m / a33;
        Ok(Self {
            coeffs: [
                n[(0, 0)], n[(0, 1)], n[(0, 2)],
                n[(1, 0)], n[(1, 1)], n[(1, 2)],
                n[(2, 0)], n[(2, 1)],
            ],
        })
    }

    pub fn coeffs(&self) -> &[f64; 8] {
        &self.coeffs
    }

    pub fn matrix(&self) -> Mat3 {
        let a = &self.coeffs;
        Mat3::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], 1.0)
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.matrix().try_inverse().ok_or(Error::DegenerateHomography)?;
        Self::from_matrix(&inv)
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        Self::from_matrix(&(self.matrix() * other.matrix()))
    }
}

/// Apply a homography to a pixel: divide by `beta = a31*x + a32*y + 1`.
pub fn apply_homography(h: &Homography2D, p: &Point2D) -> Result<Point2D> {
    let a = h.coeffs();
    let beta = a[6] * p.x + a[7] * p.y + 1.0;
    if beta.abs() < 1e-12 {
        return Err(Error::DegenerateProjection { beta });
    }
    Ok(Point2D::new(
        (a[0] * p.x + a[1] * p.y + a[2]) / beta,
        (a[3] * p.x + a[4] * p.y + a[5]) / beta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn euler_identity() {
        assert_relative_eq!(rotation_from_euler(0.0, 0.0, 0.0), Mat3::identity());
    }

    #[test]
    fn euler_elementary_z() {
        // theta1 = pi/2 about z maps x onto y.
        let r = rotation_from_euler(std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let v = r * Vec3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(v, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn euler_matches_elementary_product() {
        // Oracle: the explicit product of the three elementary matrices.
        let (t1, t2, t3) = (0.1, 0.2, 0.3);
        let oracle = rot_z(t3) * rot_x(t2) * rot_z(t1);
        assert_relative_eq!(rotation_from_euler(t1, t2, t3), oracle, epsilon = 1e-15);
    }

    #[test]
    fn euler_round_trip_matrix_contract() {
        let r = rotation_from_euler(1.3, 2.1, -0.7);
        let (a, b, c) = euler_from_rotation(&r);
        assert!(b >= 0.0 && b <= std::f64::consts::PI);
        assert_relative_eq!(rotation_from_euler(a, b, c), r, epsilon = 1e-9);
    }

    #[test]
    fn euler_round_trip_gimbal_lock() {
        for t2 in [0.0, std::f64::consts::PI] {
            let r = rotation_from_euler(0.4, t2, 0.9);
            let (a, b, c) = euler_from_rotation(&r);
            assert_relative_eq!(rotation_from_euler(a, b, c), r, epsilon = 1e-9);
        }
    }

    #[test]
    fn apply_rigid_identity_and_translation() {
        let p = Point3D::new(1.0, 2.0, 3.0);
        assert_relative_eq!(apply_rigid(&RigidTransform3D::identity(), &p), p);

        let t = RigidTransform3D::new(0.0, 0.0, 0.0, Vec3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(
            apply_rigid(&t, &Point3D::new(0.0, 0.0, 10.0)),
            Point3D::new(1.0, 0.0, 10.0)
        );
    }

    #[test]
    fn apply_rigid_rotation_oracle() {
        // Oracle: multiply by the rotation matrix directly.
        let t = RigidTransform3D::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0, Vec3::zeros());
        let p = Point3D::new(1.0, 0.0, 0.0);
        let oracle = Point3D::from(rotation_from_euler(t.theta1, t.theta2, t.theta3) * p.coords);
        assert_relative_eq!(apply_rigid(&t, &p), oracle, epsilon = 1e-15);
        assert_relative_eq!(apply_rigid(&t, &p), Point3D::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn compose_with_identity_and_inverse() {
        let b = RigidTransform3D::new(0.2, 0.4, -0.1, Vec3::new(1.0, -2.0, 3.0));
        let c = compose_rigid(&RigidTransform3D::identity(), &b);
        assert_relative_eq!(c.rotation(), b.rotation(), epsilon = 1e-12);
        assert_relative_eq!(c.translation, b.translation, epsilon = 1e-12);

        let id = compose_rigid(&b, &b.inverse());
        assert!(id.is_identity(1e-9));
    }

    #[test]
    fn chain_of_99_constant_translations() {
        let step = RigidTransform3D::new(0.0, 0.0, 0.0, Vec3::new(0.3, 0.0, 0.0));
        let mut total = RigidTransform3D::identity();
        for _ in 0..99 {
            total = compose_rigid(&total, &step);
        }
        assert_relative_eq!(total.translation.norm(), 29.7, epsilon = 1e-9);
    }

    #[test]
    fn project_principal_point_and_offset() {
        let k = CameraIntrinsics::new(8.0, 0.008, 0.008, 384.0, 288.0, 768, 576).unwrap();
        for z in [1.0, 20.0, 300.0] {
            let p = project(&k, &Point3D::new(0.0, 0.0, z)).unwrap();
            assert_relative_eq!(p, Point2D::new(384.0, 288.0), epsilon = 1e-12);
        }
        // f/lx = 1000, so 1 mm lateral at 20 mm depth is 50 px.
        let p = project(&k, &Point3D::new(1.0, 0.0, 20.0)).unwrap();
        assert_relative_eq!(p, Point2D::new(434.0, 288.0), epsilon = 1e-12);
        assert!(matches!(
            project(&k, &Point3D::new(0.0, 0.0, -1.0)),
            Err(Error::NonPositiveDepth { .. })
        ));
    }

    #[test]
    fn homography_identity_translation_and_perspective() {
        let h = Homography2D::identity();
        let p = Point2D::new(100.0, 50.0);
        assert_relative_eq!(apply_homography(&h, &p).unwrap(), p);

        let t = Homography2D::from_coeffs([1.0, 0.0, 5.0, 0.0, 1.0, -3.0, 0.0, 0.0]);
        assert_relative_eq!(
            apply_homography(&t, &Point2D::new(0.0, 0.0)).unwrap(),
            Point2D::new(5.0, -3.0)
        );

        // Oracle: homogeneous 3-vector multiply and divide.
        let h = Homography2D::from_coeffs([1.2, 0.1, 4.0, -0.2, 0.9, 1.0, 0.001, 0.0]);
        let p = Point2D::new(100.0, 0.0);
        let hp = h.matrix() * Vec3::new(p.x, p.y, 1.0);
        let beta = 0.001 * 100.0 + 1.0;
        assert_relative_eq!(hp.z, beta, epsilon = 1e-12);
        let got = apply_homography(&h, &p).unwrap();
        assert_relative_eq!(got.x, hp.x / hp.z, epsilon = 1e-12);
        assert_relative_eq!(got.x, (1.2 * 100.0 + 4.0) / 1.1, epsilon = 1e-12);
    }

    #[test]
    fn homography_degenerate_beta() {
        let h = Homography2D::from_coeffs([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -0.01, 0.0]);
        assert!(matches!(
            apply_homography(&h, &Point2D::new(100.0, 0.0)),
            Err(Error::DegenerateProjection { .. })
        ));
    }

    fn arb_angles() -> impl Strategy<Value = (f64, f64, f64)> {
        (
            -6.0f64..6.0,
            0.01f64..std::f64::consts::PI - 0.01,
            -6.0f64..6.0,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn rotation_orthonormality((t1, t2, t3) in arb_angles()) {
            let r = rotation_from_euler(t1, t2, t3);
            let err = (r.transpose() * r - Mat3::identity()).abs().max();
            prop_assert!(err < 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn composition_associativity(
            (a1, a2, a3) in arb_angles(),
            (b1, b2, b3) in arb_angles(),
            (c1, c2, c3) in arb_angles(),
            tx in -10.0f64..10.0, ty in -10.0f64..10.0, tz in -10.0f64..10.0,
        ) {
            let a = RigidTransform3D::new(a1, a2, a3, Vec3::new(tx, ty, tz));
            let b = RigidTransform3D::new(b1, b2, b3, Vec3::new(ty, tz, tx));
            let c = RigidTransform3D::new(c1, c2, c3, Vec3::new(tz, tx, ty));
            let left = compose_rigid(&compose_rigid(&a, &b), &c);
            let right = compose_rigid(&a, &compose_rigid(&b, &c));
            prop_assert!((left.rotation() - right.rotation()).abs().max() < 1e-9);
            prop_assert!((left.translation - right.translation).abs().max() < 1e-9);
        }

        #[test]
        fn compose_matches_pointwise(
            (a1, a2, a3) in arb_angles(),
            (b1, b2, b3) in arb_angles(),
            px in -20.0f64..20.0, py in -20.0f64..20.0, pz in -20.0f64..20.0,
        ) {
            let a = RigidTransform3D::new(a1, a2, a3, Vec3::new(1.0, -2.0, 0.5));
            let b = RigidTransform3D::new(b1, b2, b3, Vec3::new(-0.3, 4.0, 2.0));
            let p = Point3D::new(px, py, pz);
            let direct = apply_rigid(&compose_rigid(&a, &b), &p);
            let nested = apply_rigid(&a, &apply_rigid(&b, &p));
            prop_assert!((direct - nested).norm() < 1e-9);
        }

        #[test]
        fn homography_composition_consistency(
            a13 in -30.0f64..30.0, a23 in -30.0f64..30.0,
            s in 0.8f64..1.2, r in -0.3f64..0.3,
            p31 in -1e-4f64..1e-4, p32 in -1e-4f64..1e-4,
            px in 0.0f64..700.0, py in 0.0f64..500.0,
        ) {
            let h1 = Homography2D::from_coeffs([
                s * r.cos(), -s * r.sin(), a13,
                s * r.sin(), s * r.cos(), a23,
                p31, p32,
            ]);
            let h2 = Homography2D::from_coeffs([1.0, 0.05, -a23, -0.05, 1.0, a13, 0.0, p31]);
            let p = Point2D::new(px, py);
            let composed = apply_homography(&h1.compose(&h2).unwrap(), &p).unwrap();
            let nested = apply_homography(&h1, &apply_homography(&h2, &p).unwrap()).unwrap();
            prop_assert!((composed - nested).norm() < 1e-6);
        }

        #[test]
        fn homography_apply_then_invert(
            a13 in -30.0f64..30.0, a23 in -30.0f64..30.0,
            p31 in -1e-4f64..1e-4,
            px in 0.0f64..700.0, py in 0.0f64..500.0,
        ) {
            let h = Homography2D::from_coeffs([1.1, 0.02, a13, -0.03, 0.95, a23, p31, 0.0]);
            let p = Point2D::new(px, py);
            let q = apply_homography(&h, &p).unwrap();
            let back = apply_homography(&h.inverse().unwrap(), &q).unwrap();
            prop_assert!((back - p).norm() < 1e-6);
        }
    }
}
