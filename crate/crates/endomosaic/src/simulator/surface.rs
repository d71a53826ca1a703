//! Analytic phantom surfaces in world coordinates (mm): ray intersection for
//! rendering and nearest-point queries for reconstruction error measurement.

use serde::{Deserialize, Serialize};

use crate::geometry::{Point3D, Vec3};
use crate::simplex::{self, SimplexOptions};
use crate::triangulation::Ray3D;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomSurface {
    /// z = z0.
    Plane { z0: f64 },
    /// z = z0 + amplitude * sin(2 pi x / period); peak-to-trough is
    /// 2 * amplitude.
    Wave { z0: f64, amplitude: f64, period: f64 },
    /// Interior of a cylinder with axis along y at (0, *, z_axis), seen from
    /// below: z = z_axis - sqrt(radius^2 - x^2).
    HalfCylinder { radius: f64, z_axis: f64 },
    /// Ellipsoid interior around `center` with a Gaussian dent: the radius
    /// along unit direction w is
    /// `r_e(w) * (1 - dent_depth * exp(-angle(w, dent_dir)^2 / (2 s^2)))`
    /// where r_e is the ellipsoid radius and s = dent_width_rad.
    DentedOvoid {
        center: [f64; 3],
        semi_axes: [f64; 3],
        dent_direction: [f64; 3],
        dent_depth: f64,
        dent_width_rad: f64,
    },
}

const MARCH_STEP: f64 = 0.5;
const T_MAX: f64 = 500.0;
const BISECTIONS: usize = 60;

impl PhantomSurface {
    fn height(&self, x: f64, _y: f64) -> f64 {
        match *self {
            PhantomSurface::Plane { z0 } => z0,
            PhantomSurface::Wave { z0, amplitude, period } => {
                z0 + amplitude * (2.0 * std::f64::consts::PI * x / period).sin()
            }
            PhantomSurface::HalfCylinder { radius, z_axis } => {
                let d = radius * radius - x * x;
                if d <= 0.0 {
                    z_axis
                } else {
                    z_axis - d.sqrt()
                }
            }
            PhantomSurface::DentedOvoid { .. } => unreachable!("ovoid is not a heightfield"),
        }
    }

    /// Radius of the dented ovoid along unit direction `w` from its center.
    fn ovoid_radius(&self, w: &Vec3) -> f64 {
        let PhantomSurface::DentedOvoid {
            semi_axes, dent_direction, dent_depth, dent_width_rad, ..
        } = *self
        else {
            unreachable!("radius only defined for the ovoid");
        };
        let q = (w.x / semi_axes[0]).powi(2)
            + (w.y / semi_axes[1]).powi(2)
            + (w.z / semi_axes[2]).powi(2);
        let r_e = 1.0 / q.sqrt();
        let dd = Vec3::new(dent_direction[0], dent_direction[1], dent_direction[2]).normalize();
        let angle = w.dot(&dd).clamp(-1.0, 1.0).acos();
        r_e * (1.0 - dent_depth * (-angle * angle / (2.0 * dent_width_rad * dent_width_rad)).exp())
    }

    /// Surface point along unit direction `w` from the ovoid center.
    pub fn ovoid_point(&self, w: &Vec3) -> Point3D {
        let PhantomSurface::DentedOvoid { center, .. } = *self else {
            unreachable!("ovoid_point only defined for the ovoid");
        };
        let w = w.normalize();
        Point3D::new(center[0], center[1], center[2]) + w * self.ovoid_radius(&w)
    }

    /// Signed "inside" function along a ray: negative before the surface
    /// (camera side), positive beyond it.
    fn along(&self, ray: &Ray3D, t: f64) -> f64 {
        let p = ray.at(t);
        match *self {
            PhantomSurface::DentedOvoid { center, .. } => {
                let c = Point3D::new(center[0], center[1], center[2]);
                let d = p - c;
                let r = d.norm();
                if r < 1e-9 {
                    return -self.ovoid_radius(&Vec3::z());
                }
                r - self.ovoid_radius(&(d / r))
            }
            _ => p.z - self.height(p.x, p.y),
        }
    }

    /// First intersection of `ray` with the surface; `hint` warm-starts the
    /// march near a previously found parameter. Returns (point, t).
    pub fn intersect(&self, ray: &Ray3D, hint: Option<f64>) -> Option<(Point3D, f64)> {
        if let PhantomSurface::Plane { z0 } = *self {
            if ray.direction.z.abs() < 1e-12 {
                return None;
            }
            let t = (z0 - ray.origin.z) / ray.direction.z;
            return (t > 0.0).then(|| (ray.at(t), t));
        }

        let start = hint.map_or(1e-6, |h| (h - 2.0 * MARCH_STEP).max(1e-6));
        let mut t0 = start;
        let mut f0 = self.along(ray, t0);
        if f0 > 0.0 {
            // Warm start overshot past the surface; restart from the origin.
            t0 = 1e-6;
            f0 = self.along(ray, t0);
            if f0 > 0.0 {
                return None;
            }
        }
        let mut t1 = t0;
        loop {
            t1 += MARCH_STEP;
            if t1 > T_MAX {
                return None;
            }
            let f1 = self.along(ray, t1);
            if f1 >= 0.0 {
                break;
            }
            t0 = t1;
            f0 = f1;
        }
        let _ = f0;
        let mut lo = t0;
        let mut hi = t1;
        for _ in 0..BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if self.along(ray, mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        Some((ray.at(t), t))
    }

    /// Closest surface point to `p`.
    pub fn nearest_point(&self, p: &Point3D) -> Point3D {
        match *self {
            PhantomSurface::Plane { z0 } => Point3D::new(p.x, p.y, z0),
            PhantomSurface::Wave { .. } => {
                // The wave is extruded along y: optimize over x only.
                let d2 = |v: &[f64]| -> f64 {
                    let x = v[0];
                    let z = self.height(x, p.y);
                    (x - p.x).powi(2) + (z - p.z).powi(2)
                };
                let out = simplex::minimize(
                    d2,
                    simplex::axis_simplex(&[p.x], &[0.5]),
                    &SimplexOptions { max_iterations: 400, size_tolerance: Some(1e-10) },
                    |_, _| false,
                );
                let x = out.best[0];
                Point3D::new(x, p.y, self.height(x, p.y))
            }
            PhantomSurface::HalfCylinder { radius, z_axis } => {
                let rx = p.x;
                let rz = p.z - z_axis;
                let n = (rx * rx + rz * rz).sqrt();
                if n < 1e-12 {
                    return Point3D::new(0.0, p.y, z_axis - radius);
                }
                let (mut ux, mut uz) = (rx / n, rz / n);
                if uz > 0.0 {
                    // Only the lower half exists; clamp to the rim.
                    uz = 0.0;
                    ux = if ux >= 0.0 { 1.0 } else { -1.0 };
                }
                Point3D::new(radius * ux, p.y, z_axis + radius * uz)
            }
            PhantomSurface::DentedOvoid { center, .. } => {
                let c = Point3D::new(center[0], center[1], center[2]);
                let d = p - c;
                let start = if d.norm() < 1e-9 { Vec3::z() } else { d.normalize() };
                // Parameterize candidate directions by spherical angles.
                let theta0 = start.z.clamp(-1.0, 1.0).acos();
                let phi0 = start.y.atan2(start.x);
                let d2 = |v: &[f64]| -> f64 {
                    let (st, ct) = v[0].sin_cos();
                    let (sp, cp) = v[1].sin_cos();
                    let w = Vec3::new(st * cp, st * sp, ct);
                    (self.ovoid_point(&w) - p).norm_squared()
                };
                let out = simplex::minimize(
                    d2,
                    simplex::axis_simplex(&[theta0, phi0], &[0.05, 0.05]),
                    &SimplexOptions { max_iterations: 600, size_tolerance: Some(1e-10) },
                    |_, _| false,
                );
                let (st, ct) = out.best[0].sin_cos();
                let (sp, cp) = out.best[1].sin_cos();
                self.ovoid_point(&Vec3::new(st * cp, st * sp, ct))
            }
        }
    }

    /// Unsigned distance from `p` to the surface.
    pub fn distance(&self, p: &Point3D) -> f64 {
        (self.nearest_point(p) - p).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn wave() -> PhantomSurface {
        PhantomSurface::Wave { z0: 30.0, amplitude: 10.0, period: 40.0 }
    }

    fn ovoid() -> PhantomSurface {
        PhantomSurface::DentedOvoid {
            center: [0.0, 0.0, 35.0],
            semi_axes: [55.0, 50.0, 35.0],
            dent_direction: [0.0, -1.0, 0.3],
            dent_depth: 0.12,
            dent_width_rad: 0.5,
        }
    }

    #[test]
    fn wave_peak_to_trough_is_twice_amplitude() {
        let s = wave();
        // Peak at x = period/4, trough at x = 3 period / 4.
        let peak = s.height(10.0, 0.0);
        let trough = s.height(30.0, 0.0);
        assert_relative_eq!(peak - trough, 20.0, epsilon = 1e-12);
        assert_relative_eq!(peak, 40.0, epsilon = 1e-12);
        assert_relative_eq!(s.height(0.0, 5.0), 30.0, epsilon = 1e-12);
    }

    #[test]
    fn plane_intersection_is_analytic() {
        let s = PhantomSurface::Plane { z0: 30.0 };
        let r = Ray3D::new(Point3D::new(1.0, 2.0, 0.0), Vec3::new(0.1, -0.2, 1.0)).unwrap();
        let (p, t) = s.intersect(&r, None).unwrap();
        assert_relative_eq!(p.z, 30.0, epsilon = 1e-12);
        assert_relative_eq!(p, r.at(t), epsilon = 1e-12);
        // Ray parallel to the plane misses.
        let r = Ray3D::new(Point3D::origin(), Vec3::x()).unwrap();
        assert!(s.intersect(&r, None).is_none());
    }

    #[test]
    fn wave_intersection_matches_height() {
        let s = wave();
        let r = Ray3D::new(Point3D::new(3.0, -2.0, 0.0), Vec3::new(0.2, 0.1, 1.0)).unwrap();
        let (p, t) = s.intersect(&r, None).unwrap();
        assert!((p.z - s.height(p.x, p.y)).abs() < 1e-8);
        // Warm-started query agrees with the cold one.
        let (p2, _) = s.intersect(&r, Some(t)).unwrap();
        assert_relative_eq!(p, p2, epsilon = 1e-8);
    }

    #[test]
    fn half_cylinder_depth_at_axis() {
        let s = PhantomSurface::HalfCylinder { radius: 35.0, z_axis: 65.0 };
        let r = Ray3D::new(Point3D::origin(), Vec3::z()).unwrap();
        let (p, _) = s.intersect(&r, None).unwrap();
        assert!((p.z - 30.0).abs() < 1e-8);
    }

    #[test]
    fn ovoid_semi_axis_points() {
        // Along +x from the center (orthogonal to the dent direction, far
        // outside the dent's angular footprint) the radius is essentially
        // the x semi-axis.
        let s = ovoid();
        let p = s.ovoid_point(&Vec3::x());
        assert!((p - Point3D::new(55.0, 0.0, 35.0)).norm() < 0.15);

        // Toward the dent the radius is reduced by the full dent depth.
        let PhantomSurface::DentedOvoid { dent_direction, .. } = s else { unreachable!() };
        let dd = Vec3::new(dent_direction[0], dent_direction[1], dent_direction[2]).normalize();
        let undented = 1.0 / ((dd.x / 55.0).powi(2) + (dd.y / 50.0).powi(2) + (dd.z / 35.0).powi(2)).sqrt();
        let dented = (s.ovoid_point(&dd) - Point3D::new(0.0, 0.0, 35.0)).norm();
        assert_relative_eq!(dented, undented * (1.0 - 0.12), epsilon = 1e-9);
    }

    #[test]
    fn ovoid_ray_intersection_lies_on_surface() {
        let s = ovoid();
        let r = Ray3D::new(Point3D::new(0.0, 0.0, 35.0), Vec3::new(0.3, 0.2, 1.0)).unwrap();
        let (p, _) = s.intersect(&r, None).unwrap();
        let c = Point3D::new(0.0, 0.0, 35.0);
        let d = p - c;
        let residual = d.norm() - s.ovoid_radius(&d.normalize());
        assert!(residual.abs() < 1e-8, "residual {residual}");
    }

    #[test]
    fn nearest_point_of_surface_point_is_itself() {
        for s in [PhantomSurface::Plane { z0: 30.0 }, wave(), ovoid()] {
            let r = Ray3D::new(Point3D::new(1.0, 0.5, 35.0 * 0.0), Vec3::new(0.15, 0.1, 1.0));
            let r = match s {
                PhantomSurface::DentedOvoid { .. } => {
                    Ray3D::new(Point3D::new(0.0, 0.0, 35.0), Vec3::new(0.15, 0.1, 1.0)).unwrap()
                }
                _ => r.unwrap(),
            };
            let (p, _) = s.intersect(&r, None).unwrap();
            let q = s.nearest_point(&p);
            assert!((q - p).norm() < 1e-5, "self-nearest error {}", (q - p).norm());
            assert!(s.distance(&p) < 1e-5);
        }
    }

    #[test]
    fn nearest_point_is_no_farther_than_probes() {
        // The reported nearest point beats a coarse sweep of surface samples.
        let s = wave();
        let p = Point3D::new(7.3, 1.0, 26.0);
        let d = s.distance(&p);
        for i in 0..400 {
            let x = -20.0 + 0.1 * i as f64;
            let q = Point3D::new(x, p.y, s.height(x, p.y));
            assert!(d <= (q - p).norm() + 1e-9);
        }
    }

    #[test]
    fn half_cylinder_nearest_is_radial() {
        let s = PhantomSurface::HalfCylinder { radius: 35.0, z_axis: 65.0 };
        let p = Point3D::new(0.0, 4.0, 33.0);
        let q = s.nearest_point(&p);
        assert_relative_eq!(q, Point3D::new(0.0, 4.0, 30.0), epsilon = 1e-12);
        assert_relative_eq!(s.distance(&p), 3.0, epsilon = 1e-12);
    }
}
