//! Frame synthesis: per-pixel ray casting of a phantom surface with the
//! procedural texture, plus laser-dot splatting and exact per-frame ground
//! truth. All randomness is drawn from per-frame seeded streams, so output
//! is byte-identical across runs and independent of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{apply_rigid, project, CameraIntrinsics, Point2D, Point3D, RigidTransform3D};
use crate::imaging::{ColorImage, PixelMask};
use crate::mosaic::Frame;
use crate::simulator::surface::PhantomSurface;
use crate::simulator::texture::PhantomTexture;
use crate::simulator::trajectory::poses_from_deltas;
use crate::triangulation::{reconstruct_frame_points, ProjectorModel, Ray3D};

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub intrinsics: CameraIntrinsics,
    pub projector: ProjectorModel,
    pub texture_seed: u64,
    /// Standard deviation of the rendered laser-dot footprint (pixels).
    pub dot_sigma_px: f64,
    /// Gaussian noise on the reported/rendered dot centers (pixels, 0 = off).
    pub dot_noise_px: f64,
    /// Gaussian gray-level noise per channel (0 = off).
    pub pixel_noise: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn noiseless(intrinsics: CameraIntrinsics, projector: ProjectorModel, seed: u64) -> Self {
        Self {
            intrinsics,
            projector,
            texture_seed: seed,
            dot_sigma_px: 1.2,
            dot_noise_px: 0.0,
            pixel_noise: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedFrame {
    pub index: usize,
    pub image: ColorImage,
    /// Rendered (possibly noise-perturbed) dot centers, in projector-ray order.
    pub dots: Vec<Point2D>,
    /// True = pixel carries surface texture (no laser-dot footprint).
    pub dot_mask: PixelMask,
    /// Exact dot projections before noise.
    pub true_dots: Vec<Point2D>,
    /// Exact laser surface points in this frame's camera coordinates.
    pub true_points: Vec<Point3D>,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Camera-to-world pose of each viewpoint.
    pub poses: Vec<RigidTransform3D>,
    /// Exact pairwise transforms: deltas[k] maps frame k+1 coords to frame k.
    pub deltas: Vec<RigidTransform3D>,
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn frame_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn simulate_frame(
    surface: &PhantomSurface,
    cfg: &SimulationConfig,
    pose: &RigidTransform3D,
    index: usize,
) -> Result<SimulatedFrame> {
    let k = &cfg.intrinsics;
    let texture = PhantomTexture::new(cfg.texture_seed);
    let rot = pose.rotation();
    let cam_center = apply_rigid(pose, &Point3D::origin());
    let inv_pose = pose.inverse();
    let mut rng = frame_rng(cfg.seed, index);

    let mut image = ColorImage::new(k.width, k.height);
    for y in 0..k.height {
        let mut hint: Option<f64> = None;
        for x in 0..k.width {
            let dir_cam = nalgebra::Vector3::new(
                (x as f64 - k.u) * k.lx / k.f,
                (y as f64 - k.v) * k.ly / k.f,
                1.0,
            );
            let ray = Ray3D::new(cam_center, rot * dir_cam)?;
            let color = match surface.intersect(&ray, hint) {
                Some((p, t)) => {
                    hint = Some(t);
                    texture.color(&p)
                }
                None => {
                    hint = None;
                    [8, 4, 4]
                }
            };
            image.set(x, y, color);
        }
    }

    if cfg.pixel_noise > 0.0 {
        for y in 0..k.height {
            for x in 0..k.width {
                let mut c = image.get(x, y);
                for ch in &mut c {
                    let v = *ch as f64 + cfg.pixel_noise * standard_normal(&mut rng);
                    *ch = v.round().clamp(0.0, 255.0) as u8;
                }
                image.set(x, y, c);
            }
        }
    }

    // Laser dots: intersect each projector ray with the surface in world
    // coordinates, then express the hit in this frame's camera coordinates.
    let mut true_points = Vec::with_capacity(cfg.projector.len());
    let mut true_dots = Vec::with_capacity(cfg.projector.len());
    let mut dots = Vec::with_capacity(cfg.projector.len());
    for (ri, ray) in cfg.projector.rays.iter().enumerate() {
        let world_ray = Ray3D::new(apply_rigid(pose, &ray.origin), rot * ray.direction)?;
        let (pw, _) = surface.intersect(&world_ray, None).ok_or(Error::OutOfView { ray: ri })?;
        let pc = apply_rigid(&inv_pose, &pw);
        let dot = project(k, &pc)?;
        let margin = 3.0 * cfg.dot_sigma_px;
        if dot.x < margin
            || dot.y < margin
            || dot.x > k.width as f64 - 1.0 - margin
            || dot.y > k.height as f64 - 1.0 - margin
        {
            return Err(Error::OutOfView { ray: ri });
        }
        let noisy = if cfg.dot_noise_px > 0.0 {
            Point2D::new(
                dot.x + cfg.dot_noise_px * standard_normal(&mut rng),
                dot.y + cfg.dot_noise_px * standard_normal(&mut rng),
            )
        } else {
            dot
        };
        true_points.push(pc);
        true_dots.push(dot);
        dots.push(noisy);
    }

    // Splat the dots as green Gaussian blobs; mask out their footprint.
    let mut dot_mask = PixelMask::all_true(k.width, k.height);
    let sigma = cfg.dot_sigma_px;
    let reach = (4.0 * sigma).ceil() as i64;
    for d in &dots {
        let (cx, cy) = (d.x, d.y);
        let (ix, iy) = (cx.round() as i64, cy.round() as i64);
        for py in (iy - reach).max(0)..=(iy + reach).min(k.height as i64 - 1) {
            for px in (ix - reach).max(0)..=(ix + reach).min(k.width as i64 - 1) {
                let r2 = (px as f64 - cx).powi(2) + (py as f64 - cy).powi(2);
                let alpha = (-r2 / (2.0 * sigma * sigma)).exp();
                if alpha < 0.005 {
                    continue;
                }
                let (ux, uy) = (px as u32, py as u32);
                dot_mask.set(ux, uy, false);
                let base = image.get(ux, uy);
                let laser = [60.0, 255.0, 70.0];
                let mut c = [0u8; 3];
                for i in 0..3 {
                    c[i] = (base[i] as f64 * (1.0 - alpha) + laser[i] * alpha)
                        .round()
                        .clamp(0.0, 255.0) as u8;
                }
                image.set(ux, uy, c);
            }
        }
    }

    Ok(SimulatedFrame { index, image, dots, dot_mask, true_dots, true_points })
}

/// Render a whole sequence from an initial pose and per-pair deltas.
pub fn simulate_sequence(
    surface: &PhantomSurface,
    cfg: &SimulationConfig,
    initial_pose: &RigidTransform3D,
    deltas: &[RigidTransform3D],
) -> Result<(Vec<SimulatedFrame>, GroundTruth)> {
    let poses = poses_from_deltas(initial_pose, deltas);
    let frames: Result<Vec<SimulatedFrame>> = poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| simulate_frame(surface, cfg, pose, i))
        .collect();
    Ok((frames?, GroundTruth { poses, deltas: deltas.to_vec() }))
}

/// Convert simulated frames into registration-ready frames, triangulating
/// laser points from the rendered dots.
pub fn to_frames(sim: &[SimulatedFrame], cfg: &SimulationConfig) -> Result<Vec<Frame>> {
    sim.iter()
        .map(|s| {
            let obs = reconstruct_frame_points(&cfg.intrinsics, &cfg.projector, &s.dots)?;
            Ok(Frame::new(s.index, s.image.clone(), obs, s.dot_mask.clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::simulator::trajectory::constant_translation;

    fn small_cfg(seed: u64) -> SimulationConfig {
        let k = CameraIntrinsics::new(8.0, 0.08, 0.08, 48.0, 36.0, 96, 72).unwrap();
        let proj = ProjectorModel::standard();
        SimulationConfig::noiseless(k, proj, seed)
    }

    #[test]
    fn identity_trajectory_gives_identical_frames() {
        let s = PhantomSurface::Plane { z0: 30.0 };
        let cfg = small_cfg(11);
        let deltas = vec![RigidTransform3D::identity()];
        let (frames, gt) =
            simulate_sequence(&s, &cfg, &RigidTransform3D::identity(), &deltas).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(gt.poses.len(), 2);
        assert_eq!(frames[0].image.as_raw(), frames[1].image.as_raw());
        assert_eq!(frames[0].dots, frames[1].dots);
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = PhantomSurface::Wave { z0: 30.0, amplitude: 10.0, period: 40.0 };
        let mut cfg = small_cfg(5);
        cfg.pixel_noise = 1.5;
        cfg.dot_noise_px = 0.3;
        let a = simulate_frame(&s, &cfg, &RigidTransform3D::identity(), 0).unwrap();
        let b = simulate_frame(&s, &cfg, &RigidTransform3D::identity(), 0).unwrap();
        assert_eq!(a.image.as_raw(), b.image.as_raw());
        assert_eq!(a.dots, b.dots);
        // A different frame index draws different noise.
        let c = simulate_frame(&s, &cfg, &RigidTransform3D::identity(), 1).unwrap();
        assert_ne!(a.dots, c.dots);
    }

    #[test]
    fn reconstructed_points_match_ground_truth() {
        let s = PhantomSurface::Plane { z0: 30.0 };
        let cfg = small_cfg(2);
        let f = simulate_frame(&s, &cfg, &RigidTransform3D::identity(), 0).unwrap();
        let frames = to_frames(std::slice::from_ref(&f), &cfg).unwrap();
        assert_eq!(frames[0].observations.len(), 8);
        for (obs, truth) in frames[0].observations.iter().zip(&f.true_points) {
            assert!(
                (obs.point - truth).norm() < 1e-6,
                "triangulation error {}",
                (obs.point - truth).norm()
            );
        }
    }

    #[test]
    fn dot_mask_covers_splats_only() {
        let s = PhantomSurface::Plane { z0: 30.0 };
        let cfg = small_cfg(9);
        let f = simulate_frame(&s, &cfg, &RigidTransform3D::identity(), 0).unwrap();
        for d in &f.dots {
            assert!(!f.dot_mask.get(d.x.round() as u32, d.y.round() as u32));
        }
        let masked = (0..cfg.intrinsics.height)
            .flat_map(|y| (0..cfg.intrinsics.width).map(move |x| (x, y)))
            .filter(|&(x, y)| !f.dot_mask.get(x, y))
            .count();
        let total = (cfg.intrinsics.width * cfg.intrinsics.height) as usize;
        assert!(masked > 0 && masked < total / 10, "masked {masked} of {total}");
    }

    #[test]
    fn dot_out_of_view_is_an_error() {
        let s = PhantomSurface::Plane { z0: 30.0 };
        let mut cfg = small_cfg(1);
        // Wide cone: dots land outside the small image.
        cfg.projector = ProjectorModel::cone(Point3D::new(3.0, 0.0, 0.0), 2.0, 8);
        assert!(matches!(
            simulate_frame(&s, &cfg, &RigidTransform3D::identity(), 0),
            Err(Error::OutOfView { .. })
        ));
    }

    #[test]
    fn translation_moves_texture_not_geometry_noise() {
        // Two poses separated in x: the second image is (approximately) a
        // shifted copy of the first over a fronto-parallel plane.
        let s = PhantomSurface::Plane { z0: 30.0 };
        let cfg = small_cfg(21);
        let deltas = constant_translation(2, Vec3::new(1.2, 0.0, 0.0));
        let (frames, _) =
            simulate_sequence(&s, &cfg, &RigidTransform3D::identity(), &deltas).unwrap();
        let k = &cfg.intrinsics;
        let shift = (k.fx() * 1.2 / 30.0).round() as i64; // integer by construction: 4 px
        assert_eq!(shift, 4);
        let mut matches = 0;
        let mut total = 0;
        for y in 10..(k.height as i64 - 10) {
            for x in 10..(k.width as i64 - 10 - shift) {
                let a = frames[0].image.get((x + shift) as u32, y as u32);
                let b = frames[1].image.get(x as u32, y as u32);
                let ok_mask = frames[0].dot_mask.get((x + shift) as u32, y as u32)
                    && frames[1].dot_mask.get(x as u32, y as u32);
                if !ok_mask {
                    continue;
                }
                total += 1;
                if a == b {
                    matches += 1;
                }
            }
        }
        assert!(matches as f64 > 0.99 * total as f64, "{matches}/{total}");
    }
}
