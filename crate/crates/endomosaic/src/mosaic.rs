//! Global assembly: chain pairwise transforms into the first camera frame,
//! merge laser points into a cloud, mesh and texture it, and composite the
//! 2D mosaic with laser-dot inpainting.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::{
    apply_homography, apply_rigid, compose_rigid, project, CameraIntrinsics, Homography2D,
    Point2D, Point3D, RigidTransform3D,
};
use crate::imaging::{to_gray, ColorImage, GrayImage, PixelMask};
use crate::triangulation::LaserObservation;

/// One acquisition: the image, its laser observations and the usable-texture
/// mask (false on laser-dot pixels). The gray conversion is cached because
/// registration evaluates it many times.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: usize,
    pub image: ColorImage,
    pub gray: GrayImage,
    pub observations: Vec<LaserObservation>,
    pub dot_mask: PixelMask,
}

impl Frame {
    pub fn new(
        index: usize,
        image: ColorImage,
        observations: Vec<LaserObservation>,
        dot_mask: PixelMask,
    ) -> Self {
        let gray = to_gray(&image);
        Self { index, image, gray, observations, dot_mask }
    }
}

/// Chain pairwise transforms (k-1 -> k for k = 2..K) into per-frame global
/// transforms mapping each frame into the first camera frame. Frame 1 gets
/// identities; `global[k] = T(1,2) o T(2,3) o ... o T(k-1,k)`.
pub fn chain_globals(
    pairwise: &[(RigidTransform3D, Homography2D)],
) -> Result<(Vec<RigidTransform3D>, Vec<Homography2D>)> {
    let mut global_3d = Vec::with_capacity(pairwise.len() + 1);
    let mut global_2d = Vec::with_capacity(pairwise.len() + 1);
    global_3d.push(RigidTransform3D::identity());
    global_2d.push(Homography2D::identity());
    for (t3d, t2d) in pairwise {
        let prev3 = *global_3d.last().unwrap();
        let prev2 = *global_2d.last().unwrap();
        global_3d.push(compose_rigid(&prev3, t3d));
        global_2d.push(prev2.compose(t2d)?);
    }
    Ok((global_3d, global_2d))
}

/// Map every observation's point through its frame's global transform into
/// the first camera frame, ordered by (frame, ray index).
pub fn assemble_cloud(frames: &[Frame], global_3d: &[RigidTransform3D]) -> Vec<Point3D> {
    let mut cloud = Vec::new();
    for (frame, global) in frames.iter().zip(global_3d) {
        for obs in &frame.observations {
            cloud.push(apply_rigid(global, &obs.point));
        }
    }
    cloud
}

/// Triangle mesh over the cloud with one color per face. Vertex indices point
/// into the cloud; no vertices are invented.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub triangles: Vec<[usize; 3]>,
    pub face_colors: Vec<[u8; 3]>,
    /// Index of the frame each face color was sampled from (usize::MAX when
    /// no frame sees the face).
    pub face_frames: Vec<usize>,
}

/// Faces with any edge longer than this multiple of the median edge length
/// are dropped from the Delaunay triangulation.
const EDGE_CUTOFF_FACTOR: f64 = 5.0;

/// Triangulate the cloud with a 2.5D Delaunay over the dominant-plane
/// projection, then color each face from the earliest frame whose camera sees
/// the face centroid on a non-laser-dot pixel.
pub fn mesh_and_texture(
    cloud: &[Point3D],
    frames: &[Frame],
    global_3d: &[RigidTransform3D],
    k: &CameraIntrinsics,
) -> Result<Mesh> {
    if cloud.len() < 3 {
        return Err(Error::DegenerateCloud);
    }

    // Dominant plane via PCA; the two leading axes span the projection plane.
    let centroid = cloud.iter().fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords)
        / cloud.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in cloud {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    if eig.eigenvalues[order[1]] < 1e-12 {
        return Err(Error::DegenerateCloud);
    }
    let axis_u = eig.eigenvectors.column(order[0]).into_owned();
    let axis_v = eig.eigenvectors.column(order[1]).into_owned();

    let points2d: Vec<delaunator::Point> = cloud
        .iter()
        .map(|p| {
            let d = p.coords - centroid;
            delaunator::Point { x: d.dot(&axis_u), y: d.dot(&axis_v) }
        })
        .collect();
    let tri = delaunator::triangulate(&points2d);
    if tri.triangles.is_empty() {
        return Err(Error::DegenerateCloud);
    }

    let mut faces: Vec<[usize; 3]> = tri
        .triangles
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();

    // Edge-length cutoff removes the long sliver faces Delaunay creates at
    // the concave hull boundary.
    let mut edges: Vec<f64> = faces
        .iter()
        .flat_map(|f| {
            [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
                .map(|(a, b)| (cloud[a] - cloud[b]).norm())
        })
        .collect();
    edges.sort_by(f64::total_cmp);
    let median_edge = edges[edges.len() / 2];
    faces.retain(|f| {
        [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
            .iter()
            .all(|&(a, b)| (cloud[a] - cloud[b]).norm() <= EDGE_CUTOFF_FACTOR * median_edge)
    });

    let inverses: Vec<RigidTransform3D> = global_3d.iter().map(|g| g.inverse()).collect();
    let mut face_colors = Vec::with_capacity(faces.len());
    let mut face_frames = Vec::with_capacity(faces.len());
    for f in &faces {
        let centroid = Point3D::from(
            (cloud[f[0]].coords + cloud[f[1]].coords + cloud[f[2]].coords) / 3.0,
        );
        let mut color = [0u8; 3];
        let mut frame_idx = usize::MAX;
        for (fi, (frame, inv)) in frames.iter().zip(&inverses).enumerate() {
            let local = apply_rigid(inv, &centroid);
            if local.z <= 0.0 {
                continue;
            }
            let Ok(px) = project(k, &local) else { continue };
            let (xi, yi) = (px.x.round(), px.y.round());
            if xi < 0.0 || yi < 0.0 || xi >= frame.image.width as f64 || yi >= frame.image.height as f64
            {
                continue;
            }
            let (xi, yi) = (xi as u32, yi as u32);
            if !frame.dot_mask.get(xi, yi) {
                continue; // never sample laser-dot pixels
            }
            color = frame.image.get(xi, yi);
            frame_idx = fi;
            break;
        }
        face_colors.push(color);
        face_frames.push(frame_idx);
    }

    Ok(Mesh { triangles: faces, face_colors, face_frames })
}

/// The composited 2D mosaic: pixel data plus the offset of the canvas origin
/// in the first image's coordinate system.
#[derive(Debug, Clone)]
pub struct Mosaic2D {
    pub image: ColorImage,
    pub origin_x: f64,
    pub origin_y: f64,
    /// Laser-dot pixels of the last frame that had no successor to inpaint
    /// from and stay masked in the mosaic.
    pub unfilled_dot_pixels: usize,
}

pub const DEFAULT_MAX_CANVAS: u32 = 16384;

/// Composite all frames into the first image's coordinate system, first-wins
/// where frames overlap. Laser-dot pixels of frame k are inpainted from frame
/// k+1 through the pairwise homography; dot pixels of the last frame stay
/// masked and are counted.
pub fn render_mosaic_2d(
    frames: &[Frame],
    global_2d: &[Homography2D],
    pairwise_2d: &[Homography2D],
    max_canvas: u32,
) -> Result<Mosaic2D> {
    assert_eq!(frames.len(), global_2d.len());
    assert_eq!(pairwise_2d.len() + 1, frames.len().max(1));

    // Canvas bounds from the warped corners of every frame.
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let mut frame_bounds = Vec::with_capacity(frames.len());
    for (frame, h) in frames.iter().zip(global_2d) {
        let w = frame.image.width as f64;
        let hh = frame.image.height as f64;
        let mut fmin = (f64::INFINITY, f64::INFINITY);
        let mut fmax = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for corner in [(0.0, 0.0), (w - 1.0, 0.0), (0.0, hh - 1.0), (w - 1.0, hh - 1.0)] {
            let p = apply_homography(h, &Point2D::new(corner.0, corner.1))?;
            fmin.0 = fmin.0.min(p.x);
            fmin.1 = fmin.1.min(p.y);
            fmax.0 = fmax.0.max(p.x);
            fmax.1 = fmax.1.max(p.y);
        }
        min_x = min_x.min(fmin.0);
        min_y = min_y.min(fmin.1);
        max_x = max_x.max(fmax.0);
        max_y = max_y.max(fmax.1);
        frame_bounds.push((fmin, fmax));
    }

    let origin_x = min_x.floor();
    let origin_y = min_y.floor();
    let width_i = max_x.ceil() as i64 - origin_x as i64 + 1;
    let height_i = max_y.ceil() as i64 - origin_y as i64 + 1;
    if width_i <= 0
        || height_i <= 0
        || width_i > max_canvas as i64
        || height_i > max_canvas as i64
    {
        return Err(Error::CanvasOverflow { width: width_i, height: height_i, max: max_canvas });
    }
    let (cw, ch) = (width_i as u32, height_i as u32);

    let mut canvas = ColorImage::new(cw, ch);
    let mut filled = PixelMask::all_false(cw, ch);
    let mut unfilled_dot_pixels = 0usize;

    for (fi, frame) in frames.iter().enumerate() {
        let h_inv = global_2d[fi].inverse()?;
        // Inpainting source: frame k+1 through the pairwise homography
        // T2D(k, k+1), which maps I_{k+1} pixels onto I_k; we need its inverse.
        let successor = if fi + 1 < frames.len() {
            Some((&frames[fi + 1], pairwise_2d[fi].inverse()?))
        } else {
            None
        };

        let ((bx0, by0), (bx1, by1)) = frame_bounds[fi];
        let x0 = ((bx0 - origin_x).floor().max(0.0)) as u32;
        let y0 = ((by0 - origin_y).floor().max(0.0)) as u32;
        let x1 = (((bx1 - origin_x).ceil() as i64 + 1).min(cw as i64)) as u32;
        let y1 = (((by1 - origin_y).ceil() as i64 + 1).min(ch as i64)) as u32;

        for cy in y0..y1 {
            for cx in x0..x1 {
                if filled.get(cx, cy) {
                    continue; // first-wins
                }
                let target = Point2D::new(cx as f64 + origin_x, cy as f64 + origin_y);
                let Ok(src) = apply_homography(&h_inv, &target) else { continue };
                let sx = src.x.round();
                let sy = src.y.round();
                if sx < 0.0
                    || sy < 0.0
                    || sx >= frame.image.width as f64
                    || sy >= frame.image.height as f64
                {
                    continue;
                }
                let (sx, sy) = (sx as u32, sy as u32);
                if frame.dot_mask.get(sx, sy) {
                    canvas.set(cx, cy, frame.image.get(sx, sy));
                    filled.set(cx, cy, true);
                } else if let Some((next, ref pair_inv)) = successor {
                    // A laser dot hides the texture here; fetch it from the
                    // homologous pixel of the next frame.
                    if let Ok(q) = apply_homography(pair_inv, &src) {
                        let qx = q.x.round();
                        let qy = q.y.round();
                        if qx >= 0.0
                            && qy >= 0.0
                            && qx < next.image.width as f64
                            && qy < next.image.height as f64
                            && next.dot_mask.get(qx as u32, qy as u32)
                        {
                            canvas.set(cx, cy, next.image.get(qx as u32, qy as u32));
                            filled.set(cx, cy, true);
                        }
                    }
                } else {
                    unfilled_dot_pixels += 1;
                }
            }
        }
    }

    Ok(Mosaic2D { image: canvas, origin_x, origin_y, unfilled_dot_pixels })
}
