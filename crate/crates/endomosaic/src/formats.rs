//! On-disk formats: calibration / transform / laser-data JSON, PNG images,
//! ASCII PLY meshes and CSV error tables.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::SequenceReport;
use crate::geometry::{CameraIntrinsics, Point2D, Point3D, RigidTransform3D, Vec3};
use crate::imaging::ColorImage;
use crate::mosaic::Mesh;
use crate::triangulation::{LaserObservation, ProjectorModel, Ray3D};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RayRecord {
    pub ox: f64,
    pub oy: f64,
    pub oz: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl From<&Ray3D> for RayRecord {
    fn from(r: &Ray3D) -> Self {
        Self {
            ox: r.origin.x,
            oy: r.origin.y,
            oz: r.origin.z,
            dx: r.direction.x,
            dy: r.direction.y,
            dz: r.direction.z,
        }
    }
}

impl RayRecord {
    pub fn to_ray(&self) -> Result<Ray3D> {
        Ray3D::new(Point3D::new(self.ox, self.oy, self.oz), Vec3::new(self.dx, self.dy, self.dz))
    }
}

/// Camera intrinsics plus the fixed projector rays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Calibration {
    pub intrinsics: CameraIntrinsics,
    pub projector_rays: Vec<RayRecord>,
}

impl Calibration {
    pub fn new(intrinsics: CameraIntrinsics, projector: &ProjectorModel) -> Self {
        Self { intrinsics, projector_rays: projector.rays.iter().map(RayRecord::from).collect() }
    }

    pub fn projector(&self) -> Result<ProjectorModel> {
        let rays = self.projector_rays.iter().map(RayRecord::to_ray).collect::<Result<_>>()?;
        Ok(ProjectorModel { rays })
    }
}

/// A rigid transform as human-readable fields (degrees / mm).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TransformRecord {
    pub theta1_deg: f64,
    pub theta2_deg: f64,
    pub theta3_deg: f64,
    pub dx_mm: f64,
    pub dy_mm: f64,
    pub dz_mm: f64,
}

impl From<&RigidTransform3D> for TransformRecord {
    fn from(t: &RigidTransform3D) -> Self {
        Self {
            theta1_deg: t.theta1.to_degrees(),
            theta2_deg: t.theta2.to_degrees(),
            theta3_deg: t.theta3.to_degrees(),
            dx_mm: t.translation.x,
            dy_mm: t.translation.y,
            dz_mm: t.translation.z,
        }
    }
}

impl TransformRecord {
    pub fn to_transform(&self) -> RigidTransform3D {
        RigidTransform3D::new(
            self.theta1_deg.to_radians(),
            self.theta2_deg.to_radians(),
            self.theta3_deg.to_radians(),
            Vec3::new(self.dx_mm, self.dy_mm, self.dz_mm),
        )
    }
}

/// Per-frame laser measurements: segmented dots and triangulated points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaserData {
    pub frame: usize,
    pub dots: Vec<[f64; 2]>,
    pub points: Vec<[f64; 3]>,
    pub ray_indices: Vec<usize>,
    pub gaps_mm: Vec<f64>,
}

impl LaserData {
    pub fn from_observations(frame: usize, obs: &[LaserObservation]) -> Self {
        Self {
            frame,
            dots: obs.iter().map(|o| [o.dot.x, o.dot.y]).collect(),
            points: obs.iter().map(|o| [o.point.x, o.point.y, o.point.z]).collect(),
            ray_indices: obs.iter().map(|o| o.index).collect(),
            gaps_mm: obs.iter().map(|o| o.gap).collect(),
        }
    }

    pub fn observations(&self) -> Result<Vec<LaserObservation>> {
        let n = self.dots.len();
        if self.points.len() != n || self.ray_indices.len() != n || self.gaps_mm.len() != n {
            return Err(Error::InvalidInput(format!(
                "laser data for frame {} has inconsistent array lengths",
                self.frame
            )));
        }
        Ok((0..n)
            .map(|i| LaserObservation {
                index: self.ray_indices[i],
                dot: Point2D::new(self.dots[i][0], self.dots[i][1]),
                point: Point3D::new(self.points[i][0], self.points[i][1], self.points[i][2]),
                gap: self.gaps_mm[i],
            })
            .collect())
    }
}

/// Exact simulator output for a sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub poses: Vec<TransformRecord>,
    pub pair_transforms: Vec<TransformRecord>,
}

/// Estimated transforms for a sequence: pairwise and chained-to-global.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub pairwise: Vec<TransformRecord>,
    pub global: Vec<TransformRecord>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_png(path: &Path, img: &ColorImage) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width, img.height, img.as_raw().to_vec())
        .ok_or_else(|| Error::InvalidInput("image buffer size mismatch".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn load_png(path: &Path) -> Result<ColorImage> {
    let img = image::open(path)?.to_rgb8();
    ColorImage::from_raw(img.width(), img.height(), img.into_raw())
}

/// ASCII PLY with vertex positions (mm) and per-face RGB colors.
pub fn write_ply(path: &Path, cloud: &[Point3D], mesh: &Mesh) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    out.push_str(&format!("element face {}\n", mesh.triangles.len()));
    out.push_str("property list uchar int vertex_indices\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    out.push_str("end_header\n");
    for p in cloud {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    for (tri, color) in mesh.triangles.iter().zip(&mesh.face_colors) {
        out.push_str(&format!(
            "3 {} {} {} {} {} {}\n",
            tri[0], tri[1], tri[2], color[0], color[1], color[2]
        ));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// One CSV row per registered pair, with a summary-stats trailer row.
pub fn write_report_csv(path: &Path, report: &SequenceReport) -> Result<()> {
    let mut out = String::from("pair,epsilon_3d_mm,epsilon_2d_px\n");
    for p in &report.pairs {
        out.push_str(&format!("{},{:.6},{:.6}\n", p.index, p.epsilon_3d_mm, p.epsilon_2d_px));
    }
    out.push_str(&format!(
        "mean,{:.6},{:.6}\nstd,{:.6},{:.6}\n",
        report.error_3d_mm.mean, report.error_2d_px.mean, report.error_3d_mm.std,
        report.error_2d_px.std
    ));
    fs::write(path, out)?;
    Ok(())
}
