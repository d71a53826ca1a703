//! Image representation, gray conversion, laser-dot segmentation and masking,
//! homography warping, and mutual-information similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_homography, Homography2D, Point2D};

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: u32,
    pub height: u32,
    data: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0; (width * height * 3) as usize] }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != (width * height * 3) as usize {
            return Err(Error::InvalidInput(format!(
                "RGB buffer length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = ((y * self.width + x) * 3) as usize;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0; (width * height) as usize] }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != (width * height) as usize {
            return Err(Error::InvalidInput("gray buffer length mismatch".into()));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.data[(y * self.width + x) as usize] = v;
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    /// Bilinear sample at a sub-pixel location. Returns `None` when any of
    /// the four neighbors falls outside the image.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let x1 = x0 as u32 + 1;
        let y1 = y0 as u32 + 1;
        if x1 >= self.width || y1 >= self.height {
            // Exact hit on the last row/column still has all neighbors inside.
            if x0 as u32 == self.width - 1 && x == x0 && y1 < self.height {
                let fy = y - y0;
                let a = self.get(x0 as u32, y0 as u32) as f64;
                let b = self.get(x0 as u32, y1) as f64;
                return Some(a * (1.0 - fy) + b * fy);
            }
            if y0 as u32 == self.height - 1 && y == y0 && x1 < self.width {
                let fx = x - x0;
                let a = self.get(x0 as u32, y0 as u32) as f64;
                let b = self.get(x1, y0 as u32) as f64;
                return Some(a * (1.0 - fx) + b * fx);
            }
            if x == x0 && y == y0 && (x0 as u32) < self.width && (y0 as u32) < self.height {
                return Some(self.get(x0 as u32, y0 as u32) as f64);
            }
            return None;
        }
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as u32, y0 as u32);
        let p00 = self.get(x0, y0) as f64;
        let p10 = self.get(x1, y0) as f64;
        let p01 = self.get(x0, y1) as f64;
        let p11 = self.get(x1, y1) as f64;
        Some(p00 * (1.0 - fx) * (1.0 - fy) + p10 * fx * (1.0 - fy) + p01 * (1.0 - fx) * fy + p11 * fx * fy)
    }

    /// 2x box-filter downsample, used by the optional registration pyramid.
    pub fn downsample2(&self) -> GrayImage {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut out = GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let s = self.get(2 * x, 2 * y) as u32
                    + self.get(2 * x + 1, 2 * y) as u32
                    + self.get(2 * x, 2 * y + 1) as u32
                    + self.get(2 * x + 1, 2 * y + 1) as u32;
                out.set(x, y, ((s + 2) / 4) as u8);
            }
        }
        out
    }
}

/// Per-pixel boolean mask; `true` marks usable texture pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMask {
    pub width: u32,
    pub height: u32,
    data: Vec<bool>,
}

impl PixelMask {
    pub fn all_true(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![true; (width * height) as usize] }
    }

    pub fn all_false(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![false; (width * height) as usize] }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[(y * self.width + x) as usize] = v;
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// True only if all four bilinear neighbors of (x, y) are usable.
    #[inline]
    pub fn usable_bilinear(&self, x: f64, y: f64) -> bool {
        let x0 = x.floor() as i64;
        let y0 = y.floor() as i64;
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let xi = (x0 + dx).clamp(0, self.width as i64 - 1) as u32;
            let yi = (y0 + dy).clamp(0, self.height as i64 - 1) as u32;
            if !self.get(xi, yi) {
                return false;
            }
        }
        true
    }

    /// Downsample by 2; a coarse pixel is usable only when its 2x2 block is.
    pub fn downsample2(&self) -> PixelMask {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut out = PixelMask::all_false(w, h);
        for y in 0..h {
            for x in 0..w {
                let v = self.get(2 * x, 2 * y)
                    && self.get(2 * x + 1, 2 * y)
                    && self.get(2 * x, 2 * y + 1)
                    && self.get(2 * x + 1, 2 * y + 1);
                out.set(x, y, v);
            }
        }
        out
    }
}

/// Luma conversion with fixed ITU-style weights:
/// `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_gray(img: &ColorImage) -> GrayImage {
    let mut out = GrayImage::new(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            let [r, g, b] = img.get(x, y);
            let luma = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            out.set(x, y, luma.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// RGB (0-255) to HSV with hue in degrees [0, 360) and s, v in [0, 1].
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let r = rgb[0] as f64 / 255.0;
    let g = rgb[1] as f64 / 255.0;
    let b = rgb[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

/// Laser-dot segmentation thresholds. Green dots separate from the
/// reddish/orange bladder hue with a broad window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub hue_min_deg: f64,
    pub hue_max_deg: f64,
    pub sat_min: f64,
    pub val_min: f64,
    /// Components smaller than this many pixels are discarded as noise.
    pub min_area: usize,
    /// Mask dilation margin around dot pixels, in pixels.
    pub dilation_px: u32,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            hue_min_deg: 70.0,
            hue_max_deg: 170.0,
            sat_min: 0.25,
            val_min: 0.25,
            min_area: 4,
            dilation_px: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    /// Intensity-weighted centroid of each accepted dot component.
    pub dots: Vec<Point2D>,
    /// Usable-texture mask: false on and around every thresholded pixel.
    pub mask: PixelMask,
}

/// Segment laser dots by hue thresholding in HSV, group thresholded pixels
/// into 4-connected components, and return each component's centroid weighted
/// by green-excess intensity plus a texture mask excluding all dot pixels
/// (dilated by the configured margin).
///
/// A found-count different from `expected` is not an error here; callers
/// decide whether to warn or fail.
pub fn segment_laser_dots(
    img: &ColorImage,
    expected: usize,
    cfg: &SegmentationConfig,
) -> Segmentation {
    let w = img.width;
    let h = img.height;
    let mut is_dot = vec![false; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let (hue, s, v) = rgb_to_hsv(img.get(x, y));
            if hue >= cfg.hue_min_deg && hue <= cfg.hue_max_deg && s > cfg.sat_min && v > cfg.val_min {
                is_dot[(y * w + x) as usize] = true;
            }
        }
    }

    // Connected components (4-connectivity) over thresholded pixels.
    let mut visited = vec![false; (w * h) as usize];
    let mut dots = Vec::new();
    let mut stack = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            let si = (sy * w + sx) as usize;
            if !is_dot[si] || visited[si] {
                continue;
            }
            visited[si] = true;
            stack.push((sx, sy));
            let mut area = 0usize;
            let mut wsum = 0.0;
            let mut cx = 0.0;
            let mut cy = 0.0;
            while let Some((x, y)) = stack.pop() {
                area += 1;
                let [r, g, b] = img.get(x, y);
                let weight = (g as f64 - (r.max(b)) as f64).max(0.0) + 1.0;
                wsum += weight;
                cx += weight * x as f64;
                cy += weight * y as f64;
                let mut push = |nx: u32, ny: u32| {
                    let ni = (ny * w + nx) as usize;
                    if is_dot[ni] && !visited[ni] {
                        visited[ni] = true;
                        stack.push((nx, ny));
                    }
                };
                if x > 0 {
                    push(x - 1, y);
                }
                if x + 1 < w {
                    push(x + 1, y);
                }
                if y > 0 {
                    push(x, y - 1);
                }
                if y + 1 < h {
                    push(x, y + 1);
                }
            }
            if area >= cfg.min_area {
                dots.push(Point2D::new(cx / wsum, cy / wsum));
            }
        }
    }
    let _ = expected;

    // Mask out every thresholded pixel (noise components included) with a
    // dilation margin to drop anti-aliased dot fringes.
    let mut mask = PixelMask::all_true(w, h);
    let d = cfg.dilation_px as i64;
    for y in 0..h {
        for x in 0..w {
            if !is_dot[(y * w + x) as usize] {
                continue;
            }
            for dy in -d..=d {
                for dx in -d..=d {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                        mask.set(nx as u32, ny as u32, false);
                    }
                }
            }
        }
    }

    Segmentation { dots, mask }
}

/// Inverse-warp `src` through `h` into a `target_size` canvas: each target
/// pixel is mapped through `h^-1` and sampled bilinearly. The returned mask
/// is true where the source location fell fully inside the source domain.
pub fn warp_image(
    src: &GrayImage,
    h: &Homography2D,
    target_size: (u32, u32),
) -> Result<(GrayImage, PixelMask)> {
    let h_inv = h.inverse()?;
    let (tw, th) = target_size;
    let mut out = GrayImage::new(tw, th);
    let mut mask = PixelMask::all_false(tw, th);
    for y in 0..th {
        for x in 0..tw {
            let p = match apply_homography(&h_inv, &Point2D::new(x as f64, y as f64)) {
                Ok(p) => p,
                Err(_) => continue,
            };
            if let Some(v) = src.sample_bilinear(p.x, p.y) {
                out.set(x, y, v.round() as u8);
                mask.set(x, y, true);
            }
        }
    }
    Ok((out, mask))
}

/// 256x256 joint gray-level histogram with marginals.
#[derive(Debug, Clone)]
pub struct JointHistogram {
    bins: Vec<u32>,
    row_sums: [u64; 256],
    col_sums: [u64; 256],
    total: u64,
}

impl JointHistogram {
    pub fn new() -> Self {
        Self { bins: vec![0; 256 * 256], row_sums: [0; 256], col_sums: [0; 256], total: 0 }
    }

    #[inline]
    pub fn add(&mut self, a: u8, b: u8) {
        self.bins[a as usize * 256 + b as usize] += 1;
        self.row_sums[a as usize] += 1;
        self.col_sums[b as usize] += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    fn entropy_of(counts: impl Iterator<Item = u64>, total: u64) -> f64 {
        // H = ln(total) - (1/total) * sum n ln n, with 0 ln 0 := 0.
        if total == 0 {
            return 0.0;
        }
        let t = total as f64;
        let mut s = 0.0;
        for n in counts {
            if n > 0 {
                let n = n as f64;
                s += n * n.ln();
            }
        }
        t.ln() - s / t
    }

    /// Marginal entropy of the first image (nats).
    pub fn entropy_a(&self) -> f64 {
        Self::entropy_of(self.row_sums.iter().copied(), self.total)
    }

    /// Marginal entropy of the second image (nats).
    pub fn entropy_b(&self) -> f64 {
        Self::entropy_of(self.col_sums.iter().copied(), self.total)
    }

    /// Joint entropy (nats).
    pub fn joint_entropy(&self) -> f64 {
        Self::entropy_of(self.bins.iter().map(|&n| n as u64), self.total)
    }

    /// Mutual information H(a) + H(b) - H_J(a, b) in nats.
    pub fn mutual_information(&self) -> f64 {
        self.entropy_a() + self.entropy_b() - self.joint_entropy()
    }
}

impl Default for JointHistogram {
    fn default() -> Self {
        Self::new()
    }
}

/// Mutual information of two equally sized images over masked pixels, with
/// entropies computed on the same overlap region.
pub fn mutual_information(
    a: &GrayImage,
    b: &GrayImage,
    mask: &PixelMask,
    min_overlap: usize,
) -> Result<f64> {
    debug_assert_eq!((a.width, a.height), (b.width, b.height));
    debug_assert_eq!((a.width, a.height), (mask.width, mask.height));
    let mut hist = JointHistogram::new();
    for y in 0..a.height {
        for x in 0..a.width {
            if mask.get(x, y) {
                hist.add(a.get(x, y), b.get(x, y));
            }
        }
    }
    if (hist.total() as usize) < min_overlap {
        return Err(Error::InsufficientOverlap { count: hist.total() as usize, required: min_overlap });
    }
    Ok(hist.mutual_information())
}

/// Fused warp-and-score path used by registration: warps `cur` onto `prev`
/// through `h` and accumulates the joint histogram in one pass, skipping
/// laser-dot pixels of either frame. Equivalent to `warp_image` followed by
/// `mutual_information` on the combined mask.
pub fn warped_mutual_information(
    prev: &GrayImage,
    prev_mask: &PixelMask,
    cur: &GrayImage,
    cur_mask: &PixelMask,
    h: &Homography2D,
    min_overlap: usize,
) -> Result<f64> {
    let h_inv = h.inverse()?;
    let a = h_inv.coeffs();
    let mut hist = JointHistogram::new();
    for y in 0..prev.height {
        let yf = y as f64;
        for x in 0..prev.width {
            if !prev_mask.get(x, y) {
                continue;
            }
            let xf = x as f64;
            let beta = a[6] * xf + a[7] * yf + 1.0;
            if beta.abs() < 1e-12 {
                continue;
            }
            let sx = (a[0] * xf + a[1] * yf + a[2]) / beta;
            let sy = (a[3] * xf + a[4] * yf + a[5]) / beta;
            if let Some(v) = cur.sample_bilinear(sx, sy) {
                if cur_mask.usable_bilinear(sx, sy) {
                    hist.add(prev.get(x, y), v.round() as u8);
                }
            }
        }
    }
    if (hist.total() as usize) < min_overlap {
        return Err(Error::InsufficientOverlap { count: hist.total() as usize, required: min_overlap });
    }
    Ok(hist.mutual_information())
}
