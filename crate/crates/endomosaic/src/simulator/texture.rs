//! Procedural phantom texture: seeded multi-octave value noise over world
//! coordinates, mapped to a mucosa-like reddish palette with darker
//! vessel-like ridges. Pure function of (point, seed), so renders are
//! reproducible bit-for-bit.

use crate::geometry::Point3D;

/// Integer lattice hash -> [0, 1). SplitMix64-style mixing.
fn lattice(ix: i64, iy: i64, iz: i64, seed: u64) -> f64 {
    let mut h = seed
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (iz as u64).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinearly interpolated value noise, one octave, unit lattice.
fn value_noise(x: f64, y: f64, z: f64, seed: u64) -> f64 {
    let (ix, iy, iz) = (x.floor(), y.floor(), z.floor());
    let (fx, fy, fz) = (smoothstep(x - ix), smoothstep(y - iy), smoothstep(z - iz));
    let (ix, iy, iz) = (ix as i64, iy as i64, iz as i64);
    let mut acc = 0.0;
    for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                acc += wx * wy * wz * lattice(ix + dx, iy + dy, iz + dz, seed);
            }
        }
    }
    acc
}

fn fbm(p: &Point3D, base_freq: f64, octaves: u32, seed: u64) -> f64 {
    let mut sum = 0.0;
    let mut amp = 0.5;
    let mut freq = base_freq;
    let mut total = 0.0;
    for o in 0..octaves {
        sum += amp * value_noise(p.x * freq, p.y * freq, p.z * freq, seed.wrapping_add(o as u64));
        total += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / total
}

#[derive(Debug, Clone, Copy)]
pub struct PhantomTexture {
    pub seed: u64,
    /// Spatial frequency of the coarsest octave (cycles per mm).
    pub base_frequency: f64,
}

impl PhantomTexture {
    pub fn new(seed: u64) -> Self {
        Self { seed, base_frequency: 0.22 }
    }

    /// Surface color at a world point, linear RGB in [0, 255].
    pub fn color(&self, p: &Point3D) -> [u8; 3] {
        let n = fbm(p, self.base_frequency, 5, self.seed);
        let m = fbm(p, self.base_frequency * 1.7, 4, self.seed.wrapping_add(0x5151));

        // Vessel-like dark ridges: thin bands around a level set of a
        // smoother field.
        let v = fbm(p, self.base_frequency * 0.6, 3, self.seed.wrapping_add(0xA0A0));
        let ridge = 1.0 - (-((v - 0.5) / 0.035).powi(2)).exp() * 0.55;

        let r = (140.0 + 95.0 * n) * ridge;
        let g = (55.0 + 75.0 * m) * ridge;
        let b = (45.0 + 45.0 * (1.0 - n) * m) * ridge;
        [
            r.clamp(0.0, 255.0) as u8,
            g.clamp(0.0, 255.0) as u8,
            b.clamp(0.0, 255.0) as u8,
        ]
    }
}
