//! Synthetic head phantoms: artifact-free volumes plus brain masks.
//!
//! Each slice is an elliptical skull ring (bone) around soft brain tissue
//! with a low-frequency Gaussian texture and a few ventricle-like hypodense
//! regions, over an air background. Ellipse parameters taper smoothly across
//! slices. These volumes stand in for clinical scans so the whole pipeline is
//! trainable and testable without any external data.

use crate::error::{MarError, Result};
use crate::rng::SeedRng;
use crate::shapegen::VoxelMask;
use crate::tomo::Image2D;

pub const HU_AIR: f64 = -1000.0;
pub const HU_MIN: f64 = -1024.0;
pub const HU_MAX: f64 = 3071.0;

/// Mean absolute gradient allowed over the brain interior (HU per pixel).
/// Keeps phantoms smooth enough that FBP round-trip tolerances are
/// meaningful.
pub const BRAIN_TV_BOUND: f64 = 6.0;

#[derive(Debug, Clone)]
pub struct HeadPhantom {
    pub volume: Vec<Image2D>,
    pub brain_mask: VoxelMask,
}

impl HeadPhantom {
    pub fn n_slices(&self) -> usize {
        self.volume.len()
    }

    pub fn size(&self) -> usize {
        self.volume[0].size()
    }
}

struct Bump {
    x: f64,
    y: f64,
    z: f64,
    sigma_xy: f64,
    sigma_z: f64,
    amp: f64,
}

struct Ventricle {
    x: f64,
    y: f64,
    ax: f64,
    ay: f64,
    hu: f64,
}

fn smoothstep01(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Generate one phantom. `size` is the slice side in pixels (>= 64).
pub fn generate_head_phantom(
    rng: &mut SeedRng,
    size: usize,
    n_slices: usize,
    pixel_spacing: f64,
) -> Result<HeadPhantom> {
    if size < 64 {
        return Err(MarError::config(format!(
            "phantom size {size} below minimum 64"
        )));
    }
    if n_slices == 0 {
        return Err(MarError::config("phantom needs at least one slice"));
    }
    let s = size as f64;
    let cx = s / 2.0 + rng.uniform_f64(-2.0, 2.0);
    let cy = s / 2.0 + rng.uniform_f64(-2.0, 2.0);
    let ax = s * rng.uniform_f64(0.36, 0.43);
    let ay = s * rng.uniform_f64(0.40, 0.47);
    let skull_thickness = rng.uniform_f64(2.5, 4.5);
    let bone_hu = rng.uniform_f64(700.0, 1200.0);
    let brain_base = rng.uniform_f64(35.0, 45.0);
    let taper = rng.uniform_f64(0.05, 0.18);

    let n_bumps = rng.uniform_usize(3, 8);
    let bumps: Vec<Bump> = (0..n_bumps)
        .map(|_| Bump {
            x: cx + rng.uniform_f64(-0.25, 0.25) * s,
            y: cy + rng.uniform_f64(-0.28, 0.28) * s,
            z: rng.uniform_f64(-0.2, (n_slices as f64 - 1.0).max(0.2) * 1.2),
            sigma_xy: rng.uniform_f64(6.0, 18.0),
            sigma_z: rng.uniform_f64(2.0, 6.0),
            amp: rng.uniform_f64(-15.0, 15.0),
        })
        .collect();

    let n_vents = rng.uniform_usize(1, 3);
    let vents: Vec<Ventricle> = (0..n_vents)
        .map(|_| Ventricle {
            x: cx + rng.uniform_f64(-0.12, 0.12) * s,
            y: cy + rng.uniform_f64(-0.12, 0.12) * s,
            ax: rng.uniform_f64(4.0, 10.0),
            ay: rng.uniform_f64(2.0, 6.0),
            hu: rng.uniform_f64(0.0, 15.0),
        })
        .collect();

    let mut volume = Vec::with_capacity(n_slices);
    let mut brain_mask = VoxelMask::empty((size, size, n_slices));
    let edge = 1.5; // blend width in pixels

    for z in 0..n_slices {
        let zeta = if n_slices == 1 {
            0.0
        } else {
            2.0 * z as f64 / (n_slices as f64 - 1.0) - 1.0
        };
        let scale = 1.0 - taper * zeta * zeta;
        let (ax_o, ay_o) = (ax * scale, ay * scale);
        let (ax_i, ay_i) = (ax_o - skull_thickness, ay_o - skull_thickness);
        let mut pixels = vec![0.0f64; size * size];
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                // Signed inside-distance approximations, in pixels.
                let r_o = ((dx / ax_o).powi(2) + (dy / ay_o).powi(2)).sqrt();
                let d_o = (1.0 - r_o) * ax_o.min(ay_o);
                let r_i = ((dx / ax_i).powi(2) + (dy / ay_i).powi(2)).sqrt();
                let d_i = (1.0 - r_i) * ax_i.min(ay_i);

                let mut v = HU_AIR;
                let bone_frac = smoothstep01(d_o / edge);
                v = v + (bone_hu - v) * bone_frac;

                // Brain texture: base plus clamped bump field.
                let mut texture = 0.0;
                for b in &bumps {
                    let g = (-((x as f64 - b.x).powi(2) + (y as f64 - b.y).powi(2))
                        / (2.0 * b.sigma_xy * b.sigma_xy)
                        - (z as f64 - b.z).powi(2) / (2.0 * b.sigma_z * b.sigma_z))
                        .exp();
                    texture += b.amp * g;
                }
                let mut brain_v = brain_base + texture.clamp(-20.0, 20.0);
                for vent in &vents {
                    let rv = (((x as f64 - vent.x) / (vent.ax * scale)).powi(2)
                        + ((y as f64 - vent.y) / (vent.ay * scale)).powi(2))
                    .sqrt();
                    let dv = (1.0 - rv) * (vent.ax * scale).min(vent.ay * scale);
                    let frac = smoothstep01(dv / edge);
                    brain_v = brain_v + (vent.hu - brain_v) * frac;
                }

                let brain_frac = smoothstep01(d_i / edge);
                v = v + (brain_v - v) * brain_frac;
                pixels[y * size + x] = v.clamp(HU_MIN, HU_MAX);

                // Interior with a safety margin: soft tissue only.
                if d_i >= 2.0 + edge {
                    brain_mask.set(x, y, z, true);
                }
            }
        }
        volume.push(Image2D::new(size, pixel_spacing, pixels)?);
    }
    Ok(HeadPhantom { volume, brain_mask })
}

/// Split items (phantom-wise, never slice-wise) into disjoint groups with the
/// given fractions. Deterministic for a fixed rng seed.
pub fn split_dataset<T>(items: Vec<T>, fractions: &[f64], rng: &mut SeedRng) -> Result<Vec<Vec<T>>> {
    if fractions.is_empty() {
        return Err(MarError::config("need at least one split fraction"));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(MarError::config(format!("fractions sum to {sum}, not 1")));
    }
    if fractions.iter().any(|&f| f < 0.0) {
        return Err(MarError::config("fractions must be non-negative"));
    }
    let n = items.len();
    if n < fractions.len() {
        return Err(MarError::config(format!(
            "cannot split {n} items into {} parts",
            fractions.len()
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);

    // Cumulative rounding keeps group sizes within one of the exact share.
    let mut boundaries = Vec::with_capacity(fractions.len() + 1);
    boundaries.push(0usize);
    let mut cum = 0.0;
    for f in fractions {
        cum += f;
        boundaries.push((cum * n as f64).round() as usize);
    }
    *boundaries.last_mut().unwrap() = n;

    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut groups = Vec::with_capacity(fractions.len());
    for w in boundaries.windows(2) {
        let group: Vec<T> = order[w[0]..w[1]]
            .iter()
            .map(|&i| slots[i].take().expect("index used once"))
            .collect();
        groups.push(group);
    }
    Ok(groups)
}
