//! Random generation of high-density object masks.
//!
//! An object is built in four stages: sample an axis-aligned volumetric
//! range (each side up to a fraction of the image side), drop a handful of
//! geometric primitives into it, fuse them with a morphological closing, and
//! sprinkle small outlier primitives on top. Objects are then placed on the
//! brain mask by rejection sampling of axial offsets until the overlap
//! requirement holds, and a scene is the union of several placed objects.
//!
//! Everything is a pure function of the supplied [`SeedRng`], so mask sets
//! are reproducible from their seed.

use crate::error::{MarError, Result};
use crate::rng::SeedRng;

/// Binary 3D occupancy grid. `dims` is (x, y, z); storage is z-major
/// (slice, then row, then column).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMask {
    dims: (usize, usize, usize),
    bits: Vec<bool>,
}

impl VoxelMask {
    pub fn empty(dims: (usize, usize, usize)) -> Self {
        VoxelMask {
            dims,
            bits: vec![false; dims.0 * dims.1 * dims.2],
        }
    }

    pub fn from_bits(dims: (usize, usize, usize), bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.0 * dims.1 * dims.2 {
            return Err(MarError::dim(format!(
                "mask dims {dims:?} need {} bits, got {}",
                dims.0 * dims.1 * dims.2,
                bits.len()
            )));
        }
        Ok(VoxelMask { dims, bits })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims.1 + y) * self.dims.0 + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.idx(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.idx(x, y, z);
        self.bits[i] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn union_with(&mut self, other: &VoxelMask) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    /// Set voxel coordinates, z-major order.
    pub fn voxels(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for z in 0..self.dims.2 {
            for y in 0..self.dims.1 {
                for x in 0..self.dims.0 {
                    if self.get(x, y, z) {
                        out.push((x, y, z));
                    }
                }
            }
        }
        out
    }

    /// Inclusive bounding box (x0, x1, y0, y1, z0, z1), or None if empty.
    #[allow(clippy::type_complexity)]
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize, usize, usize)> {
        let vs = self.voxels();
        if vs.is_empty() {
            return None;
        }
        let mut bb = (usize::MAX, 0, usize::MAX, 0, usize::MAX, 0);
        for (x, y, z) in vs {
            bb.0 = bb.0.min(x);
            bb.1 = bb.1.max(x);
            bb.2 = bb.2.min(y);
            bb.3 = bb.3.max(y);
            bb.4 = bb.4.min(z);
            bb.5 = bb.5.max(z);
        }
        Some(bb)
    }

    /// One axial slice as a 2D mask (requires a square axial grid).
    pub fn slice(&self, z: usize) -> crate::corruption::PixelMask {
        debug_assert_eq!(self.dims.0, self.dims.1);
        let n = self.dims.0;
        let mut bits = vec![false; n * n];
        for y in 0..n {
            for x in 0..n {
                bits[y * n + x] = self.get(x, y, z);
            }
        }
        crate::corruption::PixelMask::from_bits(n, bits).expect("square slice")
    }
}

/// Generator parameters with the documented defaults.
#[derive(Debug, Clone)]
pub struct GenParams {
    /// Upper bound for each range side as a fraction of the image side.
    pub max_volume_fraction: f64,
    /// Primitives per object, sampled uniformly inclusive.
    pub primitive_count_min: usize,
    pub primitive_count_max: usize,
    /// Largest primitive linear size in voxels.
    pub primitive_max_size: usize,
    /// Outliers per object, uniform in [0, max].
    pub outlier_count_max: usize,
    /// Outlier linear size range in voxels.
    pub outlier_size_min: usize,
    pub outlier_size_max: usize,
    /// Required |object ∩ brain| / |object| for an accepted placement.
    pub overlap_min: f64,
    /// Objects per scene, uniform in [1, max].
    pub objects_per_scan_max: usize,
    /// Mask sets generated per scan.
    pub masks_per_scan: usize,
    /// Ball radius of the closing structuring element.
    pub closing_radius: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_volume_fraction: 0.10,
            primitive_count_min: 1,
            primitive_count_max: 25,
            primitive_max_size: 10,
            outlier_count_max: 30,
            outlier_size_min: 1,
            outlier_size_max: 3,
            overlap_min: 0.95,
            objects_per_scan_max: 10,
            masks_per_scan: 30,
            closing_radius: 2,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_volume_fraction > 0.0 && self.max_volume_fraction <= 1.0) {
            return Err(MarError::config("max_volume_fraction must be in (0, 1]"));
        }
        if !(self.overlap_min > 0.0 && self.overlap_min <= 1.0) {
            return Err(MarError::config("overlap_min must be in (0, 1]"));
        }
        if self.primitive_count_min < 1 || self.primitive_count_min > self.primitive_count_max {
            return Err(MarError::config("primitive count range is empty"));
        }
        if self.outlier_size_min < 1 || self.outlier_size_min > self.outlier_size_max {
            return Err(MarError::config("outlier size range is empty"));
        }
        if self.objects_per_scan_max < 1 || self.masks_per_scan < 1 {
            return Err(MarError::config("per-scan counts must be at least 1"));
        }
        Ok(())
    }
}

/// Geometric primitive shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimitiveKind {
    /// Euclidean ball of the given radius.
    Ball { radius: u32 },
    /// L1 ball (discrete octahedron) of the given half-extent.
    Octahedron { half_extent: u32 },
    /// Axis-aligned box with the given voxel dimensions.
    Parallelepiped { dx: u32, dy: u32, dz: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    /// Center voxel.
    pub center: (i64, i64, i64),
}

/// Inclusive clip box in voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub z0: usize,
    pub z1: usize,
}

impl Box3 {
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1 && z >= self.z0 && z <= self.z1
    }

    pub fn dilated(&self, r: usize, dims: (usize, usize, usize)) -> Box3 {
        Box3 {
            x0: self.x0.saturating_sub(r),
            x1: (self.x1 + r).min(dims.0 - 1),
            y0: self.y0.saturating_sub(r),
            y1: (self.y1 + r).min(dims.1 - 1),
            z0: self.z0.saturating_sub(r),
            z1: (self.z1 + r).min(dims.2 - 1),
        }
    }
}

/// Rasterize one primitive into a mask of size `dims`, dropping voxels that
/// fall outside the grid. A zero-size primitive yields a single voxel (ball
/// or octahedron) or an empty mask (degenerate box is impossible: dims >= 1).
pub fn rasterize_primitive(p: &Primitive, dims: (usize, usize, usize)) -> VoxelMask {
    let mut m = VoxelMask::empty(dims);
    rasterize_into(p, &mut m, None);
    m
}

fn rasterize_into(p: &Primitive, m: &mut VoxelMask, clip: Option<&Box3>) {
    let (cx, cy, cz) = p.center;
    let (ex, ey, ez): (i64, i64, i64) = match p.kind {
        PrimitiveKind::Ball { radius } => (radius as i64, radius as i64, radius as i64),
        PrimitiveKind::Octahedron { half_extent } => {
            (half_extent as i64, half_extent as i64, half_extent as i64)
        }
        PrimitiveKind::Parallelepiped { dx, dy, dz } => {
            // dx voxels total: (dx-1)/2 below center, dx/2 above.
            (dx as i64, dy as i64, dz as i64)
        }
    };
    let (lo, hi): ((i64, i64, i64), (i64, i64, i64)) = match p.kind {
        PrimitiveKind::Parallelepiped { .. } => (
            (cx - (ex - 1) / 2, cy - (ey - 1) / 2, cz - (ez - 1) / 2),
            (cx + ex / 2, cy + ey / 2, cz + ez / 2),
        ),
        _ => ((cx - ex, cy - ey, cz - ez), (cx + ex, cy + ey, cz + ez)),
    };
    let dims = m.dims();
    for z in lo.2.max(0)..=hi.2.min(dims.2 as i64 - 1) {
        for y in lo.1.max(0)..=hi.1.min(dims.1 as i64 - 1) {
            for x in lo.0.max(0)..=hi.0.min(dims.0 as i64 - 1) {
                if let Some(b) = clip {
                    if !b.contains(x as usize, y as usize, z as usize) {
                        continue;
                    }
                }
                let inside = match p.kind {
                    PrimitiveKind::Ball { radius } => {
                        let d2 = (x - cx).pow(2) + (y - cy).pow(2) + (z - cz).pow(2);
                        d2 <= (radius as i64).pow(2)
                    }
                    PrimitiveKind::Octahedron { half_extent } => {
                        let d1 = (x - cx).abs() + (y - cy).abs() + (z - cz).abs();
                        d1 <= half_extent as i64
                    }
                    PrimitiveKind::Parallelepiped { .. } => true,
                };
                if inside {
                    m.set(x as usize, y as usize, z as usize, true);
                }
            }
        }
    }
}

/// Ball structuring element offsets for the given radius.
fn ball_offsets(radius: usize) -> Vec<(i64, i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy + dz * dz <= r * r {
                    out.push((dx, dy, dz));
                }
            }
        }
    }
    out
}

/// Morphological closing: dilation by a ball of `radius`, then erosion by the
/// same element. Erosion treats out-of-grid neighbors as don't-care, which
/// keeps the dilation/erosion pair an adjunction on the finite grid (so
/// closing stays extensive and idempotent). Radius 0 is the identity.
pub fn morphological_close(m: &VoxelMask, radius: usize) -> VoxelMask {
    if radius == 0 {
        return m.clone();
    }
    let se = ball_offsets(radius);
    let dims = m.dims();
    let in_grid = |x: i64, y: i64, z: i64| {
        x >= 0 && (x as usize) < dims.0 && y >= 0 && (y as usize) < dims.1 && z >= 0 && (z as usize) < dims.2
    };

    let mut dilated = VoxelMask::empty(dims);
    for (x, y, z) in m.voxels() {
        for &(dx, dy, dz) in &se {
            let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
            if in_grid(nx, ny, nz) {
                dilated.set(nx as usize, ny as usize, nz as usize, true);
            }
        }
    }

    let mut closed = VoxelMask::empty(dims);
    for z in 0..dims.2 {
        for y in 0..dims.1 {
            for x in 0..dims.0 {
                let covered = se.iter().all(|&(dx, dy, dz)| {
                    let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    !in_grid(nx, ny, nz) || dilated.get(nx as usize, ny as usize, nz as usize)
                });
                if covered {
                    closed.set(x, y, z, true);
                }
            }
        }
    }
    closed
}

/// Bookkeeping for one generated object, used by the compliance tests.
#[derive(Debug, Clone)]
pub struct ObjectTrace {
    pub range: Box3,
    pub primitive_count: usize,
    pub outlier_count: usize,
}

/// Generate one object mask (stages 1-4): sample a range, fill it with
/// primitives, close, add outliers. Returns an empty mask when the sampled
/// range has a zero side; callers resample.
pub fn generate_object(
    rng: &mut SeedRng,
    params: &GenParams,
    dims: (usize, usize, usize),
) -> VoxelMask {
    generate_object_traced(rng, params, dims).0
}

pub fn generate_object_traced(
    rng: &mut SeedRng,
    params: &GenParams,
    dims: (usize, usize, usize),
) -> (VoxelMask, ObjectTrace) {
    let image_side = dims.0.max(dims.1);
    let max_extent = (params.max_volume_fraction * image_side as f64).floor() as usize;

    // Stage 1: volumetric range with independently sampled sides.
    let rx = rng.uniform_usize(0, max_extent.min(dims.0));
    let ry = rng.uniform_usize(0, max_extent.min(dims.1));
    let rz = rng.uniform_usize(0, max_extent.min(dims.2));
    let mut mask = VoxelMask::empty(dims);
    if rx == 0 || ry == 0 || rz == 0 {
        return (
            mask,
            ObjectTrace {
                range: Box3 {
                    x0: 0,
                    x1: 0,
                    y0: 0,
                    y1: 0,
                    z0: 0,
                    z1: 0,
                },
                primitive_count: 0,
                outlier_count: 0,
            },
        );
    }
    let lx = rng.uniform_usize(0, dims.0 - rx);
    let ly = rng.uniform_usize(0, dims.1 - ry);
    let lz = rng.uniform_usize(0, dims.2 - rz);
    let range = Box3 {
        x0: lx,
        x1: lx + rx - 1,
        y0: ly,
        y1: ly + ry - 1,
        z0: lz,
        z1: lz + rz - 1,
    };

    // Stage 2: primitives of linear size up to primitive_max_size, clipped to
    // the range.
    let n_prims = rng.uniform_usize(params.primitive_count_min, params.primitive_count_max);
    let max_half = ((params.primitive_max_size - 1) / 2) as u32;
    for _ in 0..n_prims {
        let p = sample_primitive(rng, &range, 0, max_half, 1, params.primitive_max_size as u32);
        rasterize_into(&p, &mut mask, Some(&range));
    }

    // Stage 3: fuse with a morphological closing, evaluated on a padded local
    // box so the result can spill up to closing_radius outside the range.
    if params.closing_radius > 0 && !mask.is_empty() {
        mask = close_in_box(&mask, range, params.closing_radius);
    }

    // Stage 4: small outlier primitives inside the range.
    let n_outliers = rng.uniform_usize(0, params.outlier_count_max);
    let out_half_max = ((params.outlier_size_max - 1) / 2) as u32;
    for _ in 0..n_outliers {
        let p = sample_primitive(
            rng,
            &range,
            0,
            out_half_max,
            params.outlier_size_min as u32,
            params.outlier_size_max as u32,
        );
        rasterize_into(&p, &mut mask, Some(&range));
    }

    (
        mask,
        ObjectTrace {
            range,
            primitive_count: n_prims,
            outlier_count: n_outliers,
        },
    )
}

fn sample_primitive(
    rng: &mut SeedRng,
    range: &Box3,
    half_min: u32,
    half_max: u32,
    box_min: u32,
    box_max: u32,
) -> Primitive {
    let center = (
        rng.uniform_i64(range.x0 as i64, range.x1 as i64),
        rng.uniform_i64(range.y0 as i64, range.y1 as i64),
        rng.uniform_i64(range.z0 as i64, range.z1 as i64),
    );
    let kind = match rng.uniform_usize(0, 2) {
        0 => PrimitiveKind::Ball {
            radius: rng.uniform_usize(half_min as usize, half_max as usize) as u32,
        },
        1 => PrimitiveKind::Octahedron {
            half_extent: rng.uniform_usize(half_min as usize, half_max as usize) as u32,
        },
        _ => PrimitiveKind::Parallelepiped {
            dx: rng.uniform_usize(box_min as usize, box_max as usize) as u32,
            dy: rng.uniform_usize(box_min as usize, box_max as usize) as u32,
            dz: rng.uniform_usize(box_min as usize, box_max as usize) as u32,
        },
    };
    Primitive { kind, center }
}

/// Closing restricted to a padded copy of the range box (cheaper than closing
/// the whole volume and identical inside, since the content lies in `range`).
fn close_in_box(mask: &VoxelMask, range: Box3, radius: usize) -> VoxelMask {
    let dims = mask.dims();
    let padded = range.dilated(radius, dims);
    let (w, h, d) = (
        padded.x1 - padded.x0 + 1,
        padded.y1 - padded.y0 + 1,
        padded.z1 - padded.z0 + 1,
    );
    let mut local = VoxelMask::empty((w, h, d));
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if mask.get(x + padded.x0, y + padded.y0, z + padded.z0) {
                    local.set(x, y, z, true);
                }
            }
        }
    }
    let closed = morphological_close(&local, radius);
    let mut out = VoxelMask::empty(dims);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if closed.get(x, y, z) {
                    out.set(x + padded.x0, y + padded.y0, z + padded.z0, true);
                }
            }
        }
    }
    out
}

/// Translate a mask in the axial plane. Offsets must keep every voxel in
/// bounds (guaranteed by the feasible ranges used during placement).
pub fn translate_xy(m: &VoxelMask, dx: i64, dy: i64) -> VoxelMask {
    let mut out = VoxelMask::empty(m.dims());
    for (x, y, z) in m.voxels() {
        let nx = (x as i64 + dx) as usize;
        let ny = (y as i64 + dy) as usize;
        out.set(nx, ny, z, true);
    }
    out
}

const PLACEMENT_ATTEMPTS: u32 = 1000;

/// Stage 5: sample a uniform axial offset until the translated object
/// overlaps the brain mask by at least `overlap_min`. The offset keeps the
/// object inside the grid so its voxel count is preserved.
pub fn place_object(
    obj: &VoxelMask,
    brain: &VoxelMask,
    params: &GenParams,
    rng: &mut SeedRng,
) -> Result<(i64, i64)> {
    if brain.is_empty() {
        return Err(MarError::config("brain mask is empty"));
    }
    if obj.dims() != brain.dims() {
        return Err(MarError::dim("object and brain dims differ".to_string()));
    }
    let bb = obj
        .bounding_box()
        .ok_or_else(|| MarError::config("cannot place an empty object"))?;
    let dims = obj.dims();
    let voxels = obj.voxels();
    let total = voxels.len() as f64;

    let dx_lo = -(bb.0 as i64);
    let dx_hi = dims.0 as i64 - 1 - bb.1 as i64;
    let dy_lo = -(bb.2 as i64);
    let dy_hi = dims.1 as i64 - 1 - bb.3 as i64;

    for _ in 0..PLACEMENT_ATTEMPTS {
        let dx = rng.uniform_i64(dx_lo, dx_hi);
        let dy = rng.uniform_i64(dy_lo, dy_hi);
        let mut inter = 0usize;
        for &(x, y, z) in &voxels {
            let nx = (x as i64 + dx) as usize;
            let ny = (y as i64 + dy) as usize;
            if brain.get(nx, ny, z) {
                inter += 1;
            }
        }
        if inter as f64 / total >= params.overlap_min {
            return Ok((dx, dy));
        }
    }
    Err(MarError::PlacementInfeasible {
        attempts: PLACEMENT_ATTEMPTS,
    })
}

const OBJECT_REGEN_RETRIES: usize = 3;
const EMPTY_RANGE_RESAMPLES: usize = 100;

/// Stage 6: a scene is the union of 1..=objects_per_scan_max placed objects.
pub fn generate_scene(
    rng: &mut SeedRng,
    params: &GenParams,
    brain: &VoxelMask,
) -> Result<VoxelMask> {
    Ok(generate_scene_traced(rng, params, brain)?.0)
}

/// As [`generate_scene`], also returning each placed object mask.
pub fn generate_scene_traced(
    rng: &mut SeedRng,
    params: &GenParams,
    brain: &VoxelMask,
) -> Result<(VoxelMask, Vec<VoxelMask>)> {
    params.validate()?;
    if brain.is_empty() {
        return Err(MarError::config("brain mask is empty"));
    }
    let dims = brain.dims();
    let k = rng.uniform_usize(1, params.objects_per_scan_max);
    let mut scene = VoxelMask::empty(dims);
    let mut placed = Vec::with_capacity(k);
    for _ in 0..k {
        let mut last_err = None;
        let mut done = false;
        for _ in 0..OBJECT_REGEN_RETRIES {
            let obj = nonempty_object(rng, params, dims)?;
            match place_object(&obj, brain, params, rng) {
                Ok((dx, dy)) => {
                    let moved = translate_xy(&obj, dx, dy);
                    scene.union_with(&moved);
                    placed.push(moved);
                    done = true;
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        if !done {
            return Err(last_err.unwrap_or(MarError::PlacementInfeasible {
                attempts: PLACEMENT_ATTEMPTS,
            }));
        }
    }
    Ok((scene, placed))
}

fn nonempty_object(
    rng: &mut SeedRng,
    params: &GenParams,
    dims: (usize, usize, usize),
) -> Result<VoxelMask> {
    for _ in 0..EMPTY_RANGE_RESAMPLES {
        let obj = generate_object(rng, params, dims);
        if !obj.is_empty() {
            return Ok(obj);
        }
    }
    Err(MarError::config(
        "could not sample a non-degenerate object range",
    ))
}
