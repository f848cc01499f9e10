//! Metal handling around the sinogram hole: detection, trace computation,
//! trace cutting and final reinsertion.

use crate::error::{MarError, Result};
use crate::tomo::{radon, Image2D, ProjectionGeometry, Sinogram};

/// Binary 2D mask paired with an [`Image2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMask {
    size: usize,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn empty(size: usize) -> Self {
        PixelMask {
            size,
            bits: vec![false; size * size],
        }
    }

    pub fn from_bits(size: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != size * size {
            return Err(MarError::dim(format!(
                "pixel mask needs {} bits, got {}",
                size * size,
                bits.len()
            )));
        }
        Ok(PixelMask { size, bits })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.size + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.size + x] = v;
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

    pub fn complement(&self) -> PixelMask {
        PixelMask {
            size: self.size,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }
}

/// Binary mask over sinogram bins.
#[derive(Debug, Clone, PartialEq)]
pub struct SinogramMask {
    n_angles: usize,
    n_bins: usize,
    bits: Vec<bool>,
}

impl SinogramMask {
    pub fn empty(n_angles: usize, n_bins: usize) -> Self {
        SinogramMask {
            n_angles,
            n_bins,
            bits: vec![false; n_angles * n_bins],
        }
    }

    pub fn from_bits(n_angles: usize, n_bins: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != n_angles * n_bins {
            return Err(MarError::dim(format!(
                "sinogram mask needs {} bits, got {}",
                n_angles * n_bins,
                bits.len()
            )));
        }
        Ok(SinogramMask {
            n_angles,
            n_bins,
            bits,
        })
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    #[inline]
    pub fn get(&self, angle: usize, bin: usize) -> bool {
        self.bits[angle * self.n_bins + bin]
    }

    #[inline]
    pub fn set(&mut self, angle: usize, bin: usize, v: bool) {
        self.bits[angle * self.n_bins + bin] = v;
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

    pub fn row(&self, angle: usize) -> &[bool] {
        &self.bits[angle * self.n_bins..(angle + 1) * self.n_bins]
    }
}

/// Default detection threshold: above dense bone, below metal.
pub const DEFAULT_METAL_THRESHOLD_HU: f64 = 2500.0;

/// Threshold the high-density object out of an image: bit set where the
/// pixel is at or above `threshold`.
pub fn detect_metal(img: &Image2D, threshold: f64) -> PixelMask {
    let size = img.size();
    let bits = img.pixels().iter().map(|&v| v >= threshold).collect();
    PixelMask { size, bits }
}

/// Sinogram support threshold for the mask projection.
pub const TRACE_EPSILON: f64 = 1e-6;

/// Project the object mask and mark every bin whose ray meets it, then
/// dilate by one bin along the detector axis to cover grazing rays.
pub fn metal_trace(
    mask: &PixelMask,
    geom: &ProjectionGeometry,
    pixel_spacing: f64,
) -> Result<SinogramMask> {
    let size = mask.size;
    let pixels: Vec<f64> = mask.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mask_img = Image2D::new(size, pixel_spacing, pixels)?;
    let sino = radon(&mask_img, geom)?;

    let n_bins = geom.n_bins();
    let mut trace = SinogramMask::empty(geom.n_angles(), n_bins);
    for a in 0..geom.n_angles() {
        let row = sino.row(a);
        for j in 0..n_bins {
            if row[j] > TRACE_EPSILON {
                trace.set(a, j, true);
                if j > 0 {
                    trace.set(a, j - 1, true);
                }
                if j + 1 < n_bins {
                    trace.set(a, j + 1, true);
                }
            }
        }
    }
    Ok(trace)
}

/// Zero the sinogram under the trace. Returns the cut sinogram together with
/// the validity mask (the complement of the trace) for the inpainting model.
pub fn cut_trace(sino: &Sinogram, trace: &SinogramMask) -> Result<(Sinogram, SinogramMask)> {
    if sino.n_angles() != trace.n_angles || sino.n_bins() != trace.n_bins {
        return Err(MarError::dim(format!(
            "sinogram {}x{} vs trace {}x{}",
            sino.n_angles(),
            sino.n_bins(),
            trace.n_angles,
            trace.n_bins
        )));
    }
    let values = sino
        .values()
        .iter()
        .zip(&trace.bits)
        .map(|(&v, &cut)| if cut { 0.0 } else { v })
        .collect();
    let cut = Sinogram::new(sino.n_angles(), sino.n_bins(), sino.bin_spacing(), values)?;
    let valid = SinogramMask {
        n_angles: trace.n_angles,
        n_bins: trace.n_bins,
        bits: trace.bits.iter().map(|&b| !b).collect(),
    };
    Ok((cut, valid))
}

/// Paste the original values back over the mask: output equals `restored`
/// off-mask and `original` on-mask.
pub fn reinsert_metal(
    restored: &Image2D,
    original: &Image2D,
    mask: &PixelMask,
) -> Result<Image2D> {
    if restored.size() != original.size() || restored.size() != mask.size {
        return Err(MarError::dim(format!(
            "reinsert sizes {} / {} / {}",
            restored.size(),
            original.size(),
            mask.size
        )));
    }
    let pixels = restored
        .pixels()
        .iter()
        .zip(original.pixels())
        .zip(&mask.bits)
        .map(|((&r, &o), &m)| if m { o } else { r })
        .collect();
    Image2D::new(restored.size(), restored.pixel_spacing(), pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;
    use crate::tomo::ProjectionGeometry;

    fn flat_image(size: usize, v: f64) -> Image2D {
        Image2D::new(size, 1.0, vec![v; size * size]).unwrap()
    }

    #[test]
    fn detect_on_air_is_empty() {
        let img = flat_image(32, -1000.0);
        assert!(detect_metal(&img, 2500.0).is_empty());
    }

    #[test]
    fn detect_single_hot_pixel() {
        let mut img = flat_image(32, 0.0);
        img.set(10, 20, 3000.0);
        let m = detect_metal(&img, 2500.0);
        assert_eq!(m.count(), 1);
        assert!(m.get(10, 20));
    }

    #[test]
    fn detect_is_monotone_in_threshold() {
        let mut rng = SeedRng::new(17);
        let pixels: Vec<f64> = (0..32 * 32).map(|_| rng.uniform_f64(0.0, 4000.0)).collect();
        let img = Image2D::new(32, 1.0, pixels).unwrap();
        let lo = detect_metal(&img, 1000.0);
        let hi = detect_metal(&img, 2500.0);
        for (l, h) in lo.bits().iter().zip(hi.bits()) {
            assert!(!h || *l, "higher threshold must give a subset");
        }
    }

    #[test]
    fn empty_mask_gives_empty_trace() {
        let geom = ProjectionGeometry::for_image(32, 20, 1.0).unwrap();
        let trace = metal_trace(&PixelMask::empty(32), &geom, 1.0).unwrap();
        assert!(trace.is_empty());
    }

    #[test]
    fn single_pixel_trace_is_a_dilated_sinusoid() {
        // Geometric oracle: a ray can only pick the pixel up (bilinear
        // support) when its signed distance to the pixel center is below
        // |cos t| + |sin t| pixel units; the trace additionally dilates by
        // one bin. Check two-sided with a one-bin safety band.
        let size = 33;
        let geom = ProjectionGeometry::for_image(size, 40, 1.0).unwrap();
        let mut mask = PixelMask::empty(size);
        let (py, px) = (10usize, 22usize);
        mask.set(py, px, true);
        let trace = metal_trace(&mask, &geom, 1.0).unwrap();

        let c = (size as f64 - 1.0) / 2.0;
        let bc = (geom.n_bins() - 1) as f64 / 2.0;
        for (a, &theta) in geom.angles().iter().enumerate() {
            let proj = (px as f64 - c) * theta.cos() + (py as f64 - c) * theta.sin();
            let support = theta.cos().abs() + theta.sin().abs();
            for j in 0..geom.n_bins() {
                let dist = (j as f64 - bc - proj).abs();
                if dist <= support {
                    assert!(trace.get(a, j), "angle {a} bin {j} should be in trace");
                }
                if dist > support + 2.0 {
                    assert!(!trace.get(a, j), "angle {a} bin {j} should be clear");
                }
            }
        }
    }

    #[test]
    fn trace_of_union_covers_union_of_traces() {
        let size = 32;
        let geom = ProjectionGeometry::for_image(size, 24, 1.0).unwrap();
        let mut a = PixelMask::empty(size);
        let mut b = PixelMask::empty(size);
        a.set(8, 9, true);
        a.set(9, 9, true);
        b.set(20, 22, true);
        let mut ab = a.clone();
        for y in 0..size {
            for x in 0..size {
                if b.get(y, x) {
                    ab.set(y, x, true);
                }
            }
        }
        let ta = metal_trace(&a, &geom, 1.0).unwrap();
        let tb = metal_trace(&b, &geom, 1.0).unwrap();
        let tab = metal_trace(&ab, &geom, 1.0).unwrap();
        for i in 0..tab.bits().len() {
            assert!(!(ta.bits()[i] || tb.bits()[i]) || tab.bits()[i]);
        }
    }

    #[test]
    fn trace_covers_object_sinogram_support() {
        let size = 48;
        let geom = ProjectionGeometry::for_image(size, 30, 1.0).unwrap();
        let mut mask = PixelMask::empty(size);
        for y in 20..26 {
            for x in 30..33 {
                mask.set(y, x, true);
            }
        }
        let trace = metal_trace(&mask, &geom, 1.0).unwrap();
        let pixels: Vec<f64> = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let obj_sino = radon(&Image2D::new(size, 1.0, pixels).unwrap(), &geom).unwrap();
        for a in 0..geom.n_angles() {
            for j in 0..geom.n_bins() {
                if !trace.get(a, j) {
                    assert!(
                        obj_sino.row(a)[j] <= TRACE_EPSILON,
                        "uncovered support at ({a}, {j}): {}",
                        obj_sino.row(a)[j]
                    );
                }
            }
        }
    }

    #[test]
    fn cut_trace_zeroes_only_the_trace() {
        let mut rng = SeedRng::new(18);
        let n_angles = 10;
        let n_bins = 25;
        let values: Vec<f64> = (0..n_angles * n_bins)
            .map(|_| rng.uniform_f64(0.5, 2.0))
            .collect();
        let sino = Sinogram::new(n_angles, n_bins, 1.0, values.clone()).unwrap();
        let bits: Vec<bool> = (0..n_angles * n_bins)
            .map(|_| rng.uniform_f64(0.0, 1.0) < 0.3)
            .collect();
        let trace = SinogramMask::from_bits(n_angles, n_bins, bits.clone()).unwrap();
        let (cut, valid) = cut_trace(&sino, &trace).unwrap();
        for i in 0..values.len() {
            if bits[i] {
                assert_eq!(cut.values()[i], 0.0);
                assert!(!valid.bits()[i]);
            } else {
                assert_eq!(cut.values()[i], values[i]);
                assert!(valid.bits()[i]);
            }
        }
        // Idempotence.
        let (cut2, _) = cut_trace(&cut, &trace).unwrap();
        assert_eq!(cut.values(), cut2.values());
    }

    #[test]
    fn cut_with_empty_trace_is_identity_and_full_trace_zeroes() {
        let sino = Sinogram::new(4, 6, 1.0, (0..24).map(|i| i as f64).collect()).unwrap();
        let empty = SinogramMask::empty(4, 6);
        let (cut, _) = cut_trace(&sino, &empty).unwrap();
        assert_eq!(cut.values(), sino.values());
        let full = SinogramMask::from_bits(4, 6, vec![true; 24]).unwrap();
        let (cut, _) = cut_trace(&sino, &full).unwrap();
        assert!(cut.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reinsert_selects_per_pixel() {
        let restored = flat_image(16, 1.0);
        let original = flat_image(16, 2.0);
        let mut mask = PixelMask::empty(16);
        for y in 0..16 {
            for x in 0..16 {
                if (x + y) % 2 == 0 {
                    mask.set(y, x, true);
                }
            }
        }
        let out = reinsert_metal(&restored, &original, &mask).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let expect = if (x + y) % 2 == 0 { 2.0 } else { 1.0 };
                assert_eq!(out.get(y, x), expect);
            }
        }
        // Empty mask passes restored through; full mask returns the original.
        let out = reinsert_metal(&restored, &original, &PixelMask::empty(16)).unwrap();
        assert_eq!(out.pixels(), restored.pixels());
        let full = PixelMask::from_bits(16, vec![true; 256]).unwrap();
        let out = reinsert_metal(&restored, &original, &full).unwrap();
        assert_eq!(out.pixels(), original.pixels());
    }

    #[test]
    fn dim_mismatch_is_an_error() {
        let sino = Sinogram::zeros(4, 6, 1.0);
        let trace = SinogramMask::empty(4, 7);
        assert!(cut_trace(&sino, &trace).is_err());
        let a = flat_image(16, 0.0);
        let b = flat_image(32, 0.0);
        assert!(reinsert_metal(&a, &b, &PixelMask::empty(16)).is_err());
    }
}
