//! Binary 8-bit PGM (P5) previews, windowed for display.

use crate::error::Result;
use crate::tomo::Image2D;
use std::io::Write;
use std::path::Path;

/// Brain display window: center 40 HU, width 160 HU.
pub const BRAIN_WINDOW_CENTER: f64 = 40.0;
pub const BRAIN_WINDOW_WIDTH: f64 = 160.0;

/// Write an image as binary PGM, mapping `[center - width/2, center + width/2]`
/// to 0..255 with clamping.
pub fn write_pgm(path: &Path, img: &Image2D, center: f64, width: f64) -> Result<()> {
    let lo = center - width / 2.0;
    let size = img.size();
    let mut buf = Vec::with_capacity(size * size + 32);
    buf.extend_from_slice(format!("P5\n{size} {size}\n255\n").as_bytes());
    for &v in img.pixels() {
        let g = ((v - lo) / width * 255.0).round().clamp(0.0, 255.0) as u8;
        buf.push(g);
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Preview with the standard brain window.
pub fn write_brain_preview(path: &Path, img: &Image2D) -> Result<()> {
    write_pgm(path, img, BRAIN_WINDOW_CENTER, BRAIN_WINDOW_WIDTH)
}
