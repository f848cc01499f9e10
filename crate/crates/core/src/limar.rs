//! Classic Li-MAR baseline: per-angle linear interpolation across the metal
//! trace.

use crate::corruption::SinogramMask;
use crate::error::{MarError, Result};
use crate::tomo::Sinogram;

/// Inpainted sinogram plus the rows that had no unmasked bin at all (filled
/// with zero and flagged rather than failing the whole slice).
#[derive(Debug, Clone)]
pub struct LimarOutput {
    pub sino: Sinogram,
    pub degenerate_rows: Vec<usize>,
}

/// Fill every masked run of each detector row by linear interpolation between
/// its nearest unmasked neighbors. Runs touching a row boundary extend the
/// single available neighbor as a constant. Unmasked bins pass through
/// untouched.
pub fn limar_inpaint(sino: &Sinogram, trace: &SinogramMask) -> Result<LimarOutput> {
    if sino.n_angles() != trace.n_angles() || sino.n_bins() != trace.n_bins() {
        return Err(MarError::dim(format!(
            "sinogram {}x{} vs trace {}x{}",
            sino.n_angles(),
            sino.n_bins(),
            trace.n_angles(),
            trace.n_bins()
        )));
    }
    let n_bins = sino.n_bins();
    let mut values = sino.values().to_vec();
    let mut degenerate = Vec::new();

    for a in 0..sino.n_angles() {
        let row = &mut values[a * n_bins..(a + 1) * n_bins];
        let mask = trace.row(a);
        if mask.iter().all(|&m| m) {
            row.iter_mut().for_each(|v| *v = 0.0);
            degenerate.push(a);
            continue;
        }
        let mut i = 0;
        while i < n_bins {
            if !mask[i] {
                i += 1;
                continue;
            }
            // Maximal masked run [i, j].
            let mut j = i;
            while j + 1 < n_bins && mask[j + 1] {
                j += 1;
            }
            let left = if i > 0 { Some(row[i - 1]) } else { None };
            let right = if j + 1 < n_bins { Some(row[j + 1]) } else { None };
            match (left, right) {
                (Some(l), Some(r)) => {
                    let run = (j - i + 2) as f64; // distance between anchors
                    for (t, v) in row[i..=j].iter_mut().enumerate() {
                        let frac = (t + 1) as f64 / run;
                        *v = l + (r - l) * frac;
                    }
                }
                (Some(l), None) => row[i..=j].iter_mut().for_each(|v| *v = l),
                (None, Some(r)) => row[i..=j].iter_mut().for_each(|v| *v = r),
                (None, None) => unreachable!("fully masked row handled above"),
            }
            i = j + 1;
        }
    }
    Ok(LimarOutput {
        sino: Sinogram::new(sino.n_angles(), n_bins, sino.bin_spacing(), values)?,
        degenerate_rows: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    fn sino_1row(values: Vec<f64>) -> Sinogram {
        let n = values.len();
        Sinogram::new(1, n, 1.0, values).unwrap()
    }

    fn mask_1row(bits: Vec<bool>) -> SinogramMask {
        let n = bits.len();
        SinogramMask::from_bits(1, n, bits).unwrap()
    }

    #[test]
    fn empty_trace_is_identity() {
        let s = sino_1row(vec![3.0, 1.0, 4.0, 1.0, 5.0]);
        let t = mask_1row(vec![false; 5]);
        let out = limar_inpaint(&s, &t).unwrap();
        assert_eq!(out.sino.values(), s.values());
        assert!(out.degenerate_rows.is_empty());
    }

    #[test]
    fn midpoint_interpolation() {
        let s = sino_1row(vec![1.0, 99.0, 3.0]);
        let t = mask_1row(vec![false, true, false]);
        let out = limar_inpaint(&s, &t).unwrap();
        assert_eq!(out.sino.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn exact_linear_fill() {
        let s = sino_1row(vec![0.0, -1.0, -2.0, -3.0, 4.0]);
        let t = mask_1row(vec![false, true, true, true, false]);
        let out = limar_inpaint(&s, &t).unwrap();
        assert_eq!(out.sino.values(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn boundary_runs_extend_constant() {
        let s = sino_1row(vec![9.0, 9.0, 5.0, 7.0, 9.0]);
        let t = mask_1row(vec![true, true, false, false, true]);
        let out = limar_inpaint(&s, &t).unwrap();
        assert_eq!(out.sino.values(), &[5.0, 5.0, 5.0, 7.0, 7.0]);
    }

    #[test]
    fn fully_masked_row_is_flagged_and_zeroed() {
        let s = sino_1row(vec![1.0, 2.0, 3.0]);
        let t = mask_1row(vec![true, true, true]);
        let out = limar_inpaint(&s, &t).unwrap();
        assert_eq!(out.sino.values(), &[0.0, 0.0, 0.0]);
        assert_eq!(out.degenerate_rows, vec![0]);
    }

    #[test]
    fn recovers_piecewise_linear_rows_exactly() {
        // Rows built from linear segments; masking segment interiors must be
        // recovered up to float rounding.
        let mut rng = SeedRng::new(41);
        for _ in 0..200 {
            let n = 40;
            let mut values = vec![0.0f64; n];
            let mut mask = vec![false; n];
            // 4 anchor points defining 3 linear segments.
            let mut anchors = vec![0usize, n - 1];
            anchors.push(rng.uniform_usize(5, 15));
            anchors.push(rng.uniform_usize(20, 34));
            anchors.sort_unstable();
            anchors.dedup();
            let anchor_vals: Vec<f64> =
                anchors.iter().map(|_| rng.uniform_f64(-5.0, 5.0)).collect();
            for w in 0..anchors.len() - 1 {
                let (i0, i1) = (anchors[w], anchors[w + 1]);
                let (v0, v1) = (anchor_vals[w], anchor_vals[w + 1]);
                for i in i0..=i1 {
                    let f = (i - i0) as f64 / (i1 - i0) as f64;
                    values[i] = v0 + (v1 - v0) * f;
                }
            }
            // Mask strict interiors of each segment.
            for w in 0..anchors.len() - 1 {
                for i in anchors[w] + 1..anchors[w + 1] {
                    if rng.uniform_f64(0.0, 1.0) < 0.8 {
                        mask[i] = true;
                    }
                }
            }
            // Anchors are never masked, so every masked run is bracketed by
            // two points of the same linear segment: recovery is exact.
            let s = sino_1row(values.clone());
            let t = mask_1row(mask.clone());
            let out = limar_inpaint(&s, &t).unwrap();
            for i in 0..n {
                if mask[i] {
                    assert!(
                        (out.sino.values()[i] - values[i]).abs() < 1e-12,
                        "bin {i}: {} vs {}",
                        out.sino.values()[i],
                        values[i]
                    );
                } else {
                    assert_eq!(out.sino.values()[i], values[i]);
                }
            }
        }
    }

    #[test]
    fn row_permutation_commutes() {
        let mut rng = SeedRng::new(42);
        let (n_angles, n_bins) = (6, 16);
        let values: Vec<f64> = (0..n_angles * n_bins)
            .map(|_| rng.uniform_f64(-2.0, 2.0))
            .collect();
        let bits: Vec<bool> = (0..n_angles * n_bins)
            .map(|_| rng.uniform_f64(0.0, 1.0) < 0.4)
            .collect();
        let s = Sinogram::new(n_angles, n_bins, 1.0, values.clone()).unwrap();
        let t = SinogramMask::from_bits(n_angles, n_bins, bits.clone()).unwrap();
        let out = limar_inpaint(&s, &t).unwrap();

        let perm = [3usize, 0, 5, 1, 4, 2];
        let pv: Vec<f64> = perm
            .iter()
            .flat_map(|&a| values[a * n_bins..(a + 1) * n_bins].to_vec())
            .collect();
        let pb: Vec<bool> = perm
            .iter()
            .flat_map(|&a| bits[a * n_bins..(a + 1) * n_bins].to_vec())
            .collect();
        let ps = Sinogram::new(n_angles, n_bins, 1.0, pv).unwrap();
        let pt = SinogramMask::from_bits(n_angles, n_bins, pb).unwrap();
        let pout = limar_inpaint(&ps, &pt).unwrap();
        for (pi, &a) in perm.iter().enumerate() {
            assert_eq!(
                &pout.sino.values()[pi * n_bins..(pi + 1) * n_bins],
                &out.sino.values()[a * n_bins..(a + 1) * n_bins]
            );
        }
    }
}
