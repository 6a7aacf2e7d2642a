//! Broken-part detection and diffusion inpainting.

use crate::codec::{cell_bounds, frame_mse, masked_mse, DecodedFrame, Image, Mask, CELLS, GRID};
use crate::error::Result;

/// A part is bad when its MSE against the reference exceeds this.
pub const BAD_PART_MSE: f64 = 0.05;
/// A part is bad when more than this fraction of its cells is inconsistent.
pub const BAD_PART_PROXY: f64 = 0.3;
/// Largest luminance mismatch (in quantizer steps) a clean cell can show.
const CONSISTENCY_STEPS: f64 = 2.0;
pub const INPAINT_SWEEPS: usize = 50;

/// How to judge the received parts.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// Ground-truth image (training and evaluation).
    Frame(&'a Image),
    /// No ground truth: check each codeword's internal consistency.
    Proxy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartQuality {
    /// Per-part score, `[background, object]`: MSE with a reference, the
    /// inconsistent-cell fraction otherwise.
    pub score: [f64; 2],
    pub bad: [bool; 2],
}

impl PartQuality {
    pub fn any_bad(&self) -> bool {
        self.bad[0] || self.bad[1]
    }
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Cells of the part's bounding-box grid that hold at least one pixel.
fn occupied_cells(mask: &Mask) -> [bool; CELLS] {
    let mut occ = [false; CELLS];
    let Some((y0, x0, y1, x1)) = mask.bounding_box() else {
        return occ;
    };
    for (c, slot) in occ.iter_mut().enumerate() {
        let (cy0, cx0, cy1, cx1) = cell_bounds((y0, x0, y1, x1), c / GRID, c % GRID);
        *slot = (cy0..cy1).any(|y| (cx0..cx1).any(|x| mask.get(y, x)));
    }
    occ
}

/// Fraction of cells whose four coefficients contradict each other: an
/// occupied cell whose luminance coefficient disagrees with the luminance
/// of its colour coefficients, or an empty cell with nonzero coefficients.
pub fn inconsistency(coeffs: &[u8], mask: &Mask) -> f64 {
    let occ = occupied_cells(mask);
    let bad = (0..CELLS)
        .filter(|&c| {
            let q = |plane: usize| f64::from(coeffs[plane * CELLS + c]);
            if occ[c] {
                (q(0) - luma(q(1), q(2), q(3))).abs() > CONSISTENCY_STEPS
            } else {
                (0..4).any(|p| coeffs[p * CELLS + c] != 0)
            }
        })
        .count();
    bad as f64 / CELLS as f64
}

pub fn detect_broken(decoded: &DecodedFrame, object_mask: &Mask, reference: Reference<'_>) -> Result<PartQuality> {
    let background_mask = object_mask.complement();
    let score = match reference {
        Reference::Frame(truth) => [
            masked_mse(&decoded.image, truth, &background_mask)?,
            masked_mse(&decoded.image, truth, object_mask)?,
        ],
        Reference::Proxy => [
            inconsistency(&decoded.background_coefficients, &background_mask),
            inconsistency(&decoded.object_coefficients, object_mask),
        ],
    };
    let limit = match reference {
        Reference::Frame(_) => BAD_PART_MSE,
        Reference::Proxy => BAD_PART_PROXY,
    };
    Ok(PartQuality { score, bad: score.map(|s| s > limit) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inpainted {
    pub image: Image,
    /// Both parts were bad; the image is returned unchanged.
    pub both_bad: bool,
}

/// Replaces the pixels of bad parts by diffusing the good pixels inward:
/// bad pixels start at 0.5, then 50 Jacobi sweeps of 4-neighbour averaging
/// with good pixels held fixed.
pub fn inpaint(image: &Image, object_mask: &Mask, quality: &PartQuality) -> Inpainted {
    if quality.bad[0] && quality.bad[1] {
        return Inpainted { image: image.clone(), both_bad: true };
    }
    if !quality.any_bad() {
        return Inpainted { image: image.clone(), both_bad: false };
    }
    let (h, w, ch) = (image.height, image.width, image.channels);
    let hole = |y: usize, x: usize| if object_mask.get(y, x) { quality.bad[1] } else { quality.bad[0] };
    let mut cur = image.clone();
    for y in 0..h {
        for x in 0..w {
            if hole(y, x) {
                for c in 0..ch {
                    cur.set(y, x, c, 0.5);
                }
            }
        }
    }
    let mut next = cur.clone();
    for _ in 0..INPAINT_SWEEPS {
        for y in 0..h {
            for x in 0..w {
                if !hole(y, x) {
                    continue;
                }
                let nbrs = [(y.wrapping_sub(1), x), (y + 1, x), (y, x.wrapping_sub(1)), (y, x + 1)];
                for c in 0..ch {
                    let (mut sum, mut n) = (0.0, 0);
                    for &(ny, nx) in &nbrs {
                        if ny < h && nx < w {
                            sum += cur.get(ny, nx, c);
                            n += 1;
                        }
                    }
                    next.set(y, x, c, (sum / n as f64).clamp(0.0, 1.0));
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Inpainted { image: cur, both_bad: false }
}

/// Global MSE before and after detection plus inpainting.
pub fn repair_gain(truth: &Image, decoded: &DecodedFrame, object_mask: &Mask) -> Result<(f64, f64)> {
    let q = detect_broken(decoded, object_mask, Reference::Frame(truth))?;
    let out = inpaint(&decoded.image, object_mask, &q);
    Ok((frame_mse(truth, &decoded.image)?, frame_mse(truth, &out.image)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_is_good() {
        let mut mask = Mask::empty(4, 4);
        mask.set(0, 0, true);
        let truth = Image::zeros(4, 4, 3);
        let mut img = truth.clone();
        // Object pixel off by sqrt(0.05) in every channel: MSE exactly 0.05.
        let d = 0.05f64.sqrt();
        for c in 0..3 {
            img.set(0, 0, c, d);
        }
        let m = masked_mse(&img, &truth, &mask).unwrap();
        assert!((m - 0.05).abs() < 1e-15);
        assert!(!(m > BAD_PART_MSE));
    }

    #[test]
    fn occupied_cells_match_encoder_partition() {
        for w in 1..=32usize {
            let mut mask = Mask::empty(1, 32);
            for x in 0..w {
                mask.set(0, x, true);
            }
            let occ = occupied_cells(&mask);
            for gx in 0..GRID {
                let start = gx * w / GRID;
                let end = (gx + 1) * w / GRID;
                // A one-pixel-high box only populates the last grid row.
                assert_eq!(occ[(GRID - 1) * GRID + gx], end > start, "w={w} gx={gx}");
            }
        }
    }

    #[test]
    fn both_bad_is_flagged() {
        let img = Image::filled(4, 4, 3, 0.2);
        let q = PartQuality { score: [1.0, 1.0], bad: [true, true] };
        let out = inpaint(&img, &Mask::empty(4, 4), &q);
        assert!(out.both_bad);
        assert_eq!(out.image, img);
    }
}
