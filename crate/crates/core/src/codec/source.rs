//! Synthetic labelled source: smooth background plus one of ten stencils.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Image, Mask, SemanticFrame, CHANNELS, IMAGE_SIDE};
use crate::error::{Error, Result};

pub const N_CLASSES: usize = 10;
/// Stencils are 8x8 cell patterns; each cell is 2x2 pixels.
pub const STENCIL_CELLS: usize = 8;
pub const CELL_PIXELS: usize = 2;
pub const STENCIL_SIDE: usize = STENCIL_CELLS * CELL_PIXELS;

/// Bit `r * 8 + c` set means cell `(r, c)` belongs to the object. Every
/// pattern touches all four borders, so its bounding box is the full 16x16
/// placement window. Pairwise distance is 19 to 30 cells.
pub const STENCILS: [u64; N_CLASSES] = [
    0x39ac_af0d_5ff0_9cd9,
    0xbd2e_6fc3_a353_72d5,
    0xb53a_736c_fb45_0fdf,
    0xb9e7_d5ab_62f3_6fd7,
    0x3cbf_59e7_4374_04eb,
    0x2f3f_3fa3_49ab_1edf,
    0x4dfb_bfc5_ba35_7bfb,
    0x3d1f_9fd3_fbc9_0be3,
    0xed2b_6f4f_6349_61cb,
    0xff3e_5fad_06c6_67fb,
];

/// Base colour of each class; all have luminance above 0.5.
pub const CLASS_COLOURS: [[f64; 3]; N_CLASSES] = [
    [0.60, 0.40, 0.40],
    [0.40, 0.60, 0.40],
    [0.40, 0.40, 0.60],
    [0.60, 0.60, 0.40],
    [0.60, 0.40, 0.60],
    [0.40, 0.60, 0.60],
    [0.60, 0.50, 0.40],
    [0.50, 0.60, 0.40],
    [0.55, 0.55, 0.55],
    [0.45, 0.55, 0.50],
];

const OBJECT_NOISE_SD: f64 = 0.02;

pub fn stencil_cell(label: usize, row: usize, col: usize) -> bool {
    (STENCILS[label] >> (row * STENCIL_CELLS + col)) & 1 == 1
}

/// Low-frequency colour field: a few random plane waves per channel.
fn background<R: Rng + ?Sized>(rng: &mut R) -> Image {
    let mut img = Image::zeros(IMAGE_SIDE, IMAGE_SIDE, CHANNELS);
    for c in 0..CHANNELS {
        let base = rng.random_range(0.25..0.55);
        let waves: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0..=2) as f64,
                    rng.random_range(0..=2) as f64,
                    rng.random_range(0.0..2.0 * PI),
                    rng.random_range(0.03..0.10),
                )
            })
            .collect();
        for y in 0..IMAGE_SIDE {
            for x in 0..IMAGE_SIDE {
                let mut v = base;
                for &(fx, fy, phase, amp) in &waves {
                    let arg = 2.0 * PI * (fx * x as f64 + fy * y as f64) / IMAGE_SIDE as f64 + phase;
                    v += amp * arg.cos();
                }
                img.set(y, x, c, v.clamp(0.0, 1.0));
            }
        }
    }
    img
}

/// Draws one frame of the given class.
pub fn generate_source<R: Rng + ?Sized>(rng: &mut R, class_label: u8) -> Result<SemanticFrame> {
    let label = usize::from(class_label);
    if label >= N_CLASSES {
        return Err(Error::OutOfRange(format!("class label {class_label} not in 0..10")));
    }
    let mut image = background(rng);
    let oy = rng.random_range(0..=IMAGE_SIDE - STENCIL_SIDE);
    let ox = rng.random_range(0..=IMAGE_SIDE - STENCIL_SIDE);
    let noise = Normal::new(0.0, OBJECT_NOISE_SD).expect("valid sd");
    let mut mask = Mask::empty(IMAGE_SIDE, IMAGE_SIDE);
    for py in 0..STENCIL_SIDE {
        for px in 0..STENCIL_SIDE {
            if !stencil_cell(label, py / CELL_PIXELS, px / CELL_PIXELS) {
                continue;
            }
            let (y, x) = (oy + py, ox + px);
            mask.set(y, x, true);
            for c in 0..CHANNELS {
                let v = CLASS_COLOURS[label][c] + noise.sample(rng);
                image.set(y, x, c, v.clamp(0.0, 1.0));
            }
        }
    }
    Ok(SemanticFrame { image, object_mask: mask, class_label })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_are_distinct_and_touch_borders() {
        for (i, a) in STENCILS.iter().enumerate() {
            for b in &STENCILS[i + 1..] {
                // 4 pixels per cell: 16 cells = 64 pixels.
                assert!((a ^ b).count_ones() >= 16);
            }
            let rows: Vec<bool> = (0..8).map(|r| (0..8).any(|c| stencil_cell(i, r, c))).collect();
            let cols: Vec<bool> = (0..8).map(|c| (0..8).any(|r| stencil_cell(i, r, c))).collect();
            assert!(rows[0] && rows[7] && cols[0] && cols[7]);
        }
    }

    #[test]
    fn colours_are_mid_tone() {
        for c in CLASS_COLOURS {
            assert!(0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2] > 0.4);
            assert!(c.iter().all(|v| (0.35..=0.65).contains(v)));
        }
    }
}
