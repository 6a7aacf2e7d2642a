//! Reference semantic codec over a synthetic source.
//!
//! An image is split by its object mask into a background and an object
//! part. Each part is summarized on an 8x8 grid of cells spanning its
//! bounding box and every cell carries four 8-bit coefficients, giving
//! 2048 bits per part.
//!
//! Codeword layout (v1): four planes in the order luminance, red, green,
//! blue. Each plane lists the 64 cells row-major; each coefficient is the
//! mean over the part's own pixels in that cell, quantized as
//! `round(255 v)` and written MSB first. Cells without part pixels code 0.
//! Luminance is `0.299 R + 0.587 G + 0.114 B`; it is what the classifier
//! reads, while the colour planes drive pixel reconstruction.
//!
//! The receiver knows the mask (it is assumed to arrive losslessly), so
//! both ends derive the same bounding boxes and cells.

mod format;
mod source;

pub use format::{frame_from_bytes, frame_to_bytes};
pub use source::{generate_source, stencil_cell, CLASS_COLOURS, N_CLASSES, STENCILS, STENCIL_CELLS};

use crate::error::{Error, Result};

pub const IMAGE_SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const GRID: usize = 8;
pub const CELLS: usize = GRID * GRID;
pub const PLANES: usize = 4;
pub const COEFFICIENTS: usize = PLANES * CELLS;
pub const BITS_PER_COEFFICIENT: usize = 8;
pub const BITS_PER_PART: usize = COEFFICIENTS * BITS_PER_COEFFICIENT;

/// Luminance threshold separating object cells from empty ones.
const OBJECT_LUMA_THRESHOLD: f64 = 0.3;

/// Row-major `height x width x channels` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self { height, width, channels, data: vec![value; height * width * channels] }
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.idx(y, x, c);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }
}

/// Binary pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![false; height * width] }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    pub fn complement(&self) -> Mask {
        Mask { height: self.height, width: self.width, data: self.data.iter().map(|b| !b).collect() }
    }

    /// Inclusive-exclusive bounding box `(y0, x0, y1, x1)`; `None` if empty.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    bb = Some(match bb {
                        None => (y, x, y + 1, x + 1),
                        Some((y0, x0, y1, x1)) => (y0.min(y), x0.min(x), y1.max(y + 1), x1.max(x + 1)),
                    });
                }
            }
        }
        bb
    }
}

/// Source image with its oracle segmentation and class.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticFrame {
    pub image: Image,
    pub object_mask: Mask,
    pub class_label: u8,
}

/// One semantic part: the masked image together with its membership mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub pixels: Image,
    pub mask: Mask,
}

/// Both codewords of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrame {
    pub bits_background: Vec<u8>,
    pub bits_object: Vec<u8>,
}

/// Receiver-side reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrame {
    pub image: Image,
    /// Decoded luminance plane of the object codeword, row-major cells.
    pub object_luma: [f64; CELLS],
    pub background_coefficients: Vec<u8>,
    pub object_coefficients: Vec<u8>,
}

/// `(part_background, part_object)`; the pixelwise sum is the image.
pub fn segment(frame: &SemanticFrame) -> (Part, Part) {
    let object_mask = frame.object_mask.clone();
    let background_mask = object_mask.complement();
    let mask_image = |m: &Mask| {
        let mut img = frame.image.clone();
        for y in 0..img.height {
            for x in 0..img.width {
                if !m.get(y, x) {
                    for c in 0..img.channels {
                        img.set(y, x, c, 0.0);
                    }
                }
            }
        }
        img
    };
    (
        Part { pixels: mask_image(&background_mask), mask: background_mask },
        Part { pixels: mask_image(&object_mask), mask: object_mask },
    )
}

/// Pixel ranges `(y0, x0, y1, x1)` of cell `(gy, gx)` within a bounding box.
pub fn cell_bounds(bb: (usize, usize, usize, usize), gy: usize, gx: usize) -> (usize, usize, usize, usize) {
    let (y0, x0, y1, x1) = bb;
    let (h, w) = (y1 - y0, x1 - x0);
    (y0 + gy * h / GRID, x0 + gx * w / GRID, y0 + (gy + 1) * h / GRID, x0 + (gx + 1) * w / GRID)
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn dequantize(q: u8) -> f64 {
    f64::from(q) / 255.0
}

/// Cell coefficients of a part, plane-major (see module docs).
pub fn part_coefficients(part: &Part) -> Vec<u8> {
    let mut coeffs = vec![0u8; COEFFICIENTS];
    let Some(bb) = part.mask.bounding_box() else {
        return coeffs;
    };
    let img = &part.pixels;
    for gy in 0..GRID {
        for gx in 0..GRID {
            let (cy0, cx0, cy1, cx1) = cell_bounds(bb, gy, gx);
            let mut sum = [0.0f64; 3];
            let mut n = 0usize;
            for y in cy0..cy1 {
                for x in cx0..cx1 {
                    if part.mask.get(y, x) {
                        for (c, s) in sum.iter_mut().enumerate() {
                            *s += img.get(y, x, c.min(img.channels - 1));
                        }
                        n += 1;
                    }
                }
            }
            if n == 0 {
                continue;
            }
            let mean = sum.map(|s| s / n as f64);
            let cell = gy * GRID + gx;
            coeffs[cell] = quantize(luma(mean[0], mean[1], mean[2]));
            for c in 0..3 {
                coeffs[(c + 1) * CELLS + cell] = quantize(mean[c]);
            }
        }
    }
    coeffs
}

pub fn coefficients_to_bits(coeffs: &[u8]) -> Vec<u8> {
    coeffs
        .iter()
        .flat_map(|q| (0..BITS_PER_COEFFICIENT).map(move |b| (q >> (7 - b)) & 1))
        .collect()
}

pub fn bits_to_coefficients(bits: &[u8]) -> Vec<u8> {
    bits.chunks_exact(BITS_PER_COEFFICIENT)
        .map(|chunk| chunk.iter().fold(0u8, |acc, b| (acc << 1) | (b & 1)))
        .collect()
}

/// 2048-bit codeword of one part.
pub fn encode_part(part: &Part) -> Vec<u8> {
    coefficients_to_bits(&part_coefficients(part))
}

pub fn encode_frame(frame: &SemanticFrame) -> EncodedFrame {
    let (bg, obj) = segment(frame);
    EncodedFrame { bits_background: encode_part(&bg), bits_object: encode_part(&obj) }
}

/// Writes the colour planes of a codeword onto the part's pixels.
fn paint_part(coeffs: &[u8], mask: &Mask, out: &mut Image) {
    let Some(bb) = mask.bounding_box() else {
        return;
    };
    for gy in 0..GRID {
        for gx in 0..GRID {
            let cell = gy * GRID + gx;
            let (cy0, cx0, cy1, cx1) = cell_bounds(bb, gy, gx);
            for y in cy0..cy1 {
                for x in cx0..cx1 {
                    if mask.get(y, x) {
                        for c in 0..out.channels.min(3) {
                            out.set(y, x, c, dequantize(coeffs[(c + 1) * CELLS + cell]));
                        }
                    }
                }
            }
        }
    }
}

/// Rebuilds the image from both codewords and the object mask.
pub fn decode_frame(bits_background: &[u8], bits_object: &[u8], object_mask: &Mask) -> Result<DecodedFrame> {
    for (name, bits) in [("background", bits_background), ("object", bits_object)] {
        if bits.len() != BITS_PER_PART {
            return Err(Error::Dimension(format!(
                "{name} codeword has {} bits, expected {BITS_PER_PART}",
                bits.len()
            )));
        }
    }
    let bg = bits_to_coefficients(bits_background);
    let obj = bits_to_coefficients(bits_object);
    let mut image = Image::zeros(object_mask.height, object_mask.width, CHANNELS);
    paint_part(&bg, &object_mask.complement(), &mut image);
    paint_part(&obj, object_mask, &mut image);
    image.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let mut object_luma = [0.0; CELLS];
    for (dst, q) in object_luma.iter_mut().zip(&obj[..CELLS]) {
        *dst = dequantize(*q);
    }
    Ok(DecodedFrame { image, object_luma, background_coefficients: bg, object_coefficients: obj })
}

/// Nearest-stencil classification of the decoded object luminance.
/// Returns the predicted label and whether it equals `true_label`; ties go
/// to the lowest label.
pub fn classify(decoded: &DecodedFrame, true_label: u8) -> (u8, bool) {
    let predicted = predict_label(&decoded.object_luma);
    (predicted, predicted == true_label)
}

pub fn predict_label(object_luma: &[f64; CELLS]) -> u8 {
    let shape = object_luma
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, v)| if *v > OBJECT_LUMA_THRESHOLD { acc | (1 << i) } else { acc });
    let mut best = (u32::MAX, 0u8);
    for (label, stencil) in STENCILS.iter().enumerate() {
        let d = (shape ^ stencil).count_ones();
        if d < best.0 {
            best = (d, label as u8);
        }
    }
    best.1
}

/// Mean squared error over every pixel and channel.
pub fn frame_mse(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Dimension(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    let n = a.data.len().max(1) as f64;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// MSE restricted to the pixels of `mask` (all channels).
pub fn masked_mse(a: &Image, b: &Image, mask: &Mask) -> Result<f64> {
    if !a.same_shape(b) || a.height != mask.height || a.width != mask.width {
        return Err(Error::Dimension("image/mask shapes differ".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..a.height {
        for x in 0..a.width {
            if mask.get(y, x) {
                for c in 0..a.channels {
                    let d = a.get(y, x, c) - b.get(y, x, c);
                    sum += d * d;
                }
                n += a.channels;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}
