//! Flat little-endian frame layout for golden files.
//!
//! ```text
//! u32 height, u32 width, u32 channels, u32 label
//! f64 image[height * width * channels]   row-major, channel fastest
//! u8  mask[height * width]               0 or 1
//! u8  bits_background[256]               packed MSB first
//! u8  bits_object[256]
//! ```

use super::{encode_frame, EncodedFrame, Image, Mask, SemanticFrame, BITS_PER_PART};
use crate::error::{Error, Result};

fn pack(bits: &[u8], out: &mut Vec<u8>) {
    for chunk in bits.chunks(8) {
        out.push(chunk.iter().enumerate().fold(0u8, |acc, (i, b)| acc | ((b & 1) << (7 - i))));
    }
}

fn unpack(bytes: &[u8]) -> Vec<u8> {
    bytes.iter().flat_map(|b| (0..8).map(move |i| (b >> (7 - i)) & 1)).collect()
}

pub fn frame_to_bytes(frame: &SemanticFrame) -> Vec<u8> {
    let img = &frame.image;
    let enc = encode_frame(frame);
    let mut out = Vec::with_capacity(16 + img.data.len() * 8 + frame.object_mask.data.len() + BITS_PER_PART / 4);
    for v in [img.height, img.width, img.channels, usize::from(frame.class_label)] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in &img.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(frame.object_mask.data.iter().map(|b| u8::from(*b)));
    pack(&enc.bits_background, &mut out);
    pack(&enc.bits_object, &mut out);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Dimension(format!("frame truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn frame_from_bytes(bytes: &[u8]) -> Result<(SemanticFrame, EncodedFrame)> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let (h, w, c, label) = (cur.u32()?, cur.u32()?, cur.u32()?, cur.u32()?);
    let n = h
        .checked_mul(w)
        .and_then(|hw| hw.checked_mul(c))
        .ok_or_else(|| Error::Dimension("frame header overflows".into()))?;
    let label = u8::try_from(label).map_err(|_| Error::OutOfRange(format!("label {label}")))?;
    let mut image = Image::zeros(h, w, c);
    for (dst, chunk) in image.data.iter_mut().zip(cur.take(n.saturating_mul(8))?.chunks_exact(8)) {
        *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    let mut mask = Mask::empty(h, w);
    for (dst, b) in mask.data.iter_mut().zip(cur.take(h * w)?) {
        *dst = match b {
            0 => false,
            1 => true,
            other => return Err(Error::OutOfRange(format!("mask byte {other}"))),
        };
    }
    let bits_background = unpack(cur.take(BITS_PER_PART / 8)?);
    let bits_object = unpack(cur.take(BITS_PER_PART / 8)?);
    if cur.pos != bytes.len() {
        return Err(Error::Dimension(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok((
        SemanticFrame { image, object_mask: mask, class_label: label },
        EncodedFrame { bits_background, bits_object },
    ))
}
