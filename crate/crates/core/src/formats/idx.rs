//! IDX files as used by MNIST: a magic of two zero bytes, a type code, the
//! number of dimensions, big-endian `u32` sizes, then the raw data.
//!
//! Only unsigned-byte payloads (type `0x08`) are accepted.

use crate::error::{Error, Result};
use crate::formats::RawImages;

const UBYTE: u8 = 0x08;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::format("idx", "shorter than the 4-byte magic"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format("idx", "magic must start with two zero bytes"));
    }
    if bytes[2] != UBYTE {
        return Err(Error::format(
            "idx",
            format!("unsupported element type 0x{:02x}", bytes[2]),
        ));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(Error::format("idx", "zero dimensions"));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::format("idx", "truncated dimension table"));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut total: usize = 1;
    for k in 0..ndim {
        let off = 4 + 4 * k;
        let d = u32::from_be_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]);
        total = total
            .checked_mul(d as usize)
            .ok_or_else(|| Error::format("idx", "dimension product overflows"))?;
        dims.push(d as usize);
    }
    let body = &bytes[header..];
    if body.len() != total {
        return Err(Error::format(
            "idx",
            format!("payload has {} bytes, dimensions {dims:?} need {total}", body.len()),
        ));
    }
    Ok(IdxArray {
        dims,
        data: body.to_vec(),
    })
}

pub fn encode(array: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, UBYTE, array.dims.len() as u8];
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

/// Pairs an image file (`N×H×W` or `N×H×W×C`) with a label file (`N`).
pub fn images_with_labels(images: &[u8], labels: &[u8]) -> Result<RawImages> {
    let images = parse(images)?;
    let labels = parse(labels)?;
    let (count, height, width, channels) = match images.dims.as_slice() {
        &[n, h, w] => (n, h, w, 1),
        &[n, h, w, c] => (n, h, w, c),
        dims => {
            return Err(Error::format(
                "idx",
                format!("image file must have 3 or 4 dimensions, got {dims:?}"),
            ))
        }
    };
    if labels.dims != [count] {
        return Err(Error::format(
            "idx",
            format!("label file dims {:?} do not match {count} images", labels.dims),
        ));
    }
    // HWC -> CHW
    let plane = height * width;
    let mut pixels = vec![0f32; images.data.len()];
    for n in 0..count {
        let src = &images.data[n * plane * channels..(n + 1) * plane * channels];
        let dst = &mut pixels[n * plane * channels..(n + 1) * plane * channels];
        for p in 0..plane {
            for c in 0..channels {
                dst[c * plane + p] = src[p * channels + c] as f32;
            }
        }
    }
    Ok(RawImages {
        count,
        channels,
        height,
        width,
        pixels,
        labels: labels.data,
        range: (0.0, 255.0),
    })
}
