//! USPS in LIBSVM text form (the `usps` / `usps.t` files of the LIBSVM
//! dataset collection): one sample per line, `label index:value ...`, with
//! 1-based feature indices over a 16×16 image and values in `[-1, 1]`.
//! Labels run from 1 to 10 and stand for digits 0 to 9.

use crate::error::{Error, Result};
use crate::formats::RawImages;

const SIDE: usize = 16;
const FEATURES: usize = SIDE * SIDE;

pub fn parse(text: &str) -> Result<RawImages> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::format("usps libsvm", format!("line {}: {reason}", lineno + 1));
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().ok_or_else(|| err("empty".into()))?;
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("bad label {label_tok:?}")))?;
        if label.fract() != 0.0 || !(1.0..=10.0).contains(&label) {
            return Err(err(format!("label {label_tok} outside 1..=10")));
        }
        let mut image = [0f32; FEATURES];
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("bad feature {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("bad index {idx:?}")))?;
            if idx == 0 || idx > FEATURES || idx <= last {
                return Err(err(format!("feature index {idx} out of order or range")));
            }
            last = idx;
            let val: f32 = val.parse().map_err(|_| err(format!("bad value {val:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite value {val}")));
            }
            image[idx - 1] = val;
        }
        pixels.extend_from_slice(&image);
        labels.push(label as u8 - 1);
    }
    if labels.is_empty() {
        return Err(Error::format("usps libsvm", "no samples"));
    }
    Ok(RawImages {
        count: labels.len(),
        channels: 1,
        height: SIDE,
        width: SIDE,
        pixels,
        labels,
        range: (-1.0, 1.0),
    })
}

/// Inverse of [`parse`] for fixtures: dense lines with every feature written.
pub fn encode(images: &RawImages) -> String {
    let mut out = String::new();
    for n in 0..images.count {
        out.push_str(&(images.labels[n] as u32 + 1).to_string());
        for (k, v) in images.pixels[n * FEATURES..(n + 1) * FEATURES].iter().enumerate() {
            out.push_str(&format!(" {}:{}", k + 1, v));
        }
        out.push('\n');
    }
    out
}
