//! SVHN cropped-digit files (`train_32x32.mat`, `test_32x32.mat`).
//!
//! Each file holds `X`, a `32×32×3×N` byte array in column-major order, and
//! `y`, `N` labels in `1..=10` where 10 stands for the digit 0.

use crate::error::{Error, Result};
use crate::formats::RawImages;

use matfile::{MatFile, NumericData};

fn labels_as_f64(data: &NumericData) -> Option<Vec<f64>> {
    Some(match data {
        NumericData::Double { real, .. } => real.clone(),
        NumericData::Single { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::UInt8 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::Int32 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::UInt16 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        _ => return None,
    })
}

pub fn parse(bytes: &[u8]) -> Result<RawImages> {
    // matfile can panic on crafted dimension tables (unchecked i32 products)
    let mat = std::panic::catch_unwind(|| MatFile::parse(bytes))
        .map_err(|_| Error::format("svhn mat", "MAT decoder rejected the file structure"))?
        .map_err(|e| Error::format("svhn mat", e.to_string()))?;
    let x = mat
        .find_by_name("X")
        .ok_or_else(|| Error::format("svhn mat", "no array named X"))?;
    let y = mat
        .find_by_name("y")
        .ok_or_else(|| Error::format("svhn mat", "no array named y"))?;

    let (height, width, channels, count) = match x.size().as_slice() {
        &[h, w, c, n] => (h, w, c, n),
        &[h, w, c] => (h, w, c, 1),
        dims => {
            return Err(Error::format(
                "svhn mat",
                format!("X must be H×W×C×N, got {dims:?}"),
            ))
        }
    };
    let bytes = match x.data() {
        NumericData::UInt8 { real, .. } => real,
        _ => return Err(Error::format("svhn mat", "X must hold uint8 pixels")),
    };
    let len = height
        .checked_mul(width)
        .and_then(|v| v.checked_mul(channels))
        .and_then(|v| v.checked_mul(count))
        .ok_or_else(|| Error::format("svhn mat", "X dimensions overflow"))?;
    if bytes.len() != len {
        return Err(Error::format("svhn mat", "X payload does not match its dimensions"));
    }
    let raw_labels = labels_as_f64(y.data())
        .ok_or_else(|| Error::format("svhn mat", "y has an unsupported element type"))?;
    if raw_labels.len() != count {
        return Err(Error::format(
            "svhn mat",
            format!("{} labels for {count} images", raw_labels.len()),
        ));
    }
    let mut labels = Vec::with_capacity(count);
    for &v in &raw_labels {
        if v.fract() != 0.0 || !(1.0..=10.0).contains(&v) {
            return Err(Error::format("svhn mat", format!("label {v} outside 1..=10")));
        }
        labels.push((v as u8) % 10);
    }

    // column-major (h, w, c, n) -> row-major NCHW
    let mut pixels = vec![0f32; len];
    for n in 0..count {
        for c in 0..channels {
            for w in 0..width {
                for h in 0..height {
                    let src = h + height * (w + width * (c + channels * n));
                    let dst = ((n * channels + c) * height + h) * width + w;
                    pixels[dst] = bytes[src] as f32;
                }
            }
        }
    }
    Ok(RawImages {
        count,
        channels,
        height,
        width,
        pixels,
        labels,
        range: (0.0, 255.0),
    })
}
