//! Sample grids as PNG.

use std::path::Path;

use image::{Rgb, RgbImage};
use tch::{Kind, Tensor};

use crate::error::{CliError, Result};

/// Writes `images` ([rows·cols, C, H, W] in [-1, 1], row-major) as one PNG.
pub fn save_grid(images: &Tensor, rows: usize, cols: usize, path: &Path) -> Result<()> {
    let render = |reason: String| CliError::Render {
        path: path.to_path_buf(),
        reason,
    };
    let size = images.size();
    if size.len() != 4 || size[0] as usize != rows * cols || !(size[1] == 1 || size[1] == 3) {
        return Err(render(format!("expected [{}, 1|3, H, W] images, got {size:?}", rows * cols)));
    }
    let (ch, h, w) = (size[1] as usize, size[2] as usize, size[3] as usize);
    let pixels: Vec<u8> = Vec::try_from(
        ((images.clamp(-1.0, 1.0) + 1.0) * 127.5)
            .round()
            .to_kind(Kind::Uint8)
            .contiguous()
            .flatten(0, -1),
    )
    .map_err(|e: tch::TchError| render(e.to_string()))?;
    let mut img = RgbImage::new((cols * w) as u32, (rows * h) as u32);
    for (k, tile) in pixels.chunks(ch * h * w).enumerate() {
        let (r, c) = (k / cols, k % cols);
        for y in 0..h {
            for x in 0..w {
                let at = |channel: usize| tile[(channel.min(ch - 1) * h + y) * w + x];
                img.put_pixel((c * w + x) as u32, (r * h + y) as u32, Rgb([at(0), at(1), at(2)]));
            }
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| plr_core::Error::io(parent, e))?;
    }
    img.save(path).map_err(|e| render(e.to_string()))
}
