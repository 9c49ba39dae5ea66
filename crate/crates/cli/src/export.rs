use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::Result;

/// 8-bit grayscale render of a `[F, T]` map in `[0, 1]`, `T` wide and `F`
/// tall, with the highest frequency bin in the top row.
pub fn write_mask_png(path: &Path, values: &[f32], bins: usize, frames: usize) -> Result<()> {
    let mut pixels = Vec::with_capacity(bins * frames);
    for f in (0..bins).rev() {
        pixels.extend(
            values[f * frames..(f + 1) * frames]
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), frames as u32, bins as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header()?.write_image_data(&pixels)?;
    Ok(())
}
