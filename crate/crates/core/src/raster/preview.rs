use std::path::Path;

use image::GrayImage;

use super::ChemImage;
use super::cimg::TensorFileError;

/// Write one channel as an 8-bit grayscale PNG, min-max normalized.
///
/// A constant channel maps to black when zero and white otherwise.
pub fn export_png_preview(img: &ChemImage, path: impl AsRef<Path>, channel: usize) -> Result<(), TensorFileError> {
    if channel >= img.channels {
        return Err(TensorFileError::Format(format!(
            "channel {channel} out of range for a {}-channel image",
            img.channels
        )));
    }
    let values: Vec<f32> = (0..img.height * img.width)
        .map(|p| img.data[p * img.channels + channel])
        .collect();
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let pixels: Vec<u8> = values
        .iter()
        .map(|&v| {
            if hi > lo {
                (((v - lo) / (hi - lo)) * 255.0).round() as u8
            } else if v != 0.0 {
                255
            } else {
                0
            }
        })
        .collect();
    let gray = GrayImage::from_raw(img.width as u32, img.height as u32, pixels)
        .expect("buffer matches dimensions");
    gray.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| TensorFileError::Io(std::io::Error::other(e)))
}
