use super::{FrameBatch, RenderError};
use std::path::Path;

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> RenderError + '_ {
    move |source| RenderError::Image { path: path.display().to_string(), source }
}

pub fn save_rgb_png(frame: &FrameBatch, env: usize, path: &Path) -> Result<(), RenderError> {
    image::save_buffer(path, frame.env_rgb(env), frame.width as u32, frame.height as u32, image::ExtendedColorType::Rgb8)
        .map_err(image_err(path))
}

/// Segmentation ids stored as 16-bit grayscale.
pub fn save_seg_png(frame: &FrameBatch, env: usize, path: &Path) -> Result<(), RenderError> {
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(frame.width as u32, frame.height as u32, frame.env_seg(env).to_vec())
        .expect("buffer matches frame size");
    img.save(path).map_err(image_err(path))
}

/// Raw little-endian `f32` depth, row-major.
pub fn save_depth_f32(frame: &FrameBatch, env: usize, path: &Path) -> Result<(), RenderError> {
    let bytes: Vec<u8> = frame.env_depth(env).iter().flat_map(|d| d.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|source| RenderError::Io { path: path.display().to_string(), source })
}

pub fn load_depth_f32(path: &Path) -> Result<Vec<f32>, RenderError> {
    let bytes = std::fs::read(path).map_err(|source| RenderError::Io { path: path.display().to_string(), source })?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}
