//! Batched software rasterizer: RGB, depth and segmentation per env and
//! camera, plus point clouds, voxel grids and green-screen compositing.
//!
//! Cameras use the pinhole model with `+x` right, `+y` down and `+z` forward.
//! Images are row-major with the origin at the top-left pixel; pixel `(u, v)`
//! covers `[u, u+1) × [v, v+1)` and is sampled at its centre. Depth is the
//! camera-frame `z` of the nearest surface, or 0 where nothing was hit.

mod camera;
mod cloud;
mod io;
pub mod mesh;
mod raster;

pub use camera::{look_at, randomize_cameras, CameraConfig, CameraJitter, CameraSetup, Intrinsics, Mount};
pub use cloud::{pointcloud, voxelize, VoxelGrid};
pub use io::{load_depth_f32, save_depth_f32, save_rgb_png, save_seg_png};
pub use raster::{render, Renderer};

use crate::pose::Pose;
use crate::scene::{Appearance, SceneBatch, SceneError, View};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera `{name}`: {message}")]
    Camera { name: String, message: String },
    #[error("background is {got_w}x{got_h}, frame is {want_w}x{want_h}")]
    Resolution { want_w: usize, want_h: usize, got_w: usize, got_h: usize },
    #[error("voxel cell size must be positive, got {0}")]
    CellSize(f64),
    #[error("cannot parse camera setup `{0}`")]
    Setup(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: String, source: image::ImageError },
}

/// Rendered images of one camera in every env.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBatch {
    pub camera: String,
    pub num_envs: usize,
    pub width: usize,
    pub height: usize,
    /// `N × H × W × 3`.
    pub rgb: Vec<u8>,
    /// `N × H × W`, metres.
    pub depth: Vec<f32>,
    /// `N × H × W` entity ids, 0 for background.
    pub seg: Vec<u16>,
    /// World-to-camera transform used for each env.
    pub extrinsics: Vec<Pose>,
    pub intrinsics: Vec<Intrinsics>,
}

impl FrameBatch {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn env_rgb(&self, env: usize) -> &[u8] {
        let n = self.pixels() * 3;
        &self.rgb[env * n..(env + 1) * n]
    }

    pub fn env_depth(&self, env: usize) -> &[f32] {
        &self.depth[env * self.pixels()..(env + 1) * self.pixels()]
    }

    pub fn env_seg(&self, env: usize) -> &[u16] {
        &self.seg[env * self.pixels()..(env + 1) * self.pixels()]
    }

    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }
}

/// Replaces background pixels (seg 0) of every env with `background`
/// (`H × W × 3`). Returns `N × H × W × 3`.
pub fn composite_greenscreen(frame: &FrameBatch, background: &[u8], bg_width: usize, bg_height: usize) -> Result<Vec<u8>, RenderError> {
    if bg_width != frame.width || bg_height != frame.height || background.len() != frame.pixels() * 3 {
        return Err(RenderError::Resolution { want_w: frame.width, want_h: frame.height, got_w: bg_width, got_h: bg_height });
    }
    let mut out = frame.rgb.clone();
    for (i, &id) in frame.seg.iter().enumerate() {
        if id == 0 {
            let p = i % frame.pixels();
            out[i * 3..i * 3 + 3].copy_from_slice(&background[p * 3..p * 3 + 3]);
        }
    }
    Ok(out)
}

/// Texture randomization: gives every link and actor of each selected env a
/// new colour, and with probability `checker_prob` a checker pattern, drawn
/// from that env's RNG stream.
pub fn randomize_appearance(scene: &mut SceneBatch, checker_prob: f64, env_mask: Option<&[bool]>) -> Result<(), RenderError> {
    let paths: Vec<String> = scene
        .entity_paths()
        .into_iter()
        .filter(|p| matches!(scene.view(p), Ok(View::Link(_)) | Ok(View::Actor(_))))
        .collect();
    for env in 0..scene.num_envs() {
        if env_mask.is_some_and(|m| !m[env]) {
            continue;
        }
        for path in &paths {
            let rng = scene.rng(env);
            let color: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
            let checker = if rng.gen_bool(checker_prob.clamp(0.0, 1.0)) {
                Some(([rng.gen(), rng.gen(), rng.gen()], rng.gen_range(0.02f32..0.1)))
            } else {
                None
            };
            scene.set_appearance(env, path, Appearance { color, checker })?;
        }
    }
    Ok(())
}
