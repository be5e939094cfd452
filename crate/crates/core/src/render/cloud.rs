use super::{CameraConfig, FrameBatch, RenderError};
use crate::pose::Vec3;

/// Back-projects every hit pixel of every env. Each point is
/// `[x, y, z, r, g, b]` with rgb in `[0, 1]`; in the world frame when
/// `world` is set, else in the camera frame. Pixels with zero depth are
/// dropped.
pub fn pointcloud(frame: &FrameBatch, camera: &CameraConfig, world: bool) -> Vec<Vec<[f64; 6]>> {
    debug_assert_eq!((frame.width, frame.height), (camera.width, camera.height));
    (0..frame.num_envs)
        .map(|env| {
            let k = frame.intrinsics[env];
            let to_world = frame.extrinsics[env].inverse();
            let depth = frame.env_depth(env);
            let rgb = frame.env_rgb(env);
            let mut out = Vec::new();
            for v in 0..frame.height {
                for u in 0..frame.width {
                    let i = frame.index(u, v);
                    if depth[i] == 0.0 {
                        continue;
                    }
                    let mut p = k.unproject(u as f64 + 0.5, v as f64 + 0.5, depth[i] as f64);
                    if world {
                        p = to_world.transform_point(&p);
                    }
                    let c = |ch: usize| rgb[i * 3 + ch] as f64 / 255.0;
                    out.push([p.x, p.y, p.z, c(0), c(1), c(2)]);
                }
            }
            out
        })
        .collect()
}

/// Occupancy grid over an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub cell: f64,
    pub dims: [usize; 3],
    /// Flattened `x`-fastest.
    pub occupied: Vec<bool>,
}

impl VoxelGrid {
    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|o| **o).count()
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.dims[1] + iy) * self.dims[0] + ix
    }

    /// Cell containing `p`, if inside the grid.
    pub fn cell_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.cell).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }
}

/// Marks every cell of the box `[lo, hi)` that holds at least one point.
/// Points outside the box are ignored.
pub fn voxelize(points: &[[f64; 6]], cell: f64, lo: Vec3, hi: Vec3) -> Result<VoxelGrid, RenderError> {
    if !(cell > 0.0) || !cell.is_finite() {
        return Err(RenderError::CellSize(cell));
    }
    let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / cell).ceil().max(0.0) as usize);
    let mut grid = VoxelGrid { origin: lo, cell, dims, occupied: vec![false; dims.iter().product()] };
    for p in points {
        if let Some([x, y, z]) = grid.cell_of(&Vec3::new(p[0], p[1], p[2])) {
            let i = grid.index(x, y, z);
            grid.occupied[i] = true;
        }
    }
    Ok(grid)
}
