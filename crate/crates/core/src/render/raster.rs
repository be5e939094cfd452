use super::mesh::{MeshCache, ShapeMesh};
use super::{CameraConfig, FrameBatch, Intrinsics, RenderError};
use crate::pose::{Pose, Vec3};
use crate::scene::{Appearance, SceneBatch};
use rayon::prelude::*;

/// Half-size of the square drawn for the ground plane.
const GROUND_EXTENT: f64 = 50.0;

/// Rasterizer state built once per scene: tessellated meshes and lighting.
#[derive(Debug, Clone)]
pub struct Renderer {
    meshes: MeshCache,
    /// Direction towards the light, world frame.
    pub light: Vec3,
    pub ambient: f32,
    pub background: [u8; 3],
    pub ground: Appearance,
}

struct Drawable {
    mesh: ShapeMesh,
    pose: Pose,
    appearance: Appearance,
    seg: u16,
    radius: f64,
}

impl Renderer {
    pub fn new(scene: &SceneBatch) -> Self {
        let mut meshes = MeshCache::default();
        let layout = scene.layout();
        for env in 0..scene.num_envs() {
            for slot in &layout.articulations[env] {
                for link in &slot.model.template.links {
                    for cs in &link.collision_shapes {
                        meshes.prepare(&cs.shape);
                    }
                }
            }
            for a in &layout.descriptors[env].actors {
                meshes.prepare(&a.shape);
            }
        }
        Self {
            meshes,
            light: Vec3::new(0.4, 0.3, 1.0).normalize(),
            ambient: 0.35,
            background: [0, 0, 0],
            ground: Appearance { color: [0.55, 0.55, 0.55], checker: Some(([0.4, 0.4, 0.4], 0.5)) },
        }
    }

    fn drawables(&self, scene: &SceneBatch, env: usize) -> Vec<Drawable> {
        let layout = scene.layout();
        let mut out = Vec::new();
        let link_poses = scene.env_link_poses(env);
        for slot in &layout.articulations[env] {
            for (li, link) in slot.model.template.links.iter().enumerate() {
                let ls = slot.link_offset + li;
                for cs in &link.collision_shapes {
                    out.push(Drawable {
                        mesh: self.meshes.get(&cs.shape),
                        pose: link_poses[ls].compose(&cs.origin),
                        appearance: *scene.link_appearance(env, ls),
                        seg: layout.link_seg[env * layout.link_max + ls],
                        radius: cs.shape.bounding_radius(),
                    });
                }
            }
        }
        let poses = scene.env_actor_poses(env);
        for (k, a) in layout.descriptors[env].actors.iter().enumerate() {
            out.push(Drawable {
                mesh: self.meshes.get(&a.shape),
                pose: poses[k],
                appearance: *scene.actor_appearance(env, k),
                seg: layout.actor_seg[env * layout.actor_max + k],
                radius: a.shape.bounding_radius(),
            });
        }
        out
    }

    /// Renders every camera in every env. Output `i` belongs to `cameras[i]`.
    pub fn render(&self, scene: &SceneBatch, cameras: &[CameraConfig]) -> Result<Vec<FrameBatch>, RenderError> {
        let n = scene.num_envs();
        let mut frames = Vec::with_capacity(cameras.len());
        for cam in cameras {
            cam.validate(n)?;
            let extrinsics = cam.world_to_camera(scene)?;
            let intrinsics: Vec<Intrinsics> = (0..n).map(|e| cam.intrinsics_for(e)).collect();
            let hw = cam.width * cam.height;
            let mut frame = FrameBatch {
                camera: cam.name.clone(),
                num_envs: n,
                width: cam.width,
                height: cam.height,
                rgb: vec![0; n * hw * 3],
                depth: vec![0.0; n * hw],
                seg: vec![0; n * hw],
                extrinsics,
                intrinsics,
            };
            let (ext, ks) = (&frame.extrinsics, &frame.intrinsics);
            frame
                .rgb
                .par_chunks_mut(hw * 3)
                .zip(frame.depth.par_chunks_mut(hw))
                .zip(frame.seg.par_chunks_mut(hw))
                .enumerate()
                .for_each(|(env, ((rgb, depth), seg))| {
                    let mut target = Target { width: cam.width, height: cam.height, near: cam.near, far: cam.far, k: ks[env], rgb, depth, seg };
                    self.render_env(scene, env, &ext[env], &mut target);
                });
            frames.push(frame);
        }
        Ok(frames)
    }

    fn render_env(&self, scene: &SceneBatch, env: usize, world_to_cam: &Pose, t: &mut Target) {
        for (i, px) in t.rgb.chunks_mut(3).enumerate() {
            px.copy_from_slice(&self.background);
            t.depth[i] = f32::INFINITY;
        }
        let cam_to_world = world_to_cam.inverse();
        if scene.layout().has_ground(env) {
            let g = GROUND_EXTENT;
            let corners = [Vec3::new(-g, -g, 0.0), Vec3::new(g, -g, 0.0), Vec3::new(g, g, 0.0), Vec3::new(-g, g, 0.0)];
            let cam: Vec<Vec3> = corners.iter().map(|c| world_to_cam.transform_point(c)).collect();
            let id = scene.layout().ground_id;
            for tri in [[0, 1, 2], [0, 2, 3]] {
                let shade = self.shade(&Vec3::z(), &cam_to_world, &corners[tri[0]]);
                t.triangle([cam[tri[0]], cam[tri[1]], cam[tri[2]]], shade, &self.ground, id, &cam_to_world);
            }
        }
        for d in self.drawables(scene, env) {
            let to_cam = world_to_cam.compose(&d.pose);
            let centre = to_cam.translation;
            if centre.z + d.radius < t.near || centre.z - d.radius > t.far {
                continue;
            }
            let world: Vec<Vec3> = d.mesh.mesh.vertices.iter().map(|v| d.pose.transform_point(&v.component_mul(&d.mesh.scale))).collect();
            let cam: Vec<Vec3> = world.iter().map(|p| world_to_cam.transform_point(p)).collect();
            for tri in &d.mesh.mesh.triangles {
                let [a, b, c] = tri.map(|i| i as usize);
                let n = (world[b] - world[a]).cross(&(world[c] - world[a]));
                if n.norm_squared() == 0.0 {
                    continue;
                }
                let shade = self.shade(&n.normalize(), &cam_to_world, &world[a]);
                t.triangle([cam[a], cam[b], cam[c]], shade, &d.appearance, d.seg, &cam_to_world);
            }
        }
        for z in t.depth.iter_mut() {
            if !z.is_finite() {
                *z = 0.0;
            }
        }
    }

    /// Flat-shading intensity of a face, with the normal turned towards the
    /// camera.
    fn shade(&self, normal: &Vec3, cam_to_world: &Pose, point: &Vec3) -> f32 {
        let view = cam_to_world.translation - point;
        let n = if normal.dot(&view) < 0.0 { -normal } else { *normal };
        self.ambient + (1.0 - self.ambient) * n.dot(&self.light).max(0.0) as f32
    }
}

/// Renders with a throwaway [`Renderer`].
pub fn render(scene: &SceneBatch, cameras: &[CameraConfig]) -> Result<Vec<FrameBatch>, RenderError> {
    Renderer::new(scene).render(scene, cameras)
}

struct Target<'a> {
    width: usize,
    height: usize,
    near: f64,
    far: f64,
    k: Intrinsics,
    rgb: &'a mut [u8],
    depth: &'a mut [f32],
    seg: &'a mut [u16],
}

impl Target<'_> {
    /// Clips a camera-frame triangle against the near plane and rasterizes
    /// the pieces.
    fn triangle(&mut self, v: [Vec3; 3], shade: f32, app: &Appearance, seg: u16, cam_to_world: &Pose) {
        let inside = v.iter().filter(|p| p.z >= self.near).count();
        if inside == 3 {
            self.fill(v, shade, app, seg, cam_to_world);
            return;
        }
        if inside == 0 {
            return;
        }
        let mut poly: Vec<Vec3> = Vec::with_capacity(4);
        for i in 0..3 {
            let (a, b) = (v[i], v[(i + 1) % 3]);
            let (ain, bin) = (a.z >= self.near, b.z >= self.near);
            if ain {
                poly.push(a);
            }
            if ain != bin {
                let s = (self.near - a.z) / (b.z - a.z);
                let mut p = a + (b - a) * s;
                p.z = self.near;
                poly.push(p);
            }
        }
        for i in 1..poly.len() - 1 {
            self.fill([poly[0], poly[i], poly[i + 1]], shade, app, seg, cam_to_world);
        }
    }

    fn fill(&mut self, v: [Vec3; 3], shade: f32, app: &Appearance, seg: u16, cam_to_world: &Pose) {
        let s: Vec<(f64, f64)> = v.iter().map(|p| self.k.project(p)).collect();
        let area = edge(s[0], s[1], s[2]);
        if area.abs() < 1e-12 || !area.is_finite() {
            return;
        }
        let inv_z = [1.0 / v[0].z, 1.0 / v[1].z, 1.0 / v[2].z];
        let min_u = s.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let max_u = s.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil().min(self.width as f64) as usize;
        let min_v = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let max_v = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().min(self.height as f64) as usize;
        for py in min_v..max_v {
            for px in min_u..max_u {
                let p = (px as f64 + 0.5, py as f64 + 0.5);
                let w0 = edge(s[1], s[2], p) / area;
                let w1 = edge(s[2], s[0], p) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = 1.0 / (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]);
                if z < self.near - 1e-9 || z > self.far {
                    continue;
                }
                let i = py * self.width + px;
                if (z as f32) >= self.depth[i] {
                    continue;
                }
                self.depth[i] = z as f32;
                self.seg[i] = seg;
                let base = match app.checker {
                    Some((alt, cell)) => {
                        let w = cam_to_world.transform_point(&self.k.unproject(p.0, p.1, z));
                        let c = cell as f64;
                        let parity = ((w.x / c).floor() + (w.y / c).floor() + (w.z / c).floor()) as i64;
                        if parity.rem_euclid(2) == 0 { app.color } else { alt }
                    }
                    None => app.color,
                };
                for ch in 0..3 {
                    self.rgb[i * 3 + ch] = (base[ch] * shade * 255.0).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}
