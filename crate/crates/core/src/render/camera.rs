use super::RenderError;
use crate::pose::{Pose, PoseBatch, Vec3};
use crate::scene::SceneBatch;
use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Pixel coordinates of a camera-frame point.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Camera-frame point at depth `z` seen through pixel coordinates `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }
}

/// Camera attached to a link: camera pose = link pose ∘ `offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mount {
    /// Link path such as `"arm/link5"`.
    pub link: String,
    pub offset: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub name: String,
    pub width: usize,
    pub height: usize,
    /// One entry shared by all envs, or one per env.
    pub intrinsics: Vec<Intrinsics>,
    /// World-to-camera transform; one shared pose or one per env.
    pub extrinsic: PoseBatch,
    pub mount: Option<Mount>,
    pub near: f64,
    pub far: f64,
}

/// Camera-to-world pose at `eye` looking at `target`, with world `+z` up.
pub fn look_at(eye: Vec3, target: Vec3) -> Pose {
    let z = (target - eye).normalize();
    let up = if z.cross(&Vec3::z()).norm() < 1e-9 { Vec3::y() } else { Vec3::z() };
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    let r = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    Pose::from_parts(eye, UnitQuaternion::from_rotation_matrix(&r))
}

impl CameraConfig {
    pub fn new(name: impl Into<String>, width: usize, height: usize, intrinsics: Intrinsics, world_to_camera: Pose) -> Self {
        Self {
            name: name.into(),
            width,
            height,
            intrinsics: vec![intrinsics],
            extrinsic: PoseBatch::single(world_to_camera),
            mount: None,
            near: 0.01,
            far: 100.0,
        }
    }

    /// Camera at `eye` looking at `target` with vertical field of view
    /// `fov_y` (radians) and the principal point at the image centre.
    pub fn looking_at(name: impl Into<String>, width: usize, height: usize, fov_y: f64, eye: Vec3, target: Vec3) -> Self {
        let f = height as f64 / 2.0 / (fov_y / 2.0).tan();
        let k = Intrinsics { fx: f, fy: f, cx: width as f64 / 2.0, cy: height as f64 / 2.0 };
        Self::new(name, width, height, k, look_at(eye, target).inverse())
    }

    pub fn mounted(mut self, link: impl Into<String>, offset: Pose) -> Self {
        self.mount = Some(Mount { link: link.into(), offset });
        self
    }

    pub fn validate(&self, num_envs: usize) -> Result<(), RenderError> {
        let err = |m: &str| Err(RenderError::Camera { name: self.name.clone(), message: m.into() });
        if self.width == 0 || self.height == 0 {
            return err("width and height must be at least 1");
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return err("need 0 < near < far");
        }
        if self.intrinsics.is_empty() || (self.intrinsics.len() != 1 && self.intrinsics.len() != num_envs) {
            return err("intrinsics must have 1 or N entries");
        }
        if self.extrinsic.len() != 1 && self.extrinsic.len() != num_envs {
            return err("extrinsic must have 1 or N poses");
        }
        Ok(())
    }

    pub fn intrinsics_for(&self, env: usize) -> Intrinsics {
        self.intrinsics[if self.intrinsics.len() == 1 { 0 } else { env }]
    }

    /// World-to-camera transform in every env, following the mount link
    /// where the env has it.
    pub fn world_to_camera(&self, scene: &SceneBatch) -> Result<Vec<Pose>, RenderError> {
        let mut out: Vec<Pose> = (0..scene.num_envs()).map(|e| *self.extrinsic.get(e)).collect();
        if let Some(m) = &self.mount {
            let link = scene.link(&m.link)?.pose(scene);
            for (env, pose) in link.valid() {
                out[env] = pose.compose(&m.offset).inverse();
            }
        }
        Ok(out)
    }
}

/// Camera count and resolution, written `CxWxH` (or `none`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CameraSetup {
    pub count: usize,
    pub width: usize,
    pub height: usize,
}

impl CameraSetup {
    pub const NONE: CameraSetup = CameraSetup { count: 0, width: 0, height: 0 };

    pub fn is_none(&self) -> bool {
        self.count == 0
    }
}

impl FromStr for CameraSetup {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "none" {
            return Ok(Self::NONE);
        }
        let parts: Vec<usize> = s
            .split(['x', 'X', '×'])
            .map(|p| p.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| RenderError::Setup(s.into()))?;
        match parts[..] {
            [count, width, height] if count > 0 && width > 0 && height > 0 => Ok(Self { count, width, height }),
            _ => Err(RenderError::Setup(s.into())),
        }
    }
}

impl fmt::Display for CameraSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_none() {
            write!(f, "none")
        } else {
            write!(f, "{}x{}x{}", self.count, self.width, self.height)
        }
    }
}

/// Per-env perturbation ranges; every quantity is drawn uniformly in
/// `[-range, range]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CameraJitter {
    /// Metres, per camera-frame axis.
    pub position: f64,
    /// Radians, per axis-angle component.
    pub rotation: f64,
    /// Relative change of the focal lengths.
    pub focal: f64,
    /// Pixels.
    pub principal: f64,
}

/// Independent per-env copies of `camera` with jittered pose and
/// intrinsics, drawn from each env's RNG stream.
pub fn randomize_cameras(camera: &CameraConfig, scene: &mut SceneBatch, jitter: &CameraJitter) -> Result<CameraConfig, RenderError> {
    let n = scene.num_envs();
    camera.validate(n)?;
    let finite = [jitter.position, jitter.rotation, jitter.focal, jitter.principal];
    if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(RenderError::Camera { name: camera.name.clone(), message: "jitter ranges must be finite and non-negative".into() });
    }
    let mut extrinsic = Vec::with_capacity(n);
    let mut intrinsics = Vec::with_capacity(n);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, r: f64| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
    for env in 0..n {
        let rng = scene.rng(env);
        let mut v = [0.0; 8];
        for (i, r) in [jitter.position, jitter.position, jitter.position, jitter.rotation, jitter.rotation, jitter.rotation, jitter.focal, jitter.principal]
            .into_iter()
            .enumerate()
        {
            v[i] = draw(rng, r);
        }
        let cu = draw(rng, jitter.principal);
        let delta = Pose::from_axis_angle(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]));
        // perturb the camera in its own frame: cam_to_world ∘ delta
        extrinsic.push(delta.inverse().compose(camera.extrinsic.get(env)));
        let k = camera.intrinsics_for(env);
        intrinsics.push(Intrinsics { fx: k.fx * (1.0 + v[6]), fy: k.fy * (1.0 + v[6]), cx: k.cx + cu, cy: k.cy + v[7] });
    }
    Ok(CameraConfig { extrinsic: PoseBatch::new(extrinsic).expect("finite poses"), intrinsics, ..camera.clone() })
}
