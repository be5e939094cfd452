use super::{fixtures, servo, task_of, Overrides, Policy, TaskError};
use crate::assets::Shape;
use crate::controllers::{ControlMode, ControllerConfig};
use crate::dynamics::SimConfig;
use crate::envs::{Evaluation, Obs, Task, TaskBuild, VecEnv};
use crate::pose::{Pose, Vec3};
use crate::scene::{ActorDesc, ArticulationDesc, BodyKind, EnvDescriptor, SceneBatch, TemplateLibrary};
use nalgebra::Vector2;
use rand::Rng;
use std::collections::BTreeMap;

pub const NUM_DOTS: usize = 512;
pub const DOT_RADIUS: f64 = 0.004;
pub const DOT_HEIGHT: f64 = 0.001;
/// Pen tip height at or below which ink is laid.
pub const INK_HEIGHT: f64 = 0.001;
/// Spacing of the outline sample points.
const SAMPLE_STEP: f64 = 0.005;
const HIDDEN_Z: f64 = -0.05;

/// Draw a square outline on the floor with a pen gantry. Ink dots are 512
/// thin cylinders built hidden below the floor; each step with the pen tip
/// down, the next one is pose-set under the tip. No bodies are ever added
/// or removed.
///
/// State obs (11): `tip[3]`, `tip_vel[3]`, `square_centre[2]`,
/// `square_half_size`, `coverage`, `ink_used`.
pub struct TableDraw {
    pub time_limit: usize,
    /// Outline points within this distance of a dot count as covered.
    pub tolerance: f64,
    pub coverage_goal: f64,
    pub centre: Vec<Vector2<f64>>,
    pub half: Vec<f64>,
    pub revealed: Vec<usize>,
    samples: Vec<Vec<Vector2<f64>>>,
    covered: Vec<Vec<bool>>,
}

pub(super) fn build(n: usize, o: &Overrides) -> Result<(Box<dyn Task>, TaskBuild), TaskError> {
    let mut gantry = ArticulationDesc::new("gantry", "gantry");
    gantry.gravity_compensation = true;
    gantry.collisions = false;
    gantry.init_qpos = Some(vec![0.0, 0.0, 0.05]);
    let dots = (0..NUM_DOTS)
        .map(|i| {
            let mut a = ActorDesc::dynamic(
                format!("dot{i}"),
                Shape::Cylinder { radius: DOT_RADIUS, half_length: DOT_HEIGHT / 2.0 },
                0.001,
                Pose::from_translation(Vec3::new(0.0, 0.0, HIDDEN_Z)),
            );
            a.kind = BodyKind::Static;
            a.collision = false;
            a.color = [0.1, 0.15, 0.6, 1.0];
            a
        })
        .collect();
    let env = EnvDescriptor { articulations: vec![gantry], actors: dots, ground: true };
    let preset = match o.mode(ControlMode::PdJointDeltaPos) {
        m @ (ControlMode::PdJointPos | ControlMode::PdJointDeltaPos) => ControllerConfig::new(m, "gantry").with_scale(0.02).with_gains(1000.0, 30.0),
        m => return Err(TaskError::Overrides(format!("TableDraw does not support {}", m.name()))),
    };
    let task = TableDraw {
        time_limit: o.time_limit(200),
        tolerance: o.tolerance(0.01),
        coverage_goal: 0.9,
        centre: vec![Vector2::zeros(); n],
        half: vec![0.0; n],
        revealed: vec![0; n],
        samples: vec![Vec::new(); n],
        covered: vec![Vec::new(); n],
    };
    let sim = SimConfig { solver_pos_iters: 1, solver_vel_iters: 0, ..SimConfig::default() };
    let build = TaskBuild {
        library: TemplateLibrary::from([("gantry".to_string(), fixtures::gantry(0.3, 0.3)?)]),
        descriptors: vec![env; n],
        agents: BTreeMap::from([("robot".to_string(), o.controller(preset))]),
        sim: o.sim(sim),
        cameras: o.cameras("1x128x128", Vec3::new(0.0, -0.45, 0.55), Vec3::zeros())?,
    };
    Ok((Box::new(task), build))
}

/// Corners of the square, counter-clockwise from the lower left.
pub fn square_corners(centre: Vector2<f64>, half: f64) -> [Vector2<f64>; 4] {
    [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].map(|(sx, sy)| centre + Vector2::new(sx * half, sy * half))
}

fn outline_samples(centre: Vector2<f64>, half: f64) -> Vec<Vector2<f64>> {
    let c = square_corners(centre, half);
    let per_side = ((2.0 * half) / SAMPLE_STEP).ceil() as usize;
    (0..4)
        .flat_map(|s| {
            let (a, b) = (c[s], c[(s + 1) % 4]);
            (0..per_side).map(move |k| a + (b - a) * (k as f64 / per_side as f64))
        })
        .collect()
}

impl TableDraw {
    pub fn tip(scene: &SceneBatch, env: usize) -> Vec3 {
        let q = scene.env_qpos(env);
        Vec3::new(q[0], q[1], q[2])
    }

    pub fn coverage(&self, env: usize) -> f64 {
        let c = &self.covered[env];
        c.iter().filter(|v| **v).count() as f64 / c.len().max(1) as f64
    }
}

impl Task for TableDraw {
    fn name(&self) -> &str {
        "TableDraw"
    }

    fn time_limit(&self) -> usize {
        self.time_limit
    }

    fn obs_names(&self) -> Vec<String> {
        ["tip_x", "tip_y", "tip_z", "tip_vx", "tip_vy", "tip_vz", "centre_x", "centre_y", "half_size", "coverage", "ink_used"]
            .map(String::from)
            .to_vec()
    }

    fn reset_env(&mut self, scene: &mut SceneBatch, env: usize) {
        let rng = scene.rng(env);
        let centre = Vector2::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
        let half = rng.gen_range(0.06..0.1);
        self.centre[env] = centre;
        self.half[env] = half;
        self.revealed[env] = 0;
        self.samples[env] = outline_samples(centre, half);
        self.covered[env] = vec![false; self.samples[env].len()];
    }

    fn observe(&self, scene: &SceneBatch, env: usize, out: &mut [f64]) {
        let (q, v) = (scene.env_qpos(env), scene.env_qvel(env));
        let c = self.centre[env];
        out.copy_from_slice(&[
            q[0],
            q[1],
            q[2],
            v[0],
            v[1],
            v[2],
            c.x,
            c.y,
            self.half[env],
            self.coverage(env),
            self.revealed[env] as f64 / NUM_DOTS as f64,
        ]);
    }

    fn post_step(&mut self, scene: &mut SceneBatch, env: usize) -> Evaluation {
        let tip = Self::tip(scene, env);
        if tip.z <= INK_HEIGHT && self.revealed[env] < NUM_DOTS {
            let slot = self.revealed[env];
            scene
                .set_actor_pose(env, slot, Pose::from_translation(Vec3::new(tip.x, tip.y, DOT_HEIGHT / 2.0)))
                .expect("dot slot");
            self.revealed[env] += 1;
            let p = tip.xy();
            for (s, c) in self.samples[env].iter().zip(self.covered[env].iter_mut()) {
                if (s - p).norm() <= self.tolerance {
                    *c = true;
                }
            }
        }
        let success = self.coverage(env) >= self.coverage_goal;
        Evaluation { success, fail: false, reward: if success { 1.0 } else { 0.0 } }
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Scripted pen: lower onto the first corner, then trace the four sides.
#[derive(Debug, Clone, Default)]
pub struct ScriptedDraw {
    waypoint: Vec<usize>,
}

impl Policy for ScriptedDraw {
    fn act(&mut self, env: &VecEnv, _obs: &Obs) -> Vec<f64> {
        let task = task_of::<TableDraw>(env).expect("ScriptedDraw needs TableDraw");
        let cfg = &env.agents[0].controller.cfg;
        self.waypoint.resize(env.num_envs(), 0);
        let mut out = Vec::with_capacity(3 * env.num_envs());
        for e in 0..env.num_envs() {
            if env.elapsed(e) == 0 {
                self.waypoint[e] = 0;
            }
            let c = square_corners(task.centre[e], task.half[e]);
            let mut path: Vec<Vec3> = vec![Vec3::new(c[0].x, c[0].y, 0.01)];
            path.extend([0, 1, 2, 3, 0].map(|i| Vec3::new(c[i].x, c[i].y, 0.0)));
            let tip = TableDraw::tip(&env.scene, e);
            let k = &mut self.waypoint[e];
            while *k + 1 < path.len() && (path[*k] - tip).norm() < 0.004 {
                *k += 1;
            }
            let target = path[*k];
            let target = if *k >= 2 { Vec3::new(target.x, target.y, -0.01) } else { target };
            match cfg.mode {
                ControlMode::PdJointPos => {
                    let m = &env.scene.layout().articulations[e][0].model;
                    out.extend((0..3).map(|d| (2.0 * (target[d] - m.lower[d]) / (m.upper[d] - m.lower[d]) - 1.0).clamp(-1.0, 1.0)));
                }
                _ => out.extend((0..3).map(|d| servo(target[d], tip[d], cfg.action_scale))),
            }
        }
        out
    }
}
