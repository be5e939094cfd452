//! Projected Gauss-Seidel over contact impulses.

use super::aba::AbaFactor;
use super::contacts::{Body, Contact};
use super::ContactConfig;
use crate::kinematics::point_jacobian;
use crate::pose::Vec3;
use crate::scene::{ArticulationSlot, BodyKind, EnvRows, Layout};
use nalgebra::Matrix3;

const BLOCK_ITERS: usize = 24;

/// How one body's velocity responds to an impulse along a row.
enum Response {
    Fixed,
    Actor { k: usize, lin: Vec3, ang: Vec3, dlin: Vec3, dang: Vec3 },
    Link { dof_offset: usize, j: Vec<f64>, mj: Vec<f64> },
}

impl Response {
    fn velocity(&self, rows: &EnvRows) -> f64 {
        match self {
            Response::Fixed => 0.0,
            Response::Actor { k, lin, ang, .. } => lin.dot(&rows.actor_linvel[*k]) + ang.dot(&rows.actor_angvel[*k]),
            Response::Link { dof_offset, j, .. } => j.iter().zip(&rows.qvel[*dof_offset..]).map(|(a, b)| a * b).sum(),
        }
    }

    fn apply(&self, rows: &mut EnvRows, impulse: f64) {
        match self {
            Response::Fixed => {}
            Response::Actor { k, dlin, dang, .. } => {
                rows.actor_linvel[*k] += dlin * impulse;
                rows.actor_angvel[*k] += dang * impulse;
            }
            Response::Link { dof_offset, mj, .. } => {
                for (v, m) in rows.qvel[*dof_offset..].iter_mut().zip(mj) {
                    *v += m * impulse;
                }
            }
        }
    }

    /// Velocity change along this row per unit impulse along `other`.
    fn coupling(&self, other: &Response) -> f64 {
        match (self, other) {
            (Response::Actor { lin, ang, .. }, Response::Actor { dlin, dang, .. }) => lin.dot(dlin) + ang.dot(dang),
            (Response::Link { j, .. }, Response::Link { mj, .. }) => j.iter().zip(mj).map(|(a, b)| a * b).sum(),
            _ => 0.0,
        }
    }

    fn effective(&self) -> f64 {
        match self {
            Response::Fixed => 0.0,
            Response::Actor { lin, ang, dlin, dang, .. } => lin.dot(dlin) + ang.dot(dang),
            Response::Link { j, mj, .. } => j.iter().zip(mj).map(|(a, b)| a * b).sum(),
        }
    }
}

struct Row {
    a: Response,
    b: Response,
    inv_k: f64,
    lambda: f64,
    /// Minimum relative velocity for normal rows, with and without Baumgarte bias.
    target: f64,
    target_no_bias: f64,
    /// Index of the normal row bounding a friction row.
    normal: Option<usize>,
}

pub(crate) struct SolverContext<'a> {
    pub layout: &'a Layout,
    pub env: usize,
    pub factors: &'a [AbaFactor],
    /// Per-actor world inverse inertia.
    pub actor_inv_inertia: &'a [Matrix3<f64>],
}

fn tangents(n: &Vec3) -> (Vec3, Vec3) {
    let t1 = if n.x.abs() < 0.9 { n.cross(&Vec3::x()) } else { n.cross(&Vec3::y()) }.normalize();
    (t1, n.cross(&t1))
}

fn response(ctx: &SolverContext, rows: &EnvRows, body: Body, point: &Vec3, dir: Vec3) -> Response {
    match body {
        Body::Ground => Response::Fixed,
        Body::Actor(k) => {
            let desc = ctx.layout.actor(ctx.env, k);
            let r = point - rows.actor_pose[k].translation;
            let ang = r.cross(&dir);
            if desc.kind == BodyKind::Dynamic {
                Response::Actor { k, lin: dir, ang, dlin: dir / desc.mass, dang: ctx.actor_inv_inertia[k] * ang }
            } else {
                Response::Actor { k, lin: dir, ang, dlin: Vec3::zeros(), dang: Vec3::zeros() }
            }
        }
        Body::Link(ls) => {
            let (ai, li) = ctx.layout.link_owner[ctx.env][ls];
            let slot: &ArticulationSlot = &ctx.layout.articulations[ctx.env][ai];
            let m = &slot.model;
            if !m.link_is_dynamic(li) {
                return Response::Fixed;
            }
            let jac = point_jacobian(m, &rows.link_pose[slot.links()], li, point).expect("link in range");
            let j: Vec<f64> = (0..m.dof()).map(|d| dir.dot(&jac.fixed_view::<3, 1>(0, d).into_owned())).collect();
            let zeros = vec![0.0; m.dof()];
            let mut mj = vec![0.0; m.dof()];
            ctx.factors[ai].solve(m, &zeros, &j, None, false, &mut mj);
            Response::Link { dof_offset: slot.dof_offset, j, mj }
        }
    }
}

/// Resolves `contacts` by adjusting velocities in `rows`.
pub(crate) fn solve(
    ctx: &SolverContext,
    rows: &mut EnvRows,
    contacts: &[Contact],
    cfg: &ContactConfig,
    dt: f64,
    pos_iters: usize,
    vel_iters: usize,
) {
    if contacts.is_empty() {
        return;
    }
    let mut sys: Vec<Row> = Vec::with_capacity(contacts.len() * 3);
    for c in contacts {
        let (t1, t2) = tangents(&c.normal);
        let normal_index = sys.len();
        for (i, dir) in [c.normal, t1, t2].into_iter().enumerate() {
            let a = response(ctx, rows, c.a, &c.point, dir);
            let b = response(ctx, rows, c.b, &c.point, -dir);
            let k = a.effective() + b.effective();
            let inv_k = if k > 1e-12 { 1.0 / k } else { 0.0 };
            let (target, target_no_bias) = if i == 0 {
                let speculative = if c.depth < 0.0 { c.depth / dt } else { 0.0 };
                let bias = cfg.baumgarte_beta * (c.depth - cfg.penetration_slop).max(0.0) / dt;
                let vn = a.velocity(rows) + b.velocity(rows);
                let bounce = if vn < 0.0 { -cfg.restitution * vn } else { 0.0 };
                (speculative.max(bias).max(bounce), speculative.max(bounce))
            } else {
                (0.0, 0.0)
            };
            sys.push(Row { a, b, inv_k, lambda: 0.0, target, target_no_bias, normal: (i > 0).then_some(normal_index) });
        }
    }
    // contacts sharing a body pair form one block, solved to convergence on
    // its dense Delassus matrix inside every outer sweep
    let mut groups: Vec<((Body, Body), Vec<usize>)> = Vec::new();
    for (ci, c) in contacts.iter().enumerate() {
        let rows3 = [3 * ci, 3 * ci + 1, 3 * ci + 2];
        match groups.iter_mut().find(|(k, _)| *k == (c.a, c.b)) {
            Some((_, g)) => g.extend(rows3),
            None => groups.push(((c.a, c.b), rows3.to_vec())),
        }
    }
    let blocks: Vec<Vec<f64>> = groups
        .iter()
        .map(|(_, g)| {
            let mut k = vec![0.0; g.len() * g.len()];
            for (x, &i) in g.iter().enumerate() {
                for (y, &j) in g.iter().enumerate() {
                    k[x * g.len() + y] = sys[i].a.coupling(&sys[j].a) + sys[i].b.coupling(&sys[j].b);
                }
            }
            k
        })
        .collect();
    let sweep = |sys: &mut Vec<Row>, rows: &mut EnvRows, biased: bool| {
        for ((_, g), k) in groups.iter().zip(&blocks) {
            let m = g.len();
            let start: Vec<f64> = g.iter().map(|&r| sys[r].lambda).collect();
            let mut v: Vec<f64> = g.iter().map(|&r| sys[r].a.velocity(rows) + sys[r].b.velocity(rows)).collect();
            for _ in 0..BLOCK_ITERS {
                for x in 0..m {
                    let r = g[x];
                    if sys[r].inv_k == 0.0 {
                        continue;
                    }
                    let (lo, hi, target) = match sys[r].normal {
                        None => (0.0, f64::INFINITY, if biased { sys[r].target } else { sys[r].target_no_bias }),
                        Some(n) => {
                            let limit = cfg.friction_coeff * sys[n].lambda;
                            (-limit, limit, 0.0)
                        }
                    };
                    let old = sys[r].lambda;
                    let new = (old + (target - v[x]) * sys[r].inv_k).clamp(lo, hi);
                    let delta = new - old;
                    if delta != 0.0 {
                        sys[r].lambda = new;
                        for y in 0..m {
                            v[y] += k[y * m + x] * delta;
                        }
                    }
                }
            }
            for (x, &r) in g.iter().enumerate() {
                let delta = sys[r].lambda - start[x];
                if delta != 0.0 {
                    sys[r].a.apply(rows, delta);
                    sys[r].b.apply(rows, delta);
                }
            }
        }
    };
    for _ in 0..pos_iters {
        sweep(&mut sys, rows, true);
    }
    for _ in 0..vel_iters {
        sweep(&mut sys, rows, false);
    }
}
