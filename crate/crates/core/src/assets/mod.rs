//! Articulation templates and the URDF / MJCF subsets that produce them.
//!
//! Templates are stored in topological order: link 0 is the root and every
//! joint `i` connects `links[joints[i].parent_link]` to `links[i + 1]`, with
//! `parent_link < i + 1`. Each non-fixed joint contributes one degree of
//! freedom; DOF indices follow joint order.

mod builder;
mod inertia;
mod mjcf;
mod urdf;

pub use builder::{revolute_chain, TemplateBuilder};
pub use inertia::{combine_inertias, shape_inertia};
pub use mjcf::load_mjcf;
pub use urdf::load_urdf;

use crate::pose::{Pose, Vec3};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssetError {
    #[error("XML parse error at line {line}, column {column}: {message}")]
    Parse { line: u32, column: u32, message: String },
    #[error("schema error in <{element}> (line {line}): {message}")]
    Schema {
        element: String,
        line: u32,
        message: String,
    },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("invalid template: {0}")]
    Invalid(String),
}

impl AssetError {
    pub(crate) fn schema(node: &roxmltree::Node, message: impl Into<String>) -> Self {
        let pos = node.document().text_pos_at(node.range().start);
        AssetError::Schema {
            element: node.tag_name().name().to_string(),
            line: pos.row,
            message: message.into(),
        }
    }

    pub(crate) fn from_xml(e: roxmltree::Error) -> Self {
        let pos = e.pos();
        AssetError::Parse {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    }
}

/// Parsed value plus the list of unsupported constructs that were skipped.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    /// Axis along local z; `half_length` excludes the end caps.
    Capsule { radius: f64, half_length: f64 },
    /// Axis along local z.
    Cylinder { radius: f64, half_length: f64 },
}

impl Shape {
    pub fn is_valid(&self) -> bool {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            Shape::Sphere { radius } => pos(radius),
            Shape::Box { half_extents } => half_extents.iter().all(|v| pos(*v)),
            Shape::Capsule { radius, half_length } | Shape::Cylinder { radius, half_length } => {
                pos(radius) && pos(half_length)
            }
        }
    }

    pub fn volume(&self) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Shape::Sphere { radius } => 4.0 / 3.0 * PI * radius.powi(3),
            Shape::Box { half_extents: h } => 8.0 * h[0] * h[1] * h[2],
            Shape::Capsule { radius, half_length } => {
                PI * radius * radius * 2.0 * half_length + 4.0 / 3.0 * PI * radius.powi(3)
            }
            Shape::Cylinder { radius, half_length } => PI * radius * radius * 2.0 * half_length,
        }
    }

    /// Radius of a sphere centred at the shape origin that bounds the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Box { half_extents: h } => (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt(),
            Shape::Capsule { radius, half_length } => radius + half_length,
            Shape::Cylinder { radius, half_length } => (radius * radius + half_length * half_length).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionShape {
    pub shape: Shape,
    pub origin: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    pub mass: f64,
    /// Rotational inertia about the centre of mass, in the inertial frame.
    pub inertia: Matrix3<f64>,
    pub inertial_origin: Pose,
    pub collision_shapes: Vec<CollisionShape>,
    pub visual_color: [f64; 4],
}

impl LinkSpec {
    pub fn massless(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            mass: 0.0,
            inertia: Matrix3::zeros(),
            inertial_origin: Pose::identity(),
            collision_shapes: Vec::new(),
            visual_color: DEFAULT_COLOR,
        }
    }

    /// Inertia about the centre of mass expressed in link-frame axes.
    pub fn inertia_in_link_frame(&self) -> Matrix3<f64> {
        let r = self.inertial_origin.rotation_matrix();
        r * self.inertia * r.transpose()
    }
}

pub const DEFAULT_COLOR: [f64; 4] = [0.7, 0.7, 0.7, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointType {
    Revolute,
    Prismatic,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub joint_type: JointType,
    pub axis: Vec3,
    /// Pose of the joint frame in the parent link frame. At zero
    /// displacement the child link frame coincides with the joint frame.
    pub origin: Pose,
    #[serde(with = "extended_f64")]
    pub lower: f64,
    #[serde(with = "extended_f64")]
    pub upper: f64,
    pub damping: f64,
    pub parent_link: usize,
    pub child_link: usize,
}

impl JointSpec {
    pub fn is_dof(&self) -> bool {
        self.joint_type != JointType::Fixed
    }

    /// Transform from the joint frame to the child link frame at displacement `q`.
    pub fn motion(&self, q: f64) -> Pose {
        match self.joint_type {
            JointType::Revolute => Pose::from_axis_angle(Vec3::zeros(), self.axis * q),
            JointType::Prismatic => Pose::from_translation(self.axis * q),
            JointType::Fixed => Pose::identity(),
        }
    }

    /// Parent link frame to child link frame.
    pub fn transform(&self, q: f64) -> Pose {
        match self.joint_type {
            JointType::Fixed => self.origin,
            _ => self.origin.compose(&self.motion(q)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticulationTemplate {
    pub name: String,
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
    pub root_link_index: usize,
}

impl ArticulationTemplate {
    pub fn dof(&self) -> usize {
        self.joints.iter().filter(|j| j.is_dof()).count()
    }

    /// DOF index of each joint (`None` for fixed joints).
    pub fn joint_dof_indices(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.joints
            .iter()
            .map(|j| {
                j.is_dof().then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }

    /// Joint index of each DOF.
    pub fn dof_joints(&self) -> Vec<usize> {
        self.joints
            .iter()
            .enumerate()
            .filter(|(_, j)| j.is_dof())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Parent joint of each link (`None` for the root).
    pub fn parent_joint(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.links.len()];
        for (j, joint) in self.joints.iter().enumerate() {
            out[joint.child_link] = Some(j);
        }
        out
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        self.joints.iter().filter(|j| j.is_dof()).map(|j| j.lower).collect()
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        self.joints.iter().filter(|j| j.is_dof()).map(|j| j.upper).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Checks the structural and physical invariants every template must hold.
    pub fn validate(&self) -> Result<(), AssetError> {
        let inv = |m: String| Err(AssetError::Invalid(format!("{}: {m}", self.name)));
        if self.links.is_empty() {
            return inv("no links".into());
        }
        if self.root_link_index != 0 {
            return inv("root link must be first".into());
        }
        if self.joints.len() + 1 != self.links.len() {
            return inv(format!(
                "{} links need {} joints, found {}",
                self.links.len(),
                self.links.len() - 1,
                self.joints.len()
            ));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if j.child_link != i + 1 || j.parent_link >= j.child_link {
                return inv(format!("joint {} breaks topological order", j.name));
            }
            if (j.axis.norm() - 1.0).abs() > 1e-9 && j.is_dof() {
                return inv(format!("joint {} axis is not unit length", j.name));
            }
            if j.lower.is_nan() || j.upper.is_nan() || j.lower > j.upper {
                return inv(format!("joint {} has lower > upper", j.name));
            }
            if !(j.damping >= 0.0) {
                return inv(format!("joint {} has negative damping", j.name));
            }
        }
        for l in &self.links {
            if !(l.mass >= 0.0) || !l.mass.is_finite() {
                return inv(format!("link {} has invalid mass", l.name));
            }
            if (l.inertia - l.inertia.transpose()).amax() > 1e-9 {
                return inv(format!("link {} inertia not symmetric", l.name));
            }
            if l.mass > 0.0 {
                let eig = l.inertia.symmetric_eigenvalues();
                if eig.iter().any(|e| *e < -1e-12) {
                    return inv(format!("link {} inertia not positive semidefinite", l.name));
                }
            }
            if let Some(s) = l.collision_shapes.iter().find(|s| !s.shape.is_valid()) {
                return inv(format!("link {} has degenerate shape {:?}", l.name, s.shape));
            }
        }
        // every moving joint must carry mass, otherwise the joint-space inertia is singular
        let mut subtree_mass: Vec<f64> = self.links.iter().map(|l| l.mass).collect();
        for j in self.joints.iter().rev() {
            subtree_mass[j.parent_link] += subtree_mass[j.child_link];
        }
        for j in &self.joints {
            if j.is_dof() && subtree_mass[j.child_link] <= 0.0 {
                return inv(format!("joint {} moves no mass", j.name));
            }
        }
        Ok(())
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("template serialization is infallible")
    }

    pub fn from_canonical_json(text: &str) -> Result<Self, AssetError> {
        let t: Self = serde_json::from_str(text).map_err(|e| AssetError::Parse {
            line: e.line() as u32,
            column: e.column() as u32,
            message: e.to_string(),
        })?;
        t.validate()?;
        Ok(t)
    }
}

/// Raw link/joint lists in arbitrary declaration order, reordered into a
/// template by [`assemble`].
pub(crate) struct RawJoint {
    pub spec: JointSpec,
    pub parent: String,
    pub child: String,
}

/// Orders links depth-first from the unique root and rewires joint indices.
pub(crate) fn assemble(
    name: String,
    links: Vec<LinkSpec>,
    joints: Vec<RawJoint>,
) -> Result<ArticulationTemplate, AssetError> {
    use std::collections::HashMap;
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, l) in links.iter().enumerate() {
        if index.insert(l.name.as_str(), i).is_some() {
            return Err(AssetError::Invalid(format!("duplicate link name {}", l.name)));
        }
    }
    let mut parent_of: Vec<Option<usize>> = vec![None; links.len()];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
    let mut ends = Vec::with_capacity(joints.len());
    for (j, rj) in joints.iter().enumerate() {
        let p = index[rj.parent.as_str()];
        let c = index[rj.child.as_str()];
        ends.push((p, c));
        if p == c {
            return Err(AssetError::Topology(format!("joint {} connects link {} to itself", rj.spec.name, rj.child)));
        }
        if parent_of[c].is_some() {
            return Err(AssetError::Topology(format!(
                "link {} has more than one parent joint (kinematic loop)",
                rj.child
            )));
        }
        parent_of[c] = Some(j);
        children[p].push(j);
    }
    let roots: Vec<usize> = (0..links.len()).filter(|i| parent_of[*i].is_none()).collect();
    let root = match roots.as_slice() {
        [r] => *r,
        [] => return Err(AssetError::Topology("no root link (kinematic loop)".into())),
        many => {
            return Err(AssetError::Topology(format!(
                "{} root links: {}",
                many.len(),
                many.iter().map(|i| links[*i].name.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    };
    // depth-first preorder, siblings in declaration order
    let mut order = Vec::with_capacity(links.len());
    let mut stack = vec![root];
    while let Some(l) = stack.pop() {
        order.push(l);
        for j in children[l].iter().rev() {
            stack.push(ends[*j].1);
        }
    }
    if order.len() != links.len() {
        return Err(AssetError::Topology("links unreachable from root (kinematic loop)".into()));
    }
    let mut new_index = vec![0; links.len()];
    for (new, old) in order.iter().enumerate() {
        new_index[*old] = new;
    }
    let mut slots: Vec<Option<LinkSpec>> = links.into_iter().map(Some).collect();
    let ordered_links: Vec<LinkSpec> = order.iter().map(|o| slots[*o].take().unwrap()).collect();
    let mut joint_slots: Vec<Option<JointSpec>> = vec![None; ordered_links.len().saturating_sub(1)];
    for (rj, (p, c)) in joints.into_iter().zip(ends) {
        let mut spec = rj.spec;
        spec.parent_link = new_index[p];
        spec.child_link = new_index[c];
        let slot = spec.child_link - 1;
        joint_slots[slot] = Some(spec);
    }
    let t = ArticulationTemplate {
        name,
        links: ordered_links,
        joints: joint_slots.into_iter().map(|j| j.unwrap()).collect(),
        root_link_index: 0,
    };
    t.validate()?;
    Ok(t)
}

/// Serializes `f64` with the infinities written as strings, since JSON has
/// no representation for them.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            Repr::Text(if *v > 0.0 { "inf".into() } else { "-inf".into() }).serialize(s)
        } else {
            Repr::Num(*v).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("bad number {other}"))),
            },
        }
    }
}
