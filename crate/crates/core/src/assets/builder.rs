//! Programmatic construction of articulation templates.

use super::{assemble, shape_inertia, ArticulationTemplate, AssetError, CollisionShape, JointSpec, JointType, LinkSpec, RawJoint, Shape};
use crate::pose::{Pose, Vec3};

impl LinkSpec {
    /// Uniform-density link whose single collision shape sits at `origin`.
    pub fn solid(name: impl Into<String>, shape: Shape, mass: f64, origin: Pose) -> Self {
        Self {
            name: name.into(),
            mass,
            inertia: shape_inertia(&shape, mass),
            inertial_origin: origin,
            collision_shapes: vec![CollisionShape { shape, origin }],
            visual_color: super::DEFAULT_COLOR,
        }
    }

    pub fn with_color(mut self, rgba: [f64; 4]) -> Self {
        self.visual_color = rgba;
        self
    }
}

impl JointSpec {
    fn new(name: impl Into<String>, joint_type: JointType, axis: Vec3, origin: Pose) -> Self {
        Self {
            name: name.into(),
            joint_type,
            axis: axis.normalize(),
            origin,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            damping: 0.0,
            parent_link: 0,
            child_link: 0,
        }
    }

    pub fn revolute(name: impl Into<String>, axis: Vec3, origin: Pose) -> Self {
        Self::new(name, JointType::Revolute, axis, origin)
    }

    pub fn prismatic(name: impl Into<String>, axis: Vec3, origin: Pose) -> Self {
        Self::new(name, JointType::Prismatic, axis, origin)
    }

    pub fn fixed(name: impl Into<String>, origin: Pose) -> Self {
        let mut j = Self::new(name, JointType::Fixed, Vec3::x(), origin);
        j.lower = 0.0;
        j.upper = 0.0;
        j
    }

    pub fn limits(mut self, lower: f64, upper: f64) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }
}

/// Builds a template from a root link and `(parent name, joint, child)` edges.
pub struct TemplateBuilder {
    name: String,
    links: Vec<LinkSpec>,
    joints: Vec<RawJoint>,
}

impl TemplateBuilder {
    pub fn new(name: impl Into<String>, root: LinkSpec) -> Self {
        Self { name: name.into(), links: vec![root], joints: Vec::new() }
    }

    pub fn attach(mut self, parent: &str, joint: JointSpec, child: LinkSpec) -> Self {
        self.joints.push(RawJoint { spec: joint, parent: parent.into(), child: child.name.clone() });
        self.links.push(child);
        self
    }

    pub fn build(self) -> Result<ArticulationTemplate, AssetError> {
        for j in &self.joints {
            if !self.links.iter().any(|l| l.name == j.parent) {
                return Err(AssetError::Invalid(format!("joint {} references unknown link {}", j.spec.name, j.parent)));
            }
        }
        assemble(self.name, self.links, self.joints)
    }
}

/// Serial chain of `dof` revolute joints about alternating z / y axes, links
/// are capsules of length `link_length` along x. Joints are named
/// `joint{i}`, links `base`, `link{i}`.
pub fn revolute_chain(name: &str, dof: usize, link_length: f64, link_mass: f64) -> Result<ArticulationTemplate, AssetError> {
    let mut b = TemplateBuilder::new(name, LinkSpec::massless("base"));
    let half = link_length / 2.0;
    let capsule_along_x = Pose::from_axis_angle(Vec3::new(half, 0.0, 0.0), Vec3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0));
    for i in 0..dof {
        let parent = if i == 0 { "base".to_string() } else { format!("link{}", i - 1) };
        let origin = if i == 0 { Pose::identity() } else { Pose::from_translation(Vec3::new(link_length, 0.0, 0.0)) };
        let axis = if i % 2 == 0 { Vec3::z() } else { Vec3::y() };
        let link = LinkSpec::solid(
            format!("link{i}"),
            Shape::Capsule { radius: 0.03, half_length: (half - 0.03).max(0.01) },
            link_mass,
            capsule_along_x,
        );
        b = b.attach(&parent, JointSpec::revolute(format!("joint{i}"), axis, origin).limits(-3.0, 3.0), link);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_has_requested_dof() {
        for d in 1..=6 {
            let t = revolute_chain("c", d, 0.3, 1.0).unwrap();
            assert_eq!(t.dof(), d);
            assert_eq!(t.links.len(), d + 1);
            t.validate().unwrap();
        }
    }

    #[test]
    fn unknown_parent_rejected() {
        let b = TemplateBuilder::new("x", LinkSpec::massless("root")).attach(
            "nope",
            JointSpec::fixed("j", Pose::identity()),
            LinkSpec::massless("a"),
        );
        assert!(b.build().is_err());
    }
}
