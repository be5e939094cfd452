//! Precomputed per-template data shared by kinematics and dynamics.

use crate::assets::{ArticulationTemplate, AssetError, JointType};
use crate::spatial::{rigid_inertia, svec, SMat, SVec};
use crate::pose::Vec3;

#[derive(Debug, Clone)]
pub struct ArticulationModel {
    pub template: ArticulationTemplate,
    /// Parent link of each link; `None` for the root.
    pub parent: Vec<Option<usize>>,
    /// Joint whose child is each link; `None` for the root.
    pub joint_of_link: Vec<Option<usize>>,
    /// DOF index of each joint.
    pub dof_of_joint: Vec<Option<usize>>,
    /// Joint index of each DOF.
    pub dof_joint: Vec<usize>,
    /// Spatial inertia of each link about its frame origin.
    pub inertia: Vec<SMat>,
    /// Motion subspace of each joint in child-link coordinates (zero for fixed).
    pub motion_axis: Vec<SVec>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub damping: Vec<f64>,
    /// DOFs on the path from the root to each link.
    pub ancestor_dofs: Vec<Vec<usize>>,
}

impl ArticulationModel {
    pub fn new(template: ArticulationTemplate) -> Result<Self, AssetError> {
        template.validate()?;
        let n = template.links.len();
        let mut parent = vec![None; n];
        let mut joint_of_link = vec![None; n];
        for (j, joint) in template.joints.iter().enumerate() {
            parent[joint.child_link] = Some(joint.parent_link);
            joint_of_link[joint.child_link] = Some(j);
        }
        let dof_of_joint = template.joint_dof_indices();
        let dof_joint = template.dof_joints();
        let inertia = template
            .links
            .iter()
            .map(|l| {
                rigid_inertia(
                    l.mass,
                    &l.inertial_origin.translation,
                    &l.inertia_in_link_frame(),
                )
            })
            .collect();
        let motion_axis = template
            .joints
            .iter()
            .map(|j| match j.joint_type {
                JointType::Revolute => svec(j.axis, Vec3::zeros()),
                JointType::Prismatic => svec(Vec3::zeros(), j.axis),
                JointType::Fixed => SVec::zeros(),
            })
            .collect();
        let mut ancestor_dofs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for link in 1..n {
            let j = joint_of_link[link].unwrap();
            let mut a = ancestor_dofs[parent[link].unwrap()].clone();
            if let Some(d) = dof_of_joint[j] {
                a.push(d);
            }
            ancestor_dofs[link] = a;
        }
        let dofs: Vec<_> = dof_joint.iter().map(|j| &template.joints[*j]).collect();
        Ok(Self {
            lower: dofs.iter().map(|j| j.lower).collect(),
            upper: dofs.iter().map(|j| j.upper).collect(),
            damping: dofs.iter().map(|j| j.damping).collect(),
            parent,
            joint_of_link,
            dof_of_joint,
            dof_joint,
            inertia,
            motion_axis,
            ancestor_dofs,
            template,
        })
    }

    pub fn dof(&self) -> usize {
        self.dof_joint.len()
    }

    pub fn num_links(&self) -> usize {
        self.template.links.len()
    }

    pub fn name(&self) -> &str {
        &self.template.name
    }

    /// A link is dynamic when at least one DOF moves it.
    pub fn link_is_dynamic(&self, link: usize) -> bool {
        !self.ancestor_dofs[link].is_empty()
    }
}
