use super::{
    assemble, ArticulationTemplate, AssetError, CollisionShape, JointSpec, JointType, LinkSpec,
    Parsed, RawJoint, Shape, DEFAULT_COLOR,
};
use crate::pose::{Pose, Vec3};
use nalgebra::Matrix3;
use roxmltree::{Document, Node};
use std::collections::HashMap;

type Result<T> = std::result::Result<T, AssetError>;

fn floats(node: &Node, attr: &str, text: &str, n: usize) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> = text.split_whitespace().map(str::parse::<f64>).collect();
    match vals {
        Ok(v) if v.len() == n => Ok(v),
        _ => Err(AssetError::schema(
            node,
            format!("attribute {attr}=\"{text}\" must hold {n} numbers"),
        )),
    }
}

fn required<'a>(node: &Node<'a, '_>, attr: &str) -> Result<&'a str> {
    node.attribute(attr)
        .ok_or_else(|| AssetError::schema(node, format!("missing required attribute `{attr}`")))
}

fn number(node: &Node, attr: &str) -> Result<f64> {
    let t = required(node, attr)?;
    Ok(floats(node, attr, t, 1)?[0])
}

fn optional_number(node: &Node, attr: &str, default: f64) -> Result<f64> {
    match node.attribute(attr) {
        Some(t) => Ok(floats(node, attr, t, 1)?[0]),
        None => Ok(default),
    }
}

fn child<'a, 'i>(node: &Node<'a, 'i>, tag: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(tag))
}

fn origin(node: &Node) -> Result<Pose> {
    let Some(o) = child(node, "origin") else {
        return Ok(Pose::identity());
    };
    let xyz = match o.attribute("xyz") {
        Some(t) => floats(&o, "xyz", t, 3)?,
        None => vec![0.0; 3],
    };
    let rpy = match o.attribute("rpy") {
        Some(t) => floats(&o, "rpy", t, 3)?,
        None => vec![0.0; 3],
    };
    Ok(Pose::from_rpy(Vec3::new(xyz[0], xyz[1], xyz[2]), [rpy[0], rpy[1], rpy[2]]))
}

fn color_of(material: &Node, named: &HashMap<String, [f64; 4]>) -> Result<Option<[f64; 4]>> {
    if let Some(c) = child(material, "color") {
        let v = floats(&c, "rgba", required(&c, "rgba")?, 4)?;
        return Ok(Some([v[0], v[1], v[2], v[3]]));
    }
    Ok(material.attribute("name").and_then(|n| named.get(n).copied()))
}

fn geometry(node: &Node, warnings: &mut Vec<String>, link: &str) -> Result<Option<Shape>> {
    let g = child(node, "geometry").ok_or_else(|| AssetError::schema(node, "missing <geometry>"))?;
    let Some(shape) = g.children().find(|c| c.is_element()) else {
        return Err(AssetError::schema(&g, "empty <geometry>"));
    };
    let parsed = match shape.tag_name().name() {
        "box" => {
            let s = floats(&shape, "size", required(&shape, "size")?, 3)?;
            Shape::Box {
                half_extents: [s[0] / 2.0, s[1] / 2.0, s[2] / 2.0],
            }
        }
        "sphere" => Shape::Sphere {
            radius: number(&shape, "radius")?,
        },
        "cylinder" => Shape::Cylinder {
            radius: number(&shape, "radius")?,
            half_length: number(&shape, "length")? / 2.0,
        },
        "capsule" => Shape::Capsule {
            radius: number(&shape, "radius")?,
            half_length: number(&shape, "length")? / 2.0,
        },
        other => {
            warnings.push(format!("link {link}: unsupported <{other}> geometry skipped"));
            return Ok(None);
        }
    };
    if !parsed.is_valid() {
        return Err(AssetError::schema(&shape, "shape dimensions must be positive"));
    }
    Ok(Some(parsed))
}

fn parse_link(node: &Node, named: &HashMap<String, [f64; 4]>, warnings: &mut Vec<String>) -> Result<LinkSpec> {
    let name = required(node, "name")?.to_string();
    let mut link = LinkSpec::massless(name.clone());
    let mut color = None;
    for c in node.children().filter(|c| c.is_element()) {
        match c.tag_name().name() {
            "inertial" => {
                link.inertial_origin = origin(&c)?;
                let m = child(&c, "mass").ok_or_else(|| AssetError::schema(&c, "missing <mass>"))?;
                link.mass = number(&m, "value")?;
                if let Some(i) = child(&c, "inertia") {
                    let g = |a: &str| number(&i, a);
                    let (xx, xy, xz, yy, yz, zz) =
                        (g("ixx")?, g("ixy")?, g("ixz")?, g("iyy")?, g("iyz")?, g("izz")?);
                    link.inertia = Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz);
                }
            }
            "collision" => {
                if let Some(shape) = geometry(&c, warnings, &name)? {
                    link.collision_shapes.push(CollisionShape {
                        shape,
                        origin: origin(&c)?,
                    });
                }
            }
            "visual" => {
                if let Some(m) = child(&c, "material") {
                    color = color_of(&m, named)?.or(color);
                }
            }
            other => warnings.push(format!("link {name}: unsupported <{other}> skipped")),
        }
    }
    link.visual_color = color.unwrap_or(DEFAULT_COLOR);
    Ok(link)
}

fn parse_joint(node: &Node, links: &HashMap<String, ()>) -> Result<RawJoint> {
    let name = required(node, "name")?.to_string();
    let kind = required(node, "type")?;
    let joint_type = match kind {
        "revolute" | "continuous" => JointType::Revolute,
        "prismatic" => JointType::Prismatic,
        "fixed" => JointType::Fixed,
        other => {
            return Err(AssetError::schema(
                node,
                format!("joint {name}: unsupported joint type `{other}` (model multi-DOF bases with 1-DOF joints)"),
            ))
        }
    };
    let link_ref = |tag: &str| -> Result<String> {
        let c = child(node, tag).ok_or_else(|| AssetError::schema(node, format!("joint {name}: missing <{tag}>")))?;
        let l = required(&c, "link")?;
        if !links.contains_key(l) {
            return Err(AssetError::schema(&c, format!("joint {name} references undeclared link `{l}`")));
        }
        Ok(l.to_string())
    };
    let parent = link_ref("parent")?;
    let child_link = link_ref("child")?;
    let axis = match child(node, "axis") {
        Some(a) => {
            let v = floats(&a, "xyz", required(&a, "xyz")?, 3)?;
            let v = Vec3::new(v[0], v[1], v[2]);
            if v.norm() < 1e-12 {
                return Err(AssetError::schema(&a, "axis must be non-zero"));
            }
            v.normalize()
        }
        None => Vec3::x(),
    };
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    if kind != "continuous" {
        if let Some(l) = child(node, "limit") {
            lower = optional_number(&l, "lower", 0.0)?;
            upper = optional_number(&l, "upper", 0.0)?;
            if lower > upper {
                return Err(AssetError::schema(&l, format!("joint {name}: lower > upper")));
            }
        }
    }
    let damping = match child(node, "dynamics") {
        Some(d) => optional_number(&d, "damping", 0.0)?,
        None => 0.0,
    };
    Ok(RawJoint {
        spec: JointSpec {
            name,
            joint_type,
            axis,
            origin: origin(node)?,
            lower,
            upper,
            damping,
            parent_link: 0,
            child_link: 0,
        },
        parent,
        child: child_link,
    })
}

/// Parses the supported URDF subset. Mesh geometry, transmissions, gazebo
/// extensions and other unknown tags are skipped and reported as warnings.
pub fn load_urdf(xml: &str) -> Result<Parsed<ArticulationTemplate>> {
    let doc = Document::parse(xml).map_err(AssetError::from_xml)?;
    let robot = doc.root_element();
    if !robot.has_tag_name("robot") {
        return Err(AssetError::schema(&robot, "root element must be <robot>"));
    }
    let name = required(&robot, "name")?.to_string();
    let mut warnings = Vec::new();

    let mut named = HashMap::new();
    for m in robot.children().filter(|c| c.has_tag_name("material")) {
        if let (Some(n), Some(c)) = (m.attribute("name"), color_of(&m, &HashMap::new())?) {
            named.insert(n.to_string(), c);
        }
    }

    let mut links = Vec::new();
    for l in robot.children().filter(|c| c.has_tag_name("link")) {
        links.push(parse_link(&l, &named, &mut warnings)?);
    }
    let declared: HashMap<String, ()> = links.iter().map(|l| (l.name.clone(), ())).collect();
    let mut joints = Vec::new();
    for c in robot.children().filter(|c| c.is_element()) {
        match c.tag_name().name() {
            "joint" => joints.push(parse_joint(&c, &declared)?),
            "link" | "material" => {}
            other => warnings.push(format!("robot {name}: unsupported <{other}> skipped")),
        }
    }
    if links.is_empty() {
        return Err(AssetError::schema(&robot, "robot declares no links"));
    }
    let value = assemble(name, links, joints)?;
    Ok(Parsed { value, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PENDULUM: &str = include_str!("../../assets/pendulum2.urdf");

    #[test]
    fn two_link_pendulum() {
        let t = load_urdf(PENDULUM).unwrap().value;
        assert_eq!(t.dof(), 2);
        let names: Vec<_> = t.links.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["base", "link1", "link2", "tip"]);
        for j in t.joints.iter().filter(|j| j.is_dof()) {
            assert_eq!(j.joint_type, JointType::Revolute);
            assert_eq!(j.axis, Vec3::z());
        }
    }

    #[test]
    fn declaration_order_does_not_matter() {
        let xml = r#"<robot name="r">
            <link name="tip"><inertial><mass value="1"/><inertia ixx="1" ixy="0" ixz="0" iyy="1" iyz="0" izz="1"/></inertial></link>
            <joint name="j2" type="revolute"><parent link="mid"/><child link="tip"/><axis xyz="0 0 1"/><limit lower="-1" upper="1"/></joint>
            <link name="mid"><inertial><mass value="1"/><inertia ixx="1" ixy="0" ixz="0" iyy="1" iyz="0" izz="1"/></inertial></link>
            <joint name="j1" type="prismatic"><parent link="root"/><child link="mid"/><axis xyz="2 0 0"/></joint>
            <link name="root"/>
        </robot>"#;
        let t = load_urdf(xml).unwrap().value;
        let names: Vec<_> = t.links.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["root", "mid", "tip"]);
        assert_eq!(t.joints[0].name, "j1");
        assert_eq!(t.joints[0].axis, Vec3::x());
        assert!(t.joints[0].lower.is_infinite());
    }

    #[test]
    fn root_only() {
        let t = load_urdf(r#"<robot name="b"><link name="only"/></robot>"#).unwrap().value;
        assert_eq!(t.dof(), 0);
        assert_eq!(t.links.len(), 1);
        assert!(t.joints.is_empty());
    }

    #[test]
    fn undeclared_link_is_schema_error() {
        let xml = r#"<robot name="b"><link name="a"/>
            <joint name="j" type="fixed"><parent link="a"/><child link="ghost"/></joint></robot>"#;
        match load_urdf(xml).unwrap_err() {
            AssetError::Schema { element, message, line } => {
                assert_eq!(element, "child");
                assert!(message.contains("ghost"));
                assert_eq!(line, 2);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn missing_attribute_names_element() {
        let err = load_urdf(r#"<robot name="b"><link/></robot>"#).unwrap_err();
        assert!(matches!(err, AssetError::Schema { ref element, .. } if element == "link"), "{err:?}");
    }

    #[test]
    fn malformed_xml_reports_line() {
        let err = load_urdf("<robot name=\"x\">\n<link name=\"a\">\n</robot>").unwrap_err();
        assert!(matches!(err, AssetError::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn loop_is_topology_error() {
        let xml = r#"<robot name="b"><link name="a"/><link name="b"/><link name="c"/>
            <joint name="j1" type="fixed"><parent link="a"/><child link="b"/></joint>
            <joint name="j2" type="fixed"><parent link="b"/><child link="c"/></joint>
            <joint name="j3" type="fixed"><parent link="a"/><child link="c"/></joint></robot>"#;
        assert!(matches!(load_urdf(xml).unwrap_err(), AssetError::Topology(_)));
        let cycle = r#"<robot name="b"><link name="a"/><link name="b"/>
            <joint name="j1" type="fixed"><parent link="a"/><child link="b"/></joint>
            <joint name="j2" type="fixed"><parent link="b"/><child link="a"/></joint></robot>"#;
        assert!(matches!(load_urdf(cycle).unwrap_err(), AssetError::Topology(_)));
    }

    #[test]
    fn unsupported_tags_warn() {
        let xml = r#"<robot name="b">
            <link name="a"><collision><geometry><mesh filename="x.stl"/></geometry></collision></link>
            <transmission name="t"/><gazebo/></robot>"#;
        let p = load_urdf(xml).unwrap();
        assert_eq!(p.warnings.len(), 3, "{:?}", p.warnings);
        assert!(p.value.links[0].collision_shapes.is_empty());
    }

    #[test]
    fn planar_joint_rejected() {
        let xml = r#"<robot name="b"><link name="a"/><link name="b"/>
            <joint name="j" type="planar"><parent link="a"/><child link="b"/></joint></robot>"#;
        assert!(matches!(load_urdf(xml).unwrap_err(), AssetError::Schema { .. }));
    }

    #[test]
    fn continuous_has_infinite_limits() {
        let xml = r#"<robot name="b"><link name="a"/>
            <link name="w"><inertial><mass value="1"/><inertia ixx="1" ixy="0" ixz="0" iyy="1" iyz="0" izz="1"/></inertial></link>
            <joint name="j" type="continuous"><parent link="a"/><child link="w"/><limit lower="-1" upper="1"/></joint></robot>"#;
        let t = load_urdf(xml).unwrap().value;
        assert_eq!(t.joints[0].lower, f64::NEG_INFINITY);
        assert_eq!(t.joints[0].upper, f64::INFINITY);
        let json = t.to_canonical_json();
        assert_eq!(ArticulationTemplate::from_canonical_json(&json).unwrap(), t);
    }

    #[test]
    fn massless_moving_joint_rejected() {
        let xml = r#"<robot name="b"><link name="a"/><link name="b"/>
            <joint name="j" type="revolute"><parent link="a"/><child link="b"/><axis xyz="0 0 1"/></joint></robot>"#;
        assert!(matches!(load_urdf(xml).unwrap_err(), AssetError::Invalid(_)));
    }
}
