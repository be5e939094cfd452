//! MJCF subset: `compiler/@angle`, `default` classes for `joint` and `geom`,
//! nested `body` elements with `hinge`/`slide` joints, primitive geoms and
//! optional explicit `inertial` elements.
//!
//! Every body directly under `worldbody` becomes one template whose root is a
//! massless `world` link. A body with joints `j1..jk` anchored at `a1..ak`
//! becomes a chain of links; the last one carries the body's geoms, shifted
//! by `-ak` so that the link frame sits on the joint anchor.

use super::{
    assemble, combine_inertias, shape_inertia, ArticulationTemplate, AssetError, CollisionShape,
    JointSpec, JointType, LinkSpec, Parsed, RawJoint, Shape, DEFAULT_COLOR,
};
use crate::pose::{Pose, Vec3};
use nalgebra::{Matrix3, UnitQuaternion};
use roxmltree::{Document, Node};
use std::collections::HashMap;

type Result<T> = std::result::Result<T, AssetError>;
type Attrs = HashMap<String, String>;

#[derive(Clone, Default)]
struct ClassDefaults {
    joint: Attrs,
    geom: Attrs,
}

struct Ctx {
    degrees: bool,
    classes: HashMap<String, ClassDefaults>,
    warnings: Vec<String>,
}

fn parse_floats(node: &Node, attr: &str, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(str::parse::<f64>)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| AssetError::schema(node, format!("attribute {attr}=\"{text}\" is not numeric")))
}

fn fixed<const N: usize>(node: &Node, attr: &str, text: &str) -> Result<[f64; N]> {
    let v = parse_floats(node, attr, text)?;
    v.try_into()
        .map_err(|_| AssetError::schema(node, format!("attribute {attr}=\"{text}\" must hold {N} numbers")))
}

fn collect_defaults(node: &Node, inherited: &ClassDefaults, out: &mut HashMap<String, ClassDefaults>) {
    let class = node.attribute("class").unwrap_or("main").to_string();
    let mut mine = inherited.clone();
    for c in node.children().filter(|c| c.is_element()) {
        let target = match c.tag_name().name() {
            "joint" => &mut mine.joint,
            "geom" => &mut mine.geom,
            _ => continue,
        };
        for a in c.attributes() {
            target.insert(a.name().to_string(), a.value().to_string());
        }
    }
    for c in node.children().filter(|c| c.has_tag_name("default")) {
        collect_defaults(&c, &mine, out);
    }
    out.insert(class, mine);
}

impl Ctx {
    /// Explicit attribute, else the element's class default.
    fn attr(&self, node: &Node, class: &str, kind: &str, name: &str) -> Option<String> {
        if let Some(v) = node.attribute(name) {
            return Some(v.to_string());
        }
        let class = node.attribute("class").unwrap_or(class);
        let d = self.classes.get(class).or_else(|| self.classes.get("main"))?;
        let table = if kind == "joint" { &d.joint } else { &d.geom };
        table.get(name).cloned()
    }

    fn angle(&self, v: f64) -> f64 {
        if self.degrees {
            v.to_radians()
        } else {
            v
        }
    }

    fn frame(&self, node: &Node) -> Result<Pose> {
        let pos = match node.attribute("pos") {
            Some(t) => Vec3::from(fixed::<3>(node, "pos", t)?),
            None => Vec3::zeros(),
        };
        if let Some(t) = node.attribute("quat") {
            return Ok(Pose::new(pos, fixed::<4>(node, "quat", t)?));
        }
        if let Some(t) = node.attribute("euler") {
            let e = fixed::<3>(node, "euler", t)?.map(|v| self.angle(v));
            let r = UnitQuaternion::from_axis_angle(&Vec3::x_axis(), e[0])
                * UnitQuaternion::from_axis_angle(&Vec3::y_axis(), e[1])
                * UnitQuaternion::from_axis_angle(&Vec3::z_axis(), e[2]);
            return Ok(Pose::from_parts(pos, r));
        }
        if let Some(t) = node.attribute("axisangle") {
            let a = fixed::<4>(node, "axisangle", t)?;
            let axis = Vec3::new(a[0], a[1], a[2]).normalize();
            return Ok(Pose::from_axis_angle(pos, axis * self.angle(a[3])));
        }
        Ok(Pose::from_translation(pos))
    }
}

struct Builder {
    links: Vec<LinkSpec>,
    joints: Vec<RawJoint>,
}

struct JointDecl {
    name: String,
    joint_type: JointType,
    axis: Vec3,
    anchor: Vec3,
    lower: f64,
    upper: f64,
    damping: f64,
}

fn parse_joint(ctx: &Ctx, node: &Node, class: &str, body: &str, index: usize, is_root: bool) -> Result<Option<JointDecl>> {
    let get = |n: &str| ctx.attr(node, class, "joint", n);
    let kind = get("type").unwrap_or_else(|| "hinge".into());
    let joint_type = match kind.as_str() {
        "hinge" => JointType::Revolute,
        "slide" => JointType::Prismatic,
        "free" if is_root => return Ok(None),
        other => {
            return Err(AssetError::schema(node, format!("body {body}: unsupported joint type `{other}`")))
        }
    };
    let name = node
        .attribute("name")
        .map(str::to_string)
        .unwrap_or_else(|| format!("{body}_joint{index}"));
    let axis = match get("axis") {
        Some(t) => Vec3::from(fixed::<3>(node, "axis", &t)?),
        None => Vec3::z(),
    };
    if axis.norm() < 1e-12 {
        return Err(AssetError::schema(node, format!("joint {name}: zero axis")));
    }
    let anchor = match get("pos") {
        Some(t) => Vec3::from(fixed::<3>(node, "pos", &t)?),
        None => Vec3::zeros(),
    };
    let range = get("range").map(|t| fixed::<2>(node, "range", &t)).transpose()?;
    let limited = match get("limited").as_deref() {
        Some("true") => true,
        Some("false") => false,
        _ => range.is_some(),
    };
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    if limited {
        let r = range.ok_or_else(|| AssetError::schema(node, format!("joint {name}: limited without range")))?;
        let conv = |v: f64| if joint_type == JointType::Revolute { ctx.angle(v) } else { v };
        lower = conv(r[0]);
        upper = conv(r[1]);
        if lower > upper {
            return Err(AssetError::schema(node, format!("joint {name}: range lower > upper")));
        }
    }
    let damping = match get("damping") {
        Some(t) => fixed::<1>(node, "damping", &t)?[0],
        None => 0.0,
    };
    Ok(Some(JointDecl {
        name,
        joint_type,
        axis: axis.normalize(),
        anchor,
        lower,
        upper,
        damping,
    }))
}

/// Returns the geom's shape, its pose in the body frame and its mass.
fn parse_geom(ctx: &mut Ctx, node: &Node, class: &str, body: &str) -> Result<Option<(Shape, Pose, f64, Option<[f64; 4]>)>> {
    let get = |n: &str| ctx.attr(node, class, "geom", n);
    let kind = get("type").unwrap_or_else(|| "sphere".into());
    let size = get("size").map(|t| parse_floats(node, "size", &t)).transpose()?;
    let fromto = get("fromto").map(|t| fixed::<6>(node, "fromto", &t)).transpose()?;
    let rgba = get("rgba").map(|t| fixed::<4>(node, "rgba", &t)).transpose()?;
    let need = |n: usize| -> Result<Vec<f64>> {
        match &size {
            Some(s) if s.len() >= n => Ok(s.clone()),
            _ => Err(AssetError::schema(node, format!("geom in body {body}: `size` needs {n} values"))),
        }
    };
    let mut pose = {
        // geom frames use the same pos/quat/euler attributes as bodies
        let mut p = ctx.frame(node)?;
        if node.attribute("pos").is_none() {
            if let Some(t) = get("pos") {
                p.translation = Vec3::from(fixed::<3>(node, "pos", &t)?);
            }
        }
        p
    };
    let shape = match kind.as_str() {
        "sphere" => Shape::Sphere { radius: need(1)?[0] },
        "box" => {
            let s = need(3)?;
            Shape::Box { half_extents: [s[0], s[1], s[2]] }
        }
        "capsule" | "cylinder" => {
            let s = need(1)?;
            let half_length = if let Some(ft) = fromto {
                let a = Vec3::new(ft[0], ft[1], ft[2]);
                let b = Vec3::new(ft[3], ft[4], ft[5]);
                let d = b - a;
                let rot = UnitQuaternion::rotation_between(&Vec3::z(), &d)
                    .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI));
                pose = Pose::from_parts((a + b) / 2.0, rot);
                d.norm() / 2.0
            } else {
                need(2)?[1]
            };
            if kind == "capsule" {
                Shape::Capsule { radius: s[0], half_length }
            } else {
                Shape::Cylinder { radius: s[0], half_length }
            }
        }
        other => {
            ctx.warnings.push(format!("body {body}: unsupported `{other}` geom skipped"));
            return Ok(None);
        }
    };
    if !shape.is_valid() {
        return Err(AssetError::schema(node, format!("geom in body {body}: non-positive size")));
    }
    let mass = match ctx.attr(node, class, "geom", "mass") {
        Some(t) => fixed::<1>(node, "mass", &t)?[0],
        None => {
            let density = match ctx.attr(node, class, "geom", "density") {
                Some(t) => fixed::<1>(node, "density", &t)?[0],
                None => 1000.0,
            };
            density * shape.volume()
        }
    };
    Ok(Some((shape, pose, mass, rgba)))
}

fn parse_inertial(node: &Node) -> Result<(f64, Pose, Matrix3<f64>)> {
    let ctx_free = Ctx {
        degrees: false,
        classes: HashMap::new(),
        warnings: Vec::new(),
    };
    let frame = ctx_free.frame(node)?;
    let mass = fixed::<1>(
        node,
        "mass",
        node.attribute("mass")
            .ok_or_else(|| AssetError::schema(node, "missing required attribute `mass`"))?,
    )?[0];
    let inertia = if let Some(t) = node.attribute("diaginertia") {
        Matrix3::from_diagonal(&Vec3::from(fixed::<3>(node, "diaginertia", t)?))
    } else if let Some(t) = node.attribute("fullinertia") {
        let f = fixed::<6>(node, "fullinertia", t)?;
        Matrix3::new(f[0], f[3], f[4], f[3], f[1], f[5], f[4], f[5], f[2])
    } else {
        return Err(AssetError::schema(node, "inertial needs diaginertia or fullinertia"));
    };
    Ok((mass, frame, inertia))
}

fn visit_body(
    ctx: &mut Ctx,
    b: &mut Builder,
    node: &Node,
    parent_link: &str,
    parent_offset: Pose,
    inherited_class: &str,
    is_root: bool,
) -> Result<()> {
    let name = node
        .attribute("name")
        .ok_or_else(|| AssetError::schema(node, "missing required attribute `name`"))?
        .to_string();
    let class = node.attribute("childclass").unwrap_or(inherited_class).to_string();
    let body_frame = parent_offset.compose(&ctx.frame(node)?);

    let mut decls = Vec::new();
    for (i, j) in node.children().filter(|c| c.has_tag_name("joint")).enumerate() {
        if let Some(d) = parse_joint(ctx, &j, &class, &name, i, is_root)? {
            decls.push(d);
        }
    }
    if node.children().any(|c| c.has_tag_name("freejoint")) {
        if !is_root {
            return Err(AssetError::schema(node, format!("body {name}: free joint on non-root body")));
        }
        ctx.warnings.push(format!("body {name}: free joint on root body ignored (base is fixed)"));
    }
    if is_root && decls.is_empty() && node.children().any(|c| c.has_tag_name("joint")) {
        ctx.warnings.push(format!("body {name}: free joint on root body ignored (base is fixed)"));
    }

    // chain of links, one per joint; the last carries the body contents
    let mut prev = parent_link.to_string();
    let mut prev_anchor = Vec3::zeros();
    let mut first = true;
    let k = decls.len();
    if k == 0 {
        b.joints.push(RawJoint {
            spec: JointSpec {
                name: format!("{name}_fixed"),
                joint_type: JointType::Fixed,
                axis: Vec3::z(),
                origin: body_frame,
                lower: 0.0,
                upper: 0.0,
                damping: 0.0,
                parent_link: 0,
                child_link: 0,
            },
            parent: prev.clone(),
            child: name.clone(),
        });
    }
    for (i, d) in decls.iter().enumerate() {
        let link_name = if i + 1 == k { name.clone() } else { format!("{name}_j{i}") };
        let origin = if first {
            body_frame.compose(&Pose::from_translation(d.anchor))
        } else {
            Pose::from_translation(d.anchor - prev_anchor)
        };
        first = false;
        if i + 1 != k {
            b.links.push(LinkSpec::massless(link_name.clone()));
        }
        b.joints.push(RawJoint {
            spec: JointSpec {
                name: d.name.clone(),
                joint_type: d.joint_type,
                axis: d.axis,
                origin,
                lower: d.lower,
                upper: d.upper,
                damping: d.damping,
                parent_link: 0,
                child_link: 0,
            },
            parent: prev,
            child: link_name.clone(),
        });
        prev = link_name;
        prev_anchor = d.anchor;
    }
    let content_offset = Pose::from_translation(-prev_anchor);

    let mut link = LinkSpec::massless(name.clone());
    let mut parts = Vec::new();
    let mut color = None;
    let mut explicit = None;
    for c in node.children().filter(|c| c.is_element()) {
        match c.tag_name().name() {
            "geom" => {
                if let Some((shape, pose, mass, rgba)) = parse_geom(ctx, &c, &class, &name)? {
                    let origin = content_offset.compose(&pose);
                    parts.push((mass, shape_inertia(&shape, mass), origin));
                    link.collision_shapes.push(CollisionShape { shape, origin });
                    color = color.or(rgba);
                }
            }
            "inertial" => explicit = Some(parse_inertial(&c)?),
            "joint" | "freejoint" | "body" => {}
            other => ctx.warnings.push(format!("body {name}: unsupported <{other}> skipped")),
        }
    }
    if let Some((mass, frame, inertia)) = explicit {
        link.mass = mass;
        link.inertia = inertia;
        link.inertial_origin = content_offset.compose(&frame);
    } else {
        let (mass, com, inertia) = combine_inertias(&parts);
        link.mass = mass;
        link.inertia = inertia;
        link.inertial_origin = Pose::from_translation(com);
    }
    link.visual_color = color.unwrap_or(DEFAULT_COLOR);
    b.links.push(link);

    for c in node.children().filter(|c| c.has_tag_name("body")) {
        visit_body(ctx, b, &c, &name, content_offset, &class, false)?;
    }
    Ok(())
}

/// Parses the supported MJCF subset into one template per root body.
pub fn load_mjcf(xml: &str) -> Result<Parsed<Vec<ArticulationTemplate>>> {
    let doc = Document::parse(xml).map_err(AssetError::from_xml)?;
    let root = doc.root_element();
    if !root.has_tag_name("mujoco") {
        return Err(AssetError::schema(&root, "root element must be <mujoco>"));
    }
    let mut ctx = Ctx {
        degrees: true,
        classes: HashMap::new(),
        warnings: Vec::new(),
    };
    ctx.classes.insert("main".into(), ClassDefaults::default());
    let mut worldbody = None;
    for c in root.children().filter(|c| c.is_element()) {
        match c.tag_name().name() {
            "compiler" => match c.attribute("angle") {
                Some("radian") => ctx.degrees = false,
                Some("degree") | None => ctx.degrees = true,
                Some(other) => return Err(AssetError::schema(&c, format!("unknown angle unit `{other}`"))),
            },
            "default" => collect_defaults(&c, &ClassDefaults::default(), &mut ctx.classes),
            "worldbody" => worldbody = Some(c),
            other => ctx.warnings.push(format!("unsupported <{other}> skipped")),
        }
    }
    let world = worldbody.ok_or_else(|| AssetError::schema(&root, "missing <worldbody>"))?;
    let mut templates = Vec::new();
    for c in world.children().filter(|c| c.is_element()) {
        match c.tag_name().name() {
            "body" => {
                let mut b = Builder {
                    links: vec![LinkSpec::massless("world")],
                    joints: Vec::new(),
                };
                let class = c.attribute("childclass").unwrap_or("main").to_string();
                visit_body(&mut ctx, &mut b, &c, "world", Pose::identity(), &class, true)?;
                let name = c.attribute("name").unwrap_or("body").to_string();
                templates.push(assemble(name, b.links, b.joints)?);
            }
            other => ctx.warnings.push(format!("worldbody: <{other}> skipped")),
        }
    }
    Ok(Parsed {
        value: templates,
        warnings: ctx.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CARTPOLE: &str = include_str!("../../assets/cartpole.xml");

    #[test]
    fn cartpole_structure() {
        let p = load_mjcf(CARTPOLE).unwrap();
        assert_eq!(p.value.len(), 1);
        let t = &p.value[0];
        assert_eq!(t.dof(), 2);
        let kinds: Vec<_> = t.joints.iter().map(|j| j.joint_type).collect();
        assert_eq!(kinds, [JointType::Prismatic, JointType::Revolute]);
        assert_eq!(t.links[0].name, "world");
        // hinge range given in degrees in the fixture is not limited; slider is
        assert_eq!(t.joints[0].lower, -1.0);
        assert!(t.joints[1].upper.is_infinite());
        // floor is a worldbody geom and becomes a warning
        assert!(p.warnings.iter().any(|w| w.contains("geom")));
    }

    #[test]
    fn sibling_roots_make_two_templates() {
        let xml = r#"<mujoco><worldbody>
            <body name="a"><geom type="sphere" size="0.1"/></body>
            <body name="b" pos="1 0 0"><joint type="hinge" axis="0 1 0"/><geom type="box" size="0.1 0.1 0.1"/></body>
        </worldbody></mujoco>"#;
        let t = load_mjcf(xml).unwrap().value;
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].dof(), t[1].dof()), (0, 1));
        assert_eq!(t[1].joints[0].origin.translation, Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn default_class_supplies_geom_size() {
        let xml = r#"<mujoco>
            <default><geom type="box" size="0.1 0.2 0.3"/>
              <default class="ball"><geom type="sphere" size="0.25"/></default>
            </default>
            <worldbody>
              <body name="a"><geom/></body>
              <body name="b"><geom class="ball"/></body>
              <body name="c" childclass="ball"><geom/></body>
            </worldbody></mujoco>"#;
        let t = load_mjcf(xml).unwrap().value;
        assert_eq!(t[0].links[1].collision_shapes[0].shape, Shape::Box { half_extents: [0.1, 0.2, 0.3] });
        assert_eq!(t[1].links[1].collision_shapes[0].shape, Shape::Sphere { radius: 0.25 });
        assert_eq!(t[2].links[1].collision_shapes[0].shape, Shape::Sphere { radius: 0.25 });
    }

    #[test]
    fn ball_joint_rejected() {
        let xml = r#"<mujoco><worldbody><body name="a"><geom size="0.1"/>
            <body name="b"><joint type="ball"/><geom size="0.1"/></body></body></worldbody></mujoco>"#;
        assert!(matches!(load_mjcf(xml).unwrap_err(), AssetError::Schema { .. }));
        let xml = r#"<mujoco><worldbody><body name="a"><geom size="0.1"/>
            <body name="b"><joint type="free"/><geom size="0.1"/></body></body></worldbody></mujoco>"#;
        assert!(matches!(load_mjcf(xml).unwrap_err(), AssetError::Schema { .. }));
    }

    #[test]
    fn angle_units() {
        let deg = r#"<mujoco><worldbody><body name="a"><joint type="hinge" range="-90 90"/><geom size="0.1"/></body></worldbody></mujoco>"#;
        let rad = r#"<mujoco><compiler angle="radian"/><worldbody><body name="a"><joint type="hinge" range="-1 1"/><geom size="0.1"/></body></worldbody></mujoco>"#;
        let d = &load_mjcf(deg).unwrap().value[0];
        assert!((d.joints[0].upper - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let r = &load_mjcf(rad).unwrap().value[0];
        assert_eq!(r.joints[0].upper, 1.0);
    }

    #[test]
    fn anchored_hinge_shifts_contents() {
        let xml = r#"<mujoco><worldbody><body name="p" pos="0 0 1">
            <joint type="hinge" pos="0 0 0.5" axis="0 1 0"/>
            <geom type="sphere" size="0.1" pos="0 0 0"/></body></worldbody></mujoco>"#;
        let t = &load_mjcf(xml).unwrap().value[0];
        assert_eq!(t.joints[0].origin.translation, Vec3::new(0.0, 0.0, 1.5));
        assert_eq!(t.links[1].collision_shapes[0].origin.translation, Vec3::new(0.0, 0.0, -0.5));
    }
}
