//! URDF subset reader and writer.

use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::{
    default_inertial, ArticulationSpec, AssetError, CollisionShape, Geometry, JointKind, JointSpec, LinkSpec,
    ValidationError, CONTINUOUS_LIMIT, DEFAULT_EFFORT_LIMIT,
};
use crate::spatial::{Mat3, Quat, SpatialInertia, Transform, Vec3};

/// Parses a URDF document into a validated [`ArticulationSpec`].
///
/// `revolute` and `continuous` map to hinges (continuous ranges clamp to
/// ±2π), `prismatic` to sliders, `fixed` to fixed joints. Mesh collision
/// geometry is rejected.
pub fn parse_urdf(text: &str) -> Result<ArticulationSpec, AssetError> {
    let doc = Document::parse(text).map_err(|e| AssetError::Parse(e.to_string()))?;
    let robot = doc.root_element();
    if robot.tag_name().name() != "robot" {
        return Err(AssetError::Parse(format!("expected <robot>, found <{}>", robot.tag_name().name())));
    }
    let name = robot.attribute("name").unwrap_or("").to_string();

    let mut links = Vec::new();
    let mut joints = Vec::new();
    for node in robot.children().filter(Node::is_element) {
        match node.tag_name().name() {
            "link" => links.push(parse_link(node)?),
            "joint" => joints.push(parse_joint(node)?),
            // transmissions, gazebo tags, materials
            _ => {}
        }
    }

    let child_links: std::collections::HashSet<&str> = joints.iter().map(|j: &JointSpec| j.child_link.as_str()).collect();
    let roots: Vec<String> =
        links.iter().map(|l: &LinkSpec| l.name.clone()).filter(|n| !child_links.contains(n.as_str())).collect();
    let root_link = match roots.len() {
        1 => roots[0].clone(),
        // leave the diagnosis (cycle, several roots) to validate()
        _ => roots.first().cloned().unwrap_or_default(),
    };

    let spec = ArticulationSpec { name, links, joints, root_link };
    spec.validate()?;
    if spec.links.is_empty() {
        return Err(ValidationError::NoRoot.into());
    }
    Ok(spec)
}

fn attr<'a>(node: Node<'a, '_>, key: &str) -> Result<&'a str, AssetError> {
    node.attribute(key).ok_or_else(|| {
        AssetError::Parse(format!("<{}> is missing attribute `{key}`", node.tag_name().name()))
    })
}

fn parse_f64(s: &str, what: &str) -> Result<f64, AssetError> {
    s.trim().parse::<f64>().map_err(|_| AssetError::Parse(format!("bad number `{s}` in {what}")))
}

fn parse_vec3(s: &str, what: &str) -> Result<Vec3<f64>, AssetError> {
    let parts: Vec<f64> = s.split_whitespace().map(|p| parse_f64(p, what)).collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(AssetError::Parse(format!("expected 3 numbers in {what}, got `{s}`"))),
    }
}

fn child<'a, 'i>(node: Node<'a, 'i>, tag: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.is_element() && c.tag_name().name() == tag)
}

fn parse_origin(node: Node) -> Result<Transform<f64>, AssetError> {
    let Some(o) = child(node, "origin") else {
        return Ok(Transform::identity());
    };
    let xyz = o.attribute("xyz").map(|s| parse_vec3(s, "origin xyz")).transpose()?.unwrap_or_default();
    let rpy = o.attribute("rpy").map(|s| parse_vec3(s, "origin rpy")).transpose()?.unwrap_or_default();
    Ok(Transform::new(Quat::from_rpy(rpy.x, rpy.y, rpy.z), xyz))
}

fn parse_link(node: Node) -> Result<LinkSpec, AssetError> {
    let name = attr(node, "name")?.to_string();
    let inertial = match child(node, "inertial") {
        Some(inode) => {
            let frame = parse_origin(inode)?;
            let mass = child(inode, "mass")
                .map(|m| attr(m, "value").and_then(|v| parse_f64(v, "mass")))
                .transpose()?
                .unwrap_or(0.0);
            let inertia = match child(inode, "inertia") {
                Some(i) => {
                    let g = |k: &str| i.attribute(k).map(|v| parse_f64(v, "inertia")).transpose().map(|v| v.unwrap_or(0.0));
                    let (ixx, ixy, ixz, iyy, iyz, izz) = (g("ixx")?, g("ixy")?, g("ixz")?, g("iyy")?, g("iyz")?, g("izz")?);
                    Mat3::from_rows([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
                }
                None => Mat3::zeros(),
            };
            SpatialInertia { mass, com: Vec3::zeros(), inertia }.transformed(&frame)
        }
        None => default_inertial(),
    };
    let mut collision = Vec::new();
    for c in node.children().filter(|c| c.is_element() && c.tag_name().name() == "collision") {
        let origin = parse_origin(c)?;
        let g = child(c, "geometry").ok_or_else(|| AssetError::Parse(format!("link `{name}`: collision without geometry")))?;
        let shape = g
            .children()
            .find(Node::is_element)
            .ok_or_else(|| AssetError::Parse(format!("link `{name}`: empty geometry")))?;
        let geometry = match shape.tag_name().name() {
            "box" => Geometry::Box { half_extents: parse_vec3(attr(shape, "size")?, "box size")? * 0.5 },
            "sphere" => Geometry::Sphere { radius: parse_f64(attr(shape, "radius")?, "sphere radius")? },
            "cylinder" => Geometry::Cylinder {
                radius: parse_f64(attr(shape, "radius")?, "cylinder radius")?,
                half_length: 0.5 * parse_f64(attr(shape, "length")?, "cylinder length")?,
            },
            other => {
                return Err(AssetError::UnsupportedElement(format!(
                    "link `{name}`: <{other}> collision geometry (only box, sphere, cylinder primitives are simulated)"
                )))
            }
        };
        collision.push(CollisionShape { geometry, origin });
    }
    Ok(LinkSpec { name, inertial, collision, semantic_label: String::new() })
}

fn parse_joint(node: Node) -> Result<JointSpec, AssetError> {
    let name = attr(node, "name")?.to_string();
    let ty = attr(node, "type")?;
    let kind = match ty {
        "revolute" | "continuous" => JointKind::Hinge,
        "prismatic" => JointKind::Slider,
        "fixed" => JointKind::Fixed,
        other => return Err(AssetError::UnsupportedElement(format!("joint `{name}`: type `{other}`"))),
    };
    let parent = attr(child(node, "parent").ok_or_else(|| AssetError::Parse(format!("joint `{name}` has no parent")))?, "link")?;
    let child_link = attr(child(node, "child").ok_or_else(|| AssetError::Parse(format!("joint `{name}` has no child")))?, "link")?;
    let mut j = JointSpec::new(&name, kind, parent, child_link);
    j.origin = parse_origin(node)?;
    if let Some(a) = child(node, "axis") {
        let raw = parse_vec3(attr(a, "xyz")?, "axis")?;
        j.axis = raw.try_normalize().ok_or_else(|| ValidationError::NonUnitAxis(name.clone()))?;
    }
    if let Some(l) = child(node, "limit") {
        let get = |k: &str| l.attribute(k).map(|v| parse_f64(v, "limit")).transpose();
        j.limit_lower = get("lower")?.unwrap_or(0.0);
        j.limit_upper = get("upper")?.unwrap_or(0.0);
        j.effort_limit = match get("effort")? {
            Some(e) if e > 0.0 => e,
            _ => DEFAULT_EFFORT_LIMIT,
        };
    }
    if ty == "continuous" {
        j.limit_lower = -CONTINUOUS_LIMIT;
        j.limit_upper = CONTINUOUS_LIMIT;
    }
    if kind == JointKind::Fixed {
        j.limit_lower = 0.0;
        j.limit_upper = 0.0;
    }
    if let Some(d) = child(node, "dynamics") {
        j.damping = d.attribute("damping").map(|v| parse_f64(v, "damping")).transpose()?.unwrap_or(0.0);
        j.friction = d.attribute("friction").map(|v| parse_f64(v, "friction")).transpose()?.unwrap_or(0.0);
    }
    Ok(j)
}

fn fmt_vec(v: &Vec3<f64>) -> String {
    format!("{} {} {}", v.x, v.y, v.z)
}

fn fmt_origin(t: &Transform<f64>) -> String {
    let (r, p, y) = t.rotation.to_rpy();
    format!("<origin xyz=\"{}\" rpy=\"{} {} {}\"/>", fmt_vec(&t.translation), r, p, y)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes `spec` as URDF. Screw joints are written as revolute joints and
/// semantic labels are dropped; [`super::mobility_sidecar_for`] carries both.
pub fn write_urdf(spec: &ArticulationSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\"?>");
    let _ = writeln!(out, "<robot name=\"{}\">", escape(&spec.name));
    for l in &spec.links {
        let _ = writeln!(out, "  <link name=\"{}\">", escape(&l.name));
        let i = &l.inertial;
        let m = i.inertia.rows;
        let _ = writeln!(out, "    <inertial>");
        let _ = writeln!(out, "      <origin xyz=\"{}\" rpy=\"0 0 0\"/>", fmt_vec(&i.com));
        let _ = writeln!(out, "      <mass value=\"{}\"/>", i.mass);
        let _ = writeln!(
            out,
            "      <inertia ixx=\"{}\" ixy=\"{}\" ixz=\"{}\" iyy=\"{}\" iyz=\"{}\" izz=\"{}\"/>",
            m[0][0], m[0][1], m[0][2], m[1][1], m[1][2], m[2][2]
        );
        let _ = writeln!(out, "    </inertial>");
        for c in &l.collision {
            let _ = writeln!(out, "    <collision>");
            let _ = writeln!(out, "      {}", fmt_origin(&c.origin));
            let geom = match &c.geometry {
                Geometry::Box { half_extents } => format!("<box size=\"{}\"/>", fmt_vec(&(*half_extents * 2.0))),
                Geometry::Sphere { radius } => format!("<sphere radius=\"{radius}\"/>"),
                Geometry::Cylinder { radius, half_length } => {
                    format!("<cylinder radius=\"{radius}\" length=\"{}\"/>", 2.0 * half_length)
                }
            };
            let _ = writeln!(out, "      <geometry>{geom}</geometry>");
            let _ = writeln!(out, "    </collision>");
        }
        let _ = writeln!(out, "  </link>");
    }
    for j in &spec.joints {
        let ty = match j.kind {
            JointKind::Fixed => "fixed",
            JointKind::Hinge | JointKind::Screw => "revolute",
            JointKind::Slider => "prismatic",
        };
        let _ = writeln!(out, "  <joint name=\"{}\" type=\"{ty}\">", escape(&j.name));
        let _ = writeln!(out, "    <parent link=\"{}\"/>", escape(&j.parent_link));
        let _ = writeln!(out, "    <child link=\"{}\"/>", escape(&j.child_link));
        let _ = writeln!(out, "    {}", fmt_origin(&j.origin));
        let _ = writeln!(out, "    <axis xyz=\"{}\"/>", fmt_vec(&j.axis));
        let _ = writeln!(
            out,
            "    <limit lower=\"{}\" upper=\"{}\" effort=\"{}\" velocity=\"0\"/>",
            j.limit_lower, j.limit_upper, j.effort_limit
        );
        let _ = writeln!(out, "    <dynamics damping=\"{}\" friction=\"{}\"/>", j.damping, j.friction);
        let _ = writeln!(out, "  </joint>");
    }
    let _ = writeln!(out, "</robot>");
    out
}
