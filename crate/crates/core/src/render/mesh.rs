//! Triangle meshes for the primitive shapes.

use crate::assets::Shape;
use crate::pose::Vec3;
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

const RING: usize = 16;
const CAP_RINGS: usize = 8;

/// Icosphere of radius 1 with two subdivisions (320 triangles).
pub fn unit_sphere() -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..2 {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a as usize] + vertices[b as usize]) / 2.0).normalize());
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    Mesh { vertices, triangles }
}

/// Box with half extents 1 (12 triangles).
pub fn unit_box() -> Mesh {
    let vertices = (0..8)
        .map(|i| Vec3::new(if i & 1 == 0 { -1.0 } else { 1.0 }, if i & 2 == 0 { -1.0 } else { 1.0 }, if i & 4 == 0 { -1.0 } else { 1.0 }))
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    Mesh { vertices, triangles }
}

fn ring(z: f64, r: f64) -> impl Iterator<Item = Vec3> {
    (0..RING).map(move |k| {
        let a = TAU * k as f64 / RING as f64;
        Vec3::new(r * a.cos(), r * a.sin(), z)
    })
}

/// Quad strip between two consecutive rings starting at `a` and `b`.
fn band(tris: &mut Vec<[u32; 3]>, a: u32, b: u32) {
    for k in 0..RING as u32 {
        let k1 = (k + 1) % RING as u32;
        tris.push([a + k, a + k1, b + k1]);
        tris.push([a + k, b + k1, b + k]);
    }
}

fn fan(tris: &mut Vec<[u32; 3]>, apex: u32, ring_start: u32) {
    for k in 0..RING as u32 {
        tris.push([apex, ring_start + k, ring_start + (k + 1) % RING as u32]);
    }
}

/// Cylinder of radius 1 spanning `z ∈ [-1, 1]` (64 triangles).
pub fn unit_cylinder() -> Mesh {
    let mut vertices: Vec<Vec3> = ring(-1.0, 1.0).chain(ring(1.0, 1.0)).collect();
    vertices.push(Vec3::new(0.0, 0.0, -1.0));
    vertices.push(Vec3::new(0.0, 0.0, 1.0));
    let mut triangles = Vec::new();
    band(&mut triangles, 0, RING as u32);
    fan(&mut triangles, 2 * RING as u32, 0);
    fan(&mut triangles, 2 * RING as u32 + 1, RING as u32);
    Mesh { vertices, triangles }
}

/// Capsule along z (512 triangles). Not scalable, so built per size.
pub fn capsule(radius: f64, half_length: f64) -> Mesh {
    let mut vertices = vec![Vec3::new(0.0, 0.0, -half_length - radius)];
    // rings from the bottom pole up to the equator, then mirrored above
    for i in 1..=CAP_RINGS {
        let phi = PI / 2.0 * (1.0 - i as f64 / CAP_RINGS as f64);
        vertices.extend(ring(-half_length - radius * phi.sin(), radius * phi.cos()));
    }
    for i in 0..CAP_RINGS {
        let phi = PI / 2.0 * i as f64 / CAP_RINGS as f64;
        vertices.extend(ring(half_length + radius * phi.sin(), radius * phi.cos()));
    }
    vertices.push(Vec3::new(0.0, 0.0, half_length + radius));
    let mut triangles = Vec::new();
    fan(&mut triangles, 0, 1);
    let rings = 2 * CAP_RINGS as u32;
    for r in 0..rings - 1 {
        band(&mut triangles, 1 + r * RING as u32, 1 + (r + 1) * RING as u32);
    }
    fan(&mut triangles, vertices.len() as u32 - 1, 1 + (rings - 1) * RING as u32);
    Mesh { vertices, triangles }
}

/// Mesh plus the per-axis scale that maps it onto a shape.
#[derive(Debug, Clone)]
pub struct ShapeMesh {
    pub mesh: Arc<Mesh>,
    pub scale: Vec3,
}

/// Meshes tessellated once and reused for every instance.
#[derive(Debug, Clone)]
pub struct MeshCache {
    sphere: Arc<Mesh>,
    cube: Arc<Mesh>,
    cylinder: Arc<Mesh>,
    capsules: HashMap<(u64, u64), Arc<Mesh>>,
}

impl Default for MeshCache {
    fn default() -> Self {
        Self {
            sphere: Arc::new(unit_sphere()),
            cube: Arc::new(unit_box()),
            cylinder: Arc::new(unit_cylinder()),
            capsules: HashMap::new(),
        }
    }
}

impl MeshCache {
    pub fn prepare(&mut self, shape: &Shape) {
        if let Shape::Capsule { radius, half_length } = *shape {
            self.capsules
                .entry((radius.to_bits(), half_length.to_bits()))
                .or_insert_with(|| Arc::new(capsule(radius, half_length)));
        }
    }

    pub fn get(&self, shape: &Shape) -> ShapeMesh {
        match *shape {
            Shape::Sphere { radius } => ShapeMesh { mesh: self.sphere.clone(), scale: Vec3::repeat(radius) },
            Shape::Box { half_extents: h } => ShapeMesh { mesh: self.cube.clone(), scale: Vec3::new(h[0], h[1], h[2]) },
            Shape::Cylinder { radius, half_length } => {
                ShapeMesh { mesh: self.cylinder.clone(), scale: Vec3::new(radius, radius, half_length) }
            }
            Shape::Capsule { radius, half_length } => {
                let mesh = self
                    .capsules
                    .get(&(radius.to_bits(), half_length.to_bits()))
                    .cloned()
                    .unwrap_or_else(|| Arc::new(capsule(radius, half_length)));
                ShapeMesh { mesh, scale: Vec3::repeat(1.0) }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_counts() {
        assert_eq!(unit_sphere().triangles.len(), 320);
        assert_eq!(unit_box().triangles.len(), 12);
        assert_eq!(capsule(0.1, 0.2).triangles.len(), 512);
        assert_eq!(unit_cylinder().triangles.len(), 64);
    }

    #[test]
    fn vertices_lie_on_surfaces() {
        assert!(unit_sphere().vertices.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        for v in capsule(0.1, 0.2).vertices {
            let axis = Vec3::new(0.0, 0.0, v.z.clamp(-0.2, 0.2));
            assert!(((v - axis).norm() - 0.1).abs() < 1e-12);
        }
        let m = unit_box();
        assert!(m.triangles.iter().flatten().all(|&i| (i as usize) < m.vertices.len()));
    }
}
