//! Procedural primitives: axis-aligned boxes (the building block for the
//! synthetic furniture) and an icosphere for curvature tests.

use crate::mesh::TriMesh;
use crate::vec3::{normalize, Vec3};

/// Append the 12 triangles of an axis-aligned box, outward-facing winding.
pub fn append_box(vertices: &mut Vec<Vec3>, triangles: &mut Vec<[usize; 3]>, center: Vec3, half: Vec3) {
    let base = vertices.len();
    for &dz in &[-1.0, 1.0] {
        for &dy in &[-1.0, 1.0] {
            for &dx in &[-1.0, 1.0] {
                vertices.push([
                    center[0] + dx * half[0],
                    center[1] + dy * half[1],
                    center[2] + dz * half[2],
                ]);
            }
        }
    }
    // indices into the corner cube: bit 0 = +x, bit 1 = +y, bit 2 = +z
    const FACES: [[usize; 4]; 6] = [
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
    ];
    for f in FACES {
        triangles.push([base + f[0], base + f[1], base + f[2]]);
        triangles.push([base + f[0], base + f[2], base + f[3]]);
    }
}

/// Axis-aligned unit cube centered at the origin.
pub fn unit_cube() -> TriMesh {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    append_box(&mut vertices, &mut triangles, [0.0; 3], [0.5; 3]);
    TriMesh {
        vertices,
        triangles,
        model_id: "cube".into(),
        label: "cube".into(),
        style_family: 0,
    }
}

/// Icosahedron subdivided `subdivisions` times, vertices projected to the
/// sphere of radius 0.5 (unit extent, matching normalized meshes).
pub fn icosphere(subdivisions: usize) -> TriMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize)
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints = std::collections::HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mids = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[e] = *midpoints.entry(key).or_insert_with(|| {
                    let m = normalize([
                        (vertices[a][0] + vertices[b][0]) / 2.0,
                        (vertices[a][1] + vertices[b][1]) / 2.0,
                        (vertices[a][2] + vertices[b][2]) / 2.0,
                    ]);
                    vertices.push(m);
                    vertices.len() - 1
                });
            }
            next.push([tri[0], mids[0], mids[2]]);
            next.push([tri[1], mids[1], mids[0]]);
            next.push([tri[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        triangles = next;
    }

    for v in &mut vertices {
        *v = [v[0] * 0.5, v[1] * 0.5, v[2] * 0.5];
    }
    TriMesh {
        vertices,
        triangles,
        model_id: "icosphere".into(),
        label: "sphere".into(),
        style_family: 0,
    }
}
