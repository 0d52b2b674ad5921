//! Wavefront OBJ subset loader and triangle mesh container.

use crate::error::{GeomError, Result};
use crate::vec3::{cross, norm, sub, Vec3};
use std::fmt::Write as _;

pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub model_id: String,
    pub label: String,
    pub style_family: u32,
}

impl TriMesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let e1 = sub(self.vertices[b], self.vertices[a]);
        let e2 = sub(self.vertices[c], self.vertices[a]);
        norm(cross(e1, e2)) * 0.5
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Recenter to the bounding-box center and scale the largest extent to 1.
    /// Already-normalized meshes are left bitwise untouched so that a
    /// write/load cycle is stable.
    pub fn normalize(&mut self) -> Result<()> {
        let (lo, hi) = self.bounds();
        let center = [
            (lo[0] + hi[0]) * 0.5,
            (lo[1] + hi[1]) * 0.5,
            (lo[2] + hi[2]) * 0.5,
        ];
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(hi[2] - lo[2]);
        if !extent.is_finite() || extent < 1e-12 {
            return Err(GeomError::Mesh(format!("degenerate extent {extent}")));
        }
        let centered = center.iter().all(|c| c.abs() < 1e-7);
        if centered && (extent - 1.0).abs() < 1e-7 {
            return Ok(());
        }
        let inv = 1.0 / extent;
        for v in &mut self.vertices {
            for k in 0..3 {
                v[k] = (v[k] - center[k]) * inv;
            }
        }
        Ok(())
    }
}

/// Parse the "v"/"f" subset of Wavefront OBJ. Faces with more than three
/// indices are fan-triangulated; zero-area triangles are dropped. The result
/// is normalized (unit max extent, centered).
pub fn load_obj(text: &str) -> Result<TriMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<Vec<usize>> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap();
        match keyword {
            "v" => {
                let coords: Vec<&str> = parts.collect();
                if coords.len() < 3 {
                    return Err(GeomError::Obj(format!(
                        "line {}: vertex needs 3 coordinates",
                        lineno + 1
                    )));
                }
                let mut v = [0.0; 3];
                for (k, c) in coords[..3].iter().enumerate() {
                    v[k] = c.parse::<f64>().map_err(|_| {
                        GeomError::Obj(format!("line {}: bad coordinate {c:?}", lineno + 1))
                    })?;
                    if !v[k].is_finite() {
                        return Err(GeomError::Obj(format!(
                            "line {}: non-finite coordinate",
                            lineno + 1
                        )));
                    }
                }
                vertices.push(v);
            }
            "f" => {
                let mut idx = Vec::new();
                for spec in parts {
                    // accept "3", "3/1", "3//2", "3/1/2"
                    let first = spec.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| {
                        GeomError::Obj(format!("line {}: bad face index {spec:?}", lineno + 1))
                    })?;
                    if i < 1 {
                        return Err(GeomError::Obj(format!(
                            "line {}: face index {i} (OBJ indices are 1-based)",
                            lineno + 1
                        )));
                    }
                    idx.push((i - 1) as usize);
                }
                if idx.len() < 3 {
                    return Err(GeomError::Obj(format!(
                        "line {}: face needs at least 3 indices",
                        lineno + 1
                    )));
                }
                faces.push(idx);
            }
            // common OBJ keywords we deliberately ignore
            "vn" | "vt" | "vp" | "o" | "g" | "s" | "l" | "mtllib" | "usemtl" => {}
            _ => {}
        }
    }

    let mut mesh = TriMesh {
        vertices,
        triangles: Vec::new(),
        model_id: String::new(),
        label: String::new(),
        style_family: 0,
    };
    for idx in faces {
        for &i in &idx {
            if i >= mesh.vertices.len() {
                return Err(GeomError::Obj(format!(
                    "face index {} out of range ({} vertices)",
                    i + 1,
                    mesh.vertices.len()
                )));
            }
        }
        for k in 1..idx.len() - 1 {
            mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    // drop degenerate triangles rather than failing the whole mesh
    let verts = &mesh.vertices;
    mesh.triangles.retain(|&[a, b, c]| {
        let e1 = sub(verts[b], verts[a]);
        let e2 = sub(verts[c], verts[a]);
        norm(cross(e1, e2)) * 0.5 > MIN_TRIANGLE_AREA
    });
    if mesh.vertices.is_empty() || mesh.triangles.is_empty() {
        return Err(GeomError::Obj("empty mesh".into()));
    }
    mesh.normalize()?;
    Ok(mesh)
}

/// Inverse of `load_obj` for already-normalized meshes: floats are printed
/// with Rust's shortest-roundtrip formatting, so load(write(m)) == m.
pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}
