//! Ray-cast renderer producing per-pixel depth and camera-space normals.
//!
//! Triangles are transformed into camera space once per view; rays then start
//! at the origin, so the nearest hit's z is directly the depth along the
//! camera axis. Each triangle only visits the pixels under its screen
//! bounding box.

use crate::camera::{CamFrame, Camera, ViewPose};
use crate::maps::{DepthMap, NormalMap};
use crate::mesh::TriMesh;
use crate::vec3::{cross, dot, normalize, scale, Vec3};

const T_EPS: f64 = 1e-9;
const DET_EPS: f64 = 1e-12;
/// Two hits within this slack (relative) count as a tie and are resolved by
/// normal ordering, keeping the result independent of triangle order.
const TIE_EPS: f64 = 1e-9;

/// Möller-Trumbore from the origin along unit direction `d`.
/// Returns the ray parameter t of the hit, boundary-inclusive.
#[inline]
fn intersect(d: Vec3, v0: Vec3, v1: Vec3, v2: Vec3) -> Option<f64> {
    let e1 = [v1[0] - v0[0], v1[1] - v0[1], v1[2] - v0[2]];
    let e2 = [v2[0] - v0[0], v2[1] - v0[1], v2[2] - v0[2]];
    let p = cross(d, e2);
    let det = dot(e1, p);
    if det.abs() < DET_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let tv = [-v0[0], -v0[1], -v0[2]];
    let u = dot(tv, p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = cross(tv, e1);
    let v = dot(d, q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = dot(e2, q) * inv;
    (t > T_EPS).then_some(t)
}

/// Render one view to a depth map (distance along the camera axis) and a
/// camera-space normal map. Normals are face normals, sign-flipped per pixel
/// so n . ray < 0; both maps share one validity mask.
pub fn render_view(mesh: &TriMesh, pose: &ViewPose, cam: &Camera) -> (DepthMap, NormalMap) {
    let frame = CamFrame::from_pose(pose);
    let k = cam.intrinsics();
    let (w, h) = (cam.width, cam.height);

    let verts: Vec<Vec3> = mesh.vertices.iter().map(|&v| frame.point_to_camera(v)).collect();

    // cache unit rays per pixel (shared across triangles)
    let rays: Vec<Vec3> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| k.pixel_ray(x, y))
        .collect();

    let mut best_t = vec![f64::INFINITY; w * h];
    let mut best_n = vec![[0.0f64; 3]; w * h];

    for tri in &mesh.triangles {
        let (v0, v1, v2) = (verts[tri[0]], verts[tri[1]], verts[tri[2]]);
        let n_face = normalize(cross(
            [v1[0] - v0[0], v1[1] - v0[1], v1[2] - v0[2]],
            [v2[0] - v0[0], v2[1] - v0[1], v2[2] - v0[2]],
        ));

        // screen-space bounding box; anything near/behind the image plane
        // falls back to the full frame
        let (mut x0, mut y0, mut x1, mut y1) = (0usize, 0usize, w - 1, h - 1);
        if v0[2] > T_EPS && v1[2] > T_EPS && v2[2] > T_EPS {
            let (mut fx0, mut fy0) = (f64::INFINITY, f64::INFINITY);
            let (mut fx1, mut fy1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for v in [v0, v1, v2] {
                let sx = v[0] / v[2] * k.fx + k.cx;
                let sy = v[1] / v[2] * k.fy + k.cy;
                fx0 = fx0.min(sx);
                fy0 = fy0.min(sy);
                fx1 = fx1.max(sx);
                fy1 = fy1.max(sy);
            }
            if fx1 < 0.0 || fy1 < 0.0 || fx0 > w as f64 || fy0 > h as f64 {
                continue;
            }
            x0 = (fx0 - 1.0).max(0.0) as usize;
            y0 = (fy0 - 1.0).max(0.0) as usize;
            x1 = (fx1 + 1.0).min((w - 1) as f64) as usize;
            y1 = (fy1 + 1.0).min((h - 1) as f64) as usize;
        }

        for y in y0..=y1 {
            for x in x0..=x1 {
                let i = y * w + x;
                let d = rays[i];
                let Some(t) = intersect(d, v0, v1, v2) else { continue };
                let depth = t * d[2];
                let mut n = n_face;
                if dot(n, d) > 0.0 {
                    n = scale(n, -1.0);
                }
                let tie = TIE_EPS * depth.max(1.0);
                if depth < best_t[i] - tie {
                    best_t[i] = depth;
                    best_n[i] = n;
                } else if depth <= best_t[i] + tie && lex_less(n, best_n[i]) {
                    best_t[i] = best_t[i].min(depth);
                    best_n[i] = n;
                }
            }
        }
    }

    let mut depth_map = DepthMap::new_invalid(w, h);
    let mut normal_map = NormalMap::new_invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if best_t[i].is_finite() {
                depth_map.set(x, y, best_t[i]);
                normal_map.set(x, y, best_n[i]);
            }
        }
    }
    (depth_map, normal_map)
}

#[inline]
fn lex_less(a: Vec3, b: Vec3) -> bool {
    for i in 0..3 {
        if a[i] < b[i] {
            return true;
        }
        if a[i] > b[i] {
            return false;
        }
    }
    false
}

/// Foreground mask of a rendered view (pixels that hit the model).
pub fn coverage_mask(depth: &DepthMap) -> Vec<bool> {
    depth.raw_valid().to_vec()
}
