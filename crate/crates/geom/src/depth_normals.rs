//! Normals from depth by local least-squares plane fitting.

use crate::camera::Intrinsics;
use crate::error::{GeomError, Result};
use crate::maps::{DepthMap, NormalMap};
use crate::vec3::{dot, normalize, scale, Vec3};
use nalgebra::{Matrix3, SymmetricEigen};

pub const MIN_NEIGHBORS: usize = 6;
pub const DEGENERACY_RATIO: f64 = 0.9;

/// Mask of finite, strictly positive depths.
pub fn valid_mask(depth: &DepthMap) -> Vec<bool> {
    let mut mask = vec![false; depth.width * depth.height];
    for y in 0..depth.height {
        for x in 0..depth.width {
            mask[y * depth.width + x] = depth.get(x, y).is_some();
        }
    }
    mask
}

/// Fit a plane to the valid back-projected neighbors in a `window` x `window`
/// patch around each pixel; the normal is the scatter matrix's smallest
/// eigenvector, oriented toward the camera. Pixels with fewer than 6 valid
/// neighbors, or whose two smallest eigenvalues are within a 0.9 ratio
/// (depth edges), come out invalid.
pub fn normals_from_depth(depth: &DepthMap, k: &Intrinsics, window: usize) -> Result<NormalMap> {
    if window < 3 || window % 2 == 0 {
        return Err(GeomError::Parameter(format!("window must be odd and >= 3, got {window}")));
    }
    let (w, h) = (depth.width, depth.height);
    let r = window / 2;

    // back-project every valid pixel once
    let mut points: Vec<Option<Vec3>> = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            if let Some(d) = depth.get(x, y) {
                points[y * w + x] = Some(k.back_project(x, y, d));
            }
        }
    }

    let mut out = NormalMap::new_invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            if depth.get(x, y).is_none() {
                continue;
            }
            let y0 = y.saturating_sub(r);
            let y1 = (y + r).min(h - 1);
            let x0 = x.saturating_sub(r);
            let x1 = (x + r).min(w - 1);

            let mut sum = [0.0f64; 3];
            let mut count = 0usize;
            for ny in y0..=y1 {
                for nx in x0..=x1 {
                    if let Some(p) = points[ny * w + nx] {
                        sum = [sum[0] + p[0], sum[1] + p[1], sum[2] + p[2]];
                        count += 1;
                    }
                }
            }
            if count < MIN_NEIGHBORS {
                continue;
            }
            let c = scale(sum, 1.0 / count as f64);
            let mut m = [[0.0f64; 3]; 3];
            for ny in y0..=y1 {
                for nx in x0..=x1 {
                    if let Some(p) = points[ny * w + nx] {
                        let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
                        for i in 0..3 {
                            for j in 0..3 {
                                m[i][j] += d[i] * d[j];
                            }
                        }
                    }
                }
            }
            let scatter = Matrix3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            );
            let eig = SymmetricEigen::new(scatter);
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let (l0, l1) = (eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]].max(0.0));
            if l1 < 1e-18 || l0 / l1 > DEGENERACY_RATIO {
                continue;
            }
            let col = eig.eigenvectors.column(order[0]);
            let mut n = normalize([col[0], col[1], col[2]]);
            let ray = k.pixel_ray(x, y);
            if dot(n, ray) > 0.0 {
                n = scale(n, -1.0);
            }
            out.set(x, y, n);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_depth(w: usize, h: usize, d: f64) -> DepthMap {
        let mut m = DepthMap::new_invalid(w, h);
        for y in 0..h {
            for x in 0..w {
                m.set(x, y, d);
            }
        }
        m
    }

    #[test]
    fn constant_depth_gives_fronto_parallel_normals() {
        let k = Intrinsics::new(60.0, 60.0, 16.0, 16.0).unwrap();
        let depth = flat_depth(32, 32, 2.0);
        let n = normals_from_depth(&depth, &k, 5).unwrap();
        for y in 4..28 {
            for x in 4..28 {
                let v = n.get(x, y).expect("interior pixel valid");
                assert!((v[0]).abs() < 1e-9, "{v:?}");
                assert!((v[1]).abs() < 1e-9);
                assert!((v[2] + 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ramp_recovers_analytic_plane_normal() {
        // plane z = z0 + 0.1 * X in camera coordinates; its normal is
        // (-0.1, 0, 1)/|..| flipped toward the camera
        let k = Intrinsics::new(80.0, 80.0, 20.0, 20.0).unwrap();
        let (w, h) = (40, 40);
        let mut depth = DepthMap::new_invalid(w, h);
        for y in 0..h {
            for x in 0..w {
                // solve z = z0 + 0.1 * (u * z) where u = (x + 0.5 - cx) / fx
                let u = (x as f64 + 0.5 - k.cx) / k.fx;
                let z = 2.0 / (1.0 - 0.1 * u);
                depth.set(x, y, z);
            }
        }
        let n = normals_from_depth(&depth, &k, 5).unwrap();
        let expect = normalize([0.1, 0.0, -1.0]);
        for y in 4..36 {
            for x in 4..36 {
                let v = n.get(x, y).expect("interior valid");
                let ang = crate::vec3::angle_deg(v, expect);
                assert!(ang < 0.1, "pixel ({x},{y}): {v:?} vs {expect:?}, {ang} deg");
            }
        }
    }

    #[test]
    fn isolated_pixel_has_too_few_neighbors() {
        let k = Intrinsics::new(60.0, 60.0, 8.0, 8.0).unwrap();
        let mut depth = DepthMap::new_invalid(16, 16);
        depth.set(8, 8, 2.0);
        let n = normals_from_depth(&depth, &k, 5).unwrap();
        assert_eq!(n.valid_count(), 0);
    }

    #[test]
    fn fully_invalid_window_stays_invalid() {
        let k = Intrinsics::new(60.0, 60.0, 8.0, 8.0).unwrap();
        let depth = DepthMap::new_invalid(16, 16);
        let n = normals_from_depth(&depth, &k, 5).unwrap();
        assert_eq!(n.valid_count(), 0);
    }

    #[test]
    fn window_validation() {
        let k = Intrinsics::new(60.0, 60.0, 8.0, 8.0).unwrap();
        let depth = flat_depth(16, 16, 1.0);
        assert!(normals_from_depth(&depth, &k, 4).is_err());
        assert!(normals_from_depth(&depth, &k, 1).is_err());
        assert!(normals_from_depth(&depth, &k, 3).is_ok());
    }

    #[test]
    fn valid_mask_matches_brute_force() {
        let mut depth = DepthMap::new_invalid(8, 8);
        depth.set(1, 1, 2.0);
        depth.set(2, 3, 0.5);
        depth.set(4, 4, f64::NAN);
        depth.set(5, 5, -3.0);
        let mask = valid_mask(&depth);
        let count = mask.iter().filter(|&&m| m).count();
        assert_eq!(count, 2);
        assert!(mask[1 * 8 + 1] && mask[3 * 8 + 2]);
        assert!(!mask[4 * 8 + 4] && !mask[5 * 8 + 5]);
    }
}
