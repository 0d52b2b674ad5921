//! Manhattan-frame estimation from normal statistics and snap rectification.

use crate::error::{GeomError, Result};
use crate::maps::NormalMap;
use crate::vec3::{cross, dot, norm, normalize, scale, Vec3};

pub const MIN_VALID_PIXELS: usize = 100;
const BIN_DEG: f64 = 10.0;

/// Rotation whose columns are the three dominant scene axes.
#[derive(Debug, Clone, Copy)]
pub struct ManhattanFrame {
    pub axes: [Vec3; 3],
}

impl ManhattanFrame {
    pub fn identity() -> Self {
        Self { axes: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn determinant(&self) -> f64 {
        dot(self.axes[0], cross(self.axes[1], self.axes[2]))
    }

    /// The six signed axes, in a fixed order (+a1, -a1, +a2, -a2, +a3, -a3).
    pub fn signed_axes(&self) -> [Vec3; 6] {
        [
            self.axes[0],
            scale(self.axes[0], -1.0),
            self.axes[1],
            scale(self.axes[1], -1.0),
            self.axes[2],
            scale(self.axes[2], -1.0),
        ]
    }
}

/// 10-degree latitude/longitude binning of the direction sphere.
fn bin_of(n: Vec3) -> (usize, usize) {
    let azim = n[1].atan2(n[0]).to_degrees().rem_euclid(360.0);
    let incl = n[2].clamp(-1.0, 1.0).acos().to_degrees();
    let a = ((azim / BIN_DEG) as usize).min(35);
    let i = ((incl / BIN_DEG) as usize).min(17);
    (a, i)
}

/// Greedy mode finding: densest 10-degree bin gives axis 1; the densest bin
/// within 10 degrees of orthogonal to it gives axis 2; axis 3 is the cross
/// product. Result is orthonormal with determinant +1.
pub fn estimate_manhattan_frame(normals: &NormalMap) -> Result<ManhattanFrame> {
    let valid: Vec<Vec3> = normals.iter_valid().map(|(_, _, n)| n).collect();
    if valid.len() < MIN_VALID_PIXELS {
        return Err(GeomError::TooFewValidPixels { got: valid.len(), need: MIN_VALID_PIXELS });
    }

    let mut counts = [[0usize; 18]; 36];
    let mut sums = [[[0.0f64; 3]; 18]; 36];
    for n in &valid {
        let (a, i) = bin_of(*n);
        counts[a][i] += 1;
        for k in 0..3 {
            sums[a][i][k] += n[k];
        }
    }

    let mut best = (0usize, 0usize);
    let mut best_count = 0usize;
    for a in 0..36 {
        for i in 0..18 {
            if counts[a][i] > best_count {
                best_count = counts[a][i];
                best = (a, i);
            }
        }
    }
    let axis1 = normalize(sums[best.0][best.1]);

    // second axis: densest bin whose mean direction is within 10 degrees of
    // orthogonal to axis1
    let mut second: Option<Vec3> = None;
    let mut second_count = 0usize;
    let limit = (90.0f64 - BIN_DEG).to_radians().cos();
    for a in 0..36 {
        for i in 0..18 {
            if counts[a][i] == 0 || (a, i) == best {
                continue;
            }
            let dir = normalize(sums[a][i]);
            if dot(dir, axis1).abs() <= limit && counts[a][i] > second_count {
                second_count = counts[a][i];
                second = Some(dir);
            }
        }
    }
    let raw2 = second.ok_or_else(|| {
        GeomError::Parameter("no orthogonal direction cluster found".into())
    })?;

    // Gram-Schmidt then cross for an exactly right-handed orthonormal frame
    let mut axis2 = [
        raw2[0] - dot(raw2, axis1) * axis1[0],
        raw2[1] - dot(raw2, axis1) * axis1[1],
        raw2[2] - dot(raw2, axis1) * axis1[2],
    ];
    if norm(axis2) < 1e-9 {
        return Err(GeomError::Parameter("degenerate second axis".into()));
    }
    axis2 = normalize(axis2);
    let axis3 = cross(axis1, axis2);
    Ok(ManhattanFrame { axes: [axis1, axis2, axis3] })
}

/// Replace each valid normal by the nearest of the six signed frame axes.
pub fn rectify_normals(normals: &NormalMap, frame: &ManhattanFrame) -> NormalMap {
    let mut out = NormalMap::new_invalid(normals.width, normals.height);
    let axes = frame.signed_axes();
    for (x, y, n) in normals.iter_valid() {
        let mut best = axes[0];
        let mut best_dot = dot(n, axes[0]);
        for axis in &axes[1..] {
            let d = dot(n, *axis);
            if d > best_dot {
                best_dot = d;
                best = *axis;
            }
        }
        out.set(x, y, best);
    }
    out
}
