//! Lambertian shading of rendered views, giving the pipeline a synthetic RGB
//! image stream.

use crate::camera::{Camera, ViewPose};
use crate::error::{GeomError, Result};
use crate::maps::{DepthMap, Image, NormalMap};
use crate::mesh::TriMesh;
use crate::raycast::render_view;
use crate::vec3::{dot, norm, Vec3};

pub const AMBIENT: f64 = 0.2;

/// Fixed palette indexed by style family; values keep diffuse + ambient
/// below and above the clamp so families stay distinguishable.
const PALETTE: [[f64; 3]; 8] = [
    [0.85, 0.45, 0.30],
    [0.35, 0.60, 0.80],
    [0.55, 0.75, 0.35],
    [0.75, 0.35, 0.65],
    [0.80, 0.70, 0.30],
    [0.40, 0.40, 0.80],
    [0.30, 0.70, 0.65],
    [0.70, 0.50, 0.50],
];

pub fn albedo(style_family: u32) -> [f64; 3] {
    PALETTE[style_family as usize % PALETTE.len()]
}

/// Shade an already-rendered normal map. `light_dir` is the unit propagation
/// direction of the light in camera space; a surface facing straight into the
/// light (n = -light_dir) is brightest.
pub fn shade_normals(normals: &NormalMap, albedo: [f64; 3], light_dir: Vec3) -> Result<Image> {
    if (norm(light_dir) - 1.0).abs() > 1e-6 {
        return Err(GeomError::Parameter("light_dir must be unit length".into()));
    }
    let mut img = Image::filled(normals.width, normals.height, [0, 0, 0]);
    for (x, y, n) in normals.iter_valid() {
        let diffuse = (-dot(n, light_dir)).max(0.0);
        let mut c = [0u8; 3];
        for k in 0..3 {
            let v = (diffuse * albedo[k] + AMBIENT) * 255.0;
            c[k] = v.round().clamp(0.0, 255.0) as u8;
        }
        img.set(x, y, c);
    }
    Ok(img)
}

/// Render + shade in one call; returns the image, its coverage mask and the
/// underlying maps.
pub fn shade_view(
    mesh: &TriMesh,
    pose: &ViewPose,
    cam: &Camera,
    light_dir: Vec3,
) -> Result<(Image, Vec<bool>, DepthMap, NormalMap)> {
    let (depth, normals) = render_view(mesh, pose, cam);
    let img = shade_normals(&normals, albedo(mesh.style_family), light_dir)?;
    let mask = depth.raw_valid().to_vec();
    Ok((img, mask, depth, normals))
}
