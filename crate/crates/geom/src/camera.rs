//! Viewpoints and the pinhole camera.
//!
//! World frame: z up, model centered at the origin. Camera frame: right-handed,
//! x right, y down, z forward (into the scene); a fronto-parallel face toward
//! the camera has normal (0,0,-1).

use crate::error::{GeomError, Result};
use crate::vec3::{cross, dot, normalize, scale, Vec3};

pub const DEFAULT_FOV_DEG: f64 = 50.0;
pub const DEFAULT_RADIUS: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewPose {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub radius: f64,
}

impl ViewPose {
    pub fn new(azimuth_deg: f64, elevation_deg: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeomError::Parameter(format!("radius must be > 0, got {radius}")));
        }
        if !azimuth_deg.is_finite() || !elevation_deg.is_finite() {
            return Err(GeomError::Parameter("non-finite view angle".into()));
        }
        Ok(Self { azimuth_deg: azimuth_deg.rem_euclid(360.0), elevation_deg, radius })
    }

    /// Camera position on the view sphere around the origin.
    pub fn position(&self) -> Vec3 {
        let a = self.azimuth_deg.to_radians();
        let e = self.elevation_deg.to_radians();
        [
            self.radius * e.cos() * a.cos(),
            self.radius * e.cos() * a.sin(),
            self.radius * e.sin(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
}

impl Camera {
    pub fn new(width: usize, height: usize, fov_deg: f64) -> Result<Self> {
        if width < 8 || height < 8 {
            return Err(GeomError::Parameter(format!("image {width}x{height} below 8x8 minimum")));
        }
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(GeomError::Parameter(format!("fov {fov_deg} outside (0, 180)")));
        }
        Ok(Self { width, height, fov_deg })
    }

    /// Square pixels: fx = fy from the vertical field of view.
    pub fn intrinsics(&self) -> Intrinsics {
        let fy = (self.height as f64 / 2.0) / (self.fov_deg.to_radians() / 2.0).tan();
        Intrinsics {
            fx: fy,
            fy,
            cx: self.width as f64 / 2.0,
            cy: self.height as f64 / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeomError::Parameter(format!("focal lengths must be > 0: {fx}, {fy}")));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Camera-space ray direction through the center of pixel (px, py), unit.
    pub fn pixel_ray(&self, px: usize, py: usize) -> Vec3 {
        normalize([
            (px as f64 + 0.5 - self.cx) / self.fx,
            (py as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        ])
    }

    /// Back-project a pixel at depth d (distance along the camera axis).
    pub fn back_project(&self, px: usize, py: usize, d: f64) -> Vec3 {
        [
            (px as f64 + 0.5 - self.cx) / self.fx * d,
            (py as f64 + 0.5 - self.cy) / self.fy * d,
            d,
        ]
    }
}

/// Orthonormal camera basis in world coordinates.
#[derive(Debug, Clone, Copy)]
pub struct CamFrame {
    pub pos: Vec3,
    pub x: Vec3,
    pub y: Vec3,
    pub z: Vec3,
}

impl CamFrame {
    /// Looks at the origin with world +z as up. For (near-)vertical views the
    /// up hint falls back to world +y to keep the basis well defined.
    pub fn from_pose(pose: &ViewPose) -> Self {
        let pos = pose.position();
        let z = normalize(scale(pos, -1.0));
        let mut up = [0.0, 0.0, 1.0];
        let mut x = cross(z, up);
        if dot(x, x) < 1e-12 {
            up = [0.0, 1.0, 0.0];
            x = cross(z, up);
        }
        let x = normalize(x);
        let y = cross(z, x);
        Self { pos, x, y, z }
    }

    /// World direction of the camera-space vector v.
    pub fn to_world(&self, v: Vec3) -> Vec3 {
        [
            v[0] * self.x[0] + v[1] * self.y[0] + v[2] * self.z[0],
            v[0] * self.x[1] + v[1] * self.y[1] + v[2] * self.z[1],
            v[0] * self.x[2] + v[1] * self.y[2] + v[2] * self.z[2],
        ]
    }

    /// Rotate a world direction into camera space.
    pub fn to_camera(&self, v: Vec3) -> Vec3 {
        [dot(v, self.x), dot(v, self.y), dot(v, self.z)]
    }

    /// World point to camera coordinates (rotation + translation).
    pub fn point_to_camera(&self, p: Vec3) -> Vec3 {
        let d = [p[0] - self.pos[0], p[1] - self.pos[1], p[2] - self.pos[2]];
        self.to_camera(d)
    }
}
