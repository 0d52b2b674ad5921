//! Viewpoint sampling over the azimuth/elevation grid.

use crate::camera::ViewPose;
use crate::error::{GeomError, Result};

pub const DEFAULT_ELEVATIONS: [f64; 4] = [0.0, 10.0, 20.0, 30.0];

/// `elevations` must have one entry per elevation ring; azimuths are the
/// n_azim multiples of 360/n_azim. Order: elevation-major, azimuth ascending.
pub fn sample_views(elevations: &[f64], n_azim: usize, radius: f64) -> Result<Vec<ViewPose>> {
    if n_azim == 0 || 360 % n_azim != 0 {
        return Err(GeomError::Parameter(format!("n_azim {n_azim} must divide 360")));
    }
    let step = (360 / n_azim) as f64;
    let mut out = Vec::with_capacity(elevations.len() * n_azim);
    for &e in elevations {
        for k in 0..n_azim {
            out.push(ViewPose::new(k as f64 * step, e, radius)?);
        }
    }
    Ok(out)
}
