//! Per-pixel map containers shared by the renderer, plane fitting, training
//! and evaluation.

use crate::error::{GeomError, Result};
use crate::vec3::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    depths: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depths: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = self.idx(x, y);
        self.valid[i].then(|| self.depths[i])
    }

    pub fn set(&mut self, x: usize, y: usize, depth: f64) {
        let i = self.idx(x, y);
        self.depths[i] = depth;
        self.valid[i] = depth.is_finite() && depth > 0.0;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.idx(x, y);
        self.valid[i] = false;
    }

    pub fn valid(&self, x: usize, y: usize) -> bool {
        self.valid[self.idx(x, y)]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn raw_depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn raw_valid(&self) -> &[bool] {
        &self.valid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    normals: Vec<Vec3>,
    valid: Vec<bool>,
}

impl NormalMap {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            normals: vec![[0.0; 3]; width * height],
            valid: vec![false; width * height],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<Vec3> {
        let i = self.idx(x, y);
        self.valid[i].then(|| self.normals[i])
    }

    pub fn set(&mut self, x: usize, y: usize, n: Vec3) {
        let i = self.idx(x, y);
        self.normals[i] = n;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.idx(x, y);
        self.valid[i] = false;
    }

    pub fn valid(&self, x: usize, y: usize) -> bool {
        self.valid[self.idx(x, y)]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn raw_normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn raw_valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, Vec3)> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width).filter_map(move |x| self.get(x, y).map(|n| (x, y, n)))
        })
    }
}

/// Axis-aligned pixel rectangle, origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn contains(&self, px: usize, py: usize) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.right() <= width && self.bottom() <= height
    }

    /// Intersect with the image rectangle; None if nothing remains.
    pub fn clamped(&self, width: usize, height: usize) -> Option<PixelBox> {
        let x1 = self.right().min(width);
        let y1 = self.bottom().min(height);
        if self.x >= x1 || self.y >= y1 {
            return None;
        }
        Some(PixelBox { x: self.x, y: self.y, w: x1 - self.x, h: y1 - self.y })
    }

    /// Grow by `frac` of the size on every side, clamped to the image.
    pub fn padded(&self, frac: f64, width: usize, height: usize) -> PixelBox {
        let px = (self.w as f64 * frac).round() as usize;
        let py = (self.h as f64 * frac).round() as usize;
        let x0 = self.x.saturating_sub(px);
        let y0 = self.y.saturating_sub(py);
        let x1 = (self.right() + px).min(width);
        let y1 = (self.bottom() + py).min(height);
        PixelBox { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }
}

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Self { width, height, pixels: vec![color; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[u8; 3]] {
        &mut self.pixels
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(GeomError::Dimension(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }
}

/// Foreground pixels from `render` where `mask` is set, `background` elsewhere.
pub fn composite_background(render: &Image, mask: &[bool], background: &Image) -> Result<Image> {
    if render.width != background.width || render.height != background.height {
        return Err(GeomError::Dimension(format!(
            "render {}x{} vs background {}x{}",
            render.width, render.height, background.width, background.height
        )));
    }
    if mask.len() != render.width * render.height {
        return Err(GeomError::Dimension("mask length".into()));
    }
    let pixels = render
        .pixels
        .iter()
        .zip(&background.pixels)
        .zip(mask)
        .map(|((&f, &b), &m)| if m { f } else { b })
        .collect();
    Ok(Image { width: render.width, height: render.height, pixels })
}
