//! Raster types shared by every stage of the pipeline.
//!
//! Intensities are stored as `f64` in `[0, 1]`. 8-bit inputs are divided by
//! 255 on load (see [`crate::io`]).

use crate::error::{Error, Result};

/// An RGB triple.
pub type Rgb = [f64; 3];

/// Normalized 3-channel raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<Rgb>,
}

impl Image {
    /// Builds an image from row-major pixel data. Every channel must lie in `[0, 1]`.
    pub fn new(width: usize, height: usize, data: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be non-zero"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} pixels for a {width}x{height} image, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|p| p.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return Err(Error::invalid(format!(
                "pixel {i} has a channel outside [0, 1]: {:?}",
                data[i]
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Builds an image by clamping every channel into `[0, 1]`. NaN maps to 0.
    pub fn from_clamped(width: usize, height: usize, mut data: Vec<Rgb>) -> Result<Self> {
        for p in &mut data {
            for c in p.iter_mut() {
                *c = clamp01(*c);
            }
        }
        Image::new(width, height, data)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image::from_clamped(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: Rgb) -> Result<Self> {
        Image::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn pixels(&self) -> &[Rgb] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.data[y * self.width + x]
    }

    pub fn try_get(&self, x: usize, y: usize) -> Result<Rgb> {
        if x >= self.width || y >= self.height {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.get(x, y))
    }

    pub fn into_pixels(self) -> Vec<Rgb> {
        self.data
    }

    /// Applies `f` to every pixel and clamps the result into `[0, 1]`.
    pub fn map(&self, f: impl Fn(Rgb) -> Rgb + Sync) -> Image {
        use rayon::prelude::*;
        let data = self
            .data
            .par_iter()
            .map(|&p| {
                let q = f(p);
                [clamp01(q[0]), clamp01(q[1]), clamp01(q[2])]
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn same_dims(&self, other: &Image) -> Result<()> {
        check_dims((self.width, self.height), (other.width, other.height))
    }
}

/// Per-pixel scalar field: transmission, depth, airlight magnitude, dark channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("map dimensions must be non-zero"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} values for a {width}x{height} map, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(ScalarMap {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0);
        ScalarMap {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        ScalarMap::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarMap {
        ScalarMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn matches(&self, img: &Image) -> Result<()> {
        check_dims((self.width, self.height), (img.width(), img.height()))
    }

    pub fn same_dims(&self, other: &ScalarMap) -> Result<()> {
        check_dims((self.width, self.height), (other.width, other.height))
    }
}

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            left_width: a.0,
            left_height: a.1,
            right_width: b.0,
            right_height: b.1,
        });
    }
    Ok(())
}

/// Point in the 5-D similarity space `(R, G, B, λX, λY)` with `X`, `Y`
/// normalized by image width and height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; 5]);

impl FeatureVector {
    pub fn rgb(&self) -> Rgb {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn spatial(&self) -> [f64; 2] {
        [self.0[3], self.0[4]]
    }

    pub fn distance_squared(&self, other: &FeatureVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Feature vector of pixel `(x, y)` under balance factor `lambda`.
pub fn to_feature_vector(img: &Image, x: usize, y: usize, lambda: f64) -> Result<FeatureVector> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let p = img.try_get(x, y)?;
    Ok(feature_unchecked(p, x, y, img.width(), img.height(), lambda))
}

#[inline]
pub(crate) fn feature_unchecked(
    p: Rgb,
    x: usize,
    y: usize,
    width: usize,
    height: usize,
    lambda: f64,
) -> FeatureVector {
    FeatureVector([
        p[0],
        p[1],
        p[2],
        lambda * x as f64 / width as f64,
        lambda * y as f64 / height as f64,
    ])
}

/// A rectangular window of the image. Bounds are half-open and always lie
/// inside the image; windows touching an edge are clipped, never padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchRef {
    pub center: (usize, usize),
    pub half_size: usize,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PatchRef {
    /// Square window of side `2 * half_size + 1` centered on `(cx, cy)`, clipped to the image.
    pub fn centered(cx: usize, cy: usize, half_size: usize, width: usize, height: usize) -> PatchRef {
        PatchRef {
            center: (cx, cy),
            half_size,
            x0: cx.saturating_sub(half_size),
            y0: cy.saturating_sub(half_size),
            x1: (cx + half_size + 1).min(width),
            y1: (cy + half_size + 1).min(height),
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn pixel_count(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    /// Row-major pixel coordinates inside the window.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..self.y1).flat_map(move |y| (self.x0..self.x1).map(move |x| (x, y)))
    }
}

/// Row-major tiling of the image by `size`-wide windows placed every `stride`
/// pixels. Every pixel is covered at least once; windows hanging over the
/// right or bottom edge are clipped.
pub fn iterate_patches(img: &Image, size: usize, stride: usize) -> Result<Vec<PatchRef>> {
    patch_grid(img.width(), img.height(), size, stride)
}

pub(crate) fn patch_grid(width: usize, height: usize, size: usize, stride: usize) -> Result<Vec<PatchRef>> {
    if size == 0 || size > width.min(height) {
        return Err(Error::config(format!(
            "patch size {size} must be in 1..={} for a {width}x{height} image",
            width.min(height)
        )));
    }
    if stride == 0 {
        return Err(Error::config("patch stride must be >= 1"));
    }
    let mut out = Vec::with_capacity(width.div_ceil(stride) * height.div_ceil(stride));
    for y0 in (0..height).step_by(stride) {
        for x0 in (0..width).step_by(stride) {
            let x1 = (x0 + size).min(width);
            let y1 = (y0 + size).min(height);
            out.push(PatchRef {
                center: ((x0 + x1 - 1) / 2, (y0 + y1 - 1) / 2),
                half_size: size / 2,
                x0,
                y0,
                x1,
                y1,
            });
        }
    }
    Ok(out)
}

/// Weighted RGB brightness with coefficients 0.2989, 0.5870, 0.1140.
#[inline]
pub fn luma(p: Rgb) -> f64 {
    0.2989 * p[0] + 0.5870 * p[1] + 0.1140 * p[2]
}

#[inline]
pub fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}
