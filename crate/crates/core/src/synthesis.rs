//! Synthetic hazy scenes with known ground truth.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::{parse_key_values, KeyValue};
use crate::error::{Error, Result};
use crate::image::{clamp01, Image, Rgb, ScalarMap};

/// Everything needed to render a hazy image.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub radiance: Image,
    pub depth: ScalarMap,
    pub beta: f64,
    pub airlight: Rgb,
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.depth.matches(&self.radiance)?;
        if self.depth.values().iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::invalid("depth must be non-negative"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.airlight.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::config(format!("airlight {:?} outside [0, 1]", self.airlight)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config(format!("sigma must be finite and >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// `t = exp(-β d)`.
pub fn transmission_from_depth(depth: &ScalarMap, beta: f64) -> Result<ScalarMap> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::config(format!("beta must be finite and >= 0, got {beta}")));
    }
    if depth.values().iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::invalid("depth must be non-negative"));
    }
    Ok(depth.map(|d| (-beta * d).exp()))
}

/// Hazy image, true transmission and true radiance of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub hazy: Image,
    pub transmission: ScalarMap,
    pub radiance: Image,
}

/// Composes `I = t J + (1 - t) A`, then adds noise.
pub fn synthesize_haze(scene: &SceneSpec) -> Result<Image> {
    Ok(synthesize(scene)?.hazy)
}

pub fn synthesize(scene: &SceneSpec) -> Result<SyntheticScene> {
    scene.validate()?;
    let t = transmission_from_depth(&scene.depth, scene.beta)?;
    let a = scene.airlight;
    let data = scene
        .radiance
        .pixels()
        .par_iter()
        .zip(t.values().par_iter())
        .map(|(j, &tx)| {
            [
                tx * j[0] + (1.0 - tx) * a[0],
                tx * j[1] + (1.0 - tx) * a[1],
                tx * j[2] + (1.0 - tx) * a[2],
            ]
        })
        .collect();
    let clean = Image::from_clamped(scene.radiance.width(), scene.radiance.height(), data)?;
    Ok(SyntheticScene {
        hazy: add_gaussian_noise(&clean, scene.noise_sigma, scene.noise_seed)?,
        transmission: t,
        radiance: scene.radiance.clone(),
    })
}

/// Independent zero-mean Gaussian noise per channel, clamped to `[0, 1]`.
///
/// Row `y` draws from ChaCha stream `y` of `seed`, so the result does not
/// depend on how rows are scheduled.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    Image::from_clamped(img.width(), img.height(), noisy_pixels(img, sigma, seed)?)
}

/// Noisy pixels before clamping.
pub fn noisy_pixels(img: &Image, sigma: f64, seed: u64) -> Result<Vec<Rgb>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.pixels().to_vec());
    }
    let w = img.width();
    Ok(img
        .pixels()
        .par_chunks(w)
        .enumerate()
        .flat_map_iter(|(y, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(y as u64);
            row.iter()
                .map(|p| {
                    let mut out = *p;
                    for v in &mut out {
                        let n: f64 = rng.sample(StandardNormal);
                        *v += sigma * n;
                    }
                    out
                })
                .collect::<Vec<_>>()
        })
        .collect())
}

/// Depth layouts of the built-in generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthLayout {
    /// Left half at `near`, right half at `far`.
    TwoPlane,
    /// Depth rising linearly from `near` at the bottom row to `far` at the top.
    Gradient,
    /// Gradient ground below a band of sky at `sky_depth`.
    Sky,
}

impl std::str::FromStr for DepthLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_plane" => Ok(DepthLayout::TwoPlane),
            "gradient" => Ok(DepthLayout::Gradient),
            "sky" => Ok(DepthLayout::Sky),
            other => Err(Error::config(format!("unknown depth layout '{other}'"))),
        }
    }
}

impl std::fmt::Display for DepthLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DepthLayout::TwoPlane => "two_plane",
            DepthLayout::Gradient => "gradient",
            DepthLayout::Sky => "sky",
        })
    }
}

/// Parameters of the built-in scene generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
    pub sky_depth: f64,
    /// Fraction of rows, from the top, covered by sky.
    pub sky_fraction: f64,
    /// Side of the square reflectance tiles.
    pub tile: usize,
    pub texture_seed: u64,
}

impl Default for GeneratorParams {
    /// 128x128; at `β = 1` the ground spans `t ∈ [0.2, 0.9]` and the sky sits at `t ≈ 0.018`.
    fn default() -> Self {
        GeneratorParams {
            width: 128,
            height: 128,
            near: -(0.9f64.ln()),
            far: -(0.2f64.ln()),
            sky_depth: 4.0,
            sky_fraction: 0.25,
            tile: 16,
            texture_seed: 1,
        }
    }
}

/// Depth map for `layout`.
pub fn depth_map(layout: DepthLayout, p: &GeneratorParams) -> Result<ScalarMap> {
    if p.width == 0 || p.height == 0 {
        return Err(Error::config("scene dimensions must be positive"));
    }
    if !(p.near >= 0.0 && p.far >= 0.0 && p.sky_depth >= 0.0) {
        return Err(Error::config("depths must be non-negative"));
    }
    if !(0.0..1.0).contains(&p.sky_fraction) {
        return Err(Error::config("sky_fraction must lie in [0, 1)"));
    }
    let sky_rows = (p.sky_fraction * p.height as f64).round() as usize;
    let ramp = |y: usize, top: usize| {
        let span = (p.height - 1).saturating_sub(top).max(1) as f64;
        let k = (p.height - 1 - y) as f64 / span;
        p.near + (p.far - p.near) * k
    };
    ScalarMap::from_fn(p.width, p.height, |x, y| match layout {
        DepthLayout::TwoPlane => {
            if x < p.width / 2 {
                p.near
            } else {
                p.far
            }
        }
        DepthLayout::Gradient => ramp(y, 0),
        DepthLayout::Sky => {
            if y < sky_rows {
                p.sky_depth
            } else {
                ramp(y, sky_rows)
            }
        }
    })
}

/// Tiles of saturated reflectance under smooth shading, plus a bright
/// bluish sky band for [`DepthLayout::Sky`].
pub fn mosaic_radiance(layout: DepthLayout, p: &GeneratorParams) -> Result<Image> {
    if p.tile == 0 {
        return Err(Error::config("tile must be positive"));
    }
    let tiles_x = p.width.div_ceil(p.tile);
    let tiles_y = p.height.div_ceil(p.tile);
    let mut rng = ChaCha8Rng::seed_from_u64(p.texture_seed);
    let tiles: Vec<(Rgb, f64, f64)> = (0..tiles_x * tiles_y)
        .map(|_| {
            let albedo = saturated_color(rng.random(), rng.random_range(0.9..1.0), rng.random_range(0.65..1.0));
            (albedo, rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let sky_rows = match layout {
        DepthLayout::Sky => (p.sky_fraction * p.height as f64).round() as usize,
        _ => 0,
    };
    let period = 2.0 * p.tile as f64;
    Image::from_fn(p.width, p.height, |x, y| {
        if y < sky_rows {
            let k = y as f64 / sky_rows.max(1) as f64;
            return [0.72 + 0.08 * k, 0.80 + 0.06 * k, 0.95];
        }
        let (albedo, angle, phase) = tiles[(y / p.tile) * tiles_x + x / p.tile];
        let u = (x as f64 * angle.cos() + y as f64 * angle.sin()) / period;
        let shade = 0.35 + 0.65 * (0.5 + 0.5 * (std::f64::consts::TAU * u + phase).sin());
        [albedo[0] * shade, albedo[1] * shade, albedo[2] * shade]
    })
}

/// HSV to RGB with hue in `[0, 1)`.
fn saturated_color(hue: f64, saturation: f64, value: f64) -> Rgb {
    let h = (hue * 6.0).rem_euclid(6.0);
    let c = value * saturation;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let m = value - c;
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [clamp01(r + m), clamp01(g + m), clamp01(b + m)]
}

/// Built-in scene with the given layout and haze settings.
pub fn generate_scene(
    layout: DepthLayout,
    params: &GeneratorParams,
    beta: f64,
    airlight: Rgb,
    noise_sigma: f64,
    noise_seed: u64,
) -> Result<SceneSpec> {
    let scene = SceneSpec {
        radiance: mosaic_radiance(layout, params)?,
        depth: depth_map(layout, params)?,
        beta,
        airlight,
        noise_sigma,
        noise_seed,
    };
    scene.validate()?;
    Ok(scene)
}

/// Where a scene file takes its depth from.
#[derive(Debug, Clone, PartialEq)]
pub enum DepthSource {
    Layout(DepthLayout),
    /// 16-bit grayscale map scaled by `depth_scale`.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RadianceSource {
    Mosaic,
    File(PathBuf),
}

/// Parsed scene description file.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub depth: DepthSource,
    pub radiance: RadianceSource,
    pub generator: GeneratorParams,
    pub depth_scale: f64,
    pub beta: f64,
    pub airlight: Rgb,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SceneFile {
    fn default() -> Self {
        SceneFile {
            depth: DepthSource::Layout(DepthLayout::Gradient),
            radiance: RadianceSource::Mosaic,
            generator: GeneratorParams::default(),
            depth_scale: 1.0,
            beta: 1.0,
            airlight: [0.8, 0.8, 0.8],
            sigma: 0.0,
            seed: 0,
        }
    }
}

fn source_path(value: &str) -> Option<PathBuf> {
    value.strip_prefix("file:").map(|p| PathBuf::from(p.trim()))
}

fn field_error(path: &Path, kv: &KeyValue, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: kv.line,
        message: format!("{}: {message}", kv.key),
    }
}

fn number<T: std::str::FromStr>(path: &Path, kv: &KeyValue) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    kv.value.parse::<T>().map_err(|e| field_error(path, kv, e))
}

impl SceneFile {
    /// Parses `key = value` lines. `path` is used in error messages only.
    pub fn parse(text: &str, path: &Path) -> Result<SceneFile> {
        let mut scene = SceneFile::default();
        for kv in parse_key_values(text, path)? {
            let g = &mut scene.generator;
            match kv.key.as_str() {
                "depth" => {
                    scene.depth = match source_path(&kv.value) {
                        Some(p) => DepthSource::File(p),
                        None => DepthSource::Layout(kv.value.parse().map_err(|e| field_error(path, &kv, e))?),
                    }
                }
                "radiance" => {
                    scene.radiance = match (kv.value.as_str(), source_path(&kv.value)) {
                        ("mosaic", _) => RadianceSource::Mosaic,
                        (_, Some(p)) => RadianceSource::File(p),
                        _ => return Err(field_error(path, &kv, "expected 'mosaic' or 'file:<path>'")),
                    }
                }
                "width" => g.width = number(path, &kv)?,
                "height" => g.height = number(path, &kv)?,
                "near" => g.near = number(path, &kv)?,
                "far" => g.far = number(path, &kv)?,
                "sky_depth" => g.sky_depth = number(path, &kv)?,
                "sky_fraction" => g.sky_fraction = number(path, &kv)?,
                "tile" => g.tile = number(path, &kv)?,
                "texture_seed" => g.texture_seed = number(path, &kv)?,
                "depth_scale" => scene.depth_scale = number(path, &kv)?,
                "beta" => scene.beta = number(path, &kv)?,
                "sigma" => scene.sigma = number(path, &kv)?,
                "seed" => scene.seed = number(path, &kv)?,
                "airlight" => {
                    let parts: Vec<&str> = kv.value.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
                    let vals: Vec<f64> = parts
                        .iter()
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| field_error(path, &kv, e))?;
                    if vals.len() != 3 {
                        return Err(field_error(path, &kv, "expected three components"));
                    }
                    scene.airlight = [vals[0], vals[1], vals[2]];
                }
                _ => return Err(field_error(path, &kv, "unknown key")),
            }
        }
        let check = |ok: bool, key: &str, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    message: format!("{key}: {msg}"),
                })
            }
        };
        check(scene.beta >= 0.0 && scene.beta.is_finite(), "beta", "must be finite and >= 0")?;
        check(scene.sigma >= 0.0 && scene.sigma.is_finite(), "sigma", "must be finite and >= 0")?;
        check(scene.airlight.iter().all(|a| (0.0..=1.0).contains(a)), "airlight", "components must lie in [0, 1]")?;
        check(scene.depth_scale >= 0.0 && scene.depth_scale.is_finite(), "depth_scale", "must be finite and >= 0")?;
        check(scene.generator.width > 0 && scene.generator.height > 0, "width", "dimensions must be positive")?;
        check(scene.generator.tile > 0, "tile", "must be positive")?;
        Ok(scene)
    }

    /// Every field as `key: value` lines, in the order accepted by [`SceneFile::parse`].
    pub fn manifest(&self) -> String {
        let g = &self.generator;
        let depth = match &self.depth {
            DepthSource::Layout(l) => l.to_string(),
            DepthSource::File(p) => format!("file:{}", p.display()),
        };
        let radiance = match &self.radiance {
            RadianceSource::Mosaic => "mosaic".to_string(),
            RadianceSource::File(p) => format!("file:{}", p.display()),
        };
        let a = self.airlight;
        [
            ("depth", depth),
            ("radiance", radiance),
            ("width", g.width.to_string()),
            ("height", g.height.to_string()),
            ("near", g.near.to_string()),
            ("far", g.far.to_string()),
            ("sky_depth", g.sky_depth.to_string()),
            ("sky_fraction", g.sky_fraction.to_string()),
            ("tile", g.tile.to_string()),
            ("texture_seed", g.texture_seed.to_string()),
            ("depth_scale", self.depth_scale.to_string()),
            ("beta", self.beta.to_string()),
            ("airlight", format!("{}, {}, {}", a[0], a[1], a[2])),
            ("sigma", self.sigma.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .iter()
        .map(|(k, v)| format!("{k}: {v}\n"))
        .collect()
    }

    /// Resolves file sources relative to `base` and builds the scene.
    pub fn build(&self, base: &Path) -> Result<SceneSpec> {
        let layout = match &self.depth {
            DepthSource::Layout(l) => *l,
            DepthSource::File(_) => DepthLayout::Gradient,
        };
        let depth = match &self.depth {
            DepthSource::Layout(l) => depth_map(*l, &self.generator)?,
            DepthSource::File(p) => crate::io::load_map(&base.join(p))?.map(|v| v * self.depth_scale),
        };
        let radiance = match &self.radiance {
            RadianceSource::Mosaic => {
                let g = GeneratorParams {
                    width: depth.width(),
                    height: depth.height(),
                    ..self.generator.clone()
                };
                mosaic_radiance(layout, &g)?
            }
            RadianceSource::File(p) => crate::io::load_image(&base.join(p))?,
        };
        let scene = SceneSpec {
            radiance,
            depth,
            beta: self.beta,
            airlight: self.airlight,
            noise_sigma: self.sigma,
            noise_seed: self.seed,
        };
        scene.validate()?;
        Ok(scene)
    }
}
