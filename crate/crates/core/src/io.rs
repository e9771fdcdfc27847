//! Image and map files.
//!
//! Color images are 8-bit PNG or binary PPM, chosen by extension. Scalar maps
//! are 16-bit grayscale PNG storing `round(65535 · v)`. Writes go through a
//! temporary file in the target directory followed by a rename.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader};

use crate::error::{Error, Result};
use crate::image::{Image, ScalarMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<ImageFormat> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => Ok(ImageFormat::Png),
            Some("ppm") => Ok(ImageFormat::Ppm),
            _ => Err(Error::config(format!(
                "{}: unsupported image extension (expected .png or .ppm)",
                path.display()
            ))),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn codec_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::ImageCodec {
        path: path.to_path_buf(),
        source,
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn to_word(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Reads a PNG or PPM color image into `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let decoded = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(codec_err(path))?;
    let rgb = decoded.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb
        .pixels()
        .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
        .collect();
    Image::new(w, h, data)
}

/// Encodes `img` as 8-bit PNG or binary PPM.
pub fn encode_image(img: &Image, format: ImageFormat) -> Result<Vec<u8>> {
    let raw: Vec<u8> = img.pixels().iter().flat_map(|p| p.map(to_byte)).collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let mut out = Vec::new();
    let result = match format {
        ImageFormat::Png => PngEncoder::new(&mut out).write_image(&raw, w, h, ExtendedColorType::Rgb8),
        ImageFormat::Ppm => PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(&raw, w, h, ExtendedColorType::Rgb8),
    };
    result.map_err(codec_err(Path::new("<memory>")))?;
    Ok(out)
}

pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let bytes = encode_image(img, ImageFormat::from_path(path)?)?;
    write_atomic(path, &bytes)
}

/// Reads a grayscale map; 16-bit files map `65535` to `1.0`.
pub fn load_map(path: &Path) -> Result<ScalarMap> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let decoded = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(codec_err(path))?;
    let gray = decoded.into_luma16();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    ScalarMap::new(w, h, gray.pixels().map(|p| p[0] as f64 / 65535.0).collect())
}

/// Encodes `map` as 16-bit grayscale PNG, clamping to `[0, 1]`; NaN is stored as 0.
pub fn encode_map(map: &ScalarMap) -> Result<Vec<u8>> {
    let raw: Vec<u8> = map
        .values()
        .iter()
        .flat_map(|&v| to_word(if v.is_nan() { 0.0 } else { v }).to_ne_bytes())
        .collect();
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(&raw, map.width() as u32, map.height() as u32, ExtendedColorType::L16)
        .map_err(codec_err(Path::new("<memory>")))?;
    Ok(out)
}

pub fn save_map(map: &ScalarMap, path: &Path) -> Result<()> {
    write_atomic(path, &encode_map(map)?)
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_all_atomic(&[(path.to_path_buf(), bytes.to_vec())])
}

/// Stages every file before renaming any of them. On failure the staged
/// files are removed and no target is touched.
pub fn write_all_atomic(files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    let cleanup = |staged: &[PathBuf]| {
        for t in staged {
            let _ = fs::remove_file(t);
        }
    };
    for (path, bytes) in files {
        let tmp = temp_path(path);
        if let Err(e) = fs::write(&tmp, bytes) {
            cleanup(&staged);
            return Err(Error::Io { path: path.clone(), source: e });
        }
        staged.push(tmp);
    }
    for (i, (path, _)) in files.iter().enumerate() {
        if let Err(e) = fs::rename(&staged[i], path) {
            cleanup(&staged[i..]);
            return Err(Error::Io { path: path.clone(), source: e });
        }
    }
    Ok(())
}
