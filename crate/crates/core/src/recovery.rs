//! Haze-free radiance from the estimated transmission or airlight field.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{clamp01, luma, Image, Rgb, ScalarMap};
use crate::linalg::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMode {
    /// `J = (I - A) / max(t, t0) + A`.
    TransmissionRecovery,
    /// Subtract `a(x)·Â`, then rescale by luma.
    AirlightSubtraction,
}

impl fmt::Display for RecoveryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecoveryMode::TransmissionRecovery => "trans",
            RecoveryMode::AirlightSubtraction => "airlight",
        })
    }
}

impl FromStr for RecoveryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trans" | "transmission" | "transmission_recovery" => Ok(RecoveryMode::TransmissionRecovery),
            "airlight" | "airlight_subtraction" => Ok(RecoveryMode::AirlightSubtraction),
            other => Err(Error::config(format!("unknown recovery mode '{other}' (expected trans or airlight)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryParams {
    pub t0: f64,
    pub gamma: f64,
    pub mode: RecoveryMode,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        RecoveryParams {
            t0: 0.1,
            gamma: 1.5,
            mode: RecoveryMode::AirlightSubtraction,
        }
    }
}

impl RecoveryParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.05..=0.2).contains(&self.t0) {
            return Err(Error::config(format!("t0 must lie in [0.05, 0.2], got {}", self.t0)));
        }
        validate_gamma(self.gamma)
    }
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if !(0.3..=3.0).contains(&gamma) {
        return Err(Error::config(format!("gamma must lie in [0.3, 3], got {gamma}")));
    }
    Ok(())
}

/// Inverts the scattering model with the transmission clamped below at `t0`.
pub fn recover_radiance(img: &Image, t: &ScalarMap, airlight: Rgb, params: &RecoveryParams) -> Result<Image> {
    t.matches(img)?;
    if airlight.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::invalid(format!("airlight {airlight:?} outside [0, 1]")));
    }
    let data = img
        .pixels()
        .par_iter()
        .zip(t.values().par_iter())
        .map(|(p, &tx)| {
            let divisor = tx.max(params.t0);
            let mut out = [0.0; 3];
            for c in 0..3 {
                out[c] = clamp01((p[c] - airlight[c]) / divisor + airlight[c]);
            }
            out
        })
        .collect();
    Image::new(img.width(), img.height(), data)
}

/// `I(x) - a(x)·Â`, with negative results set to zero.
pub fn direct_transmission_component(img: &Image, a: &ScalarMap, dir: Vec3) -> Result<Image> {
    a.matches(img)?;
    let data = img
        .pixels()
        .par_iter()
        .zip(a.values().par_iter())
        .map(|(p, &ax)| {
            let ax = ax.max(0.0);
            [
                (p[0] - ax * dir[0]).max(0.0),
                (p[1] - ax * dir[1]).max(0.0),
                (p[2] - ax * dir[2]).max(0.0),
            ]
        })
        .collect();
    Image::from_clamped(img.width(), img.height(), data)
}

/// Smallest denominator used by [`contrast_restore`].
pub const MIN_DENOMINATOR: f64 = 1e-6;

/// Output of [`contrast_restore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Restored {
    pub image: Image,
    /// Pixels whose denominator had to be clamped.
    pub saturated: usize,
}

/// `R(x) = Jt(x) / (1 - Y(a(x)·Â))`, clamped to `[0, 1]`.
pub fn contrast_restore(jt: &Image, a: &ScalarMap, dir: Vec3) -> Result<Restored> {
    a.matches(jt)?;
    let rows: Vec<(Rgb, bool)> = jt
        .pixels()
        .par_iter()
        .zip(a.values().par_iter())
        .map(|(p, &ax)| {
            let ax = ax.max(0.0);
            let denom = 1.0 - luma([ax * dir[0], ax * dir[1], ax * dir[2]]);
            let clamped = denom < MIN_DENOMINATOR;
            let d = denom.max(MIN_DENOMINATOR);
            ([clamp01(p[0] / d), clamp01(p[1] / d), clamp01(p[2] / d)], clamped)
        })
        .collect();
    let saturated = rows.iter().filter(|r| r.1).count();
    let image = Image::new(jt.width(), jt.height(), rows.into_iter().map(|r| r.0).collect())?;
    Ok(Restored { image, saturated })
}

/// Per-channel `in^(1/gamma)` on a clamped image.
pub fn gamma_correct(img: &Image, gamma: f64) -> Result<Image> {
    validate_gamma(gamma)?;
    if gamma == 1.0 {
        return Ok(img.clone());
    }
    let inv = 1.0 / gamma;
    Ok(img.map(|p| [clamp01(p[0]).powf(inv), clamp01(p[1]).powf(inv), clamp01(p[2]).powf(inv)]))
}
