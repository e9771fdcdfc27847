//! Full-reference quality metrics on `[0, 1]` images.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{luma, Image, ScalarMap};

/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 100.0;

/// Peak convention for PSNR and WSNR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeakScale {
    /// `10 log10(1 / mse)`.
    #[default]
    Unit,
    /// `10 log10(255² / mse)` with `mse` still measured on `[0, 1]` values.
    Byte,
}

impl PeakScale {
    fn peak_squared(self) -> f64 {
        match self {
            PeakScale::Unit => 1.0,
            PeakScale::Byte => 255.0 * 255.0,
        }
    }
}

/// Row sums computed in parallel and added in row order.
fn ordered_sum(height: usize, row: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let rows: Vec<f64> = (0..height).into_par_iter().map(row).collect();
    rows.iter().sum()
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    let w = a.width();
    let (pa, pb) = (a.pixels(), b.pixels());
    let total = ordered_sum(a.height(), |y| {
        (y * w..(y + 1) * w)
            .map(|i| (0..3).map(|c| (pa[i][c] - pb[i][c]).powi(2)).sum::<f64>())
            .sum()
    });
    Ok(total / (3 * a.len()) as f64)
}

/// `10 log10(peak² / mse)`, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64, scale: PeakScale) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (scale.peak_squared() / mse).log10()).min(PSNR_CAP)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, PeakScale::Unit))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Normalized 11x11 Gaussian window, row-major.
pub fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let mut w: Vec<f64> = g.iter().flat_map(|gy| g.iter().map(move |gx| gx * gy)).collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Mean SSIM of the luma channels over every fully contained window.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    if a.width().min(a.height()) < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim needs both dimensions >= {SSIM_WINDOW}, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let w = a.width();
    let la: Vec<f64> = a.pixels().iter().map(|&p| luma(p)).collect();
    let lb: Vec<f64> = b.pixels().iter().map(|&p| luma(p)).collect();
    let win = ssim_window();
    let (nx, ny) = (w - SSIM_WINDOW + 1, a.height() - SSIM_WINDOW + 1);
    let total = ordered_sum(ny, |y0| {
        (0..nx)
            .map(|x0| {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let g = win[dy * SSIM_WINDOW + dx];
                        let i = (y0 + dy) * w + x0 + dx;
                        let (u, v) = (la[i], lb[i]);
                        mx += g * u;
                        my += g * v;
                        xx += g * u * u;
                        yy += g * v * v;
                        xy += g * u * v;
                    }
                }
                let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
                ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))
            })
            .sum()
    });
    Ok(total / (nx * ny) as f64)
}

/// Gradient magnitude of the reference luma by central differences,
/// one-sided at the borders, normalized to mean 1. A flat reference gets
/// unit weights.
pub fn contrast_weights(reference: &Image) -> Vec<f64> {
    let (w, h) = (reference.width(), reference.height());
    let l: Vec<f64> = reference.pixels().iter().map(|&p| luma(p)).collect();
    let diff = |lo: usize, hi: usize, k: usize, n: usize| -> f64 {
        if n < 2 {
            0.0
        } else if k == 0 || k == n - 1 {
            l[hi] - l[lo]
        } else {
            (l[hi] - l[lo]) / 2.0
        }
    };
    let mut g = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (xl, xh) = (if x == 0 { i } else { i - 1 }, if x + 1 == w { i } else { i + 1 });
            let (yl, yh) = (if y == 0 { i } else { i - w }, if y + 1 == h { i } else { i + w });
            let gx = diff(xl, xh, x, w);
            let gy = diff(yl, yh, y, h);
            g.push((gx * gx + gy * gy).sqrt());
        }
    }
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    if mean > 0.0 {
        g.iter().map(|v| v / mean).collect()
    } else {
        vec![1.0; g.len()]
    }
}

/// Contrast-weighted PSNR of `result` against `reference`.
pub fn wsnr(result: &Image, reference: &Image) -> Result<f64> {
    wsnr_scaled(result, reference, PeakScale::Unit)
}

pub fn wsnr_scaled(result: &Image, reference: &Image, scale: PeakScale) -> Result<f64> {
    result.same_dims(reference)?;
    let weights = contrast_weights(reference);
    let w = result.width();
    let (pa, pb) = (result.pixels(), reference.pixels());
    let total = ordered_sum(result.height(), |y| {
        (y * w..(y + 1) * w)
            .map(|i| weights[i] * (0..3).map(|c| (pa[i][c] - pb[i][c]).powi(2)).sum::<f64>())
            .sum()
    });
    Ok(psnr_from_mse(total / (3 * result.len()) as f64, scale))
}

/// Pixels with true transmission below this count as sky.
pub const SKY_THRESHOLD: f64 = 0.05;

/// `true` where `t_true >= SKY_THRESHOLD`.
pub fn non_sky_mask(t_true: &ScalarMap) -> Vec<bool> {
    t_true.values().iter().map(|&t| t >= SKY_THRESHOLD).collect()
}

/// Mean absolute transmission error over the masked pixels.
pub fn l1_transmission_error(t_est: &ScalarMap, t_true: &ScalarMap, mask: &[bool]) -> Result<f64> {
    t_est.same_dims(t_true)?;
    if mask.len() != t_est.len() {
        return Err(Error::invalid(format!("mask has {} entries for {} pixels", mask.len(), t_est.len())));
    }
    let (sum, count) = t_est
        .values()
        .iter()
        .zip(t_true.values())
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((a, b), _)| (s + (a - b).abs(), n + 1));
    if count == 0 {
        return Err(Error::invalid("transmission mask selects no pixels"));
    }
    Ok(sum / count as f64)
}

/// All metrics for one result/reference pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub wsnr: f64,
    pub l1_transmission: Option<f64>,
    /// Fraction of pixels entering the transmission error.
    pub mask_coverage: f64,
}

/// Transmission pair and masking policy for [`evaluate`].
#[derive(Debug, Clone, Copy)]
pub struct TransmissionPair<'a> {
    pub estimate: &'a ScalarMap,
    pub truth: &'a ScalarMap,
    pub mask_sky: bool,
}

pub fn evaluate(
    result: &Image,
    reference: &Image,
    transmission: Option<TransmissionPair<'_>>,
    scale: PeakScale,
) -> Result<QualityReport> {
    let m = mse(result, reference)?;
    let (l1, coverage) = match transmission {
        Some(tp) => {
            let mask = if tp.mask_sky {
                non_sky_mask(tp.truth)
            } else {
                vec![true; tp.truth.len()]
            };
            let covered = mask.iter().filter(|&&b| b).count() as f64 / mask.len().max(1) as f64;
            (Some(l1_transmission_error(tp.estimate, tp.truth, &mask)?), covered)
        }
        None => (None, 1.0),
    };
    Ok(QualityReport {
        mse: m,
        psnr: psnr_from_mse(m, scale),
        ssim: ssim(result, reference)?,
        wsnr: wsnr_scaled(result, reference, scale)?,
        l1_transmission: l1,
        mask_coverage: coverage,
    })
}

impl QualityReport {
    /// Arithmetic mean of each field; the transmission error is averaged over
    /// the reports that have one.
    pub fn mean(reports: &[QualityReport]) -> Option<QualityReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&QualityReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let l1: Vec<f64> = reports.iter().filter_map(|r| r.l1_transmission).collect();
        Some(QualityReport {
            mse: avg(|r| r.mse),
            psnr: avg(|r| r.psnr),
            ssim: avg(|r| r.ssim),
            wsnr: avg(|r| r.wsnr),
            l1_transmission: (!l1.is_empty()).then(|| l1.iter().sum::<f64>() / l1.len() as f64),
            mask_coverage: avg(|r| r.mask_coverage),
        })
    }

    /// `key: value` lines; `prefix` is prepended to every key.
    pub fn to_text(&self, prefix: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{prefix}mse: {}", self.mse);
        let _ = writeln!(s, "{prefix}psnr: {}", self.psnr);
        let _ = writeln!(s, "{prefix}ssim: {}", self.ssim);
        let _ = writeln!(s, "{prefix}wsnr: {}", self.wsnr);
        match self.l1_transmission {
            Some(v) => {
                let _ = writeln!(s, "{prefix}l1_transmission: {v}");
            }
            None => {
                let _ = writeln!(s, "{prefix}l1_transmission: none");
            }
        }
        let _ = writeln!(s, "{prefix}mask_coverage: {}", self.mask_coverage);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, w: usize, h: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = random_image(0, 8, 8);
        let b = random_image(1, 8, 8);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let zeros = Image::filled(4, 4, [0.0; 3]).unwrap();
        let ones = Image::filled(4, 4, [1.0; 3]).unwrap();
        assert_eq!(mse(&zeros, &ones).unwrap(), 1.0);
        let mut acc = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                for c in 0..3 {
                    acc += (a.get(x, y)[c] - b.get(x, y)[c]).powi(2);
                }
            }
        }
        assert!((mse(&a, &b).unwrap() - acc / 192.0).abs() < 1e-12);
        assert!(mse(&a, &random_image(2, 8, 7)).is_err());
    }

    #[test]
    fn psnr_examples() {
        assert!((psnr_from_mse(0.01, PeakScale::Unit) - 20.0).abs() < 1e-12);
        assert!((psnr_from_mse(0.0481, PeakScale::Unit) - 13.178).abs() < 1e-3);
        assert_eq!(psnr_from_mse(0.0, PeakScale::Unit), PSNR_CAP);
        let a = random_image(3, 5, 5);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert!(psnr_from_mse(0.0481, PeakScale::Byte) > 60.0);
    }

    #[test]
    fn ssim_identity_and_negative() {
        let a = random_image(4, 16, 16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let neg = a.map(|p| [1.0 - p[0], 1.0 - p[1], 1.0 - p[2]]);
        assert!(ssim(&a, &neg).unwrap() < 0.0);
        assert!(ssim(&random_image(5, 10, 20), &random_image(6, 10, 20)).is_err());
    }

    #[test]
    fn wsnr_flat_gradient_matches_psnr() {
        let ramp = Image::from_fn(20, 12, |x, _| [x as f64 / 19.0; 3]).unwrap();
        let w = contrast_weights(&ramp);
        assert!(w.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let other = random_image(7, 20, 12);
        assert!((wsnr(&other, &ramp).unwrap() - psnr(&other, &ramp).unwrap()).abs() < 1e-9);
        assert_eq!(wsnr(&ramp, &ramp).unwrap(), PSNR_CAP);
        let flat = Image::filled(6, 6, [0.3; 3]).unwrap();
        assert!(contrast_weights(&flat).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn l1_examples() {
        let t = ScalarMap::from_fn(4, 4, |x, y| (x + y) as f64 / 8.0).unwrap();
        let full = vec![true; 16];
        assert_eq!(l1_transmission_error(&t, &t, &full).unwrap(), 0.0);
        let shifted = t.map(|v| v + 0.1);
        assert!((l1_transmission_error(&shifted, &t, &full).unwrap() - 0.1).abs() < 1e-12);
        assert!(l1_transmission_error(&t, &t, &[false; 16]).is_err());
    }

    #[test]
    fn report_text_and_mean() {
        let a = random_image(8, 12, 12);
        let r = evaluate(&a, &a, None, PeakScale::Unit).unwrap();
        assert_eq!(r.mse, 0.0);
        let text = r.to_text("");
        assert!(text.contains("mse: 0\n") && text.contains("psnr: 100\n") && text.contains("l1_transmission: none"));
        let b = QualityReport { mse: 0.5, l1_transmission: Some(0.2), ..r.clone() };
        let m = QualityReport::mean(&[r, b]).unwrap();
        assert_eq!(m.mse, 0.25);
        assert_eq!(m.l1_transmission, Some(0.2));
    }
}
