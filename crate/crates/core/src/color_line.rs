//! Color-line fitting inside image patches.
//!
//! Pixels of a small, nearly planar, single-colored surface lie on a line in
//! RGB space; haze shifts that line away from the origin along the airlight
//! direction. Lines are found by hypothesize-and-classify: pixel pairs propose
//! a line, a two-class naive Bayes model scores every patch pixel as inlier or
//! outlier, and the best-scoring hypothesis is refined on its inliers.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{FeatureVector, Image, PatchRef, Rgb};
use crate::linalg::{self, cross, dot, normalize, sub, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierParams {
    /// Width of the zero-mean Gaussian on each orthogonal residual component.
    pub inlier_sigma: f64,
    /// Prior probability of the inlier class.
    pub inlier_prior: f64,
    /// Minimum inlier count as a fraction of the patch pixel count.
    pub min_inlier_fraction: f64,
    /// Largest patch side the growth ladder may reach.
    pub max_patch_growth: usize,
    /// Number of pixel-pair hypotheses drawn per patch.
    pub hypotheses: usize,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            inlier_sigma: 0.02,
            inlier_prior: 0.5,
            min_inlier_fraction: 0.4,
            max_patch_growth: 31,
            hypotheses: 64,
        }
    }
}

impl ClassifierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_sigma > 0.0 && self.inlier_sigma.is_finite()) {
            return Err(Error::config(format!("inlier_sigma must be > 0, got {}", self.inlier_sigma)));
        }
        if !(0.0..=1.0).contains(&self.inlier_prior) {
            return Err(Error::config(format!("inlier_prior must be in [0, 1], got {}", self.inlier_prior)));
        }
        if !(self.min_inlier_fraction > 0.2 && self.min_inlier_fraction < 0.9) {
            return Err(Error::config(format!(
                "min_inlier_fraction must be in (0.2, 0.9), got {}",
                self.min_inlier_fraction
            )));
        }
        if self.max_patch_growth < 3 {
            return Err(Error::config("max_patch_growth must be >= 3"));
        }
        if self.hypotheses == 0 {
            return Err(Error::config("hypotheses must be >= 1"));
        }
        Ok(())
    }
}

/// Why a patch produced no usable color line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineFailure {
    TooFewPixels,
    DegeneratePatch,
    InsufficientSupport,
    PositiveSlope,
    Unimodality,
}

impl LineFailure {
    pub fn reason(&self) -> &'static str {
        match self {
            LineFailure::TooFewPixels => "too few pixels",
            LineFailure::DegeneratePatch => "degenerate patch",
            LineFailure::InsufficientSupport => "insufficient support",
            LineFailure::PositiveSlope => "positive slope",
            LineFailure::Unimodality => "unimodality",
        }
    }
}

impl fmt::Display for LineFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.reason())
    }
}

/// A fitted patch line `P = p0 + ρ·dir`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorLine {
    /// First defining point; also the line origin.
    pub p0: Vec3,
    /// Second defining point.
    pub p1: Vec3,
    /// Unit direction `(p1 - p0) / |p1 - p0|`.
    pub dir: Vec3,
    /// Unit normal of the plane through the origin containing the line, `p1 × p0` normalized.
    pub normal: Vec3,
    /// Raster indices (`y * width + x`) of inlier pixels.
    pub inliers: Vec<usize>,
    pub support: usize,
    /// Distance from the RGB origin to the line.
    pub offset: f64,
    /// The patch the line was fitted on.
    pub patch: PatchRef,
}

/// Posterior of each class given per-feature likelihoods, under the naive
/// conditional-independence factorization `p(C_k) ∏ p(x_i | C_k)`.
///
/// `likelihoods[k][i]` is `p(x_i | C_k)`. Returns normalized posteriors;
/// if every class has zero joint mass the priors are returned.
pub fn naive_bayes_posterior(priors: &[f64], likelihoods: &[Vec<f64>]) -> Vec<f64> {
    assert_eq!(priors.len(), likelihoods.len());
    let log_joint: Vec<f64> = priors
        .iter()
        .zip(likelihoods)
        .map(|(&p, l)| p.ln() + l.iter().map(|v| v.ln()).sum::<f64>())
        .collect();
    let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        let total: f64 = priors.iter().sum();
        return priors.iter().map(|p| p / total).collect();
    }
    let weights: Vec<f64> = log_joint.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

fn log_gaussian(r: f64, sigma: f64) -> f64 {
    -0.5 * (r / sigma).powi(2) - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

/// Components of `c - p0` orthogonal to the unit direction `dir`.
#[inline]
fn residual(c: Rgb, p0: Vec3, dir: Vec3) -> Vec3 {
    let v = sub(c, p0);
    sub(v, linalg::scale(dir, dot(v, dir)))
}

/// Inlier posterior from the three orthogonal residual components.
/// The outlier class is uniform on the unit cube, so its likelihood is 1.
#[inline]
fn inlier_posterior(c: Rgb, p0: Vec3, dir: Vec3, params: &ClassifierParams) -> f64 {
    let prior = params.inlier_prior;
    if prior >= 1.0 {
        return 1.0;
    }
    if prior <= 0.0 {
        return 0.0;
    }
    let r = residual(c, p0, dir);
    let log_in: f64 = r.iter().map(|&ri| log_gaussian(ri, params.inlier_sigma)).sum();
    let logit = prior.ln() - (1.0 - prior).ln() + log_in;
    1.0 / (1.0 + (-logit).exp())
}

/// Posterior probability that each pixel belongs to the candidate line.
/// The outlier posterior of pixel `i` is `1 - result[i]`.
pub fn classify_patch_pixels(
    patch_pixels: &[FeatureVector],
    p0: Vec3,
    dir: Vec3,
    params: &ClassifierParams,
) -> Result<Vec<f64>> {
    if patch_pixels.is_empty() {
        return Err(Error::invalid("cannot classify an empty patch"));
    }
    let dir = normalize(dir, 1e-12).ok_or_else(|| Error::invalid("candidate line direction is zero"))?;
    Ok(patch_pixels
        .iter()
        .map(|f| inlier_posterior(f.rgb(), p0, dir, params))
        .collect())
}

/// Statistics of a fitted line needed by the validation checks.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchStats {
    pub pixel_count: usize,
    /// Inlier projections onto the line direction, relative to `p0`.
    pub projections: Vec<f64>,
}

impl PatchStats {
    pub fn new(line: &ColorLine, img: &Image) -> PatchStats {
        let projections = line
            .inliers
            .iter()
            .map(|&i| dot(sub(img.pixels()[i], line.p0), line.dir))
            .collect();
        PatchStats {
            pixel_count: line.patch.pixel_count(),
            projections,
        }
    }

    /// Range of the inlier projections.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self
            .projections
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }
}

/// Deterministic per-patch seed derived from the patch center.
pub fn patch_seed(base: u64, center: (usize, usize)) -> u64 {
    let mut z = base ^ ((center.0 as u64) << 32 | center.1 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn patch_pixels(patch: &PatchRef, img: &Image) -> (Vec<usize>, Vec<Rgb>) {
    let w = img.width();
    patch
        .coords()
        .map(|(x, y)| {
            let i = y * w + x;
            (i, img.pixels()[i])
        })
        .unzip()
}

fn score(colors: &[Rgb], p0: Vec3, dir: Vec3, params: &ClassifierParams) -> f64 {
    colors.iter().map(|&c| inlier_posterior(c, p0, dir, params)).sum()
}

/// Fits a color line to the pixels of `patch`.
///
/// Draws `params.hypotheses` pixel pairs from `rng_seed`, scores each
/// candidate by its summed inlier posterior, keeps the best, and refines it
/// by principal direction of its inliers when that does not lower the score.
pub fn fit_color_line(
    patch: &PatchRef,
    img: &Image,
    params: &ClassifierParams,
    rng_seed: u64,
) -> std::result::Result<ColorLine, LineFailure> {
    let (indices, colors) = patch_pixels(patch, img);
    let n = colors.len();
    if n < 8 {
        return Err(LineFailure::TooFewPixels);
    }
    let mean = mean_color(&colors);
    let variance: f64 = colors.iter().map(|&c| dot(sub(c, mean), sub(c, mean))).sum::<f64>() / n as f64;
    if variance < 1e-12 {
        return Err(LineFailure::DegeneratePatch);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: Option<(f64, Vec3, Vec3)> = None;
    for _ in 0..params.hypotheses {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n - 1);
        let j = if j >= i { j + 1 } else { j };
        let (a, b) = (colors[i], colors[j]);
        let Some(dir) = normalize(sub(b, a), 1e-9) else {
            continue;
        };
        let s = score(&colors, a, dir, params);
        if best.as_ref().is_none_or(|(bs, _, _)| s > *bs) {
            best = Some((s, a, b));
        }
    }
    let (best_score, mut p0, mut p1) = match best {
        Some(b) => b,
        None => {
            // every drawn pair coincided; use the pixel farthest from the first
            let a = colors[0];
            let b = *colors
                .iter()
                .max_by(|x, y| dot(sub(**x, a), sub(**x, a)).total_cmp(&dot(sub(**y, a), sub(**y, a))))
                .expect("n >= 8");
            let dir = normalize(sub(b, a), 1e-12).ok_or(LineFailure::DegeneratePatch)?;
            (score(&colors, a, dir, params), a, b)
        }
    };

    let dir0 = normalize(sub(p1, p0), 0.0).expect("hypotheses have distinct points");
    let inlier_colors: Vec<Rgb> = colors
        .iter()
        .copied()
        .filter(|&c| inlier_posterior(c, p0, dir0, params) > 0.5)
        .collect();
    if let Some((q0, q1)) = principal_segment(&inlier_colors) {
        let dir = normalize(sub(q1, q0), 0.0).expect("segment has length");
        if score(&colors, q0, dir, params) >= best_score {
            p0 = q0;
            p1 = q1;
        }
    }

    let dir = normalize(sub(p1, p0), 0.0).expect("distinct points");
    // a line through the origin spans no unique plane; any normal of the line works
    let normal = normalize(cross(p1, p0), 1e-9).unwrap_or_else(|| linalg::any_orthogonal(dir));
    let offset = linalg::norm(sub(p0, linalg::scale(dir, dot(p0, dir))));
    let inliers: Vec<usize> = indices
        .iter()
        .zip(&colors)
        .filter(|(_, &c)| inlier_posterior(c, p0, dir, params) > 0.5)
        .map(|(&i, _)| i)
        .collect();
    let support = inliers.len();
    if (support as f64) < params.min_inlier_fraction * n as f64 {
        return Err(LineFailure::InsufficientSupport);
    }
    Ok(ColorLine {
        p0,
        p1,
        dir,
        normal,
        inliers,
        support,
        offset,
        patch: *patch,
    })
}

fn mean_color(colors: &[Rgb]) -> Rgb {
    let n = colors.len() as f64;
    let s = colors.iter().fold([0.0; 3], |acc, &c| linalg::add(acc, c));
    linalg::scale(s, 1.0 / n)
}

/// Segment spanned by the points along their principal direction.
fn principal_segment(points: &[Rgb]) -> Option<(Vec3, Vec3)> {
    if points.len() < 2 {
        return None;
    }
    let c = mean_color(points);
    let mut cov = [[0.0; 3]; 3];
    for &p in points {
        let d = sub(p, c);
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    let dir = linalg::sym3_eigen(&cov).vectors[2];
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
        let t = dot(sub(p, c), dir);
        (lo.min(t), hi.max(t))
    });
    if hi - lo < 1e-9 {
        return None;
    }
    Some((linalg::add(c, linalg::scale(dir, lo)), linalg::add(c, linalg::scale(dir, hi))))
}

const SLOPE_TOLERANCE: f64 = 1e-6;
const HISTOGRAM_BINS: usize = 10;
/// A bin below this fraction of the lower of two flanking peaks splits the histogram.
const VALLEY_RATIO: f64 = 0.5;

/// Applies the line checks in order: support, positive slope (after the
/// allowed sign flip), unimodality. On success returns the line with its
/// direction oriented into the positive octant.
pub fn validate_color_line(
    line: &ColorLine,
    stats: &PatchStats,
    params: &ClassifierParams,
) -> std::result::Result<ColorLine, LineFailure> {
    if (line.support as f64) < params.min_inlier_fraction * stats.pixel_count as f64 {
        return Err(LineFailure::InsufficientSupport);
    }
    let mut out = line.clone();
    if out.dir.iter().all(|&d| d <= SLOPE_TOLERANCE) {
        out.dir = linalg::scale(out.dir, -1.0);
    }
    if out.dir.iter().any(|&d| d < -SLOPE_TOLERANCE) {
        return Err(LineFailure::PositiveSlope);
    }
    if !is_unimodal(&stats.projections) {
        return Err(LineFailure::Unimodality);
    }
    Ok(out)
}

/// Single-peak test on a 10-bin histogram smoothed with a [1 2 1] kernel.
pub fn is_unimodal(values: &[f64]) -> bool {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.len() < 3 || hi - lo < 1e-12 {
        return true;
    }
    let mut hist = [0.0f64; HISTOGRAM_BINS];
    for &v in values {
        let b = (((v - lo) / (hi - lo)) * HISTOGRAM_BINS as f64) as usize;
        hist[b.min(HISTOGRAM_BINS - 1)] += 1.0;
    }
    let mut smooth = [0.0f64; HISTOGRAM_BINS];
    for (i, s) in smooth.iter_mut().enumerate() {
        let mut acc = 2.0 * hist[i];
        let mut weight = 2.0;
        if i > 0 {
            acc += hist[i - 1];
            weight += 1.0;
        }
        if i + 1 < HISTOGRAM_BINS {
            acc += hist[i + 1];
            weight += 1.0;
        }
        *s = acc / weight;
    }
    let mut left_max = [0.0f64; HISTOGRAM_BINS];
    let mut running = 0.0f64;
    for i in 0..HISTOGRAM_BINS {
        left_max[i] = running;
        running = running.max(smooth[i]);
    }
    let mut right = 0.0f64;
    for j in (0..HISTOGRAM_BINS).rev() {
        let flank = left_max[j].min(right);
        if flank > 0.0 && smooth[j] < VALLEY_RATIO * flank {
            return false;
        }
        right = right.max(smooth[j]);
    }
    true
}

/// Fit followed by validation.
pub fn fit_and_validate(
    patch: &PatchRef,
    img: &Image,
    params: &ClassifierParams,
    rng_seed: u64,
) -> std::result::Result<ColorLine, LineFailure> {
    let line = fit_color_line(patch, img, params, rng_seed)?;
    let stats = PatchStats::new(&line, img);
    validate_color_line(&line, &stats, params)
}

/// A validated line and the number of growth steps it took.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveFit {
    pub line: ColorLine,
    pub growth_steps: usize,
}

/// Refits on successively larger windows around the same center
/// (side `s -> 2s + 1`, e.g. 7, 15, 31) until a line validates or the side
/// would exceed `params.max_patch_growth` or stop growing at the image edge.
pub fn grow_patch_and_refit(
    patch: &PatchRef,
    img: &Image,
    params: &ClassifierParams,
    seed_base: u64,
) -> std::result::Result<AdaptiveFit, LineFailure> {
    let mut current = *patch;
    let mut last = LineFailure::InsufficientSupport;
    let mut steps = 0;
    loop {
        let half = 2 * current.half_size + 1;
        if 2 * half + 1 > params.max_patch_growth {
            return Err(last);
        }
        let grown = PatchRef::centered(current.center.0, current.center.1, half, img.width(), img.height());
        if grown.pixel_count() == current.pixel_count() {
            return Err(last);
        }
        steps += 1;
        match fit_and_validate(&grown, img, params, patch_seed(seed_base, grown.center)) {
            Ok(line) => {
                return Ok(AdaptiveFit {
                    line,
                    growth_steps: steps,
                })
            }
            Err(e) => last = e,
        }
        current = grown;
    }
}

/// Fits on `patch`, falling back to [`grow_patch_and_refit`] on failure.
pub fn fit_patch_adaptive(
    patch: &PatchRef,
    img: &Image,
    params: &ClassifierParams,
    seed_base: u64,
) -> std::result::Result<AdaptiveFit, LineFailure> {
    match fit_and_validate(patch, img, params, patch_seed(seed_base, patch.center)) {
        Ok(line) => Ok(AdaptiveFit {
            line,
            growth_steps: 0,
        }),
        Err(_) => grow_patch_and_refit(patch, img, params, seed_base),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::to_feature_vector;

    fn fv(rgb: Rgb) -> FeatureVector {
        FeatureVector([rgb[0], rgb[1], rgb[2], 0.0, 0.0])
    }

    fn angle_deg(a: Vec3, b: Vec3) -> f64 {
        linalg::line_angle_deg(a, b)
    }

    /// 7x7 image whose pixels lie on `origin + ρ·dir` for ρ spread over `span`.
    fn line_image(origin: Vec3, dir: Vec3, span: (f64, f64)) -> Image {
        Image::from_fn(7, 7, |x, y| {
            let k = (y * 7 + x) as f64 / 48.0;
            let rho = span.0 + (span.1 - span.0) * ((k * 17.0) % 1.0);
            linalg::add(origin, linalg::scale(dir, rho))
        })
        .unwrap()
    }

    fn whole(img: &Image) -> PatchRef {
        PatchRef::centered(img.width() / 2, img.height() / 2, img.width().max(img.height()), img.width(), img.height())
    }

    #[test]
    fn on_line_pixel_is_inlier() {
        let p = classify_patch_pixels(&[fv([0.3, 0.4, 0.5])], [0.1, 0.2, 0.3], [1.0, 1.0, 1.0], &ClassifierParams::default())
            .unwrap();
        assert!(p[0] > 0.5);
    }

    #[test]
    fn outlier_prior_zero_gives_certain_inliers() {
        let params = ClassifierParams {
            inlier_prior: 1.0,
            ..Default::default()
        };
        let px = [fv([0.9, 0.0, 0.1]), fv([0.0, 0.0, 0.0]), fv([0.5, 0.5, 0.5])];
        let p = classify_patch_pixels(&px, [0.2; 3], [0.0, 0.0, 1.0], &params).unwrap();
        assert!(p.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_patch_is_error() {
        assert!(classify_patch_pixels(&[], [0.0; 3], [1.0, 0.0, 0.0], &ClassifierParams::default()).is_err());
        assert!(classify_patch_pixels(&[fv([0.1; 3])], [0.0; 3], [0.0; 3], &ClassifierParams::default()).is_err());
    }

    #[test]
    fn posterior_matches_hand_evaluated_product() {
        // two classes, three features, five samples with tabulated likelihoods
        let priors = [0.3, 0.7];
        let tables: [[[f64; 3]; 2]; 5] = [
            [[0.9, 0.8, 0.7], [0.1, 0.2, 0.3]],
            [[0.5, 0.5, 0.5], [0.5, 0.5, 0.5]],
            [[0.2, 0.9, 0.4], [0.6, 0.3, 0.8]],
            [[1e-3, 0.5, 0.9], [0.9, 0.9, 0.9]],
            [[0.7, 0.1, 0.6], [0.2, 0.4, 0.05]],
        ];
        for t in tables {
            let j0 = 0.3 * t[0][0] * t[0][1] * t[0][2];
            let j1 = 0.7 * t[1][0] * t[1][1] * t[1][2];
            let expected = [j0 / (j0 + j1), j1 / (j0 + j1)];
            let got = naive_bayes_posterior(&priors, &[t[0].to_vec(), t[1].to_vec()]);
            for k in 0..2 {
                assert!((got[k] - expected[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn classifier_agrees_with_generic_posterior() {
        let params = ClassifierParams::default();
        let p0 = [0.2, 0.1, 0.3];
        let dir = normalize([0.5, 0.7, 0.2], 0.0).unwrap();
        for c in [[0.25, 0.2, 0.31], [0.9, 0.1, 0.1], [0.21, 0.11, 0.3]] {
            let r = residual(c, p0, dir);
            let g = |v: f64| log_gaussian(v, params.inlier_sigma).exp();
            let expected = naive_bayes_posterior(&[0.5, 0.5], &[r.iter().map(|&v| g(v)).collect(), vec![1.0; 3]]);
            let got = classify_patch_pixels(&[fv(c)], p0, dir, &params).unwrap();
            assert!((got[0] - expected[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_line_is_recovered() {
        let dir = [0.57735, 0.57735, 0.57735];
        let img = line_image([0.2; 3], dir, (0.0, 0.9));
        let line = fit_color_line(&whole(&img), &img, &ClassifierParams::default(), 1).unwrap();
        assert_eq!(line.support, 49);
        assert!(angle_deg(line.dir, dir) < 0.5);
        // the gray diagonal passes through the origin
        assert!(line.offset < 1e-5);
        assert!(dot(line.normal, line.dir).abs() < 1e-9);

        let dir = normalize([0.3, 0.6, 0.74], 0.0).unwrap();
        let img = line_image([0.2; 3], dir, (0.0, 0.9));
        let line = fit_color_line(&whole(&img), &img, &ClassifierParams::default(), 1).unwrap();
        assert_eq!(line.support, 49);
        assert!(angle_deg(line.dir, dir) < 0.5);
    }

    #[test]
    fn degenerate_and_small_patches() {
        let img = Image::filled(7, 7, [0.4, 0.2, 0.1]).unwrap();
        assert_eq!(
            fit_color_line(&whole(&img), &img, &ClassifierParams::default(), 0).unwrap_err(),
            LineFailure::DegeneratePatch
        );
        let img = Image::from_fn(2, 3, |x, y| [x as f64 * 0.3, y as f64 * 0.2, 0.1]).unwrap();
        assert_eq!(
            fit_color_line(&whole(&img), &img, &ClassifierParams::default(), 0).unwrap_err(),
            LineFailure::TooFewPixels
        );
    }

    #[test]
    fn planted_inliers_with_noise() {
        let dir = normalize([0.8, 0.5, 0.33], 0.0).unwrap();
        let origin = [0.3, 0.3, 0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let img = Image::from_fn(7, 7, |x, y| {
            let i = y * 7 + x;
            if i % 5 == 4 {
                [rng.random(), rng.random(), rng.random()]
            } else {
                linalg::add(origin, linalg::scale(dir, -0.3 + 0.6 * (i as f64 / 48.0)))
            }
        })
        .unwrap();
        let line = fit_color_line(&whole(&img), &img, &ClassifierParams::default(), 4).unwrap();
        assert!(line.support as f64 >= 0.8 * 49.0 - 2.0, "support {}", line.support);
        assert!(angle_deg(line.dir, dir) < 2.0);
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = Image::from_fn(9, 9, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
        let params = ClassifierParams {
            min_inlier_fraction: 0.21,
            inlier_sigma: 0.2,
            ..Default::default()
        };
        let a = fit_color_line(&whole(&img), &img, &params, 42);
        let b = fit_color_line(&whole(&img), &img, &params, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn normal_is_orthogonal() {
        let dir = normalize([0.9, 0.3, 0.1], 0.0).unwrap();
        let img = line_image([0.05, 0.3, 0.4], dir, (0.0, 0.5));
        let line = fit_color_line(&whole(&img), &img, &ClassifierParams::default(), 3).unwrap();
        assert!((linalg::norm(line.dir) - 1.0).abs() < 1e-9);
        assert!((linalg::norm(line.normal) - 1.0).abs() < 1e-9);
        assert!(dot(line.normal, line.dir).abs() < 1e-9);
        assert!(dot(line.normal, line.p0).abs() < 1e-9);
        assert!(dot(line.normal, line.p1).abs() < 1e-9);
    }

    fn line_with_dir(dir: Vec3, img: &Image) -> ColorLine {
        ColorLine {
            p0: [0.1, 0.2, 0.3],
            p1: linalg::add([0.1, 0.2, 0.3], dir),
            dir,
            normal: normalize(cross(linalg::add([0.1, 0.2, 0.3], dir), [0.1, 0.2, 0.3]), 0.0).unwrap(),
            inliers: (0..49).collect(),
            support: 49,
            offset: 0.1,
            patch: whole(img),
        }
    }

    #[test]
    fn negative_direction_is_flipped() {
        let img = Image::filled(7, 7, [0.5; 3]).unwrap();
        let line = line_with_dir([-0.6, -0.6, -0.53], &img);
        let stats = PatchStats {
            pixel_count: 49,
            projections: (0..49).map(|i| i as f64 / 49.0).collect(),
        };
        let ok = validate_color_line(&line, &stats, &ClassifierParams::default()).unwrap();
        assert_eq!(ok.dir, [0.6, 0.6, 0.53]);
    }

    #[test]
    fn mixed_signs_fail_slope_check() {
        let img = Image::filled(7, 7, [0.5; 3]).unwrap();
        let line = line_with_dir([0.9, -0.3, 0.3], &img);
        let stats = PatchStats {
            pixel_count: 49,
            projections: (0..49).map(|i| i as f64 / 49.0).collect(),
        };
        assert_eq!(
            validate_color_line(&line, &stats, &ClassifierParams::default()).unwrap_err(),
            LineFailure::PositiveSlope
        );
    }

    #[test]
    fn low_support_fails_first() {
        let img = Image::filled(7, 7, [0.5; 3]).unwrap();
        let mut line = line_with_dir([0.9, -0.3, 0.3], &img);
        line.support = 10;
        let stats = PatchStats {
            pixel_count: 49,
            projections: vec![0.0; 10],
        };
        assert_eq!(
            validate_color_line(&line, &stats, &ClassifierParams::default()).unwrap_err(),
            LineFailure::InsufficientSupport
        );
    }

    #[test]
    fn two_clusters_fail_unimodality() {
        let dir = normalize([0.7, 0.5, 0.3], 0.0).unwrap();
        let origin = [0.3, 0.2, 0.25];
        let img = Image::from_fn(7, 7, |x, y| {
            let rho = if (x + y) % 2 == 0 { 0.05 } else { 0.45 } + 0.001 * x as f64;
            linalg::add(origin, linalg::scale(dir, rho))
        })
        .unwrap();
        let line = fit_color_line(&whole(&img), &img, &ClassifierParams::default(), 8).unwrap();
        let stats = PatchStats::new(&line, &img);
        assert_eq!(
            validate_color_line(&line, &stats, &ClassifierParams::default()).unwrap_err(),
            LineFailure::Unimodality
        );
    }

    #[test]
    fn shading_ramps_are_unimodal() {
        // seven evenly spaced shading levels leave empty histogram bins
        let v: Vec<f64> = (0..49).map(|i| (i % 7) as f64 / 6.0).collect();
        assert!(is_unimodal(&v));
        let gauss: Vec<f64> = (0..200).map(|i| ((i as f64 / 200.0) - 0.5).powi(3)).collect();
        assert!(is_unimodal(&gauss));
        let two: Vec<f64> = (0..40).map(|i| if i < 20 { 0.0 } else { 1.0 }).collect();
        assert!(!is_unimodal(&two));
    }

    #[test]
    fn grows_until_structure_appears() {
        // 31x31 image: random noise except a colored, shaded ring beyond radius 3
        let dir = normalize([0.8, 0.45, 0.2], 0.0).unwrap();
        let origin = [0.2, 0.2, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let img = Image::from_fn(31, 31, |x, y| {
            let (dx, dy) = (x as i64 - 15, y as i64 - 15);
            if dx.abs() <= 3 && dy.abs() <= 3 {
                [rng.random(), rng.random(), rng.random()]
            } else {
                linalg::add(origin, linalg::scale(dir, 0.04 * ((x + 2 * y) % 13) as f64))
            }
        })
        .unwrap();
        let params = ClassifierParams::default();
        let start = PatchRef::centered(15, 15, 3, 31, 31);
        assert!(fit_and_validate(&start, &img, &params, patch_seed(0, start.center)).is_err());
        let fit = fit_patch_adaptive(&start, &img, &params, 0).unwrap();
        assert_eq!(fit.growth_steps, 1);
        assert_eq!(fit.line.patch.pixel_count(), 15 * 15);
        assert!(angle_deg(fit.line.dir, dir) < 2.0);
    }

    #[test]
    fn pure_noise_fails_at_every_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let img = Image::from_fn(31, 31, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
        let start = PatchRef::centered(15, 15, 3, 31, 31);
        assert!(fit_patch_adaptive(&start, &img, &ClassifierParams::default(), 5).is_err());
    }

    #[test]
    fn success_at_first_size_skips_growth() {
        let dir = normalize([0.2, 0.5, 0.84], 0.0).unwrap();
        let img = Image::from_fn(21, 21, |x, y| linalg::add([0.4, 0.3, 0.2], linalg::scale(dir, 0.01 * ((x * 3 + y) % 29) as f64)))
            .unwrap();
        let start = PatchRef::centered(10, 10, 3, 21, 21);
        let fit = fit_patch_adaptive(&start, &img, &ClassifierParams::default(), 5).unwrap();
        assert_eq!(fit.growth_steps, 0);
        assert_eq!(fit.line.patch, start);
    }

    #[test]
    fn features_feed_classifier() {
        let img = Image::filled(3, 3, [0.5, 0.4, 0.3]).unwrap();
        let feats: Vec<_> = (0..9).map(|i| to_feature_vector(&img, i % 3, i / 3, 0.1).unwrap()).collect();
        let p = classify_patch_pixels(&feats, [0.5, 0.4, 0.3], [1.0, 0.0, 0.0], &ClassifierParams::default()).unwrap();
        assert!(p.iter().all(|&v| v > 0.99));
    }
}
