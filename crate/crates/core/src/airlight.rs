//! Global airlight direction and per-patch airlight magnitudes.
//!
//! Every color line of a hazy patch lies in the plane spanned by the patch
//! reflectance and the airlight vector, so the airlight direction `Â` is
//! orthogonal to every line's plane normal `N`. It is recovered as the unit
//! vector minimizing `Σ w (N · Â)²`, i.e. the eigenvector of `Σ w N Nᵀ` with
//! the smallest eigenvalue. Each line is then intersected with the `Â` axis
//! to read off the airlight magnitude in its patch.

use std::fmt;

use crate::color_line::{ColorLine, PatchStats};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, line_angle_deg, norm, scale, sub, sym3_eigen, Sym3, Vec3};
use crate::regularization::{Sample, SparseField};

/// Thresholds for magnitude validation and direction refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct AirlightParams {
    /// Smallest accepted angle between a line and `Â`, in degrees.
    pub min_angle_deg: f64,
    /// Largest accepted closest-approach distance.
    pub max_residual: f64,
    /// Upper end of the accepted magnitude range. `None` uses the largest
    /// magnitude that keeps `s·Â` inside the RGB cube.
    pub max_magnitude: Option<f64>,
    /// Smallest accepted spread of inlier projections along the line.
    pub min_spread: f64,
    /// Lines closer than this to the RGB origin carry no usable normal.
    pub min_line_offset: f64,
    /// Weight normals by inlier support.
    pub weight_by_support: bool,
    /// Reweighting rounds after the initial direction estimate.
    pub refine_iterations: usize,
}

impl Default for AirlightParams {
    fn default() -> Self {
        AirlightParams {
            min_angle_deg: 15.0,
            max_residual: 0.05,
            max_magnitude: None,
            min_spread: 0.02,
            min_line_offset: 0.02,
            weight_by_support: true,
            refine_iterations: 5,
        }
    }
}

impl AirlightParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..90.0).contains(&self.min_angle_deg) {
            return Err(Error::config("min_angle_deg must lie in [0, 90)"));
        }
        if !(self.max_residual > 0.0 && self.max_residual.is_finite()) {
            return Err(Error::config("max_residual must be positive"));
        }
        if let Some(m) = self.max_magnitude {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::config("max_magnitude must be positive"));
            }
        }
        if !(self.min_spread >= 0.0 && self.min_spread.is_finite()) {
            return Err(Error::config("min_spread must be >= 0"));
        }
        if !(self.min_line_offset >= 0.0 && self.min_line_offset.is_finite()) {
            return Err(Error::config("min_line_offset must be >= 0"));
        }
        Ok(())
    }

    /// Upper magnitude bound for direction `dir`.
    pub fn magnitude_limit(&self, dir: Vec3) -> f64 {
        self.max_magnitude.unwrap_or_else(|| cube_limit(dir))
    }
}

/// Largest `s` with `s·dir` inside the unit RGB cube.
pub fn cube_limit(dir: Vec3) -> f64 {
    let m = dir.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        1.0 / m
    } else {
        f64::INFINITY
    }
}

/// Tolerance on the gap between the two smallest eigenvalues.
const EIGEN_TIE: f64 = 1e-9;
/// `|D · Â|` at or above `1 - PARALLEL_EPS` counts as parallel.
const PARALLEL_EPS: f64 = 1e-9;

/// Airlight direction from unit plane normals, each weighted equally.
pub fn estimate_airlight_direction(normals: &[Vec3]) -> Result<Vec3> {
    estimate_airlight_direction_weighted(normals, &vec![1.0; normals.len()])
}

/// Airlight direction minimizing `Σ wᵢ (Nᵢ · Â)²`.
///
/// The scatter matrix is accumulated in slice order and normalized by the
/// total weight before the eigenvalue tie check. The result is oriented into
/// the positive octant.
pub fn estimate_airlight_direction_weighted(normals: &[Vec3], weights: &[f64]) -> Result<Vec3> {
    if normals.len() != weights.len() {
        return Err(Error::invalid("one weight per normal is required"));
    }
    if normals.len() < 3 {
        return Err(Error::IllConditionedAirlight(format!(
            "{} normals, at least 3 are required",
            normals.len()
        )));
    }
    let mut m: Sym3 = [[0.0; 3]; 3];
    let mut total = 0.0;
    for (n, &w) in normals.iter().zip(weights) {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::invalid(format!("normal weight must be finite and >= 0, got {w}")));
        }
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += w * n[i] * n[j];
            }
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::IllConditionedAirlight("all normal weights are zero".into()));
    }
    for row in &mut m {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let eig = sym3_eigen(&m);
    if eig.values[1] - eig.values[0] <= EIGEN_TIE {
        return Err(Error::IllConditionedAirlight(format!(
            "smallest eigenvalue is not unique ({:.3e}, {:.3e})",
            eig.values[0], eig.values[1]
        )));
    }
    orient_positive(eig.vectors[0])
}

/// Flips `v` towards the positive octant and drops any remaining negative
/// components.
fn orient_positive(v: Vec3) -> Result<Vec3> {
    let v = if v[0] + v[1] + v[2] < 0.0 { scale(v, -1.0) } else { v };
    let clipped = [v[0].max(0.0), v[1].max(0.0), v[2].max(0.0)];
    linalg::normalize(clipped, 1e-12)
        .ok_or_else(|| Error::IllConditionedAirlight(format!("direction {v:?} has no positive-octant orientation")))
}

/// Closest approach between a color line and the airlight axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeFit {
    /// Position along the color line.
    pub rho: f64,
    /// Airlight magnitude: position along `Â`.
    pub s: f64,
    /// Distance between the two closest points.
    pub residual: f64,
}

/// Minimizes `|P0 + ρD - sÂ|²` over `(ρ, s)`.
pub fn estimate_airlight_magnitude(line: &ColorLine, dir: Vec3) -> Result<MagnitudeFit> {
    closest_approach(line.p0, line.dir, dir)
}

/// Closed-form solution of the 2x2 normal equations for unit `d` and `a`.
pub fn closest_approach(p0: Vec3, d: Vec3, a: Vec3) -> Result<MagnitudeFit> {
    let c = dot(d, a);
    if c.abs() >= 1.0 - PARALLEL_EPS {
        return Err(Error::ParallelLines);
    }
    let pd = dot(p0, d);
    let pa = dot(p0, a);
    let det = 1.0 - c * c;
    let rho = (-pd + c * pa) / det;
    let s = (pa - c * pd) / det;
    let gap = sub(linalg::add(p0, scale(d, rho)), scale(a, s));
    Ok(MagnitudeFit { rho, s, residual: norm(gap) })
}

/// Closest-approach distance, defined for parallel lines as the distance of
/// `p0` from the airlight axis.
pub fn approach_residual(line: &ColorLine, dir: Vec3) -> f64 {
    match estimate_airlight_magnitude(line, dir) {
        Ok(fit) => fit.residual,
        Err(_) => norm(sub(line.p0, scale(dir, dot(line.p0, dir)))),
    }
}

/// Reasons a magnitude estimate is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagnitudeFailure {
    IntersectionAngle,
    CloseIntersection,
    ValidRange,
    ShadingVariability,
}

impl MagnitudeFailure {
    pub fn reason(&self) -> &'static str {
        match self {
            MagnitudeFailure::IntersectionAngle => "intersection angle",
            MagnitudeFailure::CloseIntersection => "close intersection",
            MagnitudeFailure::ValidRange => "valid range",
            MagnitudeFailure::ShadingVariability => "shading variability",
        }
    }
}

impl fmt::Display for MagnitudeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.reason())
    }
}

/// Checks angle, closeness, range and shading spread, in that order.
pub fn validate_airlight_magnitude(
    line: &ColorLine,
    fit: &MagnitudeFit,
    stats: &PatchStats,
    dir: Vec3,
    params: &AirlightParams,
) -> std::result::Result<(), MagnitudeFailure> {
    if line_angle_deg(line.dir, dir) < params.min_angle_deg {
        return Err(MagnitudeFailure::IntersectionAngle);
    }
    if !(fit.residual <= params.max_residual) {
        return Err(MagnitudeFailure::CloseIntersection);
    }
    if !(fit.s >= 0.0 && fit.s <= params.magnitude_limit(dir)) {
        return Err(MagnitudeFailure::ValidRange);
    }
    if stats.spread() < params.min_spread {
        return Err(MagnitudeFailure::ShadingVariability);
    }
    Ok(())
}

/// Per-patch spread of the magnitude estimate.
pub fn magnitude_sigma(fit: &MagnitudeFit, support: usize) -> f64 {
    fit.residual / (support.max(1) as f64).sqrt()
}

/// Airlight direction plus the sparse magnitude samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AirlightModel {
    pub direction: Vec3,
    /// Magnitude `a(x)` and its spread, set at the inliers of accepted patches.
    pub magnitudes: SparseField,
}

/// Outcome of [`refine_airlight_direction`].
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionRefinement {
    pub direction: Vec3,
    /// Sum of closest-approach residuals over all lines, one entry per
    /// accepted iterate.
    pub trace: Vec<f64>,
}

/// Estimates `Â` from the lines' normals, then reweights each normal by
/// `base / (r + δ)` where `r` is its line's current residual against `Â`.
/// An iterate is kept only if the residual sum does not grow, so the
/// recorded trace is non-increasing.
pub fn refine_airlight_direction(lines: &[ColorLine], params: &AirlightParams) -> Result<DirectionRefinement> {
    const DELTA: f64 = 1e-3;
    let normals: Vec<Vec3> = lines.iter().map(|l| l.normal).collect();
    let base: Vec<f64> = lines
        .iter()
        .map(|l| if params.weight_by_support { l.support as f64 } else { 1.0 })
        .collect();
    let total_residual = |dir: Vec3| -> f64 { lines.iter().map(|l| approach_residual(l, dir)).sum() };

    let mut direction = estimate_airlight_direction_weighted(&normals, &base)?;
    let mut current = total_residual(direction);
    let mut trace = vec![current];
    for _ in 0..params.refine_iterations {
        let weights: Vec<f64> = lines
            .iter()
            .zip(&base)
            .map(|(l, b)| b / (approach_residual(l, direction) + DELTA))
            .collect();
        let candidate = match estimate_airlight_direction_weighted(&normals, &weights) {
            Ok(d) => d,
            Err(_) => break,
        };
        let next = total_residual(candidate);
        if !(next <= current) || candidate == direction {
            break;
        }
        direction = candidate;
        current = next;
        trace.push(current);
    }
    Ok(DirectionRefinement { direction, trace })
}

/// Writes `sample` at every inlier of `line`; later calls overwrite earlier ones.
pub fn splat_estimate(field: &mut SparseField, line: &ColorLine, sample: Sample) {
    for &i in &line.inliers {
        field.set(i, sample);
    }
}
