//! End-to-end dehazing of one image.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::airlight::{
    estimate_airlight_magnitude, magnitude_sigma, refine_airlight_direction, splat_estimate,
    validate_airlight_magnitude, MagnitudeFailure,
};
use crate::color_line::{fit_patch_adaptive, ColorLine, PatchStats};
use crate::config::PipelineConfig;
use crate::dark_channel::{
    dark_channel, estimate_airlight_dcp, estimate_transmission_dcp, max_filter_anchor_points, Anchor,
};
use crate::error::{Error, Result};
use crate::image::{iterate_patches, Image, Rgb, ScalarMap};
use crate::linalg::{normalize, Vec3};
use crate::recovery::{contrast_restore, direct_transmission_component, gamma_correct, recover_radiance, RecoveryMode};
use crate::regularization::{
    assemble_interpolation_system, default_max_iter, nn_regularize_transmission, solve_airlight_field, Sample,
    SparseField,
};

/// Where the airlight direction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionSource {
    /// Smallest eigenvector of the color-line normals.
    ColorLines,
    /// Too few usable lines; the normalized dark-channel airlight color.
    DarkChannel,
}

/// Diagnostics of the airlight estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct AirlightReport {
    /// Global airlight color from the dark channel.
    pub dcp_airlight: Rgb,
    pub direction: Vec3,
    pub direction_source: DirectionSource,
    pub patches: usize,
    pub lines_fitted: usize,
    /// Lines that needed a larger window before validating.
    pub lines_grown: usize,
    pub lines_for_direction: usize,
    pub line_failures: BTreeMap<&'static str, usize>,
    pub accepted: usize,
    pub rejected: usize,
    pub magnitude_failures: BTreeMap<&'static str, usize>,
    /// Residual sums of the direction refinement, one per accepted iterate.
    pub trace: Vec<f64>,
    pub solver_iterations: usize,
    pub solver_residual: f64,
    pub anchors: usize,
    /// Pixels whose contrast-restore denominator was clamped.
    pub saturated: usize,
}

impl AirlightReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let v = |x: [f64; 3]| format!("{:.9} {:.9} {:.9}", x[0], x[1], x[2]);
        let _ = writeln!(s, "dcp_airlight: {}", v(self.dcp_airlight));
        let _ = writeln!(s, "direction: {}", v(self.direction));
        let _ = writeln!(
            s,
            "direction_source: {}",
            match self.direction_source {
                DirectionSource::ColorLines => "color_lines",
                DirectionSource::DarkChannel => "dark_channel",
            }
        );
        let _ = writeln!(s, "patches: {}", self.patches);
        let _ = writeln!(s, "lines_fitted: {}", self.lines_fitted);
        let _ = writeln!(s, "lines_grown: {}", self.lines_grown);
        let _ = writeln!(s, "lines_for_direction: {}", self.lines_for_direction);
        for (k, n) in &self.line_failures {
            let _ = writeln!(s, "line_failure.{}: {n}", k.replace(' ', "_"));
        }
        let _ = writeln!(s, "accepted: {}", self.accepted);
        let _ = writeln!(s, "rejected: {}", self.rejected);
        for (k, n) in &self.magnitude_failures {
            let _ = writeln!(s, "rejected.{}: {n}", k.replace(' ', "_"));
        }
        let trace: Vec<String> = self.trace.iter().map(|t| format!("{t:.9}")).collect();
        let _ = writeln!(s, "residual_trace: {}", trace.join(" "));
        let _ = writeln!(s, "solver_iterations: {}", self.solver_iterations);
        let _ = writeln!(s, "solver_residual: {:.6e}", self.solver_residual);
        let _ = writeln!(s, "anchors: {}", self.anchors);
        let _ = writeln!(s, "saturated: {}", self.saturated);
        s
    }
}

/// Intermediate maps kept for debugging.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMaps {
    pub dark_channel: ScalarMap,
    pub raw_transmission: ScalarMap,
    /// Anchor transmission at anchor pixels, 0 elsewhere.
    pub anchors: ScalarMap,
    /// Sparse magnitude samples, NaN where unset.
    pub sparse_airlight: ScalarMap,
    pub airlight: ScalarMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub dehazed: Image,
    pub transmission: ScalarMap,
    pub report: AirlightReport,
    pub stages: StageMaps,
}

/// Runs the pipeline on `config.threads` workers (0 means the global pool).
pub fn run(img: &Image, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let smallest = config.dcp.patch_size.max(config.line_patch).max(config.anchor_window);
    if img.width() < smallest || img.height() < smallest {
        return Err(Error::config(format!(
            "a {}x{} image is smaller than the {smallest}-pixel window",
            img.width(),
            img.height()
        )));
    }
    if config.threads == 0 {
        return run_stages(img, config);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| run_stages(img, config))
}

fn run_stages(img: &Image, config: &PipelineConfig) -> Result<PipelineOutput> {
    let (w, h) = (img.width(), img.height());

    let dark = dark_channel(img, config.dcp.patch_size).map_err(|e| e.in_stage("dark channel"))?;
    let a0 = estimate_airlight_dcp(img, &dark, config.airlight_top_fraction).map_err(|e| e.in_stage("dark channel"))?;
    let t_raw = estimate_transmission_dcp(img, a0, &config.dcp).map_err(|e| e.in_stage("transmission"))?;
    let anchors = max_filter_anchor_points(&t_raw, config.anchor_window, config.anchor_fraction)
        .map_err(|e| e.in_stage("anchors"))?;

    let patches = iterate_patches(img, config.line_patch, config.line_stride).map_err(|e| e.in_stage("color lines"))?;
    let fits: Vec<_> = patches
        .par_iter()
        .map(|p| fit_patch_adaptive(p, img, &config.classifier, config.seed))
        .collect();
    let mut line_failures = BTreeMap::new();
    let mut lines: Vec<ColorLine> = Vec::new();
    let mut lines_grown = 0;
    for fit in fits {
        match fit {
            Ok(f) => {
                lines_grown += usize::from(f.growth_steps > 0);
                lines.push(f.line);
            }
            Err(e) => *line_failures.entry(e.reason()).or_insert(0) += 1,
        }
    }

    let usable: Vec<ColorLine> = lines
        .iter()
        .filter(|l| l.offset >= config.airlight.min_line_offset)
        .cloned()
        .collect();
    let (direction, direction_source, trace) = if usable.len() >= 3 {
        let r = refine_airlight_direction(&usable, &config.airlight).map_err(|e| e.in_stage("airlight direction"))?;
        (r.direction, DirectionSource::ColorLines, r.trace)
    } else {
        let d = normalize(a0, 1e-9).ok_or_else(|| {
            Error::IllConditionedAirlight(format!("{} usable color lines and a black airlight", usable.len()))
                .in_stage("airlight direction")
        })?;
        (d, DirectionSource::DarkChannel, Vec::new())
    };

    let mut field = SparseField::empty(w, h);
    let mut magnitude_failures = BTreeMap::new();
    let mut accepted = 0;
    for line in &lines {
        let outcome = match estimate_airlight_magnitude(line, direction) {
            Ok(fit) => {
                let stats = PatchStats::new(line, img);
                validate_airlight_magnitude(line, &fit, &stats, direction, &config.airlight).map(|_| fit)
            }
            Err(_) => Err(MagnitudeFailure::IntersectionAngle),
        };
        match outcome {
            Ok(fit) => {
                accepted += 1;
                let sample = Sample {
                    value: fit.s,
                    sigma: magnitude_sigma(&fit, line.support),
                };
                splat_estimate(&mut field, line, sample);
            }
            Err(f) => *magnitude_failures.entry(f.reason()).or_insert(0) += 1,
        }
    }

    let upper = config.airlight.magnitude_limit(direction);
    let (airlight, solver_iterations, solver_residual) = if field.count() == 0 {
        (ScalarMap::filled(w, h, 0.0), 0, 0.0)
    } else {
        let system = assemble_interpolation_system(&field, img, config.alpha, config.beta, config.eps)
            .map_err(|e| e.in_stage("airlight interpolation"))?;
        let max_iter = config.max_iter.unwrap_or_else(|| default_max_iter(w * h));
        let sol = solve_airlight_field(&system, config.tol, max_iter, upper)
            .map_err(|e| e.in_stage("airlight interpolation"))?;
        (sol.field, sol.iterations, sol.residual)
    };

    let transmission =
        nn_regularize_transmission(img, &anchors, config.lambda).map_err(|e| e.in_stage("regularization"))?;

    let (restored, saturated) = match config.recovery.mode {
        RecoveryMode::TransmissionRecovery => (
            recover_radiance(img, &transmission, a0, &config.recovery).map_err(|e| e.in_stage("recovery"))?,
            0,
        ),
        RecoveryMode::AirlightSubtraction => {
            let jt = direct_transmission_component(img, &airlight, direction).map_err(|e| e.in_stage("recovery"))?;
            let r = contrast_restore(&jt, &airlight, direction).map_err(|e| e.in_stage("recovery"))?;
            (r.image, r.saturated)
        }
    };
    let dehazed = gamma_correct(&restored, config.recovery.gamma).map_err(|e| e.in_stage("gamma"))?;

    let report = AirlightReport {
        dcp_airlight: a0,
        direction,
        direction_source,
        patches: patches.len(),
        lines_fitted: lines.len(),
        lines_grown,
        lines_for_direction: usable.len(),
        line_failures,
        accepted,
        rejected: lines.len() - accepted,
        magnitude_failures,
        trace,
        solver_iterations,
        solver_residual,
        anchors: anchors.len(),
        saturated,
    };
    let stages = StageMaps {
        dark_channel: dark,
        raw_transmission: t_raw,
        anchors: anchor_map(w, h, &anchors),
        sparse_airlight: field.to_map(),
        airlight,
    };
    Ok(PipelineOutput {
        dehazed,
        transmission,
        report,
        stages,
    })
}

fn anchor_map(w: usize, h: usize, anchors: &[Anchor]) -> ScalarMap {
    let mut m = ScalarMap::filled(w, h, 0.0);
    for a in anchors {
        m.set(a.x, a.y, a.t);
    }
    m
}
