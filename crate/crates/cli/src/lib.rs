//! The `dehaze` command line tool: dehaze an image, synthesize a hazy scene,
//! or evaluate a result against a reference.
//!
//! Every command stages all of its output files and renames them into place
//! together, so a failed run leaves no partial outputs behind.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dehaze_core::airlight::cube_limit;
use dehaze_core::config::PipelineConfig;
use dehaze_core::io::{encode_image, encode_map, load_image, load_map, write_all_atomic, ImageFormat};
use dehaze_core::metrics::{evaluate, PeakScale, QualityReport, TransmissionPair};
use dehaze_core::pipeline::{self, PipelineOutput};
use dehaze_core::synthesis::{synthesize, SceneFile};
use dehaze_core::{Error, Result, ScalarMap};

#[derive(Debug, Parser)]
#[command(name = "dehaze", version, about = "Single-image dehazing with dark channel and color-line airlight estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remove haze from an image.
    Dehaze(DehazeArgs),
    /// Render a hazy image, its transmission and its radiance from a scene file.
    Synthesize(SynthesizeArgs),
    /// Compare a result image with a reference.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DehazeArgs {
    /// Hazy input image (.png or .ppm).
    pub input: PathBuf,
    /// Dehazed output image (.png or .ppm).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dark channel window.
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Recovery mode: `trans` or `airlight`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write intermediate maps into this directory.
    #[arg(long)]
    pub dump_stages: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthesizeArgs {
    /// Scene file of `key = value` lines.
    pub spec: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Result image; omitted with `--batch`.
    #[arg(required_unless_present = "batch")]
    pub result: Option<PathBuf>,
    /// Reference image; omitted with `--batch`.
    #[arg(required_unless_present = "batch")]
    pub reference: Option<PathBuf>,
    /// Estimated transmission map.
    #[arg(long, requires = "t_true")]
    pub t_est: Option<PathBuf>,
    /// True transmission map.
    #[arg(long, requires = "t_est")]
    pub t_true: Option<PathBuf>,
    /// Leave sky pixels (true transmission below 0.05) out of the transmission error.
    #[arg(long)]
    pub mask_sky: bool,
    /// Use a peak of 255 for PSNR and WSNR.
    #[arg(long)]
    pub peak255: bool,
    /// Directory with `result/` and `reference/` subdirectories, and optionally
    /// `t_est/` and `t_true/`, matched by file name.
    #[arg(long, conflicts_with_all = ["result", "reference", "t_est", "t_true"])]
    pub batch: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Process exit status for `err`: 2 for configuration and input errors,
/// 3 for file errors, 4 for numerical failures.
pub fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidInput(_) | Error::DimensionMismatch { .. } => 2,
        Error::Io { .. } | Error::ImageCodec { .. } => 3,
        Error::IllConditionedAirlight(_)
        | Error::ParallelLines
        | Error::SolverDidNotConverge { .. }
        | Error::OutOfBounds { .. } => 4,
        Error::Stage { .. } => unreachable!("root strips stage tags"),
    }
}

/// Files written next to a dehazed image `out.png`: `out.transmission.png`,
/// `out.airlight.txt` and `out.manifest.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DehazePaths {
    pub image: PathBuf,
    pub transmission: PathBuf,
    pub report: PathBuf,
    pub manifest: PathBuf,
}

impl DehazePaths {
    pub fn for_output(output: &Path) -> DehazePaths {
        let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let sibling = |suffix: &str| output.with_file_name(format!("{stem}.{suffix}"));
        DehazePaths {
            image: output.to_path_buf(),
            transmission: sibling("transmission.png"),
            report: sibling("airlight.txt"),
            manifest: sibling("manifest.txt"),
        }
    }
}

/// Configuration from the optional file with command line overrides applied.
pub fn resolve_config(args: &DehazeArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = args.patch {
        config.dcp.patch_size = p;
    }
    if let Some(t0) = args.t0 {
        config.recovery.t0 = t0;
    }
    if let Some(g) = args.gamma {
        config.recovery.gamma = g;
    }
    if let Some(m) = &args.mode {
        config.set("mode", m)?;
    }
    if let Some(k) = args.threads {
        config.threads = k;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn stage_files(out: &PipelineOutput, dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    // magnitudes are stored relative to the largest one that stays in the RGB cube
    let limit = cube_limit(out.report.direction);
    let relative = |m: &ScalarMap| m.map(|v| if v.is_nan() { v } else { v / limit });
    let maps = [
        ("dark_channel.png", out.stages.dark_channel.clone()),
        ("raw_transmission.png", out.stages.raw_transmission.clone()),
        ("anchors.png", out.stages.anchors.clone()),
        ("sparse_airlight.png", relative(&out.stages.sparse_airlight)),
        ("airlight.png", relative(&out.stages.airlight)),
    ];
    maps.iter()
        .map(|(name, m)| Ok((dir.join(name), encode_map(m)?)))
        .collect()
}

/// Runs the pipeline on `args.input` and writes the dehazed image, the
/// transmission map, the airlight report and the run manifest.
pub fn run_dehaze(args: &DehazeArgs) -> Result<DehazePaths> {
    let config = resolve_config(args)?;
    let format = ImageFormat::from_path(&args.output)?;
    let img = load_image(&args.input)?;
    let out = pipeline::run(&img, &config)?;

    let paths = DehazePaths::for_output(&args.output);
    let mut manifest = config.manifest();
    manifest.push_str(&format!("input: {}\n", args.input.display()));
    manifest.push_str(&format!("output: {}\n", paths.image.display()));
    manifest.push_str(&format!("transmission: {}\n", paths.transmission.display()));
    manifest.push_str(&format!("report: {}\n", paths.report.display()));

    let mut files = vec![
        (paths.image.clone(), encode_image(&out.dehazed, format)?),
        (paths.transmission.clone(), encode_map(&out.transmission)?),
        (paths.report.clone(), out.report.to_text().into_bytes()),
    ];
    if let Some(dir) = &args.dump_stages {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        files.extend(stage_files(&out, dir)?);
        manifest.push_str(&format!("stages: {}\n", dir.display()));
    }
    files.push((paths.manifest.clone(), manifest.into_bytes()));
    write_all_atomic(&files)?;
    Ok(paths)
}

/// Files written by [`run_synthesize`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizePaths {
    pub hazy: PathBuf,
    pub transmission: PathBuf,
    pub radiance: PathBuf,
    pub manifest: PathBuf,
}

/// Renders the scene described by `args.spec` into `args.output`.
pub fn run_synthesize(args: &SynthesizeArgs) -> Result<SynthesizePaths> {
    let text = fs::read_to_string(&args.spec).map_err(|source| Error::Io {
        path: args.spec.clone(),
        source,
    })?;
    let scene_file = SceneFile::parse(&text, &args.spec)?;
    let base = args.spec.parent().unwrap_or(Path::new("."));
    let scene = synthesize(&scene_file.build(base)?)?;

    fs::create_dir_all(&args.output).map_err(|source| Error::Io {
        path: args.output.clone(),
        source,
    })?;
    let paths = SynthesizePaths {
        hazy: args.output.join("hazy.png"),
        transmission: args.output.join("transmission.png"),
        radiance: args.output.join("radiance.png"),
        manifest: args.output.join("manifest.txt"),
    };
    let mut manifest = scene_file.manifest();
    manifest.push_str(&format!("spec: {}\n", args.spec.display()));
    write_all_atomic(&[
        (paths.hazy.clone(), encode_image(&scene.hazy, ImageFormat::Png)?),
        (paths.transmission.clone(), encode_map(&scene.transmission)?),
        (paths.radiance.clone(), encode_image(&scene.radiance, ImageFormat::Png)?),
        (paths.manifest.clone(), manifest.into_bytes()),
    ])?;
    Ok(paths)
}

fn evaluate_files(
    result: &Path,
    reference: &Path,
    maps: Option<(&Path, &Path)>,
    mask_sky: bool,
    scale: PeakScale,
) -> Result<QualityReport> {
    let result = load_image(result)?;
    let reference = load_image(reference)?;
    let maps = match maps {
        Some((e, t)) => Some((load_map(e)?, load_map(t)?)),
        None => None,
    };
    let pair = maps.as_ref().map(|(estimate, truth)| TransmissionPair {
        estimate,
        truth,
        mask_sky,
    });
    evaluate(&result, &reference, pair, scale)
}

fn list_images(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_file() && ImageFormat::from_path(&path).is_ok() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// Per-image reports (or errors) and their mean.
#[derive(Debug)]
pub struct BatchReport {
    pub rows: Vec<(String, Result<QualityReport>)>,
    pub mean: Option<QualityReport>,
}

impl BatchReport {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|(_, r)| r.is_err()).count()
    }

    /// Rows prefixed `<name>.`, then `mean.` rows over the successful pairs.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, row) in &self.rows {
            match row {
                Ok(r) => s.push_str(&r.to_text(&format!("{name}."))),
                Err(e) => s.push_str(&format!("{name}.error: {e}\n")),
            }
        }
        s.push_str(&format!("count: {}\n", self.rows.len() - self.failed()));
        s.push_str(&format!("failed: {}\n", self.failed()));
        if let Some(m) = &self.mean {
            s.push_str(&m.to_text("mean."));
        }
        s
    }
}

/// Evaluates every image of `dir/result` against the same-named image of
/// `dir/reference`. A failing pair is recorded and the batch continues.
pub fn run_batch(dir: &Path, mask_sky: bool, scale: PeakScale) -> Result<BatchReport> {
    let (results, references) = (dir.join("result"), dir.join("reference"));
    let (t_est, t_true) = (dir.join("t_est"), dir.join("t_true"));
    let mut rows = Vec::new();
    for name in list_images(&results)? {
        let map_name = Path::new(&name).with_extension("png");
        let (e, t) = (t_est.join(&map_name), t_true.join(&map_name));
        let maps = (e.is_file() && t.is_file()).then_some((e.as_path(), t.as_path()));
        let row = evaluate_files(&results.join(&name), &references.join(&name), maps, mask_sky, scale);
        rows.push((name, row));
    }
    let ok: Vec<QualityReport> = rows.iter().filter_map(|(_, r)| r.as_ref().ok().cloned()).collect();
    Ok(BatchReport {
        mean: QualityReport::mean(&ok),
        rows,
    })
}

/// Evaluates one pair or a batch and returns the report text. With
/// `args.output` set the text is also written there.
pub fn run_evaluate(args: &EvaluateArgs) -> Result<String> {
    let scale = if args.peak255 { PeakScale::Byte } else { PeakScale::Unit };
    let text = match &args.batch {
        Some(dir) => run_batch(dir, args.mask_sky, scale)?.to_text(),
        None => {
            let (Some(result), Some(reference)) = (&args.result, &args.reference) else {
                return Err(Error::Config("evaluate needs <result> <reference> or --batch".into()));
            };
            let maps = args.t_est.as_deref().zip(args.t_true.as_deref());
            evaluate_files(result, reference, maps, args.mask_sky, scale)?.to_text("")
        }
    };
    if let Some(out) = &args.output {
        write_all_atomic(&[(out.clone(), text.clone().into_bytes())])?;
    }
    Ok(text)
}
