//! Pipeline configuration and the `key = value` text format shared with
//! scene files.

use std::fmt::Write as _;
use std::path::Path;

use crate::airlight::AirlightParams;
use crate::color_line::ClassifierParams;
use crate::dark_channel::DcpParams;
use crate::error::{Error, Result};
use crate::recovery::{RecoveryMode, RecoveryParams};

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyValue {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits `text` into `key = value` pairs. Blank lines and `#` comments are
/// skipped; a repeated key is an error.
pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<KeyValue>> {
    let mut out: Vec<KeyValue> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "empty key".into(),
            });
        }
        if out.iter().any(|kv| kv.key == key) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("{key}: duplicate key"),
            });
        }
        out.push(KeyValue {
            line: i + 1,
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

/// Every tunable of the dehazing pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dcp: DcpParams,
    /// Fraction of brightest dark-channel pixels searched for the global airlight.
    pub airlight_top_fraction: f64,
    /// Window of the local-maximum anchor filter.
    pub anchor_window: usize,
    /// Fraction of local maxima kept as anchors.
    pub anchor_fraction: f64,
    /// Side of the initial color-line patches.
    pub line_patch: usize,
    /// Step between color-line patches.
    pub line_stride: usize,
    pub classifier: ClassifierParams,
    pub airlight: AirlightParams,
    /// Spatial weight of the nearest-neighbor feature vector.
    pub lambda: f64,
    /// Matting regularization weight. Recorded only; the matting solve is not used.
    pub lambda_reg: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub tol: f64,
    /// `None` means `10 √n`.
    pub max_iter: Option<usize>,
    pub recovery: RecoveryParams,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dcp: DcpParams::default(),
            airlight_top_fraction: 0.001,
            anchor_window: 3,
            anchor_fraction: 1.0,
            line_patch: 7,
            line_stride: 7,
            classifier: ClassifierParams::default(),
            airlight: AirlightParams::default(),
            lambda: 0.1,
            lambda_reg: 0.1,
            alpha: 1.0,
            beta: 1e-4,
            eps: 1e-4,
            tol: 1e-6,
            max_iter: None,
            recovery: RecoveryParams::default(),
            threads: 0,
            seed: 0,
        }
    }
}

fn in_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in [{lo}, {hi}], got {v}")))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.dcp.validate()?;
        self.classifier.validate()?;
        self.airlight.validate()?;
        self.recovery.validate()?;
        if !(self.airlight_top_fraction > 0.0 && self.airlight_top_fraction <= 1.0) {
            return Err(Error::config("airlight_top_fraction must lie in (0, 1]"));
        }
        if self.anchor_window < 3 || self.anchor_window.is_multiple_of(2) {
            return Err(Error::config("anchor_window must be odd and >= 3"));
        }
        if !(self.anchor_fraction > 0.0 && self.anchor_fraction <= 1.0) {
            return Err(Error::config("anchor_fraction must lie in (0, 1]"));
        }
        if self.line_patch < 3 || self.line_patch.is_multiple_of(2) {
            return Err(Error::config("line_patch must be odd and >= 3"));
        }
        if self.line_patch > self.classifier.max_patch_growth {
            return Err(Error::config("line_patch must not exceed max_patch_growth"));
        }
        if self.line_stride == 0 {
            return Err(Error::config("line_stride must be positive"));
        }
        in_range("lambda", self.lambda, 0.0, 1e3)?;
        in_range("lambda_reg", self.lambda_reg, 0.0, 1e3)?;
        in_range("alpha", self.alpha, 0.0, 1e6)?;
        in_range("beta", self.beta, 0.0, 1e6)?;
        if !(self.eps > 0.0 && self.eps <= 0.1) {
            return Err(Error::config("eps must lie in (0, 0.1]"));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::config("tol must lie in (0, 1)"));
        }
        if self.max_iter == Some(0) {
            return Err(Error::config("max_iter must be positive"));
        }
        if self.threads > 1024 {
            return Err(Error::config("threads must be at most 1024"));
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults; unknown keys are rejected.
    pub fn parse(text: &str, path: &Path) -> Result<PipelineConfig> {
        let mut c = PipelineConfig::default();
        for kv in parse_key_values(text, path)? {
            c.set(&kv.key, &kv.value).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: kv.line,
                message: match e {
                    Error::Config(m) => m,
                    other => other.to_string(),
                },
            })?;
        }
        c.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        PipelineConfig::parse(&text, path)
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| Error::config(format!("{key}: {e}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::config(format!("{key}: expected true or false, got '{v}'"))),
            }
        }
        match key {
            "patch_size" => self.dcp.patch_size = num(key, value)?,
            "airlight_floor" => self.dcp.airlight_floor = num(key, value)?,
            "airlight_top_fraction" => self.airlight_top_fraction = num(key, value)?,
            "anchor_window" => self.anchor_window = num(key, value)?,
            "anchor_fraction" => self.anchor_fraction = num(key, value)?,
            "line_patch" => self.line_patch = num(key, value)?,
            "line_stride" => self.line_stride = num(key, value)?,
            "max_patch_growth" => self.classifier.max_patch_growth = num(key, value)?,
            "inlier_sigma" => self.classifier.inlier_sigma = num(key, value)?,
            "inlier_prior" => self.classifier.inlier_prior = num(key, value)?,
            "min_inlier_fraction" => self.classifier.min_inlier_fraction = num(key, value)?,
            "hypotheses" => self.classifier.hypotheses = num(key, value)?,
            "min_angle" => self.airlight.min_angle_deg = num(key, value)?,
            "max_residual" => self.airlight.max_residual = num(key, value)?,
            "max_magnitude" => {
                self.airlight.max_magnitude = if value == "cube" { None } else { Some(num(key, value)?) }
            }
            "min_spread" => self.airlight.min_spread = num(key, value)?,
            "min_line_offset" => self.airlight.min_line_offset = num(key, value)?,
            "weight_by_support" => self.airlight.weight_by_support = flag(key, value)?,
            "refine_iterations" => self.airlight.refine_iterations = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "lambda_reg" => self.lambda_reg = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "tol" => self.tol = num(key, value)?,
            "max_iter" => self.max_iter = if value == "auto" { None } else { Some(num(key, value)?) },
            "t0" => self.recovery.t0 = num(key, value)?,
            "gamma" => self.recovery.gamma = num(key, value)?,
            "mode" => self.recovery.mode = value.parse::<RecoveryMode>()?,
            "threads" => self.threads = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Every field as `key: value` lines, in a fixed order.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}: {v}");
        };
        put("patch_size", self.dcp.patch_size.to_string());
        put("airlight_floor", self.dcp.airlight_floor.to_string());
        put("airlight_top_fraction", self.airlight_top_fraction.to_string());
        put("anchor_window", self.anchor_window.to_string());
        put("anchor_fraction", self.anchor_fraction.to_string());
        put("line_patch", self.line_patch.to_string());
        put("line_stride", self.line_stride.to_string());
        put("max_patch_growth", self.classifier.max_patch_growth.to_string());
        put("inlier_sigma", self.classifier.inlier_sigma.to_string());
        put("inlier_prior", self.classifier.inlier_prior.to_string());
        put("min_inlier_fraction", self.classifier.min_inlier_fraction.to_string());
        put("hypotheses", self.classifier.hypotheses.to_string());
        put("min_angle", self.airlight.min_angle_deg.to_string());
        put("max_residual", self.airlight.max_residual.to_string());
        put(
            "max_magnitude",
            self.airlight.max_magnitude.map_or("cube".to_string(), |m| m.to_string()),
        );
        put("min_spread", self.airlight.min_spread.to_string());
        put("min_line_offset", self.airlight.min_line_offset.to_string());
        put("weight_by_support", self.airlight.weight_by_support.to_string());
        put("refine_iterations", self.airlight.refine_iterations.to_string());
        put("lambda", self.lambda.to_string());
        put("lambda_reg", self.lambda_reg.to_string());
        put("alpha", self.alpha.to_string());
        put("beta", self.beta.to_string());
        put("eps", self.eps.to_string());
        put("tol", self.tol.to_string());
        put("max_iter", self.max_iter.map_or("auto".to_string(), |m| m.to_string()));
        put("t0", self.recovery.t0.to_string());
        put("gamma", self.recovery.gamma.to_string());
        put("mode", self.recovery.mode.to_string());
        put("threads", self.threads.to_string());
        put("seed", self.seed.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn manifest_round_trips() {
        let mut c = PipelineConfig::default();
        c.set("gamma", "1.2").unwrap();
        c.set("mode", "trans").unwrap();
        c.set("max_iter", "500").unwrap();
        let text = c.manifest().replace(": ", " = ");
        assert_eq!(PipelineConfig::parse(&text, Path::new("m")).unwrap(), c);
    }

    #[test]
    fn unknown_and_bad_keys() {
        let e = PipelineConfig::parse("colour = 3\n", Path::new("c")).unwrap_err();
        assert!(e.to_string().contains("colour"));
        let e = PipelineConfig::parse("\n\ngamma = 9\n", Path::new("c")).unwrap_err();
        assert!(e.to_string().contains("gamma"));
        assert!(PipelineConfig::parse("t0 = x\n", Path::new("c")).is_err());
        assert!(PipelineConfig::parse("patch_size = 4\n", Path::new("c")).is_err());
        assert!(PipelineConfig::parse("alpha = 1\nalpha = 2\n", Path::new("c")).is_err());
        assert!(PipelineConfig::parse("just words\n", Path::new("c")).is_err());
    }

    #[test]
    fn comments_and_blanks() {
        let c = PipelineConfig::parse("# header\n\nt0 = 0.15 # inline\n", Path::new("c")).unwrap();
        assert_eq!(c.recovery.t0, 0.15);
    }
}
