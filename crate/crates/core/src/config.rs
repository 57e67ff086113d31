//! Pipeline parameters and their flat `key = value` text form.
//!
//! Keys are the kebab-case field names, e.g.
//!
//! ```text
//! # hifst config
//! scales = 7,15,31,63
//! gaussian-sigma = 0.5
//! entropy-window = 7
//! threads = auto
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::focus::FocusParams;
use crate::postproc::{GuideSource, SmoothParams};
use crate::preproc::GaussianParams;
use crate::sliding_dct::ScaleSet;
use crate::transform::EntropyParams;

/// Every tunable of the detector and its applications.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scales: ScaleSet,
    pub gaussian_sigma: f64,
    pub gaussian_radius: usize,
    pub entropy_window: usize,
    pub entropy_bins: usize,
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub smooth_iterations: usize,
    pub guide: GuideSource,
    pub focus_th: f64,
    pub focus_sigma: f64,
    /// Evaluate the transform every `stride` pixels and upsample (1 = every pixel).
    pub stride: usize,
    /// Worker count; `None` lets the runtime decide.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let smooth = SmoothParams::default();
        let entropy = EntropyParams::default();
        let gauss = GaussianParams::default();
        let focus = FocusParams::default();
        PipelineConfig {
            scales: ScaleSet::default(),
            gaussian_sigma: gauss.sigma,
            gaussian_radius: gauss.radius,
            entropy_window: entropy.window,
            entropy_bins: entropy.bins,
            sigma_s: smooth.sigma_s,
            sigma_r: smooth.sigma_r,
            smooth_iterations: smooth.iterations,
            guide: smooth.guide,
            focus_th: focus.threshold,
            focus_sigma: focus.sigma,
            stride: 1,
            threads: None,
        }
    }
}

/// Config keys in file order, with a one-line description each.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    (
        "scales",
        "comma-separated odd patch sizes, strictly increasing",
    ),
    ("gaussian-sigma", "pre-filter standard deviation (pixels)"),
    ("gaussian-radius", "pre-filter kernel radius (pixels)"),
    ("entropy-window", "odd side of the local entropy window"),
    (
        "entropy-bins",
        "histogram bins over [0, 1] for local entropy",
    ),
    (
        "sigma-s",
        "edge-preserving smoothing spatial sigma (pixels)",
    ),
    ("sigma-r", "edge-preserving smoothing range sigma"),
    ("smooth-iterations", "edge-preserving smoothing iterations"),
    ("guide", "smoothing guide: input-image or map-itself"),
    ("focus-th", "focus point threshold in (0, 1]"),
    (
        "focus-sigma",
        "Gaussian pre-smoothing sigma for focus points (pixels)",
    ),
    (
        "stride",
        "evaluate the transform every N pixels (1 = full resolution)",
    ),
    ("threads", "worker count or 'auto'"),
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParam(format!("{key}: cannot parse {value:?}")))
}

impl PipelineConfig {
    pub fn gaussian_params(&self) -> GaussianParams {
        GaussianParams {
            sigma: self.gaussian_sigma,
            radius: self.gaussian_radius,
        }
    }

    pub fn entropy_params(&self) -> EntropyParams {
        EntropyParams {
            window: self.entropy_window,
            bins: self.entropy_bins,
        }
    }

    pub fn smooth_params(&self) -> SmoothParams {
        SmoothParams {
            sigma_s: self.sigma_s,
            sigma_r: self.sigma_r,
            iterations: self.smooth_iterations,
            guide: self.guide,
        }
    }

    pub fn focus_params(&self) -> FocusParams {
        FocusParams {
            threshold: self.focus_th,
            sigma: self.focus_sigma,
        }
    }

    /// Same configuration restricted to other patch sizes.
    pub fn with_scales(&self, scales: ScaleSet) -> Self {
        PipelineConfig {
            scales,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gaussian_params().validate()?;
        self.entropy_params().validate()?;
        self.smooth_params().validate()?;
        self.focus_params().validate()?;
        if self.stride < 1 {
            return Err(Error::InvalidParam("stride must be >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParam("threads must be >= 1 or auto".into()));
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "scales" => {
                let sizes = value
                    .split(',')
                    .map(|s| parse_num::<usize>(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                self.scales = ScaleSet::new(sizes)?;
            }
            "gaussian-sigma" => self.gaussian_sigma = parse_num(key, value)?,
            "gaussian-radius" => self.gaussian_radius = parse_num(key, value)?,
            "entropy-window" => self.entropy_window = parse_num(key, value)?,
            "entropy-bins" => self.entropy_bins = parse_num(key, value)?,
            "sigma-s" => self.sigma_s = parse_num(key, value)?,
            "sigma-r" => self.sigma_r = parse_num(key, value)?,
            "smooth-iterations" => self.smooth_iterations = parse_num(key, value)?,
            "guide" => self.guide = value.parse()?,
            "focus-th" => self.focus_th = parse_num(key, value)?,
            "focus-sigma" => self.focus_sigma = parse_num(key, value)?,
            "stride" => self.stride = parse_num(key, value)?,
            "threads" => {
                self.threads = if value == "auto" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            other => return Err(Error::InvalidParam(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Textual value of one field, as accepted by [`PipelineConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "scales" => self
                .scales
                .sizes()
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "gaussian-sigma" => self.gaussian_sigma.to_string(),
            "gaussian-radius" => self.gaussian_radius.to_string(),
            "entropy-window" => self.entropy_window.to_string(),
            "entropy-bins" => self.entropy_bins.to_string(),
            "sigma-s" => self.sigma_s.to_string(),
            "sigma-r" => self.sigma_r.to_string(),
            "smooth-iterations" => self.smooth_iterations.to_string(),
            "guide" => self.guide.as_str().to_string(),
            "focus-th" => self.focus_th.to_string(),
            "focus-sigma" => self.focus_sigma.to_string(),
            "stride" => self.stride.to_string(),
            "threads" => self
                .threads
                .map_or_else(|| "auto".to_string(), |n| n.to_string()),
            _ => return None,
        })
    }

    /// Overlays the settings found in `text` onto `self`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: idx + 1,
                reason: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Config {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Parses a config text on top of the defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::from("# hifst pipeline configuration\n");
        for (key, _) in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_config_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_config_string()).map_err(|e| Error::io(path, e))
    }
}
