//! Pipeline configuration and its flat `key = value` text form.
//!
//! ```text
//! # constants of the shape parameter
//! beta = 0.7
//! xi_min_db = -10
//! xi_max_db = -5
//! xi_peak_db = 10
//! w_local = 1
//! w_global = 15
//! mu = 0.9
//! frame_len = 640
//! ```
//!
//! Unknown keys are rejected. `tree` holds the leaves inline as
//! comma-separated `depth node` pairs; `tree_file` points at a file with one
//! pair per line (relative paths resolve against the config file).

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::noise_tracker::NoiseTrackerConfig;
use crate::presence::{PresenceConfig, XiRecursion};
use crate::pwpt::{PerceptualTree, PwptError};
use crate::shrink::{AlphaMode, ShrinkConfig};
use crate::threshold::{ThresholdForm, VarianceDomain};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {value}")]
    BadValue { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Tree(#[from] PwptError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Everything the enhancer can be tuned with.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceConfig {
    /// Analysis frame length in samples.
    pub frame_len: usize,
    pub shrink: ShrinkConfig,
    pub presence: PresenceConfig,
    pub noise: NoiseTrackerConfig,
    pub variance_domain: VarianceDomain,
    pub threshold_form: ThresholdForm,
    pub tree: Arc<PerceptualTree>,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            frame_len: 640,
            shrink: ShrinkConfig::default(),
            presence: PresenceConfig::default(),
            noise: NoiseTrackerConfig::default(),
            variance_domain: VarianceDomain::Pwp,
            threshold_form: ThresholdForm::Printed,
            tree: Arc::new(PerceptualTree::perceptual_24()),
        }
    }
}

fn bad(key: &str, value: &str) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| bad(key, value))
}

fn parse_inline_tree(value: &str) -> Result<PerceptualTree, ConfigError> {
    let text: String = value.split(',').map(|pair| format!("{}\n", pair.trim())).collect();
    Ok(PerceptualTree::parse(&text)?)
}

impl EnhanceConfig {
    /// Parses config text; `base_dir` resolves relative `tree_file` paths.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                msg: "expected `key = value`".into(),
            })?;
            cfg.set(key.trim(), value.trim(), base_dir)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, path.parent())
    }

    pub fn set(&mut self, key: &str, value: &str, base_dir: Option<&Path>) -> Result<(), ConfigError> {
        match key {
            "frame_len" => self.frame_len = parse_num(key, value)?,
            "mu" => self.shrink.mu = parse_num(key, value)?,
            "alpha" => {
                self.shrink.alpha_mode = match value {
                    "dynamic" => AlphaMode::Dynamic,
                    v => AlphaMode::Fixed(parse_num(key, v)?),
                }
            }
            "beta" | "kappa" => self.presence.kappa = parse_num(key, value)?,
            "xi_min_db" => self.presence.xi_min_db = parse_num(key, value)?,
            "xi_max_db" => self.presence.xi_max_db = parse_num(key, value)?,
            "xi_peak_db" => self.presence.xi_peak_db = parse_num(key, value)?,
            "w_local" => self.presence.w_local = parse_num(key, value)?,
            "w_global" => self.presence.w_global = parse_num(key, value)?,
            "xi_recursion" => {
                self.presence.recursion = match value {
                    "intra-frame" => XiRecursion::IntraFrame,
                    "frame-wise" => XiRecursion::FrameWise,
                    _ => return Err(bad(key, value)),
                }
            }
            "noise_smoothing" => self.noise.smoothing = parse_num(key, value)?,
            "noise_minima_window" => self.noise.minima_window = parse_num(key, value)?,
            "noise_bias" => self.noise.bias = parse_num(key, value)?,
            "noise_bootstrap_frames" => self.noise.bootstrap_frames = parse_num(key, value)?,
            "variance_domain" => {
                self.variance_domain = match value {
                    "pwp" => VarianceDomain::Pwp,
                    "te" => VarianceDomain::Te,
                    _ => return Err(bad(key, value)),
                }
            }
            "threshold_form" => {
                self.threshold_form = match value {
                    "printed" => ThresholdForm::Printed,
                    "crossing" => ThresholdForm::Crossing,
                    _ => return Err(bad(key, value)),
                }
            }
            "tree" => self.tree = Arc::new(parse_inline_tree(value)?),
            "tree_file" => {
                let path = match base_dir {
                    Some(dir) => dir.join(value),
                    None => value.into(),
                };
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                self.tree = Arc::new(PerceptualTree::parse(&text)?);
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.frame_len < 4 || !self.frame_len.is_multiple_of(2) {
            return invalid("frame_len must be even and at least 4");
        }
        if !self.frame_len.is_multiple_of(self.tree.required_multiple()) {
            return Err(ConfigError::Invalid(format!(
                "frame_len {} is not a multiple of {} required by the tree",
                self.frame_len,
                self.tree.required_multiple()
            )));
        }
        if !(self.shrink.mu > 0.0 && self.shrink.mu.is_finite()) {
            return invalid("mu must be positive");
        }
        if let AlphaMode::Fixed(a) = self.shrink.alpha_mode {
            if !(0.0..=1.0).contains(&a) {
                return invalid("alpha must be `dynamic` or a number in [0, 1]");
            }
        }
        if !(0.0..=1.0).contains(&self.presence.kappa) {
            return invalid("beta must lie in [0, 1]");
        }
        if self.presence.xi_max_db <= self.presence.xi_min_db {
            return invalid("xi_max_db must exceed xi_min_db");
        }
        if !(0.0..1.0).contains(&self.noise.smoothing) {
            return invalid("noise_smoothing must lie in [0, 1)");
        }
        if self.noise.minima_window == 0 {
            return invalid("noise_minima_window must be positive");
        }
        if self.noise.bias.is_nan() || self.noise.bias <= 0.0 {
            return invalid("noise_bias must be positive");
        }
        Ok(())
    }

    /// Text form accepted by [`parse`](Self::parse); reloading it yields an equal config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let alpha = match self.shrink.alpha_mode {
            AlphaMode::Dynamic => "dynamic".to_string(),
            AlphaMode::Fixed(a) => a.to_string(),
        };
        let recursion = match self.presence.recursion {
            XiRecursion::IntraFrame => "intra-frame",
            XiRecursion::FrameWise => "frame-wise",
        };
        let domain = match self.variance_domain {
            VarianceDomain::Pwp => "pwp",
            VarianceDomain::Te => "te",
        };
        let form = match self.threshold_form {
            ThresholdForm::Printed => "printed",
            ThresholdForm::Crossing => "crossing",
        };
        let tree = self
            .tree
            .leaves()
            .iter()
            .map(|l| format!("{} {}", l.depth, l.node))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(s, "frame_len = {}", self.frame_len);
        let _ = writeln!(s, "mu = {}", self.shrink.mu);
        let _ = writeln!(s, "alpha = {alpha}");
        let _ = writeln!(s, "beta = {}", self.presence.kappa);
        let _ = writeln!(s, "xi_min_db = {}", self.presence.xi_min_db);
        let _ = writeln!(s, "xi_max_db = {}", self.presence.xi_max_db);
        let _ = writeln!(s, "xi_peak_db = {}", self.presence.xi_peak_db);
        let _ = writeln!(s, "w_local = {}", self.presence.w_local);
        let _ = writeln!(s, "w_global = {}", self.presence.w_global);
        let _ = writeln!(s, "xi_recursion = {recursion}");
        let _ = writeln!(s, "noise_smoothing = {}", self.noise.smoothing);
        let _ = writeln!(s, "noise_minima_window = {}", self.noise.minima_window);
        let _ = writeln!(s, "noise_bias = {}", self.noise.bias);
        let _ = writeln!(s, "noise_bootstrap_frames = {}", self.noise.bootstrap_frames);
        let _ = writeln!(s, "variance_domain = {domain}");
        let _ = writeln!(s, "threshold_form = {form}");
        let _ = writeln!(s, "tree = {tree}");
        s
    }
}
