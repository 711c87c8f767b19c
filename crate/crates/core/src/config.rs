//! `key = value` run configuration shared by every command.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::loss::{CharbonnierForm, LossConfig};
use crate::nn::{NetworkConfig, Variant};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key '{key}' given twice")]
    Duplicate { line: usize, key: String },
    #[error("invalid value for '{key}': {message}")]
    Invalid { key: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub base_channels: usize,
    pub num_tabs: usize,
    pub crop: usize,
    pub batch: usize,
    pub steps: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub lambda_fft: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub variant: Variant,
    pub use_global_residual: bool,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Steps between periodic checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub charbonnier: CharbonnierForm,
    pub precision: Precision,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            base_channels: 16,
            num_tabs: 2,
            crop: 64,
            batch: 4,
            steps: 2000,
            lr0: 1e-4,
            lr_min: 1e-7,
            lambda_fft: 1e-2,
            epsilon: 1e-3,
            seed: 0,
            variant: Variant::Net5,
            use_global_residual: true,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs/default"),
            checkpoint_every: 500,
            charbonnier: CharbonnierForm::PerElement,
            precision: Precision::F32,
        }
    }
}

pub const KEYS: [&str; 17] = [
    "base_channels",
    "num_tabs",
    "crop",
    "batch",
    "steps",
    "lr0",
    "lr_min",
    "lambda_fft",
    "epsilon",
    "seed",
    "variant",
    "use_global_residual",
    "data_dir",
    "out_dir",
    "checkpoint_every",
    "charbonnier",
    "precision",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Invalid {
        key: key.into(),
        message: format!("'{value}': {e}"),
    })
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "base_channels" => self.base_channels = parse(key, value)?,
            "num_tabs" => self.num_tabs = parse(key, value)?,
            "crop" => self.crop = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "lr0" => self.lr0 = parse(key, value)?,
            "lr_min" => self.lr_min = parse(key, value)?,
            "lambda_fft" => self.lambda_fft = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "variant" => self.variant = value.parse().map_err(|e| invalid(key, format!("{e}")))?,
            "use_global_residual" => self.use_global_residual = parse(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "charbonnier" => {
                self.charbonnier = match value {
                    "per_element" => CharbonnierForm::PerElement,
                    "global" => CharbonnierForm::GlobalNorm,
                    _ => return Err(invalid(key, format!("'{value}', expected per_element or global"))),
                }
            }
            "precision" => {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(invalid(key, format!("'{value}', expected f32 or f64"))),
                }
            }
            _ => return Err(invalid(key, "unknown key")),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected 'key = value', got '{content}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let Some(known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey { line, key: key.into() });
            };
            if seen.contains(known) {
                return Err(ConfigError::Duplicate { line, key: key.into() });
            }
            seen.push(known);
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.network()
            .validate()
            .map_err(|e| invalid("base_channels/num_tabs", e.to_string()))?;
        self.loss().validate().map_err(|e| invalid("epsilon/lambda_fft", e.to_string()))?;
        if self.crop == 0 || !self.crop.is_multiple_of(4) {
            return Err(invalid("crop", format!("{} is not a positive multiple of 4", self.crop)));
        }
        if self.batch == 0 {
            return Err(invalid("batch", "must be >= 1"));
        }
        if !(self.lr0 > self.lr_min && self.lr_min > 0.0) {
            return Err(invalid("lr0", format!("need lr0 > lr_min > 0, got {} and {}", self.lr0, self.lr_min)));
        }
        Ok(())
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            base_channels: self.base_channels,
            num_tabs: self.num_tabs,
            use_global_residual: self.use_global_residual,
            seed: self.seed,
            variant: self.variant,
            ..NetworkConfig::default()
        }
    }

    /// Loss settings; the frequency term is on only for variants that use it.
    pub fn loss(&self) -> LossConfig {
        LossConfig {
            epsilon: self.epsilon,
            lambda_fft: self.lambda_fft,
            fft_enabled: self.variant.uses_fft_loss(),
            charbonnier_form: self.charbonnier,
        }
    }

    /// Every key with its effective value, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("base_channels", self.base_channels.to_string());
        put("num_tabs", self.num_tabs.to_string());
        put("crop", self.crop.to_string());
        put("batch", self.batch.to_string());
        put("steps", self.steps.to_string());
        put("lr0", format!("{:e}", self.lr0));
        put("lr_min", format!("{:e}", self.lr_min));
        put("lambda_fft", format!("{:e}", self.lambda_fft));
        put("epsilon", format!("{:e}", self.epsilon));
        put("seed", self.seed.to_string());
        put("variant", self.variant.to_string());
        put("use_global_residual", self.use_global_residual.to_string());
        put("data_dir", self.data_dir.display().to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put(
            "charbonnier",
            match self.charbonnier {
                CharbonnierForm::PerElement => "per_element",
                CharbonnierForm::GlobalNorm => "global",
            }
            .to_string(),
        );
        put(
            "precision",
            match self.precision {
                Precision::F32 => "f32",
                Precision::F64 => "f64",
            }
            .to_string(),
        );
        out
    }

    /// Writes the resolved configuration to `dir/config.txt`.
    pub fn echo_into(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("config.txt");
        std::fs::write(&path, self.to_text())?;
        Ok(path)
    }
}
