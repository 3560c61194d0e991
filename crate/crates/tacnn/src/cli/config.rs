//! Run configuration: defaults, `key = value` config files, and flag
//! overrides (flags win). Every run echoes its fully-resolved configuration
//! next to its outputs so the run can be reproduced from that file alone.

use crate::error::{Error, Result};
use crate::layers::ConvFamily;
use crate::precision::Precision;
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Fully-resolved settings for a training or benchmark run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ConvFamily,
    pub layers: usize,
    pub kernels: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seeds: Vec<u64>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub deterministic: bool,
    pub precision: Precision,
}

/// Unresolved settings gathered from a config file or command-line flags.
#[derive(Debug, Clone, Default)]
pub struct PartialConfig {
    pub model: Option<ConvFamily>,
    pub layers: Option<usize>,
    pub kernels: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub deterministic: Option<bool>,
    pub precision: Option<Precision>,
}

impl PartialConfig {
    /// Fields of `overrides` win over `self`.
    pub fn overridden_by(self, overrides: PartialConfig) -> PartialConfig {
        PartialConfig {
            model: overrides.model.or(self.model),
            layers: overrides.layers.or(self.layers),
            kernels: overrides.kernels.or(self.kernels),
            epochs: overrides.epochs.or(self.epochs),
            batch_size: overrides.batch_size.or(self.batch_size),
            learning_rate: overrides.learning_rate.or(self.learning_rate),
            seeds: overrides.seeds.or(self.seeds),
            data_dir: overrides.data_dir.or(self.data_dir),
            out_dir: overrides.out_dir.or(self.out_dir),
            workers: overrides.workers.or(self.workers),
            deterministic: overrides.deterministic.or(self.deterministic),
            precision: overrides.precision.or(self.precision),
        }
    }

    /// Parse the line-oriented `[section]` / `key = value` format.
    pub fn parse(text: &str) -> Result<PartialConfig> {
        let mut section = String::new();
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let full_key = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            entries.insert(full_key, value.trim().to_string());
        }

        let mut cfg = PartialConfig::default();
        for (key, value) in entries {
            match key.as_str() {
                "run.model" => cfg.model = Some(value.parse()?),
                "run.layers" => cfg.layers = Some(parse_num(&key, &value)?),
                "run.kernels" => cfg.kernels = Some(parse_kernels(&value)?),
                "run.epochs" => cfg.epochs = Some(parse_num(&key, &value)?),
                "run.batch_size" => cfg.batch_size = Some(parse_num(&key, &value)?),
                "run.learning_rate" => {
                    cfg.learning_rate = Some(value.parse::<f64>().map_err(|_| {
                        Error::config(format!("bad value for {key}: '{value}'"))
                    })?)
                }
                "run.seeds" => cfg.seeds = Some(parse_seeds(&value)?),
                "run.precision" => {
                    cfg.precision = Some(value.parse().map_err(Error::config)?)
                }
                "run.deterministic" => {
                    cfg.deterministic = Some(value.parse::<bool>().map_err(|_| {
                        Error::config(format!("bad value for {key}: '{value}'"))
                    })?)
                }
                "run.workers" => cfg.workers = Some(parse_num(&key, &value)?),
                "paths.data_dir" => cfg.data_dir = Some(PathBuf::from(value)),
                "paths.out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
                other => return Err(Error::config(format!("unknown config key '{other}'"))),
            }
        }
        Ok(cfg)
    }
}

fn parse_num(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::config(format!("bad value for {key}: '{value}'")))
}

/// Comma list of per-layer kernel counts, e.g. `16,16`.
pub fn parse_kernels(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("bad kernel count '{v}'")))
        })
        .collect()
}

pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<u64>()
                .map_err(|_| Error::config(format!("bad seed '{v}'")))
        })
        .collect()
}

impl RunConfig {
    /// Fill defaults over whatever the partial config left unset. The
    /// default epoch budget follows the protocol: 400 for one conv layer,
    /// 800 for two.
    pub fn resolve(partial: PartialConfig) -> Result<RunConfig> {
        let model = partial.model.unwrap_or(ConvFamily::Tensor);
        let layers = partial.layers.unwrap_or(1);
        let kernels = partial.kernels.unwrap_or_else(|| vec![1; layers]);
        let epochs = partial
            .epochs
            .unwrap_or(if layers >= 2 { 800 } else { 400 });
        let config = RunConfig {
            model,
            layers,
            kernels,
            epochs,
            batch_size: partial.batch_size.unwrap_or(100),
            learning_rate: partial.learning_rate.unwrap_or(2e-4),
            seeds: partial.seeds.unwrap_or_else(|| vec![0]),
            data_dir: partial.data_dir.unwrap_or_else(|| PathBuf::from("data")),
            out_dir: partial.out_dir.unwrap_or_else(|| PathBuf::from("runs")),
            workers: partial.workers.unwrap_or_else(|| {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
            }),
            deterministic: partial.deterministic.unwrap_or(false),
            precision: partial.precision.unwrap_or(Precision::F32),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::config("layers must be >= 1"));
        }
        if self.kernels.len() != self.layers {
            return Err(Error::config(format!(
                "expected {} kernel counts (one per layer), got {}",
                self.layers,
                self.kernels.len()
            )));
        }
        if self.kernels.iter().any(|&k| k == 0) {
            return Err(Error::config("kernel counts must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        Ok(())
    }

    /// Directory name for this run under the output root.
    pub fn run_name(&self) -> String {
        let kernels = self
            .kernels
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join("x");
        format!("{}-{}l-k{}", self.model.as_str(), self.layers, kernels)
    }

    /// Fully-resolved `key = value` echo; parsing it back reproduces this
    /// configuration exactly.
    pub fn to_config_text(&self) -> String {
        let kernels = self
            .kernels
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let seeds = self
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "[run]\n\
             model = {}\n\
             layers = {}\n\
             kernels = {}\n\
             epochs = {}\n\
             batch_size = {}\n\
             learning_rate = {}\n\
             seeds = {}\n\
             precision = {}\n\
             deterministic = {}\n\
             workers = {}\n\
             \n\
             [paths]\n\
             data_dir = {}\n\
             out_dir = {}\n",
            self.model.as_str(),
            self.layers,
            kernels,
            self.epochs,
            self.batch_size,
            self.learning_rate,
            seeds,
            self.precision,
            self.deterministic,
            self.workers,
            self.data_dir.display(),
            self.out_dir.display(),
        )
    }
}
