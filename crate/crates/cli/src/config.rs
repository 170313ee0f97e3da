//! Flat `key = value` run configuration with presets and overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use funclearn::augment::AugmentConfig;
use funclearn::eval::Protocol;
use funclearn::nn::{EncoderConfig, TrainConfig};

use crate::error::{CliError, CliResult};

pub const SNAPSHOT: &str = "config.resolved";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// 500k training curves and the full 3 × 10 protocol.
    Paper,
    /// 50k training curves and 3 redraws.
    Desk,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        }
    }
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err(CliError::BadValue { key: "preset".into(), message: format!("expected paper or desk, got `{s}`") }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub master_seed: u64,
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
    /// Encoder copies; also the protocol's seed count.
    pub seeds: usize,
    /// Hyperparameter redraws generated and evaluated.
    pub redraws: usize,
    /// Curves per family in each generated dataset.
    pub per_class: usize,
    pub train: TrainConfig,
    pub encoder: EncoderConfig,
    pub augment: AugmentConfig,
    /// Seed and redraw counts are taken from `seeds` and `redraws`.
    pub protocol: Protocol,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let train = match preset {
            Preset::Paper => TrainConfig::default(),
            Preset::Desk => TrainConfig { total_curves: 50_000, ..Default::default() },
        };
        Self {
            preset,
            master_seed: 0,
            data_dir: "data".into(),
            checkpoint_dir: "checkpoints".into(),
            report_dir: "reports".into(),
            seeds: 3,
            redraws: match preset {
                Preset::Paper => 10,
                Preset::Desk => 3,
            },
            per_class: 400,
            train,
            encoder: EncoderConfig::default(),
            augment: AugmentConfig::default(),
            protocol: Protocol::default(),
        }
    }

    /// Resolves a configuration. The preset comes from `preset_flag`, else
    /// the last `preset` entry of the file or overrides, else `paper`; every
    /// other entry then applies in order, file first.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)], preset_flag: Option<Preset>) -> CliResult<Self> {
        let mut entries = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                parse_entries(&text)?
            }
            None => Vec::new(),
        };
        entries.extend(overrides.iter().cloned());
        let preset = match preset_flag {
            Some(p) => p,
            None => entries.iter().rev().find(|(k, _)| k == "preset").map_or(Ok(Preset::Paper), |(_, v)| v.parse())?,
        };
        let mut cfg = Self::preset(preset);
        for (k, v) in entries.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let config = |e: funclearn::Error| CliError::Config(e.to_string());
        self.train.validate().map_err(config)?;
        self.encoder.validate().map_err(config)?;
        self.augment.validate().map_err(config)?;
        self.protocol().validate().map_err(config)?;
        if self.per_class == 0 {
            return Err(CliError::BadValue { key: "per_class".into(), message: "must be positive".into() });
        }
        Ok(())
    }

    /// The evaluation protocol with this run's seed and redraw counts.
    pub fn protocol(&self) -> Protocol {
        Protocol { n_seeds: self.seeds, n_redraws: self.redraws, ..self.protocol.clone() }
    }

    /// Applies one `key = value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key {
            "preset" => self.preset = v.parse()?,
            "master_seed" => self.master_seed = num(key, v)?,
            "data_dir" => self.data_dir = v.into(),
            "checkpoint_dir" => self.checkpoint_dir = v.into(),
            "report_dir" => self.report_dir = v.into(),
            "seeds" => self.seeds = num(key, v)?,
            "redraws" => self.redraws = num(key, v)?,
            "per_class" => self.per_class = num(key, v)?,
            "curves" => self.train.total_curves = num(key, v)?,
            "batch_size" => self.train.batch_size = num(key, v)?,
            "learning_rate" => self.train.learning_rate = num(key, v)?,
            "weight_decay" => self.train.weight_decay = num(key, v)?,
            "channels" => self.encoder.channels = num(key, v)?,
            "temperature" => self.encoder.temperature = num(key, v)?,
            "kde_bandwidth" => self.augment.kde_bandwidth = num(key, v)?,
            "warp_extension" => self.augment.warp_extension = num(key, v)?,
            "rescale_min_span" => self.augment.rescale_min_span = num(key, v)?,
            "classify_budgets" => self.protocol.classify_budgets = list(key, v)?,
            "mc_budgets" => self.protocol.mc_budgets = list(key, v)?,
            "freeform_budgets" => self.protocol.freeform_budgets = list(key, v)?,
            "classify_eval_per_class" => self.protocol.classify_eval_per_class = num(key, v)?,
            "mc_eval_problems" => self.protocol.mc_eval_problems = num(key, v)?,
            "freeform_eval_curves" => self.protocol.freeform_eval_curves = num(key, v)?,
            "curriculum_per_class" => self.protocol.curriculum_per_class = num(key, v)?,
            "classifier_updates" => self.protocol.sgd.updates = num(key, v)?,
            "mc_epochs" => self.protocol.mc.epochs = num(key, v)?,
            _ => return Err(CliError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let join = |b: &[usize]| b.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let p = &self.protocol;
        vec![
            ("preset", self.preset.name().to_string()),
            ("master_seed", self.master_seed.to_string()),
            ("data_dir", self.data_dir.display().to_string()),
            ("checkpoint_dir", self.checkpoint_dir.display().to_string()),
            ("report_dir", self.report_dir.display().to_string()),
            ("seeds", self.seeds.to_string()),
            ("redraws", self.redraws.to_string()),
            ("per_class", self.per_class.to_string()),
            ("curves", self.train.total_curves.to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("learning_rate", self.train.learning_rate.to_string()),
            ("weight_decay", self.train.weight_decay.to_string()),
            ("channels", self.encoder.channels.to_string()),
            ("temperature", self.encoder.temperature.to_string()),
            ("kde_bandwidth", self.augment.kde_bandwidth.to_string()),
            ("warp_extension", self.augment.warp_extension.to_string()),
            ("rescale_min_span", self.augment.rescale_min_span.to_string()),
            ("classify_budgets", join(&p.classify_budgets)),
            ("mc_budgets", join(&p.mc_budgets)),
            ("freeform_budgets", join(&p.freeform_budgets)),
            ("classify_eval_per_class", p.classify_eval_per_class.to_string()),
            ("mc_eval_problems", p.mc_eval_problems.to_string()),
            ("freeform_eval_curves", p.freeform_eval_curves.to_string()),
            ("curriculum_per_class", p.curriculum_per_class.to_string()),
            ("classifier_updates", p.sgd.updates.to_string()),
            ("mc_epochs", p.mc.epochs.to_string()),
        ]
    }

    /// The snapshot text; [`RunConfig::resolve`] on it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Writes the snapshot into `dir`, creating it if needed.
    pub fn write_snapshot(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(SNAPSHOT);
        std::fs::write(&path, self.to_text()).map_err(|e| CliError::io(&path, e))
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_entries(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_pair(line).map_err(|_| CliError::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?);
    }
    Ok(out)
}

/// One `key=value` override.
pub fn parse_pair(s: &str) -> CliResult<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(CliError::Config(format!("expected `key=value`, got `{s}`"))),
    }
}

fn num<V: FromStr>(key: &str, v: &str) -> CliResult<V> {
    v.parse().map_err(|_| CliError::BadValue { key: key.into(), message: format!("cannot parse `{v}`") })
}

fn list(key: &str, v: &str) -> CliResult<Vec<usize>> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}
