//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored; a `#` after a value
//! starts a comment. Every key has a default, so an empty file is valid.
//! Relative paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::blocknet::NetSpec;
use crate::dataforge::AugmentConfig;
use crate::error::{Error, Result};
use crate::trainer::{AlphaMode, OptimConfig};
use crate::xroutes::RouteHead;

pub const EFFECTIVE_CONFIG_FILE: &str = "effective.conf";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub output_dir: PathBuf,

    pub input_channels: usize,
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub image_size: usize,

    pub source_train: Option<PathBuf>,
    pub source_eval: Option<PathBuf>,
    pub target_train: Option<PathBuf>,
    pub target_eval: Option<PathBuf>,

    pub pretrain_lr_init: f64,
    pub pretrain_momentum: f64,
    pub pretrain_epochs: usize,
    pub pretrain_early_stop_patience: Option<usize>,

    /// Transfer-stage settings from here on.
    pub lr_init: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub early_stop_patience: Option<usize>,
    pub early_stop_min_delta: f64,
    pub beta: f64,
    pub s: f64,
    pub gamma: f64,
    pub p: f64,
    pub update_aux: bool,
    pub alpha_mode: AlphaMode,
    pub frozen_segments: usize,
    pub route_head: RouteHead,
    pub batch_size: usize,
    pub seed: u64,
    pub log_batches: bool,

    pub p_flip: f64,
    pub p_blur: f64,
    pub p_jpeg: f64,
    pub p_cutmix: f64,
    pub blur_sigma_min: f64,
    pub blur_sigma_max: f64,
    pub jpeg_quality_min: u8,
    pub jpeg_quality_max: u8,
    pub aug_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = OptimConfig::transfer();
        let pre = OptimConfig::pretrain();
        let aug = AugmentConfig::default();
        Self {
            name: "run".into(),
            output_dir: PathBuf::from("out"),
            input_channels: 1,
            channels: vec![8, 16, 32],
            kernel_size: 3,
            image_size: 32,
            source_train: None,
            source_eval: None,
            target_train: None,
            target_eval: None,
            pretrain_lr_init: pre.lr_init,
            pretrain_momentum: pre.momentum,
            pretrain_epochs: pre.epochs,
            pretrain_early_stop_patience: pre.early_stop_patience,
            lr_init: t.lr_init,
            lr_min: t.lr_min,
            momentum: t.momentum,
            epochs: t.epochs,
            early_stop_patience: t.early_stop_patience,
            early_stop_min_delta: t.early_stop_min_delta,
            beta: t.beta,
            s: t.s,
            gamma: t.gamma,
            p: t.p,
            update_aux: t.update_aux,
            alpha_mode: t.alpha_mode,
            frozen_segments: t.frozen_segments,
            route_head: t.route_head,
            batch_size: t.batch_size,
            seed: t.seed,
            log_batches: t.log_batches,
            p_flip: aug.p_flip,
            p_blur: aug.p_blur,
            p_jpeg: aug.p_jpeg,
            p_cutmix: aug.p_cutmix,
            blur_sigma_min: aug.blur_sigma_range.0,
            blur_sigma_max: aug.blur_sigma_range.1,
            jpeg_quality_min: aug.jpeg_quality_range.0,
            jpeg_quality_max: aug.jpeg_quality_range.1,
            aug_seed: aug.seed,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    raw.parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{raw}`: {e}")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got `{raw}`"))),
    }
}

fn parse_optional<T: FromStr>(key: &str, raw: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if raw == "none" {
        Ok(None)
    } else {
        parse_value(key, raw).map(Some)
    }
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn show_optional<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

impl RunConfig {
    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        let mut cfg = Self::default();
        cfg.output_dir = base.join(&cfg.output_dir);
        for (key, raw) in &seen {
            cfg.set(key, raw, base)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    fn set(&mut self, key: &str, raw: &str, base: &Path) -> Result<()> {
        let path = |raw: &str| -> Option<PathBuf> {
            if raw == "none" {
                None
            } else {
                Some(base.join(raw))
            }
        };
        match key {
            "name" => self.name = raw.to_string(),
            "output_dir" => self.output_dir = base.join(raw),
            "input_channels" => self.input_channels = parse_value(key, raw)?,
            "channels" => self.channels = parse_list(key, raw)?,
            "kernel_size" => self.kernel_size = parse_value(key, raw)?,
            "image_size" => self.image_size = parse_value(key, raw)?,
            "source_train" => self.source_train = path(raw),
            "source_eval" => self.source_eval = path(raw),
            "target_train" => self.target_train = path(raw),
            "target_eval" => self.target_eval = path(raw),
            "pretrain_lr_init" => self.pretrain_lr_init = parse_value(key, raw)?,
            "pretrain_momentum" => self.pretrain_momentum = parse_value(key, raw)?,
            "pretrain_epochs" => self.pretrain_epochs = parse_value(key, raw)?,
            "pretrain_early_stop_patience" => self.pretrain_early_stop_patience = parse_optional(key, raw)?,
            "lr_init" => self.lr_init = parse_value(key, raw)?,
            "lr_min" => self.lr_min = parse_value(key, raw)?,
            "momentum" => self.momentum = parse_value(key, raw)?,
            "epochs" => self.epochs = parse_value(key, raw)?,
            "early_stop_patience" => self.early_stop_patience = parse_optional(key, raw)?,
            "early_stop_min_delta" => self.early_stop_min_delta = parse_value(key, raw)?,
            "beta" => self.beta = parse_value(key, raw)?,
            "s" => self.s = parse_value(key, raw)?,
            "gamma" => self.gamma = parse_value(key, raw)?,
            "p" => self.p = parse_value(key, raw)?,
            "update_aux" => self.update_aux = parse_bool(key, raw)?,
            "alpha_mode" => self.alpha_mode = parse_value(key, raw)?,
            "frozen_segments" => self.frozen_segments = parse_value(key, raw)?,
            "route_head" => self.route_head = parse_value(key, raw)?,
            "batch_size" => self.batch_size = parse_value(key, raw)?,
            "seed" => self.seed = parse_value(key, raw)?,
            "log_batches" => self.log_batches = parse_bool(key, raw)?,
            "p_flip" => self.p_flip = parse_value(key, raw)?,
            "p_blur" => self.p_blur = parse_value(key, raw)?,
            "p_jpeg" => self.p_jpeg = parse_value(key, raw)?,
            "p_cutmix" => self.p_cutmix = parse_value(key, raw)?,
            "blur_sigma_min" => self.blur_sigma_min = parse_value(key, raw)?,
            "blur_sigma_max" => self.blur_sigma_max = parse_value(key, raw)?,
            "jpeg_quality_min" => self.jpeg_quality_min = parse_value(key, raw)?,
            "jpeg_quality_max" => self.jpeg_quality_max = parse_value(key, raw)?,
            "aug_seed" => self.aug_seed = parse_value(key, raw)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.net_spec()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.image_size == 0 || self.image_size % (1 << self.channels.len()) != 0 {
            return Err(Error::Config(format!(
                "image_size {} must be a positive multiple of {}",
                self.image_size,
                1 << self.channels.len()
            )));
        }
        if self.frozen_segments > self.channels.len() {
            return Err(Error::Config(format!(
                "frozen_segments {} exceeds the {} segments",
                self.frozen_segments,
                self.channels.len()
            )));
        }
        self.pretrain_optim().validate()?;
        self.transfer_optim().validate()
    }

    pub fn net_spec(&self) -> NetSpec {
        NetSpec::uniform(self.input_channels, &self.channels, self.kernel_size)
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            p_flip: self.p_flip,
            p_blur: self.p_blur,
            p_jpeg: self.p_jpeg,
            p_cutmix: self.p_cutmix,
            blur_sigma_range: (self.blur_sigma_min, self.blur_sigma_max),
            jpeg_quality_range: (self.jpeg_quality_min, self.jpeg_quality_max),
            seed: self.aug_seed,
        }
    }

    pub fn transfer_optim(&self) -> OptimConfig {
        OptimConfig {
            lr_init: self.lr_init,
            lr_min: self.lr_min,
            momentum: self.momentum,
            epochs: self.epochs,
            early_stop_patience: self.early_stop_patience,
            early_stop_min_delta: self.early_stop_min_delta,
            beta: self.beta,
            s: self.s,
            gamma: self.gamma,
            p: self.p,
            update_aux: self.update_aux,
            batch_size: self.batch_size,
            seed: self.seed,
            alpha_mode: self.alpha_mode,
            frozen_segments: self.frozen_segments,
            route_head: self.route_head,
            log_batches: self.log_batches,
            aug: self.augment(),
        }
    }

    /// Pretraining shares the loss, batching and augmentation settings; lr,
    /// momentum, epochs and patience come from the `pretrain_` keys, and
    /// the schedule floor is zero.
    pub fn pretrain_optim(&self) -> OptimConfig {
        OptimConfig {
            lr_init: self.pretrain_lr_init,
            lr_min: 0.0,
            momentum: self.pretrain_momentum,
            epochs: self.pretrain_epochs,
            early_stop_patience: self.pretrain_early_stop_patience,
            alpha_mode: AlphaMode::Zero,
            frozen_segments: 0,
            ..self.transfer_optim()
        }
    }

    /// Every key with its resolved value, in a fixed order. Parses back to
    /// an identical config (paths are written as resolved).
    pub fn to_text(&self) -> String {
        let channels: Vec<String> = self.channels.iter().map(usize::to_string).collect();
        let entries: Vec<(&str, String)> = vec![
            ("name", self.name.clone()),
            ("output_dir", self.output_dir.display().to_string()),
            ("input_channels", self.input_channels.to_string()),
            ("channels", channels.join(",")),
            ("kernel_size", self.kernel_size.to_string()),
            ("image_size", self.image_size.to_string()),
            ("source_train", show_path(&self.source_train)),
            ("source_eval", show_path(&self.source_eval)),
            ("target_train", show_path(&self.target_train)),
            ("target_eval", show_path(&self.target_eval)),
            ("pretrain_lr_init", self.pretrain_lr_init.to_string()),
            ("pretrain_momentum", self.pretrain_momentum.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("pretrain_early_stop_patience", show_optional(&self.pretrain_early_stop_patience)),
            ("lr_init", self.lr_init.to_string()),
            ("lr_min", self.lr_min.to_string()),
            ("momentum", self.momentum.to_string()),
            ("epochs", self.epochs.to_string()),
            ("early_stop_patience", show_optional(&self.early_stop_patience)),
            ("early_stop_min_delta", self.early_stop_min_delta.to_string()),
            ("beta", self.beta.to_string()),
            ("s", self.s.to_string()),
            ("gamma", self.gamma.to_string()),
            ("p", self.p.to_string()),
            ("update_aux", self.update_aux.to_string()),
            ("alpha_mode", self.alpha_mode.to_string()),
            ("frozen_segments", self.frozen_segments.to_string()),
            ("route_head", self.route_head.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("log_batches", self.log_batches.to_string()),
            ("p_flip", self.p_flip.to_string()),
            ("p_blur", self.p_blur.to_string()),
            ("p_jpeg", self.p_jpeg.to_string()),
            ("p_cutmix", self.p_cutmix.to_string()),
            ("blur_sigma_min", self.blur_sigma_min.to_string()),
            ("blur_sigma_max", self.blur_sigma_max.to_string()),
            ("jpeg_quality_min", self.jpeg_quality_min.to_string()),
            ("jpeg_quality_max", self.jpeg_quality_max.to_string()),
            ("aug_seed", self.aug_seed.to_string()),
        ];
        let mut out = String::from("# effective configuration (all defaults resolved)\n");
        for (k, v) in entries {
            writeln!(out, "{k} = {v}").expect("writing to a String");
        }
        out
    }

    pub fn write_effective(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(EFFECTIVE_CONFIG_FILE);
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn require(&self, which: &'static str) -> Result<&Path> {
        let p = match which {
            "source_train" => &self.source_train,
            "source_eval" => &self.source_eval,
            "target_train" => &self.target_train,
            "target_eval" => &self.target_eval,
            _ => unreachable!("unknown data key {which}"),
        };
        p.as_deref()
            .ok_or_else(|| Error::Config(format!("`{which}` must be set for this command")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_faithful() {
        let c = RunConfig::parse("", Path::new("")).unwrap();
        assert_eq!(c, RunConfig::default());
        let t = c.transfer_optim();
        assert_eq!((t.lr_init, t.momentum, t.beta, t.gamma, t.p), (0.002, 0.001, 0.6, 0.16, 2.0));
        assert_eq!(t.aug.jpeg_quality_range, (30, 100));
        assert!([t.aug.p_flip, t.aug.p_blur, t.aug.p_jpeg, t.aug.p_cutmix].iter().all(|&p| p == 0.5));
        assert_eq!(c.pretrain_optim().momentum, 0.9);
    }

    #[test]
    fn effective_text_reparses() {
        let text = "beta = 0.8 # comment\n\n# full line\nchannels = 4, 8\nimage_size = 16\nsource_train = data/a\nearly_stop_patience = 3\n";
        let c = RunConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(c.beta, 0.8);
        assert_eq!(c.channels, [4, 8]);
        assert_eq!(c.source_train.as_deref(), Some(Path::new("/base/data/a")));
        let again = RunConfig::parse(&c.to_text(), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_text(), c.to_text());
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "nonsense",
            "unknown_key = 1",
            "beta = 1.5",
            "beta = x",
            "lr_init = 0.1\nlr_init = 0.2",
            "update_aux = maybe",
            "channels = 8",
            "image_size = 12",
            "frozen_segments = 4",
            "momentum = 1.0",
            "jpeg_quality_min = 0",
        ] {
            assert!(matches!(RunConfig::parse(text, Path::new("")), Err(Error::Config(_))), "{text}");
        }
    }
}
