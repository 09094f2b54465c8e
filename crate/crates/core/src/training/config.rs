use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmd::KernelSpec;
use crate::model::{ModelConfig, Variant};
use crate::weak_supervision::WeakSupConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    ExtendedElbo,
    ValAccuracy,
}

impl std::str::FromStr for Selection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extended_elbo" => Ok(Selection::ExtendedElbo),
            "val_accuracy" => Ok(Selection::ValAccuracy),
            other => Err(Error::arg(format!(
                "unknown selection `{other}` (expected extended_elbo or val_accuracy)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// `(beta_x, beta_y, beta_d, beta_s)`
    pub beta_targets: [f64; 4],
    pub gamma_y: f64,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping; 0 disables early stopping.
    pub early_stop_patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub selection: Selection,
    pub weak: WeakSupConfig,
    pub semi_supervised_paths: Option<String>,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta_targets: [1.0; 4],
            gamma_y: 1e5,
            warmup_epochs: 100,
            max_epochs: 500,
            early_stop_patience: 100,
            learning_rate: 1e-4,
            batch_size: 100,
            seed: 0,
            selection: Selection::ExtendedElbo,
            weak: WeakSupConfig::default(),
            semi_supervised_paths: None,
            clip_norm: 100.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta_targets.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(Error::arg("train.beta_* must be finite and >= 0"));
        }
        if !(self.gamma_y >= 0.0 && self.gamma_y.is_finite()) {
            return Err(Error::arg("train.gamma_y must be finite and >= 0"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("train.learning_rate must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("train.batch_size must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::arg("train.max_epochs must be >= 1"));
        }
        if self.early_stop_patience > self.max_epochs {
            return Err(Error::arg(format!(
                "train.early_stop_patience ({}) exceeds train.max_epochs ({})",
                self.early_stop_patience, self.max_epochs
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::arg("train.clip_norm must be > 0"));
        }
        self.weak.validate()
    }
}

/// Model and training settings resolved from a config file plus overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::new(10, (3, 28, 28), Variant::Hduva),
            train: TrainConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::arg(format!("cannot parse `{value}` for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::arg(format!("cannot parse `{value}` for {key} (expected on/off)"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

impl RunConfig {
    /// Keys accepted by [`RunConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "model.variant",
        "model.zx_dim",
        "model.zy_dim",
        "model.zd_dim",
        "model.topic_dim",
        "model.with_zx",
        "model.decoder_uses_s",
        "model.topic_samples",
        "model.encoder_channels",
        "model.decoder_channels",
        "model.prior_hidden",
        "train.beta_x",
        "train.beta_y",
        "train.beta_d",
        "train.beta_s",
        "train.beta",
        "train.gamma_y",
        "train.warmup_epochs",
        "train.max_epochs",
        "train.early_stop_patience",
        "train.learning_rate",
        "train.batch_size",
        "train.seed",
        "train.selection",
        "train.semi_supervised_paths",
        "train.clip_norm",
        "weak.aggregation",
        "weak.mmd",
        "weak.gamma_d",
        "weak.bandwidths",
    ];

    /// Set one dotted key. `model.variant` also resets `model.decoder_uses_s`
    /// to the variant's default, so it should come first.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "model.variant" => {
                m.variant = v.parse()?;
                m.decoder_uses_s = m.variant == Variant::Hduva;
            }
            "model.zx_dim" => m.zx_dim = parse(key, v)?,
            "model.zy_dim" => m.zy_dim = parse(key, v)?,
            "model.zd_dim" => m.zd_dim = parse(key, v)?,
            "model.topic_dim" => {
                let k: usize = parse(key, v)?;
                *m = m.clone().with_topic_dim(k);
            }
            "model.with_zx" => m.with_zx = parse_bool(key, v)?,
            "model.decoder_uses_s" => m.decoder_uses_s = parse_bool(key, v)?,
            "model.topic_samples" => m.topic_samples = parse(key, v)?,
            "model.encoder_channels" => {
                let parts: Vec<usize> = v.split(',').map(|p| parse(key, p)).collect::<Result<_>>()?;
                match parts[..] {
                    [a, b] if a > 0 && b > 0 => m.encoder_channels = (a, b),
                    _ => return Err(Error::arg("model.encoder_channels takes two positive sizes `a,b`")),
                }
            }
            "model.decoder_channels" => m.decoder_channels = parse(key, v)?,
            "model.prior_hidden" => m.prior_hidden = parse(key, v)?,
            "train.beta_x" => t.beta_targets[0] = parse(key, v)?,
            "train.beta_y" => t.beta_targets[1] = parse(key, v)?,
            "train.beta_d" => t.beta_targets[2] = parse(key, v)?,
            "train.beta_s" => t.beta_targets[3] = parse(key, v)?,
            "train.beta" => t.beta_targets = [parse(key, v)?; 4],
            "train.gamma_y" => t.gamma_y = parse(key, v)?,
            "train.warmup_epochs" => t.warmup_epochs = parse(key, v)?,
            "train.max_epochs" => t.max_epochs = parse(key, v)?,
            "train.early_stop_patience" => t.early_stop_patience = parse(key, v)?,
            "train.learning_rate" => t.learning_rate = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.seed" => t.seed = parse(key, v)?,
            "train.selection" => t.selection = v.parse()?,
            "train.semi_supervised_paths" => {
                t.semi_supervised_paths = if v.is_empty() || v == "none" { None } else { Some(v.to_string()) }
            }
            "train.clip_norm" => t.clip_norm = parse(key, v)?,
            "weak.aggregation" => t.weak.use_aggregation = parse_bool(key, v)?,
            "weak.mmd" => t.weak.use_mmd = parse_bool(key, v)?,
            "weak.gamma_d" => t.weak.gamma_d = parse(key, v)?,
            "weak.bandwidths" => t.weak.kernel = KernelSpec::new(parse_list(key, v)?)?,
            other => {
                return Err(Error::arg(format!(
                    "unknown config key `{other}`; known keys: {}",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Apply `(key, value)` pairs, `model.variant` first.
    pub fn apply<'a, I>(&mut self, pairs: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let pairs: Vec<_> = pairs.into_iter().collect();
        for (k, v) in pairs.iter().filter(|(k, _)| *k == "model.variant") {
            self.set(k, v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| *k != "model.variant") {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Parse `section.key = value` lines; `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::arg(format!("config line {}: expected `key = value`", i + 1)))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pairs = Self::parse_text(&text)?;
        let mut cfg = Self::default();
        cfg.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        Ok(cfg)
    }

    /// Render as a config file that [`RunConfig::from_file`] reads back to
    /// the same values (data-derived model fields excepted).
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let onoff = |b: bool| if b { "on" } else { "off" };
        let mut lines = vec![
            format!("model.variant = {}", m.variant.as_str()),
            format!("model.zx_dim = {}", m.zx_dim),
            format!("model.zy_dim = {}", m.zy_dim),
            format!("model.zd_dim = {}", m.zd_dim),
            format!("model.topic_dim = {}", m.topic_dim),
            format!("model.with_zx = {}", onoff(m.with_zx)),
            format!("model.decoder_uses_s = {}", onoff(m.decoder_uses_s)),
            format!("model.topic_samples = {}", m.topic_samples),
            format!("model.encoder_channels = {},{}", m.encoder_channels.0, m.encoder_channels.1),
            format!("model.decoder_channels = {}", m.decoder_channels),
            format!("model.prior_hidden = {}", m.prior_hidden),
        ];
        for (name, b) in ["x", "y", "d", "s"].iter().zip(t.beta_targets) {
            lines.push(format!("train.beta_{name} = {b:?}"));
        }
        lines.extend([
            format!("train.gamma_y = {:?}", t.gamma_y),
            format!("train.warmup_epochs = {}", t.warmup_epochs),
            format!("train.max_epochs = {}", t.max_epochs),
            format!("train.early_stop_patience = {}", t.early_stop_patience),
            format!("train.learning_rate = {:?}", t.learning_rate),
            format!("train.batch_size = {}", t.batch_size),
            format!("train.seed = {}", t.seed),
            format!(
                "train.selection = {}",
                match t.selection {
                    Selection::ExtendedElbo => "extended_elbo",
                    Selection::ValAccuracy => "val_accuracy",
                }
            ),
            format!("train.semi_supervised_paths = {}", t.semi_supervised_paths.as_deref().unwrap_or("none")),
            format!("train.clip_norm = {:?}", t.clip_norm),
            format!("weak.aggregation = {}", onoff(t.weak.use_aggregation)),
            format!("weak.mmd = {}", onoff(t.weak.use_mmd)),
            format!("weak.gamma_d = {:?}", t.weak.gamma_d),
            format!("weak.bandwidths = {}", join(t.weak.kernel.bandwidths())),
        ]);
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let t = TrainConfig::default();
        assert_eq!(t.beta_targets, [1.0; 4]);
        assert_eq!(t.gamma_y, 1e5);
        assert_eq!(t.warmup_epochs, 100);
        assert_eq!(t.learning_rate, 1e-4);
        assert!(t.validate().is_ok());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut t = TrainConfig::default();
        t.beta_targets[2] = -1.0;
        assert!(t.validate().is_err());
        let mut t = TrainConfig { max_epochs: 3, early_stop_patience: 4, ..Default::default() };
        assert!(t.validate().is_err());
        t.early_stop_patience = 3;
        assert!(t.validate().is_ok());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply([
            ("train.gamma_y", "3500"),
            ("weak.mmd", "off"),
            ("model.decoder_uses_s", "on"),
            ("model.variant", "lhduva"),
            ("weak.bandwidths", "0.5,2"),
        ])
        .unwrap();
        assert_eq!(cfg.model.variant, Variant::Lhduva);
        assert!(cfg.model.decoder_uses_s);
        assert!(!cfg.train.weak.use_mmd);
        let text = cfg.to_text();
        let pairs = RunConfig::parse_text(&text).unwrap();
        let mut back = RunConfig::default();
        back.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_lists_known_keys() {
        let err = RunConfig::default().set("train.nope", "1").unwrap_err();
        assert!(err.to_string().contains("train.gamma_y"));
        assert!(RunConfig::parse_text("no equals sign").is_err());
    }
}
