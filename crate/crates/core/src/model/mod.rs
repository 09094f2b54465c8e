//! The hierarchical generative model and its inference networks.
//!
//! Three latent blocks explain an image: `z_y` (class), `z_d` (domain, with a
//! conditional prior driven by the Dirichlet topic `s`) and `z_x` (residual).
//! Two inference orders are supported: [`Variant::Hduva`] infers `s` from the
//! image and `z_d` from `(x, s)`; [`Variant::Lhduva`] infers `z_d` from the
//! image, `s` from `z_d`, and merges the bottom-up `z_d` posterior with the
//! top-down prior (ladder correction). [`Variant::DeepAll`] keeps only the class
//! encoder and classifier.

mod layers;
mod network;
mod noise;
pub mod ops;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use layers::{trunk_side, ParamStore};
pub use network::{
    ladder_correct, ladder_correct_t, ElboBreakdown, ElboTerms, EncoderOutputs, HduvaModel,
    Inference, TopicPass,
};
pub use noise::{GammaMode, Noise};

/// Inference order of the model, or the pooled-classifier baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Hduva,
    Lhduva,
    DeepAll,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Hduva => "hduva",
            Variant::Lhduva => "lhduva",
            Variant::DeepAll => "deep_all",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hduva" => Ok(Variant::Hduva),
            "lhduva" => Ok(Variant::Lhduva),
            "deep_all" | "deep-all" => Ok(Variant::DeepAll),
            other => Err(Error::arg(format!(
                "unknown model variant `{other}` (expected hduva, lhduva or deep_all)"
            ))),
        }
    }
}

/// Shape of an image batch item: `(channels, height, width)`.
pub type ImageShape = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub zx_dim: usize,
    pub zy_dim: usize,
    pub zd_dim: usize,
    pub topic_dim: usize,
    pub num_classes: usize,
    pub image_shape: ImageShape,
    pub variant: Variant,
    pub with_zx: bool,
    pub decoder_uses_s: bool,
    /// Number of topic samples averaged per instance.
    pub topic_samples: usize,
    pub encoder_channels: (usize, usize),
    pub decoder_channels: usize,
    pub prior_hidden: usize,
    /// Concentration of the Dirichlet prior on the topic (flat by default).
    pub topic_prior: Vec<f64>,
    /// Build the networks in 64-bit floats (gradient checks).
    pub double_precision: bool,
}

impl ModelConfig {
    pub fn new(num_classes: usize, image_shape: ImageShape, variant: Variant) -> Self {
        Self {
            zx_dim: 64,
            zy_dim: 64,
            zd_dim: 64,
            topic_dim: 3,
            num_classes,
            image_shape,
            variant,
            with_zx: true,
            decoder_uses_s: variant == Variant::Hduva,
            topic_samples: 1,
            encoder_channels: (32, 64),
            decoder_channels: 64,
            prior_hidden: 64,
            topic_prior: vec![1.0; 3],
            double_precision: false,
        }
    }

    /// Set the topic dimension and reset the prior to the flat Dirichlet.
    pub fn with_topic_dim(mut self, k: usize) -> Self {
        self.topic_dim = k;
        self.topic_prior = vec![1.0; k];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.zx_dim", self.zx_dim),
            ("model.zy_dim", self.zy_dim),
            ("model.zd_dim", self.zd_dim),
            ("model.topic_dim", self.topic_dim),
            ("model.num_classes", self.num_classes),
            ("model.topic_samples", self.topic_samples),
            ("model.decoder_channels", self.decoder_channels),
            ("model.prior_hidden", self.prior_hidden),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::arg(format!("{k} must be >= 1")));
            }
        }
        if self.topic_prior.len() != self.topic_dim || self.topic_prior.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::arg("topic prior must hold topic_dim positive entries"));
        }
        let (c, h, w) = self.image_shape;
        if c == 0 {
            return Err(Error::arg("image needs at least one channel"));
        }
        trunk_side(h)?;
        trunk_side(w)?;
        Ok(())
    }

    /// Width of the latent code fed to the decoder.
    pub fn decoder_input_dim(&self) -> usize {
        let mut d = self.zd_dim + self.zy_dim;
        if self.with_zx {
            d += self.zx_dim;
        }
        if self.decoder_uses_s {
            d += self.topic_dim;
        }
        d
    }
}
