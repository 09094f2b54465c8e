#![allow(dead_code)]

use hduva_core::model::{ModelConfig, Variant};
use hduva_core::scenarios::{gen_color_hierarchical, BaseSource, ColorHierarchicalParams, ScenarioManifest, SyntheticDigits};
use hduva_core::training::{TrainConfig, TrainingData};
use hduva_core::Execution;

pub fn synthetic(side: usize, classes: usize, count: usize) -> BaseSource {
    BaseSource::synthetic(SyntheticDigits::new(side, classes, count, 11).unwrap())
}

/// Hierarchical color scenario on 16×16 procedural digits.
pub fn color_toy(classes: usize, per_subdomain: usize, seed: u64) -> (ScenarioManifest, BaseSource) {
    let source = synthetic(16, classes, 4000);
    let params = ColorHierarchicalParams {
        per_subdomain,
        max_classes: None,
        side: None,
        semi_per_domain: 0,
    };
    (gen_color_hierarchical(&source, &params, seed).unwrap(), source)
}

/// Training data restricted to the first `domains` nominal domains.
pub fn color_data(classes: usize, per_subdomain: usize, domains: usize, seed: u64) -> TrainingData {
    let (m, source) = color_toy(classes, per_subdomain, seed);
    let mut data = m.training_data(Some(&source), Execution::default()).unwrap();
    data.domains.truncate(domains);
    data
}

pub fn small_model(variant: Variant, classes: usize) -> ModelConfig {
    let mut m = ModelConfig::new(classes, (3, 16, 16), variant);
    m.zx_dim = 8;
    m.zy_dim = 8;
    m.zd_dim = 8;
    m.encoder_channels = (8, 16);
    m.decoder_channels = 8;
    m.prior_hidden = 16;
    m
}

pub fn quick_train(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs,
        early_stop_patience: 0,
        warmup_epochs: 2,
        batch_size: 16,
        learning_rate: 1e-3,
        gamma_y: 1e3,
        ..Default::default()
    }
}
