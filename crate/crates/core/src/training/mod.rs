//! Training loop: β warm-up, stratified per-domain batches, extended-ELBO
//! model selection, early stopping, the Deep-All baseline and the
//! weak-supervision ablation runner.

mod checkpoint;
mod config;
mod data;

use std::path::Path;

use candle_core::{DType, Tensor};
use candle_nn::optim::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::Checkpoint;
pub use config::{RunConfig, Selection, TrainConfig};
pub use data::{stratified_schedule, DomainSet, TrainingData};

use crate::error::{Error, Result};
use crate::model::{ops, ElboBreakdown, HduvaModel, ModelConfig, Noise, Variant};
use crate::parallel::chunk_seed;
use crate::weak_supervision::{constrained_loss_tensor, WeakSupConfig};

/// Improvement threshold for early stopping.
pub const IMPROVEMENT_TOL: f64 = 1e-6;

/// Effective `(beta_x, beta_y, beta_d, beta_s)` at a 0-based epoch:
/// `target * min(1, epoch / warmup_epochs)`.
pub fn warmup_beta(epoch: usize, config: &TrainConfig) -> [f64; 4] {
    let frac = if config.warmup_epochs == 0 {
        1.0
    } else {
        (epoch as f64 / config.warmup_epochs as f64).min(1.0)
    };
    config.beta_targets.map(|b| if frac >= 1.0 { b } else { b * frac })
}

/// What one epoch looked like, averaged over its steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Running mean of the extended objective under the effective betas.
    pub objective: f64,
    /// Same term means recombined with the target betas; the selection and
    /// early-stopping score, so warm-up does not favour early epochs.
    pub objective_at_target: f64,
    pub loss: f64,
    pub terms: Option<ElboBreakdown>,
    pub betas: [f64; 4],
    pub mmd_penalty: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub steps: usize,
}

impl EpochMetrics {
    /// Effective betas never exceed their targets and equal them once the
    /// ramp has finished.
    pub fn betas_consistent(&self, config: &TrainConfig) -> bool {
        let done = self.epoch > config.warmup_epochs;
        self.betas
            .iter()
            .zip(config.beta_targets)
            .all(|(&b, t)| b <= t && (!done || b == t))
    }

    fn score(&self, selection: Selection) -> f64 {
        match selection {
            Selection::ExtendedElbo => self.objective_at_target,
            Selection::ValAccuracy => self.val_accuracy.unwrap_or(f64::NEG_INFINITY),
        }
    }
}

/// Counters showing how unlabelled rows were routed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemiCounters {
    pub unlabeled_rows: usize,
    pub unlabeled_rows_in_mmd: usize,
    pub unlabeled_rows_in_aggregated_topic: usize,
    pub labeled_rows_in_mmd: usize,
}

/// One mini-batch from one nominal domain.
#[derive(Debug, Clone)]
pub struct DomainBatch {
    pub images: Tensor,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub loss: f64,
    /// Mean over domains of the batch-mean extended objective.
    pub objective: f64,
    pub terms: ElboBreakdown,
    pub mmd_penalty: Option<f64>,
    pub correct: usize,
    pub seen: usize,
    pub grad_norm: f64,
}

/// Owns the model, the optimizer and the noise stream of one run.
#[derive(Debug)]
pub struct Trainer {
    model: HduvaModel,
    optimizer: AdamW,
    config: TrainConfig,
    noise: Noise,
    pub counters: SemiCounters,
}

fn is_finite(t: &Tensor) -> Result<bool> {
    Ok(ops::scalar(&t.to_dtype(DType::F64)?.sum_all()?)?.is_finite())
}

impl Trainer {
    pub fn new(model: HduvaModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = ParamsAdamW {
            lr: config.learning_rate,
            weight_decay: 0.0,
            ..Default::default()
        };
        let optimizer = AdamW::new(model.store().vars(), params)?;
        let noise = Noise::new(chunk_seed(config.seed, 0x6e6f697365));
        Ok(Self {
            model,
            optimizer,
            config,
            noise,
            counters: SemiCounters::default(),
        })
    }

    pub fn model(&self) -> &HduvaModel {
        &self.model
    }

    pub fn into_model(self) -> HduvaModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// One gradient update on one batch per training domain, plus an optional
    /// unlabelled batch that is kept out of topic aggregation and the MMD term.
    pub fn step(&mut self, batches: &[DomainBatch], unlabeled: Option<&Tensor>, betas: [f64; 4]) -> Result<StepMetrics> {
        if batches.is_empty() {
            return Err(Error::arg("train_step needs at least one domain batch"));
        }
        if self.model.config().variant == Variant::DeepAll {
            return Err(Error::State("use the Deep-All trainer for the deep_all variant".into()));
        }
        let cfg = &self.config;
        let mut objectives = Vec::with_capacity(batches.len());
        let mut zds = Vec::with_capacity(batches.len());
        let mut all_terms = Vec::with_capacity(batches.len());
        let mut breakdowns = Vec::with_capacity(batches.len());
        let (mut correct, mut seen) = (0usize, 0usize);
        for b in batches {
            let (terms, inf) =
                self.model
                    .elbo_terms_t(&b.images, &b.labels, true, cfg.weak.use_aggregation, &mut self.noise)?;
            let per_instance = terms.objective(betas, cfg.gamma_y)?;
            objectives.push(per_instance.mean_all()?);
            zds.push(inf.passes[0].zd.clone());
            breakdowns.push(terms.breakdown(betas)?);
            let pred = self.model.classify_aux_t(&inf.q_zy.mean)?.argmax(1)?.to_vec1::<u32>()?;
            correct += pred.iter().zip(&b.labels).filter(|(p, y)| p == y).count();
            seen += b.labels.len();
            all_terms.push(terms);
        }
        if cfg.weak.use_mmd && batches.len() >= 2 {
            self.counters.labeled_rows_in_mmd += seen;
        }
        let (mut loss, penalty) = constrained_loss_tensor(&objectives, &zds, &cfg.weak)?;

        if let Some(x) = unlabeled {
            let n = x.dim(0)?;
            self.counters.unlabeled_rows += n;
            let pseudo = self.model.class_log_probs(x, true)?.argmax(1)?.to_vec1::<u32>()?;
            let (terms, _) = self.model.elbo_terms_t(x, &pseudo, true, false, &mut self.noise)?;
            let f = terms.objective(betas, 0.0)?.mean_all()?;
            if !is_finite(&f)? {
                return Err(divergence_term(&terms));
            }
            loss = (loss - f)?;
        }

        let loss_value = ops::scalar(&loss.to_dtype(DType::F64)?)?;
        if !loss_value.is_finite() {
            for terms in &all_terms {
                for (name, t) in terms.named() {
                    if !is_finite(t)? {
                        return Err(Error::Divergence { term: name.to_string() });
                    }
                }
            }
            let term = if penalty.as_ref().map(is_finite).transpose()? == Some(false) {
                "mmd_penalty"
            } else {
                "loss"
            };
            return Err(Error::Divergence { term: term.into() });
        }

        let mut grads = loss.backward()?;
        let vars = self.model.store().vars();
        let mut sq = 0.0;
        for v in &vars {
            if let Some(g) = grads.get(v.as_tensor()) {
                sq += ops::scalar(&g.to_dtype(DType::F64)?.sqr()?.sum_all()?)?;
            }
        }
        let grad_norm = sq.sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::Divergence { term: "gradient".into() });
        }
        if grad_norm > cfg.clip_norm {
            let scale = cfg.clip_norm / grad_norm;
            for v in &vars {
                if let Some(g) = grads.remove(v.as_tensor()) {
                    grads.insert(v.as_tensor(), (g * scale)?);
                }
            }
        }
        self.optimizer.step(&grads)?;

        let n = objectives.len() as f64;
        let objective = objectives
            .iter()
            .map(|o| ops::scalar(&o.to_dtype(DType::F64)?))
            .sum::<Result<f64>>()?
            / n;
        Ok(StepMetrics {
            loss: loss_value,
            objective,
            terms: mean_breakdown(&breakdowns),
            mmd_penalty: penalty.map(|p| ops::scalar(&p.to_dtype(DType::F64)?)).transpose()?,
            correct,
            seen,
            grad_norm,
        })
    }
}

fn divergence_term(terms: &crate::model::ElboTerms) -> Error {
    for (name, t) in terms.named() {
        if !matches!(is_finite(t), Ok(true)) {
            return Error::Divergence { term: name.to_string() };
        }
    }
    Error::Divergence { term: "loss".into() }
}

fn mean_breakdown(items: &[ElboBreakdown]) -> ElboBreakdown {
    let n = items.len() as f64;
    let avg = |f: &dyn Fn(&ElboBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
    ElboBreakdown {
        recon_loglik: avg(&|b| b.recon_loglik),
        kl_zx: items[0].kl_zx.map(|_| avg(&|b| b.kl_zx.unwrap_or(0.0))),
        kl_zy: avg(&|b| b.kl_zy),
        zd_log_ratio: avg(&|b| b.zd_log_ratio),
        kl_s: avg(&|b| b.kl_s),
        aux_class_loglik: avg(&|b| b.aux_class_loglik),
        effective_betas: items[0].effective_betas,
    }
}

/// Free-function form of [`Trainer::step`].
pub fn train_step(
    trainer: &mut Trainer,
    batches: &[DomainBatch],
    unlabeled: Option<&Tensor>,
    betas: [f64; 4],
) -> Result<StepMetrics> {
    trainer.step(batches, unlabeled, betas)
}

/// Classification accuracy of `model` on `set` in evaluation mode.
pub fn accuracy(model: &HduvaModel, set: &DomainSet, batch_size: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::arg(format!("domain `{}` is empty", set.name)));
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = set.batch(chunk)?;
        let pred = model.predict(&x)?;
        correct += pred.iter().zip(&y).filter(|(p, y)| p == y).count();
    }
    Ok(correct as f64 / set.len() as f64)
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Checkpoint with the best selection score.
    pub selected: Checkpoint,
    pub selected_epoch: usize,
    pub history: Vec<EpochMetrics>,
    pub stopped_early: bool,
    pub counters: SemiCounters,
}

impl FitOutcome {
    pub fn model(&self) -> Result<HduvaModel> {
        self.selected.to_model()
    }
}

fn resolve_model_config(data: &TrainingData, model: &ModelConfig) -> ModelConfig {
    let mut m = model.clone();
    m.num_classes = data.num_classes;
    m.image_shape = data.image_shape();
    m
}

struct Selector {
    selection: Selection,
    patience: usize,
    best_score: f64,
    best: Option<(usize, Checkpoint)>,
    stale: usize,
}

impl Selector {
    fn new(cfg: &TrainConfig) -> Self {
        Self {
            selection: cfg.selection,
            patience: cfg.early_stop_patience,
            best_score: f64::NEG_INFINITY,
            best: None,
            stale: 0,
        }
    }

    /// Record an epoch; returns true when training should stop.
    fn observe(&mut self, m: &EpochMetrics, capture: impl FnOnce() -> Result<Checkpoint>) -> Result<bool> {
        let score = m.score(self.selection);
        if self.best.is_none() || score > self.best_score + IMPROVEMENT_TOL {
            self.best_score = score;
            self.best = Some((m.epoch, capture()?));
            self.stale = 0;
        } else {
            if score > self.best_score {
                // within tolerance: keep the better weights, still count as stale
                self.best_score = score;
                self.best = Some((m.epoch, capture()?));
            }
            self.stale += 1;
        }
        Ok(self.patience > 0 && self.stale >= self.patience)
    }
}

/// Train an HDUVA/LHDUVA model. Image shape and class count are taken from
/// `data`; the remaining model settings from `model`.
pub fn fit(data: &TrainingData, model: &ModelConfig, cfg: &TrainConfig) -> Result<FitOutcome> {
    data.validate()?;
    cfg.validate()?;
    let mcfg = resolve_model_config(data, model);
    if mcfg.variant == Variant::DeepAll {
        return deep_all_fit(data, &mcfg, cfg);
    }
    if cfg.selection == Selection::ValAccuracy && data.validation.is_empty() {
        return Err(Error::arg("selection = val_accuracy needs validation data"));
    }
    let domains: Vec<&DomainSet> = data.domains.iter().filter(|d| !d.is_empty()).collect();
    let lens: Vec<usize> = domains.iter().map(|d| d.len()).collect();
    let mut trainer = Trainer::new(HduvaModel::new(mcfg, cfg.seed)?, cfg.clone())?;
    let mut history = Vec::new();
    let mut selector = Selector::new(cfg);
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let betas = warmup_beta(epoch, cfg);
        let schedule = stratified_schedule(&lens, cfg.batch_size, cfg.seed, epoch);
        let unl_schedule = match &data.unlabeled {
            Some(u) if !u.is_empty() => stratified_schedule(&[u.len()], cfg.batch_size, chunk_seed(cfg.seed, 1), epoch),
            _ => Vec::new(),
        };
        let mut acc = EpochAccumulator::default();
        for (t, step) in schedule.iter().enumerate() {
            let batches = domains
                .iter()
                .zip(step)
                .map(|(d, idx)| {
                    let (images, labels) = d.batch(idx)?;
                    Ok(DomainBatch { images, labels })
                })
                .collect::<Result<Vec<_>>>()?;
            let unl = match (&data.unlabeled, unl_schedule.get(t % unl_schedule.len().max(1))) {
                (Some(u), Some(idx)) => Some(u.batch(&idx[0])?.0),
                _ => None,
            };
            let m = trainer.step(&batches, unl.as_ref(), betas)?;
            acc.add(&m);
        }
        let val_accuracy = if cfg.selection == Selection::ValAccuracy {
            let pooled = DomainSet::pool("validation", &data.validation)?;
            Some(accuracy(trainer.model(), &pooled, cfg.batch_size)?)
        } else {
            None
        };
        let metrics = acc.finish(epoch + 1, betas, cfg, val_accuracy);
        log::info!(
            "epoch {} objective {:.4} target-objective {:.4} acc {:?}",
            metrics.epoch,
            metrics.objective,
            metrics.objective_at_target,
            metrics.train_accuracy
        );
        history.push(metrics.clone());
        let stop = selector.observe(&metrics, || Checkpoint::capture(trainer.model(), cfg, epoch + 1, Vec::new()))?;
        if stop {
            stopped_early = epoch + 1 < cfg.max_epochs;
            break;
        }
    }
    let (selected_epoch, mut selected) = selector.best.expect("at least one epoch");
    selected.history = history.clone();
    Ok(FitOutcome {
        selected,
        selected_epoch,
        history,
        stopped_early,
        counters: trainer.counters.clone(),
    })
}

#[derive(Default)]
struct EpochAccumulator {
    steps: usize,
    loss: f64,
    objective: f64,
    terms: Vec<ElboBreakdown>,
    penalty: Option<f64>,
    correct: usize,
    seen: usize,
}

impl EpochAccumulator {
    fn add(&mut self, m: &StepMetrics) {
        self.steps += 1;
        self.loss += m.loss;
        self.objective += m.objective;
        self.terms.push(m.terms.clone());
        if let Some(p) = m.mmd_penalty {
            *self.penalty.get_or_insert(0.0) += p;
        }
        self.correct += m.correct;
        self.seen += m.seen;
    }

    fn finish(self, epoch: usize, betas: [f64; 4], cfg: &TrainConfig, val_accuracy: Option<f64>) -> EpochMetrics {
        let n = self.steps.max(1) as f64;
        let terms = mean_breakdown(&self.terms);
        let target = ElboBreakdown {
            effective_betas: cfg.beta_targets,
            ..terms.clone()
        };
        EpochMetrics {
            epoch,
            objective: self.objective / n,
            objective_at_target: target.extended_objective(cfg.gamma_y),
            loss: self.loss / n,
            terms: Some(terms),
            betas,
            mmd_penalty: self.penalty.map(|p| p / n),
            train_accuracy: Some(self.correct as f64 / self.seen.max(1) as f64),
            val_accuracy,
            steps: self.steps,
        }
    }
}

/// Deep-All baseline: the `z_y` encoder and classifier trained with
/// cross-entropy on all training domains pooled together.
pub fn deep_all_fit(data: &TrainingData, model: &ModelConfig, cfg: &TrainConfig) -> Result<FitOutcome> {
    data.validate()?;
    cfg.validate()?;
    let mut mcfg = resolve_model_config(data, model);
    mcfg.variant = Variant::DeepAll;
    let pooled = DomainSet::pool("pooled", &data.domains)?;
    let model = HduvaModel::new(mcfg, cfg.seed)?;
    let params = ParamsAdamW {
        lr: cfg.learning_rate,
        weight_decay: 0.0,
        ..Default::default()
    };
    let mut opt = AdamW::new(model.store().vars(), params)?;
    let mut history = Vec::new();
    let mut selector = Selector::new(cfg);
    let mut stopped_early = false;
    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..pooled.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(chunk_seed(cfg.seed, epoch as u64)));
        let (mut ll_sum, mut correct, mut steps) = (0.0, 0usize, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let (x, y) = pooled.batch(idx)?;
            let logp = model.class_log_probs(&x, true)?;
            let labels = Tensor::from_vec(y.clone(), (y.len(), 1), x.device())?;
            let ll = logp.gather(&labels, 1)?.to_dtype(DType::F64)?.mean_all()?;
            let ll_value = ops::scalar(&ll)?;
            if !ll_value.is_finite() {
                return Err(Error::Divergence { term: "aux_class_loglik".into() });
            }
            let grads = ll.neg()?.backward()?;
            opt.step(&grads)?;
            let pred = logp.argmax(1)?.to_vec1::<u32>()?;
            correct += pred.iter().zip(&y).filter(|(p, y)| p == y).count();
            ll_sum += ll_value;
            steps += 1;
        }
        let objective = ll_sum / steps.max(1) as f64;
        let val_accuracy = if cfg.selection == Selection::ValAccuracy && !data.validation.is_empty() {
            Some(accuracy(&model, &DomainSet::pool("validation", &data.validation)?, cfg.batch_size)?)
        } else {
            None
        };
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            objective,
            objective_at_target: objective,
            loss: -objective,
            terms: None,
            betas: warmup_beta(epoch, cfg),
            mmd_penalty: None,
            train_accuracy: Some(correct as f64 / pooled.len() as f64),
            val_accuracy,
            steps,
        };
        history.push(metrics.clone());
        if selector.observe(&metrics, || Checkpoint::capture(&model, cfg, epoch + 1, Vec::new()))? {
            stopped_early = epoch + 1 < cfg.max_epochs;
            break;
        }
    }
    let (selected_epoch, mut selected) = selector.best.expect("at least one epoch");
    selected.history = history.clone();
    Ok(FitOutcome {
        selected,
        selected_epoch,
        history,
        stopped_early,
        counters: SemiCounters::default(),
    })
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `0.930 ± 0.0120` style: three significant digits each.
pub fn format_mean_sd(mean: f64, sd: f64) -> String {
    // identical runs leave rounding residue in the SD
    let sd = if sd.abs() < 1e-9 * mean.abs().max(1.0) { 0.0 } else { sd };
    format!("{} ± {}", sig3(mean), sig3(sd))
}

fn sig3(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v:.3}");
    }
    let digits = (2 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.digits$}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: String,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub data_hash: String,
}

/// Run [`fit`] for each Agg/MMD combination with shared seeds and report
/// held-out accuracy on `test`.
pub fn run_ablation_matrix(
    data: &TrainingData,
    test: &DomainSet,
    model: &ModelConfig,
    base: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::arg("ablation needs at least one seed"));
    }
    let mut rows = Vec::with_capacity(4);
    for weak in WeakSupConfig::ablation_cells(&base.weak) {
        let mut accs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = TrainConfig {
                seed,
                weak: weak.clone(),
                ..base.clone()
            };
            let out = fit(data, model, &cfg)?;
            accs.push(accuracy(&out.model()?, test, cfg.batch_size)?);
        }
        let (mean, sd) = mean_sd(&accs);
        rows.push(AblationRow {
            cell: weak.cell_name().to_string(),
            accuracies: accs,
            mean,
            sd,
            data_hash: data.content_hash(),
        });
    }
    Ok(rows)
}

pub fn render_ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::from("cell            accuracy\n");
    for r in rows {
        s.push_str(&format!("{:<15} {}\n", r.cell, format_mean_sd(r.mean, r.sd)));
    }
    s
}

const METRIC_COLUMNS: &[&str] = &[
    "epoch",
    "objective",
    "objective_at_target",
    "loss",
    "recon_loglik",
    "kl_zx",
    "kl_zy",
    "zd_log_ratio",
    "kl_s",
    "aux_class_loglik",
    "beta_x",
    "beta_y",
    "beta_d",
    "beta_s",
    "mmd_penalty",
    "train_accuracy",
    "val_accuracy",
];

/// One CSV row per epoch; absent values are left empty.
pub fn write_metrics_csv(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    let io = |e: csv::Error| Error::io(path, e);
    w.write_record(METRIC_COLUMNS).map_err(io)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for m in history {
        let t = m.terms.as_ref();
        let mut row = vec![
            m.epoch.to_string(),
            format!("{:?}", m.objective),
            format!("{:?}", m.objective_at_target),
            format!("{:?}", m.loss),
            opt(t.map(|t| t.recon_loglik)),
            opt(t.and_then(|t| t.kl_zx)),
            opt(t.map(|t| t.kl_zy)),
            opt(t.map(|t| t.zd_log_ratio)),
            opt(t.map(|t| t.kl_s)),
            opt(t.map(|t| t.aux_class_loglik)),
        ];
        row.extend(m.betas.iter().map(|b| format!("{b:?}")));
        row.extend([opt(m.mmd_penalty), opt(m.train_accuracy), opt(m.val_accuracy)]);
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_examples() {
        let cfg = TrainConfig::default();
        assert_eq!(warmup_beta(0, &cfg), [0.0; 4]);
        assert_eq!(warmup_beta(50, &cfg), [0.5; 4]);
        assert_eq!(warmup_beta(100, &cfg), [1.0; 4]);
        assert_eq!(warmup_beta(250, &cfg), [1.0; 4]);
        let now = TrainConfig { warmup_epochs: 0, beta_targets: [2.0, 1.0, 0.5, 0.0], ..Default::default() };
        assert_eq!(warmup_beta(0, &now), now.beta_targets);
    }

    #[test]
    fn mean_sd_and_format() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_sd(&[0.5]), (0.5, 0.0));
        assert_eq!(format_mean_sd(0.9312, 0.01234), "0.931 ± 0.0123");
        assert_eq!(format_mean_sd(12.345, 0.0), "12.3 ± 0.000");
        assert_eq!(format_mean_sd(0.4, 6.8e-17), "0.400 ± 0.000");
    }
}
