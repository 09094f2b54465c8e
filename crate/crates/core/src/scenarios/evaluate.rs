use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::ScenarioManifest;
use crate::error::{Error, Result};
use crate::model::{HduvaModel, ModelConfig, Variant};
use crate::training::{fit, format_mean_sd, mean_sd, DomainSet, TrainConfig, TrainingData};

/// Anything that maps an image batch to class predictions.
pub trait Classifier {
    fn predict(&self, x: &Tensor) -> Result<Vec<u32>>;

    fn accuracy(&self, set: &DomainSet, batch_size: usize) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::arg(format!("domain `{}` is empty", set.name)));
        }
        let idx: Vec<usize> = (0..set.len()).collect();
        let mut correct = 0usize;
        for chunk in idx.chunks(batch_size.max(1)) {
            let (x, y) = set.batch(chunk)?;
            correct += self.predict(&x)?.iter().zip(&y).filter(|(p, y)| p == y).count();
        }
        Ok(correct as f64 / set.len() as f64)
    }
}

impl Classifier for HduvaModel {
    fn predict(&self, x: &Tensor) -> Result<Vec<u32>> {
        HduvaModel::predict(self, x)
    }
}

/// Predicts one fixed class for every input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantClassifier(pub u32);

impl Classifier for ConstantClassifier {
    fn predict(&self, x: &Tensor) -> Result<Vec<u32>> {
        Ok(vec![self.0; x.dim(0)?])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Model(Variant),
    /// Always predicts the given class; needs no training.
    Constant(u32),
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(c) = s.strip_prefix("constant") {
            let c = c.trim_start_matches(':');
            let class = if c.is_empty() { 0 } else { c.parse().map_err(|_| Error::arg(format!("bad class in `{s}`")))? };
            return Ok(Algorithm::Constant(class));
        }
        Ok(Algorithm::Model(s.parse()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LodoRow {
    pub test_domain: String,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

fn annotate(err: Error, ctx: &str) -> Error {
    match err {
        Error::Argument(m) => Error::Argument(format!("{m} ({ctx})")),
        Error::State(m) => Error::State(format!("{m} ({ctx})")),
        Error::Divergence { term } => Error::Divergence { term: format!("{term} ({ctx})") },
        Error::Io { path, message } => Error::Io { path, message: format!("{message} ({ctx})") },
        other => other,
    }
}

/// Leave-one-domain-out: each non-bridge domain is held out in turn, the
/// algorithm is trained on all other training rows once per seed, and
/// accuracy on every row of the held-out domain is recorded.
pub fn lodo_evaluate(
    algorithm: Algorithm,
    manifest: &ScenarioManifest,
    data: &TrainingData,
    model: &ModelConfig,
    train: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<LodoRow>> {
    if seeds.is_empty() {
        return Err(Error::arg("lodo needs at least one seed"));
    }
    let eligible: Vec<&str> = manifest
        .domains
        .iter()
        .filter(|d| !d.bridge && data.domains.iter().any(|s| s.name == d.name))
        .map(|d| d.name.as_str())
        .collect();
    if eligible.len() < 2 {
        return Err(Error::arg("lodo needs at least two non-bridge domains"));
    }
    let mut rows = Vec::with_capacity(eligible.len());
    for test in eligible {
        let held_out = held_out_set(data, test)?;
        let rest: Vec<DomainSet> = data.domains.iter().filter(|d| d.name != test).cloned().collect();
        let train_data = TrainingData::new(data.num_classes, rest)?;
        let mut accs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let ctx = format!("test domain {test}, seed {seed}");
            let acc = match algorithm {
                Algorithm::Constant(c) => ConstantClassifier(c).accuracy(&held_out, train.batch_size),
                Algorithm::Model(variant) => {
                    let mcfg = ModelConfig { variant, ..model.clone() };
                    let cfg = TrainConfig { seed, ..train.clone() };
                    fit(&train_data, &mcfg, &cfg)
                        .and_then(|out| out.model())
                        .and_then(|m| m.accuracy(&held_out, cfg.batch_size))
                }
            };
            accs.push(acc.map_err(|e| annotate(e, &ctx))?);
        }
        let (mean, sd) = mean_sd(&accs);
        rows.push(LodoRow {
            test_domain: test.to_string(),
            accuracies: accs,
            mean,
            sd,
        });
    }
    Ok(rows)
}

/// Training and validation rows of `name` pooled into one test set.
fn held_out_set(data: &TrainingData, name: &str) -> Result<DomainSet> {
    let parts: Vec<DomainSet> = data
        .domains
        .iter()
        .chain(&data.validation)
        .filter(|d| d.name == name)
        .cloned()
        .collect();
    DomainSet::pool(name, &parts)
}

pub fn render_lodo_table(rows: &[LodoRow]) -> String {
    let mut s = String::from("test_domain  accuracy\n");
    for r in rows {
        s.push_str(&format!("{:<12} {}\n", r.test_domain, format_mean_sd(r.mean, r.sd)));
    }
    s
}

/// Trapezoidal area under accuracy vs. shift index, with the index axis
/// rescaled to `[0, 1]`.
pub fn shift_auc(accuracies: &[f64]) -> Result<f64> {
    if accuracies.len() < 2 {
        return Err(Error::arg("shift AUC needs at least two shift points"));
    }
    let n = accuracies.len() - 1;
    let area: f64 = accuracies.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum();
    Ok(area / n as f64)
}

/// Accuracy of `classifier` on each shift set, and their normalized AUC.
pub fn shift_auc_evaluate<C: Classifier + ?Sized>(
    classifier: &C,
    shifts: &[DomainSet],
    batch_size: usize,
) -> Result<(Vec<f64>, f64)> {
    if shifts.is_empty() {
        return Err(Error::arg("shift sequence is empty"));
    }
    let accs = shifts
        .iter()
        .map(|s| classifier.accuracy(s, batch_size))
        .collect::<Result<Vec<_>>>()?;
    let auc = shift_auc(&accs)?;
    Ok((accs, auc))
}
