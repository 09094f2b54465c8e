//! Weak domain supervision: mini-batch topic aggregation and the MMD-constrained
//! objective in Lagrangian form.

use candle_core::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{dirichlet_sample, DirichletParams, SimplexPoint};
use crate::error::{ensure_same_len, Error, Result};
use crate::mmd::{pairwise_domain_mmd, KernelSpec};
use crate::model::ops;

/// Which weak-supervision mechanisms are active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakSupConfig {
    pub use_aggregation: bool,
    pub use_mmd: bool,
    /// Lagrange multiplier on the pairwise MMD term.
    ///
    /// The inequality constants `C_mmd` of the constrained form are never
    /// instantiated; only this fixed multiplier enters the loss.
    pub gamma_d: f64,
    pub kernel: KernelSpec,
}

impl Default for WeakSupConfig {
    fn default() -> Self {
        Self {
            use_aggregation: true,
            use_mmd: true,
            gamma_d: 1.0,
            kernel: KernelSpec::default(),
        }
    }
}

impl WeakSupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_d >= 0.0 && self.gamma_d.is_finite()) {
            return Err(Error::arg(format!("weak.gamma_d must be >= 0, got {}", self.gamma_d)));
        }
        Ok(())
    }

    /// Name of the ablation cell this configuration belongs to.
    pub fn cell_name(&self) -> &'static str {
        match (self.use_aggregation, self.use_mmd) {
            (true, true) => "Agg-MMD",
            (false, true) => "no-Agg-MMD",
            (true, false) => "Agg-no-MMD",
            (false, false) => "no-Agg-no-MMD",
        }
    }

    /// The four ablation cells, in table order.
    pub fn ablation_cells(base: &WeakSupConfig) -> [WeakSupConfig; 4] {
        let cell = |agg, mmd| WeakSupConfig {
            use_aggregation: agg,
            use_mmd: mmd,
            ..base.clone()
        };
        [cell(true, true), cell(false, true), cell(true, false), cell(false, false)]
    }
}

/// Arithmetic mean of the per-instance concentrations of one mini-batch.
pub fn aggregate_concentration(batch: &[DirichletParams]) -> Result<DirichletParams> {
    let first = batch
        .first()
        .ok_or_else(|| Error::arg("aggregate_concentration: empty batch"))?;
    let k = first.dim();
    let mut acc = vec![0.0; k];
    for p in batch {
        ensure_same_len("aggregate_concentration", k, p.dim())?;
        for (a, c) in acc.iter_mut().zip(p.concentration()) {
            *a += c;
        }
    }
    let m = batch.len() as f64;
    DirichletParams::new(acc.into_iter().map(|a| a / m).collect())
}

/// One topic draw from the aggregated concentration, broadcast to `batch_size` rows.
pub fn shared_topic_sample<R: Rng + ?Sized>(
    aggregated: &DirichletParams,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<SimplexPoint>> {
    let s = dirichlet_sample(aggregated, rng)?;
    Ok(vec![s; batch_size])
}

/// `-sum(F) - gamma_d * sum_pairs MMD²(z_d batches)` on plain numbers.
///
/// The penalty enters with a negative sign, so larger inter-domain
/// discrepancy lowers the loss.
pub fn constrained_loss(
    per_domain_objectives: &[f64],
    per_domain_zd: &[Vec<Vec<f64>>],
    cfg: &WeakSupConfig,
) -> Result<f64> {
    if per_domain_objectives.is_empty() {
        return Err(Error::arg("constrained_loss: no domains"));
    }
    let base = -per_domain_objectives.iter().sum::<f64>();
    if !cfg.use_mmd || cfg.gamma_d == 0.0 {
        return Ok(base);
    }
    ensure_same_len(
        "constrained_loss domains",
        per_domain_objectives.len(),
        per_domain_zd.len(),
    )?;
    Ok(base - cfg.gamma_d * pairwise_domain_mmd(per_domain_zd, &cfg.kernel)?)
}

/// Graph version of [`constrained_loss`]; `objectives` are scalar tensors and
/// `zd` holds one `(batch, dim)` sample matrix per nominal domain.
pub fn constrained_loss_tensor(
    objectives: &[Tensor],
    zd: &[Tensor],
    cfg: &WeakSupConfig,
) -> Result<(Tensor, Option<Tensor>)> {
    if objectives.is_empty() {
        return Err(Error::arg("constrained_loss: no domains"));
    }
    let total = Tensor::stack(objectives, 0)?.sum_all()?;
    let base = total.neg()?;
    if !cfg.use_mmd || cfg.gamma_d == 0.0 || zd.len() < 2 {
        return Ok((base, None));
    }
    ensure_same_len("constrained_loss domains", objectives.len(), zd.len())?;
    let penalty = ops::pairwise_mmd_standardized(zd, cfg.kernel.bandwidths())?.to_dtype(base.dtype())?;
    let loss = (base - (&penalty * cfg.gamma_d)?)?;
    Ok((loss, Some(penalty)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dir(v: &[f64]) -> DirichletParams {
        DirichletParams::new(v.to_vec()).unwrap()
    }

    #[test]
    fn aggregation_examples() {
        let agg = aggregate_concentration(&[dir(&[1.0, 2.0, 3.0]), dir(&[3.0, 2.0, 1.0])]).unwrap();
        assert_eq!(agg.concentration(), &[2.0, 2.0, 2.0]);
        let single = dir(&[0.3, 4.0]);
        assert_eq!(aggregate_concentration(&[single.clone()]).unwrap(), single);
        assert_eq!(
            aggregate_concentration(&[single.clone(), single.clone(), single.clone()]).unwrap(),
            single
        );
        assert!(aggregate_concentration(&[]).is_err());
        assert!(aggregate_concentration(&[dir(&[1.0]), dir(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn shared_sample_broadcasts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rows = shared_topic_sample(&dir(&[1.0, 1.0, 1.0]), 8, &mut rng).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.windows(2).all(|w| w[0] == w[1]));
        let s: f64 = rows[0].weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn per_instance_topics_differ_without_aggregation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = dir(&[1.0, 1.0, 1.0]);
        let rows: Vec<_> = (0..16).map(|_| dirichlet_sample(&p, &mut rng).unwrap()).collect();
        for i in 0..16 {
            for j in i + 1..16 {
                assert_ne!(rows[i], rows[j]);
            }
        }
    }

    #[test]
    fn loss_examples() {
        let f = [-3.0, -5.0];
        let zd = vec![vec![vec![0.0, 1.0]], vec![vec![2.0, 1.0]]];
        let off = WeakSupConfig { use_mmd: false, ..Default::default() };
        assert_eq!(constrained_loss(&f, &zd, &off).unwrap(), 8.0);
        let zero = WeakSupConfig { gamma_d: 0.0, ..Default::default() };
        assert_eq!(constrained_loss(&f, &zd, &zero).unwrap(), 8.0);
        let same = vec![zd[0].clone(), zd[0].clone()];
        let on = WeakSupConfig::default();
        assert!((constrained_loss(&f, &same, &on).unwrap() - 8.0).abs() < 1e-12);
        assert!(constrained_loss(&f, &zd, &on).unwrap() < 8.0);
        assert!(constrained_loss(&[], &[], &on).is_err());
    }

    #[test]
    fn cell_names() {
        let names: Vec<_> = WeakSupConfig::ablation_cells(&WeakSupConfig::default())
            .iter()
            .map(|c| c.cell_name())
            .collect();
        assert_eq!(names, ["Agg-MMD", "no-Agg-MMD", "Agg-no-MMD", "no-Agg-no-MMD"]);
    }
}
