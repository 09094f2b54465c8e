//! Maximum mean discrepancy with a superposition of Gaussian kernels.
//!
//! `k(u, v) = sum_j exp(-a_j * |u - v|^2)`, so `k(u, u)` equals the number of
//! bandwidths. Samples are passed as row slices (`&[Vec<f64>]`, one row per
//! observation).

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_len, Error, Result};
use crate::parallel::Execution;

/// Scale coefficients of the composite Gaussian kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    bandwidths: Vec<f64>,
}

impl KernelSpec {
    pub fn new(bandwidths: Vec<f64>) -> Result<Self> {
        if bandwidths.is_empty() {
            return Err(Error::arg("kernel needs at least one bandwidth"));
        }
        if bandwidths.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::arg(format!("bandwidths must be positive: {bandwidths:?}")));
        }
        Ok(Self { bandwidths })
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    /// Kernel value at squared distance `d2`.
    pub fn at_sq_dist(&self, d2: f64) -> f64 {
        self.bandwidths.iter().map(|a| (-a * d2).exp()).sum()
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            bandwidths: vec![0.1, 1.0, 10.0],
        }
    }
}

/// Kernel used to fill a Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Composite(KernelSpec),
    /// `k(u, v) = u . v`, the identity feature map.
    Linear,
}

impl Kernel {
    fn eval_unchecked(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Kernel::Composite(spec) => {
                let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                spec.at_sq_dist(d2)
            }
            Kernel::Linear => u.iter().zip(v).map(|(a, b)| a * b).sum(),
        }
    }
}

/// Evaluate the composite kernel on one pair.
pub fn kernel_eval(u: &[f64], v: &[f64], spec: &KernelSpec) -> Result<f64> {
    ensure_same_len("kernel_eval", u.len(), v.len())?;
    Ok(Kernel::Composite(spec.clone()).eval_unchecked(u, v))
}

/// The three blocks of the stacked Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBlocks {
    pub kxx: Vec<Vec<f64>>,
    pub kyy: Vec<Vec<f64>>,
    pub kxy: Vec<Vec<f64>>,
}

fn check_samples(name: &str, rows: &[Vec<f64>]) -> Result<usize> {
    let first = rows
        .first()
        .ok_or_else(|| Error::arg(format!("{name}: empty sample")))?;
    let d = first.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::arg(format!("{name}: ragged rows")));
    }
    Ok(d)
}

fn block(exec: Execution, a: &[Vec<f64>], b: &[Vec<f64>], kernel: &Kernel) -> Vec<Vec<f64>> {
    exec.map_slice(a, |u| b.iter().map(|v| kernel.eval_unchecked(u, v)).collect())
}

/// Gram blocks under an arbitrary [`Kernel`].
pub fn gram_blocks_with(
    exec: Execution,
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    kernel: &Kernel,
) -> Result<GramBlocks> {
    let dx = check_samples("X", x)?;
    let dy = check_samples("Y", y)?;
    ensure_same_len("gram_blocks feature dimension", dx, dy)?;
    Ok(GramBlocks {
        kxx: block(exec, x, x, kernel),
        kyy: block(exec, y, y, kernel),
        kxy: block(exec, x, y, kernel),
    })
}

/// Gram blocks under the composite kernel.
pub fn gram_blocks(x: &[Vec<f64>], y: &[Vec<f64>], spec: &KernelSpec) -> Result<GramBlocks> {
    gram_blocks_with(Execution::default(), x, y, &Kernel::Composite(spec.clone()))
}

fn sum(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().sum()
}

fn trace(m: &[Vec<f64>]) -> f64 {
    m.iter().enumerate().map(|(i, r)| r[i]).sum()
}

impl GramBlocks {
    /// Positive biased estimate, the squared distance of empirical mean embeddings.
    pub fn mmd2_biased(&self) -> f64 {
        let m = self.kxx.len() as f64;
        let n = self.kyy.len() as f64;
        sum(&self.kxx) / (m * m) + sum(&self.kyy) / (n * n) - 2.0 * sum(&self.kxy) / (m * n)
    }

    /// Paired estimator with the `i = j` terms removed.
    pub fn mmd2_unbiased_paired(&self) -> Result<f64> {
        let m = self.kxx.len();
        if m < 2 {
            return Err(Error::arg("paired MMD needs at least 2 pairs"));
        }
        ensure_same_len("paired MMD sample sizes", m, self.kyy.len())?;
        let bracket = sum(&self.kxx) - trace(&self.kxx) + sum(&self.kyy) - trace(&self.kyy)
            - 2.0 * sum(&self.kxy)
            + 2.0 * trace(&self.kxy);
        Ok(bracket / (m as f64 * (m as f64 - 1.0)))
    }
}

/// Biased MMD² under the composite kernel; accepts unequal sample sizes.
pub fn mmd2_biased(x: &[Vec<f64>], y: &[Vec<f64>], spec: &KernelSpec) -> Result<f64> {
    Ok(gram_blocks(x, y, spec)?.mmd2_biased())
}

/// Unbiased MMD² for paired samples `z_i = (x_i, y_i)`; may be negative.
pub fn mmd2_unbiased_paired(x: &[Vec<f64>], y: &[Vec<f64>], spec: &KernelSpec) -> Result<f64> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::arg("paired MMD needs at least 2 pairs"));
    }
    ensure_same_len("paired MMD sample sizes", x.len(), y.len())?;
    gram_blocks(x, y, spec)?.mmd2_unbiased_paired()
}

/// Sum of biased MMD² over every unordered pair of domains.
pub fn pairwise_domain_mmd(domains: &[Vec<Vec<f64>>], spec: &KernelSpec) -> Result<f64> {
    if domains.is_empty() {
        return Err(Error::arg("pairwise_domain_mmd needs at least one domain"));
    }
    for (i, d) in domains.iter().enumerate() {
        check_samples(&format!("domain {i}"), d)?;
    }
    let mut total = 0.0;
    for i in 0..domains.len() {
        for j in i + 1..domains.len() {
            total += mmd2_biased(&domains[i], &domains[j], spec)?;
        }
    }
    Ok(total)
}

/// Biased MMD² under the linear kernel, which equals `|mean(X) - mean(Y)|^2`.
pub fn moment_match_check(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    Ok(gram_blocks_with(Execution::default(), x, y, &Kernel::Linear)?.mmd2_biased())
}

/// Squared Euclidean distance between the sample means.
pub fn mean_distance_sq(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    let d = check_samples("X", x)?;
    ensure_same_len("mean_distance_sq", d, check_samples("Y", y)?)?;
    let mean = |rows: &[Vec<f64>]| -> Vec<f64> {
        (0..d)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
            .collect()
    };
    let (mx, my) = (mean(x), mean(y));
    Ok(mx.iter().zip(&my).map(|(a, b)| (a - b) * (a - b)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn kernel_examples() {
        let spec = KernelSpec::default();
        assert_eq!(kernel_eval(&[1.0, 2.0], &[1.0, 2.0], &spec).unwrap(), 3.0);
        let one = KernelSpec::new(vec![1.0]).unwrap();
        let v = kernel_eval(&[0.0, 0.0], &[1.0, 0.0], &one).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        assert!(kernel_eval(&[0.0], &[0.0, 1.0], &one).is_err());
        assert!(KernelSpec::new(vec![]).is_err());
        assert!(KernelSpec::new(vec![0.0]).is_err());
    }

    #[test]
    fn worked_linear_examples() {
        let x = col(&[0.0, 2.0]);
        let y = col(&[1.0, 1.0]);
        let blocks = gram_blocks_with(Execution::Sequential, &x, &y, &Kernel::Linear).unwrap();
        assert_eq!(blocks.mmd2_biased(), 0.0);
        assert_eq!(blocks.mmd2_unbiased_paired().unwrap(), -1.0);
    }

    #[test]
    fn paired_rejects_small_or_unequal() {
        let spec = KernelSpec::default();
        assert!(mmd2_unbiased_paired(&col(&[1.0]), &col(&[1.0]), &spec).is_err());
        assert!(mmd2_unbiased_paired(&col(&[1.0, 2.0]), &col(&[1.0, 2.0, 3.0]), &spec).is_err());
    }

    #[test]
    fn identical_pairs_cancel() {
        let x = vec![vec![0.1, 0.7], vec![-1.0, 2.0], vec![3.0, 0.0]];
        let v = mmd2_unbiased_paired(&x, &x, &KernelSpec::default()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn moment_matching_example() {
        let v = moment_match_check(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]).unwrap();
        assert!((v - 25.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_edge_cases() {
        let spec = KernelSpec::default();
        let a = col(&[0.0, 1.0]);
        assert_eq!(pairwise_domain_mmd(&[a.clone()], &spec).unwrap(), 0.0);
        assert!(pairwise_domain_mmd(&[a.clone(), a.clone()], &spec).unwrap().abs() < 1e-12);
        assert!(pairwise_domain_mmd(&[], &spec).is_err());
        assert!(pairwise_domain_mmd(&[a, vec![]], &spec).is_err());
    }

    #[test]
    fn empty_input_rejected() {
        assert!(gram_blocks(&[], &col(&[1.0]), &KernelSpec::default()).is_err());
    }
}
