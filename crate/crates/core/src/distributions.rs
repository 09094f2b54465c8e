//! Diagonal Gaussians and Dirichlet distributions: reparameterized sampling and
//! closed-form KL divergences on plain `f64` vectors.
//!
//! The tensor-graph counterparts used during training live in
//! [`crate::model::ops`]; both share the special functions in [`crate::special`].

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_len, Error, Result};
use crate::special::{digamma, gamma_log_quantile, gamma_log_sample_grad, ln_gamma};

/// Lower bound applied to every concentration before sampling.
pub const CONCENTRATION_FLOOR: f64 = 1e-4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal Gaussian given by its mean and log-variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGaussian {
    mean: Vec<f64>,
    log_variance: Vec<f64>,
}

impl LatentGaussian {
    pub fn new(mean: Vec<f64>, log_variance: Vec<f64>) -> Result<Self> {
        ensure_same_len("LatentGaussian", mean.len(), log_variance.len())?;
        if mean.is_empty() {
            return Err(Error::arg("LatentGaussian needs dimension >= 1"));
        }
        if mean.iter().chain(&log_variance).any(|v| !v.is_finite()) {
            return Err(Error::arg("LatentGaussian parameters must be finite"));
        }
        Ok(Self { mean, log_variance })
    }

    /// N(0, I) of the given dimension.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_variance(&self) -> &[f64] {
        &self.log_variance
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_variance.iter().map(|lv| lv.exp()).collect()
    }

    /// Log density at `x`, evaluated from the log-variance directly.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        ensure_same_len("log_density", self.dim(), x.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.log_variance)
            .zip(x)
            .map(|((m, lv), xi)| {
                let d2 = (xi - m).powi(2);
                let quad = if d2 == 0.0 { 0.0 } else { d2 * (-lv).exp() };
                -0.5 * (LN_2PI + lv + quad)
            })
            .sum())
    }

    /// Draw one reparameterized sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let noise: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        gaussian_reparam(self, &noise).expect("noise dimension matches")
    }
}

/// Concentration vector of a Dirichlet distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    concentration: Vec<f64>,
}

impl DirichletParams {
    pub fn new(concentration: Vec<f64>) -> Result<Self> {
        if concentration.is_empty() {
            return Err(Error::arg("Dirichlet needs K >= 1"));
        }
        if concentration.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::arg(format!(
                "Dirichlet concentrations must be positive and finite, got {concentration:?}"
            )));
        }
        Ok(Self { concentration })
    }

    /// Flat Dirichlet `Dir(1, ..., 1)`.
    pub fn flat(k: usize) -> Result<Self> {
        Self::new(vec![1.0; k])
    }

    pub fn dim(&self) -> usize {
        self.concentration.len()
    }

    pub fn concentration(&self) -> &[f64] {
        &self.concentration
    }

    pub fn total(&self) -> f64 {
        self.concentration.iter().sum()
    }

    /// Analytic mean `alpha / sum(alpha)`.
    pub fn mean(&self) -> Vec<f64> {
        let t = self.total();
        self.concentration.iter().map(|a| a / t).collect()
    }

    /// Copy with every entry raised to at least [`CONCENTRATION_FLOOR`].
    pub fn floored(&self) -> Self {
        Self {
            concentration: self
                .concentration
                .iter()
                .map(|a| a.max(CONCENTRATION_FLOOR))
                .collect(),
        }
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint {
    weights: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::arg("simplex point needs K >= 1"));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::arg(format!("not a simplex point: {weights:?}")));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

/// `mean + exp(log_variance / 2) * noise`.
pub fn gaussian_reparam(params: &LatentGaussian, noise: &[f64]) -> Result<Vec<f64>> {
    ensure_same_len("gaussian_reparam", params.dim(), noise.len())?;
    Ok(params
        .mean
        .iter()
        .zip(&params.log_variance)
        .zip(noise)
        .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
        .collect())
}

/// Closed-form `KL(q || p)` between diagonal Gaussians.
pub fn kl_diag_gaussians(q: &LatentGaussian, p: &LatentGaussian) -> Result<f64> {
    ensure_same_len("kl_diag_gaussians", q.dim(), p.dim())?;
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let (mq, lq) = (q.mean[i], q.log_variance[i]);
        let (mp, lp) = (p.mean[i], p.log_variance[i]);
        kl += 0.5 * ((lq - lp).exp() + (mp - mq).powi(2) * (-lp).exp() - 1.0 + lp - lq);
    }
    Ok(kl.max(0.0))
}

/// Per-sample `log q(z) - log p(z)` for the two-level `z_d` term.
///
/// Individual values can be negative; the expectation under `q` is the KL.
pub fn hierarchical_log_ratio(
    q_zd: &LatentGaussian,
    p_zd_given_s: &LatentGaussian,
    zd_sample: &[f64],
) -> Result<f64> {
    ensure_same_len("hierarchical_log_ratio", q_zd.dim(), p_zd_given_s.dim())?;
    if q_zd == p_zd_given_s {
        ensure_same_len("hierarchical_log_ratio", q_zd.dim(), zd_sample.len())?;
        return Ok(0.0);
    }
    Ok(q_zd.log_density(zd_sample)? - p_zd_given_s.log_density(zd_sample)?)
}

/// Closed-form `KL(Dir(q) || Dir(p))`.
pub fn kl_dirichlet(q: &DirichletParams, p: &DirichletParams) -> Result<f64> {
    ensure_same_len("kl_dirichlet", q.dim(), p.dim())?;
    if q == p {
        return Ok(0.0);
    }
    let (q0, p0) = (q.total(), p.total());
    let psi_q0 = digamma(q0);
    let mut kl = ln_gamma(q0) - ln_gamma(p0);
    for (&qa, &pa) in q.concentration.iter().zip(&p.concentration) {
        kl += ln_gamma(pa) - ln_gamma(qa) + (qa - pa) * (digamma(qa) - psi_q0);
    }
    Ok(kl.max(0.0))
}

/// Log density of `Dir(params)` at `point`.
pub fn dirichlet_log_density(params: &DirichletParams, point: &SimplexPoint) -> Result<f64> {
    ensure_same_len("dirichlet_log_density", params.dim(), point.dim())?;
    let mut lp = ln_gamma(params.total());
    for (&a, &s) in params.concentration.iter().zip(&point.weights) {
        lp += (a - 1.0) * s.ln() - ln_gamma(a);
    }
    Ok(lp)
}

/// A Dirichlet draw together with its pathwise derivative information.
///
/// The draw is `softmax(log_gamma)` where `log_gamma[k] = ln g_k`,
/// `g_k ~ Gamma(alpha_k, 1)`, and `log_gamma_grad[k] = d ln g_k / d alpha_k`
/// under implicit reparameterization.
#[derive(Debug, Clone)]
pub struct DirichletDraw {
    pub point: SimplexPoint,
    pub log_gamma: Vec<f64>,
    pub log_gamma_grad: Vec<f64>,
}

impl DirichletDraw {
    /// `J[k][j] = d s_k / d alpha_j`.
    pub fn jacobian(&self) -> Vec<Vec<f64>> {
        let s = &self.point.weights;
        let k = s.len();
        (0..k)
            .map(|a| {
                (0..k)
                    .map(|j| {
                        let delta = if a == j { 1.0 } else { 0.0 };
                        s[a] * (delta - s[j]) * self.log_gamma_grad[j]
                    })
                    .collect()
            })
            .collect()
    }
}

/// Draw `ln g ~ ln Gamma(shape, 1)`; shapes below one use `G(a+1) U^(1/a)` in log space.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let boosted = Gamma::new(shape + 1.0, 1.0).expect("valid shape").sample(rng);
        let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        boosted.ln() + u.ln() / shape
    } else {
        let g: f64 = Gamma::new(shape, 1.0).expect("valid shape").sample(rng);
        g.max(f64::MIN_POSITIVE).ln()
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn draw_from_log_gamma(params: &DirichletParams, log_gamma: Vec<f64>) -> Result<DirichletDraw> {
    let log_gamma_grad = params
        .concentration
        .iter()
        .zip(&log_gamma)
        .map(|(&a, &lg)| gamma_log_sample_grad(a, lg))
        .collect();
    let weights = if params.dim() == 1 {
        vec![1.0]
    } else {
        softmax(&log_gamma)
    };
    Ok(DirichletDraw {
        point: SimplexPoint { weights },
        log_gamma,
        log_gamma_grad,
    })
}

/// Reparameterized Dirichlet draw with implicit gradients.
pub fn dirichlet_rsample<R: Rng + ?Sized>(
    params: &DirichletParams,
    rng: &mut R,
) -> Result<DirichletDraw> {
    let params = params.floored();
    let log_gamma = params
        .concentration
        .iter()
        .map(|&a| sample_log_gamma(a, rng))
        .collect();
    draw_from_log_gamma(&params, log_gamma)
}

/// Deterministic Dirichlet draw from per-coordinate Gamma CDF levels `uniforms`.
///
/// Used where the same noise must be replayed at perturbed concentrations.
pub fn dirichlet_from_uniforms(params: &DirichletParams, uniforms: &[f64]) -> Result<DirichletDraw> {
    ensure_same_len("dirichlet_from_uniforms", params.dim(), uniforms.len())?;
    let params = params.floored();
    let log_gamma = params
        .concentration
        .iter()
        .zip(uniforms)
        .map(|(&a, &u)| gamma_log_quantile(a, u))
        .collect();
    draw_from_log_gamma(&params, log_gamma)
}

/// Sample a simplex point from `Dir(params)`.
pub fn dirichlet_sample<R: Rng + ?Sized>(params: &DirichletParams, rng: &mut R) -> Result<SimplexPoint> {
    Ok(dirichlet_rsample(params, rng)?.point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(m: &[f64], lv: &[f64]) -> LatentGaussian {
        LatentGaussian::new(m.to_vec(), lv.to_vec()).unwrap()
    }

    #[test]
    fn reparam_examples() {
        let p = g(&[2.0, -1.0], &[0.0, 0.0]);
        assert_eq!(gaussian_reparam(&p, &[0.0, 0.0]).unwrap(), vec![2.0, -1.0]);
        assert_eq!(gaussian_reparam(&g(&[0.0], &[0.0]), &[1.0]).unwrap(), vec![1.0]);
        assert!(gaussian_reparam(&p, &[1.0]).is_err());
    }

    #[test]
    fn reparam_affine_in_noise() {
        let p = g(&[0.3, -2.0, 1.1], &[0.4, -1.0, 2.0]);
        let n1 = [0.2, -1.5, 0.7];
        let n2 = [1.0, 0.1, -0.3];
        let (a, b) = (1.7, -0.6);
        let mix: Vec<f64> = n1.iter().zip(&n2).map(|(x, y)| a * x + b * y).collect();
        let lhs = gaussian_reparam(&p, &mix).unwrap();
        let r1 = gaussian_reparam(&p, &n1).unwrap();
        let r2 = gaussian_reparam(&p, &n2).unwrap();
        for i in 0..3 {
            let rhs = a * r1[i] + b * r2[i] - (a + b - 1.0) * p.mean()[i];
            assert!((lhs[i] - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_kl_examples() {
        let std = g(&[0.0], &[0.0]);
        assert_eq!(kl_diag_gaussians(&std, &std).unwrap(), 0.0);
        assert!((kl_diag_gaussians(&g(&[1.0], &[0.0]), &std).unwrap() - 0.5).abs() < 1e-12);
        let e = std::f64::consts::E;
        let kl = kl_diag_gaussians(&g(&[0.0], &[1.0]), &std).unwrap();
        assert!((kl - (e - 2.0) / 2.0).abs() < 1e-12);
        assert!(kl_diag_gaussians(&std, &g(&[0.0, 0.0], &[0.0, 0.0])).is_err());
    }

    #[test]
    fn dirichlet_kl_examples() {
        let flat = DirichletParams::flat(3).unwrap();
        assert_eq!(kl_dirichlet(&flat, &flat).unwrap(), 0.0);
        let q = DirichletParams::new(vec![2.0, 1.0]).unwrap();
        let p = DirichletParams::flat(2).unwrap();
        let expect = 2f64.ln() - 0.5;
        assert!((kl_dirichlet(&q, &p).unwrap() - expect).abs() < 1e-10);
        assert!(kl_dirichlet(&q, &flat).is_err());
        assert!(DirichletParams::new(vec![1.0, 0.0]).is_err());
        assert!(DirichletParams::new(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn log_ratio_examples() {
        let q = g(&[1.0], &[0.0]);
        let p = g(&[0.0], &[0.0]);
        assert!((hierarchical_log_ratio(&q, &p, &[0.0]).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(hierarchical_log_ratio(&q, &q, &[3.7]).unwrap(), 0.0);
        assert!(hierarchical_log_ratio(&q, &p, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn degenerate_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for a in [0.3, 1.0, 17.0] {
            let s = dirichlet_sample(&DirichletParams::new(vec![a]).unwrap(), &mut rng).unwrap();
            assert_eq!(s.weights(), &[1.0]);
        }
    }

    #[test]
    fn tiny_concentrations_stay_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = DirichletParams::new(vec![1e-4, 1e-4, 2e-4]).unwrap();
        for _ in 0..200 {
            let d = dirichlet_rsample(&params, &mut rng).unwrap();
            let sum: f64 = d.point.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(d.log_gamma_grad.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn simplex_validation() {
        assert!(SimplexPoint::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexPoint::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn log_density_uses_log_variance() {
        // extreme posterior: exp(-800) underflows but the log density stays finite
        let q = g(&[0.0], &[-800.0]);
        assert!(q.log_density(&[0.0]).unwrap().is_finite());
    }
}
