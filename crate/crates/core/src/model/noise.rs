use candle_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::distributions::{dirichlet_from_uniforms, dirichlet_rsample, DirichletDraw, DirichletParams};
use crate::error::Result;

/// How Gamma variates behind Dirichlet draws are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMode {
    /// Rejection sampling; fast, used for training.
    Sampler,
    /// Inverse CDF of a uniform level; smooth in the concentration for a fixed
    /// seed, so finite differences see the same noise.
    Quantile,
}

/// Seeded source of every random quantity in a forward pass.
#[derive(Debug, Clone)]
pub struct Noise {
    rng: ChaCha8Rng,
    gamma_mode: GammaMode,
}

impl Noise {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            gamma_mode: GammaMode::Sampler,
        }
    }

    pub fn with_quantile_gamma(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            gamma_mode: GammaMode::Quantile,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    /// Standard-normal tensor with the shape, dtype and device of `like`.
    pub fn normal_like(&mut self, like: &Tensor) -> Result<Tensor> {
        let v = self.normals(like.elem_count());
        Ok(Tensor::from_vec(v, like.shape(), like.device())?.to_dtype(like.dtype())?)
    }

    pub fn dirichlet(&mut self, params: &DirichletParams) -> Result<DirichletDraw> {
        match self.gamma_mode {
            GammaMode::Sampler => dirichlet_rsample(params, &mut self.rng),
            GammaMode::Quantile => {
                let u: Vec<f64> = (0..params.dim())
                    .map(|_| self.rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12))
                    .collect();
                dirichlet_from_uniforms(params, &u)
            }
        }
    }
}
