//! Differentiable building blocks on candle tensors.

use candle_core::{CpuStorage, CustomOp1, DType, Layout, Shape, Tensor, D};

use crate::distributions::{DirichletDraw, DirichletParams};
use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma, trigamma};

use super::noise::Noise;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn map_unary(
    storage: &CpuStorage,
    layout: &Layout,
    f: fn(f64) -> f64,
) -> candle_core::Result<(CpuStorage, Shape)> {
    let (start, end) = layout
        .contiguous_offsets()
        .ok_or_else(|| candle_core::Error::Msg("special function op needs contiguous input".into()))?;
    let out = match storage {
        CpuStorage::F32(v) => CpuStorage::F32(v[start..end].iter().map(|&x| f(x as f64) as f32).collect()),
        CpuStorage::F64(v) => CpuStorage::F64(v[start..end].iter().map(|&x| f(x)).collect()),
        _ => return Err(candle_core::Error::Msg("special functions support f32/f64 only".into())),
    };
    Ok((out, layout.shape().clone()))
}

struct LnGammaOp;
struct DigammaOp;
struct TrigammaOp;

impl CustomOp1 for LnGammaOp {
    fn name(&self) -> &'static str {
        "ln-gamma"
    }
    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        map_unary(s, l, ln_gamma)
    }
    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.mul(&arg.apply_op1(DigammaOp)?)?))
    }
}

impl CustomOp1 for DigammaOp {
    fn name(&self) -> &'static str {
        "digamma"
    }
    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        map_unary(s, l, digamma)
    }
    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.mul(&arg.apply_op1(TrigammaOp)?)?))
    }
}

impl CustomOp1 for TrigammaOp {
    fn name(&self) -> &'static str {
        "trigamma"
    }
    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        map_unary(s, l, trigamma)
    }
}

pub fn ln_gamma_t(x: &Tensor) -> Result<Tensor> {
    Ok(x.contiguous()?.apply_op1(LnGammaOp)?)
}

pub fn digamma_t(x: &Tensor) -> Result<Tensor> {
    Ok(x.contiguous()?.apply_op1(DigammaOp)?)
}

/// `ln(1 + e^x)` computed stably.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((x.relu()? + tail)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

pub fn log_softmax(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::log_softmax(x, D::Minus1)?)
}

/// Per-instance Bernoulli log-likelihood of `target` in [0,1] under `logits`,
/// summed over all non-batch dimensions.
pub fn bernoulli_loglik(logits: &Tensor, target: &Tensor) -> Result<Tensor> {
    let ll = ((target * logits)? - softplus(logits)?)?;
    Ok(ll.flatten_from(1)?.sum(1)?)
}

/// Diagonal Gaussian on tensors with shape `(batch, dim)`.
#[derive(Debug, Clone)]
pub struct GaussianT {
    pub mean: Tensor,
    pub log_variance: Tensor,
}

impl GaussianT {
    pub fn new(mean: Tensor, log_variance: Tensor) -> Self {
        Self { mean, log_variance }
    }

    pub fn standard_like(other: &Tensor) -> Result<Self> {
        Ok(Self::new(other.zeros_like()?, other.zeros_like()?))
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mean.dims2().unwrap_or((0, 0))
    }

    /// `mean + exp(log_variance / 2) * eps` with `eps` drawn from `noise`.
    pub fn rsample(&self, noise: &mut Noise) -> Result<Tensor> {
        let eps = noise.normal_like(&self.mean)?;
        self.reparam(&eps)
    }

    pub fn reparam(&self, eps: &Tensor) -> Result<Tensor> {
        let std = (&self.log_variance * 0.5)?.exp()?;
        Ok((&self.mean + (std * eps)?)?)
    }

    /// Per-row log density, computed in f64.
    pub fn log_density(&self, z: &Tensor) -> Result<Tensor> {
        let m = self.mean.to_dtype(DType::F64)?;
        let lv = self.log_variance.to_dtype(DType::F64)?;
        let z = z.to_dtype(DType::F64)?;
        let sq = (z - m)?.sqr()?;
        let per = ((lv.clone() + LN_2PI)? + (sq * lv.neg()?.exp()?)?)?;
        Ok((per.sum(1)? * -0.5)?)
    }

    pub fn to_dtype(&self, dtype: DType) -> Result<Self> {
        Ok(Self::new(self.mean.to_dtype(dtype)?, self.log_variance.to_dtype(dtype)?))
    }
}

/// Per-row closed-form `KL(q || p)` between diagonal Gaussians, in f64.
pub fn kl_gaussians_t(q: &GaussianT, p: &GaussianT) -> Result<Tensor> {
    let q = q.to_dtype(DType::F64)?;
    let p = p.to_dtype(DType::F64)?;
    let ratio = (&q.log_variance - &p.log_variance)?.exp()?;
    let diff = (&p.mean - &q.mean)?.sqr()?;
    let inv_p = p.log_variance.neg()?.exp()?;
    let inner = (((ratio + (diff * inv_p)?)? - 1.0)? + (&p.log_variance - &q.log_variance)?)?;
    Ok((inner.sum(1)? * 0.5)?)
}

/// Per-row closed-form `KL(Dir(q) || Dir(p))` with `q` of shape `(batch, K)` and
/// `prior` a fixed concentration vector, in f64.
pub fn kl_dirichlet_t(q: &Tensor, prior: &[f64]) -> Result<Tensor> {
    let q = q.to_dtype(DType::F64)?;
    let (b, k) = q.dims2()?;
    if k != prior.len() {
        return Err(Error::arg(format!("kl_dirichlet: K mismatch ({k} vs {})", prior.len())));
    }
    let p = Tensor::from_vec(prior.to_vec(), (1, k), q.device())?.broadcast_as((b, k))?;
    let q0 = q.sum_keepdim(1)?;
    let p0: f64 = prior.iter().sum();
    let lg_q0 = ln_gamma_t(&q0)?.squeeze(1)?;
    let lg_q = ln_gamma_t(&q)?.sum(1)?;
    let lg_p: f64 = prior.iter().map(|&a| ln_gamma(a)).sum();
    let psi_diff = digamma_t(&q)?.broadcast_sub(&digamma_t(&q0)?)?;
    let cross = ((&q - &p)? * psi_diff)?.sum(1)?;
    let kl = (((lg_q0 - lg_q)? + cross)? + (lg_p - ln_gamma(p0)))?;
    Ok(kl)
}

/// Reparameterized Dirichlet draws for each row of `alpha`.
///
/// The sampled log-Gammas enter the graph as
/// `lg + dlg * (alpha - stop_grad(alpha))`, whose value is `lg` and whose
/// derivative is the implicit-reparameterization gradient.
pub fn dirichlet_rsample_t(alpha: &Tensor, noise: &mut Noise) -> Result<Tensor> {
    let (b, k) = alpha.dims2()?;
    let values: Vec<Vec<f64>> = alpha.to_dtype(DType::F64)?.to_vec2()?;
    let mut lg = Vec::with_capacity(b * k);
    let mut dlg = Vec::with_capacity(b * k);
    for row in values {
        let params = DirichletParams::new(row)?;
        let draw: DirichletDraw = noise.dirichlet(&params)?;
        lg.extend(draw.log_gamma);
        dlg.extend(draw.log_gamma_grad);
    }
    let dt = alpha.dtype();
    let dev = alpha.device();
    let lg = Tensor::from_vec(lg, (b, k), dev)?.to_dtype(dt)?;
    let dlg = Tensor::from_vec(dlg, (b, k), dev)?.to_dtype(dt)?;
    let shift = (alpha - alpha.detach())?;
    let logits = (lg + (dlg * shift)?)?;
    Ok(candle_nn::ops::softmax(&logits, 1)?)
}

/// Sum of biased MMD² over all domain pairs of per-batch standardized embeddings.
pub fn pairwise_mmd_standardized(zd: &[Tensor], bandwidths: &[f64]) -> Result<Tensor> {
    let pooled = Tensor::cat(zd, 0)?;
    let mean = pooled.mean_keepdim(0)?;
    let centered = pooled.broadcast_sub(&mean)?;
    let std = (centered.sqr()?.mean_keepdim(0)? + 1e-6)?.sqrt()?;
    let standardized: Vec<Tensor> = zd
        .iter()
        .map(|z| Ok(z.broadcast_sub(&mean)?.broadcast_div(&std)?))
        .collect::<Result<_>>()?;
    let mut total: Option<Tensor> = None;
    for i in 0..standardized.len() {
        for j in i + 1..standardized.len() {
            let v = mmd2_biased_t(&standardized[i], &standardized[j], bandwidths)?;
            total = Some(match total {
                None => v,
                Some(t) => (t + v)?,
            });
        }
    }
    match total {
        Some(t) => Ok(t),
        None => Ok(Tensor::zeros((), zd[0].dtype(), zd[0].device())?),
    }
}

fn sq_dists(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let aa = a.sqr()?.sum_keepdim(1)?;
    let bb = b.sqr()?.sum_keepdim(1)?.t()?;
    let ab = a.matmul(&b.t()?)?;
    let d = (aa.broadcast_add(&bb)? - (ab * 2.0)?)?;
    Ok(d.relu()?)
}

fn kernel_mean(a: &Tensor, b: &Tensor, bandwidths: &[f64]) -> Result<Tensor> {
    let d = sq_dists(a, b)?;
    let mut acc: Option<Tensor> = None;
    for &bw in bandwidths {
        let k = (&d * -bw)?.exp()?;
        acc = Some(match acc {
            None => k,
            Some(t) => (t + k)?,
        });
    }
    let k = acc.ok_or_else(|| Error::arg("kernel needs at least one bandwidth"))?;
    Ok(k.mean_all()?)
}

/// Biased MMD² between two `(n, d)` tensors under the composite kernel.
pub fn mmd2_biased_t(a: &Tensor, b: &Tensor, bandwidths: &[f64]) -> Result<Tensor> {
    let kaa = kernel_mean(a, a, bandwidths)?;
    let kbb = kernel_mean(b, b, bandwidths)?;
    let kab = kernel_mean(a, b, bandwidths)?;
    Ok(((kaa + kbb)? - (kab * 2.0)?)?)
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{kl_diag_gaussians, kl_dirichlet, LatentGaussian};
    use crate::mmd::{mmd2_biased, KernelSpec};
    use candle_core::{Device, Var};

    #[test]
    fn tensor_kls_match_scalar_versions() {
        let dev = Device::Cpu;
        let q = GaussianT::new(
            Tensor::new(&[[0.5f64, -1.0]], &dev).unwrap(),
            Tensor::new(&[[0.2f64, -0.7]], &dev).unwrap(),
        );
        let p = GaussianT::new(
            Tensor::new(&[[0.0f64, 0.3]], &dev).unwrap(),
            Tensor::new(&[[1.0f64, 0.0]], &dev).unwrap(),
        );
        let t = kl_gaussians_t(&q, &p).unwrap().to_vec1::<f64>().unwrap()[0];
        let s = kl_diag_gaussians(
            &LatentGaussian::new(vec![0.5, -1.0], vec![0.2, -0.7]).unwrap(),
            &LatentGaussian::new(vec![0.0, 0.3], vec![1.0, 0.0]).unwrap(),
        )
        .unwrap();
        assert!((t - s).abs() < 1e-12);

        let a = Tensor::new(&[[2.0f64, 1.0, 0.4]], &dev).unwrap();
        let t = kl_dirichlet_t(&a, &[1.0, 1.0, 1.0]).unwrap().to_vec1::<f64>().unwrap()[0];
        let s = kl_dirichlet(
            &DirichletParams::new(vec![2.0, 1.0, 0.4]).unwrap(),
            &DirichletParams::flat(3).unwrap(),
        )
        .unwrap();
        assert!((t - s).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_kl_gradient_matches_finite_difference() {
        let dev = Device::Cpu;
        let a = Var::new(&[[2.0f64, 0.7, 1.3]], &dev).unwrap();
        let kl = kl_dirichlet_t(a.as_tensor(), &[1.0, 1.0, 1.0]).unwrap().sum_all().unwrap();
        let grads = kl.backward().unwrap();
        let g = grads.get(a.as_tensor()).unwrap().to_vec2::<f64>().unwrap()[0].clone();
        let base = [2.0, 0.7, 1.3];
        for i in 0..3 {
            let h = 1e-6;
            let mut up = base;
            let mut dn = base;
            up[i] += h;
            dn[i] -= h;
            let f = |v: [f64; 3]| {
                kl_dirichlet(&DirichletParams::new(v.to_vec()).unwrap(), &DirichletParams::flat(3).unwrap())
                    .unwrap()
            };
            let fd = (f(up) - f(dn)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "coord {i}: fd={fd} g={}", g[i]);
        }
    }

    #[test]
    fn tensor_mmd_matches_scalar_version() {
        let dev = Device::Cpu;
        let x = vec![vec![0.0, 1.0], vec![0.5, -0.2], vec![1.0, 1.0]];
        let y = vec![vec![2.0, 0.0], vec![1.5, 0.3]];
        let spec = KernelSpec::default();
        let xt = Tensor::new(&[[0.0f64, 1.0], [0.5, -0.2], [1.0, 1.0]], &dev).unwrap();
        let yt = Tensor::new(&[[2.0f64, 0.0], [1.5, 0.3]], &dev).unwrap();
        let t = scalar(&mmd2_biased_t(&xt, &yt, spec.bandwidths()).unwrap()).unwrap();
        let s = mmd2_biased(&x, &y, &spec).unwrap();
        assert!((t - s).abs() < 1e-12);
    }

    #[test]
    fn softplus_is_stable() {
        let dev = Device::Cpu;
        let x = Tensor::new(&[-800.0f64, 0.0, 800.0], &dev).unwrap();
        let v = softplus(&x).unwrap().to_vec1::<f64>().unwrap();
        assert!(v[0] >= 0.0 && v[0] < 1e-300);
        assert!((v[1] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(v[2], 800.0);
    }
}
