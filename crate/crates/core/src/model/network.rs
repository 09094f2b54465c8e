use candle_core::{DType, Module, Tensor};
use serde::{Deserialize, Serialize};

use crate::distributions::{DirichletParams, LatentGaussian, SimplexPoint, CONCENTRATION_FLOOR};
use crate::error::{ensure_same_len, Error, Result};

use super::layers::{conv2d, linear, ConvTrunk, GatedConv2d, GatedDense, ParamStore};
use super::noise::Noise;
use super::ops::{self, GaussianT};
use super::{ModelConfig, Variant};

/// Conv trunk followed by mean / log-variance heads; `extra` inputs are
/// concatenated to the trunk features.
#[derive(Debug)]
struct GaussianEncoder {
    trunk: ConvTrunk,
    mean: candle_nn::Linear,
    log_variance: candle_nn::Linear,
}

impl GaussianEncoder {
    fn new(store: &ParamStore, name: &str, cfg: &ModelConfig, out: usize, extra: usize) -> Result<Self> {
        let trunk = ConvTrunk::new(store, &format!("{name}.trunk"), cfg.image_shape, cfg.encoder_channels)?;
        let f = trunk.out_dim() + extra;
        Ok(Self {
            mean: linear(store, &format!("{name}.mean"), f, out)?,
            log_variance: linear(store, &format!("{name}.log_variance"), f, out)?,
            trunk,
        })
    }

    fn forward(&self, x: &Tensor, extra: Option<&Tensor>, train: bool) -> Result<GaussianT> {
        let mut h = self.trunk.forward(x, train)?;
        if let Some(e) = extra {
            h = Tensor::cat(&[&h, e], 1)?;
        }
        Ok(GaussianT::new(self.mean.forward(&h)?, self.log_variance.forward(&h)?))
    }
}

#[derive(Debug)]
enum TopicEncoder {
    /// concentration from the image
    FromImage { trunk: ConvTrunk, head: candle_nn::Linear },
    /// concentration from a `z_d` sample
    FromLatent { hidden: candle_nn::Linear, head: candle_nn::Linear },
}

impl TopicEncoder {
    fn concentration(&self, input: &Tensor, train: bool) -> Result<Tensor> {
        let raw = match self {
            TopicEncoder::FromImage { trunk, head } => head.forward(&trunk.forward(input, train)?)?,
            TopicEncoder::FromLatent { hidden, head } => head.forward(&hidden.forward(input)?.relu()?)?,
        };
        Ok((ops::softplus(&raw)? + CONCENTRATION_FLOOR)?)
    }
}

/// Small MLP mapping a conditioning vector to Gaussian parameters.
#[derive(Debug)]
struct ConditionalPrior {
    hidden: candle_nn::Linear,
    mean: candle_nn::Linear,
    log_variance: candle_nn::Linear,
}

impl ConditionalPrior {
    fn new(store: &ParamStore, name: &str, input: usize, hidden: usize, out: usize) -> Result<Self> {
        Ok(Self {
            hidden: linear(store, &format!("{name}.hidden"), input, hidden)?,
            mean: linear(store, &format!("{name}.mean"), hidden, out)?,
            log_variance: linear(store, &format!("{name}.log_variance"), hidden, out)?,
        })
    }

    fn forward(&self, c: &Tensor) -> Result<GaussianT> {
        let h = self.hidden.forward(c)?.relu()?;
        Ok(GaussianT::new(self.mean.forward(&h)?, self.log_variance.forward(&h)?))
    }
}

#[derive(Debug)]
struct Decoder {
    dense: GatedDense,
    conv1: GatedConv2d,
    conv2: GatedConv2d,
    project: candle_nn::Conv2d,
    shape: (usize, usize, usize),
}

impl Decoder {
    fn new(store: &ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let (c, h, w) = cfg.image_shape;
        let ch = cfg.decoder_channels;
        Ok(Self {
            dense: GatedDense::new(store, "decoder.dense", cfg.decoder_input_dim(), c * h * w)?,
            conv1: GatedConv2d::new(store, "decoder.conv1", c, ch)?,
            conv2: GatedConv2d::new(store, "decoder.conv2", ch, ch)?,
            project: conv2d(store, "decoder.project", ch, c, 1, 0)?,
            shape: cfg.image_shape,
        })
    }

    fn forward(&self, code: &Tensor) -> Result<Tensor> {
        let b = code.dim(0)?;
        let (c, h, w) = self.shape;
        let x = self.dense.forward(code)?.reshape((b, c, h, w))?;
        let x = self.conv1.forward(&x)?;
        let x = self.conv2.forward(&x)?;
        Ok(self.project.forward(&x)?)
    }
}

/// Per-instance Gaussian / Dirichlet posteriors in plain numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutputs {
    pub q_zx: Option<Vec<LatentGaussian>>,
    pub q_zy: Vec<LatentGaussian>,
    pub q_s: Vec<DirichletParams>,
    pub q_zd: Vec<LatentGaussian>,
}

/// One topic sample and everything downstream of it.
#[derive(Debug, Clone)]
pub struct TopicPass {
    /// `(batch, K)` simplex rows.
    pub s: Tensor,
    /// Posterior of `z_d` used for sampling (ladder-corrected for LHDUVA).
    pub q_zd: GaussianT,
    pub p_zd: GaussianT,
    pub zd: Tensor,
}

/// Result of the inference networks on one batch.
#[derive(Debug, Clone)]
pub struct Inference {
    pub q_zx: Option<GaussianT>,
    pub q_zy: GaussianT,
    pub zx: Option<Tensor>,
    pub zy: Tensor,
    /// Per-instance concentrations `(batch, K)`.
    pub concentration: Tensor,
    /// Concentration the topic was drawn from: `(1, K)` when aggregated.
    pub sampling_concentration: Tensor,
    pub passes: Vec<TopicPass>,
}

/// Per-instance ELBO terms as tensors of shape `(batch,)`.
#[derive(Debug, Clone)]
pub struct ElboTerms {
    pub recon: Tensor,
    pub kl_zx: Option<Tensor>,
    pub kl_zy: Tensor,
    pub zd_log_ratio: Tensor,
    pub kl_s: Tensor,
    pub aux: Tensor,
}

/// Batch-mean decomposition of the extended objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElboBreakdown {
    pub recon_loglik: f64,
    pub kl_zx: Option<f64>,
    pub kl_zy: f64,
    pub zd_log_ratio: f64,
    pub kl_s: f64,
    pub aux_class_loglik: f64,
    /// `(beta_x, beta_y, beta_d, beta_s)`
    pub effective_betas: [f64; 4],
}

impl ElboBreakdown {
    pub fn elbo(&self) -> f64 {
        let [bx, by, bd, bs] = self.effective_betas;
        self.recon_loglik - bx * self.kl_zx.unwrap_or(0.0) - by * self.kl_zy - bd * self.zd_log_ratio
            - bs * self.kl_s
    }

    /// `ELBO + gamma_y * aux_class_loglik`.
    pub fn extended_objective(&self, gamma_y: f64) -> f64 {
        self.elbo() + gamma_y * self.aux_class_loglik
    }
}

impl ElboTerms {
    /// Per-instance extended objective `(batch,)` in f64.
    pub fn objective(&self, betas: [f64; 4], gamma_y: f64) -> Result<Tensor> {
        let [bx, by, bd, bs] = betas;
        let f64t = |t: &Tensor| t.to_dtype(DType::F64);
        let mut f = f64t(&self.recon)?;
        if let Some(kx) = &self.kl_zx {
            f = (f - (f64t(kx)? * bx)?)?;
        }
        f = (f - (f64t(&self.kl_zy)? * by)?)?;
        f = (f - (f64t(&self.zd_log_ratio)? * bd)?)?;
        f = (f - (f64t(&self.kl_s)? * bs)?)?;
        f = (f + (f64t(&self.aux)? * gamma_y)?)?;
        Ok(f)
    }

    pub fn breakdown(&self, betas: [f64; 4]) -> Result<ElboBreakdown> {
        let m = |t: &Tensor| -> Result<f64> { ops::scalar(&t.to_dtype(DType::F64)?.mean_all()?) };
        Ok(ElboBreakdown {
            recon_loglik: m(&self.recon)?,
            kl_zx: self.kl_zx.as_ref().map(m).transpose()?,
            kl_zy: m(&self.kl_zy)?,
            zd_log_ratio: m(&self.zd_log_ratio)?,
            kl_s: m(&self.kl_s)?,
            aux_class_loglik: m(&self.aux)?,
            effective_betas: betas,
        })
    }

    /// Names and values used to locate the source of a non-finite objective.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        let mut v = vec![("recon_loglik", &self.recon)];
        if let Some(k) = &self.kl_zx {
            v.push(("kl_zx", k));
        }
        v.extend([
            ("kl_zy", &self.kl_zy),
            ("zd_log_ratio", &self.zd_log_ratio),
            ("kl_s", &self.kl_s),
            ("aux_class_loglik", &self.aux),
        ]);
        v
    }
}

/// Precision-weighted merge of a bottom-up posterior and a top-down prior.
pub fn ladder_correct(q: &LatentGaussian, p: &LatentGaussian) -> Result<LatentGaussian> {
    ensure_same_len("ladder_correct", q.dim(), p.dim())?;
    let mut mean = Vec::with_capacity(q.dim());
    let mut log_var = Vec::with_capacity(q.dim());
    for i in 0..q.dim() {
        let (mq, lq) = (q.mean()[i], q.log_variance()[i]);
        let (mp, lp) = (p.mean()[i], p.log_variance()[i]);
        // log precision = logaddexp(-lq, -lp)
        let (a, b) = (-lq, -lp);
        let hi = a.max(b);
        let log_prec = hi + ((a - hi).exp() + (b - hi).exp()).ln();
        let wq = (a - log_prec).exp();
        let wp = (b - log_prec).exp();
        mean.push(wq * mq + wp * mp);
        log_var.push(-log_prec);
    }
    LatentGaussian::new(mean, log_var)
}

/// Tensor form of [`ladder_correct`].
pub fn ladder_correct_t(q: &GaussianT, p: &GaussianT) -> Result<GaussianT> {
    let a = q.log_variance.neg()?;
    let b = p.log_variance.neg()?;
    let hi = a.maximum(&b)?.detach();
    let log_prec = (((&a - &hi)?.exp()? + (&b - &hi)?.exp()?)?.log()? + &hi)?;
    let wq = (&a - &log_prec)?.exp()?;
    let wp = (&b - &log_prec)?.exp()?;
    let mean = ((wq * &q.mean)? + (wp * &p.mean)?)?;
    Ok(GaussianT::new(mean, log_prec.neg()?))
}

/// The full model: inference networks, conditional priors, decoder and
/// auxiliary classifier, sharing one [`ParamStore`].
#[derive(Debug)]
pub struct HduvaModel {
    config: ModelConfig,
    store: ParamStore,
    enc_x: Option<GaussianEncoder>,
    enc_y: GaussianEncoder,
    enc_d: Option<GaussianEncoder>,
    enc_s: Option<TopicEncoder>,
    prior_y: Option<ConditionalPrior>,
    prior_d: Option<ConditionalPrior>,
    decoder: Option<Decoder>,
    classifier: candle_nn::Linear,
}

impl HduvaModel {
    /// Build a freshly initialized model; weights depend only on `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let dtype = if config.double_precision { DType::F64 } else { DType::F32 };
        let store = ParamStore::new(seed, dtype);
        let cfg = &config;
        let generative = cfg.variant != Variant::DeepAll;
        let enc_y = GaussianEncoder::new(&store, "enc_y", cfg, cfg.zy_dim, 0)?;
        let classifier = linear(&store, "classifier", cfg.zy_dim, cfg.num_classes)?;
        let (mut enc_x, mut enc_d, mut enc_s, mut prior_y, mut prior_d, mut decoder) =
            (None, None, None, None, None, None);
        if generative {
            if cfg.with_zx {
                enc_x = Some(GaussianEncoder::new(&store, "enc_x", cfg, cfg.zx_dim, 0)?);
            }
            match cfg.variant {
                Variant::Hduva => {
                    let trunk =
                        ConvTrunk::new(&store, "enc_s.trunk", cfg.image_shape, cfg.encoder_channels)?;
                    let head = linear(&store, "enc_s.head", trunk.out_dim(), cfg.topic_dim)?;
                    enc_s = Some(TopicEncoder::FromImage { trunk, head });
                    enc_d = Some(GaussianEncoder::new(&store, "enc_d", cfg, cfg.zd_dim, cfg.topic_dim)?);
                }
                Variant::Lhduva => {
                    enc_d = Some(GaussianEncoder::new(&store, "enc_d", cfg, cfg.zd_dim, 0)?);
                    enc_s = Some(TopicEncoder::FromLatent {
                        hidden: linear(&store, "enc_s.hidden", cfg.zd_dim, cfg.prior_hidden)?,
                        head: linear(&store, "enc_s.head", cfg.prior_hidden, cfg.topic_dim)?,
                    });
                }
                Variant::DeepAll => unreachable!(),
            }
            prior_y = Some(ConditionalPrior::new(&store, "prior_y", cfg.num_classes, cfg.prior_hidden, cfg.zy_dim)?);
            prior_d = Some(ConditionalPrior::new(&store, "prior_d", cfg.topic_dim, cfg.prior_hidden, cfg.zd_dim)?);
            decoder = Some(Decoder::new(&store, cfg)?);
        }
        Ok(Self {
            config,
            store,
            enc_x,
            enc_y,
            enc_d,
            enc_s,
            prior_y,
            prior_d,
            decoder,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    fn generative(&self) -> Result<()> {
        if self.config.variant == Variant::DeepAll {
            return Err(Error::State("operation needs a generative model variant".into()));
        }
        Ok(())
    }

    /// Convert `(batch, C, H, W)` f32 pixels in [0,1] to the model dtype, checking the shape.
    pub fn check_images(&self, x: &Tensor) -> Result<Tensor> {
        let (c, h, w) = self.config.image_shape;
        match x.dims() {
            [_, xc, xh, xw] if (*xc, *xh, *xw) == (c, h, w) => Ok(x.to_dtype(self.dtype())?),
            other => Err(Error::arg(format!(
                "image batch has shape {other:?}, model expects (batch, {c}, {h}, {w})"
            ))),
        }
    }

    pub fn one_hot(&self, labels: &[u32]) -> Result<Tensor> {
        let c = self.config.num_classes;
        let mut v = vec![0.0f64; labels.len() * c];
        for (i, &y) in labels.iter().enumerate() {
            if y as usize >= c {
                return Err(Error::arg(format!("label {y} outside [0, {c})")));
            }
            v[i * c + y as usize] = 1.0;
        }
        Ok(Tensor::from_vec(v, (labels.len(), c), self.store.device())?.to_dtype(self.dtype())?)
    }

    /// Conditional prior `p(z_y | y)` as tensors.
    pub fn prior_zy_t(&self, labels: &[u32]) -> Result<GaussianT> {
        self.generative()?;
        let onehot = self.one_hot(labels)?;
        self.prior_y.as_ref().expect("generative").forward(&onehot)
    }

    /// Conditional prior `p(z_d | s)` as tensors; `s` has shape `(batch, K)`.
    pub fn prior_zd_t(&self, s: &Tensor) -> Result<GaussianT> {
        self.generative()?;
        self.prior_d.as_ref().expect("generative").forward(&s.to_dtype(self.dtype())?)
    }

    pub fn prior_zy(&self, labels: &[u32]) -> Result<Vec<LatentGaussian>> {
        to_gaussians(&self.prior_zy_t(labels)?)
    }

    pub fn prior_zd(&self, points: &[SimplexPoint]) -> Result<Vec<LatentGaussian>> {
        let k = self.config.topic_dim;
        let mut flat = Vec::with_capacity(points.len() * k);
        for p in points {
            ensure_same_len("prior_zd topic dimension", k, p.dim())?;
            // re-validate: callers may have built the point by hand
            SimplexPoint::new(p.weights().to_vec())?;
            flat.extend_from_slice(p.weights());
        }
        let s = Tensor::from_vec(flat, (points.len(), k), self.store.device())?;
        to_gaussians(&self.prior_zd_t(&s)?)
    }

    /// Run the inference networks.
    ///
    /// With `aggregate_topics` the per-instance concentrations are averaged
    /// over the batch and a single topic draw is shared by every row.
    pub fn infer(&self, x: &Tensor, train: bool, aggregate_topics: bool, noise: &mut Noise) -> Result<Inference> {
        self.generative()?;
        let x = self.check_images(x)?;
        let b = x.dim(0)?;
        let q_zx = match &self.enc_x {
            Some(e) => Some(e.forward(&x, None, train)?),
            None => None,
        };
        let q_zy = self.enc_y.forward(&x, None, train)?;
        let zx = match &q_zx {
            Some(q) => Some(q.rsample(noise)?),
            None => None,
        };
        let zy = q_zy.rsample(noise)?;
        let enc_d = self.enc_d.as_ref().expect("generative");
        let enc_s = self.enc_s.as_ref().expect("generative");

        let sample_topic = |alpha_used: &Tensor, noise: &mut Noise| -> Result<Tensor> {
            let s = ops::dirichlet_rsample_t(alpha_used, noise)?;
            Ok(if s.dim(0)? == b { s } else { s.broadcast_as((b, s.dim(1)?))?.contiguous()? })
        };
        let pick = |alpha: &Tensor| -> Result<Tensor> {
            Ok(if aggregate_topics { alpha.mean_keepdim(0)? } else { alpha.clone() })
        };

        let mut passes = Vec::with_capacity(self.config.topic_samples);
        let (concentration, sampling_concentration) = match self.config.variant {
            Variant::Hduva => {
                let alpha = enc_s.concentration(&x, train)?;
                let used = pick(&alpha)?;
                for _ in 0..self.config.topic_samples {
                    let s = sample_topic(&used, noise)?;
                    let q_zd = enc_d.forward(&x, Some(&s), train)?;
                    let zd = q_zd.rsample(noise)?;
                    let p_zd = self.prior_zd_t(&s)?;
                    passes.push(TopicPass { s, q_zd, p_zd, zd });
                }
                (alpha, used)
            }
            Variant::Lhduva => {
                let q_bottom = enc_d.forward(&x, None, train)?;
                let zd0 = q_bottom.rsample(noise)?;
                let alpha = enc_s.concentration(&zd0, train)?;
                let used = pick(&alpha)?;
                for _ in 0..self.config.topic_samples {
                    let s = sample_topic(&used, noise)?;
                    let p_zd = self.prior_zd_t(&s)?;
                    let q_zd = ladder_correct_t(&q_bottom, &p_zd)?;
                    let zd = q_zd.rsample(noise)?;
                    passes.push(TopicPass { s, q_zd, p_zd, zd });
                }
                (alpha, used)
            }
            Variant::DeepAll => unreachable!(),
        };
        Ok(Inference {
            q_zx,
            q_zy,
            zx,
            zy,
            concentration,
            sampling_concentration,
            passes,
        })
    }

    /// Per-instance posteriors (first topic pass) in plain numbers.
    pub fn encode(&self, x: &Tensor, noise: &mut Noise) -> Result<EncoderOutputs> {
        let inf = self.infer(x, false, false, noise)?;
        let q_s = inf
            .concentration
            .to_dtype(DType::F64)?
            .to_vec2::<f64>()?
            .into_iter()
            .map(DirichletParams::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(EncoderOutputs {
            q_zx: inf.q_zx.as_ref().map(to_gaussians).transpose()?,
            q_zy: to_gaussians(&inf.q_zy)?,
            q_s,
            q_zd: to_gaussians(&inf.passes[0].q_zd)?,
        })
    }

    /// Decoder logits `(batch, C, H, W)`.
    pub fn decode(&self, s: &Tensor, zd: &Tensor, zx: Option<&Tensor>, zy: &Tensor) -> Result<Tensor> {
        self.generative()?;
        let mut parts: Vec<Tensor> = Vec::with_capacity(4);
        if self.config.decoder_uses_s {
            parts.push(s.to_dtype(self.dtype())?);
        }
        parts.push(zd.clone());
        match (self.config.with_zx, zx) {
            (true, Some(z)) => parts.push(z.clone()),
            (true, None) => return Err(Error::arg("decoder needs z_x for a model with z_x")),
            (false, _) => {}
        }
        parts.push(zy.clone());
        let code = Tensor::cat(&parts, 1)?;
        ensure_same_len("decoder input", self.config.decoder_input_dim(), code.dim(1)?)?;
        self.decoder.as_ref().expect("generative").forward(&code)
    }

    /// Class log-probabilities `(batch, classes)` from `z_y`.
    pub fn classify_aux_t(&self, zy: &Tensor) -> Result<Tensor> {
        let logits = self.classifier.forward(&zy.relu()?)?;
        ops::log_softmax(&logits)
    }

    pub fn classify_aux(&self, zy: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d = self.config.zy_dim;
        let mut flat = Vec::with_capacity(zy.len() * d);
        for row in zy {
            ensure_same_len("classify_aux", d, row.len())?;
            flat.extend_from_slice(row);
        }
        let t = Tensor::from_vec(flat, (zy.len(), d), self.store.device())?.to_dtype(self.dtype())?;
        Ok(self.classify_aux_t(&t)?.to_dtype(DType::F64)?.to_vec2()?)
    }

    /// Single-sample (topic-averaged over S) ELBO terms for a labelled batch.
    pub fn elbo_terms_t(
        &self,
        x: &Tensor,
        labels: &[u32],
        train: bool,
        aggregate_topics: bool,
        noise: &mut Noise,
    ) -> Result<(ElboTerms, Inference)> {
        let xt = self.check_images(x)?;
        ensure_same_len("labels vs batch", xt.dim(0)?, labels.len())?;
        let onehot_check = self.one_hot(labels)?;
        drop(onehot_check);
        let inf = self.infer(&xt, train, aggregate_topics, noise)?;
        let terms = self.assemble_terms(&xt, labels, &inf)?;
        Ok((terms, inf))
    }

    /// Assemble the ELBO terms from an existing inference result.
    pub fn assemble_terms(&self, x: &Tensor, labels: &[u32], inf: &Inference) -> Result<ElboTerms> {
        let b = x.dim(0)?;
        let kl_zx = match &inf.q_zx {
            Some(q) => Some(ops::kl_gaussians_t(q, &GaussianT::standard_like(&q.mean)?)?),
            None => None,
        };
        let p_zy = self.prior_zy_t(labels)?;
        let kl_zy = ops::kl_gaussians_t(&inf.q_zy, &p_zy)?;

        let s_count = inf.passes.len() as f64;
        let mut recon: Option<Tensor> = None;
        let mut ratio: Option<Tensor> = None;
        for pass in &inf.passes {
            let logits = self.decode(&pass.s, &pass.zd, inf.zx.as_ref(), &inf.zy)?;
            let r = ops::bernoulli_loglik(&logits.to_dtype(DType::F64)?, &x.to_dtype(DType::F64)?)?;
            let lr = (pass.q_zd.log_density(&pass.zd)? - pass.p_zd.log_density(&pass.zd)?)?;
            recon = Some(match recon {
                None => r,
                Some(acc) => (acc + r)?,
            });
            ratio = Some(match ratio {
                None => lr,
                Some(acc) => (acc + lr)?,
            });
        }
        let recon = (recon.expect("at least one topic pass") / s_count)?;
        let zd_log_ratio = (ratio.expect("at least one topic pass") / s_count)?;

        let kl_s = ops::kl_dirichlet_t(&inf.sampling_concentration, &self.config.topic_prior)?;
        let kl_s = if kl_s.dim(0)? == b { kl_s } else { kl_s.broadcast_as(b)?.contiguous()? };

        let idx = Tensor::from_vec(labels.to_vec(), (b, 1), x.device())?;
        let aux = self.classify_aux_t(&inf.zy)?.gather(&idx, 1)?.squeeze(1)?.to_dtype(DType::F64)?;
        Ok(ElboTerms {
            recon,
            kl_zx,
            kl_zy,
            zd_log_ratio,
            kl_s,
            aux,
        })
    }

    /// Batch-mean ELBO decomposition under `betas`.
    pub fn elbo_terms(&self, x: &Tensor, labels: &[u32], betas: [f64; 4], noise: &mut Noise) -> Result<ElboBreakdown> {
        if betas.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::arg("beta multipliers must be >= 0"));
        }
        let (terms, _) = self.elbo_terms_t(x, labels, false, false, noise)?;
        terms.breakdown(betas)
    }

    /// Mean of `q(z_y | x)` in evaluation mode.
    pub fn zy_mean(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let x = self.check_images(x)?;
        Ok(self.enc_y.forward(&x, None, train)?.mean)
    }

    /// Class log-probabilities from the posterior mean of `z_y`.
    pub fn class_log_probs(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.classify_aux_t(&self.zy_mean(x, train)?)
    }

    /// Arg-max class predictions in evaluation mode.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<u32>> {
        Ok(self.class_log_probs(x, false)?.argmax(1)?.to_vec1::<u32>()?)
    }

    /// Posterior topic means `alpha / sum(alpha)` in evaluation mode.
    pub fn topic_means(&self, x: &Tensor) -> Result<Vec<Vec<f64>>> {
        self.generative()?;
        let x = self.check_images(x)?;
        let alpha = match self.config.variant {
            Variant::Hduva => self.enc_s.as_ref().expect("generative").concentration(&x, false)?,
            _ => {
                let q = self.enc_d.as_ref().expect("generative").forward(&x, None, false)?;
                self.enc_s.as_ref().expect("generative").concentration(&q.mean, false)?
            }
        };
        let alpha = alpha.to_dtype(DType::F64)?;
        let mean = alpha.broadcast_div(&alpha.sum_keepdim(1)?)?;
        Ok(mean.to_vec2()?)
    }

    /// Decode one image per swept label, holding the seed's domain code fixed
    /// and setting `z_x` to zero. Returns per-pixel probabilities.
    pub fn conditional_generate(&self, seed_x: &Tensor, class_sweep: &[u32], noise: &mut Noise) -> Result<Tensor> {
        self.generative()?;
        if !self.store.all_finite()? {
            return Err(Error::State("model parameters contain NaN or infinity".into()));
        }
        let x = self.check_images(seed_x)?;
        if x.dim(0)? != 1 {
            return Err(Error::arg("conditional generation takes a single seed image"));
        }
        let n = class_sweep.len();
        let enc_d = self.enc_d.as_ref().expect("generative");
        let enc_s = self.enc_s.as_ref().expect("generative");
        let (s, zd) = match self.config.variant {
            Variant::Hduva => {
                let alpha = enc_s.concentration(&x, false)?;
                let s = alpha.broadcast_div(&alpha.sum_keepdim(1)?)?;
                let zd = enc_d.forward(&x, Some(&s), false)?.mean;
                (s, zd)
            }
            _ => {
                let q = enc_d.forward(&x, None, false)?;
                let alpha = enc_s.concentration(&q.mean, false)?;
                let s = alpha.broadcast_div(&alpha.sum_keepdim(1)?)?;
                let p = self.prior_zd_t(&s)?;
                (s, ladder_correct_t(&q, &p)?.mean)
            }
        };
        let rep = |t: &Tensor| -> Result<Tensor> { Ok(t.repeat((n, 1))?) };
        let (s, zd) = (rep(&s)?, rep(&zd)?);
        let zy = self.prior_zy_t(class_sweep)?.rsample(noise)?;
        let zx = if self.config.with_zx {
            Some(Tensor::zeros((n, self.config.zx_dim), self.dtype(), x.device())?)
        } else {
            None
        };
        let logits = self.decode(&s, &zd, zx.as_ref(), &zy)?;
        ops::sigmoid(&logits)
    }
}

fn to_gaussians(g: &GaussianT) -> Result<Vec<LatentGaussian>> {
    let m: Vec<Vec<f64>> = g.mean.to_dtype(DType::F64)?.to_vec2()?;
    let lv: Vec<Vec<f64>> = g.log_variance.to_dtype(DType::F64)?.to_vec2()?;
    m.into_iter()
        .zip(lv)
        .map(|(m, lv)| LatentGaussian::new(m, lv))
        .collect()
}
