//! Parameter storage and the handful of layers the networks are built from.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use candle_core::{DType, Device, Module, Shape, Tensor, Var, D};
use candle_nn::{Conv2dConfig, VarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::ops;

/// Trainable parameters plus non-trainable buffers, initialized from a seed.
///
/// Parameters are created in construction order from a single ChaCha stream,
/// so a fixed seed yields bit-identical weights.
pub struct ParamStore {
    varmap: VarMap,
    buffers: Mutex<BTreeMap<String, Arc<Mutex<Tensor>>>>,
    rng: Mutex<ChaCha8Rng>,
    dtype: DType,
    device: Device,
}

impl std::fmt::Debug for ParamStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamStore")
            .field("dtype", &self.dtype)
            .field("parameters", &self.num_parameters())
            .finish()
    }
}

pub enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    FanIn(usize),
    Const(f64),
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            varmap: VarMap::new(),
            buffers: Mutex::new(BTreeMap::new()),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            dtype,
            device: Device::Cpu,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn var<S: Into<Shape>>(&self, name: &str, shape: S, init: Init) -> Result<Tensor> {
        let shape: Shape = shape.into();
        let n = shape.elem_count();
        let values: Vec<f64> = match init {
            Init::FanIn(fan_in) => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let mut rng = self.rng.lock().expect("rng lock");
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            }
            Init::Const(c) => vec![c; n],
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let mut data = self.varmap.data().lock().expect("varmap lock");
        if data.contains_key(name) {
            return Err(Error::State(format!("duplicate parameter name {name}")));
        }
        let out = var.as_tensor().clone();
        data.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn buffer(&self, name: &str, init: Tensor) -> Arc<Mutex<Tensor>> {
        let cell = Arc::new(Mutex::new(init));
        self.buffers
            .lock()
            .expect("buffer lock")
            .insert(name.to_string(), cell.clone());
        cell
    }

    /// Trainable variables sorted by name.
    pub fn trainable(&self) -> Vec<(String, Var)> {
        let data = self.varmap.data().lock().expect("varmap lock");
        let mut v: Vec<_> = data.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn vars(&self) -> Vec<Var> {
        self.trainable().into_iter().map(|(_, v)| v).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.trainable().iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Every parameter and buffer by name (buffers prefixed with `buffer:`).
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .trainable()
            .into_iter()
            .map(|(k, v)| (k, v.as_tensor().clone()))
            .collect();
        for (k, cell) in self.buffers.lock().expect("buffer lock").iter() {
            out.push((format!("buffer:{k}"), cell.lock().expect("buffer").clone()));
        }
        out
    }

    /// Overwrite parameters and buffers from `values`; every name must exist.
    pub fn load(&self, values: &BTreeMap<String, Tensor>) -> Result<()> {
        let data = self.varmap.data().lock().expect("varmap lock");
        let buffers = self.buffers.lock().expect("buffer lock");
        let expected = data.len() + buffers.len();
        if values.len() != expected {
            return Err(Error::State(format!(
                "checkpoint holds {} tensors, model expects {expected}",
                values.len()
            )));
        }
        for (name, t) in values {
            let t = t.to_dtype(self.dtype)?;
            if let Some(key) = name.strip_prefix("buffer:") {
                let cell = buffers
                    .get(key)
                    .ok_or_else(|| Error::State(format!("unknown buffer {key}")))?;
                *cell.lock().expect("buffer") = t;
            } else {
                let var = data
                    .get(name)
                    .ok_or_else(|| Error::State(format!("unknown parameter {name}")))?;
                var.set(&t)?;
            }
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and values of all parameters and buffers.
    pub fn checksum(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, t) in self.named_tensors() {
            h.update(name.as_bytes());
            for d in t.dims() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()? {
                h.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    /// `true` when every parameter is finite.
    pub fn all_finite(&self) -> Result<bool> {
        for (_, v) in self.trainable() {
            let bad = v
                .as_tensor()
                .flatten_all()?
                .to_dtype(DType::F64)?
                .to_vec1::<f64>()?
                .iter()
                .any(|x| !x.is_finite());
            if bad {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn linear(store: &ParamStore, name: &str, input: usize, output: usize) -> Result<candle_nn::Linear> {
    let w = store.var(&format!("{name}.weight"), (output, input), Init::FanIn(input))?;
    let b = store.var(&format!("{name}.bias"), output, Init::FanIn(input))?;
    Ok(candle_nn::Linear::new(w, Some(b)))
}

pub fn conv2d(
    store: &ParamStore,
    name: &str,
    input: usize,
    output: usize,
    kernel: usize,
    padding: usize,
) -> Result<candle_nn::Conv2d> {
    let fan_in = input * kernel * kernel;
    let w = store.var(&format!("{name}.weight"), (output, input, kernel, kernel), Init::FanIn(fan_in))?;
    let b = store.var(&format!("{name}.bias"), output, Init::FanIn(fan_in))?;
    let cfg = Conv2dConfig {
        padding,
        stride: 1,
        dilation: 1,
        groups: 1,
        cudnn_fwd_algo: None,
    };
    Ok(candle_nn::Conv2d::new(w, Some(b), cfg))
}

/// 2×2 max pooling with stride 2, dropping a trailing odd row or column.
///
/// The gradient goes to a single arg-max per window. candle's `max_pool2d`
/// scales it by the window occupancy instead, and a max reduction would hand
/// it to every tied entry.
pub fn max_pool2x2(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let (ho, wo) = (h / 2, w / 2);
    let windows = x
        .narrow(2, 0, 2 * ho)?
        .narrow(3, 0, 2 * wo)?
        .reshape((b, c, ho, 2, wo, 2))?
        .permute((0, 1, 2, 4, 3, 5))?
        .contiguous()?
        .reshape((b, c, ho, wo, 4))?;
    let idx = windows.detach().argmax_keepdim(4)?;
    Ok(windows.gather(&idx, 4)?.squeeze(4)?)
}

/// Batch normalization over `(batch, channels, h, w)` with running statistics.
#[derive(Debug)]
pub struct BatchNorm2d {
    weight: Tensor,
    bias: Tensor,
    running_mean: Arc<Mutex<Tensor>>,
    running_var: Arc<Mutex<Tensor>>,
    momentum: f64,
    eps: f64,
}

impl BatchNorm2d {
    pub fn new(store: &ParamStore, name: &str, channels: usize) -> Result<Self> {
        let weight = store.var(&format!("{name}.weight"), channels, Init::Const(1.0))?;
        let bias = store.var(&format!("{name}.bias"), channels, Init::Const(0.0))?;
        let zeros = Tensor::zeros(channels, store.dtype(), store.device())?;
        let ones = Tensor::ones(channels, store.dtype(), store.device())?;
        Ok(Self {
            weight,
            bias,
            running_mean: store.buffer(&format!("{name}.running_mean"), zeros),
            running_var: store.buffer(&format!("{name}.running_var"), ones),
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let c = self.weight.dim(0)?;
        let view = (1, c, 1, 1);
        let (mean, var) = if train {
            // per-channel statistics over batch and spatial dims
            let xt = x.transpose(0, 1)?.flatten_from(1)?;
            let mean = xt.mean_keepdim(D::Minus1)?;
            let var = xt.broadcast_sub(&mean)?.sqr()?.mean_keepdim(D::Minus1)?;
            let n = xt.dim(1)? as f64;
            let (mean, var) = (mean.squeeze(1)?, var.squeeze(1)?);
            {
                let mut rm = self.running_mean.lock().expect("buffer");
                let mut rv = self.running_var.lock().expect("buffer");
                let unbiased = (var.detach() * (n / (n - 1.0).max(1.0)))?;
                *rm = ((&*rm * (1.0 - self.momentum))? + (mean.detach() * self.momentum)?)?;
                *rv = ((&*rv * (1.0 - self.momentum))? + (unbiased * self.momentum)?)?;
            }
            (mean, var)
        } else {
            let rm = self.running_mean.lock().expect("buffer").clone();
            let rv = self.running_var.lock().expect("buffer").clone();
            (rm, rv)
        };
        let inv = (var + self.eps)?.sqrt()?.recip()?;
        let scale = (&self.weight * inv)?;
        let shift = (&self.bias - (&mean * &scale)?)?;
        Ok(x
            .broadcast_mul(&scale.reshape(view)?)?
            .broadcast_add(&shift.reshape(view)?)?)
    }
}

/// `A(x) * sigmoid(G(x))` with two dense maps.
#[derive(Debug)]
pub struct GatedDense {
    h: candle_nn::Linear,
    g: candle_nn::Linear,
}

impl GatedDense {
    pub fn new(store: &ParamStore, name: &str, input: usize, output: usize) -> Result<Self> {
        Ok(Self {
            h: linear(store, &format!("{name}.h"), input, output)?,
            g: linear(store, &format!("{name}.g"), input, output)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok((self.h.forward(x)? * ops::sigmoid(&self.g.forward(x)?)?)?)
    }
}

/// Gated 3x3 convolution, stride 1, padding 1.
#[derive(Debug)]
pub struct GatedConv2d {
    h: candle_nn::Conv2d,
    g: candle_nn::Conv2d,
}

impl GatedConv2d {
    pub fn new(store: &ParamStore, name: &str, input: usize, output: usize) -> Result<Self> {
        Ok(Self {
            h: conv2d(store, &format!("{name}.h"), input, output, 3, 1)?,
            g: conv2d(store, &format!("{name}.g"), input, output, 3, 1)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok((self.h.forward(x)? * ops::sigmoid(&self.g.forward(x)?)?)?)
    }
}

/// Two conv(k=5) + batch-norm + ReLU + max-pool(2) blocks, flattened.
#[derive(Debug)]
pub struct ConvTrunk {
    conv1: candle_nn::Conv2d,
    bn1: BatchNorm2d,
    conv2: candle_nn::Conv2d,
    bn2: BatchNorm2d,
    out_dim: usize,
}

impl ConvTrunk {
    pub fn new(
        store: &ParamStore,
        name: &str,
        image: (usize, usize, usize),
        channels: (usize, usize),
    ) -> Result<Self> {
        let (c, h, w) = image;
        let oh = trunk_side(h)?;
        let ow = trunk_side(w)?;
        Ok(Self {
            conv1: conv2d(store, &format!("{name}.conv1"), c, channels.0, 5, 0)?,
            bn1: BatchNorm2d::new(store, &format!("{name}.bn1"), channels.0)?,
            conv2: conv2d(store, &format!("{name}.conv2"), channels.0, channels.1, 5, 0)?,
            bn2: BatchNorm2d::new(store, &format!("{name}.bn2"), channels.1)?,
            out_dim: channels.1 * oh * ow,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let h = self.conv1.forward(x)?;
        let h = max_pool2x2(&self.bn1.forward(&h, train)?.relu()?)?;
        let h = self.conv2.forward(&h)?;
        let h = max_pool2x2(&self.bn2.forward(&h, train)?.relu()?)?;
        Ok(h.flatten_from(1)?)
    }
}

/// Spatial side length after the trunk; images must be at least 14 pixels.
pub fn trunk_side(side: usize) -> Result<usize> {
    if side < 14 {
        return Err(Error::arg(format!(
            "encoder trunk needs images of at least 14x14, got side {side}"
        )));
    }
    Ok(((side - 4) / 2 - 4) / 2)
}
