use candle_core::{Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ImageShape;
use crate::parallel::chunk_seed;

/// Images of one nominal domain, stored as `f32` pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSet {
    pub name: String,
    pub image_shape: ImageShape,
    pixels: Vec<f32>,
    pub labels: Vec<u32>,
}

impl DomainSet {
    pub fn new(name: impl Into<String>, image_shape: ImageShape, pixels: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        let (c, h, w) = image_shape;
        let per = c * h * w;
        if per == 0 || pixels.len() != per * labels.len() {
            return Err(Error::arg(format!(
                "domain data: {} pixels do not form {} images of shape {image_shape:?}",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            image_shape,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn image_len(&self) -> usize {
        let (c, h, w) = self.image_shape;
        c * h * w
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// `(indices.len(), C, H, W)` tensor and labels for the given rows.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<u32>)> {
        let n = self.image_len();
        let mut flat = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            flat.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        let (c, h, w) = self.image_shape;
        Ok((Tensor::from_vec(flat, (indices.len(), c, h, w), &Device::Cpu)?, labels))
    }

    pub fn all(&self) -> Result<(Tensor, Vec<u32>)> {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    /// Concatenate several domains into one pooled set.
    pub fn pool(name: &str, sets: &[DomainSet]) -> Result<DomainSet> {
        let first = sets.first().ok_or_else(|| Error::arg("nothing to pool"))?;
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for s in sets {
            if s.image_shape != first.image_shape {
                return Err(Error::arg("cannot pool domains with different image shapes"));
            }
            pixels.extend_from_slice(&s.pixels);
            labels.extend_from_slice(&s.labels);
        }
        DomainSet::new(name, first.image_shape, pixels, labels)
    }

    fn hash_into(&self, h: &mut Sha256) {
        h.update(self.name.as_bytes());
        for p in &self.pixels {
            h.update(p.to_le_bytes());
        }
        for l in &self.labels {
            h.update(l.to_le_bytes());
        }
    }
}

/// Everything a training run consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub num_classes: usize,
    pub domains: Vec<DomainSet>,
    /// Validation rows per domain, used only by `selection = val_accuracy`.
    pub validation: Vec<DomainSet>,
    /// Unlabelled instances (semi-supervised mode); never pooled with a domain.
    pub unlabeled: Option<DomainSet>,
}

impl TrainingData {
    pub fn new(num_classes: usize, domains: Vec<DomainSet>) -> Result<Self> {
        let data = Self {
            num_classes,
            domains,
            validation: Vec::new(),
            unlabeled: None,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() || self.domains.iter().all(|d| d.is_empty()) {
            return Err(Error::arg("training set is empty"));
        }
        let shape = self.image_shape();
        for d in self.domains.iter().chain(&self.validation).chain(self.unlabeled.iter()) {
            if d.image_shape != shape {
                return Err(Error::arg("all domains must share one image shape"));
            }
            if let Some(&y) = d.labels.iter().find(|&&y| y as usize >= self.num_classes) {
                return Err(Error::arg(format!("label {y} outside [0, {})", self.num_classes)));
            }
        }
        Ok(())
    }

    pub fn image_shape(&self) -> ImageShape {
        self.domains[0].image_shape
    }

    pub fn total_len(&self) -> usize {
        self.domains.iter().map(DomainSet::len).sum()
    }

    /// SHA-256 over names, pixels and labels of the training domains.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.domains {
            d.hash_into(&mut h);
        }
        hex::encode(h.finalize())
    }
}

/// Per-epoch stratified schedule: each step draws one batch from every
/// non-empty domain. Smaller domains are reshuffled and cycled so that the
/// epoch length is `ceil(max_len / M)` steps.
pub fn stratified_schedule(lens: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<Vec<usize>>> {
    let max_len = lens.iter().copied().max().unwrap_or(0);
    if max_len == 0 || batch_size == 0 {
        return Vec::new();
    }
    let steps = max_len.div_ceil(batch_size);
    let orders: Vec<Vec<usize>> = lens
        .iter()
        .enumerate()
        .map(|(d, &n)| {
            let mut order = Vec::with_capacity(steps * batch_size);
            let mut round = 0u64;
            while order.len() < steps * batch_size.min(n) && n > 0 {
                let mut perm: Vec<usize> = (0..n).collect();
                let s = chunk_seed(chunk_seed(seed, epoch as u64), (d as u64) << 32 | round);
                perm.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
                order.extend(perm);
                round += 1;
            }
            order
        })
        .collect();
    (0..steps)
        .map(|t| {
            orders
                .iter()
                .zip(lens)
                .map(|(order, &n)| {
                    let m = batch_size.min(n);
                    order[t * m..(t + 1) * m].to_vec()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_covers_largest_domain_once() {
        let sched = stratified_schedule(&[10, 4], 3, 1, 0);
        assert_eq!(sched.len(), 4);
        let mut seen: Vec<usize> = sched.iter().flat_map(|s| s[0].clone()).take(10).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert!(sched.iter().all(|s| s[0].len() == 3 && s[1].len() == 3));
        assert!(sched.iter().all(|s| s[1].iter().all(|&i| i < 4)));
    }

    #[test]
    fn schedule_is_seeded() {
        assert_eq!(stratified_schedule(&[7, 9], 2, 5, 3), stratified_schedule(&[7, 9], 2, 5, 3));
        assert_ne!(stratified_schedule(&[7, 9], 2, 5, 3), stratified_schedule(&[7, 9], 2, 5, 4));
    }

    #[test]
    fn pool_sizes_add() {
        let a = DomainSet::new("a", (1, 2, 2), vec![0.0; 8], vec![0, 1]).unwrap();
        let b = DomainSet::new("b", (1, 2, 2), vec![1.0; 12], vec![1, 1, 0]).unwrap();
        let p = DomainSet::pool("all", &[a.clone(), b.clone()]).unwrap();
        assert_eq!(p.len(), a.len() + b.len());
        assert_eq!(p.image(2), b.image(0));
        assert!(DomainSet::new("bad", (1, 2, 2), vec![0.0; 7], vec![0, 1]).is_err());
    }
}
