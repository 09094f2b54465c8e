use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::parallel::chunk_seed;

/// Environment variable naming the dataset root.
pub const DATA_DIR_ENV: &str = "HDUVA_DATA_DIR";

/// `$HDUVA_DATA_DIR`, or `./data` when unset.
pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Grayscale digit images from the MNIST training idx files.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    side: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

const MNIST_IMAGES: &str = "train-images-idx3-ubyte";
const MNIST_LABELS: &str = "train-labels-idx1-ubyte";

fn read_be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

impl IdxImages {
    /// Read the uncompressed training idx pair from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let img_path = dir.join(MNIST_IMAGES);
        let lab_path = dir.join(MNIST_LABELS);
        let read = |p: &Path| {
            std::fs::read(p).map_err(|e| {
                Error::io(p, format!("{e}; expected the uncompressed MNIST training files in {}", dir.display()))
            })
        };
        let img = read(&img_path)?;
        let lab = read(&lab_path)?;
        if img.len() < 16 || read_be_u32(&img, 0) != 2051 {
            return Err(Error::io(&img_path, "not an idx3 image file"));
        }
        if lab.len() < 8 || read_be_u32(&lab, 0) != 2049 {
            return Err(Error::io(&lab_path, "not an idx1 label file"));
        }
        let n = read_be_u32(&img, 4) as usize;
        let (h, w) = (read_be_u32(&img, 8) as usize, read_be_u32(&img, 12) as usize);
        if h != w || img.len() != 16 + n * h * w || lab.len() != 8 + n || read_be_u32(&lab, 4) as usize != n {
            return Err(Error::io(&img_path, "idx sizes are inconsistent"));
        }
        Ok(Self {
            side: h,
            pixels: img[16..].to_vec(),
            labels: lab[8..].to_vec(),
        })
    }
}

/// Procedurally drawn seven-segment digits with per-index jitter in
/// position, size, slant and stroke width. Deterministic in `(seed, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticDigits {
    pub side: usize,
    pub classes: usize,
    pub count: usize,
    pub seed: u64,
}

impl Default for SyntheticDigits {
    fn default() -> Self {
        Self {
            side: 28,
            classes: 10,
            count: 60_000,
            seed: 0,
        }
    }
}

// segments a b c d e f g as (x0, y0, x1, y1) in a unit box, y down
const SEGMENTS: [(f64, f64, f64, f64); 7] = [
    (0.0, 0.0, 1.0, 0.0),
    (1.0, 0.0, 1.0, 0.5),
    (1.0, 0.5, 1.0, 1.0),
    (0.0, 1.0, 1.0, 1.0),
    (0.0, 0.5, 0.0, 1.0),
    (0.0, 0.0, 0.0, 0.5),
    (0.0, 0.5, 1.0, 0.5),
];

const DIGIT_SEGMENTS: [u8; 10] = [
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110, 0b1101101, 0b1111101, 0b0000111, 0b1111111,
    0b1101111,
];

fn segment_distance(px: f64, py: f64, (x0, y0, x1, y1): (f64, f64, f64, f64)) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0);
    let (qx, qy) = (x0 + t * dx, y0 + t * dy);
    ((px - qx).powi(2) + (py - qy).powi(2)).sqrt()
}

impl SyntheticDigits {
    pub fn new(side: usize, classes: usize, count: usize, seed: u64) -> Result<Self> {
        if !(1..=10).contains(&classes) {
            return Err(Error::arg("synthetic digits support 1 to 10 classes"));
        }
        if side < 8 || count == 0 {
            return Err(Error::arg("synthetic digits need side >= 8 and count >= 1"));
        }
        Ok(Self { side, classes, count, seed })
    }

    fn rng(&self, index: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(chunk_seed(self.seed, index as u64))
    }

    pub fn label(&self, index: usize) -> u32 {
        self.rng(index).random_range(0..self.classes as u32)
    }

    pub fn image(&self, index: usize) -> Vec<f32> {
        let mut rng = self.rng(index);
        let label = rng.random_range(0..self.classes as u32) as usize;
        let s = self.side as f64;
        let height = s * rng.random_range(0.55..0.72);
        let width = height * rng.random_range(0.5..0.62);
        let cx = s / 2.0 + rng.random_range(-0.08..0.08) * s;
        let cy = s / 2.0 + rng.random_range(-0.08..0.08) * s;
        let slant = rng.random_range(-0.18..0.18);
        let stroke = (s / 16.0) * rng.random_range(0.75..1.1);
        let segs: Vec<_> = (0..7)
            .filter(|k| DIGIT_SEGMENTS[label] >> k & 1 == 1)
            .map(|k| {
                let (x0, y0, x1, y1) = SEGMENTS[k];
                let map = |x: f64, y: f64| {
                    let yy = cy + (y - 0.5) * height;
                    let xx = cx + (x - 0.5) * width - slant * (yy - cy);
                    (xx, yy)
                };
                let (a, b) = map(x0, y0);
                let (c, d) = map(x1, y1);
                (a, b, c, d)
            })
            .collect();
        let mut out = vec![0f32; self.side * self.side];
        for y in 0..self.side {
            for x in 0..self.side {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let d = segs
                    .iter()
                    .map(|&seg| segment_distance(px, py, seg))
                    .fold(f64::INFINITY, f64::min);
                out[y * self.side + x] = (stroke + 0.5 - d).clamp(0.0, 1.0) as f32;
            }
        }
        out
    }
}

/// Grayscale base images the scenario generators color or rotate.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseSource {
    Mnist(Arc<IdxImages>),
    Synthetic(SyntheticDigits),
}

impl BaseSource {
    /// MNIST from `$HDUVA_DATA_DIR/mnist`.
    pub fn mnist_default() -> Result<Self> {
        Self::mnist(&data_root().join("mnist"))
    }

    pub fn mnist(dir: &Path) -> Result<Self> {
        Ok(BaseSource::Mnist(Arc::new(IdxImages::load(dir)?)))
    }

    pub fn synthetic(digits: SyntheticDigits) -> Self {
        BaseSource::Synthetic(digits)
    }

    pub fn len(&self) -> usize {
        match self {
            BaseSource::Mnist(m) => m.labels.len(),
            BaseSource::Synthetic(s) => s.count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn side(&self) -> usize {
        match self {
            BaseSource::Mnist(m) => m.side,
            BaseSource::Synthetic(s) => s.side,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            BaseSource::Mnist(_) => 10,
            BaseSource::Synthetic(s) => s.classes,
        }
    }

    pub fn label(&self, index: usize) -> u32 {
        match self {
            BaseSource::Mnist(m) => m.labels[index] as u32,
            BaseSource::Synthetic(s) => s.label(index),
        }
    }

    /// Row-major grayscale pixels in `[0, 1]`.
    pub fn image(&self, index: usize) -> Vec<f32> {
        match self {
            BaseSource::Mnist(m) => {
                let n = m.side * m.side;
                m.pixels[index * n..(index + 1) * n].iter().map(|&p| p as f32 / 255.0).collect()
            }
            BaseSource::Synthetic(s) => s.image(index),
        }
    }

    /// Short text naming the source, recorded in manifests.
    pub fn descriptor(&self) -> String {
        match self {
            BaseSource::Mnist(m) => format!("mnist:n={},side={}", m.labels.len(), m.side),
            BaseSource::Synthetic(s) => format!(
                "synthetic:side={},classes={},count={},seed={}",
                s.side, s.classes, s.count, s.seed
            ),
        }
    }

    /// Indices whose label is below `max_classes` (all when `None`).
    pub fn eligible(&self, max_classes: Option<usize>) -> Vec<usize> {
        match max_classes {
            None => (0..self.len()).collect(),
            Some(c) => (0..self.len()).filter(|&i| (self.label(i) as usize) < c).collect(),
        }
    }
}
