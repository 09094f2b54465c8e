//! Deterministic benchmark scenarios, their on-disk manifests and the
//! leave-one-domain-out / shift-AUC evaluation harness.
//!
//! A manifest is lazy: each instance names a base image and a transform, and
//! pixels are rendered on demand, so the same `(scenario, seed, version)`
//! always yields the same bytes.

mod evaluate;
mod generators;
mod hospitals;
pub mod image_ops;
pub mod palette;
mod source;
mod topics;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use evaluate::{
    lodo_evaluate, render_lodo_table, shift_auc, shift_auc_evaluate, Algorithm, Classifier, ConstantClassifier,
    LodoRow,
};
pub use generators::{
    gen_color_hierarchical, gen_color_sequential, gen_rotated_overlap, ColorHierarchicalParams, RotatedMode,
    RotatedParams, SequentialParams, GENERATOR_VERSION,
};
pub use hospitals::{gen_virtual_hospitals, hospital_counts, HospitalCount, HospitalParams, EXPECTED_HOSPITAL_COUNTS};
pub use palette::{Hsl, PaletteName, PaletteSpec, Rgb};
pub use source::{data_root, BaseSource, IdxImages, SyntheticDigits, DATA_DIR_ENV};
pub use topics::{plot_topics, silhouette, TopicPlot};

use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::training::{DomainSet, TrainingData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    /// Unlabelled extra instances for semi-supervised runs.
    Semi,
    /// Present in the corpus but not sampled for this run.
    Unused,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Semi => "semi",
            Split::Unused => "unused",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "semi" => Ok(Split::Semi),
            "unused" => Ok(Split::Unused),
            _ => Err(Error::arg(format!("unknown split `{s}`"))),
        }
    }
}

/// How an instance's pixels are produced from its source.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Color { base: usize, fg: Rgb, bg: Rgb },
    Rotate { base: usize, degrees: f64 },
    /// An image file of an external corpus, resized to `side`.
    File { side: usize },
}

impl Transform {
    pub fn encode(&self) -> String {
        match self {
            Transform::Color { base, fg, bg } => {
                format!("base={base};fg={};bg={}", palette::rgb_hex(*fg), palette::rgb_hex(*bg))
            }
            Transform::Rotate { base, degrees } => format!("base={base};rotate={degrees};interp=bilinear;pad=zero"),
            Transform::File { side } => format!("file;resize={side}"),
        }
    }

    pub fn decode(s: &str) -> Result<Self> {
        let fields: BTreeMap<&str, &str> = s
            .split(';')
            .map(|kv| kv.split_once('=').unwrap_or((kv, "")))
            .collect();
        let num = |k: &str| -> Result<&str> { fields.get(k).copied().ok_or_else(|| Error::arg(format!("transform `{s}` lacks {k}"))) };
        let bad = || Error::arg(format!("bad transform `{s}`"));
        if fields.contains_key("file") {
            return Ok(Transform::File { side: num("resize")?.parse().map_err(|_| bad())? });
        }
        let base = num("base")?.parse().map_err(|_| bad())?;
        if let Some(d) = fields.get("rotate") {
            return Ok(Transform::Rotate { base, degrees: d.parse().map_err(|_| bad())? });
        }
        Ok(Transform::Color {
            base,
            fg: palette::parse_hex(num("fg")?)?,
            bg: palette::parse_hex(num("bg")?)?,
        })
    }

    pub fn base_index(&self) -> Option<usize> {
        match self {
            Transform::Color { base, .. } | Transform::Rotate { base, .. } => Some(*base),
            Transform::File { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// Relative to the manifest directory (or the corpus root for file transforms).
    pub image_path: String,
    pub class_label: u32,
    pub nominal_domain: String,
    pub sub_domain: String,
    pub transform: Transform,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainInfo {
    pub name: String,
    /// Bridge domains are trained on but never held out.
    pub bridge: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioManifest {
    pub scenario_id: String,
    pub seed: u64,
    pub generator_version: String,
    pub source: String,
    pub num_classes: usize,
    pub image_shape: (usize, usize, usize),
    pub domains: Vec<DomainInfo>,
    pub palette: Option<PaletteSpec>,
    /// Directory that `File` instance paths are relative to.
    pub corpus_root: Option<PathBuf>,
    pub instances: Vec<Instance>,
}

/// Sidecar metadata written next to the manifest CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub scenario_id: String,
    pub seed: u64,
    pub generator_version: String,
    pub source: String,
    pub num_classes: usize,
    pub image_shape: (usize, usize, usize),
    pub domains: Vec<DomainInfo>,
    pub palette: Option<PaletteSpec>,
    pub corpus_root: Option<PathBuf>,
    pub manifest_hash: String,
    pub content_hash: Option<String>,
}

pub const CSV_HEADER: [&str; 6] = ["path", "class", "nominal_domain", "sub_domain", "transform", "split"];

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ScenarioManifest {
    pub fn domain_names(&self) -> Vec<&str> {
        self.domains.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let names = self.domain_names();
        for inst in &self.instances {
            if !names.contains(&inst.nominal_domain.as_str()) {
                return Err(Error::arg(format!(
                    "instance {} has undeclared domain `{}`",
                    inst.image_path, inst.nominal_domain
                )));
            }
            if inst.sub_domain.is_empty() {
                return Err(Error::arg(format!("instance {} lacks a sub-domain", inst.image_path)));
            }
        }
        Ok(())
    }

    pub fn instances_in(&self, domain: &str, split: Option<Split>) -> impl Iterator<Item = &Instance> {
        let domain = domain.to_string();
        self.instances
            .iter()
            .filter(move |i| i.nominal_domain == domain && split.is_none_or(|s| i.split == s))
    }

    /// Manifest CSV bytes; stable for fixed generator inputs.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::State(format!("manifest csv: {e}"));
        w.write_record(CSV_HEADER).map_err(err)?;
        for i in &self.instances {
            w.write_record([
                i.image_path.as_str(),
                &i.class_label.to_string(),
                &i.nominal_domain,
                &i.sub_domain,
                &i.transform.encode(),
                i.split.as_str(),
            ])
            .map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::State(format!("manifest csv: {e}")))
    }

    /// SHA-256 of the manifest CSV.
    pub fn manifest_hash(&self) -> Result<String> {
        Ok(sha_hex(&self.to_csv()?))
    }

    pub fn sidecar(&self, content_hash: Option<String>) -> Result<Sidecar> {
        Ok(Sidecar {
            scenario_id: self.scenario_id.clone(),
            seed: self.seed,
            generator_version: self.generator_version.clone(),
            source: self.source.clone(),
            num_classes: self.num_classes,
            image_shape: self.image_shape,
            domains: self.domains.clone(),
            palette: self.palette.clone(),
            corpus_root: self.corpus_root.clone(),
            manifest_hash: self.manifest_hash()?,
            content_hash,
        })
    }

    /// Render one instance to 8-bit planar pixels.
    pub fn render(&self, inst: &Instance, source: Option<&BaseSource>) -> Result<Vec<u8>> {
        let (c, h, w) = self.image_shape;
        let need_source = || source.ok_or_else(|| Error::State(format!("{} needs a base image source", inst.image_path)));
        let pixels = match &inst.transform {
            Transform::Color { base, fg, bg } => {
                let src = need_source()?;
                let gray = src.image(*base);
                let rgb = image_ops::colorize(&gray, *fg, *bg);
                image_ops::resize(&rgb, 3, src.side(), src.side(), h)
            }
            Transform::Rotate { base, degrees } => {
                let src = need_source()?;
                let rot = image_ops::rotate(&src.image(*base), src.side(), *degrees);
                image_ops::resize(&rot, 1, src.side(), src.side(), h)
            }
            Transform::File { side } => {
                let root = self.corpus_root.as_deref().unwrap_or(Path::new(""));
                return read_image(&root.join(&inst.image_path), c, *side);
            }
        };
        debug_assert_eq!(pixels.len(), c * h * w);
        Ok(image_ops::quantize(&pixels))
    }

    /// Render every instance (in manifest order) under `exec`.
    pub fn render_all(&self, source: Option<&BaseSource>, exec: Execution) -> Result<Vec<Vec<u8>>> {
        exec.map_slice(&self.instances, |i| self.render(i, source))
            .into_iter()
            .collect()
    }

    /// Per-instance SHA-256 of rendered pixels.
    pub fn instance_hashes(&self, source: Option<&BaseSource>, exec: Execution) -> Result<Vec<String>> {
        exec.map_slice(&self.instances, |i| self.render(i, source).map(|p| sha_hex(&p)))
            .into_iter()
            .collect()
    }

    /// SHA-256 over all per-instance hashes in manifest order.
    pub fn content_hash(&self, source: Option<&BaseSource>, exec: Execution) -> Result<String> {
        let mut h = Sha256::new();
        for ih in self.instance_hashes(source, exec)? {
            h.update(ih.as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Build per-domain training sets for `split`, in declared domain order.
    /// Domains without instances of that split are skipped.
    pub fn domain_sets(&self, split: Split, source: Option<&BaseSource>, exec: Execution) -> Result<Vec<DomainSet>> {
        let mut out = Vec::new();
        for d in &self.domains {
            let insts: Vec<&Instance> = self.instances_in(&d.name, Some(split)).collect();
            if insts.is_empty() {
                continue;
            }
            out.push(self.set_from(&d.name, &insts, source, exec)?);
        }
        Ok(out)
    }

    /// Instances of the given sub-domain across all domains and splits.
    pub fn sub_domain_set(&self, sub_domain: &str, source: Option<&BaseSource>, exec: Execution) -> Result<DomainSet> {
        let insts: Vec<&Instance> = self.instances.iter().filter(|i| i.sub_domain == sub_domain).collect();
        if insts.is_empty() {
            return Err(Error::arg(format!("no instances in sub-domain `{sub_domain}`")));
        }
        self.set_from(sub_domain, &insts, source, exec)
    }

    fn set_from(&self, name: &str, insts: &[&Instance], source: Option<&BaseSource>, exec: Execution) -> Result<DomainSet> {
        let rendered: Vec<Vec<u8>> = exec
            .map_slice(insts, |i| self.render(i, source))
            .into_iter()
            .collect::<Result<_>>()?;
        let pixels: Vec<f32> = rendered.iter().flat_map(|p| image_ops::dequantize(p)).collect();
        let labels = insts.iter().map(|i| i.class_label).collect();
        DomainSet::new(name, self.image_shape, pixels, labels)
    }

    /// Labelled training data (split `train`), plus `val` and `semi` rows.
    pub fn training_data(&self, source: Option<&BaseSource>, exec: Execution) -> Result<TrainingData> {
        let domains = self.domain_sets(Split::Train, source, exec)?;
        if domains.is_empty() {
            return Err(Error::arg(format!("scenario `{}` has no training instances", self.scenario_id)));
        }
        let mut data = TrainingData::new(self.num_classes, domains)?;
        data.validation = self.domain_sets(Split::Val, source, exec)?;
        let semi: Vec<&Instance> = self.instances.iter().filter(|i| i.split == Split::Semi).collect();
        if !semi.is_empty() {
            data.unlabeled = Some(self.set_from("unlabeled", &semi, source, exec)?);
        }
        Ok(data)
    }

    /// Write rendered images (PNG), the manifest CSV and the sidecar into
    /// `dir`. Returns the sidecar.
    pub fn write(&self, dir: &Path, source: Option<&BaseSource>, exec: Execution) -> Result<Sidecar> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut content = Sha256::new();
        let mut written = std::collections::BTreeSet::new();
        let rendered = self.render_all(source, exec)?;
        for (inst, pixels) in self.instances.iter().zip(&rendered) {
            content.update(sha_hex(pixels).as_bytes());
            if matches!(inst.transform, Transform::File { .. }) || !written.insert(inst.image_path.clone()) {
                continue;
            }
            let path = dir.join(&inst.image_path);
            write_png(&path, pixels, self.image_shape)?;
        }
        let sidecar = self.sidecar(Some(hex::encode(content.finalize())))?;
        let csv_path = dir.join("manifest.csv");
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let side_path = dir.join("manifest.json");
        let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| Error::State(e.to_string()))?;
        std::fs::write(&side_path, json).map_err(|e| Error::io(&side_path, e))?;
        Ok(sidecar)
    }

    /// Read `manifest.csv` and `manifest.json` from `dir`.
    pub fn read(dir: &Path) -> Result<Self> {
        let csv_path = dir.join("manifest.csv");
        let side_path = dir.join("manifest.json");
        for p in [&csv_path, &side_path] {
            if !p.exists() {
                return Err(Error::MissingArtifact(p.clone()));
            }
        }
        let side_bytes = std::fs::read(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let side: Sidecar = serde_json::from_slice(&side_bytes).map_err(|e| Error::io(&side_path, e))?;
        let mut r = csv::Reader::from_path(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let header = r.headers().map_err(|e| Error::io(&csv_path, e))?.clone();
        if header.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(Error::io(&csv_path, "unexpected manifest header"));
        }
        let mut instances = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::io(&csv_path, e))?;
            let bad = |what: &str| Error::io(&csv_path, format!("bad {what} in row {:?}", rec.position()));
            instances.push(Instance {
                image_path: rec[0].to_string(),
                class_label: rec[1].parse().map_err(|_| bad("class"))?,
                nominal_domain: rec[2].to_string(),
                sub_domain: rec[3].to_string(),
                transform: Transform::decode(&rec[4])?,
                split: rec[5].parse()?,
            });
        }
        let m = Self {
            scenario_id: side.scenario_id,
            seed: side.seed,
            generator_version: side.generator_version,
            source: side.source,
            num_classes: side.num_classes,
            image_shape: side.image_shape,
            domains: side.domains,
            palette: side.palette,
            corpus_root: side.corpus_root,
            instances,
        };
        if m.manifest_hash()? != side.manifest_hash {
            return Err(Error::io(&csv_path, "manifest hash does not match its sidecar"));
        }
        m.validate()?;
        Ok(m)
    }

    /// Like [`ScenarioManifest::training_data`] but reading the PNG files
    /// written by [`ScenarioManifest::write`].
    pub fn load_training_data(dir: &Path, exec: Execution) -> Result<(Self, TrainingData)> {
        let m = Self::read(dir)?;
        let on_disk = m.on_disk(dir);
        let data = on_disk.training_data(None, exec)?;
        Ok((m, data))
    }

    /// A view whose instances read from the image files under `dir`.
    pub fn on_disk(&self, dir: &Path) -> Self {
        let mut m = self.clone();
        let side = self.image_shape.1;
        for inst in &mut m.instances {
            if !matches!(inst.transform, Transform::File { .. }) {
                inst.transform = Transform::File { side };
            }
        }
        if m.corpus_root.is_none() || self.instances.iter().any(|i| !matches!(i.transform, Transform::File { .. })) {
            m.corpus_root = Some(dir.to_path_buf());
        }
        m
    }
}

fn write_png(path: &Path, pixels: &[u8], (c, h, w): (usize, usize, usize)) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let res = if c == 1 {
        image::GrayImage::from_raw(w as u32, h as u32, pixels.to_vec())
            .expect("buffer size")
            .save_with_format(path, image::ImageFormat::Png)
    } else {
        let n = h * w;
        let mut inter = Vec::with_capacity(3 * n);
        for i in 0..n {
            for ch in 0..3 {
                inter.push(pixels[ch * n + i]);
            }
        }
        image::RgbImage::from_raw(w as u32, h as u32, inter)
            .expect("buffer size")
            .save_with_format(path, image::ImageFormat::Png)
    };
    res.map_err(|e| Error::io(path, e))
}

/// Read an image file as planar 8-bit `(channels, side, side)`.
fn read_image(path: &Path, channels: usize, side: usize) -> Result<Vec<u8>> {
    let img = image::open(path).map_err(|e| Error::io(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let planar: Vec<f32> = if channels == 1 {
        img.to_luma8().into_raw().iter().map(|&p| p as f32 / 255.0).collect()
    } else {
        let rgb = img.to_rgb8().into_raw();
        let n = w * h;
        let mut v = vec![0f32; 3 * n];
        for i in 0..n {
            for ch in 0..3 {
                v[ch * n + i] = rgb[3 * i + ch] as f32 / 255.0;
            }
        }
        v
    };
    if w == side && h == side {
        return Ok(image_ops::quantize(&planar));
    }
    Ok(image_ops::quantize(&image_ops::resize(&planar, channels, h, w, side)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_codec_round_trips() {
        for t in [
            Transform::Color { base: 12, fg: [1, 2, 3], bg: [250, 251, 252] },
            Transform::Rotate { base: 7, degrees: 22.0 },
            Transform::File { side: 64 },
        ] {
            assert_eq!(Transform::decode(&t.encode()).unwrap(), t);
        }
        assert!(Transform::decode("rotate=3").is_err());
    }
}
