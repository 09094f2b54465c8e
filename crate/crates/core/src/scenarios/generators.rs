use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::palette::{PaletteName, PaletteSpec};
use super::source::BaseSource;
use super::{DomainInfo, Instance, ScenarioManifest, Split, Transform};
use crate::error::{Error, Result};
use crate::parallel::chunk_seed;

pub const GENERATOR_VERSION: &str = "hduva-scenarios-1";

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(chunk_seed(seed, stream))
}

/// `k` distinct eligible base indices, in sampled order.
fn sample_base(source: &BaseSource, max_classes: Option<usize>, k: usize, seed: u64, stream: u64) -> Result<Vec<usize>> {
    let eligible = source.eligible(max_classes);
    if eligible.len() < k {
        return Err(Error::arg(format!(
            "base source has {} eligible images, {k} requested",
            eligible.len()
        )));
    }
    let picks = index::sample(&mut rng(seed, stream), eligible.len(), k);
    Ok(picks.into_iter().map(|i| eligible[i]).collect())
}

fn check_side(source: &BaseSource, side: Option<usize>) -> Result<usize> {
    let side = side.unwrap_or(source.side());
    if side < 14 {
        return Err(Error::arg(format!("image side {side} is below the 14-pixel minimum")));
    }
    Ok(side)
}

fn classes(source: &BaseSource, max_classes: Option<usize>) -> Result<usize> {
    match max_classes {
        Some(c) if c == 0 || c > source.num_classes() => Err(Error::arg(format!(
            "class limit {c} outside [1, {}]",
            source.num_classes()
        ))),
        Some(c) => Ok(c),
        None => Ok(source.num_classes()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorHierarchicalParams {
    pub per_subdomain: usize,
    /// Keep only labels below this bound.
    pub max_classes: Option<usize>,
    /// Output side length (resampled); the source side when `None`.
    pub side: Option<usize>,
    /// Extra unlabelled instances per nominal domain (split `semi`).
    pub semi_per_domain: usize,
}

impl Default for ColorHierarchicalParams {
    fn default() -> Self {
        Self {
            per_subdomain: 1000,
            max_classes: None,
            side: None,
            semi_per_domain: 0,
        }
    }
}

/// Three nominal domains of two color sub-domains each; every sub-domain
/// colors its own random sample of base images.
pub fn gen_color_hierarchical(source: &BaseSource, params: &ColorHierarchicalParams, seed: u64) -> Result<ScenarioManifest> {
    let side = check_side(source, params.side)?;
    let num_classes = classes(source, params.max_classes)?;
    let palette = PaletteSpec::new(PaletteName::ThreeDomainBasic);
    let mut instances = Vec::new();
    let mut domains = Vec::new();
    for d in 0..3 {
        let name = format!("d{}", d + 1);
        for sub in 0..2 {
            let scheme = 2 * d + sub;
            let (fg, bg) = palette.scheme(scheme);
            let base = sample_base(source, params.max_classes, params.per_subdomain, seed, scheme as u64)?;
            for b in base {
                instances.push(Instance {
                    image_path: format!("images/scheme{}/{b:06}.png", scheme + 1),
                    class_label: source.label(b),
                    nominal_domain: name.clone(),
                    sub_domain: format!("{name}s{}", sub + 1),
                    transform: Transform::Color { base: b, fg, bg },
                    split: Split::Train,
                });
            }
        }
        if params.semi_per_domain > 0 {
            let base = sample_base(source, params.max_classes, params.semi_per_domain, seed, 100 + d as u64)?;
            let (fg, bg) = palette.scheme(2 * d);
            for b in base {
                instances.push(Instance {
                    image_path: format!("images/semi{}/{b:06}.png", d + 1),
                    class_label: source.label(b),
                    nominal_domain: name.clone(),
                    sub_domain: format!("{name}s1"),
                    transform: Transform::Color { base: b, fg, bg },
                    split: Split::Semi,
                });
            }
        }
        domains.push(DomainInfo { name, bridge: false });
    }
    let m = ScenarioManifest {
        scenario_id: "color-hierarchical".into(),
        seed,
        generator_version: GENERATOR_VERSION.into(),
        source: source.descriptor(),
        num_classes,
        image_shape: (3, side, side),
        domains,
        palette: Some(palette),
        corpus_root: None,
        instances,
    };
    m.validate()?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialParams {
    pub per_subdomain: usize,
    pub max_classes: Option<usize>,
    pub side: Option<usize>,
    /// Fraction of each nominal domain marked `train`; the rest is `val`.
    pub train_fraction: f64,
}

impl Default for SequentialParams {
    fn default() -> Self {
        Self {
            per_subdomain: 1000,
            max_classes: None,
            side: None,
            train_fraction: 0.5,
        }
    }
}

/// Seven zipped color schemes split into nominal domains {1-3}, {3-5}, {5-7}.
/// The shared schemes 3 and 5 reuse the same colored images in both domains;
/// the middle domain is a bridge.
pub fn gen_color_sequential(
    source: &BaseSource,
    palette: &PaletteSpec,
    params: &SequentialParams,
    seed: u64,
) -> Result<ScenarioManifest> {
    if palette.len() != 7 || palette.foreground.len() != 7 {
        return Err(Error::arg("sequential scenario needs a 7-scheme palette"));
    }
    if !(params.train_fraction > 0.0 && params.train_fraction < 1.0) {
        return Err(Error::arg("train_fraction must lie in (0, 1)"));
    }
    let side = check_side(source, params.side)?;
    let num_classes = classes(source, params.max_classes)?;
    // one base sample per owning domain; scheme k belongs to the first domain containing it
    let subsets: Vec<Vec<usize>> = (0..3)
        .map(|d| sample_base(source, params.max_classes, params.per_subdomain, seed, d as u64))
        .collect::<Result<_>>()?;
    let owner = |scheme: usize| match scheme {
        0..=2 => 0,
        3 | 4 => 1,
        _ => 2,
    };
    let mut instances = Vec::new();
    let mut domains = Vec::new();
    for d in 0..3usize {
        let name = format!("d{}", d + 1);
        let mut rows = Vec::new();
        for scheme in 2 * d..2 * d + 3 {
            let (fg, bg) = palette.scheme(scheme);
            for &b in &subsets[owner(scheme)] {
                rows.push(Instance {
                    image_path: format!("images/scheme{}/{b:06}.png", scheme + 1),
                    class_label: source.label(b),
                    nominal_domain: name.clone(),
                    sub_domain: format!("scheme{}", scheme + 1),
                    transform: Transform::Color { base: b, fg, bg },
                    split: Split::Val,
                });
            }
        }
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut rng(seed, 1000 + d as u64));
        let n_train = (rows.len() as f64 * params.train_fraction).round() as usize;
        for &i in &order[..n_train] {
            rows[i].split = Split::Train;
        }
        instances.extend(rows);
        domains.push(DomainInfo { name, bridge: d == 1 });
    }
    let m = ScenarioManifest {
        scenario_id: format!("color-sequential-{}", palette_id(palette.name)),
        seed,
        generator_version: GENERATOR_VERSION.into(),
        source: source.descriptor(),
        num_classes,
        image_shape: (3, side, side),
        domains,
        palette: Some(palette.clone()),
        corpus_root: None,
        instances,
    };
    m.validate()?;
    Ok(m)
}

fn palette_id(p: PaletteName) -> &'static str {
    match p {
        PaletteName::Vlag => "vlag",
        PaletteName::RedDiverging => "red-diverging",
        PaletteName::ThreeDomainBasic => "three-domain-basic",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotatedMode {
    /// Test angles rendered from a separate sample of `per_angle` images.
    Workshop,
    /// Test angles rendered from every base image.
    Erratum,
}

impl std::str::FromStr for RotatedMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "workshop" => Ok(RotatedMode::Workshop),
            "erratum" => Ok(RotatedMode::Erratum),
            _ => Err(Error::arg(format!("unknown mode `{s}` (expected workshop or erratum)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotatedParams {
    pub mode: RotatedMode,
    pub per_angle: usize,
    pub max_classes: Option<usize>,
    pub side: Option<usize>,
    pub domain_angles: Vec<Vec<f64>>,
    pub test_angles: Vec<f64>,
}

impl RotatedParams {
    pub fn new(mode: RotatedMode) -> Self {
        Self {
            mode,
            per_angle: 1000,
            max_classes: None,
            side: None,
            domain_angles: vec![vec![15.0, 30.0, 45.0], vec![30.0, 45.0, 60.0]],
            test_angles: vec![0.0, 22.0, 75.0],
        }
    }
}

/// Rotated digits with overlapping angles between the training domains.
/// Every training domain rotates the same base subset, so shared angles give
/// identical images.
pub fn gen_rotated_overlap(source: &BaseSource, params: &RotatedParams, seed: u64) -> Result<ScenarioManifest> {
    let side = check_side(source, params.side)?;
    let num_classes = classes(source, params.max_classes)?;
    let base = sample_base(source, params.max_classes, params.per_angle, seed, 0)?;
    let mut instances = Vec::new();
    let mut domains = Vec::new();
    let angle_tag = |a: f64| format!("rot{a}");
    for (d, angles) in params.domain_angles.iter().enumerate() {
        let name = format!("d{}", d + 1);
        for &a in angles {
            for &b in &base {
                instances.push(Instance {
                    image_path: format!("images/{}/{b:06}.png", angle_tag(a)),
                    class_label: source.label(b),
                    nominal_domain: name.clone(),
                    sub_domain: angle_tag(a),
                    transform: Transform::Rotate { base: b, degrees: a },
                    split: Split::Train,
                });
            }
        }
        domains.push(DomainInfo { name, bridge: false });
    }
    let test_base = match params.mode {
        RotatedMode::Workshop => sample_base(source, params.max_classes, params.per_angle, seed, 1)?,
        RotatedMode::Erratum => source.eligible(params.max_classes),
    };
    for &a in &params.test_angles {
        for &b in &test_base {
            instances.push(Instance {
                image_path: format!("images/test_{}/{b:06}.png", angle_tag(a)),
                class_label: source.label(b),
                nominal_domain: "test".into(),
                sub_domain: angle_tag(a),
                transform: Transform::Rotate { base: b, degrees: a },
                split: Split::Test,
            });
        }
    }
    domains.push(DomainInfo { name: "test".into(), bridge: false });
    let mode = match params.mode {
        RotatedMode::Workshop => "workshop",
        RotatedMode::Erratum => "erratum",
    };
    let m = ScenarioManifest {
        scenario_id: format!("rotated-overlap-{mode}"),
        seed,
        generator_version: GENERATOR_VERSION.into(),
        source: source.descriptor(),
        num_classes,
        image_shape: (1, side, side),
        domains,
        palette: None,
        corpus_root: None,
        instances,
    };
    m.validate()?;
    Ok(m)
}
