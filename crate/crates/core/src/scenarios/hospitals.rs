use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::generators::GENERATOR_VERSION;
use super::source::data_root;
use super::{DomainInfo, Instance, ScenarioManifest, Split, Transform};
use crate::error::{Error, Result};

const TRAIN_HOSPITALS: [&str; 3] = ["C6", "C8", "C9"];
const TEST_HOSPITAL: &str = "C1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HospitalCount {
    pub patients: usize,
    pub images: usize,
    pub infected: usize,
}

/// `(hospital, patients, images, infected)` for the full cell-image corpus.
/// Patient counts are only documented for C1.
pub const EXPECTED_HOSPITAL_COUNTS: [(&str, Option<usize>, usize, usize); 4] = [
    ("C1", Some(90), 14190, 8023),
    ("C6", None, 1748, 1061),
    ("C8", None, 1638, 957),
    ("C9", None, 1964, 1284),
];

#[derive(Debug, Clone, PartialEq)]
pub struct HospitalParams {
    /// Directory holding `Parasitized/` and `Uninfected/`.
    pub corpus: PathBuf,
    pub train_fraction: f64,
    pub side: usize,
}

impl Default for HospitalParams {
    fn default() -> Self {
        Self {
            corpus: data_root().join("malaria").join("cell_images"),
            train_fraction: 0.2,
            side: 64,
        }
    }
}

/// Patient id (`C<n>P<m>`) at the start of a cell-image file name.
pub fn patient_id(file_name: &str) -> Option<&str> {
    let b = file_name.as_bytes();
    if b.first() != Some(&b'C') {
        return None;
    }
    let digits = |from: usize| b[from..].iter().take_while(|c| c.is_ascii_digit()).count();
    let n1 = digits(1);
    if n1 == 0 || b.get(1 + n1) != Some(&b'P') {
        return None;
    }
    let n2 = digits(2 + n1);
    if n2 == 0 {
        return None;
    }
    Some(&file_name[..2 + n1 + n2])
}

/// Virtual hospital: `C` plus the first digit of the patient id.
pub fn hospital_of(patient: &str) -> &str {
    &patient[..2]
}

fn list_pngs(dir: &Path) -> Result<Vec<String>> {
    let rd = std::fs::read_dir(dir).map_err(|e| {
        Error::io(
            dir,
            format!("{e}; download the NIH malaria cell-image corpus and unpack it so that {} exists", dir.display()),
        )
    })?;
    let mut names = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Group cell images by patient into hospitals C1/C6/C8/C9; sample a
/// fraction of C6, C8 and C9 for training and hold out C1 as test.
pub fn gen_virtual_hospitals(params: &HospitalParams, seed: u64) -> Result<ScenarioManifest> {
    if !(params.train_fraction > 0.0 && params.train_fraction <= 1.0) {
        return Err(Error::arg("train_fraction must lie in (0, 1]"));
    }
    let mut by_hospital: BTreeMap<String, Vec<Instance>> = BTreeMap::new();
    for (class, folder) in [(1u32, "Parasitized"), (0u32, "Uninfected")] {
        for name in list_pngs(&params.corpus.join(folder))? {
            let Some(patient) = patient_id(&name) else {
                log::warn!("skipping {name}: no patient id");
                continue;
            };
            let hospital = hospital_of(patient);
            if hospital != TEST_HOSPITAL && !TRAIN_HOSPITALS.contains(&hospital) {
                continue;
            }
            by_hospital.entry(hospital.to_string()).or_default().push(Instance {
                image_path: format!("{folder}/{name}"),
                class_label: class,
                nominal_domain: hospital.to_string(),
                sub_domain: patient.to_string(),
                transform: Transform::File { side: params.side },
                split: if hospital == TEST_HOSPITAL { Split::Test } else { Split::Unused },
            });
        }
    }
    let mut instances = Vec::new();
    let mut domains = Vec::new();
    for (k, h) in TRAIN_HOSPITALS.iter().chain([&TEST_HOSPITAL]).enumerate() {
        let mut rows = by_hospital.remove(*h).unwrap_or_default();
        if rows.is_empty() {
            return Err(Error::io(&params.corpus, format!("no images found for hospital {h}")));
        }
        if *h != TEST_HOSPITAL {
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(crate::parallel::chunk_seed(seed, k as u64)));
            let n = (rows.len() as f64 * params.train_fraction).round() as usize;
            for &i in &order[..n] {
                rows[i].split = Split::Train;
            }
        }
        instances.extend(rows);
        domains.push(DomainInfo { name: h.to_string(), bridge: false });
    }
    let m = ScenarioManifest {
        scenario_id: "malaria-virtual-hospitals".into(),
        seed,
        generator_version: GENERATOR_VERSION.into(),
        source: format!("malaria:{}", params.corpus.display()),
        num_classes: 2,
        image_shape: (3, params.side, params.side),
        domains,
        palette: None,
        corpus_root: Some(params.corpus.clone()),
        instances,
    };
    m.validate()?;
    Ok(m)
}

/// Per-hospital totals over every split.
pub fn hospital_counts(manifest: &ScenarioManifest) -> BTreeMap<String, HospitalCount> {
    let mut patients: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    let mut out: BTreeMap<String, HospitalCount> = BTreeMap::new();
    for i in &manifest.instances {
        let c = out.entry(i.nominal_domain.clone()).or_insert(HospitalCount {
            patients: 0,
            images: 0,
            infected: 0,
        });
        c.images += 1;
        c.infected += i.class_label as usize;
        patients.entry(i.nominal_domain.clone()).or_default().insert(&i.sub_domain);
    }
    for (h, p) in patients {
        out.get_mut(&h).expect("counted").patients = p.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patient_ids() {
        assert_eq!(patient_id("C100P61ThinF_IMG_20150918_144104_cell_162.png"), Some("C100P61"));
        assert_eq!(patient_id("C6NThinF_IMG_1.png"), None);
        assert_eq!(patient_id("Thumbs.db"), None);
        assert_eq!(hospital_of("C100P61"), "C1");
        assert_eq!(hospital_of("C93P54"), "C9");
    }

    #[test]
    fn missing_corpus_is_io_error_with_hint() {
        let params = HospitalParams {
            corpus: PathBuf::from("/nonexistent/cell_images"),
            ..Default::default()
        };
        let err = gen_virtual_hospitals(&params, 0).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("malaria"));
    }
}
