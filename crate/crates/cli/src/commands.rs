use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use hduva_core::mmd::{gram_blocks, KernelSpec};
use hduva_core::model::Noise;
use hduva_core::scenarios::{
    self, gen_color_hierarchical, gen_color_sequential, gen_rotated_overlap, gen_virtual_hospitals,
    lodo_evaluate, render_lodo_table, shift_auc_evaluate, Algorithm, BaseSource,
    ColorHierarchicalParams, ConstantClassifier, HospitalParams, PaletteSpec, RotatedParams, ScenarioManifest,
    SequentialParams, Split, SyntheticDigits,
};
use hduva_core::training::{fit, write_metrics_csv, Checkpoint, RunConfig};
use hduva_core::{Error, Execution, Result};

use crate::record::RunRecord;
use crate::{
    AucArgs, ConditionalArgs, ConfigArgs, GenScenarioArgs, LodoArgs, PlotArgs, ScenarioName, SourceKind,
    TrainArgs, TwoSampleArgs,
};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn base_source(a: &crate::SourceArgs) -> Result<BaseSource> {
    match a.source {
        SourceKind::Mnist => BaseSource::mnist_default(),
        SourceKind::Synthetic => Ok(BaseSource::synthetic(SyntheticDigits::new(
            a.synthetic_side,
            10,
            a.synthetic_count,
            0,
        )?)),
    }
}

pub fn gen_scenario(a: &GenScenarioArgs, raw: &[String]) -> Result<()> {
    let exec = Execution::default();
    let (manifest, source) = match a.name {
        ScenarioName::VirtualHospitals => {
            let mut p = HospitalParams::default();
            if let Some(c) = &a.corpus {
                p.corpus = c.clone();
            }
            if let Some(s) = a.side {
                p.side = s;
            }
            (gen_virtual_hospitals(&p, a.seed)?, None)
        }
        name => {
            let source = base_source(&a.source)?;
            let m = match name {
                ScenarioName::ColorHierarchical => gen_color_hierarchical(
                    &source,
                    &ColorHierarchicalParams {
                        per_subdomain: a.per_subdomain,
                        max_classes: a.max_classes,
                        side: a.side,
                        semi_per_domain: a.semi_per_domain,
                    },
                    a.seed,
                )?,
                ScenarioName::ColorSequential => gen_color_sequential(
                    &source,
                    &PaletteSpec::new(a.palette.parse()?),
                    &SequentialParams {
                        per_subdomain: a.per_subdomain,
                        max_classes: a.max_classes,
                        side: a.side,
                        ..Default::default()
                    },
                    a.seed,
                )?,
                ScenarioName::RotatedOverlap => {
                    let mut p = RotatedParams::new(a.mode.parse()?);
                    p.per_angle = a.per_subdomain;
                    p.max_classes = a.max_classes;
                    p.side = a.side;
                    gen_rotated_overlap(&source, &p, a.seed)?
                }
                ScenarioName::VirtualHospitals => unreachable!(),
            };
            (m, Some(source))
        }
    };
    let sidecar = if manifest.instances.iter().all(|i| matches!(i.transform, scenarios::Transform::File { .. })) {
        // corpus images stay where they are; only the manifest is written
        std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
        let sc = manifest.sidecar(None)?;
        write_text(&a.out.join("manifest.csv"), &String::from_utf8_lossy(&manifest.to_csv()?))?;
        write_text(
            &a.out.join("manifest.json"),
            &serde_json::to_string_pretty(&sc).map_err(|e| Error::State(e.to_string()))?,
        )?;
        sc
    } else {
        manifest.write(&a.out, source.as_ref(), exec)?
    };
    let train = manifest.instances.iter().filter(|i| i.split == Split::Train).count();
    println!("scenario {} ({} instances, {train} train)", manifest.scenario_id, manifest.instances.len());
    println!("manifest hash {}", sidecar.manifest_hash);
    let mut rec = RunRecord::new("gen-scenario", raw);
    rec.manifest_hash = Some(sidecar.manifest_hash.clone());
    rec.output(&a.out.join("manifest.csv"))?;
    rec.output(&a.out.join("manifest.json"))?;
    rec.write(&a.out)?;
    Ok(())
}

/// Config file, then overrides in order. `train.gamma_y` may hold a
/// comma-separated sweep; the returned list has one config per value.
fn resolve_config(a: &ConfigArgs) -> Result<Vec<RunConfig>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(p) = &a.config {
        if !p.exists() {
            return Err(Error::MissingArtifact(p.clone()));
        }
        let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        pairs.extend(RunConfig::parse_text(&text)?);
    }
    for s in &a.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("override `{s}` is not KEY=VALUE")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let sweep: Vec<String> = pairs
        .iter()
        .rev()
        .find(|(k, _)| k == "train.gamma_y")
        .map(|(_, v)| v.split(',').map(|s| s.trim().to_string()).collect())
        .unwrap_or_default();
    let rest: Vec<(&str, &str)> = pairs
        .iter()
        .filter(|(k, _)| k != "train.gamma_y")
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect();
    let mut base = RunConfig::default();
    base.apply(rest)?;
    if sweep.is_empty() {
        return Ok(vec![base]);
    }
    sweep
        .iter()
        .map(|g| {
            let mut c = base.clone();
            c.set("train.gamma_y", g)?;
            Ok(c)
        })
        .collect()
}

pub fn train(a: &TrainArgs, raw: &[String]) -> Result<()> {
    let configs = resolve_config(&a.config)?;
    let (manifest, data) = ScenarioManifest::load_training_data(&a.manifest, Execution::default())?;
    let manifest_hash = manifest.manifest_hash()?;
    let sweep = configs.len() > 1;
    for cfg in configs {
        let out = if sweep {
            a.out.join(format!("gamma_y={}", cfg.train.gamma_y))
        } else {
            a.out.clone()
        };
        std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
        cfg.train.validate()?;
        let result = fit(&data, &cfg.model, &cfg.train)?;
        let ckpt = out.join("checkpoint.hdck");
        let metrics = out.join("metrics.csv");
        let config_path = out.join("config.txt");
        result.selected.save(&ckpt)?;
        write_metrics_csv(&metrics, &result.history)?;
        write_text(&config_path, &cfg.to_text())?;
        let best = &result.history[result.selected_epoch - 1];
        println!(
            "{}: {} epochs, selected epoch {} (objective {:.4}, train accuracy {:.3})",
            out.display(),
            result.history.len(),
            result.selected_epoch,
            best.objective_at_target,
            best.train_accuracy.unwrap_or(f64::NAN)
        );
        let mut rec = RunRecord::new("train", raw);
        rec.config = Some(cfg.to_text());
        rec.manifest_hash = Some(manifest_hash.clone());
        rec.checkpoint_path = Some(ckpt.clone());
        rec.metrics_csv_path = Some(metrics.clone());
        rec.output(&ckpt)?;
        rec.output(&metrics)?;
        rec.output(&config_path)?;
        rec.write(&out)?;
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Argument(format!("cannot parse `{v}` in {what}")))
        })
        .collect()
}

/// Reference rows reported for the rotated-overlap erratum scenario.
const ERRATUM_REFERENCE: &str = "reference (10 seeds, full-scale training): DIVA 0.821 ± 0.007, HDUVA 0.821 ± 0.007\n";

pub fn eval_lodo(a: &LodoArgs, raw: &[String]) -> Result<()> {
    let cfg = resolve_config(&a.config)?.remove(0);
    let algorithm: Algorithm = a.algorithm.parse()?;
    let seeds: Vec<u64> = parse_list("--seeds", &a.seeds)?;
    let (manifest, data) = ScenarioManifest::load_training_data(&a.manifest, Execution::default())?;
    let rows = lodo_evaluate(algorithm, &manifest, &data, &cfg.model, &cfg.train, &seeds)?;
    let mut table = render_lodo_table(&rows);
    if manifest.scenario_id == "rotated-overlap-erratum" {
        table.push_str(ERRATUM_REFERENCE);
    }
    print!("{table}");
    std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let csv_path = a.out.join("lodo.csv");
    let mut csv = String::from("test_domain,mean,sd,n,accuracies\n");
    for r in &rows {
        let accs: Vec<String> = r.accuracies.iter().map(|v| format!("{v:?}")).collect();
        csv.push_str(&format!("{},{:?},{:?},{},{}\n", r.test_domain, r.mean, r.sd, r.accuracies.len(), accs.join(";")));
    }
    write_text(&csv_path, &csv)?;
    let txt = a.out.join("lodo.txt");
    write_text(&txt, &table)?;
    let mut rec = RunRecord::new("eval-lodo", raw);
    rec.config = Some(cfg.to_text());
    rec.manifest_hash = Some(manifest.manifest_hash()?);
    rec.output(&csv_path)?;
    rec.output(&txt)?;
    rec.write(&a.out)?;
    Ok(())
}

/// Sub-domains of `domain` in order of first appearance, as shift sets.
fn shift_sets(manifest: &ScenarioManifest, dir: &Path, domain: &str) -> Result<Vec<hduva_core::training::DomainSet>> {
    let on_disk = manifest.on_disk(dir);
    let mut subs: Vec<&str> = Vec::new();
    for i in manifest.instances.iter().filter(|i| i.nominal_domain == domain) {
        if !subs.contains(&i.sub_domain.as_str()) {
            subs.push(&i.sub_domain);
        }
    }
    if subs.is_empty() {
        return Err(Error::Argument(format!("domain `{domain}` has no instances")));
    }
    subs.iter()
        .map(|s| {
            let mut sub = on_disk.clone();
            sub.instances.retain(|i| i.nominal_domain == domain);
            sub.sub_domain_set(s, None, Execution::default())
        })
        .collect()
}

pub fn eval_auc(a: &AucArgs, raw: &[String]) -> Result<()> {
    let manifest = ScenarioManifest::read(&a.manifest)?;
    let sets = shift_sets(&manifest, &a.manifest, &a.domain)?;
    let (accs, auc) = match (&a.checkpoint, a.constant) {
        (_, Some(c)) => shift_auc_evaluate(&ConstantClassifier(c), &sets, 256)?,
        (Some(p), None) => {
            let model = Checkpoint::load(p)?.to_model()?;
            shift_auc_evaluate(&model, &sets, 256)?
        }
        (None, None) => return Err(Error::Argument("need --checkpoint or --constant".into())),
    };
    let mut table = String::from("shift        accuracy\n");
    let mut csv = String::from("shift,accuracy\n");
    for (s, acc) in sets.iter().zip(&accs) {
        table.push_str(&format!("{:<12} {acc:.3}\n", s.name));
        csv.push_str(&format!("{},{acc:?}\n", s.name));
    }
    table.push_str(&format!("AUC          {auc:.3}\n"));
    csv.push_str(&format!("auc,{auc:?}\n"));
    print!("{table}");
    std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let csv_path = a.out.join("auc.csv");
    write_text(&csv_path, &csv)?;
    let mut rec = RunRecord::new("eval-auc", raw);
    rec.manifest_hash = Some(manifest.manifest_hash()?);
    rec.checkpoint_path = a.checkpoint.clone();
    rec.output(&csv_path)?;
    rec.write(&a.out)?;
    Ok(())
}

pub fn plot_topics(a: &PlotArgs, raw: &[String]) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let (manifest, data) = ScenarioManifest::load_training_data(&a.manifest, Execution::default())?;
    let model = ckpt.to_model()?;
    let plot = scenarios::plot_topics(&model, &data.domains, a.per_domain, a.seed)?;
    write_text(&a.out, &plot.svg)?;
    println!("{} points, silhouette {:.4}", plot.points.len(), plot.silhouette);
    let dir = a.out.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let mut rec = RunRecord::new("plot-topics", raw);
    rec.manifest_hash = Some(manifest.manifest_hash()?);
    rec.checkpoint_path = Some(a.checkpoint.clone());
    rec.output(&a.out)?;
    rec.write(&dir)?;
    Ok(())
}

pub fn gen_conditional(a: &ConditionalArgs, raw: &[String]) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let manifest = ScenarioManifest::read(&a.manifest)?;
    let inst = manifest
        .instances
        .get(a.index)
        .ok_or_else(|| Error::Argument(format!("manifest has no row {}", a.index)))?;
    let labels: Vec<u32> = parse_list("--labels", &a.labels)?;
    let on_disk = manifest.on_disk(&a.manifest);
    let pixels = on_disk.render(&on_disk.instances[a.index], None)?;
    let (c, h, w) = manifest.image_shape;
    let seed_img = Tensor::from_vec(
        pixels.iter().map(|&p| p as f32 / 255.0).collect::<Vec<_>>(),
        (1, c, h, w),
        &Device::Cpu,
    )?;
    let model = ckpt.to_model()?;
    let probs = model.conditional_generate(&seed_img, &labels, &mut Noise::new(a.seed))?;
    let probs: Vec<f32> = probs.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
    // seed image first, then one tile per label, side by side
    let tiles = labels.len() + 1;
    let mut grid = image::RgbImage::new((w * tiles) as u32, h as u32);
    let px = |data: &[f32], t: usize, ch: usize, y: usize, x: usize| -> u8 {
        let plane = if c == 1 { 0 } else { ch };
        (data[t * c * h * w + plane * h * w + y * w + x].clamp(0.0, 1.0) * 255.0).round() as u8
    };
    let seed_f: Vec<f32> = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    for t in 0..tiles {
        for y in 0..h {
            for x in 0..w {
                let rgb = std::array::from_fn(|ch| if t == 0 { px(&seed_f, 0, ch, y, x) } else { px(&probs, t - 1, ch, y, x) });
                grid.put_pixel((t * w + x) as u32, y as u32, image::Rgb(rgb));
            }
        }
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    grid.save_with_format(&a.out, image::ImageFormat::Png).map_err(|e| io_err(&a.out, e))?;
    println!("seed row {} (class {}), {} generated tiles", a.index, inst.class_label, labels.len());
    let dir = a.out.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let mut rec = RunRecord::new("gen-conditional", raw);
    rec.manifest_hash = Some(manifest.manifest_hash()?);
    rec.checkpoint_path = Some(a.checkpoint.clone());
    rec.output(&a.out)?;
    rec.write(&dir)?;
    Ok(())
}

fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Argument(format!("{}: bad number `{v}`", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

pub fn two_sample(a: &TwoSampleArgs) -> Result<()> {
    let x = read_points(&a.x)?;
    let y = read_points(&a.y)?;
    let kernel = KernelSpec::new(parse_list("--bandwidths", &a.bandwidths)?)?;
    let blocks = gram_blocks(&x, &y, &kernel)?;
    let (name, value) = if a.unbiased {
        ("mmd2_unbiased_paired", blocks.mmd2_unbiased_paired()?)
    } else {
        ("mmd2_biased", blocks.mmd2_biased())
    };
    println!("{name} {value:.12e}");
    Ok(())
}
