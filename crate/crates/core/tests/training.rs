mod common;

use hduva_core::model::{HduvaModel, Variant};
use hduva_core::training::{fit, write_metrics_csv, Checkpoint, DomainSet, Selection, TrainConfig};
use hduva_core::{Error, Execution};

// trainable tensors only; batch-norm running statistics move in training mode
fn tensors_of(ck: &Checkpoint) -> Vec<(String, Vec<f32>)> {
    ck.tensors()
        .iter()
        .filter(|(k, _)| !k.starts_with("buffer:"))
        .map(|(k, t)| (k.clone(), t.flatten_all().unwrap().to_dtype(candle_core::DType::F32).unwrap().to_vec1().unwrap()))
        .collect()
}

#[test]
fn fit_is_deterministic_for_a_seed() {
    let data = common::color_data(3, 6, 2, 1);
    let model = common::small_model(Variant::Hduva, 3);
    let a = fit(&data, &model, &common::quick_train(2)).unwrap();
    let b = fit(&data, &model, &common::quick_train(2)).unwrap();
    let objs = |o: &hduva_core::training::FitOutcome| o.history.iter().map(|m| m.objective).collect::<Vec<_>>();
    assert_eq!(objs(&a), objs(&b));
    assert_eq!(a.selected.checksum().unwrap(), b.selected.checksum().unwrap());
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let data = common::color_data(3, 6, 2, 2);
    let mut model = common::small_model(Variant::Hduva, 3);
    model.num_classes = data.num_classes;
    model.image_shape = data.image_shape();
    let train = TrainConfig { learning_rate: 0.0, ..common::quick_train(2) };
    let out = fit(&data, &model, &train).unwrap();
    let initial = Checkpoint::capture(&HduvaModel::new(model, train.seed).unwrap(), &train, 0, Vec::new()).unwrap();
    assert_eq!(tensors_of(&initial), tensors_of(&out.selected));
}

#[test]
fn single_epoch_run_records_one_row() {
    let data = common::color_data(3, 6, 2, 3);
    let out = fit(&data, &common::small_model(Variant::Hduva, 3), &common::quick_train(1)).unwrap();
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.selected_epoch, 1);
    assert!(!out.stopped_early);
}

#[test]
fn selection_keeps_the_best_target_objective() {
    let data = common::color_data(3, 6, 2, 4);
    let out = fit(&data, &common::small_model(Variant::Hduva, 3), &common::quick_train(4)).unwrap();
    let best = out.history.iter().map(|m| m.objective_at_target).fold(f64::NEG_INFINITY, f64::max);
    let chosen = out.history[out.selected_epoch - 1].objective_at_target;
    assert!(chosen >= best - 1e-6 * best.abs().max(1.0), "chosen {chosen} best {best}");
    assert_eq!(out.selected.epoch, out.selected_epoch);
}

#[test]
fn patience_stops_training_early() {
    let data = common::color_data(3, 6, 2, 5);
    let train = TrainConfig { learning_rate: 0.0, early_stop_patience: 1, ..common::quick_train(12) };
    let out = fit(&data, &common::small_model(Variant::Hduva, 3), &train).unwrap();
    assert!(out.stopped_early);
    assert!(out.history.len() < 12);
    assert_eq!(out.history.len(), out.selected_epoch + 1);
}

#[test]
fn validation_accuracy_selection_needs_validation_data() {
    let data = common::color_data(3, 6, 2, 6);
    let train = TrainConfig { selection: Selection::ValAccuracy, ..common::quick_train(1) };
    let err = fit(&data, &common::small_model(Variant::Hduva, 3), &train).unwrap_err();
    assert!(matches!(err, Error::Argument(_)));
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let data = common::color_data(3, 6, 2, 7);
    let out = fit(&data, &common::small_model(Variant::Hduva, 3), &common::quick_train(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.hdck");
    out.selected.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.checksum().unwrap(), out.selected.checksum().unwrap());
    let (x, _) = data.domains[0].batch(&[0, 1, 2, 3]).unwrap();
    assert_eq!(out.model().unwrap().predict(&x).unwrap(), back.to_model().unwrap().predict(&x).unwrap());

    let missing = Checkpoint::load(&dir.path().join("absent.hdck")).unwrap_err();
    assert!(matches!(missing, Error::MissingArtifact(_)));
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

#[test]
fn unlabeled_rows_stay_out_of_aggregation_and_mmd() {
    let mut data = common::color_data(3, 6, 2, 8);
    data.unlabeled = Some(DomainSet::pool("unlabeled", &data.domains).unwrap());
    let out = fit(&data, &common::small_model(Variant::Hduva, 3), &common::quick_train(1)).unwrap();
    let c = &out.counters;
    assert!(c.unlabeled_rows > 0);
    assert_eq!(c.unlabeled_rows_in_mmd, 0);
    assert_eq!(c.unlabeled_rows_in_aggregated_topic, 0);
    assert!(c.labeled_rows_in_mmd > 0);
}

#[test]
fn deep_all_variant_trains_through_fit() {
    let data = common::color_data(3, 6, 2, 9);
    let out = fit(&data, &common::small_model(Variant::DeepAll, 3), &common::quick_train(2)).unwrap();
    assert_eq!(out.selected.variant(), Variant::DeepAll);
    assert!(out.model().unwrap().conditional_generate(
        &data.domains[0].batch(&[0]).unwrap().0,
        &[0, 1],
        &mut hduva_core::model::Noise::new(0)
    ).is_err());
}

#[test]
fn metrics_csv_has_one_row_per_epoch() {
    let data = common::color_data(3, 6, 2, 10);
    let out = fit(&data, &common::small_model(Variant::Hduva, 3), &common::quick_train(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    write_metrics_csv(&path, &out.history).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert!(reader.headers().unwrap().iter().any(|h| h == "epoch"));
    assert_eq!(reader.records().count(), 3);
}

#[test]
fn parallel_and_sequential_decoding_agree() {
    let (m, source) = common::color_toy(3, 4, 11);
    let a = m.training_data(Some(&source), Execution::Parallel).unwrap();
    let b = m.training_data(Some(&source), Execution::Sequential).unwrap();
    assert_eq!(a.content_hash(), b.content_hash());
}
