use std::path::Path;
use std::process::{Command, Output};

fn hduva(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hduva")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hduva(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    hduva(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SYNTH: [&str; 6] = ["--source", "synthetic", "--synthetic-count", "4000", "--synthetic-side", "16"];

fn hierarchical(dir: &Path) {
    let mut args = vec!["gen-scenario", "--name", "color-hierarchical", "--seed", "3", "--per-subdomain", "6", "--max-classes", "3", "--out", p(dir)];
    args.extend(SYNTH);
    ok(&args);
}

fn small_model_flags() -> Vec<&'static str> {
    vec![
        "--model.zx_dim", "4", "--model.zy_dim", "4", "--model.zd_dim", "4",
        "--model.encoder_channels", "4,4", "--model.decoder_channels", "4", "--model.prior_hidden", "8",
        "--train.batch_size", "8", "--train.warmup_epochs", "1", "--train.early_stop_patience", "0",
    ]
}

#[test]
fn rotated_workshop_manifest_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let mut args = vec!["gen-scenario", "--name", "rotated-overlap", "--mode", "workshop", "--seed", "7", "--out", p(dir)];
        args.extend(["--source", "synthetic", "--synthetic-count", "60000", "--synthetic-side", "28"]);
        let stdout = ok(&args);
        assert!(stdout.contains("6000 train"), "{stdout}");
    }
    let csv_a = std::fs::read(a.join("manifest.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("manifest.csv")).unwrap());
    let json = |d: &Path| -> serde_json::Value { serde_json::from_slice(&std::fs::read(d.join("manifest.json")).unwrap()).unwrap() };
    assert_eq!(json(&a)["content_hash"], json(&b)["content_hash"]);
    assert!(json(&a)["content_hash"].is_string());
}

#[test]
fn argument_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["gen-scenario", "--name", "no-such-scenario", "--out", p(tmp.path())]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    let out = tmp.path().join("o");
    assert_eq!(code(&["gen-scenario", "--name", "color-sequential", "--palette", "plaid", "--out", p(&out), "--source", "synthetic"]), 2);
}

#[test]
fn missing_inputs_map_to_their_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scen");
    hierarchical(&scen);
    let absent = tmp.path().join("absent.hdck");
    let out = tmp.path().join("plot.svg");
    assert_eq!(code(&["plot-topics", "--checkpoint", p(&absent), "--manifest", p(&scen), "--out", p(&out)]), 5);
    assert_eq!(code(&["train", "--manifest", p(&tmp.path().join("nowhere")), "--out", p(&out)]), 5);
    let blocked = tmp.path().join("file");
    std::fs::write(&blocked, "x").unwrap();
    // the output directory cannot be created below a regular file
    assert_eq!(code(&["gen-scenario", "--name", "color-hierarchical", "--per-subdomain", "1", "--out", p(&blocked.join("sub")), "--source", "synthetic"]), 3);
}

#[test]
fn train_then_inspect_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scen");
    hierarchical(&scen);
    let run = tmp.path().join("run");
    let mut args = vec!["train", "--manifest", p(&scen), "--out", p(&run), "--train.max_epochs", "2", "--weak.mmd", "off"];
    args.extend(small_model_flags());
    ok(&args);
    for f in ["checkpoint.hdck", "metrics.csv", "config.txt", "run_record.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let record: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("run_record.json")).unwrap()).unwrap();
    assert!(record["run_id"].is_string());
    let config = std::fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(config.contains("weak.mmd = off"), "{config}");

    let ck = run.join("checkpoint.hdck");
    let svg = tmp.path().join("topics.svg");
    let stdout = ok(&["plot-topics", "--checkpoint", p(&ck), "--manifest", p(&scen), "--out", p(&svg), "--per-domain", "5"]);
    assert!(stdout.contains("silhouette"));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let png = tmp.path().join("grid.png");
    ok(&["gen-conditional", "--checkpoint", p(&ck), "--manifest", p(&scen), "--labels", "0,1,2", "--out", p(&png)]);
    let img = image::open(&png).unwrap();
    assert_eq!(img.width(), 16 * 4);
    assert_eq!(img.height(), 16);
}

#[test]
fn gamma_y_sweep_writes_one_run_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scen");
    hierarchical(&scen);
    let run = tmp.path().join("sweep");
    let mut args = vec!["train", "--manifest", p(&scen), "--out", p(&run), "--train.max_epochs", "1", "--train.gamma_y", "1000,100000"];
    args.extend(small_model_flags());
    ok(&args);
    for v in ["gamma_y=1000", "gamma_y=100000"] {
        assert!(run.join(v).join("checkpoint.hdck").exists(), "{v}");
    }
}

#[test]
fn constant_predictor_auc_and_lodo() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("rot");
    let mut args = vec!["gen-scenario", "--name", "rotated-overlap", "--per-subdomain", "30", "--max-classes", "3", "--out", p(&scen)];
    args.extend(SYNTH);
    ok(&args);
    let auc_dir = tmp.path().join("auc");
    let stdout = ok(&["eval-auc", "--constant", "1", "--manifest", p(&scen), "--out", p(&auc_dir)]);
    assert!(stdout.to_lowercase().contains("auc"), "{stdout}");

    let seq = tmp.path().join("seq");
    let mut args = vec!["gen-scenario", "--name", "color-sequential", "--per-subdomain", "10", "--max-classes", "3", "--out", p(&seq)];
    args.extend(SYNTH);
    ok(&args);
    let lodo = tmp.path().join("lodo");
    ok(&["eval-lodo", "--manifest", p(&seq), "--algorithm", "constant:0", "--seeds", "0,1,2", "--out", p(&lodo)]);
    let table = std::fs::read_to_string(lodo.join("lodo.txt")).unwrap();
    assert!(table.contains("d1") && table.contains("d3") && !table.contains("d2"), "{table}");
}

#[test]
fn two_sample_reports_the_worked_example() {
    let tmp = tempfile::tempdir().unwrap();
    let (x, y) = (tmp.path().join("x.csv"), tmp.path().join("y.csv"));
    std::fs::write(&x, "0\n2\n").unwrap();
    std::fs::write(&y, "1\n1\n").unwrap();
    let stdout = ok(&["two-sample", "--x", p(&x), "--y", p(&y), "--bandwidths", "1"]);
    let value: f64 = stdout.split_whitespace().last().unwrap().parse().unwrap();
    // two points at distance 2 vs a doubled point at their midpoint
    let want = (1.0 + (-4.0f64).exp()) / 2.0 + 1.0 - 2.0 * (-1.0f64).exp();
    assert!((value - want).abs() < 1e-12, "{stdout}");
}
