use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use image::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn native4k(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_native4k"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_bad_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let help = native4k(&["--help"], tmp.path());
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for cmd in ["curate", "bucket", "audit", "rope-diagnose", "wavelet-stats", "loss-curves", "loss-check", "curriculum-plan"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert_eq!(native4k(&["--frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(native4k(&["bogus"], tmp.path()).status.code(), Some(1));
    assert_eq!(native4k(&[], tmp.path()).status.code(), Some(1));
}

#[test]
fn default_config_round_trips_through_the_loader() {
    let tmp = tempfile::tempdir().unwrap();
    let out = native4k(&["--emit-default-config"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    fs::write(tmp.path().join("ref.toml"), &out.stdout).unwrap();
    let run = native4k(&["--config", "ref.toml", "bucket", "--size", "4000x3000"], tmp.path());
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
}

#[test]
fn loss_curves_need_their_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = native4k(&["loss-curves", "--beta-w", "1", "--alpha-c", "0.5"], tmp.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("gamma_s"), "{}", stderr(&missing));

    let ok = native4k(
        &["--output-dir", "o", "loss-curves", "--gamma-s", "5", "--beta-w", "1", "--alpha-c", "0.5"],
        tmp.path(),
    );
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let csv = fs::read_to_string(tmp.path().join("o/loss_curves.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,snr,weight,threshold"));
    assert_eq!(lines.count(), 1000);
}

#[test]
fn inverted_ramp_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = native4k(
        &["rope-diagnose", "--channels", "64", "--ramp-low", "1.25", "--ramp-high", "0.75"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("ramp_low < ramp_high"), "{}", stderr(&out));
}

#[test]
fn rope_diagnose_writes_band_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = native4k(
        &["--output-dir", "r", "rope-diagnose", "--channels", "64", "--ramp-low", "1", "--ramp-high", "32", "--infer-h", "128", "--pattern"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for f in ["rope_bands_height.csv", "rope_bands_width.csv", "rope_drift_height.csv", "rope_pattern.png"] {
        assert!(tmp.path().join("r").join(f).is_file(), "{f}");
    }
    let bands = fs::read_to_string(tmp.path().join("r/rope_bands_height.csv")).unwrap();
    assert_eq!(bands.lines().count(), 33);
}

#[test]
fn loss_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = native4k(
        &["--seed", "3", "loss-check", "--gamma-s", "5", "--beta-w", "1", "--alpha-c", "0.5", "--trials", "5"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn curate_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    GrayImage::from_fn(640, 360, |_, _| image::Luma([rng.gen()]))
        .save(data.join("noisy.png"))
        .unwrap();
    GrayImage::from_fn(640, 360, |_, _| image::Luma([40]))
        .save(data.join("flat.png"))
        .unwrap();
    fs::write(
        data.join("m.jsonl"),
        concat!(
            "{\"id\":\"noisy\",\"path\":\"noisy.png\",\"q_align\":4.6,\"artimuse\":7.0}\n",
            "{\"id\":\"flat\",\"path\":\"flat.png\",\"q_align\":4.6,\"artimuse\":6.0}\n",
            "{\"id\":\"gone\",\"path\":\"missing.png\",\"q_align\":4.6,\"artimuse\":6.0}\n",
        ),
    )
    .unwrap();
    let out = native4k(
        &["--output-dir", "out", "--log-level", "error", "curate", "--manifest", "data/m.jsonl", "--min-pixels", "200000", "--artimuse-percentile", "100"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let curated = fs::read_to_string(tmp.path().join("out/curated.jsonl")).unwrap();
    let rejected = fs::read_to_string(tmp.path().join("out/rejected.jsonl")).unwrap();
    let quarantined = fs::read_to_string(tmp.path().join("out/quarantine/quarantined.jsonl")).unwrap();
    assert!(curated.contains("\"noisy\"") && !curated.contains("\"flat\""));
    assert!(rejected.contains("\"flat\""));
    assert!(quarantined.contains("\"gone\""));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["curated"], 1);

    let escape = native4k(
        &["--output-dir", "out2", "curate", "--manifest", "data/m.jsonl", "--quarantine-dir", "../elsewhere"],
        tmp.path(),
    );
    assert_eq!(escape.status.code(), Some(1));
    assert!(!tmp.path().join("elsewhere").exists());
}

#[test]
fn bucket_and_audit_on_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = native4k(&["--output-dir", "b", "bucket", "--size", "8000x3000"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = fs::read_to_string(tmp.path().join("b/buckets.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains("6336,2624"), "{csv}");

    fs::write(
        tmp.path().join("m.jsonl"),
        "{\"id\":\"a\",\"width\":4096,\"height\":4096}\n{\"id\":\"b\"}\n",
    )
    .unwrap();
    let audit = native4k(&["--output-dir", "a", "audit", "--manifest", "m.jsonl"], tmp.path());
    assert_eq!(audit.status.code(), Some(2), "{}", stderr(&audit));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/audit.json")).unwrap()).unwrap();
    assert_eq!(report["missing_dims"], 1);
}
