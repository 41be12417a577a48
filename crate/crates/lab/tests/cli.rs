//! End-to-end runs of the `scim-lab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scim-lab"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn show_config_applies_flags_over_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "seed = 4\nblocks = 500\n").unwrap();
    let out = lab(
        &[
            "show-config",
            "-c",
            "c.toml",
            "--seed",
            "9",
            "-s",
            "epochs=7",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("seed = 9"), "{text}");
    assert!(text.contains("blocks = 500"), "{text}");
    assert!(text.contains("epochs = 7"), "{text}");
}

#[test]
fn unknown_key_fails_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "blockz = 5\n").unwrap();
    let out = lab(&["show-config", "-c", "c.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("blockz"));
}

#[test]
fn sweep_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(
        &[
            "sweep",
            "-s",
            "detectors=[\"jml\"]",
            "-s",
            "snr_db=[3.0, inf]",
            "-s",
            "blocks=1000",
            "--out",
            "res/ber.csv",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("res/ber.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("detector,user,snr_db,bit_errors,bits_tested,ber")
    );
    assert!(lines.next().unwrap().starts_with("jml,1,3,"));
    assert!(lines.next().unwrap().starts_with("jml,2,3,"));
    assert_eq!(lines.next(), Some("jml,1,inf,0,4000,0"));
    assert_eq!(lines.next(), Some("jml,2,inf,0,4000,0"));
    assert_eq!(csv.lines().count(), 5);
    let manifest = std::fs::read_to_string(dir.path().join("res/ber.csv.manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 0"));
    assert!(manifest.contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn deepsic_sweep_without_model_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(
        &["sweep", "-s", "detectors=[\"deepsic\"]", "--fast"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("needs a model"));
}

#[test]
fn trained_bundle_feeds_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let train = lab(
        &[
            "train",
            "-s",
            "epochs=2",
            "-s",
            "samples_per_epoch=400",
            "--out",
            "m.dsib",
        ],
        dir.path(),
    );
    assert!(
        train.status.success(),
        "{}",
        String::from_utf8_lossy(&train.stderr)
    );
    assert!(dir.path().join("m.dsib.history.csv").exists());
    let sweep = lab(
        &[
            "sweep",
            "--model",
            "m.dsib",
            "-s",
            "detectors=[\"deepsic\"]",
            "-s",
            "snr_db=[10.0]",
            "-s",
            "blocks=2000",
        ],
        dir.path(),
    );
    assert!(
        sweep.status.success(),
        "{}",
        String::from_utf8_lossy(&sweep.stderr)
    );
    assert!(stdout(&sweep).contains("deepsic,2,10,"));
}
