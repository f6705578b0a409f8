//! End-to-end tests of the `kopath` binary: exit codes, the full pipeline,
//! run manifests, and byte-level reproducibility across reruns and thread
//! counts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kopath(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kopath"))
        .args(args)
        .current_dir(dir)
        .env_remove("KOPATH_THREADS")
        .output()
        .expect("spawn kopath")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed (status {:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn manifest_of(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".manifest.json");
    PathBuf::from(os)
}

#[test]
fn unknown_flag_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = kopath(&["lambda", "--data", "checkerboard:100", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_data_spec_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = kopath(&["lambda", "--data", "checkerboard", "--out", "l.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "expected a usage synopsis, got:\n{err}");
}

#[test]
fn plot_requires_exactly_one_input_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = kopath(&["plot", "--out", "x.svg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = kopath(
        &["plot", "--lambda", "a.csv", "--schedule", "cond-ot", "--out", "x.svg"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = kopath(&["optimize", "--lambda", "absent.csv", "--out", "ko.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_passes_on_gaussian_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = kopath(
        &["verify", "--data", "gaussian:300:8", "--k", "30", "--all", "--out", "verify.json"],
        dir.path(),
    );
    assert_ok(&out, "verify");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("all 9 checks passed"), "unexpected output:\n{stdout}");
    assert!(dir.path().join("verify.json").exists());
    assert!(manifest_of(&dir.path().join("verify.json")).exists());
}

#[test]
fn full_pipeline_produces_all_artifacts_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let steps: &[(&str, Vec<&str>)] = &[
        (
            "lambda.csv",
            vec![
                "lambda", "--data", "checkerboard:400", "--k", "30", "--grid", "33", "--out",
                "lambda.csv",
            ],
        ),
        (
            "ko.json",
            vec!["optimize", "--lambda", "lambda.csv", "--method", "shoot", "--out", "ko.json"],
        ),
        (
            "energy.json",
            vec!["energy", "--schedule", "ko.json", "--lambda", "lambda.csv", "--out", "energy.json"],
        ),
        ("sched.csv", vec!["schedule", "--schedule", "ko.json", "--out", "sched.csv"]),
        (
            "model.bin",
            vec![
                "train2d", "--data", "checkerboard:400", "--schedule", "cond-ot", "--steps", "50",
                "--out", "model.bin",
            ],
        ),
        (
            "samples.csv",
            vec![
                "sample", "--model", "model.bin", "--n", "1000", "--nfe", "8", "--out",
                "samples.csv",
            ],
        ),
        ("lambda.svg", vec!["plot", "--lambda", "lambda.csv", "--out", "lambda.svg"]),
        (
            "sched.svg",
            vec!["plot", "--schedule", "cond-ot", "--schedule", "ko.json", "--out", "sched.svg"],
        ),
    ];
    for (primary, args) in steps {
        let out = kopath(args, d);
        assert_ok(&out, &args.join(" "));
        let path = d.join(primary);
        assert!(path.exists(), "{primary} missing");
        assert!(manifest_of(&path).exists(), "{primary} manifest missing");
    }

    // Schedule CSVs round-trip through the energy command.
    let out = kopath(&["energy", "--schedule", "sched.csv", "--out", "energy2.json"], d);
    assert_ok(&out, "energy on exported csv");

    // Manifests record digests that match the files on disk.
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&manifest_of(&d.join("ko.json")))).unwrap();
    assert_eq!(manifest["command"], "optimize");
    let listed = manifest["outputs"][0]["sha256"].as_str().unwrap();
    let actual = {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(read(&d.join("ko.json")));
        format!("{:x}", h.finalize())
    };
    assert_eq!(listed, actual, "manifest digest does not match ko.json");
}

#[test]
fn reruns_and_thread_counts_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = [
        "lambda", "--data", "checkerboard:400", "--k", "30", "--grid", "33", "--seed", "7",
    ];

    let mut one = base.to_vec();
    one.extend(["--threads", "1", "--out", "one.csv"]);
    assert_ok(&kopath(&one, d), "lambda --threads 1");

    let mut again = base.to_vec();
    again.extend(["--threads", "1", "--out", "again.csv"]);
    assert_ok(&kopath(&again, d), "lambda rerun");

    // Thread count comes from the environment when the flag is absent.
    let mut multi = base.to_vec();
    multi.extend(["--out", "multi.csv"]);
    let out = Command::new(env!("CARGO_BIN_EXE_kopath"))
        .args(&multi)
        .current_dir(d)
        .env("KOPATH_THREADS", "3")
        .output()
        .expect("spawn kopath");
    assert_ok(&out, "lambda KOPATH_THREADS=3");

    let bytes = read(&d.join("one.csv"));
    assert_eq!(bytes, read(&d.join("again.csv")), "rerun changed lambda output");
    assert_eq!(bytes, read(&d.join("multi.csv")), "thread count changed lambda output");

    // The training stage is deterministic end to end as well.
    for name in ["m1.bin", "m2.bin"] {
        let out = kopath(
            &[
                "train2d", "--data", "gaussian:200:2", "--steps", "40", "--seed", "3", "--out",
                name,
            ],
            d,
        );
        assert_ok(&out, "train2d");
    }
    assert_eq!(read(&d.join("m1.bin")), read(&d.join("m2.bin")), "training is not reproducible");
}

#[test]
fn sample_reports_divergence_against_reference_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = kopath(
        &[
            "train2d", "--data", "checkerboard:400", "--steps", "40", "--out", "model.bin",
        ],
        d,
    );
    assert_ok(&out, "train2d");
    let out = kopath(
        &[
            "sample", "--model", "model.bin", "--n", "1000", "--nfe", "4", "--data",
            "checkerboard:400", "--out", "s.csv",
        ],
        d,
    );
    assert_ok(&out, "sample with reference");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("energy distance"), "missing divergence report:\n{stdout}");
}
