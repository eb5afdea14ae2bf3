use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use cavitor::recording::BoundaryRecording;

fn cavitor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavitor")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cavitor(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `(T, l2w_rel, h1_rel, energy_res)` rows.
fn metrics(path: &Path) -> Vec<[f64; 4]> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["T", "l2w_rel", "h1_rel", "energy_res"]);
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            std::array::from_fn(|i| r[i].parse().unwrap())
        })
        .collect()
}

#[test]
fn spectral_forward_of_eigenmode_is_a_cosine() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("rec.bin");
    ok(&[
        "forward", "--geometry", "square", "--phantom", "eigen:1,2", "--detectors", "sides:bottom:8", "--duration", "4",
        "--dt", "0.05", "--out", p(&rec),
    ]);
    let data = BoundaryRecording::read(&rec).unwrap();
    let (x, y) = data.detectors()[0];
    assert_eq!((x, y), (0.0, 0.0));
    let amplitude = 2.0 / PI;
    for (j, v) in data.trace(0).iter().enumerate() {
        let t = j as f64 * 0.05;
        assert!((v - amplitude * (5f64.sqrt() * t).cos()).abs() < 1e-12, "t = {t}");
    }
    assert!(dir.path().join("rec.bin.provenance.toml").exists());
}

#[test]
fn longer_horizon_reconstructs_disk_better_and_reruns_from_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("disk.bin");
    ok(&[
        "forward", "--geometry", "disk", "--solver", "fdtd", "--resolution", "48", "--detectors", "full:512", "--duration",
        "10.6", "--dt", "0.01325", "--out", p(&rec),
    ]);
    let mut errors = Vec::new();
    for t in ["5.3", "10.6"] {
        let out = dir.path().join(format!("report-{t}"));
        ok(&["reconstruct", "--data", p(&rec), "--T", t, "--resolution", "48", "--phantom", "three-bumps", "--out", p(&out)]);
        for name in ["reconstruction.field", "residual.pgm", "run.toml", "provenance.toml"] {
            assert!(out.join(name).exists(), "{name}");
        }
        errors.push(metrics(&out.join("metrics.csv"))[0][1]);
    }
    assert!(errors[1] < errors[0], "{errors:?}");

    let first = dir.path().join("report-10.6");
    let again = dir.path().join("again");
    ok(&["run", "--config", p(&first.join("provenance.toml")), "--out", p(&again)]);
    let (a, b) = (metrics(&first.join("metrics.csv")), metrics(&again.join("metrics.csv")));
    for (x, y) in a[0].iter().zip(&b[0]) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{a:?} vs {b:?}");
    }
}

#[test]
fn sweep_tabulates_every_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("sq.bin");
    ok(&[
        "forward", "--geometry", "square", "--phantom", "eigen:1,2", "--detectors", "sides:bottom+right+top+left:64",
        "--duration", "12", "--dt", "0.05", "--out", p(&rec),
    ]);
    let out = dir.path().join("sweep");
    ok(&["sweep", "--data", p(&rec), "--T", "3,6,12", "--resolution", "64", "--phantom", "eigen:1,2", "--out", p(&out)]);
    let rows = metrics(&out.join("metrics.csv"));
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![3.0, 6.0, 12.0]);

    let bad = cavitor(&["sweep", "--data", p(&rec), "--T", "6,3", "--out", p(&out)]);
    assert!(!bad.status.success());
}

#[test]
fn bessel_verify_reports_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gaps.csv");
    let stdout = ok(&["bessel-verify", "--m-max", "50", "--k-max", "100", "--out", p(&out)]);
    assert!(stdout.lines().any(|l| l == "violations = 0"), "{stdout}");
    assert!(out.exists());
}

#[test]
fn modes_lists_square_coincidences() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("modes.csv");
    ok(&["modes", "--geometry", "square", "--cap", "9", "--against", "dirichlet", "--out", p(&out)]);
    let table = std::fs::read_to_string(dir.path().join("coincidences.csv")).unwrap();
    assert!(table.lines().any(|l| l.contains("-0.3602530973")), "{table}");
    assert!(std::fs::read_to_string(&out).unwrap().lines().count() > 10);
}

#[test]
fn predict_gives_closed_form_square_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("predict.csv");
    ok(&["predict", "--geometry", "square", "--phantom", "eigen:1,2", "--eps", "0.01", "--caps", "4", "--out", p(&out)]);
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let persistent = reader.headers().unwrap().iter().position(|h| h == "persistent").unwrap();
    let expected = 32.0 / (9.0 * PI * PI);
    for row in reader.records() {
        let row = row.unwrap();
        let value: f64 = row[persistent].parse().unwrap();
        let target = if (&row[0], &row[1]) == ("2", "1") { expected } else { 0.0 };
        assert!((value - target).abs() < 1e-12, "{row:?}");
    }
}

#[test]
fn render_phantom_writes_field_and_image() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.field");
    ok(&["render-phantom", "--geometry", "disk", "--resolution", "32", "--out", p(&out)]);
    let field = cavitor::io::read_field(&out).unwrap();
    assert_eq!(field.values().len(), field.grid().len());
    assert!(dir.path().join("f.pgm").exists());
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let out = cavitor(&["reconstruct", "--data", p(&missing), "--T", "1", "--out", p(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.bin"));

    let out = cavitor(&["forward", "--phantom", "eigen:x", "--out", p(&dir.path().join("r.bin"))]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}
