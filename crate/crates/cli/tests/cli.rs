use std::path::Path;
use std::process::{Command, Output};

use nltt::io::save_image;
use nltt::DenseTensor;

fn nltt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nltt")).args(args).output().unwrap()
}

fn texture(path: &Path) {
    let t = DenseTensor::from_fn(&[24, 24, 3], |i| ((i[0] % 6) * 30 + (i[1] % 6) * 9 + i[2] * 40) as f64).unwrap();
    save_image(&t, path).unwrap();
}

#[test]
fn certify_prints_one_report_per_check() {
    let out = nltt(&["certify", "--shape", "4,4,3,6", "--groups", "8", "--pairs", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 8 * 3 + 5);
    assert!(lines.iter().all(|l| l["slack"].as_f64().unwrap() >= -1e-9));
}

#[test]
fn metrics_of_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.png");
    texture(&p);
    let p = p.to_str().unwrap();
    let out = nltt(&["metrics", "--truth", p, "--est", p]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["psnr_db"], "inf");
    assert!((v["ssim"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn complete_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    texture(&input);
    let out_dir = dir.path().join("out");
    let out = nltt(&[
        "complete",
        "--input",
        input.to_str().unwrap(),
        "--sr",
        "0.5",
        "--cube-size",
        "8",
        "--similar",
        "6",
        "--window",
        "none",
        "--custom-grouping",
        "--max-iter",
        "50",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("\"nltt\" beta=0.1 psnr="));
    for f in ["completed.png", "observed.png", "completed.dtr1", "report.json", "timings.json", "traces/group_0000.csv"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
}

#[test]
fn parameter_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    texture(&input);
    let input = input.to_str().unwrap();
    let out = nltt(&["complete", "--input", input, "--sr", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampling rate"));
    let out = nltt(&["complete", "--input", input, "--cube-size", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("custom_grouping"));
    let out = nltt(&["complete"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_not_a_parameter_error() {
    let out = nltt(&["complete", "--input", "/nonexistent/x.png"]);
    assert_eq!(out.status.code(), Some(1));
}
