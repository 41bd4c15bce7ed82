use std::path::Path;
use std::process::{Command, Output};

fn nvnmr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvnmr"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn empty_scenario_is_a_config_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.json"), "{}").unwrap();
    let out = nvnmr(
        &["scenario", "--config", "empty.json", "--out", "results"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!dir.path().join("results").exists());
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"scenario": "fig2-generator", "bogus": 1}"#,
    )
    .unwrap();
    let out = nvnmr(
        &["scenario", "--config", "c.json", "--out", "results"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("results").exists());
}

#[test]
fn missing_input_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvnmr(
        &["spectrum", "--input", "nope.csv", "--out", "results"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn malformed_input_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "depth_nm,broadening_hz\n2,abc\n").unwrap();
    let out = nvnmr(
        &["diffusion-fit", "--input", "d.csv", "--out", "results"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("results").exists());
}

#[test]
fn scenario_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out_dir in ["a", "b"] {
        let out = nvnmr(
            &[
                "scenario",
                "--preset",
                "fig2-generator",
                "--seed",
                "17",
                "--out",
                out_dir,
            ],
            dir.path(),
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let a = read_dir_sorted(&dir.path().join("a"));
    let b = read_dir_sorted(&dir.path().join("b"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn summary_follows_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvnmr(
        &["scenario", "--preset", "fig3-chemshift", "--out", "s"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("s/summary.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    nvnmr::scenario::check_summary_schema(&doc).unwrap();
    assert_eq!(doc["scenario"], "fig3-chemshift");
}

#[test]
fn plan_and_spectrum_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("plan.json"),
        r#"{"f_low_hz": 1699000, "f_high_hz": 1704000, "fold_index": 201, "n_samples": 512}"#,
    )
    .unwrap();
    let out = nvnmr(&["plan", "--config", "plan.json", "--out", "p"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("p/plan.json")).unwrap())
            .unwrap();
    let fs = plan["plan"]["fs_hz"].as_f64().unwrap();
    assert!((fs - 16990.0).abs() < 1e-6, "{plan}");

    let out = nvnmr(&["correlate", "--out", "c"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = nvnmr(
        &["spectrum", "--input", "c/correlation.csv", "--out", "s"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("s/fit.json").is_file());
    assert!(dir.path().join("s/spectrum.csv").is_file());
}

#[test]
fn json_format_switches_tabular_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvnmr(&["filter", "--format", "json", "--out", "f"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let names: Vec<String> = read_dir_sorted(&dir.path().join("f"))
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    assert!(names.iter().all(|n| n.ends_with(".json")), "{names:?}");
}
