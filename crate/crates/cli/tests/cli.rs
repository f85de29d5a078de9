use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn mercator(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mercator"))
        .args(args)
        .env_remove("MERCATOR_EMBED_URL")
        .env_remove("MERCATOR_LLM_URL")
        .output()
        .unwrap()
}

fn run_runthrough(out: &Path, cmd: &[&str]) -> Output {
    let config = fixtures().join("runthrough/events.json");
    let dir = fixtures().join("runthrough");
    let mut args = cmd.to_vec();
    args.extend([
        "--config",
        config.to_str().unwrap(),
        "--fixture-dir",
        dir.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    mercator(&args)
}

fn stdout_json(output: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&output.stdout);
    serde_json::from_str(text.lines().last().expect("one line of output")).unwrap()
}

#[test]
fn forecast_writes_reports_for_the_runthrough() {
    let out = tempfile::tempdir().unwrap();
    let output = run_runthrough(out.path(), &["forecast"]);
    assert_eq!(
        output.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let p = stdout_json(&output)["p_yes"].as_f64().unwrap();
    assert!((p - 0.52333).abs() < 5e-4, "{p}");
    let event_dir = out.path().join("us-tariffs-eu-japan");
    for f in [
        "forecast.json",
        "manifest.json",
        "scree.csv",
        "kmeans_clusters.csv",
    ] {
        assert!(event_dir.join(f).is_file(), "{f} missing");
    }
    assert!(out.path().join("summary.md").is_file());
}

#[test]
fn step_commands_report_module_probabilities() {
    let out = tempfile::tempdir().unwrap();
    let cases: [(&[&str], &str, f64); 4] = [
        (&["sna", "pca"], "p_yes", 0.4618),
        (&["sna", "kmeans"], "p_yes", 0.817),
        (&["sna", "zeroshot"], "p_yes", 0.61),
        (&["crowd"], "crowd", 0.1068),
    ];
    for (cmd, key, want) in cases {
        let output = run_runthrough(out.path(), cmd);
        assert_eq!(
            output.status.code(),
            Some(0),
            "{cmd:?}: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        let v = stdout_json(&output);
        let got = if key == "crowd" {
            v["crowd"]["p_final"].as_f64()
        } else {
            v[key].as_f64()
        };
        assert!((got.unwrap() - want).abs() < 5e-4, "{cmd:?}: {v}");
    }
    let output = run_runthrough(out.path(), &["filter"]);
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(stdout_json(&output)["relevant"], 100);
}

#[test]
fn macro_only_run_summarizes_twenty_events() {
    let out = tempfile::tempdir().unwrap();
    let config = fixtures().join("binary20/events.json");
    let output = mercator(&[
        "forecast",
        "--macro-only",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(
        output.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let mut summary = csv::Reader::from_path(out.path().join("summary.csv")).unwrap();
    assert_eq!(summary.records().count(), 20);

    let again = mercator(&[
        "report",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(again.status.code(), Some(0));
}

#[test]
fn prior_only_forecast_exits_4_but_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("events.json");
    std::fs::write(
        &config,
        serde_json::json!({"events": [{
            "id": "quiet",
            "statement": "Nothing happens",
            "kind": "discrete",
            "resolution_date": "2026-01-01",
            "keywords": ["quiet"],
            "window": {"start": "2025-06-01", "end": "2025-06-30"},
            "summary_text": "Nothing happens",
            "macro_p_yes": 0.3,
            "ipf_weights": {"w_lstm": 0.0, "w_sna": 0.5, "w_crowd": 0.1, "w_macro": 0.4}
        }]})
        .to_string(),
    )
    .unwrap();
    let fixtures = dir.path().join("fixtures");
    std::fs::create_dir(&fixtures).unwrap();
    let out = dir.path().join("out");
    let output = mercator(&[
        "forecast",
        "--config",
        config.to_str().unwrap(),
        "--fixture-dir",
        fixtures.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(4));
    assert_eq!(stdout_json(&output)["p_yes"], 0.3);
    assert!(out.join("quiet/forecast.json").is_file());
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("events.json");
    std::fs::write(&config, r#"{"events": [{"id": "x"}]}"#).unwrap();
    let output = mercator(&["forecast", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));

    let missing = mercator(&[
        "crowd",
        "--config",
        fixtures().join("runthrough/events.json").to_str().unwrap(),
        "--event",
        "no-such-event",
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unreachable_embedding_service_exits_3() {
    let out = tempfile::tempdir().unwrap();
    let output = run_runthrough(
        out.path(),
        &[
            "filter",
            "--embed-backend",
            "service",
            "--embed-url",
            "http://127.0.0.1:9",
        ],
    );
    assert_eq!(
        output.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
}
