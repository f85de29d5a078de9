use std::fs;
use std::path::{Path, PathBuf};

use mercator_core::corpus::{EventKind, EventRegistry, EventSpec};
use mercator_core::ipf::{EventForecast, Module};
use mercator_core::pipeline::{run_batch, run_pipeline, PipelineOptions};
use mercator_core::report::{
    collect_forecasts, emit_report, emit_summary, file_digest, RunManifest, SummaryRow,
    FORECAST_FILE, MANIFEST_FILE, SUMMARY_CSV,
};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn runthrough() -> (EventSpec, PipelineOptions) {
    let registry = EventRegistry::load(&fixtures().join("runthrough/events.json")).unwrap();
    let options = PipelineOptions {
        fixture_dir: Some(fixtures().join("runthrough")),
        ..Default::default()
    };
    (registry.events[0].clone(), options)
}

fn bare_discrete_event() -> EventSpec {
    serde_json::from_value(serde_json::json!({
        "id": "quiet",
        "statement": "Nothing is reported about this",
        "kind": "discrete",
        "resolution_date": "2026-01-01",
        "keywords": ["quiet"],
        "window": {"start": "2025-06-01", "end": "2025-06-30"},
        "summary_text": "Nothing is reported about this",
        "macro_p_yes": 0.37,
        "ipf_weights": {"w_lstm": 0.0, "w_sna": 0.5, "w_crowd": 0.1, "w_macro": 0.4}
    }))
    .unwrap()
}

#[test]
fn runthrough_bundle_reproduces_final_probability() {
    let (event, options) = runthrough();
    let run = run_pipeline(&event, &options).unwrap();
    let f = &run.forecast;
    assert!((f.p_yes_final - 0.52333).abs() < 5e-4, "{}", f.p_yes_final);
    assert!((f.p_no_final - 0.47667).abs() < 5e-4);
    assert!((f.intermediates["crowd_p_final"] - 0.1068).abs() < 5e-4);
    assert!((f.intermediates["p_sna"] - 0.5773).abs() < 5e-4);
    assert!((f.intermediates["p_pca"] - 0.4618).abs() < 5e-4);
    assert!((f.intermediates["p_kmeans"] - 0.817).abs() < 5e-4);
    assert!((f.intermediates["p_zeroshot"] - 0.61).abs() < 5e-4);
    assert_eq!(f.p_yes_final + f.p_no_final, 1.0);
    assert!(!f.is_abstention_only());
}

#[test]
fn no_articles_and_no_markets_leaves_the_prior_alone() {
    let event = bare_discrete_event();
    let empty = tempfile::tempdir().unwrap();
    let options = PipelineOptions {
        fixture_dir: Some(empty.path().to_path_buf()),
        ..Default::default()
    };
    let run = run_pipeline(&event, &options).unwrap();
    let f = &run.forecast;
    assert_eq!(f.p_yes_final, 0.37);
    assert_eq!(f.effective_weights[&Module::Macro], 1.0);
    assert_eq!(f.effective_weights[&Module::Sna], 0.0);
    assert_eq!(f.effective_weights[&Module::Crowd], 0.0);
    assert!(f.is_abstention_only());
    assert!(f.notes.iter().any(|n| n.contains("sna")));
    assert!(f.notes.iter().any(|n| n.contains("crowd")));
}

#[test]
fn report_files_are_consistent() {
    let (event, options) = runthrough();
    let run = run_pipeline(&event, &options).unwrap();
    let out = tempfile::tempdir().unwrap();
    let manifest = emit_report(&run, out.path()).unwrap();
    let dir = out.path().join(&event.id);

    let text = fs::read_to_string(dir.join(FORECAST_FILE)).unwrap();
    let parsed: EventForecast = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, run.forecast);
    let again = serde_json::to_string_pretty(&parsed).unwrap() + "\n";
    assert_eq!(again, text);

    for name in [
        "summary.md",
        "scree.csv",
        "fisher.csv",
        "projection_top_variance.csv",
        "projection_top_fisher.csv",
        "article_probs.csv",
        "kmeans_clusters.csv",
        "kmeans_scatter.csv",
        "zeroshot_verdicts.csv",
        "relevance.csv",
        "crowd.json",
    ] {
        let digest = manifest
            .output(name)
            .unwrap_or_else(|| panic!("{name} not listed"));
        assert_eq!(
            digest.sha256,
            file_digest(&dir.join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(
        RunManifest::load(&dir.join(MANIFEST_FILE)).unwrap(),
        manifest
    );

    let mut scree = csv::Reader::from_path(dir.join("scree.csv")).unwrap();
    let cumulative: Vec<f64> = scree
        .records()
        .map(|r| r.unwrap()[3].parse().unwrap())
        .collect();
    assert!(!cumulative.is_empty());
    assert!(cumulative.windows(2).all(|w| w[1] >= w[0]));
    assert!((cumulative.last().unwrap() - 1.0).abs() <= 1e-8);

    let mut probs = csv::Reader::from_path(dir.join("article_probs.csv")).unwrap();
    for r in probs.records() {
        let r = r.unwrap();
        let (y, n): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert!((0.0..=1.0).contains(&y) && (0.0..=1.0).contains(&n));
        assert_eq!(y + n, 1.0);
    }

    let mut clusters = csv::Reader::from_path(dir.join("kmeans_clusters.csv")).unwrap();
    let mut total = 0.0;
    for r in clusters.records() {
        let r = r.unwrap();
        assert!(matches!(&r[1], "1" | "2"));
        assert!(matches!(&r[2], "YES" | "NO"));
        total += r[5].parse::<f64>().unwrap();
    }
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn twenty_event_config_runs_macro_only() {
    let registry = EventRegistry::load(&fixtures().join("binary20/events.json")).unwrap();
    assert_eq!(registry.events.len(), 20);
    let options = PipelineOptions {
        macro_only: true,
        ..Default::default()
    };
    let runs = run_batch(&registry.events, &options).unwrap();
    let out = tempfile::tempdir().unwrap();
    for run in &runs {
        emit_report(run, out.path()).unwrap();
        assert_eq!(run.forecast.p_yes_final, run.event.macro_p_yes);
        assert_eq!(run.steps, vec!["forecast".to_string()]);
    }
    let forecasts = collect_forecasts(out.path()).unwrap();
    assert_eq!(forecasts.len(), 20);
    let rows: Vec<SummaryRow> = forecasts
        .iter()
        .map(|f| SummaryRow::from_forecast(f, registry.get(&f.event_id).ok().map(|e| e.kind)))
        .collect();
    emit_summary(&rows, out.path()).unwrap();
    let mut summary = csv::Reader::from_path(out.path().join(SUMMARY_CSV)).unwrap();
    assert_eq!(summary.records().count(), 20);
    let continuous = rows
        .iter()
        .filter(|r| r.kind == Some(EventKind::Continuous))
        .count();
    assert_eq!(continuous, 12);
}

#[test]
fn continuous_event_uses_point_forecast_and_skips_news() {
    let mut event: EventSpec = serde_json::from_value(serde_json::json!({
        "id": "share",
        "statement": "Share reaches 50",
        "kind": "continuous",
        "threshold": {"value": 50.0, "direction": "AtLeast"},
        "resolution_date": "2030-12-31",
        "keywords": ["share"],
        "window": {"start": "2025-06-01", "end": "2025-06-30"},
        "summary_text": "Share reaches 50",
        "macro_p_yes": 0.6,
        "ipf_weights": {"w_lstm": 0.4, "w_sna": 0.0, "w_crowd": 0.1, "w_macro": 0.5},
        "point_forecast": {"x_hat": 50.0}
    }))
    .unwrap();
    let empty = tempfile::tempdir().unwrap();
    let options = PipelineOptions {
        fixture_dir: Some(empty.path().to_path_buf()),
        ..Default::default()
    };
    let run = run_pipeline(&event, &options).unwrap();
    assert_eq!(run.forecast.modules.lstm, Some(0.5));
    assert!(run.sna.relevant.is_none());
    assert!(!run.steps.iter().any(|s| s == "ingest"));
    // 0.4 * 0.5 + 0.5 * 0.6 renormalized over 0.9
    assert!((run.forecast.p_yes_final - 0.5 / 0.9).abs() < 1e-12);

    event.point_forecast = None;
    fs::write(
        empty.path().join("series.csv"),
        "date,value\n2024-01-01,40\n2024-02-01,45\n2024-03-01,50\n",
    )
    .unwrap();
    let run = run_pipeline(&event, &options).unwrap();
    let cal = run.calibration.unwrap();
    assert!((cal.forecast.x_hat - 55.0).abs() < 1e-9);
    assert!(cal.p_yes > 0.5);
}

#[test]
fn identical_runs_have_identical_digests() {
    let (event, options) = runthrough();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = emit_report(&run_pipeline(&event, &options).unwrap(), a.path()).unwrap();
    let mb = emit_report(&run_pipeline(&event, &options).unwrap(), b.path()).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(
        fs::read(a.path().join(&event.id).join(MANIFEST_FILE)).unwrap(),
        fs::read(b.path().join(&event.id).join(MANIFEST_FILE)).unwrap()
    );
}
