//! Output files for completed runs, plus a manifest of their digests.
//!
//! Nothing written here depends on the wall clock, so identical inputs give
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{store_corpus, EventKind};
use crate::error::{Error, Result};
use crate::ipf::{EventForecast, Module};
use crate::pipeline::PipelineRun;

pub const FORECAST_FILE: &str = "forecast.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_MD: &str = "summary.md";
pub const SUMMARY_CSV: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub event_id: String,
    pub seed: u64,
    /// The forecast date the run was evaluated at.
    pub as_of: String,
    pub steps: Vec<String>,
    pub inputs: Vec<FileDigest>,
    /// Output files relative to the event directory.
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn output(&self, name: &str) -> Option<&FileDigest> {
        self.outputs.iter().find(|d| d.path == name)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

struct Emitter {
    dir: PathBuf,
    outputs: Vec<FileDigest>,
}

impl Emitter {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))?;
        self.write(name, &bytes)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let path = self.dir.join(name);
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: file_digest(&path)?,
        });
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(p: Option<f64>) -> String {
    p.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes every artifact of `run` to `<out_dir>/<event id>/` and returns the
/// manifest, which is written last.
pub fn emit_report(run: &PipelineRun, out_dir: &Path) -> Result<RunManifest> {
    let dir = out_dir.join(&run.event.id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut em = Emitter {
        dir: dir.clone(),
        outputs: Vec::new(),
    };

    em.write(FORECAST_FILE, &to_json(&run.forecast)?)?;
    em.write(SUMMARY_MD, event_summary(run).as_bytes())?;

    if !run.corpus.is_empty() {
        store_corpus(&run.corpus, &dir.join("corpus.jsonl"))?;
        em.record("corpus.jsonl")?;
    }
    if let Some(rel) = &run.sna.relevant {
        let rows = rel
            .rows
            .iter()
            .map(|r| vec![r.article_id.clone(), num(r.similarity), r.kept.to_string()])
            .collect();
        em.csv("relevance.csv", &["article_id", "similarity", "kept"], rows)?;
    }
    if let Some(pca) = &run.sna.pca {
        let ev = &pca.explained;
        let rows = (0..ev.ratios.len())
            .map(|k| {
                vec![
                    (k + 1).to_string(),
                    num(pca.model.eigenvalues[k]),
                    num(ev.ratios[k]),
                    num(ev.cumulative[k]),
                ]
            })
            .collect();
        em.csv(
            "scree.csv",
            &["component", "eigenvalue", "ratio", "cumulative"],
            rows,
        )?;

        let fisher = &pca.selection.fisher;
        let rows = fisher
            .scores
            .iter()
            .enumerate()
            .map(|(k, f)| vec![(k + 1).to_string(), num(*f)])
            .collect();
        em.csv("fisher.csv", &["component", "fisher_score"], rows)?;

        let by_variance: Vec<usize> = (0..pca.model.rank().min(3)).collect();
        let by_fisher = fisher.top(3);
        for (name, comps) in [
            ("projection_top_variance.csv", by_variance),
            ("projection_top_fisher.csv", by_fisher),
        ] {
            let mut header = vec!["article_id".to_string(), "label".to_string()];
            header.extend(comps.iter().map(|k| format!("pc{}", k + 1)));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = pca
                .projections
                .iter()
                .map(|(id, label, s)| {
                    let mut row = vec![id.clone(), label.to_string()];
                    row.extend(comps.iter().map(|&k| num(s[k])));
                    row
                })
                .collect();
            em.csv(name, &header, rows)?;
        }

        let rows = pca
            .scores
            .iter()
            .map(|s| {
                vec![
                    s.article_id.clone(),
                    num(s.p_yes),
                    num(s.p_no()),
                    num(s.recency_weight),
                ]
            })
            .collect();
        em.csv(
            "article_probs.csv",
            &["article_id", "p_yes", "p_no", "recency_weight"],
            rows,
        )?;
    }
    if let Some(km) = &run.sna.kmeans {
        let rows = km
            .weights
            .iter()
            .map(|w| {
                vec![
                    w.article_id.clone(),
                    (w.cluster + 1).to_string(),
                    km.map.outcome_of(w.cluster).to_string(),
                    num(w.w_dist),
                    num(w.w_time),
                    num(w.w),
                ]
            })
            .collect();
        em.csv(
            "kmeans_clusters.csv",
            &["article_id", "cluster", "outcome", "w_dist", "w_time", "w"],
            rows,
        )?;
        let rows = km
            .scatter
            .iter()
            .map(|(id, k, x, y)| vec![id.clone(), (k + 1).to_string(), num(*x), num(*y)])
            .collect();
        em.csv(
            "kmeans_scatter.csv",
            &["article_id", "cluster", "x", "y"],
            rows,
        )?;
    }
    if let Some(zs) = &run.sna.zeroshot {
        let rows = zs
            .batch
            .verdicts
            .iter()
            .map(|v| {
                let value = serde_json::to_value(v.value).expect("serializable");
                vec![
                    v.article_id.clone(),
                    value.as_str().unwrap_or_default().to_string(),
                    v.attempts.to_string(),
                ]
            })
            .collect();
        em.csv(
            "zeroshot_verdicts.csv",
            &["article_id", "verdict", "attempts"],
            rows,
        )?;
    }
    if let Some(crowd) = &run.crowd {
        em.write("crowd.json", &to_json(crowd)?)?;
    }
    if let Some(cal) = &run.calibration {
        em.write("calibration.json", &to_json(cal)?)?;
    }

    let inputs = run
        .inputs
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: file_digest(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        event_id: run.event.id.clone(),
        seed: run.seed,
        as_of: run.as_of.to_rfc3339(),
        steps: run.steps.clone(),
        inputs,
        outputs: em.outputs,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, to_json(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn event_summary(run: &PipelineRun) -> String {
    let f = &run.forecast;
    let mut s = String::new();
    let _ = writeln!(s, "# {}\n", run.event.id);
    let _ = writeln!(s, "{}\n", run.event.statement);
    let _ = writeln!(s, "As of {}.\n", run.as_of.to_rfc3339());
    let _ = writeln!(
        s,
        "| module | p_yes | configured weight | effective weight |"
    );
    let _ = writeln!(s, "|---|---|---|---|");
    for m in Module::ALL {
        let _ = writeln!(
            s,
            "| {m} | {} | {} | {:.4} |",
            opt(f.modules.get(m)),
            f.configured_weights.get(m),
            f.effective_weights.get(&m).copied().unwrap_or(0.0)
        );
    }
    let _ = writeln!(
        s,
        "\nP(YES) = {:.5}, P(NO) = {:.5}\n",
        f.p_yes_final, f.p_no_final
    );
    if !f.intermediates.is_empty() {
        let _ = writeln!(s, "| intermediate | value |");
        let _ = writeln!(s, "|---|---|");
        for (k, v) in &f.intermediates {
            let _ = writeln!(s, "| {k} | {v} |");
        }
        s.push('\n');
    }
    for note in &f.notes {
        let _ = writeln!(s, "- {note}");
    }
    s
}

/// One row per forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub event_id: String,
    pub kind: Option<EventKind>,
    pub p_lstm: Option<f64>,
    pub p_sna: Option<f64>,
    pub p_crowd: Option<f64>,
    pub p_macro: Option<f64>,
    pub p_yes: f64,
    pub p_no: f64,
    pub abstention_only: bool,
}

impl SummaryRow {
    pub fn from_forecast(f: &EventForecast, kind: Option<EventKind>) -> Self {
        SummaryRow {
            event_id: f.event_id.clone(),
            kind,
            p_lstm: f.modules.lstm,
            p_sna: f.modules.sna,
            p_crowd: f.modules.crowd,
            p_macro: f.modules.r#macro,
            p_yes: f.p_yes_final,
            p_no: f.p_no_final,
            abstention_only: f.is_abstention_only(),
        }
    }
}

/// Writes `summary.md` and `summary.csv` with one row per forecast.
pub fn emit_summary(rows: &[SummaryRow], out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut md = String::from("# Forecast summary\n\n");
    md.push_str("| event | kind | LSTM | SNA | crowd | macro | P(YES) | P(NO) |\n");
    md.push_str("|---|---|---|---|---|---|---|---|\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "event_id",
        "kind",
        "p_lstm",
        "p_sna",
        "p_crowd",
        "p_macro",
        "p_yes",
        "p_no",
        "abstention_only",
    ])?;
    for r in rows {
        let kind = match r.kind {
            Some(EventKind::Discrete) => "discrete",
            Some(EventKind::Continuous) => "continuous",
            None => "-",
        };
        let _ = writeln!(
            md,
            "| {} | {kind} | {} | {} | {} | {} | {:.5} | {:.5} |",
            r.event_id,
            opt(r.p_lstm),
            opt(r.p_sna),
            opt(r.p_crowd),
            opt(r.p_macro),
            r.p_yes,
            r.p_no
        );
        let cell = |p: Option<f64>| p.map(num).unwrap_or_default();
        w.write_record([
            r.event_id.clone(),
            kind.to_string(),
            cell(r.p_lstm),
            cell(r.p_sna),
            cell(r.p_crowd),
            cell(r.p_macro),
            num(r.p_yes),
            num(r.p_no),
            r.abstention_only.to_string(),
        ])?;
    }
    let csv_bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))?;
    let md_path = out_dir.join(SUMMARY_MD);
    fs::write(&md_path, md).map_err(|e| Error::io(&md_path, e))?;
    let csv_path = out_dir.join(SUMMARY_CSV);
    fs::write(&csv_path, csv_bytes).map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

/// Collects every `<dir>/*/forecast.json`, sorted by event id.
pub fn collect_forecasts(dir: &Path) -> Result<Vec<EventForecast>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path().join(FORECAST_FILE);
        if path.is_file() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            out.push(serde_json::from_str::<EventForecast>(&text)?);
        }
    }
    out.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    Ok(out)
}
