//! Regenerates `fixtures/runthrough/`, the offline bundle for the worked
//! tariff example.
//!
//! The corpus is synthetic. Every relevant article repeats the event summary
//! and adds an angle (Brussels or Tokyo), a stance pair and a few unique
//! tokens, so the stub embedder keeps it above the relevance cut-off while
//! PCA separates stances and k-means separates angles. Publication times of
//! two article groups are then bisected until the PCA and k-means
//! probabilities hit their targets; the zero-shot script fixes 61 YES out of
//! 100 classified articles.
//!
//! Usage: `cargo run -p mercator-core --example runthrough_fixture --release [-- <dir>]`

use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use mercator_core::corpus::{write_labels, EventRegistry, Label, Outcome};
use mercator_core::pipeline::{run_pipeline, PipelineOptions, PipelineRun};
use serde_json::json;

const EVENT_ID: &str = "us-tariffs-eu-japan";
const STATEMENT: &str = "The United States will raise tariffs further on key imports (such as from the EU or Japan) within the next 60 days.";
const SUMMARY: &str = "The United States will raise tariffs further on key imports such as from the EU or Japan within the next 60 days";

const TARGET_PCA: f64 = 0.4618;
const TARGET_KMEANS: f64 = 0.817;

const LABELED: usize = 50;
const UNLABELED: usize = 50;
const OFF_TOPIC: usize = 33;
const ZS_YES: usize = 61;
const MAX_AGE_DAYS: f64 = 59.5;

#[derive(Clone, Copy, PartialEq)]
enum Angle {
    Brussels,
    Tokyo,
}

#[derive(Clone)]
struct Doc {
    n: usize,
    angle: Angle,
    stance: Outcome,
    labeled: bool,
    zs_yes: bool,
    retry: bool,
    age_days: f64,
}

fn as_of() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 7, 30, 23, 59, 59).unwrap()
}

fn stamp(age_days: f64) -> String {
    let secs = (age_days * 86_400.0).round() as i64;
    (as_of() - Duration::seconds(secs)).to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn code(n: usize) -> String {
    format!("r{n:03}")
}

impl Doc {
    fn title(&self) -> String {
        let place = match self.angle {
            Angle::Brussels => "Brussels",
            Angle::Tokyo => "Tokyo",
        };
        format!("{place} dispatch {}", self.n)
    }

    fn body(&self) -> String {
        let place = match self.angle {
            Angle::Brussels => "Brussels",
            Angle::Tokyo => "Tokyo",
        };
        let stance = match self.stance {
            Outcome::Yes => "hike escalation",
            Outcome::No => "pause truce",
        };
        format!(
            "{SUMMARY}. {place} desk, {place} sources: {stance}. Filed {}.",
            code(self.n)
        )
    }

    fn url(&self) -> String {
        format!("https://wire.example.com/tariffs/{}", code(self.n))
    }
}

const OFF_TOPIC_LINES: [&str; 11] = [
    "Canadian lumber tariffs squeeze homebuilders in Ontario as mortgage rates climb",
    "EU farm ministers debate fertiliser subsidies during a dry summer",
    "Japan baseball league sets attendance record at Koshien stadium",
    "Steel tariffs leave Australian scrap dealers hunting for buyers",
    "EU parliament committee reviews roaming charges for travellers",
    "Japan tourism board reports record visitors to Kyoto temples",
    "Solar panel tariffs in India prompt a rush of local factory openings",
    "EU football clubs agree new youth transfer rules",
    "Japan rail operator unveils faster bullet train prototype",
    "Brazil coffee tariffs debated as harvest outlook improves",
    "EU weather service warns of heat across southern regions",
];

fn docs() -> Vec<Doc> {
    let mut out = Vec::new();
    for i in 0..LABELED + UNLABELED {
        let labeled = i < LABELED;
        let j = if labeled { i } else { i - LABELED };
        let angle = if j % 5 == 4 {
            Angle::Tokyo
        } else {
            Angle::Brussels
        };
        let stance = if labeled {
            if j % 2 == 0 {
                Outcome::Yes
            } else {
                Outcome::No
            }
        } else if j % 50 < 23 {
            Outcome::Yes
        } else {
            Outcome::No
        };
        out.push(Doc {
            n: i + 1,
            angle,
            stance,
            labeled,
            zs_yes: false,
            retry: false,
            age_days: ((i * 37) % 59) as f64 + ((i * 7) % 24) as f64 / 24.0 + 0.25,
        });
    }
    // Zero-shot verdicts: every YES-stance article plus enough NO-stance ones.
    let mut yes = 0;
    for d in out.iter_mut().filter(|d| d.stance == Outcome::Yes) {
        d.zs_yes = true;
        yes += 1;
    }
    for d in out.iter_mut().filter(|d| d.stance == Outcome::No) {
        if yes == ZS_YES {
            break;
        }
        d.zs_yes = true;
        yes += 1;
    }
    for d in out.iter_mut().step_by(17) {
        d.retry = true;
    }
    out
}

fn newsapi_item(title: &str, body: &str, url: &str, at: &str) -> serde_json::Value {
    json!({
        "source": {"id": null, "name": "Wire Example"},
        "title": title,
        "description": body,
        "content": null,
        "url": url,
        "publishedAt": at,
    })
}

fn newsdata_item(title: &str, body: &str, url: &str, at: &str) -> serde_json::Value {
    let at = at.replace('T', " ").replace('Z', "");
    json!({
        "source_id": "wire_example",
        "title": title,
        "description": body,
        "content": null,
        "link": url,
        "pubDate": at,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) {
    let mut text = serde_json::to_string_pretty(value).unwrap();
    text.push('\n');
    std::fs::write(path, text).unwrap();
}

fn write_bundle(dir: &Path, docs: &[Doc]) {
    std::fs::create_dir_all(dir).unwrap();
    write_json(
        &dir.join("events.json"),
        &json!({"events": [{
            "id": EVENT_ID,
            "statement": STATEMENT,
            "kind": "discrete",
            "resolution_date": "2025-09-28",
            "resolution_criteria": "US raises tariff rates on EU or Japanese imports above the levels in force on 2025-07-30.",
            "keywords": ["tariffs", "EU", "Japan"],
            "window": {"start": "2025-06-01", "end": "2025-07-30"},
            "summary_text": SUMMARY,
            "macro_p_yes": 0.56,
            "ipf_weights": {"w_lstm": 0.0, "w_sna": 0.5, "w_crowd": 0.1, "w_macro": 0.4},
            "sna_weights": {"alpha": 0.5, "beta": 0.2, "gamma": 0.3},
            "proxies": [
                {"market_id": "court-force-trump-refund-tariffs", "weight": 0.21},
                {"market_id": "trump-remove-10-blanket-tariff-2025", "weight": 0.2},
                {"market_id": "trump-lower-tariffs-mexico-dec-31", "weight": 0.05}
            ]
        }]}),
    );

    let fetched = "2025-07-30T18:00:00Z";
    write_json(
        &dir.join("quotes.json"),
        &json!([
            {"market_id": "court-force-trump-refund-tariffs", "p_yes": 0.13, "volume": 61230.0,
             "resolution_date": "2025-12-31", "fetched_at": fetched},
            {"market_id": "trump-remove-10-blanket-tariff-2025", "p_yes": 0.19, "volume": 29074.0,
             "resolution_date": "2025-12-31", "fetched_at": fetched},
            {"market_id": "trump-lower-tariffs-mexico-dec-31", "p_yes": 0.83, "volume": 6965.0,
             "resolution_date": "2025-12-31", "fetched_at": fetched}
        ]),
    );

    // Relevant articles alternate between the two providers; off-topic
    // keyword hits, one out-of-window story and one cross-provider duplicate
    // exercise the ingest filters.
    let mut newsapi = Vec::new();
    let mut newsdata = Vec::new();
    for d in docs {
        let (t, b, u, at) = (d.title(), d.body(), d.url(), stamp(d.age_days));
        if d.n % 3 == 0 {
            newsdata.push(newsdata_item(&t, &b, &u, &at));
        } else {
            newsapi.push(newsapi_item(&t, &b, &u, &at));
        }
    }
    for k in 0..OFF_TOPIC {
        let line = OFF_TOPIC_LINES[k % OFF_TOPIC_LINES.len()];
        let title = format!("{line} ({})", k + 1);
        let body = format!("{line}. Local officials comment on item {}.", k + 1);
        let url = format!("https://other.example.com/news/{}", k + 1);
        let at = stamp(((k * 11) % 58) as f64 + 0.6);
        if k % 2 == 0 {
            newsapi.push(newsapi_item(&title, &body, &url, &at));
        } else {
            newsdata.push(newsdata_item(&title, &body, &url, &at));
        }
    }
    let dup = &docs[1];
    newsdata.push(newsdata_item(
        &dup.title(),
        &dup.body(),
        &dup.url(),
        &stamp(dup.age_days),
    ));
    newsapi.push(newsapi_item(
        "EU and Japan tariffs: what changed in the spring",
        SUMMARY,
        "https://wire.example.com/tariffs/spring-recap",
        "2025-05-10T09:00:00Z",
    ));

    write_json(
        &dir.join("newsapi.json"),
        &json!({"status": "ok", "totalResults": newsapi.len(), "articles": newsapi}),
    );
    write_json(
        &dir.join("newsdata.json"),
        &json!({"status": "success", "totalResults": newsdata.len(), "results": newsdata, "nextPage": null}),
    );

    let labels: Vec<Label> = docs
        .iter()
        .filter(|d| d.labeled)
        .map(|d| Label {
            article_id: mercator_core::corpus::article_id(&d.url(), &d.title()),
            outcome: d.stance,
        })
        .collect();
    write_labels(&labels, &dir.join("labels.csv")).unwrap();

    let rules: Vec<serde_json::Value> = docs
        .iter()
        .filter(|d| d.zs_yes || d.retry)
        .map(|d| {
            let verdict = if d.zs_yes { "{{YES}}" } else { "{{NO}}" };
            let replies = if d.retry {
                json!(["The answer is YES", verdict])
            } else {
                json!([verdict])
            };
            json!({"match": format!("Filed {}.", code(d.n)), "responses": replies})
        })
        .collect();
    write_json(
        &dir.join("zeroshot.json"),
        &json!({"default": "{{NO}}", "responses": rules}),
    );
}

fn run(dir: &Path) -> PipelineRun {
    let registry = EventRegistry::load(&dir.join("events.json")).unwrap();
    let options = PipelineOptions {
        fixture_dir: Some(dir.to_path_buf()),
        ..PipelineOptions::default()
    };
    run_pipeline(registry.get(EVENT_ID).unwrap(), &options).unwrap()
}

/// Ages every doc in `group` towards the oldest allowed age by fraction `t`
/// and bisects `t` until `measure` crosses `target`.
fn tune(
    dir: &Path,
    docs: &mut [Doc],
    group: &[usize],
    target: f64,
    measure: impl Fn(&PipelineRun) -> f64,
) -> f64 {
    let base: Vec<f64> = group.iter().map(|&i| docs[i].age_days).collect();
    let eval = |docs: &mut [Doc], t: f64| {
        for (&i, b) in group.iter().zip(&base) {
            docs[i].age_days = b * (1.0 - t) + MAX_AGE_DAYS * t;
        }
        write_bundle(dir, docs);
        measure(&run(dir))
    };
    let f0 = eval(docs, 0.0);
    let f1 = eval(docs, 1.0);
    assert!(
        (f0 - target) * (f1 - target) <= 0.0,
        "target {target} not bracketed: f(0) = {f0}, f(1) = {f1}"
    );
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let f = eval(docs, mid);
        if (f - target) * (f0 - target) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    eval(docs, 0.5 * (lo + hi))
}

fn main() {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fixtures/runthrough"));
    let mut docs = docs();
    write_bundle(&dir, &docs);

    let first = run(&dir);
    let relevant = first.sna.relevant.as_ref().unwrap();
    assert_eq!(
        relevant.articles.len(),
        LABELED + UNLABELED,
        "relevance filter"
    );
    let pca = first.sna.pca.as_ref().unwrap();
    let scores: std::collections::BTreeMap<_, _> = pca
        .scores
        .iter()
        .map(|s| (s.article_id.clone(), s.p_yes))
        .collect();
    let id_of = |d: &Doc| mercator_core::corpus::article_id(&d.url(), &d.title());
    let pca_side = |above: bool| -> Vec<usize> {
        docs.iter()
            .enumerate()
            .filter(|(_, d)| !d.labeled && (scores[&id_of(d)] > TARGET_PCA) == above)
            .map(|(i, _)| i)
            .collect()
    };
    // Aging the high scorers pulls the aggregate down, and vice versa.
    let group = pca_side(pca.p_yes > TARGET_PCA);
    let p = tune(&dir, &mut docs, &group, TARGET_PCA, |r| {
        r.sna.pca.as_ref().unwrap().p_yes
    });
    eprintln!("pca tuned to {p}");

    let second = run(&dir);
    let km = second.sna.kmeans.as_ref().unwrap();
    let cluster: std::collections::BTreeMap<_, _> = km
        .weights
        .iter()
        .map(|w| (w.article_id.clone(), w.cluster))
        .collect();
    let want_yes_side = km.p_yes > TARGET_KMEANS;
    let group: Vec<usize> = docs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.labeled && (cluster[&id_of(d)] == km.map.yes_cluster) == want_yes_side)
        .map(|(i, _)| i)
        .collect();
    let p = tune(&dir, &mut docs, &group, TARGET_KMEANS, |r| {
        r.sna.kmeans.as_ref().unwrap().p_yes
    });
    eprintln!("kmeans tuned to {p}");

    let last = run(&dir);
    let f = &last.forecast;
    eprintln!(
        "pca {:?} kmeans {:?} zeroshot {:?} sna {:?} crowd {:?} final {}",
        f.intermediates.get("p_pca"),
        f.intermediates.get("p_kmeans"),
        f.intermediates.get("p_zeroshot"),
        f.modules.sna,
        f.modules.crowd,
        f.p_yes_final
    );
}
