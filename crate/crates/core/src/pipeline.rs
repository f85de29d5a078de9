//! End-to-end forecast for one event: ingest, relevance filter, the three
//! news submodules, crowd, threshold calibration and the final blend.
//!
//! Every step is exposed on its own so the CLI can run it in isolation.
//! Module failures that only mean "nothing to say" become abstentions; any
//! other failure aborts the run with the module named.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::calibration::{
    baseline_forecast, calibrate, read_series, PointForecast, DEFAULT_SHARPNESS,
};
use crate::clock::{Clock, FixedClock};
use crate::corpus::provider::{FixtureTransport, Transport, UreqTransport};
use crate::corpus::{
    fetch_all, index_labels, load_corpus, read_labels, Article, EventKind, EventSpec, Outcome,
    ProviderConfig, ProviderKind,
};
use crate::embedding::{
    embed, embed_articles, relevance_filter, EmbedBackend, Embedding, RelevanceThreshold,
};
use crate::error::{Error, Result};
use crate::ipf::{combine_ipf, combine_sna, EventForecast, ModuleProbabilities, SnaBlend};
use crate::kmeans::{
    aggregate_kmeans, fit_kmeans, map_clusters_to_outcomes, weigh_articles, ArticleWeight,
    KMeansModel, OutcomeMap, YesMean, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::markets::{crowd_estimate, CrowdEstimate, FixtureQuotes, PolymarketClient, QuoteSource};
use crate::pca::{
    aggregate_pca, article_p_yes, explained_variance, fit_pca, recency_weight, ArticleScore,
    ExplainedVariance, FisherSelection, PcaModel, RECENCY_LAMBDA,
};
use crate::zeroshot::{
    classify_batch, ratio, BatchOutcome, ChatClient, FixtureChatClient, HttpChatClient,
    DEFAULT_PARALLELISM, URL_ENV,
};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_BUDGET: usize = 100;

/// Fixture file names looked up under the fixture directory.
pub const LABELS_FILE: &str = "labels.csv";
pub const QUOTES_FILE: &str = "quotes.json";
pub const ZEROSHOT_FILE: &str = "zeroshot.json";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const SERIES_FILE: &str = "series.csv";

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// Serve every remote dependency from files in this directory.
    pub fixture_dir: Option<PathBuf>,
    pub seed: u64,
    /// Forecast date; defaults to the end of the event's news window.
    pub as_of: Option<DateTime<Utc>>,
    pub backend: EmbedBackend,
    pub tau: RelevanceThreshold,
    pub budget: usize,
    pub parallelism: usize,
    /// Skip every module except the analyst prior.
    pub macro_only: bool,
    /// Label file overriding the fixture lookup.
    pub labels: Option<PathBuf>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            fixture_dir: None,
            seed: DEFAULT_SEED,
            as_of: None,
            backend: EmbedBackend::default(),
            tau: RelevanceThreshold::default(),
            budget: DEFAULT_BUDGET,
            parallelism: DEFAULT_PARALLELISM,
            macro_only: false,
            labels: None,
        }
    }
}

impl PipelineOptions {
    pub fn clock(&self, event: &EventSpec) -> FixedClock {
        match self.as_of {
            Some(t) => FixedClock(t),
            None => FixedClock::end_of_day(event.window.end),
        }
    }

    /// `<fixture_dir>/<event id>/<name>` if present, else
    /// `<fixture_dir>/<name>` if present.
    pub fn fixture_file(&self, event: &EventSpec, name: &str) -> Option<PathBuf> {
        let dir = self.fixture_dir.as_ref()?;
        [dir.join(&event.id).join(name), dir.join(name)]
            .into_iter()
            .find(|p| p.is_file())
    }

    fn fixture_event_dir(&self, event: &EventSpec) -> Option<PathBuf> {
        let dir = self.fixture_dir.as_ref()?;
        let own = dir.join(&event.id);
        Some(if own.is_dir() { own } else { dir.clone() })
    }
}

fn in_module(module: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{module}: {m}")),
        Error::InvalidInput(m) => Error::InvalidInput(format!("{module}: {m}")),
        other => other,
    }
}

/// Splits a module result into a value or an abstention note.
fn abstain_on_no_signal<T>(
    module: &str,
    r: Result<T>,
    notes: &mut Vec<String>,
) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_no_signal() => {
            notes.push(format!("{module} abstained: {e}"));
            Ok(None)
        }
        Err(e) => Err(in_module(module, e)),
    }
}

/// Articles for the event: a stored corpus fixture if present, otherwise the
/// configured news providers. Without any provider the module has no signal.
pub fn ingest(event: &EventSpec, options: &PipelineOptions) -> Result<Vec<Article>> {
    if let Some(path) = options.fixture_file(event, CORPUS_FILE) {
        return load_corpus(&path);
    }
    let mut providers: Vec<(ProviderConfig, Box<dyn Transport>)> = Vec::new();
    if let Some(dir) = options.fixture_event_dir(event) {
        for kind in ProviderKind::ALL {
            if let Some(t) = FixtureTransport::for_provider(&dir, kind) {
                providers.push((ProviderConfig::new(kind, "fixture://", ""), Box::new(t)));
            }
        }
    } else {
        for kind in ProviderKind::ALL {
            if let Ok(cfg) = ProviderConfig::from_env(kind) {
                providers.push((cfg, Box::new(UreqTransport::new(Duration::from_secs(30)))));
            }
        }
    }
    if providers.is_empty() {
        return Err(Error::no_signal("ingest", "no news provider configured"));
    }
    let articles = fetch_all(event, &providers)?;
    tracing::info!(event = %event.id, articles = articles.len(), "ingested");
    Ok(articles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRow {
    pub article_id: String,
    pub similarity: f64,
    pub kept: bool,
}

#[derive(Debug, Clone)]
pub struct Relevant {
    /// Kept articles, aligned with `embeddings`.
    pub articles: Vec<Article>,
    pub embeddings: Vec<Embedding>,
    pub rows: Vec<RelevanceRow>,
}

/// Embeds the event summary and the articles and keeps the relevant ones.
pub fn filter(
    event: &EventSpec,
    articles: &[Article],
    options: &PipelineOptions,
) -> Result<Relevant> {
    let event_vec = embed(std::slice::from_ref(&event.summary_text), &options.backend)?
        .pop()
        .expect("one vector per text");
    let embeddings = embed_articles(articles, &options.backend)?;
    let report = relevance_filter(&event_vec, &embeddings, options.tau)?;
    let rows = embeddings
        .iter()
        .zip(&report.similarities)
        .map(|(e, &s)| RelevanceRow {
            article_id: e.article_id.clone(),
            similarity: s,
            kept: s >= options.tau.value(),
        })
        .collect();
    let by_id: BTreeMap<&str, &Article> = articles.iter().map(|a| (a.id.as_str(), a)).collect();
    let kept_articles = report
        .kept
        .iter()
        .map(|e| (*by_id[e.article_id.as_str()]).clone())
        .collect();
    Ok(Relevant {
        articles: kept_articles,
        embeddings: report.kept,
        rows,
    })
}

/// Labels for the event's articles, keyed by article id.
pub fn load_labels(
    event: &EventSpec,
    articles: &[Article],
    options: &PipelineOptions,
) -> Result<BTreeMap<String, Outcome>> {
    let path = options
        .labels
        .clone()
        .or_else(|| options.fixture_file(event, LABELS_FILE));
    match path {
        Some(p) => index_labels(&read_labels(&p)?, articles),
        None => Ok(BTreeMap::new()),
    }
}

#[derive(Debug, Clone)]
pub struct PcaOutput {
    pub model: PcaModel,
    pub explained: ExplainedVariance,
    pub selection: FisherSelection,
    /// `(article id, label, scores on every component)` for the training set.
    pub projections: Vec<(String, Outcome, Vec<f64>)>,
    pub scores: Vec<ArticleScore>,
    pub p_yes: f64,
}

/// Fits on the labeled relevant articles and scores the unlabeled ones.
pub fn run_pca(
    relevant: &Relevant,
    labels: &BTreeMap<String, Outcome>,
    clock: &dyn Clock,
) -> Result<PcaOutput> {
    let mut labeled = Vec::new();
    let mut labeled_ids = Vec::new();
    let mut unlabeled = Vec::new();
    for (a, e) in relevant.articles.iter().zip(&relevant.embeddings) {
        match labels.get(&a.id) {
            Some(&o) => {
                labeled.push((e.vector.clone(), o));
                labeled_ids.push(a.id.clone());
            }
            None => unlabeled.push((a, e)),
        }
    }
    let yes = labeled.iter().filter(|(_, o)| *o == Outcome::Yes).count();
    let no = labeled.len() - yes;
    if yes < 2 || no < 2 {
        return Err(Error::no_signal(
            "pca",
            format!("need 2 labeled articles per class, have {yes} YES / {no} NO"),
        ));
    }
    if unlabeled.is_empty() {
        return Err(Error::no_signal("pca", "no unlabeled articles to score"));
    }
    let model = fit_pca(&labeled)?;
    let selection = FisherSelection::fit(&model, &labeled)?;
    let projections = labeled_ids
        .into_iter()
        .zip(&labeled)
        .map(|(id, (v, o))| Ok((id, *o, model.project(v)?)))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<ArticleScore> = unlabeled
        .iter()
        .map(|(a, e)| ArticleScore {
            article_id: a.id.clone(),
            p_yes: article_p_yes(&e.vector, &selection),
            recency_weight: recency_weight(clock.age_days(a.published_at), RECENCY_LAMBDA),
        })
        .collect();
    let p_yes = aggregate_pca(&scores)?.p_yes;
    Ok(PcaOutput {
        explained: explained_variance(&model),
        model,
        selection,
        projections,
        scores,
        p_yes,
    })
}

#[derive(Debug, Clone)]
pub struct KMeansOutput {
    pub model: KMeansModel,
    pub map: OutcomeMap,
    pub weights: Vec<ArticleWeight>,
    /// First two principal coordinates of every clustered article.
    pub scatter: Vec<(String, usize, f64, f64)>,
    pub p_yes: f64,
}

/// Clusters every relevant article; labeled ones act as seeds.
pub fn run_kmeans(
    relevant: &Relevant,
    labels: &BTreeMap<String, Outcome>,
    selection: Option<&FisherSelection>,
    seed: u64,
    clock: &dyn Clock,
) -> Result<KMeansOutput> {
    if relevant.embeddings.len() < 2 {
        return Err(Error::no_signal("kmeans", "fewer than 2 relevant articles"));
    }
    let points: Vec<Vec<f64>> = relevant
        .embeddings
        .iter()
        .map(|e| e.vector.clone())
        .collect();
    let model = fit_kmeans(&points, seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    let seeds: Vec<(usize, Outcome)> = relevant
        .articles
        .iter()
        .enumerate()
        .filter_map(|(j, a)| labels.get(&a.id).map(|&o| (j, o)))
        .collect();
    let yes_mean = selection.map(|s| YesMean {
        features: &s.top_features,
        mu_yes: &s.mu_yes_top,
    });
    let map = match map_clusters_to_outcomes(&model, &seeds, yes_mean) {
        Ok(m) => m,
        Err(Error::InvalidInput(m)) => return Err(Error::no_signal("kmeans", m)),
        Err(e) => return Err(e),
    };
    let ids: Vec<String> = relevant.articles.iter().map(|a| a.id.clone()).collect();
    let ages: Vec<f64> = relevant
        .articles
        .iter()
        .map(|a| clock.age_days(a.published_at))
        .collect();
    let weights = weigh_articles(&model, &points, &ids, &ages)?;
    let w: Vec<f64> = weights.iter().map(|x| x.w).collect();
    let p_yes = aggregate_kmeans(&model, &map, &w)?.p_yes;

    let scatter = match PcaModel::fit(&points) {
        Ok(reducer) => points
            .iter()
            .zip(&ids)
            .zip(&model.assignments)
            .map(|((p, id), &k)| {
                let s = reducer.project(p).unwrap_or_default();
                let at = |i: usize| s.get(i).copied().unwrap_or(0.0);
                (id.clone(), k, at(0), at(1))
            })
            .collect(),
        Err(_) => Vec::new(),
    };
    Ok(KMeansOutput {
        model,
        map,
        weights,
        scatter,
        p_yes,
    })
}

fn chat_client(event: &EventSpec, options: &PipelineOptions) -> Result<Box<dyn ChatClient>> {
    if options.fixture_dir.is_some() {
        return match options.fixture_file(event, ZEROSHOT_FILE) {
            Some(path) => Ok(Box::new(FixtureChatClient::load(&path)?)),
            None => Err(Error::no_signal(
                "zeroshot",
                "no scripted replies in fixtures",
            )),
        };
    }
    if std::env::var_os(URL_ENV).is_none() {
        return Err(Error::no_signal(
            "zeroshot",
            format!("{URL_ENV} is not set"),
        ));
    }
    Ok(Box::new(HttpChatClient::from_env()?))
}

#[derive(Debug, Clone)]
pub struct ZeroShotOutput {
    pub batch: BatchOutcome,
    pub p_yes: f64,
}

pub fn run_zeroshot(
    event: &EventSpec,
    relevant: &Relevant,
    client: &dyn ChatClient,
    options: &PipelineOptions,
) -> Result<ZeroShotOutput> {
    if relevant.articles.is_empty() {
        return Err(Error::no_signal("zeroshot", "no relevant articles"));
    }
    let batch = classify_batch(
        client,
        event,
        &relevant.articles,
        options.budget,
        options.parallelism,
    )?;
    for (id, e) in &batch.errors {
        tracing::warn!(article = %id, error = %e, "zero-shot classification failed");
    }
    let p_yes = ratio(&batch.verdicts)?.p_yes;
    Ok(ZeroShotOutput { batch, p_yes })
}

pub fn quote_source(
    event: &EventSpec,
    options: &PipelineOptions,
    clock: &FixedClock,
) -> Result<Box<dyn QuoteSource>> {
    if options.fixture_dir.is_some() {
        return match options.fixture_file(event, QUOTES_FILE) {
            Some(path) => Ok(Box::new(FixtureQuotes::load(&path)?)),
            None => Ok(Box::new(FixtureQuotes::default())),
        };
    }
    Ok(Box::new(PolymarketClient::new(
        crate::markets::POLYMARKET_BASE_URL,
        Box::new(*clock),
    )))
}

pub fn run_crowd(event: &EventSpec, options: &PipelineOptions) -> Result<CrowdEstimate> {
    let clock = options.clock(event);
    let source = quote_source(event, options, &clock)?;
    crowd_estimate(&event.crowd, source.as_ref(), &clock)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutput {
    pub forecast: PointForecast,
    pub threshold: f64,
    pub p_yes: f64,
}

/// Threshold probability from the event's point forecast, or from a trend
/// fitted to `series.csv` one step ahead.
pub fn run_calibration(event: &EventSpec, options: &PipelineOptions) -> Result<CalibrationOutput> {
    let threshold = event
        .threshold
        .ok_or_else(|| Error::no_signal("lstm", "event has no threshold"))?;
    let forecast = match (
        event.point_forecast,
        options.fixture_file(event, SERIES_FILE),
    ) {
        (Some(f), _) => f,
        (None, Some(path)) => baseline_forecast(&read_series(&path)?, 1)?,
        (None, None) => return Err(Error::no_signal("lstm", "no point forecast or series")),
    };
    let p_yes = calibrate(&forecast, &threshold, DEFAULT_SHARPNESS)?;
    Ok(CalibrationOutput {
        forecast,
        threshold: threshold.value,
        p_yes,
    })
}

#[derive(Debug, Clone, Default)]
pub struct SnaOutput {
    pub relevant: Option<Relevant>,
    pub pca: Option<PcaOutput>,
    pub kmeans: Option<KMeansOutput>,
    pub zeroshot: Option<ZeroShotOutput>,
    pub blend: Option<SnaBlend>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub event: EventSpec,
    pub as_of: DateTime<Utc>,
    pub seed: u64,
    pub steps: Vec<String>,
    /// Fixture or input files read during the run.
    pub inputs: Vec<PathBuf>,
    pub corpus: Vec<Article>,
    pub sna: SnaOutput,
    pub crowd: Option<CrowdEstimate>,
    pub calibration: Option<CalibrationOutput>,
    pub forecast: EventForecast,
}

fn run_sna(
    event: &EventSpec,
    corpus: &[Article],
    options: &PipelineOptions,
    clock: &FixedClock,
    steps: &mut Vec<String>,
    notes: &mut Vec<String>,
) -> Result<SnaOutput> {
    let mut out = SnaOutput::default();
    if corpus.is_empty() {
        notes.push("sna abstained: no articles".into());
        return Ok(out);
    }
    let relevant = filter(event, corpus, options).map_err(|e| in_module("filter", e))?;
    steps.push("filter".into());
    let labels = load_labels(event, corpus, options).map_err(|e| in_module("labels", e))?;

    out.pca = abstain_on_no_signal("pca", run_pca(&relevant, &labels, clock), notes)?;
    steps.push("pca".into());
    let selection = out.pca.as_ref().map(|p| &p.selection);
    out.kmeans = abstain_on_no_signal(
        "kmeans",
        run_kmeans(&relevant, &labels, selection, options.seed, clock),
        notes,
    )?;
    steps.push("kmeans".into());
    let client = abstain_on_no_signal("zeroshot", chat_client(event, options), notes)?;
    if let Some(client) = client {
        out.zeroshot = abstain_on_no_signal(
            "zeroshot",
            run_zeroshot(event, &relevant, client.as_ref(), options),
            notes,
        )?;
        steps.push("zeroshot".into());
    }
    out.blend = abstain_on_no_signal(
        "sna",
        combine_sna(
            out.pca.as_ref().map(|p| p.p_yes),
            out.kmeans.as_ref().map(|k| k.p_yes),
            out.zeroshot.as_ref().map(|z| z.p_yes),
            &event.sna_weights,
        ),
        notes,
    )?;
    out.relevant = Some(relevant);
    Ok(out)
}

/// Runs every module appropriate to the event kind and blends the result.
/// Discrete events use news, crowd and the prior; continuous events use the
/// calibrated point forecast, crowd and the prior.
pub fn run_pipeline(event: &EventSpec, options: &PipelineOptions) -> Result<PipelineRun> {
    event.validate()?;
    let clock = options.clock(event);
    let mut steps = Vec::new();
    let mut notes = Vec::new();
    let mut inputs = Vec::new();
    let mut modules = ModuleProbabilities {
        r#macro: Some(event.macro_p_yes),
        ..Default::default()
    };
    let mut corpus = Vec::new();
    let mut sna = SnaOutput::default();
    let mut crowd = None;
    let mut calibration = None;

    if options.fixture_dir.is_some() {
        for name in [
            CORPUS_FILE,
            LABELS_FILE,
            QUOTES_FILE,
            ZEROSHOT_FILE,
            SERIES_FILE,
        ] {
            if let Some(p) = options.fixture_file(event, name) {
                inputs.push(p);
            }
        }
        if let Some(d) = options.fixture_event_dir(event) {
            for kind in ProviderKind::ALL {
                let p = d.join(format!("{}.json", kind.name()));
                if p.is_file() {
                    inputs.push(p);
                }
            }
        }
    }
    if let Some(l) = &options.labels {
        inputs.push(l.clone());
    }
    inputs.sort();
    inputs.dedup();

    if options.macro_only {
        notes.push("macro-only run".into());
    } else {
        match event.kind {
            EventKind::Discrete => {
                corpus = abstain_on_no_signal("ingest", ingest(event, options), &mut notes)?
                    .unwrap_or_default();
                steps.push("ingest".into());
                sna = run_sna(event, &corpus, options, &clock, &mut steps, &mut notes)?;
                modules.sna = sna.blend.map(|b| b.p_yes);
            }
            EventKind::Continuous => {
                calibration =
                    abstain_on_no_signal("lstm", run_calibration(event, options), &mut notes)?;
                steps.push("calibrate".into());
                modules.lstm = calibration.map(|c| c.p_yes);
            }
        }
        crowd = abstain_on_no_signal("crowd", run_crowd(event, options), &mut notes)?;
        steps.push("crowd".into());
        modules.crowd = crowd.as_ref().map(|c| c.p_final);
    }

    let mut forecast = combine_ipf(&event.id, modules, &event.ipf_weights)?;
    steps.push("forecast".into());
    let mut notes_all = notes;
    notes_all.append(&mut forecast.notes);
    forecast.notes = notes_all;
    let im = &mut forecast.intermediates;
    if let Some(p) = &sna.pca {
        im.insert("p_pca".into(), p.p_yes);
        im.insert("pca_k_star".into(), p.selection.k_star() as f64);
        im.insert("pca_tau".into(), p.selection.tau_pca);
    }
    if let Some(k) = &sna.kmeans {
        im.insert("p_kmeans".into(), k.p_yes);
    }
    if let Some(z) = &sna.zeroshot {
        im.insert("p_zeroshot".into(), z.p_yes);
    }
    if let Some(b) = &sna.blend {
        im.insert("p_sna".into(), b.p_yes);
    }
    if let Some(r) = &sna.relevant {
        im.insert("articles_relevant".into(), r.articles.len() as f64);
    }
    if !corpus.is_empty() {
        im.insert("articles_ingested".into(), corpus.len() as f64);
    }
    if let Some(c) = &crowd {
        im.insert("crowd_omega".into(), c.omega);
        im.insert("crowd_p_inferred".into(), c.p_inferred);
        im.insert("crowd_p_adjusted".into(), c.p_adjusted);
        im.insert("crowd_decay_factor".into(), c.decay_factor);
        im.insert("crowd_p_final".into(), c.p_final);
    }
    if let Some(c) = &calibration {
        im.insert("calibration_x_hat".into(), c.forecast.x_hat);
        im.insert("calibration_scale".into(), c.forecast.scale);
        im.insert("calibration_threshold".into(), c.threshold);
    }
    Ok(PipelineRun {
        event: event.clone(),
        as_of: clock.0,
        seed: options.seed,
        steps,
        inputs,
        corpus,
        sna,
        crowd,
        calibration,
        forecast,
    })
}

/// Runs every event in order, stopping at the first fatal error.
pub fn run_batch(events: &[EventSpec], options: &PipelineOptions) -> Result<Vec<PipelineRun>> {
    events
        .iter()
        .map(|e| {
            run_pipeline(e, options).map_err(|err| match err {
                Error::Config(m) => Error::Config(format!("event {}: {m}", e.id)),
                other => other,
            })
        })
        .collect()
}
