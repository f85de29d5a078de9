//! Event registry, news ingestion and durable article storage.

mod event;
pub mod provider;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use event::{EventKind, EventRegistry, EventSpec, TimeWindow};
pub use provider::{fetch_all, fetch_articles, ProviderConfig, ProviderKind};

/// Allowed distance, in days, between an article's date and the event window.
pub const INGEST_SKEW_DAYS: i64 = 1;

/// Per-event cap on ingested articles.
pub const DEFAULT_ARTICLE_CAP: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub source: String,
    pub title: String,
    pub body: String,
    pub published_at: DateTime<Utc>,
    pub url: String,
    pub event_id: String,
}

impl Article {
    pub fn new(
        event_id: &str,
        source: &str,
        title: &str,
        body: &str,
        url: &str,
        published_at: DateTime<Utc>,
    ) -> Self {
        Article {
            id: article_id(url, title),
            source: source.to_string(),
            title: title.to_string(),
            body: body.to_string(),
            published_at,
            url: url.to_string(),
            event_id: event_id.to_string(),
        }
    }

    /// Title and body as one document.
    pub fn text(&self) -> String {
        if self.body.trim().is_empty() {
            self.title.clone()
        } else {
            format!("{}\n\n{}", self.title, self.body)
        }
    }
}

/// Hex SHA-256 over `url`, a newline, and `title`.
pub fn article_id(url: &str, title: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(url.as_bytes());
    hasher.update(b"\n");
    hasher.update(title.as_bytes());
    hex::encode(hasher.finalize())
}

/// Keeps the first occurrence of every article id, preserving order.
pub fn dedupe(articles: Vec<Article>) -> Vec<Article> {
    let mut seen = HashSet::new();
    articles
        .into_iter()
        .filter(|a| seen.insert(a.id.clone()))
        .collect()
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// True when any keyword occurs in `text` as a whole-token sequence
/// (case-insensitive, so "EU" does not match "Europe").
pub fn matches_any_keyword(text: &str, keywords: &[String]) -> bool {
    let tokens = tokenize(text);
    keywords.iter().any(|k| {
        let needle = tokenize(k);
        !needle.is_empty() && tokens.windows(needle.len()).any(|w| w == needle.as_slice())
    })
}

static STORE_LOCK: Mutex<()> = Mutex::new(());

/// Writes one JSON article per line. The file is replaced atomically, so
/// concurrent readers see either the old or the new corpus.
pub fn store_corpus(articles: &[Article], path: &Path) -> Result<()> {
    let _guard = STORE_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut out = BufWriter::new(file);
        for article in articles {
            serde_json::to_writer(&mut out, article)?;
            out.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
        }
        out.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: &Path) -> Result<Vec<Article>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut articles = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let article = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        articles.push(article);
    }
    Ok(articles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "YES")]
    Yes,
    #[serde(rename = "NO")]
    No,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Yes => "YES",
            Outcome::No => "NO",
        })
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "YES" => Ok(Outcome::Yes),
            "NO" => Ok(Outcome::No),
            other => Err(Error::InvalidInput(format!(
                "outcome must be YES or NO, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub article_id: String,
    pub outcome: Outcome,
}

/// Reads an `article_id,outcome` CSV. Duplicate article ids are rejected.
pub fn read_labels(path: &Path) -> Result<Vec<Label>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let (Some(id), Some(outcome)) = (record.get(0), record.get(1)) else {
            return Err(parse_err("expected article_id,outcome".into()));
        };
        let outcome = outcome
            .parse::<Outcome>()
            .map_err(|e| parse_err(e.to_string()))?;
        let id = id.trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(parse_err(format!("second label for article {id}")));
        }
        labels.push(Label {
            article_id: id,
            outcome,
        });
    }
    Ok(labels)
}

pub fn write_labels(labels: &[Label], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["article_id", "outcome"])?;
    for label in labels {
        writer.write_record([label.article_id.as_str(), &label.outcome.to_string()])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Index labels by article id, checking that each references a known article.
pub fn index_labels(labels: &[Label], articles: &[Article]) -> Result<BTreeMap<String, Outcome>> {
    let known: HashSet<&str> = articles.iter().map(|a| a.id.as_str()).collect();
    labels
        .iter()
        .map(|l| {
            if known.contains(l.article_id.as_str()) {
                Ok((l.article_id.clone(), l.outcome))
            } else {
                Err(Error::InvalidInput(format!(
                    "label references unknown article {}",
                    l.article_id
                )))
            }
        })
        .collect()
}
