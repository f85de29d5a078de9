//! News provider adapters.
//!
//! Each provider speaks its own query and response JSON; an adapter turns an
//! event's keywords and window into a request and the response into
//! [`Article`]s. Requests go through a [`Transport`] so tests can serve
//! provider-shaped JSON from disk instead of the network.

use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde_json::Value;

use super::{
    dedupe, matches_any_keyword, Article, EventSpec, DEFAULT_ARTICLE_CAP, INGEST_SKEW_DAYS,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProviderKind {
    NewsApi,
    NewsData,
    MediaCloud,
}

impl ProviderKind {
    pub const ALL: [ProviderKind; 3] = [
        ProviderKind::NewsApi,
        ProviderKind::NewsData,
        ProviderKind::MediaCloud,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProviderKind::NewsApi => "newsapi",
            ProviderKind::NewsData => "newsdata",
            ProviderKind::MediaCloud => "mediacloud",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown news provider {name}")))
    }

    /// Environment variable holding the provider credential.
    pub fn key_env(self) -> &'static str {
        match self {
            ProviderKind::NewsApi => "MERCATOR_NEWSAPI_KEY",
            ProviderKind::NewsData => "MERCATOR_NEWSDATA_KEY",
            ProviderKind::MediaCloud => "MERCATOR_MEDIACLOUD_KEY",
        }
    }

    pub fn default_base_url(self) -> &'static str {
        match self {
            ProviderKind::NewsApi => "https://newsapi.org",
            ProviderKind::NewsData => "https://newsdata.io",
            ProviderKind::MediaCloud => "https://search.mediacloud.org",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: String,
    pub api_key: String,
    pub max_articles: usize,
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl ProviderConfig {
    pub fn new(
        kind: ProviderKind,
        base_url: impl Into<String>,
        api_key: impl Into<String>,
    ) -> Self {
        ProviderConfig {
            kind,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            max_articles: DEFAULT_ARTICLE_CAP,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }

    /// Reads the credential from the provider's environment variable.
    pub fn from_env(kind: ProviderKind) -> Result<Self> {
        let key = std::env::var(kind.key_env()).map_err(|_| {
            Error::Config(format!(
                "{}: set {} to the API key",
                kind.name(),
                kind.key_env()
            ))
        })?;
        Ok(Self::new(kind, kind.default_base_url(), key))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HttpRequest {
    pub url: String,
    pub query: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// A GET transport; `Err` means the request never produced a response.
pub trait Transport: Send + Sync {
    fn get(&self, request: &HttpRequest) -> std::result::Result<HttpResponse, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl Transport for UreqTransport {
    fn get(&self, request: &HttpRequest) -> std::result::Result<HttpResponse, String> {
        let mut builder = self.agent.get(&request.url);
        for (k, v) in &request.query {
            builder = builder.query(k, v);
        }
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        let mut response = builder.call().map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Serves `<dir>/<provider>.json` for every request, as a single page.
pub struct FixtureTransport {
    path: PathBuf,
}

impl FixtureTransport {
    /// `None` when the directory holds no file for this provider.
    pub fn for_provider(dir: &Path, kind: ProviderKind) -> Option<Self> {
        let path = dir.join(format!("{}.json", kind.name()));
        path.is_file().then_some(FixtureTransport { path })
    }
}

impl Transport for FixtureTransport {
    fn get(&self, _request: &HttpRequest) -> std::result::Result<HttpResponse, String> {
        std::fs::read_to_string(&self.path)
            .map(|body| HttpResponse { status: 200, body })
            .map_err(|e| format!("{}: {e}", self.path.display()))
    }
}

struct RawArticle {
    source: String,
    title: String,
    body: String,
    url: String,
    published_at: DateTime<Utc>,
}

struct Page {
    items: Vec<RawArticle>,
    cursor: Option<String>,
}

const NEWSAPI_PAGE_SIZE: usize = 100;

fn build_request(config: &ProviderConfig, event: &EventSpec, cursor: Option<&str>) -> HttpRequest {
    let keywords: Vec<String> = event
        .keywords
        .iter()
        .filter(|k| !k.trim().is_empty())
        .map(|k| {
            if k.contains(' ') {
                format!("\"{k}\"")
            } else {
                k.clone()
            }
        })
        .collect();
    let q = keywords.join(" OR ");
    let from = event.window.start.to_string();
    let to = event.window.end.to_string();
    let pairs = |items: &[(&str, &str)]| -> Vec<(String, String)> {
        items
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    };
    match config.kind {
        ProviderKind::NewsApi => {
            let page_size = NEWSAPI_PAGE_SIZE.to_string();
            let mut query = pairs(&[
                ("q", &q),
                ("from", &from),
                ("to", &to),
                ("language", "en"),
                ("sortBy", "publishedAt"),
                ("pageSize", &page_size),
            ]);
            query.push(("page".into(), cursor.unwrap_or("1").to_string()));
            HttpRequest {
                url: format!("{}/v2/everything", config.base_url),
                query,
                headers: pairs(&[("X-Api-Key", &config.api_key)]),
            }
        }
        ProviderKind::NewsData => {
            let mut query = pairs(&[
                ("apikey", &config.api_key),
                ("q", &q),
                ("from_date", &from),
                ("to_date", &to),
                ("language", "en"),
            ]);
            if let Some(c) = cursor {
                query.push(("page".into(), c.to_string()));
            }
            HttpRequest {
                url: format!("{}/api/1/archive", config.base_url),
                query,
                headers: vec![],
            }
        }
        ProviderKind::MediaCloud => {
            let mut query = pairs(&[("q", &q), ("start", &from), ("end", &to)]);
            if let Some(c) = cursor {
                query.push(("pagination_token".into(), c.to_string()));
            }
            HttpRequest {
                url: format!("{}/api/search/story-list", config.base_url),
                query,
                headers: pairs(&[("Authorization", &format!("Token {}", config.api_key))]),
            }
        }
    }
}

/// Accepts RFC 3339, `YYYY-MM-DD HH:MM:SS` (UTC) and bare dates.
fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(d) = DateTime::parse_from_rfc3339(s) {
        return Some(d.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S%.f",
    ] {
        if let Ok(d) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&d));
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight")))
}

fn str_field<'a>(v: &'a Value, key: &str) -> &'a str {
    v.get(key).and_then(Value::as_str).unwrap_or("")
}

fn join_nonempty(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn parse_page(
    kind: ProviderKind,
    body: &str,
    fetched_so_far: usize,
    page_no: usize,
) -> Result<Page> {
    let malformed = |message: String| Error::Upstream {
        provider: kind.name().into(),
        message,
    };
    let root: Value = serde_json::from_str(body).map_err(|e| malformed(e.to_string()))?;
    let (items, cursor) = match kind {
        ProviderKind::NewsApi => {
            let items = root
                .get("articles")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("missing articles array".into()))?;
            let total = root
                .get("totalResults")
                .and_then(Value::as_u64)
                .unwrap_or(0) as usize;
            let more = !items.is_empty() && fetched_so_far + items.len() < total;
            (items, more.then(|| (page_no + 1).to_string()))
        }
        ProviderKind::NewsData => {
            let items = root
                .get("results")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("missing results array".into()))?;
            let next = root
                .get("nextPage")
                .and_then(Value::as_str)
                .filter(|s| !s.is_empty() && !items.is_empty())
                .map(str::to_owned);
            (items, next)
        }
        ProviderKind::MediaCloud => {
            let items = root
                .get("stories")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("missing stories array".into()))?;
            let next = root
                .get("pagination_token")
                .and_then(Value::as_str)
                .filter(|s| !s.is_empty() && !items.is_empty())
                .map(str::to_owned);
            (items, next)
        }
    };

    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let (source, title, body, url, date) = match kind {
            ProviderKind::NewsApi => (
                item.get("source")
                    .map(|s| str_field(s, "name"))
                    .unwrap_or(""),
                str_field(item, "title"),
                join_nonempty(&[str_field(item, "description"), str_field(item, "content")]),
                str_field(item, "url"),
                str_field(item, "publishedAt"),
            ),
            ProviderKind::NewsData => (
                str_field(item, "source_id"),
                str_field(item, "title"),
                join_nonempty(&[str_field(item, "description"), str_field(item, "content")]),
                str_field(item, "link"),
                str_field(item, "pubDate"),
            ),
            ProviderKind::MediaCloud => (
                str_field(item, "media_name"),
                str_field(item, "title"),
                str_field(item, "text").to_string(),
                str_field(item, "url"),
                str_field(item, "publish_date"),
            ),
        };
        // NewsAPI replaces takedowns with "[Removed]" placeholders.
        if title.trim().is_empty() || url.trim().is_empty() || title == "[Removed]" {
            continue;
        }
        let Some(published_at) = parse_timestamp(date) else {
            tracing::warn!(
                provider = kind.name(),
                url,
                date,
                "skipping article with bad date"
            );
            continue;
        };
        out.push(RawArticle {
            source: if source.is_empty() {
                kind.name()
            } else {
                source
            }
            .to_string(),
            title: title.trim().to_string(),
            body,
            url: url.trim().to_string(),
            published_at,
        });
    }
    Ok(Page { items: out, cursor })
}

fn get_with_retry(
    config: &ProviderConfig,
    transport: &dyn Transport,
    request: &HttpRequest,
) -> Result<String> {
    let provider = config.kind.name();
    let mut backoff = config.initial_backoff;
    let mut last = String::new();
    for attempt in 0..=config.max_retries {
        if attempt > 0 {
            std::thread::sleep(backoff);
            backoff *= 2;
        }
        match transport.get(request) {
            Ok(r) if r.status == 200 => return Ok(r.body),
            Ok(r) if r.status == 401 || r.status == 403 => {
                return Err(Error::Credential {
                    provider: provider.into(),
                    status: r.status,
                })
            }
            Ok(r) if r.status == 429 || r.status >= 500 => {
                last = format!("HTTP {}", r.status);
            }
            Ok(r) => {
                return Err(Error::Upstream {
                    provider: provider.into(),
                    message: format!(
                        "HTTP {}: {}",
                        r.status,
                        r.body.chars().take(200).collect::<String>()
                    ),
                })
            }
            Err(e) => last = e,
        }
        tracing::debug!(provider, attempt, error = %last, "retrying request");
    }
    Err(Error::Network {
        provider: provider.into(),
        message: format!("{last} after {} retries", config.max_retries),
    })
}

/// Fetches every article in the event window that mentions at least one
/// keyword. Results are re-filtered locally, deduplicated and capped.
pub fn fetch_articles(
    event: &EventSpec,
    config: &ProviderConfig,
    transport: &dyn Transport,
) -> Result<Vec<Article>> {
    let mut raw = Vec::new();
    let mut cursor: Option<String> = None;
    let mut page_no = 1;
    loop {
        let request = build_request(config, event, cursor.as_deref());
        let body = get_with_retry(config, transport, &request)?;
        let page = parse_page(config.kind, &body, raw.len(), page_no)?;
        raw.extend(page.items);
        match page.cursor {
            Some(next) if raw.len() < config.max_articles && Some(&next) != cursor.as_ref() => {
                cursor = Some(next);
                page_no += 1;
            }
            _ => break,
        }
    }

    let articles: Vec<Article> = raw
        .into_iter()
        .filter(|r| {
            event
                .window
                .contains_with_skew(r.published_at.date_naive(), INGEST_SKEW_DAYS)
        })
        .filter(|r| matches_any_keyword(&format!("{}\n{}", r.title, r.body), &event.keywords))
        .map(|r| {
            Article::new(
                &event.id,
                &r.source,
                &r.title,
                &r.body,
                &r.url,
                r.published_at,
            )
        })
        .collect();
    let mut articles = dedupe(articles);
    articles.truncate(config.max_articles);
    Ok(articles)
}

/// Fetches from several providers concurrently and merges the results in
/// provider order.
pub fn fetch_all(
    event: &EventSpec,
    providers: &[(ProviderConfig, Box<dyn Transport>)],
) -> Result<Vec<Article>> {
    let results: Vec<Result<Vec<Article>>> = std::thread::scope(|s| {
        let handles: Vec<_> = providers
            .iter()
            .map(|(cfg, transport)| s.spawn(move || fetch_articles(event, cfg, transport.as_ref())))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("provider fetch panicked"))
            .collect()
    });
    let mut merged = Vec::new();
    for r in results {
        merged.extend(r?);
    }
    let cap = providers
        .iter()
        .map(|(c, _)| c.max_articles)
        .max()
        .unwrap_or(DEFAULT_ARTICLE_CAP);
    let mut merged = dedupe(merged);
    merged.truncate(cap);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    fn event() -> EventSpec {
        serde_json::from_value(serde_json::json!({
            "id": "tariffs",
            "statement": "s",
            "kind": "discrete",
            "resolution_date": "2025-09-28",
            "keywords": ["tariff", "EU"],
            "window": {"start": "2025-06-01", "end": "2025-07-30"},
            "summary_text": "x",
            "macro_p_yes": 0.5,
            "ipf_weights": {"w_lstm": 0.0, "w_sna": 0.5, "w_crowd": 0.1, "w_macro": 0.4}
        }))
        .unwrap()
    }

    struct Scripted {
        responses: Mutex<Vec<std::result::Result<HttpResponse, String>>>,
        calls: AtomicUsize,
    }

    impl Scripted {
        fn new(mut responses: Vec<std::result::Result<HttpResponse, String>>) -> Self {
            responses.reverse();
            Scripted {
                responses: Mutex::new(responses),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl Transport for Scripted {
        fn get(&self, _: &HttpRequest) -> std::result::Result<HttpResponse, String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.responses
                .lock()
                .unwrap()
                .pop()
                .expect("script exhausted")
        }
    }

    fn ok(body: &str) -> std::result::Result<HttpResponse, String> {
        Ok(HttpResponse {
            status: 200,
            body: body.into(),
        })
    }

    fn status(code: u16) -> std::result::Result<HttpResponse, String> {
        Ok(HttpResponse {
            status: code,
            body: String::new(),
        })
    }

    fn fast(kind: ProviderKind) -> ProviderConfig {
        let mut c = ProviderConfig::new(kind, "http://fixture", "k");
        c.initial_backoff = Duration::from_millis(1);
        c
    }

    const NEWSAPI: &str = r#"{"status":"ok","totalResults":4,"articles":[
        {"source":{"name":"Reuters"},"title":"EU braces for tariff hike","description":"d","content":"c","url":"https://r/1","publishedAt":"2025-07-01T10:00:00Z"},
        {"source":{"name":"AP"},"title":"Weather in Europe","description":"sunny","content":null,"url":"https://r/2","publishedAt":"2025-07-02T10:00:00Z"},
        {"source":{"name":"AP"},"title":"Tariff talk","description":"","content":"","url":"https://r/3","publishedAt":"2025-03-01T10:00:00Z"},
        {"source":{"name":"AP"},"title":"[Removed]","description":"","content":"","url":"https://removed","publishedAt":"2025-07-01T10:00:00Z"}
    ]}"#;

    #[test]
    fn newsapi_mapping_filters_keywords_and_window() {
        let t = Scripted::new(vec![ok(NEWSAPI)]);
        let got = fetch_articles(&event(), &fast(ProviderKind::NewsApi), &t).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].source, "Reuters");
        assert_eq!(got[0].body, "d\n\nc");
        assert_eq!(got[0].event_id, "tariffs");
        assert_eq!(
            got[0].id,
            super::super::article_id("https://r/1", "EU braces for tariff hike")
        );
    }

    #[test]
    fn newsdata_and_mediacloud_shapes() {
        let nd = r#"{"status":"success","results":[
            {"title":"Tariff escalation","link":"https://nd/1","description":"EU reacts","content":"","pubDate":"2025-06-15 09:00:00","source_id":"ft"}
        ],"nextPage":null}"#;
        let got = fetch_articles(
            &event(),
            &fast(ProviderKind::NewsData),
            &Scripted::new(vec![ok(nd)]),
        )
        .unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].source, "ft");

        let mc = r#"{"stories":[
            {"title":"New tariff round","url":"https://mc/1","publish_date":"2025-07-30","media_name":"wsj"},
            {"title":"New tariff round","url":"https://mc/1","publish_date":"2025-07-30","media_name":"wsj"}
        ],"pagination_token":null}"#;
        let got = fetch_articles(
            &event(),
            &fast(ProviderKind::MediaCloud),
            &Scripted::new(vec![ok(mc)]),
        )
        .unwrap();
        assert_eq!(got.len(), 1);
        assert!(got[0].body.is_empty());
    }

    #[test]
    fn follows_cursors_until_exhausted() {
        let p1 = r#"{"stories":[{"title":"tariff one","url":"https://mc/1","publish_date":"2025-07-01"}],"pagination_token":"abc"}"#;
        let p2 = r#"{"stories":[{"title":"tariff two","url":"https://mc/2","publish_date":"2025-07-02"}],"pagination_token":null}"#;
        let t = Scripted::new(vec![ok(p1), ok(p2)]);
        let got = fetch_articles(&event(), &fast(ProviderKind::MediaCloud), &t).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(t.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn retries_rate_limits_then_succeeds() {
        let t = Scripted::new(vec![status(429), Err("reset".into()), ok(NEWSAPI)]);
        let got = fetch_articles(&event(), &fast(ProviderKind::NewsApi), &t).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_bounded_retries() {
        let t = Scripted::new(vec![status(503); 4]);
        let err = fetch_articles(&event(), &fast(ProviderKind::NewsApi), &t).unwrap_err();
        assert!(matches!(err, Error::Network { .. }));
        assert_eq!(t.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn credential_rejection_is_fatal_and_named() {
        let t = Scripted::new(vec![status(401)]);
        let err = fetch_articles(&event(), &fast(ProviderKind::NewsData), &t).unwrap_err();
        assert!(err.to_string().contains("newsdata"), "{err}");
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn empty_result_is_empty_list() {
        let t = Scripted::new(vec![ok(
            r#"{"status":"ok","totalResults":0,"articles":[]}"#,
        )]);
        assert!(fetch_articles(&event(), &fast(ProviderKind::NewsApi), &t)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn cap_truncates() {
        let mut cfg = fast(ProviderKind::NewsApi);
        cfg.max_articles = 1;
        let body = r#"{"status":"ok","totalResults":2,"articles":[
            {"title":"tariff a","url":"https://a","publishedAt":"2025-07-01T00:00:00Z"},
            {"title":"tariff b","url":"https://b","publishedAt":"2025-07-01T00:00:00Z"}]}"#;
        let got = fetch_articles(&event(), &cfg, &Scripted::new(vec![ok(body)])).unwrap();
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn request_shapes() {
        let e = event();
        let r = build_request(&fast(ProviderKind::NewsApi), &e, None);
        assert_eq!(r.url, "http://fixture/v2/everything");
        assert!(r.query.contains(&("q".into(), "tariff OR EU".into())));
        assert!(r.query.contains(&("from".into(), "2025-06-01".into())));
        assert!(r.headers.contains(&("X-Api-Key".into(), "k".into())));
        let r = build_request(&fast(ProviderKind::MediaCloud), &e, Some("tok"));
        assert!(r.query.contains(&("pagination_token".into(), "tok".into())));
        assert!(r
            .headers
            .contains(&("Authorization".into(), "Token k".into())));
    }

    #[test]
    fn timestamps() {
        assert!(parse_timestamp("2025-07-01T10:00:00+02:00").is_some());
        assert!(parse_timestamp("2025-07-01 10:00:00").is_some());
        assert!(parse_timestamp("2025-07-01").is_some());
        assert!(parse_timestamp("yesterday").is_none());
    }

    #[test]
    fn fetch_all_merges_and_dedupes() {
        let providers: Vec<(ProviderConfig, Box<dyn Transport>)> = vec![
            (
                fast(ProviderKind::NewsApi),
                Box::new(Scripted::new(vec![ok(NEWSAPI)])),
            ),
            (
                fast(ProviderKind::NewsApi),
                Box::new(Scripted::new(vec![ok(NEWSAPI)])),
            ),
        ];
        assert_eq!(fetch_all(&event(), &providers).unwrap().len(), 1);
    }
}
