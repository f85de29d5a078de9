use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use tiny_http::{Header, Response, Server};

use mercator_core::clock::FixedClock;
use mercator_core::corpus::provider::{fetch_articles, UreqTransport};
use mercator_core::corpus::{EventSpec, ProviderConfig, ProviderKind};
use mercator_core::markets::{PolymarketClient, QuoteSource};
use mercator_core::zeroshot::{ChatClient, HttpChatClient};
use mercator_core::Error;

#[derive(Debug, Clone)]
struct Seen {
    url: String,
    headers: Vec<(String, String)>,
    body: String,
}

/// Serves canned responses; `reply` sees the request number and the request.
struct Mock {
    server: Arc<Server>,
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
    worker: Option<JoinHandle<()>>,
}

impl Mock {
    fn start(reply: impl Fn(usize, &Seen) -> (u16, String) + Send + 'static) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}", server.server_addr().to_ip().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let worker = {
            let (server, seen) = (Arc::clone(&server), Arc::clone(&seen));
            let count = AtomicUsize::new(0);
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let s = Seen {
                        url: req.url().to_string(),
                        headers: req
                            .headers()
                            .iter()
                            .map(|h| (h.field.to_string().to_lowercase(), h.value.to_string()))
                            .collect(),
                        body,
                    };
                    let (status, text) = reply(count.fetch_add(1, Ordering::SeqCst), &s);
                    seen.lock().unwrap().push(s);
                    let ct = Header::from_bytes("Content-Type", "application/json").unwrap();
                    let _ = req.respond(
                        Response::from_string(text)
                            .with_status_code(status)
                            .with_header(ct),
                    );
                }
            })
        };
        Mock {
            server,
            url,
            seen,
            worker: Some(worker),
        }
    }

    fn seen(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

impl Drop for Mock {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn header<'a>(s: &'a Seen, name: &str) -> Option<&'a str> {
    s.headers
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.as_str())
}

fn event() -> EventSpec {
    serde_json::from_value(serde_json::json!({
        "id": "tariffs",
        "statement": "The US raises tariffs",
        "kind": "discrete",
        "resolution_date": "2025-09-28",
        "keywords": ["tariffs", "EU"],
        "window": {"start": "2025-06-01", "end": "2025-07-30"},
        "summary_text": "The US raises tariffs on the EU",
        "macro_p_yes": 0.56,
        "ipf_weights": {"w_lstm": 0.0, "w_sna": 0.5, "w_crowd": 0.1, "w_macro": 0.4}
    }))
    .unwrap()
}

fn newsapi_page(titles: &[&str], total: usize) -> String {
    let articles: Vec<_> = titles
        .iter()
        .map(|t| {
            serde_json::json!({
                "source": {"name": "Wire"},
                "title": t,
                "description": "tariffs on the EU",
                "url": format!("https://news.example/{}", t.replace(' ', "-")),
                "publishedAt": "2025-07-01T10:00:00Z"
            })
        })
        .collect();
    serde_json::json!({"status": "ok", "totalResults": total, "articles": articles}).to_string()
}

fn fast(kind: ProviderKind, url: &str) -> ProviderConfig {
    let mut cfg = ProviderConfig::new(kind, url, "secret-key");
    cfg.initial_backoff = Duration::from_millis(1);
    cfg
}

#[test]
fn newsapi_pages_through_real_http() {
    let mock = Mock::start(|n, _| match n {
        0 => (200, newsapi_page(&["one", "two"], 3)),
        _ => (200, newsapi_page(&["three"], 3)),
    });
    let articles = fetch_articles(
        &event(),
        &fast(ProviderKind::NewsApi, &mock.url),
        &UreqTransport::default(),
    )
    .unwrap();
    let titles: Vec<_> = articles.iter().map(|a| a.title.as_str()).collect();
    assert_eq!(titles, ["one", "two", "three"]);
    let seen = mock.seen();
    assert_eq!(seen.len(), 2);
    assert!(seen[0].url.starts_with("/v2/everything?"));
    assert!(seen[1].url.contains("page=2"));
    assert_eq!(header(&seen[0], "x-api-key"), Some("secret-key"));
}

#[test]
fn newsapi_retries_server_errors() {
    let mock = Mock::start(|n, _| match n {
        0 => (503, "{}".into()),
        _ => (200, newsapi_page(&["only"], 1)),
    });
    let articles = fetch_articles(
        &event(),
        &fast(ProviderKind::NewsApi, &mock.url),
        &UreqTransport::default(),
    )
    .unwrap();
    assert_eq!(articles.len(), 1);
    assert_eq!(mock.seen().len(), 2);
}

#[test]
fn rejected_key_is_a_credential_error() {
    let mock = Mock::start(|_, _| (401, r#"{"status":"error"}"#.into()));
    let err = fetch_articles(
        &event(),
        &fast(ProviderKind::NewsApi, &mock.url),
        &UreqTransport::default(),
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::Credential { status: 401, .. }),
        "{err}"
    );
    assert_eq!(mock.seen().len(), 1);
}

#[test]
fn polymarket_quote_over_http() {
    let mock = Mock::start(|_, _| {
        (
            200,
            r#"[{"slug":"m","outcomePrices":"[\"0.13\", \"0.87\"]","volumeNum":1234.5,"endDate":"2025-12-31T12:00:00Z"}]"#.into(),
        )
    });
    let now = Utc.with_ymd_and_hms(2025, 7, 30, 0, 0, 0).unwrap();
    let client = PolymarketClient::new(&mock.url, Box::new(FixedClock(now)));
    let q = client
        .fetch_quote("court-force-trump-refund-tariffs")
        .unwrap();
    assert_eq!(q.p_yes, 0.13);
    assert_eq!(q.volume, 1234.5);
    assert_eq!(q.resolution_date.to_string(), "2025-12-31");
    assert_eq!(q.fetched_at, now);
    assert_eq!(
        mock.seen()[0].url,
        "/markets?slug=court-force-trump-refund-tariffs"
    );
}

#[test]
fn polymarket_errors() {
    let mock = Mock::start(|n, _| match n {
        0 => (500, "{}".into()),
        _ => (200, "[]".into()),
    });
    let now = Utc.with_ymd_and_hms(2025, 7, 30, 0, 0, 0).unwrap();
    let client = PolymarketClient::new(&mock.url, Box::new(FixedClock(now)));
    assert!(client.fetch_quote("m").unwrap_err().is_upstream());
    assert!(matches!(
        client.fetch_quote("m").unwrap_err(),
        Error::InvalidInput(_)
    ));
}

fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
        .to_string()
}

#[test]
fn chat_client_sends_bearer_and_zero_temperature() {
    let mock = Mock::start(|_, _| (200, completion("{{YES}}")));
    let client = HttpChatClient::new(
        format!("{}/v1/chat/completions", mock.url),
        "sk-test",
        "gpt-4o",
    );
    assert_eq!(client.complete("prompt text").unwrap(), "{{YES}}");
    let seen = &mock.seen()[0];
    assert_eq!(header(seen, "authorization"), Some("Bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&seen.body).unwrap();
    assert_eq!(body["model"], "gpt-4o");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["content"], "prompt text");
}

#[test]
fn chat_client_retries_rate_limits() {
    let mock = Mock::start(|n, _| match n {
        0 | 1 => (429, "{}".into()),
        _ => (200, completion("{{NO}}")),
    });
    let client = HttpChatClient::new(&mock.url, "k", "m").with_backoff(3, Duration::from_millis(1));
    assert_eq!(client.complete("p").unwrap(), "{{NO}}");
    assert_eq!(mock.seen().len(), 3);
}

#[test]
fn chat_client_credential_and_exhaustion() {
    let denied = Mock::start(|_, _| (403, "{}".into()));
    let client =
        HttpChatClient::new(&denied.url, "k", "m").with_backoff(3, Duration::from_millis(1));
    assert!(matches!(
        client.complete("p").unwrap_err(),
        Error::Credential { status: 403, .. }
    ));

    let busy = Mock::start(|_, _| (500, "{}".into()));
    let client = HttpChatClient::new(&busy.url, "k", "m").with_backoff(2, Duration::from_millis(1));
    assert!(matches!(
        client.complete("p").unwrap_err(),
        Error::Network { .. }
    ));
    assert_eq!(busy.seen().len(), 3);
}
