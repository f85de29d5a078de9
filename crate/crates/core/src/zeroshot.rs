//! Zero-shot LLM classification of articles into YES / NO.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{Article, EventSpec};
use crate::error::{Error, Result};
use crate::pca::EventProbability;

pub const PROMPT_TEMPLATE: &str = "You are a specialized classification agent.

Your task is to analyze news articles and determine whether each one indicates a \"YES\" or \"NO\" outcome for a specific binary event.

Objective: Semantically analyze the news article using your full understanding of language and context. Determine which outcome cluster the article aligns with: YES or NO. Base your decision solely on the article content and its relevance to the event.

Output Format (Strict): Respond with only one of the following, using ALL CAPS with double curly braces: {{YES}} {{NO}}

You must not provide any explanation, commentary, or additional text. Event Context: The binary event is: {{binary_event}}

Classify the Following News Article: {{news_article}}

Enforcement Reminder: Do not explain your choice. Do not output anything except {{YES}} or {{NO}}.";

const EVENT_SLOT: &str = "{{binary_event}}";
const ARTICLE_SLOT: &str = "{{news_article}}";

pub const DEFAULT_PARALLELISM: usize = 4;

/// A malformed reply is retried once.
pub const MAX_ATTEMPTS: u32 = 2;

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const URL_ENV: &str = "MERCATOR_LLM_URL";
pub const KEY_ENV: &str = "MERCATOR_LLM_KEY";
pub const MODEL_ENV: &str = "MERCATOR_LLM_MODEL";

const PROVIDER: &str = "llm";

/// Fills both slots of [`PROMPT_TEMPLATE`] in one left-to-right pass, so
/// placeholder-like text inside the event or article is left alone.
pub fn build_prompt(event: &EventSpec, article: &Article) -> String {
    render(&event.statement, &article.text())
}

fn render(event: &str, article: &str) -> String {
    let mut out = String::with_capacity(PROMPT_TEMPLATE.len() + event.len() + article.len());
    let mut rest = PROMPT_TEMPLATE;
    loop {
        let next = [(EVENT_SLOT, event), (ARTICLE_SLOT, article)]
            .into_iter()
            .filter_map(|(slot, value)| rest.find(slot).map(|i| (i, slot, value)))
            .min_by_key(|(i, _, _)| *i);
        match next {
            Some((i, slot, value)) => {
                out.push_str(&rest[..i]);
                out.push_str(value);
                rest = &rest[i + slot.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictValue {
    Yes,
    No,
    Malformed,
}

impl VerdictValue {
    /// The exact reply text for a valid verdict.
    pub fn render(self) -> Option<&'static str> {
        match self {
            VerdictValue::Yes => Some("{{YES}}"),
            VerdictValue::No => Some("{{NO}}"),
            VerdictValue::Malformed => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub article_id: String,
    pub value: VerdictValue,
    pub attempts: u32,
}

pub fn parse_verdict(completion: &str) -> VerdictValue {
    match completion.trim() {
        "{{YES}}" => VerdictValue::Yes,
        "{{NO}}" => VerdictValue::No,
        _ => VerdictValue::Malformed,
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

/// OpenAI-style chat-completions client with temperature pinned to zero.
pub struct HttpChatClient {
    url: String,
    api_key: String,
    model: String,
    agent: ureq::Agent,
    max_retries: u32,
    initial_backoff: Duration,
}

impl HttpChatClient {
    pub fn new(
        url: impl Into<String>,
        api_key: impl Into<String>,
        model: impl Into<String>,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpChatClient {
            url: url.into(),
            api_key: api_key.into(),
            model: model.into(),
            agent,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }

    pub fn from_env() -> Result<Self> {
        let url =
            std::env::var(URL_ENV).map_err(|_| Error::Config(format!("{URL_ENV} is not set")))?;
        let key =
            std::env::var(KEY_ENV).map_err(|_| Error::Config(format!("{KEY_ENV} is not set")))?;
        let model = std::env::var(MODEL_ENV).unwrap_or_else(|_| DEFAULT_MODEL.into());
        Ok(Self::new(url, key, model))
    }

    pub fn with_backoff(mut self, max_retries: u32, initial: Duration) -> Self {
        self.max_retries = max_retries;
        self.initial_backoff = initial;
        self
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let payload = serde_json::to_string(&ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: 0.0,
        })?;
        let mut backoff = self.initial_backoff;
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            let sent = self
                .agent
                .post(&self.url)
                .header("Authorization", &format!("Bearer {}", self.api_key))
                .header("Content-Type", "application/json")
                .send(payload.as_str());
            let mut resp = match sent {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let body = match resp.body_mut().read_to_string() {
                Ok(b) => b,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            match status {
                200 => {
                    let parsed: ChatResponse =
                        serde_json::from_str(&body).map_err(|e| Error::Upstream {
                            provider: PROVIDER.into(),
                            message: format!("malformed completion: {e}"),
                        })?;
                    return Ok(parsed
                        .choices
                        .into_iter()
                        .next()
                        .and_then(|c| c.message.content)
                        .unwrap_or_default());
                }
                401 | 403 => {
                    return Err(Error::Credential {
                        provider: PROVIDER.into(),
                        status,
                    })
                }
                429 | 500..=599 => last = format!("HTTP {status}"),
                _ => {
                    return Err(Error::Upstream {
                        provider: PROVIDER.into(),
                        message: format!("HTTP {status}"),
                    })
                }
            }
        }
        Err(Error::Network {
            provider: PROVIDER.into(),
            message: format!("{last} after {} retries", self.max_retries),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ScriptRule {
    #[serde(rename = "match")]
    pattern: String,
    responses: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct Script {
    default: String,
    #[serde(default)]
    responses: Vec<ScriptRule>,
}

/// Scripted client for offline runs.
///
/// The script is `{"default": "...", "responses": [{"match": "...",
/// "responses": [...]}]}`. The first rule whose `match` occurs in the prompt
/// answers with its replies in order, repeating the last one once exhausted;
/// prompts matching no rule get `default`.
pub struct FixtureChatClient {
    script: Script,
    cursors: Mutex<BTreeMap<usize, usize>>,
    calls: AtomicUsize,
}

impl FixtureChatClient {
    pub fn always(reply: &str) -> Self {
        Self::from_script(Script {
            default: reply.into(),
            responses: vec![],
        })
    }

    /// Rules given as `(pattern, replies)`.
    pub fn scripted(default: &str, rules: &[(&str, &[&str])]) -> Self {
        Self::from_script(Script {
            default: default.into(),
            responses: rules
                .iter()
                .map(|(p, r)| ScriptRule {
                    pattern: (*p).into(),
                    responses: r.iter().map(|s| (*s).into()).collect(),
                })
                .collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let script: Script = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if script.responses.iter().any(|r| r.responses.is_empty()) {
            return Err(Error::Config(format!(
                "{}: every scripted rule needs at least one reply",
                path.display()
            )));
        }
        Ok(Self::from_script(script))
    }

    fn from_script(script: Script) -> Self {
        FixtureChatClient {
            script,
            cursors: Mutex::new(BTreeMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for FixtureChatClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let Some((idx, rule)) = self
            .script
            .responses
            .iter()
            .enumerate()
            .find(|(_, r)| prompt.contains(&r.pattern))
        else {
            return Ok(self.script.default.clone());
        };
        let mut cursors = self.cursors.lock().expect("fixture cursor lock");
        let cursor = cursors.entry(idx).or_insert(0);
        let reply = rule.responses[(*cursor).min(rule.responses.len() - 1)].clone();
        *cursor += 1;
        Ok(reply)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    /// Sorted by article id.
    pub verdicts: Vec<Verdict>,
    /// Articles whose classification failed, with the reason.
    pub errors: Vec<(String, String)>,
    pub calls: usize,
}

/// Budgeted selection: newest first, article id breaking ties.
pub fn select_for_budget(articles: &[Article], budget: usize) -> Vec<&Article> {
    let mut sorted: Vec<&Article> = articles.iter().collect();
    sorted.sort_by(|a, b| b.published_at.cmp(&a.published_at).then(a.id.cmp(&b.id)));
    sorted.truncate(budget);
    sorted
}

fn classify_one(
    client: &dyn ChatClient,
    event: &EventSpec,
    article: &Article,
    calls: &AtomicUsize,
) -> Result<Verdict> {
    let prompt = build_prompt(event, article);
    let mut value = VerdictValue::Malformed;
    let mut attempts = 0;
    while attempts < MAX_ATTEMPTS {
        attempts += 1;
        calls.fetch_add(1, Ordering::SeqCst);
        let reply = client.complete(&prompt)?;
        value = parse_verdict(&reply);
        if value != VerdictValue::Malformed {
            break;
        }
        tracing::debug!(article = %article.id, attempts, "malformed verdict");
    }
    Ok(Verdict {
        article_id: article.id.clone(),
        value,
        attempts,
    })
}

/// Classifies up to `budget` articles with `parallelism` concurrent workers.
/// Failed articles are reported in [`BatchOutcome::errors`] rather than
/// aborting the batch, except that rejected credentials abort immediately.
pub fn classify_batch(
    client: &dyn ChatClient,
    event: &EventSpec,
    articles: &[Article],
    budget: usize,
    parallelism: usize,
) -> Result<BatchOutcome> {
    if budget == 0 {
        return Err(Error::Config("zero-shot budget must be at least 1".into()));
    }
    let selected = select_for_budget(articles, budget);
    let next = AtomicUsize::new(0);
    let calls = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(selected.len()));
    let workers = parallelism.clamp(1, selected.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(article) = selected.get(i) else {
                    break;
                };
                let r = classify_one(client, event, article, &calls);
                results
                    .lock()
                    .expect("result lock")
                    .push((article.id.clone(), r));
            });
        }
    });

    let mut verdicts = Vec::new();
    let mut errors = Vec::new();
    for (id, r) in results.into_inner().expect("result lock") {
        match r {
            Ok(v) => verdicts.push(v),
            Err(e @ Error::Credential { .. }) => return Err(e),
            Err(e) => errors.push((id, e.to_string())),
        }
    }
    verdicts.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    errors.sort();
    Ok(BatchOutcome {
        verdicts,
        errors,
        calls: calls.into_inner(),
    })
}

/// Share of YES among valid verdicts; malformed ones count for neither side.
pub fn ratio(verdicts: &[Verdict]) -> Result<EventProbability> {
    let yes = verdicts
        .iter()
        .filter(|v| v.value == VerdictValue::Yes)
        .count();
    let no = verdicts
        .iter()
        .filter(|v| v.value == VerdictValue::No)
        .count();
    if yes + no == 0 {
        return Err(Error::no_signal("zeroshot", "no valid verdicts"));
    }
    Ok(EventProbability::from_yes(yes as f64 / (yes + no) as f64))
}
