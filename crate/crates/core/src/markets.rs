//! Prediction-market module.
//!
//! An event either has a market of its own (the direct case) or is explained
//! by a handful of proxy markets, each given a weight `w_i` for how much of
//! the event it accounts for. The weights sum to the coverage `ω ≤ 1`. The
//! inferred probability is the coverage-normalized mix of proxy prices; the
//! adjusted probability multiplies it back by `ω`, so thin coverage pulls the
//! estimate toward zero. A final decay softens prices inside the last week
//! before the markets resolve.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::{Error, Result};

/// Decay constant for near-resolution softening, per day.
pub const RESOLUTION_DECAY_LAMBDA: f64 = std::f64::consts::LN_2 / 7.0;

/// Window (days before resolution) inside which prices are softened.
pub const VOLATILITY_WINDOW_DAYS: f64 = 7.0;

const OMEGA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketQuote {
    pub market_id: String,
    pub p_yes: f64,
    pub volume: f64,
    pub resolution_date: NaiveDate,
    pub fetched_at: DateTime<Utc>,
}

impl MarketQuote {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_yes) {
            return Err(Error::InvalidInput(format!(
                "market {}: price {} outside [0, 1]",
                self.market_id, self.p_yes
            )));
        }
        if self.volume.is_nan() || self.volume < 0.0 {
            return Err(Error::InvalidInput(format!(
                "market {}: negative volume {}",
                self.market_id, self.volume
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySpec {
    pub market_id: String,
    pub weight: f64,
}

/// How an event maps onto prediction markets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrowdConfig {
    /// A market resolving on exactly this event, if one exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proxies: Vec<ProxySpec>,
}

impl CrowdConfig {
    pub fn is_empty(&self) -> bool {
        self.market.is_none() && self.proxies.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.proxies.is_empty() {
            return Ok(());
        }
        for p in &self.proxies {
            if !(p.weight.is_finite() && p.weight >= 0.0) {
                return Err(Error::Config(format!(
                    "proxy {} has invalid weight {}",
                    p.market_id, p.weight
                )));
            }
        }
        let omega: f64 = self.proxies.iter().map(|p| p.weight).sum();
        if omega <= 0.0 {
            return Err(Error::Config("proxy weights sum to zero".into()));
        }
        if omega > 1.0 + OMEGA_TOLERANCE {
            return Err(Error::Config(format!(
                "proxy weights sum to {omega}, coverage cannot exceed 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrowdSource {
    Direct,
    Proxies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdEstimate {
    pub source: CrowdSource,
    pub omega: f64,
    pub p_inferred: f64,
    pub p_adjusted: f64,
    pub days_to_resolution: i64,
    pub decay_factor: f64,
    pub p_final: f64,
    pub quotes: Vec<MarketQuote>,
}

pub trait QuoteSource: Send + Sync {
    fn fetch_quote(&self, market_id: &str) -> Result<MarketQuote>;
}

pub fn direct_probability(quote: &MarketQuote) -> f64 {
    quote.p_yes
}

/// Returns `(ω, p_inferred)` for a proxy set.
pub fn inferred_probability(proxies: &[ProxySpec], quotes: &[MarketQuote]) -> Result<(f64, f64)> {
    CrowdConfig {
        market: None,
        proxies: proxies.to_vec(),
    }
    .validate()?;
    if proxies.is_empty() {
        return Err(Error::Config("no proxy markets configured".into()));
    }
    let by_id: BTreeMap<&str, &MarketQuote> =
        quotes.iter().map(|q| (q.market_id.as_str(), q)).collect();
    let omega: f64 = proxies.iter().map(|p| p.weight).sum();
    let mut p_inferred = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for proxy in proxies {
        let quote = by_id.get(proxy.market_id.as_str()).ok_or_else(|| {
            Error::InvalidInput(format!("missing quote for proxy {}", proxy.market_id))
        })?;
        quote.validate()?;
        p_inferred += proxy.weight / omega * quote.p_yes;
        if proxy.weight > 0.0 {
            lo = lo.min(quote.p_yes);
            hi = hi.max(quote.p_yes);
        }
    }
    Ok((omega, p_inferred.clamp(lo, hi)))
}

/// Coverage penalty: `ω · p_inferred`, which equals `Σ w_i P_i`.
pub fn adjusted_probability(omega: f64, p_inferred: f64) -> f64 {
    omega * p_inferred
}

/// Softening applied inside the final week before resolution. The elapsed
/// time fed to the exponential is the number of days already spent inside
/// that week, so markets a week or more out are left untouched and a market
/// resolving today is halved.
pub fn resolution_decay(p: f64, days_to_resolution: f64, lambda: f64) -> (f64, f64) {
    let days = if days_to_resolution < 0.0 {
        tracing::warn!(
            days_to_resolution,
            "market past resolution; treating as 0 days"
        );
        0.0
    } else {
        days_to_resolution
    };
    let t_eff = (VOLATILITY_WINDOW_DAYS - days).max(0.0);
    let factor = (-lambda * t_eff).exp();
    (factor, p * factor)
}

/// Runs the whole crowd module for one event. Abstains (`NoSignal`) when no
/// market is configured.
pub fn crowd_estimate(
    config: &CrowdConfig,
    source: &dyn QuoteSource,
    clock: &dyn Clock,
) -> Result<CrowdEstimate> {
    config.validate()?;
    if let Some(id) = &config.market {
        let quote = source.fetch_quote(id)?;
        quote.validate()?;
        let p = direct_probability(&quote);
        let days = clock.days_until(quote.resolution_date);
        let (decay_factor, p_final) = resolution_decay(p, days as f64, RESOLUTION_DECAY_LAMBDA);
        return Ok(CrowdEstimate {
            source: CrowdSource::Direct,
            omega: 1.0,
            p_inferred: p,
            p_adjusted: p,
            days_to_resolution: days,
            decay_factor,
            p_final,
            quotes: vec![quote],
        });
    }
    if config.proxies.is_empty() {
        return Err(Error::no_signal("crowd", "no markets configured"));
    }
    let ids: Vec<&str> = config
        .proxies
        .iter()
        .map(|p| p.market_id.as_str())
        .collect();
    let quotes = fetch_quotes(source, &ids)?;
    let (omega, p_inferred) = inferred_probability(&config.proxies, &quotes)?;
    let p_adjusted = adjusted_probability(omega, p_inferred);
    // The earliest-resolving proxy sets the softening horizon.
    let days = quotes
        .iter()
        .map(|q| clock.days_until(q.resolution_date))
        .min()
        .expect("at least one proxy");
    let (decay_factor, p_final) =
        resolution_decay(p_adjusted, days as f64, RESOLUTION_DECAY_LAMBDA);
    Ok(CrowdEstimate {
        source: CrowdSource::Proxies,
        omega,
        p_inferred,
        p_adjusted,
        days_to_resolution: days,
        decay_factor,
        p_final,
        quotes,
    })
}

/// Fetches quotes concurrently, preserving the order of `ids`.
pub fn fetch_quotes(source: &dyn QuoteSource, ids: &[&str]) -> Result<Vec<MarketQuote>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = ids
            .iter()
            .map(|id| s.spawn(move || source.fetch_quote(id)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("quote fetch panicked"))
            .collect()
    })
}

/// Quotes served from a JSON array of [`MarketQuote`] objects.
#[derive(Debug, Clone, Default)]
pub struct FixtureQuotes {
    quotes: BTreeMap<String, MarketQuote>,
}

impl FixtureQuotes {
    pub fn new(quotes: impl IntoIterator<Item = MarketQuote>) -> Self {
        FixtureQuotes {
            quotes: quotes
                .into_iter()
                .map(|q| (q.market_id.clone(), q))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let quotes: Vec<MarketQuote> = serde_json::from_str(&text)?;
        Ok(Self::new(quotes))
    }
}

impl QuoteSource for FixtureQuotes {
    fn fetch_quote(&self, market_id: &str) -> Result<MarketQuote> {
        self.quotes
            .get(market_id)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("unknown market {market_id}")))
    }
}

/// Client for the Polymarket Gamma markets endpoint, keyed by market slug.
pub struct PolymarketClient {
    base_url: String,
    agent: ureq::Agent,
    clock: Box<dyn Clock>,
}

pub const POLYMARKET_BASE_URL: &str = "https://gamma-api.polymarket.com";

impl PolymarketClient {
    pub fn new(base_url: impl Into<String>, clock: Box<dyn Clock>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        PolymarketClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
            clock,
        }
    }

    fn parse(&self, market_id: &str, body: &str) -> Result<MarketQuote> {
        let malformed = |msg: &str| Error::Upstream {
            provider: "polymarket".into(),
            message: format!("market {market_id}: {msg}"),
        };
        let value: serde_json::Value =
            serde_json::from_str(body).map_err(|e| malformed(&e.to_string()))?;
        let market = match &value {
            serde_json::Value::Array(items) => items.first(),
            obj @ serde_json::Value::Object(_) => Some(obj),
            _ => None,
        }
        .ok_or_else(|| Error::InvalidInput(format!("unknown market {market_id}")))?;

        // Gamma encodes outcome prices as a JSON array inside a string.
        let prices: Vec<String> = match market.get("outcomePrices") {
            Some(serde_json::Value::String(s)) => {
                serde_json::from_str(s).map_err(|e| malformed(&e.to_string()))?
            }
            Some(serde_json::Value::Array(a)) => a
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_owned)
                        .unwrap_or_else(|| v.to_string())
                })
                .collect(),
            _ => return Err(malformed("missing outcomePrices")),
        };
        let p_yes: f64 = prices
            .first()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| malformed("unparseable yes price"))?;
        let volume = match market.get("volumeNum").or_else(|| market.get("volume")) {
            Some(serde_json::Value::Number(n)) => n.as_f64().unwrap_or(0.0),
            Some(serde_json::Value::String(s)) => s.parse().unwrap_or(0.0),
            _ => 0.0,
        };
        let end = market
            .get("endDate")
            .and_then(|v| v.as_str())
            .ok_or_else(|| malformed("missing endDate"))?;
        let resolution_date = DateTime::parse_from_rfc3339(end)
            .map(|d| d.date_naive())
            .or_else(|_| NaiveDate::parse_from_str(&end[..end.len().min(10)], "%Y-%m-%d"))
            .map_err(|e| malformed(&e.to_string()))?;
        let quote = MarketQuote {
            market_id: market_id.to_string(),
            p_yes,
            volume,
            resolution_date,
            fetched_at: self.clock.now(),
        };
        quote.validate()?;
        Ok(quote)
    }
}

impl QuoteSource for PolymarketClient {
    fn fetch_quote(&self, market_id: &str) -> Result<MarketQuote> {
        let url = format!("{}/markets", self.base_url);
        let network = |e: ureq::Error| Error::Network {
            provider: "polymarket".into(),
            message: e.to_string(),
        };
        let mut response = self
            .agent
            .get(&url)
            .query("slug", market_id)
            .call()
            .map_err(network)?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(network)?;
        if status != 200 {
            return Err(Error::Upstream {
                provider: "polymarket".into(),
                message: format!("HTTP {status} for market {market_id}"),
            });
        }
        self.parse(market_id, &body)
    }
}
