use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calibration::{PointForecast, ThresholdSpec};
use crate::error::{Error, Result};
use crate::ipf::{IpfWeights, SnaWeights};
use crate::markets::CrowdConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// Resolves on whether something happens.
    Discrete,
    /// Resolves on whether a quantity crosses a threshold.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl TimeWindow {
    /// True when `date` is inside the window widened by `skew_days` each side.
    pub fn contains_with_skew(&self, date: NaiveDate, skew_days: i64) -> bool {
        let skew = chrono::Duration::days(skew_days);
        date >= self.start - skew && date <= self.end + skew
    }
}

/// A binary event of interest together with the analyst inputs needed to
/// forecast it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub id: String,
    pub statement: String,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdSpec>,
    pub resolution_date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_criteria: Option<String>,
    pub keywords: Vec<String>,
    pub window: TimeWindow,
    pub summary_text: String,
    pub macro_p_yes: f64,
    pub ipf_weights: IpfWeights,
    #[serde(default)]
    pub sna_weights: SnaWeights,
    #[serde(default, flatten)]
    pub crowd: CrowdConfig,
    /// Externally produced point forecast for continuous events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_forecast: Option<PointForecast>,
}

impl EventSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("event {}: {msg}", self.id)));
        if self.id.trim().is_empty() {
            return Err(Error::Config("event with empty id".into()));
        }
        if self.keywords.iter().all(|k| k.trim().is_empty()) {
            return fail("keyword set is empty".into());
        }
        if self.window.start > self.window.end {
            return fail(format!(
                "window start {} after end {}",
                self.window.start, self.window.end
            ));
        }
        match (self.kind, &self.threshold) {
            (EventKind::Continuous, None) => {
                return fail("continuous event needs a threshold".into())
            }
            (EventKind::Discrete, Some(_)) => {
                return fail("discrete event must not carry a threshold".into())
            }
            (EventKind::Continuous, Some(t)) => t.validate()?,
            (EventKind::Discrete, None) => {}
        }
        if !(0.0..=1.0).contains(&self.macro_p_yes) {
            return fail(format!("macro_p_yes {} outside [0, 1]", self.macro_p_yes));
        }
        if let Some(f) = &self.point_forecast {
            f.validate()?;
        }
        self.ipf_weights
            .validate()
            .and_then(|_| self.sna_weights.validate())
            .and_then(|_| self.crowd.validate())
            .map_err(|e| Error::Config(format!("event {}: {e}", self.id)))
    }
}

/// The on-disk event registry: `{"events": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventRegistry {
    pub events: Vec<EventSpec>,
}

impl EventRegistry {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let registry: EventRegistry = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        registry.validate()?;
        Ok(registry)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for event in &self.events {
            event.validate()?;
            if !seen.insert(event.id.as_str()) {
                return Err(Error::Config(format!("duplicate event id {}", event.id)));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&EventSpec> {
        self.events
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::Config(format!("unknown event {id}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Direction;

    fn discrete() -> EventSpec {
        serde_json::from_str(
            r#"{
            "id": "tariffs",
            "statement": "The US raises tariffs",
            "kind": "discrete",
            "resolution_date": "2025-09-28",
            "keywords": ["tariff", "EU"],
            "window": {"start": "2025-06-01", "end": "2025-07-30"},
            "summary_text": "US tariffs on EU imports",
            "macro_p_yes": 0.56,
            "ipf_weights": {"w_lstm": 0.0, "w_sna": 0.5, "w_crowd": 0.1, "w_macro": 0.4},
            "proxies": [{"market_id": "a", "weight": 0.2}]
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn parses_and_validates() {
        let e = discrete();
        e.validate().unwrap();
        assert_eq!(e.crowd.proxies.len(), 1);
        assert_eq!(e.sna_weights, SnaWeights::default());
    }

    #[test]
    fn rejects_invariant_violations() {
        let mut e = discrete();
        e.keywords.clear();
        assert!(e.validate().is_err());

        let mut e = discrete();
        e.window.start = NaiveDate::from_ymd_opt(2025, 8, 1).unwrap();
        assert!(e.validate().is_err());

        let mut e = discrete();
        e.kind = EventKind::Continuous;
        assert!(e.validate().is_err());
        e.threshold = Some(ThresholdSpec {
            value: 20.0,
            direction: Direction::AtLeast,
        });
        e.validate().unwrap();

        let mut e = discrete();
        e.macro_p_yes = 1.5;
        assert!(e.validate().is_err());
    }

    #[test]
    fn window_skew() {
        let w = discrete().window;
        let d = |m, d| NaiveDate::from_ymd_opt(2025, m, d).unwrap();
        assert!(w.contains_with_skew(d(5, 31), 1));
        assert!(!w.contains_with_skew(d(5, 30), 1));
        assert!(w.contains_with_skew(d(7, 31), 1));
        assert!(!w.contains_with_skew(d(8, 1), 1));
    }
}
