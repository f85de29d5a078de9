//! Weighted combination of module probabilities.
//!
//! Two combiners live here: the news-analysis blend of the PCA, k-means and
//! zero-shot submodules, and the final blend of the prediction modules into
//! the initial assigned probability. Both are convex combinations. A module
//! that abstains (no articles, no markets, ...) has its weight handed to the
//! modules that did report, in proportion to their own weights.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit-sum constraint of every weight vector.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnaWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl SnaWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let weights = SnaWeights { alpha, beta, gamma };
        weights.validate()?;
        Ok(weights)
    }

    pub fn validate(&self) -> Result<()> {
        validate_weights(&[
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ])
    }
}

impl Default for SnaWeights {
    fn default() -> Self {
        SnaWeights {
            alpha: 0.5,
            beta: 0.2,
            gamma: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpfWeights {
    pub w_lstm: f64,
    pub w_sna: f64,
    pub w_crowd: f64,
    pub w_macro: f64,
}

impl IpfWeights {
    pub fn new(w_lstm: f64, w_sna: f64, w_crowd: f64, w_macro: f64) -> Result<Self> {
        let weights = IpfWeights {
            w_lstm,
            w_sna,
            w_crowd,
            w_macro,
        };
        weights.validate()?;
        Ok(weights)
    }

    pub fn validate(&self) -> Result<()> {
        validate_weights(&self.named())
    }

    pub fn get(&self, module: Module) -> f64 {
        match module {
            Module::Lstm => self.w_lstm,
            Module::Sna => self.w_sna,
            Module::Crowd => self.w_crowd,
            Module::Macro => self.w_macro,
        }
    }

    fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("w_lstm", self.w_lstm),
            ("w_sna", self.w_sna),
            ("w_crowd", self.w_crowd),
            ("w_macro", self.w_macro),
        ]
    }
}

/// Rejects negative or non-finite weights and sums away from one by more
/// than [`WEIGHT_SUM_TOLERANCE`]. The diagnostic names the offending entry.
pub fn validate_weights(weights: &[(&str, f64)]) -> Result<()> {
    for &(name, w) in weights {
        if !w.is_finite() {
            return Err(Error::Config(format!("weight {name} is not finite ({w})")));
        }
        if w < 0.0 {
            return Err(Error::Config(format!("weight {name} is negative ({w})")));
        }
    }
    let sum: f64 = weights.iter().map(|&(_, w)| w).sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        let names: Vec<_> = weights.iter().map(|&(n, _)| n).collect();
        return Err(Error::Config(format!(
            "weights {} sum to {sum}, expected 1",
            names.join(" + ")
        )));
    }
    Ok(())
}

/// The independent prediction modules entering the final blend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Module {
    Lstm,
    Sna,
    Crowd,
    Macro,
}

impl Module {
    pub const ALL: [Module; 4] = [Module::Lstm, Module::Sna, Module::Crowd, Module::Macro];

    pub fn name(self) -> &'static str {
        match self {
            Module::Lstm => "lstm",
            Module::Sna => "sna",
            Module::Crowd => "crowd",
            Module::Macro => "macro",
        }
    }
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Convex combination of `(weight, Option<probability>)` pairs. Absent
/// entries abstain and their weight is spread proportionally over the rest.
/// Returns the probability and the effective weights (zero for abstainers).
pub fn renormalized_blend(entries: &[(f64, Option<f64>)]) -> Result<(f64, Vec<f64>)> {
    for &(_, p) in entries {
        if let Some(p) = p {
            check_probability(p)?;
        }
    }
    let present_mass: f64 = entries
        .iter()
        .filter(|(_, p)| p.is_some())
        .map(|&(w, _)| w)
        .sum();
    if present_mass <= 0.0 {
        return Err(Error::no_signal(
            "ipf",
            "no module with positive weight reported a probability",
        ));
    }
    let effective: Vec<f64> = entries
        .iter()
        .map(|&(w, p)| if p.is_some() { w / present_mass } else { 0.0 })
        .collect();
    let blended: f64 = entries
        .iter()
        .zip(&effective)
        .filter_map(|(&(_, p), &w)| p.map(|p| w * p))
        .sum();

    // The exact result lies in the hull of the inputs that carry weight;
    // clamp away the last-ulp rounding of the sum.
    let (lo, hi) = entries
        .iter()
        .zip(&effective)
        .filter(|(_, &w)| w > 0.0)
        .filter_map(|(&(_, p), _)| p)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p), hi.max(p))
        });
    Ok((blended.clamp(lo, hi), effective))
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(())
}

/// The news-analysis blend, with effective weights after renormalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnaBlend {
    pub p_yes: f64,
    pub effective: SnaWeights,
}

pub fn combine_sna(
    p_pca: Option<f64>,
    p_kmeans: Option<f64>,
    p_zs: Option<f64>,
    weights: &SnaWeights,
) -> Result<SnaBlend> {
    weights.validate()?;
    let (p_yes, eff) = renormalized_blend(&[
        (weights.alpha, p_pca),
        (weights.beta, p_kmeans),
        (weights.gamma, p_zs),
    ])
    .map_err(|e| match e {
        Error::NoSignal { .. } => Error::no_signal("sna", "all submodules abstained"),
        other => other,
    })?;
    Ok(SnaBlend {
        p_yes,
        effective: SnaWeights {
            alpha: eff[0],
            beta: eff[1],
            gamma: eff[2],
        },
    })
}

/// Probabilities reported by each module; `None` marks an abstention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModuleProbabilities {
    pub lstm: Option<f64>,
    pub sna: Option<f64>,
    pub crowd: Option<f64>,
    pub r#macro: Option<f64>,
}

impl ModuleProbabilities {
    pub fn get(&self, module: Module) -> Option<f64> {
        match module {
            Module::Lstm => self.lstm,
            Module::Sna => self.sna,
            Module::Crowd => self.crowd,
            Module::Macro => self.r#macro,
        }
    }

    pub fn set(&mut self, module: Module, p: Option<f64>) {
        match module {
            Module::Lstm => self.lstm = p,
            Module::Sna => self.sna = p,
            Module::Crowd => self.crowd = p,
            Module::Macro => self.r#macro = p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventForecast {
    pub event_id: String,
    pub modules: ModuleProbabilities,
    pub configured_weights: IpfWeights,
    pub effective_weights: BTreeMap<Module, f64>,
    pub p_yes_final: f64,
    pub p_no_final: f64,
    /// Intermediate values keyed by name (submodule probabilities, omega, ...).
    #[serde(default)]
    pub intermediates: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl EventForecast {
    /// True when every module other than the analyst prior abstained.
    pub fn is_abstention_only(&self) -> bool {
        [Module::Lstm, Module::Sna, Module::Crowd]
            .iter()
            .all(|&m| self.modules.get(m).is_none())
    }
}

pub fn combine_ipf(
    event_id: &str,
    modules: ModuleProbabilities,
    weights: &IpfWeights,
) -> Result<EventForecast> {
    weights.validate()?;
    let entries: Vec<_> = Module::ALL
        .iter()
        .map(|&m| (weights.get(m), modules.get(m)))
        .collect();
    let (p_yes, eff) = renormalized_blend(&entries)?;
    let mut notes = Vec::new();
    for (&m, &(w, p)) in Module::ALL.iter().zip(&entries) {
        if p.is_none() && w > 0.0 {
            notes.push(format!("{m} abstained; weight {w} redistributed"));
        }
    }
    Ok(EventForecast {
        event_id: event_id.to_string(),
        modules,
        configured_weights: *weights,
        effective_weights: Module::ALL.iter().copied().zip(eff).collect(),
        p_yes_final: p_yes,
        p_no_final: 1.0 - p_yes,
        intermediates: BTreeMap::new(),
        notes,
    })
}
