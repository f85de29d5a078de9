//! Threshold-crossing probabilities for continuous events.
//!
//! A point forecast `x_hat` for the quantity at the resolution date is turned
//! into `P(yes)` with a logistic map whose sharpness is `k`. The forecaster
//! itself is pluggable; [`baseline_forecast`] is a least-squares trend used
//! when nothing better is supplied.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default logistic sharpness.
pub const DEFAULT_SHARPNESS: f64 = 1.5;

const SCALE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Resolves yes when the quantity ends at or above the threshold.
    AtLeast,
    /// Resolves yes when the quantity ends at or below the threshold.
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub value: f64,
    pub direction: Direction,
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.value.is_finite() {
            return Err(Error::Config(format!(
                "threshold {} is not finite",
                self.value
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointForecast {
    pub x_hat: f64,
    /// Unit normalizer applied to `x_hat - T` before the logistic map.
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl PointForecast {
    pub fn new(x_hat: f64) -> Self {
        PointForecast { x_hat, scale: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x_hat.is_finite() || !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "point forecast needs finite x_hat and positive scale, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `P(yes)` for a threshold event given a point forecast.
///
/// The above/below-threshold branches `σ(k(x̂−T))` and `1 − σ(k(T−x̂))`
/// are the same function, so a single expression covers both.
pub fn calibrate(forecast: &PointForecast, threshold: &ThresholdSpec, k: f64) -> Result<f64> {
    forecast.validate()?;
    threshold.validate()?;
    let gap = match threshold.direction {
        Direction::AtLeast => forecast.x_hat - threshold.value,
        Direction::AtMost => threshold.value - forecast.x_hat,
    };
    Ok(sigmoid(k * gap / forecast.scale))
}

/// Ordinary least-squares line through `(t, series[t])`, extrapolated
/// `horizon` steps past the last observation. The scale is the sample
/// standard deviation of the series.
pub fn baseline_forecast(series: &[f64], horizon: usize) -> Result<PointForecast> {
    if series.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "baseline forecast needs at least 3 observations, got {}",
            series.len()
        )));
    }
    if let Some(bad) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite observation {bad}")));
    }
    let n = series.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = series.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, &y) in series.iter().enumerate() {
        let dt = t as f64 - t_mean;
        let dy = y - y_mean;
        sxy += dt * dy;
        sxx += dt * dt;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let t_target = (series.len() - 1 + horizon) as f64;
    let std = (syy / (n - 1.0)).sqrt();
    Ok(PointForecast {
        x_hat: intercept + slope * t_target,
        scale: std.max(SCALE_FLOOR),
    })
}

/// Reads a `date,value` CSV (header required) and returns the values in
/// date order.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    struct Row {
        date: chrono::NaiveDate,
        value: f64,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    rows.sort_by_key(|r| r.date);
    Ok(rows.into_iter().map(|r| r.value).collect())
}
