//! Ensemble forecasting of binary economic events.
//!
//! Four modules each produce a probability that an event resolves YES: a
//! sentiment/news module ([`pca`], [`kmeans`], [`zeroshot`]), a crowd module
//! over prediction markets ([`markets`]), a calibrated point-forecast module
//! ([`calibration`]) and a fixed macro prior. [`ipf`] blends them.

pub mod calibration;
pub mod clock;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod ipf;
pub mod kmeans;
pub mod linalg;
pub mod markets;
pub mod pca;
pub mod pipeline;
pub mod report;
pub mod zeroshot;

pub use error::{Error, Result};
