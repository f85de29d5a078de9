//! Two-cluster k-means over article embeddings.
//!
//! Clusters are indexed 0 and 1 internally; reports print them as 1 and 2.
//! Labeled seed articles decide which cluster stands for YES, and the event
//! probability is the share of combined distance/recency weight that falls
//! in that cluster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Outcome;
use crate::error::{Error, Result};
use crate::pca::{recency_weight, EventProbability, RECENCY_LAMBDA};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Guard against division by zero for articles sitting on their centroid.
pub const EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: [Vec<f64>; 2],
    /// Cluster index (0 or 1) of every fitted point, in input order.
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of times an empty cluster was re-seeded.
    pub reseeds: usize,
    /// Lloyd objective after every centroid update.
    pub objective_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Nearer centroid; exact ties go to cluster 0.
fn nearest(v: &[f64], centroids: &[Vec<f64>; 2]) -> usize {
    if sq_dist(v, &centroids[1]) < sq_dist(v, &centroids[0]) {
        1
    } else {
        0
    }
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>; 2]) -> Vec<usize> {
    points.iter().map(|v| nearest(v, centroids)).collect()
}

/// Index of the point farthest from `c`, first index on ties.
fn farthest_from(points: &[Vec<f64>], c: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = -1.0;
    for (i, p) in points.iter().enumerate() {
        let d = sq_dist(p, c);
        if d > best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn objective(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>; 2]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &k)| sq_dist(p, &centroids[k]))
        .sum()
}

fn validate_points(points: &[Vec<f64>]) -> Result<usize> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "k-means needs at least 2 points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "non-finite entry in k-means input".into(),
            ));
        }
    }
    Ok(dim)
}

/// Farthest-point initialization: a uniformly drawn point, then the point
/// farthest from it.
pub fn initial_centroids(points: &[Vec<f64>], seed: u64) -> Result<[Vec<f64>; 2]> {
    validate_points(points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..points.len());
    let second = farthest_from(points, &points[first]);
    Ok([points[first].clone(), points[second].clone()])
}

pub fn fit_kmeans(
    points: &[Vec<f64>],
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel> {
    let init = initial_centroids(points, seed)?;
    fit_kmeans_from(points, init, max_iter, tol)
}

/// Lloyd iterations from explicit starting centroids. Stops once the
/// assignment is stable or no centroid moved by `tol` or more; either way the
/// returned assignment is nearest-centroid against the returned centroids.
/// An empty cluster is re-seeded at the point farthest from
/// the other centroid.
pub fn fit_kmeans_from(
    points: &[Vec<f64>],
    init: [Vec<f64>; 2],
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel> {
    let dim = validate_points(points)?;
    for c in &init {
        if c.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: c.len(),
            });
        }
    }
    if max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }

    let mut centroids = init;
    let mut assignments = assign(points, &centroids);
    let mut iterations = 0;
    let mut converged = false;
    let mut reseeds = 0;
    let mut history = Vec::new();

    while iterations < max_iter {
        iterations += 1;
        let mut next = [vec![0.0; dim], vec![0.0; dim]];
        let mut counts = [0usize; 2];
        for (p, &k) in points.iter().zip(&assignments) {
            counts[k] += 1;
            for (c, x) in next[k].iter_mut().zip(p) {
                *c += x;
            }
        }
        for k in 0..2 {
            if counts[k] > 0 {
                next[k].iter_mut().for_each(|c| *c /= counts[k] as f64);
            }
        }
        for k in 0..2 {
            if counts[k] == 0 {
                let other = &next[1 - k];
                next[k] = points[farthest_from(points, other)].clone();
                reseeds += 1;
                tracing::debug!(cluster = k + 1, "re-seeded empty k-means cluster");
            }
        }
        let shift = (0..2)
            .map(|k| distance(&centroids[k], &next[k]))
            .fold(0.0, f64::max);
        centroids = next;
        history.push(objective(points, &assignments, &centroids));

        let reassigned = assign(points, &centroids);
        let stable = reassigned == assignments;
        assignments = reassigned;
        if stable || shift < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        tracing::warn!(iterations, "k-means stopped at max_iter without converging");
    }
    Ok(KMeansModel {
        centroids,
        assignments,
        iterations,
        converged,
        reseeds,
        objective_history: history,
    })
}

impl KMeansModel {
    pub fn cluster_sizes(&self) -> [usize; 2] {
        let mut sizes = [0; 2];
        for &k in &self.assignments {
            sizes[k] += 1;
        }
        sizes
    }

    /// Distance from point `j` of `points` to its own centroid.
    pub fn distance_to_own(&self, points: &[Vec<f64>], j: usize) -> f64 {
        distance(&points[j], &self.centroids[self.assignments[j]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingRule {
    /// Cluster holding more YES seeds.
    YesMajority,
    /// Centroid nearer the YES class mean over the PCA-selected features.
    NearestYesMean,
    /// No YES seeds at all: the cluster holding fewer NO seeds.
    NoMajority,
    /// Nothing decided; cluster 1 by convention.
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMap {
    /// Zero-based index of the YES cluster.
    pub yes_cluster: usize,
    /// Seeds whose label agrees with the cluster they landed in.
    pub evidence: usize,
    pub rule: MappingRule,
}

impl OutcomeMap {
    /// One-based cluster number, as printed in reports.
    pub fn yes_cluster_number(&self) -> usize {
        self.yes_cluster + 1
    }

    pub fn outcome_of(&self, cluster: usize) -> Outcome {
        if cluster == self.yes_cluster {
            Outcome::Yes
        } else {
            Outcome::No
        }
    }
}

/// YES class mean over a subset of features, used to break seed ties.
#[derive(Debug, Clone, Copy)]
pub struct YesMean<'a> {
    pub features: &'a [usize],
    pub mu_yes: &'a [f64],
}

/// Decides which cluster means YES. `seeds` pairs indices into the fitted
/// points with their labels.
pub fn map_clusters_to_outcomes(
    model: &KMeansModel,
    seeds: &[(usize, Outcome)],
    yes_mean: Option<YesMean<'_>>,
) -> Result<OutcomeMap> {
    if seeds.is_empty() && yes_mean.is_none() {
        return Err(Error::InvalidInput(
            "cannot map clusters to outcomes without labeled seeds or a YES class mean".into(),
        ));
    }
    let mut yes = [0usize; 2];
    let mut no = [0usize; 2];
    for &(j, o) in seeds {
        let k = *model.assignments.get(j).ok_or_else(|| {
            Error::InvalidInput(format!("seed index {j} is outside the fitted set"))
        })?;
        match o {
            Outcome::Yes => yes[k] += 1,
            Outcome::No => no[k] += 1,
        }
    }

    let (yes_cluster, rule) = if yes[0] != yes[1] {
        (usize::from(yes[1] > yes[0]), MappingRule::YesMajority)
    } else if let Some(k) = yes_mean.and_then(|m| nearer_to_yes_mean(model, m)) {
        (k, MappingRule::NearestYesMean)
    } else if yes[0] == 0 && no[0] != no[1] {
        (usize::from(no[0] > no[1]), MappingRule::NoMajority)
    } else {
        tracing::warn!("cluster outcome undecided; treating cluster 1 as YES");
        (0, MappingRule::Default)
    };
    let evidence = yes[yes_cluster] + no[1 - yes_cluster];
    Ok(OutcomeMap {
        yes_cluster,
        evidence,
        rule,
    })
}

fn nearer_to_yes_mean(model: &KMeansModel, m: YesMean<'_>) -> Option<usize> {
    let d = |c: &[f64]| -> f64 {
        m.features
            .iter()
            .zip(m.mu_yes)
            .map(|(&i, mu)| (c[i] - mu).powi(2))
            .sum()
    };
    let (d0, d1) = (d(&model.centroids[0]), d(&model.centroids[1]));
    if d0 < d1 {
        Some(0)
    } else if d1 < d0 {
        Some(1)
    } else {
        None
    }
}

/// `(1 / (d + ε), e^{−λ·age})`.
pub fn article_weight(distance: f64, age_days: f64, epsilon: f64, lambda: f64) -> (f64, f64) {
    (1.0 / (distance + epsilon), recency_weight(age_days, lambda))
}

fn normalized(w: &[f64], what: &str) -> Result<Vec<f64>> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidInput(format!(
            "{what} weights must be finite and nonnegative"
        )));
    }
    let total: f64 = w.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::InvalidInput(format!("{what} weights are all zero")));
    }
    Ok(w.iter().map(|x| x / total).collect())
}

/// Normalizes each weight list to sum to one and averages them.
pub fn combine_weights(w_dist: &[f64], w_time: &[f64]) -> Result<Vec<f64>> {
    if w_dist.len() != w_time.len() {
        return Err(Error::DimensionMismatch {
            expected: w_dist.len(),
            actual: w_time.len(),
        });
    }
    let d = normalized(w_dist, "distance")?;
    let t = normalized(w_time, "recency")?;
    Ok(d.iter().zip(&t).map(|(a, b)| 0.5 * a + 0.5 * b).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleWeight {
    pub article_id: String,
    pub cluster: usize,
    pub distance: f64,
    pub w_dist: f64,
    pub w_time: f64,
    pub w: f64,
}

/// Weights every fitted point; `ages` are article ages in days.
pub fn weigh_articles(
    model: &KMeansModel,
    points: &[Vec<f64>],
    article_ids: &[String],
    ages: &[f64],
) -> Result<Vec<ArticleWeight>> {
    let n = points.len();
    if article_ids.len() != n || ages.len() != n || model.assignments.len() != n {
        return Err(Error::InvalidInput(
            "points, ids, ages and assignments must have equal length".into(),
        ));
    }
    let mut dist = Vec::with_capacity(n);
    let mut w_dist = Vec::with_capacity(n);
    let mut w_time = Vec::with_capacity(n);
    for (j, &age) in ages.iter().enumerate().take(n) {
        let d = model.distance_to_own(points, j);
        let (wd, wt) = article_weight(d, age, EPSILON, RECENCY_LAMBDA);
        dist.push(d);
        w_dist.push(wd);
        w_time.push(wt);
    }
    let w = combine_weights(&w_dist, &w_time)?;
    Ok((0..n)
        .map(|j| ArticleWeight {
            article_id: article_ids[j].clone(),
            cluster: model.assignments[j],
            distance: dist[j],
            w_dist: w_dist[j],
            w_time: w_time[j],
            w: w[j],
        })
        .collect())
}

/// Weight share of the YES cluster.
pub fn aggregate_kmeans(
    model: &KMeansModel,
    map: &OutcomeMap,
    weights: &[f64],
) -> Result<EventProbability> {
    if weights.len() != model.assignments.len() {
        return Err(Error::DimensionMismatch {
            expected: model.assignments.len(),
            actual: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::no_signal("kmeans", "article weights sum to zero"));
    }
    let yes: f64 = weights
        .iter()
        .zip(&model.assignments)
        .filter(|(_, &k)| k == map.yes_cluster)
        .map(|(w, _)| w)
        .sum();
    Ok(EventProbability::from_yes((yes / total).clamp(0.0, 1.0)))
}
