//! PCA / Fisher-score classifier over article embeddings.
//!
//! The labeled embeddings are centered and decomposed into principal
//! components. Each component gets a Fisher score measuring how well it
//! separates the Yes and No articles; the best one (`k_star`) is not
//! necessarily a high-variance component. The embedding dimensions that load
//! most heavily on it (top 5% by absolute loading) become the feature set.
//! An unlabeled article is scored by its distances to the Yes and No class
//! means over those features, and the event probability is the recency
//! weighted average of the article scores.

use serde::{Deserialize, Serialize};

use crate::corpus::Outcome;
use crate::error::{Error, Result};
use crate::linalg::svd_columns;

/// Per-day decay of article weight; weights halve every 25 days.
pub const RECENCY_LAMBDA: f64 = std::f64::consts::LN_2 / 25.0;

/// Share of variance the retained components must explain.
pub const RETAINED_VARIANCE: f64 = 0.95;

/// Quantile of absolute loadings used as the feature cut-off.
pub const LOADING_QUANTILE: f64 = 0.95;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal principal axes, ordered by decreasing eigenvalue.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues (sample covariance, `N − 1` denominator).
    pub eigenvalues: Vec<f64>,
    pub n_samples: usize,
}

impl PcaModel {
    /// Fits on raw vectors. The rank is at most `min(N − 1, D)`.
    pub fn fit(vectors: &[Vec<f64>]) -> Result<Self> {
        let n = vectors.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "PCA needs at least 2 vectors, got {n}"
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput(
                "PCA on zero-dimensional vectors".into(),
            ));
        }
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("non-finite entry in PCA input".into()));
            }
        }

        let mut mean = vec![0.0; dim];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
            .collect();

        // Decompose whichever orientation has fewer columns.
        let (axes, singular) = if dim <= n {
            // columns = features; right singular vectors are the axes
            let cols: Vec<Vec<f64>> = (0..dim)
                .map(|j| centered.iter().map(|row| row[j]).collect())
                .collect();
            let svd = svd_columns(cols);
            (svd.v, svd.singular)
        } else {
            // columns = samples; left singular vectors are the axes
            let svd = svd_columns(centered);
            (svd.u, svd.singular)
        };

        let max_rank = (n - 1).min(dim);
        let sigma_max = singular.first().copied().unwrap_or(0.0);
        let mut components = Vec::new();
        let mut eigenvalues = Vec::new();
        for (mut axis, sigma) in axes.into_iter().zip(singular) {
            if components.len() == max_rank || sigma <= sigma_max * RANK_TOL || sigma == 0.0 {
                break;
            }
            orient(&mut axis);
            components.push(axis);
            eigenvalues.push(sigma * sigma / (n - 1) as f64);
        }
        Ok(PcaModel {
            mean,
            components,
            eigenvalues,
            n_samples: n,
        })
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Loadings of every original feature on component `k` (zero-based).
    pub fn loadings(&self, k: usize) -> &[f64] {
        &self.components[k]
    }

    /// Scores of `v` on every component: `Uᵀ (v − mean)`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: v.len(),
            });
        }
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok(self
            .components
            .iter()
            .map(|u| u.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `mean + Σ scores[k] · u_k`.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (s, u) in scores.iter().zip(&self.components) {
            for (o, x) in out.iter_mut().zip(u) {
                *o += s * x;
            }
        }
        out
    }
}

/// Eigenvector signs are arbitrary; fix them so the largest-magnitude entry
/// is positive (first such entry on ties).
fn orient(axis: &mut [f64]) {
    let pivot = axis
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, &x)| {
            if x.abs() > bv {
                (i, x.abs())
            } else {
                (bi, bv)
            }
        })
        .0;
    if axis[pivot] < 0.0 {
        axis.iter_mut().for_each(|x| *x = -*x);
    }
}

fn check_labeled(labeled: &[(Vec<f64>, Outcome)], min_per_class: usize) -> Result<()> {
    let yes = labeled.iter().filter(|(_, o)| *o == Outcome::Yes).count();
    let no = labeled.len() - yes;
    if yes < min_per_class || no < min_per_class {
        return Err(Error::InvalidInput(format!(
            "need at least {min_per_class} labeled article(s) per class, got {yes} YES / {no} NO"
        )));
    }
    Ok(())
}

/// Fits PCA on a labeled set (at least 3 vectors, both classes present).
pub fn fit_pca(labeled: &[(Vec<f64>, Outcome)]) -> Result<PcaModel> {
    if labeled.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "PCA needs at least 3 labeled vectors, got {}",
            labeled.len()
        )));
    }
    check_labeled(labeled, 1)?;
    let vectors: Vec<Vec<f64>> = labeled.iter().map(|(v, _)| v.clone()).collect();
    PcaModel::fit(&vectors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedVariance {
    pub ratios: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// Smallest number of leading components explaining ≥ 95% of variance.
    pub n95: usize,
}

pub fn explained_variance(model: &PcaModel) -> ExplainedVariance {
    explained_variance_of(&model.eigenvalues)
}

pub fn explained_variance_of(eigenvalues: &[f64]) -> ExplainedVariance {
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return ExplainedVariance {
            ratios: vec![0.0; eigenvalues.len()],
            cumulative: vec![0.0; eigenvalues.len()],
            n95: 0,
        };
    }
    let ratios: Vec<f64> = eigenvalues.iter().map(|l| l / total).collect();
    let mut running = 0.0;
    let mut cumulative: Vec<f64> = ratios
        .iter()
        .map(|r| {
            running += r;
            running.min(1.0)
        })
        .collect();
    if let Some(last) = cumulative.last_mut() {
        *last = 1.0;
    }
    let n95 = cumulative
        .iter()
        .position(|&c| c >= RETAINED_VARIANCE)
        .map_or(ratios.len(), |i| i + 1);
    ExplainedVariance {
        ratios,
        cumulative,
        n95,
    }
}

pub fn project(model: &PcaModel, v: &[f64]) -> Result<Vec<f64>> {
    model.project(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherScores {
    pub scores: Vec<f64>,
    /// Zero-based index of the best-separating component.
    pub k_star: usize,
}

impl FisherScores {
    /// Indices of the `n` highest-scoring components, best first.
    pub fn top(&self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx.truncate(n);
        idx
    }
}

fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Fisher score `(μ_yes − μ_no)² / (σ²_yes + σ²_no)` of every component,
/// using sample variances. A zero denominator with a nonzero numerator
/// scores `+∞` (perfect separation); `0/0` scores zero. Ties in the argmax
/// go to the lowest index.
pub fn fisher_scores(projected: &[(Vec<f64>, Outcome)]) -> Result<FisherScores> {
    check_labeled(projected, 2)?;
    let r = projected[0].0.len();
    if r == 0 {
        return Err(Error::InvalidInput("no components to score".into()));
    }
    let mut scores = Vec::with_capacity(r);
    let mut yes = Vec::new();
    let mut no = Vec::new();
    for k in 0..r {
        yes.clear();
        no.clear();
        for (s, o) in projected {
            match o {
                Outcome::Yes => yes.push(s[k]),
                Outcome::No => no.push(s[k]),
            }
        }
        let (mu_y, var_y) = mean_and_variance(&yes);
        let (mu_n, var_n) = mean_and_variance(&no);
        let num = (mu_y - mu_n).powi(2);
        let den = var_y + var_n;
        scores.push(if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        });
    }
    let mut k_star = 0;
    for (k, &f) in scores.iter().enumerate() {
        if f > scores[k_star] {
            k_star = k;
        }
    }
    Ok(FisherScores { scores, k_star })
}

/// Quantile with linear interpolation between order statistics
/// (`h = (n − 1)·q`).
pub fn percentile_linear(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(τ, features)` where τ is the 95th percentile of `|loadings|` and the
/// features are every index with `|loading| ≥ τ`, in index order.
pub fn top_features_from_loadings(loadings: &[f64]) -> (f64, Vec<usize>) {
    let abs: Vec<f64> = loadings.iter().map(|x| x.abs()).collect();
    let tau = percentile_linear(&abs, LOADING_QUANTILE);
    let top = abs
        .iter()
        .enumerate()
        .filter(|(_, &a)| a >= tau)
        .map(|(i, _)| i)
        .collect();
    (tau, top)
}

pub fn select_top_features(model: &PcaModel, k_star: usize) -> (f64, Vec<usize>) {
    top_features_from_loadings(model.loadings(k_star))
}

/// Per-class means of the original embeddings restricted to `top_features`.
pub fn class_means(
    labeled: &[(Vec<f64>, Outcome)],
    top_features: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_labeled(labeled, 1)?;
    let mean_of = |class: Outcome| {
        let members: Vec<&Vec<f64>> = labeled
            .iter()
            .filter(|(_, o)| *o == class)
            .map(|(v, _)| v)
            .collect();
        top_features
            .iter()
            .map(|&i| members.iter().map(|v| v[i]).sum::<f64>() / members.len() as f64)
            .collect::<Vec<f64>>()
    };
    Ok((mean_of(Outcome::Yes), mean_of(Outcome::No)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherSelection {
    pub fisher: FisherScores,
    pub tau_pca: f64,
    pub top_features: Vec<usize>,
    pub mu_yes_top: Vec<f64>,
    pub mu_no_top: Vec<f64>,
}

impl FisherSelection {
    pub fn fit(model: &PcaModel, labeled: &[(Vec<f64>, Outcome)]) -> Result<Self> {
        let projected = labeled
            .iter()
            .map(|(v, o)| Ok((model.project(v)?, *o)))
            .collect::<Result<Vec<_>>>()?;
        let fisher = fisher_scores(&projected)?;
        let (tau_pca, top_features) = select_top_features(model, fisher.k_star);
        let (mu_yes_top, mu_no_top) = class_means(labeled, &top_features)?;
        Ok(FisherSelection {
            fisher,
            tau_pca,
            top_features,
            mu_yes_top,
            mu_no_top,
        })
    }

    pub fn k_star(&self) -> usize {
        self.fisher.k_star
    }

    /// `(d_yes, d_no)`: Euclidean distances from `v` to the class means over
    /// the selected features.
    pub fn distances(&self, v: &[f64]) -> (f64, f64) {
        let dist = |mu: &[f64]| {
            self.top_features
                .iter()
                .zip(mu)
                .map(|(&i, m)| (v[i] - m).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        (dist(&self.mu_yes_top), dist(&self.mu_no_top))
    }
}

/// Inverse-distance probability from the two class distances:
/// `d_no / (d_yes + d_no)`, and 0.5 when both are zero.
pub fn p_yes_from_distances(d_yes: f64, d_no: f64) -> f64 {
    let total = d_yes + d_no;
    if total == 0.0 {
        0.5
    } else {
        (d_no / total).clamp(0.0, 1.0)
    }
}

pub fn article_p_yes(v_new: &[f64], selection: &FisherSelection) -> f64 {
    let (d_yes, d_no) = selection.distances(v_new);
    p_yes_from_distances(d_yes, d_no)
}

/// `e^{−λ·age}`; negative ages are clamped to zero.
pub fn recency_weight(age_days: f64, lambda: f64) -> f64 {
    let age = if age_days < 0.0 {
        tracing::warn!(age_days, "article dated in the future; using age 0");
        0.0
    } else {
        age_days
    };
    (-lambda * age).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleScore {
    pub article_id: String,
    pub p_yes: f64,
    pub recency_weight: f64,
}

impl ArticleScore {
    pub fn p_no(&self) -> f64 {
        1.0 - self.p_yes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventProbability {
    pub p_yes: f64,
    pub p_no: f64,
}

impl EventProbability {
    pub fn from_yes(p_yes: f64) -> Self {
        EventProbability {
            p_yes,
            p_no: 1.0 - p_yes,
        }
    }
}

/// Recency-weighted mean of article probabilities.
pub fn aggregate_pca(scores: &[ArticleScore]) -> Result<EventProbability> {
    if scores.is_empty() {
        return Err(Error::no_signal("pca", "no unlabeled articles to score"));
    }
    let total: f64 = scores.iter().map(|s| s.recency_weight).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::no_signal("pca", "article weights sum to zero"));
    }
    let weighted: f64 = scores.iter().map(|s| s.recency_weight * s.p_yes).sum();
    let (lo, hi) = scores.iter().fold((1.0f64, 0.0f64), |(lo, hi), s| {
        (lo.min(s.p_yes), hi.max(s.p_yes))
    });
    Ok(EventProbability::from_yes((weighted / total).clamp(lo, hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn points_on_a_line() {
        let dim = 6;
        let labeled: Vec<_> = [-2.0, -1.0, 0.5, 1.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let mut v = vec![0.0; dim];
                v[0] = x;
                (
                    v,
                    if i % 2 == 0 {
                        Outcome::Yes
                    } else {
                        Outcome::No
                    },
                )
            })
            .collect();
        let model = fit_pca(&labeled).unwrap();
        assert_eq!(model.components[0], e(dim, 0));
        assert!(model.eigenvalues.get(1).copied().unwrap_or(0.0) < 1e-12);
    }

    #[test]
    fn rank_is_bounded_by_sample_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let labeled: Vec<_> = (0..50)
            .map(|i| {
                let v: Vec<f64> = (0..120).map(|_| rng.random_range(-1.0..1.0)).collect();
                (v, if i < 25 { Outcome::Yes } else { Outcome::No })
            })
            .collect();
        let model = fit_pca(&labeled).unwrap();
        assert!(model.rank() <= 49);
        assert_eq!(model.rank(), 49);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let yes = (vec![1.0, 0.0], Outcome::Yes);
        let no = (vec![0.0, 1.0], Outcome::No);
        assert!(fit_pca(&[yes.clone(), no.clone()]).is_err());
        assert!(fit_pca(&[yes.clone(), yes.clone(), yes.clone()]).is_err());
        let nan = (vec![f64::NAN, 0.0], Outcome::No);
        assert!(fit_pca(&[yes.clone(), no, nan]).is_err());
    }

    #[test]
    fn explained_variance_arithmetic() {
        let ev = explained_variance_of(&[3.0, 1.0]);
        assert_eq!(ev.ratios, vec![0.75, 0.25]);
        assert_eq!(ev.n95, 2);
        assert_eq!(explained_variance_of(&[2.5]).n95, 1);
    }

    #[test]
    fn projection_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vs: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let model = PcaModel::fit(&vs).unwrap();
        assert!(model
            .project(&model.mean)
            .unwrap()
            .iter()
            .all(|s| s.abs() < 1e-15));

        let shifted: Vec<f64> = model
            .mean
            .iter()
            .zip(&model.components[0])
            .map(|(m, u)| m + u)
            .collect();
        let s = model.project(&shifted).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(s[1..].iter().all(|x| x.abs() < 1e-12));

        let v: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let back = model.reconstruct(&model.project(&v).unwrap());
        let err: f64 = back
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-8, "{err}");
        assert!(model.project(&[1.0]).is_err());
    }

    #[test]
    fn fisher_hand_arithmetic() {
        let p = |x: f64, o| (vec![x, 0.5], o);
        let projected = [
            p(-1.0, Outcome::Yes),
            p(-1.1, Outcome::Yes),
            p(1.0, Outcome::No),
            p(1.1, Outcome::No),
        ];
        let f = fisher_scores(&projected).unwrap();
        // means ∓1.05, sample variances 0.005 each
        let expected = (2.1f64).powi(2) / (0.005 + 0.005);
        assert!((f.scores[0] - expected).abs() < 1e-9 * expected);
        assert_eq!(f.scores[1], 0.0);
        assert_eq!(f.k_star, 0);
    }

    #[test]
    fn fisher_perfect_separation_wins() {
        let projected = [
            (vec![5.0, 1.0], Outcome::Yes),
            (vec![4.0, 1.0], Outcome::Yes),
            (vec![-5.0, 2.0], Outcome::No),
            (vec![-4.0, 2.0], Outcome::No),
        ];
        let f = fisher_scores(&projected).unwrap();
        assert!(f.scores[0].is_finite());
        assert_eq!(f.scores[1], f64::INFINITY);
        assert_eq!(f.k_star, 1);
        assert!(fisher_scores(&projected[..3]).is_err());
    }

    #[test]
    fn fisher_ties_go_to_lowest_index() {
        let projected = [
            (vec![1.0, 1.0], Outcome::Yes),
            (vec![2.0, 2.0], Outcome::Yes),
            (vec![3.0, 3.0], Outcome::No),
            (vec![4.0, 4.0], Outcome::No),
        ];
        assert_eq!(fisher_scores(&projected).unwrap().k_star, 0);
    }

    #[test]
    fn percentile_and_top_features() {
        let (tau, top) = top_features_from_loadings(&[0.3; 20]);
        assert_eq!(tau, 0.3);
        assert_eq!(top.len(), 20);

        // |loadings| 1..=100 scaled, scrambled signs
        let loadings: Vec<f64> = (1..=100)
            .map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 } / 100.0)
            .collect();
        let (tau, top) = top_features_from_loadings(&loadings);
        // sorted oracle: h = 99·0.95 = 94.05 → between 0.95 and 0.96
        assert!((tau - 0.9505).abs() < 1e-12);
        assert_eq!(top, vec![95, 96, 97, 98, 99]);

        let n768: Vec<f64> = (0..768).map(|i| ((i * 7919) % 768) as f64 + 1.0).collect();
        let (_, top) = top_features_from_loadings(&n768);
        assert_eq!(top.len(), 39);
    }

    #[test]
    fn percentile_includes_boundary_value() {
        // h = 20·0.95 = 19 exactly: τ is the 20th order statistic itself
        let vals: Vec<f64> = (0..21).map(f64::from).collect();
        let (tau, top) = top_features_from_loadings(&vals);
        assert_eq!(tau, 19.0);
        assert_eq!(top, vec![19, 20]);
    }

    #[test]
    fn class_means_examples() {
        let labeled = [
            (vec![1.0, 3.0, 9.0], Outcome::Yes),
            (vec![3.0, 1.0, 9.0], Outcome::No),
        ];
        let (y, n) = class_means(&labeled, &[0, 1]).unwrap();
        assert_eq!(y, vec![1.0, 3.0]);
        assert_eq!(n, vec![3.0, 1.0]);
        assert!(class_means(&labeled[..1], &[0]).is_err());
    }

    #[test]
    fn distance_probability() {
        assert_eq!(p_yes_from_distances(0.0, 2.0), 1.0);
        assert_eq!(p_yes_from_distances(1.5, 1.5), 0.5);
        assert_eq!(p_yes_from_distances(1.0, 3.0), 0.75);
        assert_eq!(p_yes_from_distances(0.0, 0.0), 0.5);

        let sel = FisherSelection {
            fisher: FisherScores {
                scores: vec![1.0],
                k_star: 0,
            },
            tau_pca: 0.0,
            top_features: vec![0, 2],
            mu_yes_top: vec![1.0, 1.0],
            mu_no_top: vec![-1.0, -1.0],
        };
        assert_eq!(article_p_yes(&[1.0, 42.0, 1.0], &sel), 1.0);
        assert_eq!(article_p_yes(&[0.0, 7.0, 0.0], &sel), 0.5);
    }

    #[test]
    fn recency_weights() {
        assert_eq!(recency_weight(0.0, RECENCY_LAMBDA), 1.0);
        assert!((recency_weight(25.0, RECENCY_LAMBDA) - 0.5).abs() < 1e-12);
        assert!((recency_weight(50.0, RECENCY_LAMBDA) - 0.25).abs() < 1e-12);
        assert_eq!(recency_weight(-3.0, RECENCY_LAMBDA), 1.0);
    }

    fn score(p: f64, w: f64) -> ArticleScore {
        ArticleScore {
            article_id: String::new(),
            p_yes: p,
            recency_weight: w,
        }
    }

    #[test]
    fn aggregation() {
        assert_eq!(aggregate_pca(&[score(0.7, 0.1)]).unwrap().p_yes, 0.7);
        assert_eq!(
            aggregate_pca(&[score(1.0, 0.4), score(0.0, 0.4)])
                .unwrap()
                .p_yes,
            0.5
        );
        let p = aggregate_pca(&[score(0.9, 1.0), score(0.1, 0.25)]).unwrap();
        assert!((p.p_yes - (0.9 + 0.025) / 1.25).abs() < 1e-15);
        assert_eq!(p.p_yes + p.p_no, 1.0);
        assert!(aggregate_pca(&[]).unwrap_err().is_no_signal());
    }

    #[test]
    fn fisher_can_prefer_a_low_variance_component() {
        // large variance along e0 unrelated to class, class split along e1
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let labeled: Vec<_> = (0..40)
            .map(|i| {
                let o = if i % 2 == 0 {
                    Outcome::Yes
                } else {
                    Outcome::No
                };
                let side = if o == Outcome::Yes { 1.0 } else { -1.0 };
                let v = vec![
                    rng.random_range(-10.0..10.0),
                    side + rng.random_range(-0.2..0.2),
                    rng.random_range(-0.5..0.5),
                ];
                (v, o)
            })
            .collect();
        let model = fit_pca(&labeled).unwrap();
        let sel = FisherSelection::fit(&model, &labeled).unwrap();
        assert_ne!(sel.k_star(), 0);
    }
}
