//! Dense thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Matrices are passed as columns. Pairs of columns are rotated until every
//! pair is orthogonal to working precision; the column norms are then the
//! singular values. Accumulated rotations give `V` with orthonormal columns
//! to machine precision, which is why PCA uses this instead of forming the
//! covariance matrix.

const MAX_SWEEPS: usize = 80;
const ORTHOGONALITY_TOL: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct Svd {
    /// Left singular vectors as columns of length `m`. Columns whose
    /// singular value is exactly zero are left as zero vectors.
    pub u: Vec<Vec<f64>>,
    /// Singular values in nonincreasing order.
    pub singular: Vec<f64>,
    /// Right singular vectors as columns of length `n`.
    pub v: Vec<Vec<f64>>,
    pub sweeps: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(a: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = a.split_at_mut(q);
    let (ap, aq) = (&mut left[p], &mut right[0]);
    for (x, y) in ap.iter_mut().zip(aq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Thin SVD of the `m × n` matrix whose columns are `columns`.
pub fn svd_columns(columns: Vec<Vec<f64>>) -> Svd {
    let n = columns.len();
    let m = columns.first().map_or(0, Vec::len);
    assert!(columns.iter().all(|c| c.len() == m), "ragged matrix");

    let mut a = columns;
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= ORTHOGONALITY_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = a.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u = Vec::with_capacity(n);
    let mut singular = Vec::with_capacity(n);
    let mut v_sorted = Vec::with_capacity(n);
    for &j in &order {
        let sigma = norms[j];
        let col = if sigma > 0.0 {
            a[j].iter().map(|x| x / sigma).collect()
        } else {
            vec![0.0; m]
        };
        u.push(col);
        singular.push(sigma);
        v_sorted.push(std::mem::take(&mut v[j]));
    }
    Svd {
        u,
        singular,
        v: v_sorted,
        sweeps,
    }
}
