//! Independent oracles for the acceptance suite. Everything here is written
//! against the textbook definition, not the library's implementation, so
//! agreement between the two routes is evidence, not tautology.

use ndarray::{Array1, Array2, Axis};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// rows. Plain rotation arithmetic, no shortcuts — the point is to be an
/// implementation with nothing in common with the SVD route it checks.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let d = a.nrows();
    assert_eq!(d, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(d);

    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if m[(p, q)].abs() < 1e-20 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).expect("finite eigenvalues"));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Array2::zeros((d, d));
    for (r, &i) in order.iter().enumerate() {
        vectors.row_mut(r).assign(&v.column(i));
    }
    (eigenvalues, vectors)
}

/// Sample covariance (n − 1 denominator) of the rows of `x`.
pub fn sample_covariance(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mean: Array1<f64> = x.mean_axis(Axis(0)).expect("non-empty matrix");
    let centered = x - &mean.view().insert_axis(Axis(0));
    centered.t().dot(&centered) / (n - 1) as f64
}

/// AUC by literal pair counting: ties between a positive and a negative
/// score contribute 1/2.
pub fn auc_by_pair_counting(labels: &[usize], scores: &[f64]) -> f64 {
    let mut wins = 0.0f64;
    let mut pairs = 0.0f64;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_solves_a_known_matrix() {
        // Eigenvalues of [[2,1],[1,2]] are 3 and 1, vectors (1,1)/√2, (1,-1)/√2.
        let (vals, vecs) = jacobi_eigen(&array![[2.0, 1.0], [1.0, 2.0]]);
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs[(0, 0)].abs() - inv_sqrt2).abs() < 1e-12);
        assert!((vecs[(0, 1)].abs() - inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn pair_counting_handles_ties() {
        // Scores: pos {0.9, 0.5}, neg {0.5, 0.1}. Pairs: (0.9 vs 0.5) win,
        // (0.9 vs 0.1) win, (0.5 vs 0.5) half, (0.5 vs 0.1) win → 3.5/4.
        let auc = auc_by_pair_counting(&[1, 1, 0, 0], &[0.9, 0.5, 0.5, 0.1]);
        assert!((auc - 0.875).abs() < 1e-15);
    }
}
