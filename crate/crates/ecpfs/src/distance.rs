//! Distance kernels. All arithmetic is 32-bit float regardless of the
//! on-disk dtype, and every metric is normalized so that smaller is better.
//!
//! - `L2`: Euclidean distance.
//! - `Cosine`: `1 - cosine similarity` (zero-norm vectors score similarity 0).
//! - `InnerProduct`: negated dot product. May be negative; ordering-only.

use crate::error::{Error, Result};
use crate::params::Metric;

/// A scored result: `(distance, item_id)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoredItem {
    pub distance: f32,
    pub item_id: u64,
}

/// Ascending comparison by (distance, item_id) — the total order used
/// everywhere results are ranked.
pub fn cmp_scored(a: &ScoredItem, b: &ScoredItem) -> std::cmp::Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.item_id.cmp(&b.item_id))
}

/// Distance between a single pair of vectors.
pub fn distance(metric: Metric, a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    match metric {
        Metric::L2 => {
            let mut acc = 0.0f32;
            for (x, y) in a.iter().zip(b) {
                let d = x - y;
                acc += d * d;
            }
            acc.sqrt()
        }
        Metric::Cosine => {
            let mut dot = 0.0f32;
            let mut na = 0.0f32;
            let mut nb = 0.0f32;
            for (x, y) in a.iter().zip(b) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            let denom = na.sqrt() * nb.sqrt();
            if denom == 0.0 {
                1.0
            } else {
                // rounding can push 1 - cos a hair below zero for
                // near-identical vectors; the distance stays non-negative
                (1.0 - dot / denom).max(0.0)
            }
        }
        Metric::InnerProduct => {
            let mut dot = 0.0f32;
            for (x, y) in a.iter().zip(b) {
                dot += x * y;
            }
            -dot
        }
    }
}

/// One distance per row of a row-major `[n x dim]` matrix.
///
/// The query is checked for finiteness up front; matrix rows are checked via
/// the computed distance (NaN/inf propagate).
pub fn calculate_distances(
    embeddings: &[f32],
    dim: usize,
    query: &[f32],
    metric: Metric,
) -> Result<Vec<f32>> {
    if query.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: query.len(),
        });
    }
    if embeddings.len() % dim != 0 {
        return Err(Error::InvalidArgument(format!(
            "embedding buffer length {} is not a multiple of dim {}",
            embeddings.len(),
            dim
        )));
    }
    if !query.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("query vector"));
    }
    let mut out = Vec::with_capacity(embeddings.len() / dim);
    for row in embeddings.chunks_exact(dim) {
        let d = distance(metric, row, query);
        if !d.is_finite() {
            return Err(Error::NonFinite("embedding row"));
        }
        out.push(d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_vectors_l2_is_zero() {
        let v = vec![0.3f32, -1.5, 2.0, 7.25];
        let d = calculate_distances(&v, 4, &v, Metric::L2).unwrap();
        assert_eq!(d, vec![0.0]);
    }

    #[test]
    fn identical_vectors_cosine_is_zero() {
        let v = vec![0.3f32, -1.5, 2.0, 7.25];
        let d = calculate_distances(&v, 4, &v, Metric::Cosine).unwrap();
        assert!(d[0].abs() <= 1e-6);
    }

    #[test]
    fn orthogonal_unit_vectors_cosine_is_one() {
        let rows = vec![1.0f32, 0.0];
        let q = vec![0.0f32, 1.0];
        let d = calculate_distances(&rows, 2, &q, Metric::Cosine).unwrap();
        assert!((d[0] - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn inner_product_is_negated_dot() {
        let rows = vec![1.0f32, 2.0, 3.0];
        let q = vec![2.0f32, 0.5, -1.0];
        let d = calculate_distances(&rows, 3, &q, Metric::InnerProduct).unwrap();
        assert_eq!(d[0], -(2.0 + 1.0 - 3.0));
    }

    /// Scalar per-element oracle, written independently of `distance`.
    fn l2_oracle(a: &[f32], b: &[f32]) -> f64 {
        let mut acc = 0.0f64;
        for i in 0..a.len() {
            let d = a[i] as f64 - b[i] as f64;
            acc += d * d;
        }
        acc.sqrt()
    }

    #[test]
    fn l2_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dim = 4;
        let rows: Vec<f32> = (0..8 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = calculate_distances(&rows, dim, &q, Metric::L2).unwrap();
        for (i, row) in rows.chunks_exact(dim).enumerate() {
            let want = l2_oracle(row, &q);
            let rel = ((got[i] as f64) - want).abs() / want.max(1e-12);
            assert!(rel < 1e-5, "row {i}: got {} want {want}", got[i]);
        }
    }

    /// Argsort equivalence against the oracle on random instances.
    #[test]
    fn argsort_matches_oracle_l2_and_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..100 {
            let dim = rng.random_range(1..=32);
            let n = rng.random_range(1..=64);
            let rows: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let q: Vec<f32> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            for metric in [Metric::L2, Metric::Cosine] {
                let got = calculate_distances(&rows, dim, &q, metric).unwrap();
                let oracle: Vec<f64> = rows
                    .chunks_exact(dim)
                    .map(|r| match metric {
                        Metric::L2 => l2_oracle(r, &q),
                        Metric::Cosine => {
                            let dot: f64 =
                                r.iter().zip(&q).map(|(a, b)| *a as f64 * *b as f64).sum();
                            let na: f64 = r.iter().map(|a| *a as f64 * *a as f64).sum::<f64>();
                            let nb: f64 = q.iter().map(|a| *a as f64 * *a as f64).sum::<f64>();
                            1.0 - dot / (na.sqrt() * nb.sqrt())
                        }
                        Metric::InnerProduct => unreachable!(),
                    })
                    .collect();
                let mut idx_got: Vec<usize> = (0..n).collect();
                idx_got.sort_by(|&a, &b| got[a].total_cmp(&got[b]).then(a.cmp(&b)));
                let mut idx_want: Vec<usize> = (0..n).collect();
                idx_want.sort_by(|&a, &b| oracle[a].total_cmp(&oracle[b]).then(a.cmp(&b)));
                assert_eq!(idx_got, idx_want, "case {case} metric {metric:?}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let rows = vec![1.0f32; 8];
        let q = vec![1.0f32; 3];
        assert!(calculate_distances(&rows, 4, &q, Metric::L2).is_err());
    }

    #[test]
    fn non_finite_query_rejected() {
        let rows = vec![1.0f32; 4];
        let q = vec![1.0f32, f32::NAN, 0.0, 0.0];
        assert!(matches!(
            calculate_distances(&rows, 4, &q, Metric::L2),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn non_finite_row_rejected() {
        let rows = vec![1.0f32, f32::INFINITY, 0.0, 0.0];
        let q = vec![1.0f32; 4];
        assert!(matches!(
            calculate_distances(&rows, 4, &q, Metric::L2),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn cosine_self_distance_never_negative() {
        // norms whose product rounds the similarity slightly above 1
        let v = vec![0.1f32, 0.2, 0.3, 0.7, 1e-3, 42.0, -0.33, 0.01];
        let d = calculate_distances(&v, 8, &v, Metric::Cosine).unwrap();
        assert!(d[0] >= 0.0);
        assert!(d[0] <= 1e-6);
    }

    #[test]
    fn zero_norm_cosine_is_defined() {
        let rows = vec![0.0f32; 4];
        let q = vec![1.0f32, 0.0, 0.0, 0.0];
        let d = calculate_distances(&rows, 4, &q, Metric::Cosine).unwrap();
        assert_eq!(d[0], 1.0);
    }
}
