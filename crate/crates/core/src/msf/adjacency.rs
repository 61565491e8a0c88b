//! Clip-graph adjacency builders for the global feature branch.

use ndarray::{Array2, ArrayView2};

use super::MsfError;

/// Pairwise cosine similarity of the row vectors of `f`.
///
/// Rows of zero norm read as similarity 0 against every row, themselves
/// included; after row softmax they fall back to uniform attention.
pub fn similarity_adjacency(f: ArrayView2<f64>) -> Array2<f64> {
    let (t, c) = f.dim();
    let mut norms = vec![0.0f64; t];
    for (i, norm) in norms.iter_mut().enumerate() {
        let mut sq = 0.0;
        for d in 0..c {
            sq += f[[i, d]] * f[[i, d]];
        }
        *norm = sq.sqrt();
    }
    let mut out = Array2::<f64>::zeros((t, t));
    for i in 0..t {
        for j in 0..t {
            if norms[i] > 0.0 && norms[j] > 0.0 {
                let mut dot = 0.0;
                for d in 0..c {
                    dot += f[[i, d]] * f[[j, d]];
                }
                out[[i, j]] = dot / (norms[i] * norms[j]);
            }
        }
    }
    out
}

/// Position-distance adjacency: entry `(i, j)` is `-|i - j| / sigma`, a
/// symmetric Toeplitz matrix with zero diagonal.
pub fn distance_adjacency(t: usize, sigma: f64) -> Result<Array2<f64>, MsfError> {
    if t == 0 {
        return Err(MsfError::FeatureShape("clip count must be at least 1".into()));
    }
    if sigma <= 0.0 {
        return Err(MsfError::BadHyper(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(Array2::from_shape_fn((t, t), |(i, j)| {
        -(i.abs_diff(j) as f64) / sigma
    }))
}

/// Row-wise softmax normalization.
pub fn row_softmax(m: ArrayView2<f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_rows_give_all_ones() {
        let f = arr2(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]);
        let sim = similarity_adjacency(f.view());
        for &v in sim.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_rows_give_identity_pattern() {
        let f = arr2(&[[1.0, 0.0], [0.0, 3.0]]);
        let sim = similarity_adjacency(f.view());
        assert!((sim[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((sim[[1, 1]] - 1.0).abs() < 1e-12);
        assert_eq!(sim[[0, 1]], 0.0);
        assert_eq!(sim[[1, 0]], 0.0);
    }

    #[test]
    fn zero_norm_rows_read_zero_everywhere() {
        let f = arr2(&[[0.0, 0.0], [1.0, 1.0]]);
        let sim = similarity_adjacency(f.view());
        assert_eq!(sim[[0, 0]], 0.0);
        assert_eq!(sim[[0, 1]], 0.0);
        assert_eq!(sim[[1, 0]], 0.0);
        // Softmax of the zeroed row falls back to uniform weights.
        let soft = row_softmax(sim.view());
        assert!((soft[[0, 0]] - 0.5).abs() < 1e-12);
        assert!((soft[[0, 1]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn similarity_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let sim = similarity_adjacency(f.view());
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = (0..4).map(|d| f[[i, d]] * f[[j, d]]).sum();
                let ni: f64 = (0..4).map(|d| f[[i, d]] * f[[i, d]]).sum::<f64>().sqrt();
                let nj: f64 = (0..4).map(|d| f[[j, d]] * f[[j, d]]).sum::<f64>().sqrt();
                assert!((sim[[i, j]] - dot / (ni * nj)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distance_matrix_examples() {
        let m = distance_adjacency(3, 1.0).unwrap();
        let expect = arr2(&[[0.0, -1.0, -2.0], [-1.0, 0.0, -1.0], [-2.0, -1.0, 0.0]]);
        assert_eq!(m, expect);

        assert_eq!(distance_adjacency(1, 1.0).unwrap(), arr2(&[[0.0]]));

        let m = distance_adjacency(6, 2.0).unwrap();
        for i in 0..6usize {
            for j in 0..6usize {
                let expect = -((i as f64 - j as f64).abs()) / 2.0;
                assert_eq!(m[[i, j]], expect);
            }
        }
        assert!(distance_adjacency(0, 1.0).is_err());
        assert!(distance_adjacency(3, 0.0).is_err());
    }

    #[test]
    fn uniform_adjacency_smooths_rows_to_identical_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0));
        let uniform = row_softmax(Array2::<f64>::zeros((4, 4)).view());
        let mixed = uniform.dot(&f).dot(&w);
        for i in 1..4 {
            for d in 0..3 {
                assert!((mixed[[i, d]] - mixed[[0, d]]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one_and_sim_is_symmetric(
            seed in 0u64..2000,
            t in 1usize..10,
            c in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = Array2::from_shape_fn((t, c), |_| rng.random_range(-2.0..2.0));
            let sim = similarity_adjacency(f.view());
            for i in 0..t {
                for j in 0..t {
                    prop_assert!(sim[[i, j]] >= -1.0 - 1e-12 && sim[[i, j]] <= 1.0 + 1e-12);
                    prop_assert!((sim[[i, j]] - sim[[j, i]]).abs() < 1e-12);
                }
            }
            let soft = row_softmax(sim.view());
            for row in soft.rows() {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-6);
            }
            let dis = distance_adjacency(t, 1.0).unwrap();
            let soft_dis = row_softmax(dis.view());
            for row in soft_dis.rows() {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-6);
            }
        }
    }
}
