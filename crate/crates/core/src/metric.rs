//! Distances, stress and Shepard sampling.
//!
//! Two stress quantities exist side by side:
//!
//! * the *raw stress sample* of one layout iteration, the sum over points of
//!   [`sparse_stress_term`] on the sampled neighbor distances. It is noisy and
//!   unnormalized and only feeds the convergence filter;
//! * [`full_normalized_stress`], Kruskal-style
//!   `sqrt(sum (D_ij - d_ij)^2 / sum D_ij^2)` over all pairs of the active
//!   window. It is O(n^2 * dims) and used for evaluation only.

use rand::seq::index;
use rayon::prelude::*;

use crate::datamatrix::PointDistances;
use crate::error::{GlimmerError, Result};
use crate::layout::Embedding;
use crate::rng;
use crate::scalar::Scalar;

pub fn high_distance<T: Scalar, S: PointDistances<T> + ?Sized>(src: &S, i: usize, j: usize) -> T {
    src.distance(i, j)
}

pub fn low_distance<T: Scalar>(embedding: &Embedding<T>, i: usize, j: usize) -> T {
    embedding.distance(i, j)
}

/// Euclidean norm of `high - low`.
///
/// # Panics
/// If the buffers differ in length.
pub fn sparse_stress_term<T: Scalar>(high: &[T], low: &[T]) -> T {
    assert_eq!(high.len(), low.len(), "distance buffers differ in length");
    high.iter()
        .zip(low)
        .fold(T::zero(), |acc, (a, b)| {
            let r = *a - *b;
            acc + r * r
        })
        .sqrt()
}

/// Per-row sums `(sum_j>i (D-d)^2, sum_j>i D^2)`, folded in index order.
fn row_sums<T: Scalar, S: PointDistances<T> + ?Sized>(
    src: &S,
    embedding: &Embedding<T>,
    i: usize,
) -> (T, T) {
    let n = src.point_count();
    let mut num = T::zero();
    let mut den = T::zero();
    for j in i + 1..n {
        let hd = src.distance(i, j);
        let r = hd - embedding.distance(i, j);
        num += r * r;
        den += hd * hd;
    }
    (num, den)
}

/// Normalized stress over every pair and the full active window.
///
/// Rows are evaluated in parallel and reduced in a fixed order, so the
/// result does not depend on the thread count.
pub fn full_normalized_stress<T: Scalar, S: PointDistances<T> + ?Sized>(
    src: &S,
    embedding: &Embedding<T>,
) -> Result<T> {
    let n = src.point_count();
    if n < 2 {
        return Err(GlimmerError::DegenerateData("stress needs at least two points".into()));
    }
    assert_eq!(n, embedding.len(), "embedding and data disagree on point count");
    let rows: Vec<(T, T)> = (0..n)
        .into_par_iter()
        .map(|i| row_sums(src, embedding, i))
        .collect();
    let (num, den) = rows
        .into_iter()
        .fold((T::zero(), T::zero()), |(a, b), (x, y)| (a + x, b + y));
    if den <= T::zero() {
        return Err(GlimmerError::DegenerateData(
            "all high-dimensional distances are zero".into(),
        ));
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShepardSample<T> {
    /// `(high, low)` distance per sampled pair.
    pub pairs: Vec<(T, T)>,
    /// Point indices `(i, j)`, `i < j`, aligned with `pairs`.
    pub indices: Vec<(usize, usize)>,
    pub seed: u64,
}

impl<T> ShepardSample<T> {
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }
}

/// Map a linear index in `0..n(n-1)/2` to the pair `(i, j)`, `i < j`,
/// enumerating row by row.
#[cfg(test)]
fn unrank_pair(mut r: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if r < row {
            return (i, i + 1 + r);
        }
        r -= row;
        i += 1;
    }
}

/// Sample distinct unordered pairs uniformly without replacement. All pairs
/// are returned when `pair_count` reaches `n(n-1)/2`.
pub fn shepard_sample<T: Scalar, S: PointDistances<T> + ?Sized>(
    src: &S,
    embedding: &Embedding<T>,
    pair_count: usize,
    seed: u64,
) -> Result<ShepardSample<T>> {
    let n = src.point_count();
    if n < 2 {
        return Err(GlimmerError::DegenerateData(
            "a Shepard sample needs at least two points".into(),
        ));
    }
    if pair_count == 0 {
        return Err(GlimmerError::InvalidConfig("pair count must be >= 1".into()));
    }
    let total = n * (n - 1) / 2;
    let mut ranks: Vec<usize> = if pair_count >= total {
        (0..total).collect()
    } else {
        let mut r = rng::stream(seed, &[]);
        index::sample(&mut r, total, pair_count).into_vec()
    };
    ranks.sort_unstable();

    // Walk rows incrementally instead of unranking each pair from scratch.
    let mut indices = Vec::with_capacity(ranks.len());
    let (mut row, mut row_start) = (0usize, 0usize);
    for r in ranks {
        while r >= row_start + (n - 1 - row) {
            row_start += n - 1 - row;
            row += 1;
        }
        indices.push((row, row + 1 + (r - row_start)));
    }
    let pairs = indices
        .par_iter()
        .map(|&(i, j)| (src.distance(i, j), embedding.distance(i, j)))
        .collect();
    Ok(ShepardSample {
        pairs,
        indices,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamatrix::{generate, DataMatrix, PackedWindow, SyntheticSpec};

    fn packed(values: Vec<f64>, n: usize, d: usize) -> PackedWindow<f64> {
        PackedWindow::new(values, n, d)
    }

    #[test]
    fn three_four_five() {
        let w = packed(vec![0.0, 0.0, 3.0, 4.0], 2, 2);
        assert_eq!(high_distance(&w, 0, 1), 5.0);
        assert_eq!(high_distance(&w, 1, 1), 0.0);
    }

    #[test]
    fn low_distance_basics() {
        let e = Embedding::from_positions(vec![[0.0, 0.0], [0.0, 2.0]]);
        assert_eq!(low_distance(&e, 0, 1), 2.0);
        assert_eq!(low_distance(&e, 0, 0), 0.0);
    }

    #[test]
    fn distances_match_naive_loop() {
        let mut m: DataMatrix<f64> = generate(&SyntheticSpec::uniform(5, 8, 1)).unwrap();
        for id in m.chunk_ids() {
            m.activate(id).unwrap();
        }
        let flat = m.to_row_major();
        for i in 0..5 {
            for j in 0..5 {
                let mut s = 0.0;
                for c in 0..8 {
                    s += (flat[i * 8 + c] - flat[j * 8 + c]).powi(2);
                }
                assert!((high_distance(&m, i, j) - s.sqrt()).abs() < 1e-12);
            }
        }

        let e = Embedding::from_positions(
            (0..5).map(|i| [(i as f64 * 1.3).cos(), (i as f64 * 0.7).sin()]).collect(),
        );
        for i in 0..5 {
            for j in 0..5 {
                let p = e.position(i);
                let q = e.position(j);
                let naive = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                assert!((low_distance(&e, i, j) - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparse_term_examples() {
        assert_eq!(sparse_stress_term(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((sparse_stress_term(&[1.0, 2.0], &[0.0, 0.0]) - 5f64.sqrt()).abs() < 1e-15);
        let a: Vec<f64> = (0..8).map(|i| (i as f64 * 0.9).sin().abs()).collect();
        let b: Vec<f64> = (0..8).map(|i| (i as f64 * 0.4).cos().abs()).collect();
        let direct: f64 = (0..8).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum::<f64>().sqrt();
        assert!((sparse_stress_term(&a, &b) - direct).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "differ in length")]
    fn sparse_term_length_mismatch() {
        sparse_stress_term(&[1.0], &[1.0, 2.0]);
    }

    #[test]
    fn full_stress_exact_and_collapsed() {
        let pts = vec![0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 3.0, 3.0];
        let w = packed(pts.clone(), 4, 2);
        let exact = Embedding::from_positions(pts.chunks(2).map(|c| [c[0], c[1]]).collect());
        assert_eq!(full_normalized_stress(&w, &exact).unwrap(), 0.0);
        let collapsed = Embedding::from_positions(vec![[0.5, 0.5]; 4]);
        assert!((full_normalized_stress(&w, &collapsed).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_stress_equilateral_on_a_line() {
        // Regular simplex in 3D: all pairwise distances 1.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = packed(vec![s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, s], 3, 3);
        let e = Embedding::from_positions(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        let expected = (1.0f64 / 3.0).sqrt();
        assert!((full_normalized_stress(&w, &e).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.57735).abs() < 1e-5);
    }

    #[test]
    fn full_stress_degenerate() {
        let w = packed(vec![1.0; 6], 3, 2);
        let e = Embedding::from_positions(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert!(matches!(
            full_normalized_stress(&w, &e),
            Err(GlimmerError::DegenerateData(_))
        ));
    }

    #[test]
    fn shepard_exhausts_small_sets() {
        let w = packed(vec![0.0, 1.0, 3.0], 3, 1);
        let e = Embedding::from_positions(vec![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]);
        let s = shepard_sample(&w, &e, 10, 1).unwrap();
        assert_eq!(s.indices, vec![(0, 1), (0, 2), (1, 2)]);
        assert!(s.pairs.iter().all(|(h, l)| h == l));
    }

    #[test]
    fn shepard_is_seeded_and_distinct() {
        let m: DataMatrix<f64> = generate(&SyntheticSpec::uniform(40, 3, 2)).unwrap();
        let mut m = m;
        for id in m.chunk_ids() {
            m.activate(id).unwrap();
        }
        let e = Embedding::from_positions((0..40).map(|i| [i as f64, 0.0]).collect());
        let a = shepard_sample(&m, &e, 100, 9).unwrap();
        let b = shepard_sample(&m, &e, 100, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pair_count(), 100);
        let mut idx = a.indices.clone();
        idx.dedup();
        assert_eq!(idx.len(), 100);
        assert!(a.indices.iter().all(|&(i, j)| i < j && j < 40));
        for (k, &(i, j)) in a.indices.iter().enumerate() {
            assert_eq!(a.pairs[k].0, m.distance(i, j));
        }
        assert!(shepard_sample(&packed(vec![0.0], 1, 1), &Embedding::zeros(1), 1, 0).is_err());
    }

    #[test]
    fn row_walk_matches_unranking() {
        let n = 7;
        let all: Vec<_> = (0..21).map(|r| unrank_pair(r, n)).collect();
        let expected: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        assert_eq!(all, expected);

        let w = packed((0..n).map(|v| v as f64).collect(), n, 1);
        let e = Embedding::zeros(n);
        let s = shepard_sample(&w, &e, 8, 3).unwrap();
        for &(i, j) in &s.indices {
            assert!(all.contains(&(i, j)));
        }
    }
}
