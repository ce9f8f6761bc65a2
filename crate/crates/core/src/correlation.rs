//! Difference statistics on sampled variable pairs.
//!
//! Each group is prepared once (centering, scaling, ranks for Spearman) so
//! that a pair costs two length-`n` dot products.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result, ScreenError};
use crate::matrix::ExpressionMatrix;
use crate::sampler::Pair;
use crate::scalar::{dot, Scalar};
use crate::sparse::SparseDifferential;

/// Which pairwise statistic is differenced between the groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    Covariance,
    Pearson,
    Spearman,
}

impl StatKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatKind::Covariance => "covariance",
            StatKind::Pearson => "pearson",
            StatKind::Spearman => "spearman",
        }
    }

    pub fn is_correlation(&self) -> bool {
        !matches!(self, StatKind::Covariance)
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatKind {
    type Err = ScreenError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "covariance" | "cov" => Ok(StatKind::Covariance),
            "pearson" => Ok(StatKind::Pearson),
            "spearman" => Ok(StatKind::Spearman),
            other => param_err(format!("unknown statistic `{other}`")),
        }
    }
}

/// Per-group precomputation for pair statistics.
#[derive(Debug, Clone)]
pub struct PreparedGroup {
    n: usize,
    p: usize,
    stat_kind: StatKind,
    /// Raw values widened to f64, or average ranks for Spearman (column-major).
    pub transformed: Vec<f64>,
    pub column_means: Vec<f64>,
    /// Sample standard deviations (`1/(n-1)` convention).
    pub column_sds: Vec<f64>,
    /// Columns whose values are all identical.
    pub degenerate: Vec<bool>,
    // Centered and scaled so that a dot product yields the statistic.
    kernel: Vec<f64>,
}

impl PreparedGroup {
    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_variables(&self) -> usize {
        self.p
    }

    pub fn stat_kind(&self) -> StatKind {
        self.stat_kind
    }

    pub fn transformed_column(&self, j: usize) -> &[f64] {
        &self.transformed[j * self.n..(j + 1) * self.n]
    }

    #[inline]
    fn kernel_column(&self, j: usize) -> &[f64] {
        &self.kernel[j * self.n..(j + 1) * self.n]
    }

    /// Indices of degenerate (constant) columns.
    pub fn degenerate_indices(&self) -> Vec<usize> {
        self.degenerate
            .iter()
            .enumerate()
            .filter_map(|(j, &d)| d.then_some(j))
            .collect()
    }
}

/// Average ranks (1-based); ties receive the mean of the tied positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

pub fn prepare_group<T: Scalar>(x: &ExpressionMatrix<T>, stat_kind: StatKind) -> PreparedGroup {
    let n = x.n_samples();
    let p = x.n_variables();
    let mut transformed = Vec::with_capacity(n * p);
    let mut column_means = Vec::with_capacity(p);
    let mut column_sds = Vec::with_capacity(p);
    let mut degenerate = Vec::with_capacity(p);
    let mut kernel = Vec::with_capacity(n * p);

    for j in 0..p {
        let raw: Vec<f64> = x.column(j).iter().map(|v| v.as_f64()).collect();
        let col = match stat_kind {
            StatKind::Spearman => average_ranks(&raw),
            _ => raw,
        };
        let constant = col.iter().all(|&v| v == col[0]);
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = if constant { 0.0 } else { (ss / (n - 1) as f64).sqrt() };

        let scale = match stat_kind {
            StatKind::Covariance => 1.0 / ((n - 1) as f64).sqrt(),
            _ if constant => 0.0,
            _ => 1.0 / ss.sqrt(),
        };
        kernel.extend(col.iter().map(|v| (v - mean) * scale));
        transformed.extend_from_slice(&col);
        column_means.push(mean);
        column_sds.push(sd);
        degenerate.push(constant);
    }

    PreparedGroup {
        n,
        p,
        stat_kind,
        transformed,
        column_means,
        column_sds,
        degenerate,
        kernel,
    }
}

/// `stat(X1; i, j) - stat(X2; i, j)` plus a flag for zero-variance variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDifference {
    pub value: f64,
    pub degenerate: bool,
}

fn check_groups(g1: &PreparedGroup, g2: &PreparedGroup, stat_kind: StatKind) -> Result<()> {
    if g1.p != g2.p {
        return Err(ScreenError::Dimension(format!(
            "groups have {} and {} variables",
            g1.p, g2.p
        )));
    }
    if g1.stat_kind != stat_kind || g2.stat_kind != stat_kind {
        return param_err(format!(
            "groups prepared as {}/{} but {} requested",
            g1.stat_kind, g2.stat_kind, stat_kind
        ));
    }
    Ok(())
}

#[inline]
fn raw_difference(g1: &PreparedGroup, g2: &PreparedGroup, i: usize, j: usize) -> f64 {
    dot(g1.kernel_column(i), g1.kernel_column(j)) - dot(g2.kernel_column(i), g2.kernel_column(j))
}

#[inline]
fn pair_is_degenerate(g1: &PreparedGroup, g2: &PreparedGroup, i: usize, j: usize) -> bool {
    g1.stat_kind.is_correlation() && (g1.degenerate[i] || g1.degenerate[j] || g2.degenerate[i] || g2.degenerate[j])
}

pub fn pair_difference(
    g1: &PreparedGroup,
    g2: &PreparedGroup,
    i: usize,
    j: usize,
    stat_kind: StatKind,
) -> Result<PairDifference> {
    check_groups(g1, g2, stat_kind)?;
    if i == j || i >= g1.p || j >= g1.p {
        return Err(ScreenError::Precondition(format!(
            "pair ({i},{j}) must be two distinct variables below {}",
            g1.p
        )));
    }
    Ok(PairDifference {
        value: raw_difference(g1, g2, i, j),
        degenerate: pair_is_degenerate(g1, g2, i, j),
    })
}

/// Unscaled differences for a list of pairs, evaluated in parallel chunks.
pub(crate) fn pair_differences(g1: &PreparedGroup, g2: &PreparedGroup, pairs: &[Pair]) -> Vec<f64> {
    const CHUNK: usize = 1 << 14;
    let mut out = vec![0.0; pairs.len()];
    out.par_chunks_mut(CHUNK)
        .zip(pairs.par_chunks(CHUNK))
        .for_each(|(dst, src)| {
            for (d, &(i, j)) in dst.iter_mut().zip(src) {
                *d = raw_difference(g1, g2, i as usize, j as usize);
            }
        });
    out
}

/// Builds the rescaled sparse differential matrix `D_ij / rho` on `pairs`.
pub fn build_sparse_differential<T: Scalar>(
    g1: &PreparedGroup,
    g2: &PreparedGroup,
    pairs: &[Pair],
    rho: f64,
    stat_kind: StatKind,
) -> Result<SparseDifferential<T>> {
    check_groups(g1, g2, stat_kind)?;
    if !(rho > 0.0 && rho <= 1.0) {
        return param_err(format!("rho must lie in (0, 1], got {rho}"));
    }
    let p = g1.p;
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= j || j as usize >= p) {
        return Err(ScreenError::Precondition(format!(
            "pair ({i},{j}) is not an upper-triangle pair for p={p}"
        )));
    }
    let values = pair_differences(g1, g2, pairs);
    let inv = 1.0 / rho;
    let entries = pairs
        .iter()
        .zip(values)
        .map(|(&pair, v)| (pair, T::of_f64(v * inv)));
    let degenerate: Vec<bool> = if stat_kind.is_correlation() {
        (0..p).map(|j| g1.degenerate[j] || g2.degenerate[j]).collect()
    } else {
        vec![false; p]
    };
    SparseDifferential::from_entries(p, rho, stat_kind, entries, degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::sample_pairs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: &[Vec<f64>]) -> ExpressionMatrix<f64> {
        ExpressionMatrix::from_rows(rows, None).unwrap()
    }

    fn random_matrix(n: usize, p: usize, seed: u64) -> ExpressionMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect())
            .collect();
        mat(&rows)
    }

    /// Textbook two-pass sample covariance.
    fn textbook_cov(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
    }

    fn textbook_corr(a: &[f64], b: &[f64]) -> f64 {
        textbook_cov(a, b) / (textbook_cov(a, a) * textbook_cov(b, b)).sqrt()
    }

    #[test]
    fn spearman_rank_examples() {
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 1.0]), vec![2.5, 2.5, 1.0]);
        let m = mat(&[vec![3.0, 5.0], vec![1.0, 5.0], vec![2.0, 1.0]]);
        let g = prepare_group(&m, StatKind::Spearman);
        assert_eq!(g.transformed_column(0), &[3.0, 1.0, 2.0]);
        assert_eq!(g.transformed_column(1), &[2.5, 2.5, 1.0]);
    }

    #[test]
    fn rank_sums_are_exact() {
        let x = random_matrix(9, 6, 1).map(|v| (v * 2.0).round()).unwrap();
        let g = prepare_group(&x, StatKind::Spearman);
        for j in 0..6 {
            assert_eq!(g.transformed_column(j).iter().sum::<f64>(), 45.0);
        }
    }

    #[test]
    fn constant_columns_are_flagged() {
        let m = mat(&[vec![1.0, 2.0], vec![1.0, 3.0], vec![1.0, 5.0]]);
        let g = prepare_group(&m, StatKind::Pearson);
        assert_eq!(g.degenerate, vec![true, false]);
        assert_eq!(g.column_sds[0], 0.0);
        let d = pair_difference(&g, &g, 0, 1, StatKind::Pearson).unwrap();
        assert_eq!(d, PairDifference { value: 0.0, degenerate: true });
    }

    #[test]
    fn extreme_pearson_cases() {
        let a = vec![1.0, 2.0, 4.0, 7.0];
        let same = mat(&a.iter().map(|&v| vec![v, v]).collect::<Vec<_>>());
        let g = prepare_group(&same, StatKind::Pearson);
        let d = pair_difference(&g, &g, 0, 1, StatKind::Pearson).unwrap();
        assert!(d.value.abs() < 1e-15);

        let neg = mat(&a.iter().map(|&v| vec![v, -v]).collect::<Vec<_>>());
        let g1 = prepare_group(&neg, StatKind::Pearson);
        let d = pair_difference(&g1, &g, 0, 1, StatKind::Pearson).unwrap();
        assert!((d.value + 2.0).abs() < 1e-14);
        assert!(!d.degenerate);
    }

    #[test]
    fn matches_textbook_oracle() {
        for seed in 0..20 {
            let x1 = random_matrix(5, 2, seed);
            let x2 = random_matrix(5, 2, seed + 100);
            let (a1, b1) = (x1.column(0), x1.column(1));
            let (a2, b2) = (x2.column(0), x2.column(1));

            let g1 = prepare_group(&x1, StatKind::Covariance);
            let g2 = prepare_group(&x2, StatKind::Covariance);
            let d = pair_difference(&g1, &g2, 0, 1, StatKind::Covariance).unwrap().value;
            assert!((d - (textbook_cov(a1, b1) - textbook_cov(a2, b2))).abs() < 1e-12);

            let g1 = prepare_group(&x1, StatKind::Pearson);
            let g2 = prepare_group(&x2, StatKind::Pearson);
            let d = pair_difference(&g1, &g2, 1, 0, StatKind::Pearson).unwrap().value;
            assert!((d - (textbook_corr(a1, b1) - textbook_corr(a2, b2))).abs() < 1e-12);

            let r = |c: &[f64]| average_ranks(c);
            let g1 = prepare_group(&x1, StatKind::Spearman);
            let g2 = prepare_group(&x2, StatKind::Spearman);
            let d = pair_difference(&g1, &g2, 0, 1, StatKind::Spearman).unwrap().value;
            let want = textbook_corr(&r(a1), &r(b1)) - textbook_corr(&r(a2), &r(b2));
            assert!((d - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_preparation_is_rejected() {
        let x = random_matrix(6, 3, 2);
        let g1 = prepare_group(&x, StatKind::Pearson);
        let g2 = prepare_group(&x, StatKind::Spearman);
        assert!(pair_difference(&g1, &g2, 0, 1, StatKind::Pearson).is_err());
        assert!(pair_difference(&g1, &g1, 1, 1, StatKind::Pearson).is_err());
        assert!(build_sparse_differential::<f64>(&g1, &g1, &[(0, 1)], 0.0, StatKind::Pearson).is_err());
        assert!(build_sparse_differential::<f64>(&g1, &g1, &[(1, 0)], 1.0, StatKind::Pearson).is_err());
    }

    #[test]
    fn full_mask_reproduces_dense_difference() {
        let x1 = random_matrix(12, 15, 3);
        let x2 = random_matrix(10, 15, 4);
        let g1 = prepare_group(&x1, StatKind::Pearson);
        let g2 = prepare_group(&x2, StatKind::Pearson);
        let pairs = sample_pairs(15, 1.0, 0).unwrap();
        let d: SparseDifferential<f64> = build_sparse_differential(&g1, &g2, &pairs, 1.0, StatKind::Pearson).unwrap();
        for i in 0..15 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..15 {
                if i == j {
                    continue;
                }
                let want = textbook_corr(x1.column(i), x1.column(j)) - textbook_corr(x2.column(i), x2.column(j));
                assert!((d.get(i, j) - want).abs() < 1e-12);
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
    }

    #[test]
    fn identical_groups_give_zero_matrix() {
        let x = random_matrix(8, 20, 5);
        let g = prepare_group(&x, StatKind::Spearman);
        let pairs = sample_pairs(20, 0.5, 1).unwrap();
        let d: SparseDifferential<f64> = build_sparse_differential(&g, &g, &pairs, 0.5, StatKind::Spearman).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn evaluation_order_does_not_matter() {
        let x1 = random_matrix(7, 30, 6);
        let x2 = random_matrix(7, 30, 7);
        let g1 = prepare_group(&x1, StatKind::Pearson);
        let g2 = prepare_group(&x2, StatKind::Pearson);
        let pairs = sample_pairs(30, 0.4, 2).unwrap();
        let mut shuffled = pairs.clone();
        shuffled.reverse();
        shuffled.swap(0, 7);
        let a: SparseDifferential<f64> = build_sparse_differential(&g1, &g2, &pairs, 0.4, StatKind::Pearson).unwrap();
        let b: SparseDifferential<f64> = build_sparse_differential(&g1, &g2, &shuffled, 0.4, StatKind::Pearson).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rescaled_values_are_bounded() {
        let x1 = random_matrix(6, 25, 8);
        let x2 = random_matrix(6, 25, 9);
        let g1 = prepare_group(&x1, StatKind::Spearman);
        let g2 = prepare_group(&x2, StatKind::Spearman);
        let rho = 0.3;
        let pairs = sample_pairs(25, rho, 3).unwrap();
        let d: SparseDifferential<f64> = build_sparse_differential(&g1, &g2, &pairs, rho, StatKind::Spearman).unwrap();
        assert!(d.values().iter().all(|v| v.abs() <= 2.0 / rho + 1e-12));
    }
}
