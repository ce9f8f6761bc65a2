//! Rank selection by holdout validation on extra sampled pairs.
//!
//! One partial eigendecomposition up to `k_u` serves every candidate rank:
//! the rank-`K` prediction of a held-out entry is a running sum over the
//! leading eigenpairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::correlation::{build_sparse_differential, pair_differences, prepare_group, StatKind};
use crate::eigen::{top_k_eigen_with, EigenOptions, SpectralResult};
use crate::error::{param_err, Result, ScreenError};
use crate::matrix::ExpressionMatrix;
use crate::sampler::{split_train_validation, Pair, PairSample};
use crate::scalar::Scalar;
use crate::screening::{check_inputs, rho_warning, EigenWeighting, ScoreVector};
use crate::sparse::SparseDifferential;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub losses: BTreeMap<usize, f64>,
    pub k_hat: usize,
    pub k_l: usize,
    pub k_u: usize,
    pub train_count: usize,
    pub validation_count: usize,
    /// Held-out pairs skipped because a variable had zero variance.
    pub excluded_degenerate: usize,
    pub seed: u64,
}

/// Rank-`k` reconstruction of entry `(i, j)`: `sum_{t<k} lambda_t U_it U_jt`.
pub fn predict_entry<T: Scalar>(spec: &SpectralResult<T>, i: usize, j: usize, k: usize) -> T {
    (0..k.min(spec.k()))
        .map(|t| spec.eigenvalues[t] * spec.component(i, t) * spec.component(j, t))
        .sum()
}

/// Default upper rank `floor(rho (n1 + n2))`, clamped to `[k_l, min(n1 + n2, p)]`.
pub fn default_k_upper(rho: f64, n1: usize, n2: usize, p: usize, k_l: usize) -> usize {
    let raw = (rho * (n1 + n2) as f64).floor() as usize;
    raw.min(n1 + n2).min(p).max(k_l)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneConfig {
    pub rho: f64,
    pub tau: f64,
    pub k_l: usize,
    /// `None` uses [`default_k_upper`].
    pub k_u: Option<usize>,
    pub stat_kind: StatKind,
    pub seed: u64,
    pub eigen_tol: f64,
    pub weighting: EigenWeighting,
}

impl TuneConfig {
    pub fn new(rho: f64, stat_kind: StatKind, seed: u64) -> Self {
        Self {
            rho,
            tau: 0.1,
            k_l: 2,
            k_u: None,
            stat_kind,
            seed,
            eigen_tol: 1e-8,
            weighting: EigenWeighting::Absolute,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneOutcome<T> {
    pub tuning: TuningResult,
    /// Scores at the selected rank, from the shared decomposition.
    pub scores: ScoreVector<T>,
    /// Decomposition up to `k_u`.
    pub spectrum: SpectralResult<T>,
    pub differential: SparseDifferential<T>,
}

/// Validation losses for every rank in `k_l..=k_u`, given unscaled held-out
/// values. Predictions are accumulated incrementally.
pub fn validation_losses<T: Scalar>(
    spec: &SpectralResult<T>,
    held_out: &[(Pair, f64)],
    k_l: usize,
    k_u: usize,
) -> BTreeMap<usize, f64> {
    let mut losses: BTreeMap<usize, f64> = (k_l..=k_u).map(|k| (k, 0.0)).collect();
    let mut sums = vec![0.0f64; k_u + 1];
    for &((i, j), target) in held_out {
        let (i, j) = (i as usize, j as usize);
        let mut pred = 0.0f64;
        for k in 1..=k_u {
            let t = k - 1;
            pred += (spec.eigenvalues[t] * spec.component(i, t) * spec.component(j, t)).as_f64();
            if k >= k_l {
                let r = target - pred;
                sums[k] += r * r;
            }
        }
    }
    for (k, l) in losses.iter_mut() {
        *l = sums[*k];
    }
    losses
}

/// Smallest `K` attaining the minimum loss.
fn argmin(losses: &BTreeMap<usize, f64>) -> usize {
    let mut best = None::<(usize, f64)>;
    for (&k, &l) in losses {
        if best.map_or(true, |(_, b)| l < b) {
            best = Some((k, l));
        }
    }
    best.expect("non-empty rank range").0
}

fn check_range(k_l: usize, k_u: usize, p: usize) -> Result<()> {
    if k_l < 2 {
        return param_err(format!("k_l must be at least 2, got {k_l}"));
    }
    if k_u < k_l {
        return param_err(format!("k_u = {k_u} is below k_l = {k_l}"));
    }
    if k_u > p {
        return param_err(format!("k_u = {k_u} exceeds the number of variables {p}"));
    }
    Ok(())
}

/// Tunes the rank on an explicit sample with arbitrary entry values.
///
/// `value(i, j)` returns the unscaled statistic and whether the pair is
/// degenerate. Training entries are divided by `sample.rho`.
pub fn tune_rank_on<T: Scalar>(
    sample: &PairSample,
    value: impl Fn(usize, usize) -> (f64, bool),
    stat_kind: StatKind,
    k_l: usize,
    k_u: usize,
    eigen: &EigenOptions,
) -> Result<(TuningResult, SpectralResult<T>, SparseDifferential<T>)> {
    check_range(k_l, k_u, sample.p)?;
    let inv = 1.0 / sample.rho;
    let train = sample
        .train_pairs
        .iter()
        .map(|&(i, j)| ((i, j), T::of_f64(value(i as usize, j as usize).0 * inv)));
    let differential = SparseDifferential::from_entries(sample.p, sample.rho, stat_kind, train, vec![false; sample.p])?;
    let mut excluded = 0;
    let held_out: Vec<(Pair, f64)> = sample
        .validation_pairs
        .iter()
        .filter_map(|&(i, j)| {
            let (v, degenerate) = value(i as usize, j as usize);
            if degenerate {
                excluded += 1;
                None
            } else {
                Some(((i, j), v))
            }
        })
        .collect();
    finish(sample, differential, held_out, excluded, k_l, k_u, eigen)
}

fn finish<T: Scalar>(
    sample: &PairSample,
    differential: SparseDifferential<T>,
    held_out: Vec<(Pair, f64)>,
    excluded: usize,
    k_l: usize,
    k_u: usize,
    eigen: &EigenOptions,
) -> Result<(TuningResult, SpectralResult<T>, SparseDifferential<T>)> {
    if held_out.is_empty() {
        return Err(ScreenError::EmptyValidation);
    }
    let spectrum = top_k_eigen_with(&differential, k_u, eigen)?;
    let losses = validation_losses(&spectrum, &held_out, k_l, k_u);
    let k_hat = argmin(&losses);
    let tuning = TuningResult {
        losses,
        k_hat,
        k_l,
        k_u,
        train_count: sample.train_pairs.len(),
        validation_count: held_out.len(),
        excluded_degenerate: excluded,
        seed: sample.seed,
    };
    Ok((tuning, spectrum, differential))
}

/// Compressed spectral screening with the rank chosen by holdout validation.
pub fn tune_rank<T: Scalar>(x1: &ExpressionMatrix<T>, x2: &ExpressionMatrix<T>, cfg: &TuneConfig) -> Result<TuneOutcome<T>> {
    check_inputs(x1, x2)?;
    let p = x1.n_variables();
    let (n1, n2) = (x1.n_samples(), x2.n_samples());
    let k_u = match cfg.k_u {
        Some(k) => k,
        None => default_k_upper(cfg.rho, n1, n2, p, cfg.k_l),
    };
    check_range(cfg.k_l, k_u, p)?;
    let sample = split_train_validation(p, cfg.rho, cfg.tau, cfg.seed)?;

    let g1 = prepare_group(x1, cfg.stat_kind);
    let g2 = prepare_group(x2, cfg.stat_kind);
    let differential = build_sparse_differential::<T>(&g1, &g2, &sample.train_pairs, cfg.rho, cfg.stat_kind)?;
    let values = pair_differences(&g1, &g2, &sample.validation_pairs);
    let mut excluded = 0;
    let held_out: Vec<(Pair, f64)> = sample
        .validation_pairs
        .iter()
        .zip(values)
        .filter(|(&(i, j), _)| {
            let bad = differential.is_degenerate_pair(i as usize, j as usize);
            excluded += bad as usize;
            !bad
        })
        .map(|(&pair, v)| (pair, v))
        .collect();

    let eigen = EigenOptions::with_tol(cfg.eigen_tol, cfg.seed);
    let (tuning, spectrum, differential) = finish(&sample, differential, held_out, excluded, cfg.k_l, k_u, &eigen)?;
    let mut scores = ScoreVector::from_spectrum(&spectrum.truncated(tuning.k_hat), cfg.weighting, cfg.rho, cfg.stat_kind);
    if let Some(w) = rho_warning(n1, n2, p, cfg.rho) {
        log::warn!("{w}");
        scores.warnings.push(w);
    }
    Ok(TuneOutcome {
        tuning,
        scores,
        spectrum,
        differential,
    })
}
