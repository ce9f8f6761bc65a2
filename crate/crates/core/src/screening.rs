//! Spectral scores and compressed spectral screening.
//!
//! A variable's score is the row norm of `U |Lambda|^{1/2}` built from the
//! leading eigenpairs of the (possibly subsampled) differential matrix.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::correlation::{build_sparse_differential, prepare_group, StatKind};
use crate::eigen::{top_k_eigen_with, EigenOptions, SpectralResult};
use crate::error::{param_err, Result, ScreenError};
use crate::matrix::ExpressionMatrix;
use crate::sampler::sample_pairs;
use crate::scalar::Scalar;
use crate::sparse::SparseDifferential;

/// How eigenvalues weight the eigenvector rows in the score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenWeighting {
    /// `|lambda_k|`: both signs carry differential signal.
    #[default]
    Absolute,
    /// `max(lambda_k, 0)`: negative eigenvalues are dropped.
    PositivePart,
}

/// Per-variable screening scores with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector<T> {
    pub scores: Vec<T>,
    pub k_used: usize,
    pub rho_used: f64,
    pub stat_kind: StatKind,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl<T: Scalar> ScoreVector<T> {
    pub fn from_spectrum(spec: &SpectralResult<T>, weighting: EigenWeighting, rho: f64, stat_kind: StatKind) -> Self {
        Self {
            scores: spectral_scores(spec, weighting),
            k_used: spec.k(),
            rho_used: rho,
            stat_kind,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Indices of the `top` largest scores (ties by index), best first.
    pub fn top_indices(&self, top: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .partial_cmp(&self.scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(top);
        order
    }

    /// `variable_name,score,selected` rows.
    pub fn write_csv<W: Write>(&self, mut w: W, names: &[String], selected: Option<&[bool]>) -> Result<()> {
        if names.len() != self.scores.len() {
            return Err(ScreenError::Dimension(format!(
                "{} names for {} scores",
                names.len(),
                self.scores.len()
            )));
        }
        writeln!(w, "variable_name,score,selected")?;
        for (i, (name, s)) in names.iter().zip(&self.scores).enumerate() {
            let sel = selected.map_or(false, |f| f[i]);
            writeln!(w, "{name},{:.12e},{sel}", s.as_f64())?;
        }
        Ok(())
    }

    pub fn metadata_json(&self, seed: u64) -> serde_json::Value {
        serde_json::json!({
            "k": self.k_used,
            "rho": self.rho_used,
            "seed": seed,
            "stat_kind": self.stat_kind,
            "scalar": T::NAME,
            "warnings": self.warnings,
        })
    }
}

/// `s_i = sqrt(sum_k w(lambda_k) U_ik^2)`.
pub fn spectral_scores<T: Scalar>(spec: &SpectralResult<T>, weighting: EigenWeighting) -> Vec<T> {
    let weights: Vec<T> = spec
        .eigenvalues
        .iter()
        .map(|&l| match weighting {
            EigenWeighting::Absolute => l.abs(),
            EigenWeighting::PositivePart => l.max(T::zero()),
        })
        .collect();
    (0..spec.p)
        .map(|i| {
            weights
                .iter()
                .enumerate()
                .map(|(k, &w)| {
                    let u = spec.component(i, k);
                    w * u * u
                })
                .sum::<T>()
                .sqrt()
        })
        .collect()
}

/// `flag_i = s_i > delta_i`.
pub fn threshold_select<T: Scalar>(scores: &ScoreVector<T>, delta: &[T]) -> Result<Vec<bool>> {
    if delta.len() != scores.len() {
        return param_err(format!(
            "{} thresholds for {} scores",
            delta.len(),
            scores.len()
        ));
    }
    if delta.iter().any(|d| d.is_nan() || *d < T::zero()) {
        return param_err("thresholds must be non-negative");
    }
    Ok(scores.scores.iter().zip(delta).map(|(s, d)| s > d).collect())
}

/// Lower bound `2(n1 + n2)/(p + 1)`: enough sampled entries to cover the
/// raw data's degrees of freedom.
pub fn rho_information_bound(n1: usize, n2: usize, p: usize) -> f64 {
    2.0 * (n1 + n2) as f64 / (p as f64 + 1.0)
}

/// Lower bound `2 log(p)/p`: every row sampled with high probability.
pub fn rho_connectivity_bound(p: usize) -> f64 {
    2.0 * (p as f64).ln() / p as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CssConfig {
    pub rho: f64,
    pub k: usize,
    pub stat_kind: StatKind,
    pub seed: u64,
    pub eigen_tol: f64,
    pub weighting: EigenWeighting,
}

impl CssConfig {
    pub fn new(rho: f64, k: usize, stat_kind: StatKind, seed: u64) -> Self {
        Self {
            rho,
            k,
            stat_kind,
            seed,
            eigen_tol: 1e-8,
            weighting: EigenWeighting::Absolute,
        }
    }
}

/// Everything one screening pass produced.
#[derive(Debug, Clone)]
pub struct CssRun<T> {
    pub scores: ScoreVector<T>,
    pub spectrum: SpectralResult<T>,
    pub differential: SparseDifferential<T>,
}

pub(crate) fn check_inputs<T: Scalar>(x1: &ExpressionMatrix<T>, x2: &ExpressionMatrix<T>) -> Result<()> {
    if x1.n_variables() != x2.n_variables() {
        return Err(ScreenError::Dimension(format!(
            "groups have {} and {} variables",
            x1.n_variables(),
            x2.n_variables()
        )));
    }
    if let Some((a, b)) = x1
        .variable_names()
        .iter()
        .zip(x2.variable_names())
        .find(|(a, b)| a != b)
    {
        return Err(ScreenError::Dimension(format!(
            "variable names differ: `{a}` vs `{b}`"
        )));
    }
    Ok(())
}

pub(crate) fn rho_warning(n1: usize, n2: usize, p: usize, rho: f64) -> Option<String> {
    let bound = rho_information_bound(n1, n2, p);
    (rho < bound).then(|| {
        format!("rho = {rho} is below the rule-of-thumb lower bound 2(n1+n2)/(p+1) = {bound:.4}; screening may be unreliable")
    })
}

/// Compressed spectral screening, returning the intermediate objects.
pub fn css_run<T: Scalar>(x1: &ExpressionMatrix<T>, x2: &ExpressionMatrix<T>, cfg: &CssConfig) -> Result<CssRun<T>> {
    check_inputs(x1, x2)?;
    let p = x1.n_variables();
    if cfg.k < 1 || cfg.k > p {
        return param_err(format!("k must lie in 1..={p}, got {}", cfg.k));
    }
    let pairs = sample_pairs(p, cfg.rho, cfg.seed)?;
    let g1 = prepare_group(x1, cfg.stat_kind);
    let g2 = prepare_group(x2, cfg.stat_kind);
    let differential = build_sparse_differential::<T>(&g1, &g2, &pairs, cfg.rho, cfg.stat_kind)?;
    drop(pairs);
    let spectrum = top_k_eigen_with(&differential, cfg.k, &EigenOptions::with_tol(cfg.eigen_tol, cfg.seed))?;
    let mut scores = ScoreVector::from_spectrum(&spectrum, cfg.weighting, cfg.rho, cfg.stat_kind);
    if let Some(w) = rho_warning(x1.n_samples(), x2.n_samples(), p, cfg.rho) {
        log::warn!("{w}");
        scores.warnings.push(w);
    }
    Ok(CssRun {
        scores,
        spectrum,
        differential,
    })
}

/// Compressed spectral screening: sample pairs at rate `rho`, build the
/// rescaled sparse differential matrix, and score from its top `k` eigenpairs.
pub fn css<T: Scalar>(x1: &ExpressionMatrix<T>, x2: &ExpressionMatrix<T>, cfg: &CssConfig) -> Result<ScoreVector<T>> {
    css_run(x1, x2, cfg).map(|r| r.scores)
}
