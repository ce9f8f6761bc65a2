//! Bootstrap null thresholds for spectral scores.
//!
//! Both pseudo-groups are resampled from the second group, which gives a
//! reference distribution in which no variable is differential. Each
//! variable is compared against its own bootstrap scores.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::StatKind;
use crate::error::{param_err, Result, ScreenError};
use crate::matrix::ExpressionMatrix;
use crate::rng::{derive_seed, stream, stream_rng};
use crate::scalar::Scalar;
use crate::screening::{css, CssConfig, EigenWeighting, ScoreVector};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityConfig {
    /// Bootstrap replications `B`.
    pub replicates: usize,
    pub k: usize,
    pub rho: f64,
    pub stat_kind: StatKind,
    pub seed: u64,
    pub eigen_tol: f64,
    pub weighting: EigenWeighting,
    /// Rank used for the bootstrap runs; defaults to `k`.
    pub null_k: Option<usize>,
    /// Sampling rate used for the bootstrap runs; defaults to `rho`.
    pub null_rho: Option<f64>,
}

impl StabilityConfig {
    pub fn new(k: usize, stat_kind: StatKind, seed: u64) -> Self {
        Self {
            replicates: 100,
            k,
            rho: 1.0,
            stat_kind,
            seed,
            eigen_tol: 1e-8,
            weighting: EigenWeighting::Absolute,
            null_k: None,
            null_rho: None,
        }
    }

    fn observed_css(&self) -> CssConfig {
        CssConfig {
            rho: self.rho,
            k: self.k,
            stat_kind: self.stat_kind,
            seed: self.seed,
            eigen_tol: self.eigen_tol,
            weighting: self.weighting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult<T> {
    pub observed: ScoreVector<T>,
    /// Fraction of replicates whose score the observed score strictly exceeds.
    pub exceedance: Vec<f64>,
    pub selected: Vec<bool>,
    pub replicates: usize,
    pub seed: u64,
}

impl<T: Scalar> StabilityResult<T> {
    pub fn selected_count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, names: &[String]) -> Result<()> {
        if names.len() != self.selected.len() {
            return Err(ScreenError::Dimension(format!(
                "{} names for {} variables",
                names.len(),
                self.selected.len()
            )));
        }
        writeln!(w, "variable,score,exceedance,selected")?;
        for (i, name) in names.iter().enumerate() {
            writeln!(
                w,
                "{name},{:.12e},{},{}",
                self.observed.scores[i].as_f64(),
                self.exceedance[i],
                self.selected[i]
            )?;
        }
        Ok(())
    }

    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "replicates": self.replicates,
            "seed": self.seed,
            "k": self.observed.k_used,
            "rho": self.observed.rho_used,
            "stat_kind": self.observed.stat_kind,
            "selected": self.selected_count(),
            "warnings": self.observed.warnings,
        })
    }
}

/// `true` when at least 99% of the replicates were strictly exceeded.
#[inline]
pub fn passes_stability_rule(exceed_count: usize, replicates: usize) -> bool {
    100 * exceed_count >= 99 * replicates
}

/// Scores of one bootstrap replicate: `n1` and `n2` rows drawn with
/// replacement from `x2`, screened against each other.
pub fn bootstrap_null_scores<T: Scalar>(
    x2: &ExpressionMatrix<T>,
    n1: usize,
    n2: usize,
    cfg: &StabilityConfig,
    replicate: usize,
) -> Result<ScoreVector<T>> {
    let n = x2.n_samples();
    if n < 2 {
        return param_err("bootstrap needs at least two rows in the reference group");
    }
    let mut rng = stream_rng(cfg.seed, stream::BOOTSTRAP_BASE + replicate as u64);
    let rows1: Vec<usize> = (0..n1).map(|_| rng.random_range(0..n)).collect();
    let rows2: Vec<usize> = (0..n2).map(|_| rng.random_range(0..n)).collect();
    let xt1 = x2.select_rows(&rows1)?;
    let xt2 = x2.select_rows(&rows2)?;
    let css_cfg = CssConfig {
        rho: cfg.null_rho.unwrap_or(cfg.rho),
        k: cfg.null_k.unwrap_or(cfg.k),
        stat_kind: cfg.stat_kind,
        seed: derive_seed(cfg.seed, replicate as u64),
        eigen_tol: cfg.eigen_tol,
        weighting: cfg.weighting,
    };
    let mut scores = css(&xt1, &xt2, &css_cfg)?;
    // the rule-of-thumb warning is about the observed run, not the replicates
    scores.warnings.clear();
    Ok(scores)
}

/// Per-variable exceedance fractions of `observed` over the replicate scores.
pub fn exceedance<T: Scalar>(observed: &[T], nulls: &[Vec<T>]) -> (Vec<f64>, Vec<bool>) {
    let b = nulls.len();
    let mut counts = vec![0usize; observed.len()];
    for null in nulls {
        for ((c, s), n) in counts.iter_mut().zip(observed).zip(null) {
            if s > n {
                *c += 1;
            }
        }
    }
    let fractions = counts.iter().map(|&c| c as f64 / b as f64).collect();
    let selected = counts.iter().map(|&c| passes_stability_rule(c, b)).collect();
    (fractions, selected)
}

pub fn stability_select<T: Scalar>(
    x1: &ExpressionMatrix<T>,
    x2: &ExpressionMatrix<T>,
    cfg: &StabilityConfig,
) -> Result<StabilityResult<T>> {
    if cfg.replicates < 1 {
        return param_err("at least one bootstrap replicate is required");
    }
    let observed = css(x1, x2, &cfg.observed_css())?;
    let (n1, n2) = (x1.n_samples(), x2.n_samples());
    let nulls: Vec<Vec<T>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| bootstrap_null_scores(x2, n1, n2, cfg, b).map(|s| s.scores))
        .collect::<Result<_>>()?;
    let (exceedance, selected) = exceedance(&observed.scores, &nulls);
    Ok(StabilityResult {
        observed,
        exceedance,
        selected,
        replicates: cfg.replicates,
        seed: cfg.seed,
    })
}
