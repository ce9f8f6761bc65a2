//! Spiked covariance simulations, ROC/AUC evaluation and the benchmark grid.

use std::io::Write;
use std::time::Instant;

use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::StatKind;
use crate::error::{param_err, Result};
use crate::matrix::ExpressionMatrix;
use crate::rng::{derive_seed, stream, stream_rng};
use crate::scalar::Scalar;
use crate::screening::{css, CssConfig, ScoreVector};
use crate::tuning::{default_k_upper, tune_rank, TuneConfig};

/// Parameters of the two-spike model `Sigma_g = I + v_g v_g^T`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpikedConfig {
    pub p: usize,
    pub n1: usize,
    pub n2: usize,
    /// Differential variables: `v1` lives on the first `m/2`, `v2` on the next `m/2`.
    pub m: usize,
    pub spike_mean: f64,
    /// Standard deviation of the nonzero spike entries. Set to `0.2f64.sqrt()`
    /// for the variance reading of `N(1, 0.2)`.
    pub spike_sd: f64,
}

impl SpikedConfig {
    pub fn new(p: usize, n1: usize, n2: usize) -> Self {
        Self {
            p,
            n1,
            n2,
            m: 100,
            spike_mean: 1.0,
            spike_sd: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedInstance {
    pub p: usize,
    pub m: usize,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// Variables whose correlations differ between the groups.
    pub truth: Vec<bool>,
    pub seed: u64,
}

fn sample_group<T: Scalar, R: rand::Rng>(n: usize, v: &[f64], rng: &mut R) -> Vec<T> {
    let p = v.len();
    let mut values = vec![T::zero(); n * p];
    let support: Vec<usize> = (0..p).filter(|&j| v[j] != 0.0).collect();
    for r in 0..n {
        let g: f64 = StandardNormal.sample(rng);
        for j in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            values[j * n + r] = T::of_f64(z);
        }
        for &j in &support {
            values[j * n + r] += T::of_f64(g * v[j]);
        }
    }
    values
}

/// Draws an instance and both sample matrices. Each sample is `z + g v`
/// with `z ~ N(0, I)` and scalar `g ~ N(0, 1)`, which has covariance
/// `I + v v^T` without forming it.
pub fn generate_spiked_with<T: Scalar>(
    cfg: &SpikedConfig,
    seed: u64,
) -> Result<(SpikedInstance, ExpressionMatrix<T>, ExpressionMatrix<T>)> {
    if cfg.m < 2 || cfg.m > cfg.p {
        return param_err(format!("need 2 <= m <= p, got m={} p={}", cfg.m, cfg.p));
    }
    if cfg.n1 < 3 || cfg.n2 < 3 {
        return param_err("each group needs at least 3 samples");
    }
    if !(cfg.spike_sd >= 0.0) {
        return param_err("spike standard deviation must be non-negative");
    }
    let mut rng = stream_rng(seed, stream::SIMULATION);
    let half = cfg.m / 2;
    let spike = Normal::new(cfg.spike_mean, cfg.spike_sd).expect("checked sd");
    let mut v1 = vec![0.0; cfg.p];
    let mut v2 = vec![0.0; cfg.p];
    for x in v1.iter_mut().take(half) {
        *x = spike.sample(&mut rng);
    }
    for x in v2.iter_mut().skip(half).take(cfg.m - half) {
        *x = spike.sample(&mut rng);
    }
    let truth = (0..cfg.p).map(|j| j < cfg.m).collect();
    let names: Vec<String> = (1..=cfg.p).map(|j| format!("V{j}")).collect();
    let x1 = ExpressionMatrix::from_columns(cfg.n1, cfg.p, sample_group(cfg.n1, &v1, &mut rng), Some(names.clone()))?
        .with_label("group1");
    let x2 = ExpressionMatrix::from_columns(cfg.n2, cfg.p, sample_group(cfg.n2, &v2, &mut rng), Some(names))?
        .with_label("group2");
    let instance = SpikedInstance {
        p: cfg.p,
        m: cfg.m,
        v1,
        v2,
        truth,
        seed,
    };
    Ok((instance, x1, x2))
}

/// Default two-spike model: 100 differential variables, spike entries with mean 1 and sd 0.2.
pub fn generate_spiked<T: Scalar>(
    p: usize,
    n1: usize,
    n2: usize,
    seed: u64,
) -> Result<(SpikedInstance, ExpressionMatrix<T>, ExpressionMatrix<T>)> {
    if p < 100 {
        return param_err(format!("the default spiked model needs p >= 100, got {p}"));
    }
    generate_spiked_with(&SpikedConfig::new(p, n1, n2), seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(sensitivity, specificity)` from the strictest to the loosest threshold.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Rank-based AUC, `P(diff > null) + P(tie)/2`, and the ROC points from
/// sweeping every distinct score.
pub fn roc_auc<T: Scalar>(scores: &[T], truth: &[bool]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return param_err(format!("{} scores for {} truth flags", scores.len(), truth.len()));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return param_err("AUC needs at least one differential and one null variable");
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut points = vec![(0.0, 1.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut pairs_won = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let (mut gp, mut gn) = (0usize, 0usize);
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            if truth[order[end]] {
                gp += 1;
            } else {
                gn += 1;
            }
            end += 1;
        }
        // positives in this tie group beat every negative seen below it
        pairs_won += gp as f64 * (n_neg - fp - gn) as f64 + 0.5 * gp as f64 * gn as f64;
        tp += gp;
        fp += gn;
        points.push((tp as f64 / n_pos as f64, 1.0 - fp as f64 / n_neg as f64));
        start = end;
    }
    Ok(RocCurve {
        points,
        auc: pairs_won / (n_pos as f64 * n_neg as f64),
    })
}

/// `(sensitivity, specificity)` of a hard selection.
pub fn selection_rates(selected: &[bool], truth: &[bool]) -> (f64, f64) {
    let n_pos = truth.iter().filter(|&&t| t).count().max(1);
    let n_neg = truth.iter().filter(|&&t| !t).count().max(1);
    let tp = selected.iter().zip(truth).filter(|(&s, &t)| s && t).count();
    let tn = selected.iter().zip(truth).filter(|(&s, &t)| !s && !t).count();
    (tp as f64 / n_pos as f64, tn as f64 / n_neg as f64)
}

/// Grid definition; every combination of the list-valued fields is a cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub rho: Vec<f64>,
    pub stat: Vec<StatKind>,
    pub replications: usize,
    pub seed: u64,
    pub tau: f64,
    pub k_l: usize,
    /// Rank used when holdout tuning is infeasible (`(1 + tau) rho > 1`).
    pub k_fixed: usize,
    pub eigen_tol: f64,
    pub m: usize,
    pub spike_sd: f64,
    /// Run replications on the thread pool (timings then overlap).
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: vec![100],
            p: vec![2000],
            rho: vec![0.05, 0.1, 0.2, 1.0],
            stat: vec![StatKind::Pearson, StatKind::Spearman],
            replications: 20,
            seed: 1,
            tau: 0.1,
            k_l: 2,
            k_fixed: 2,
            eigen_tol: 1e-8,
            m: 100,
            spike_sd: 0.2,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub stat: StatKind,
    pub replication: usize,
    pub seed: u64,
    pub auc: f64,
    pub seconds: f64,
    pub k_hat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub stat: StatKind,
    pub replications: usize,
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResults {
    pub rows: Vec<BenchRow>,
    pub cells: Vec<BenchCell>,
}

pub const BENCH_CSV_HEADER: &str = "n,p,rho,stat,replication,seed,auc,seconds,k_hat";

impl BenchResults {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{BENCH_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{:.6},{:.4},{}",
                r.n, r.p, r.rho, r.stat, r.replication, r.seed, r.auc, r.seconds, r.k_hat
            )?;
        }
        Ok(())
    }
}

/// Screening as run in the benchmark: holdout-tuned rank when the sampling
/// budget allows a validation set, otherwise a fixed rank. Returns the
/// scores and the rank used.
pub fn screen_for_benchmark(
    x1: &ExpressionMatrix<f64>,
    x2: &ExpressionMatrix<f64>,
    rho: f64,
    stat: StatKind,
    seed: u64,
    cfg: &BenchConfig,
) -> Result<(ScoreVector<f64>, usize)> {
    let p = x1.n_variables();
    let k_u = default_k_upper(rho, x1.n_samples(), x2.n_samples(), p, cfg.k_l);
    let tunable = (1.0 + cfg.tau) * rho <= 1.0 && cfg.tau > 0.0 && (rho * (x1.n_samples() + x2.n_samples()) as f64).floor() as usize >= cfg.k_l;
    if tunable {
        let mut tc = TuneConfig::new(rho, stat, seed);
        tc.tau = cfg.tau;
        tc.k_l = cfg.k_l;
        tc.k_u = Some(k_u);
        tc.eigen_tol = cfg.eigen_tol;
        let out = tune_rank(x1, x2, &tc)?;
        let k = out.tuning.k_hat;
        Ok((out.scores, k))
    } else {
        let mut cc = CssConfig::new(rho, cfg.k_fixed, stat, seed);
        cc.eigen_tol = cfg.eigen_tol;
        Ok((css(x1, x2, &cc)?, cfg.k_fixed))
    }
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchResults> {
    if cfg.replications == 0 {
        return param_err("replications must be positive");
    }
    let mut jobs = Vec::new();
    for &n in &cfg.n {
        for &p in &cfg.p {
            for &rho in &cfg.rho {
                for &stat in &cfg.stat {
                    for r in 0..cfg.replications {
                        jobs.push((n, p, rho, stat, r));
                    }
                }
            }
        }
    }
    let run = |&(n, p, rho, stat, r): &(usize, usize, f64, StatKind, usize)| -> Result<BenchRow> {
        // data depend on (n, p, replication) only, so cells compare methods on the same draws
        let data_seed = derive_seed(cfg.seed, ((n as u64) << 40) ^ ((p as u64) << 8) ^ r as u64);
        let spiked = SpikedConfig {
            m: cfg.m,
            spike_sd: cfg.spike_sd,
            ..SpikedConfig::new(p, n, n)
        };
        let (inst, x1, x2) = generate_spiked_with::<f64>(&spiked, data_seed)?;
        let start = Instant::now();
        let (scores, k_hat) = screen_for_benchmark(&x1, &x2, rho, stat, data_seed, cfg)?;
        let seconds = start.elapsed().as_secs_f64();
        let auc = roc_auc(&scores.scores, &inst.truth)?.auc;
        log::info!("bench n={n} p={p} rho={rho} stat={stat} rep={r}: auc={auc:.4} k={k_hat} {seconds:.2}s");
        Ok(BenchRow {
            n,
            p,
            rho,
            stat,
            replication: r,
            seed: data_seed,
            auc,
            seconds,
            k_hat,
        })
    };
    let rows: Vec<BenchRow> = if cfg.parallel {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };

    let mut cells: Vec<BenchCell> = Vec::new();
    for chunk in rows.chunks(cfg.replications) {
        let k = chunk.len() as f64;
        let mean_auc = chunk.iter().map(|r| r.auc).sum::<f64>() / k;
        let var = chunk.iter().map(|r| (r.auc - mean_auc).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
        cells.push(BenchCell {
            n: chunk[0].n,
            p: chunk[0].p,
            rho: chunk[0].rho,
            stat: chunk[0].stat,
            replications: chunk.len(),
            mean_auc,
            sd_auc: var.sqrt(),
            mean_seconds: chunk.iter().map(|r| r.seconds).sum::<f64>() / k,
        });
    }
    Ok(BenchResults { rows, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        let t = [true, true, false, false];
        assert_eq!(roc_auc(&[1.0, 1.0, 0.0, 0.0], &t).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[0.3; 4], &t).unwrap().auc, 0.5);
        assert_eq!(roc_auc(&[3.0, 2.0, 1.0, 0.0], &t).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[3.0, 2.0, 1.0, 0.0], &[true, false, true, false]).unwrap().auc, 0.75);
        assert!(roc_auc(&[1.0, 2.0], &[true, true]).is_err());
        assert!(roc_auc(&[1.0, 2.0], &[false, false]).is_err());
    }

    #[test]
    fn roc_points_are_monotone() {
        let scores = [0.9, 0.1, 0.5, 0.5, 0.3, 0.8];
        let truth = [true, false, true, false, false, true];
        let roc = roc_auc(&scores, &truth).unwrap();
        assert_eq!(roc.points.first(), Some(&(0.0, 1.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 0.0)));
        for w in roc.points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn default_truth_is_first_hundred() {
        let (inst, x1, x2) = generate_spiked::<f64>(300, 5, 6, 11).unwrap();
        assert_eq!(inst.truth.iter().filter(|&&t| t).count(), 100);
        assert!(inst.truth[..100].iter().all(|&t| t));
        assert!(inst.v1[..50].iter().all(|&x| x != 0.0) && inst.v1[50..].iter().all(|&x| x == 0.0));
        assert!(inst.v2[..50].iter().all(|&x| x == 0.0));
        assert!(inst.v2[50..100].iter().all(|&x| x != 0.0) && inst.v2[100..].iter().all(|&x| x == 0.0));
        assert_eq!((x1.n_samples(), x2.n_samples()), (5, 6));
        assert!(generate_spiked::<f64>(99, 5, 5, 1).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_spiked::<f64>(120, 4, 4, 3).unwrap();
        let b = generate_spiked::<f64>(120, 4, 4, 3).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn selection_rate_counts() {
        let (sens, spec) = selection_rates(&[true, false, true, false], &[true, true, false, false]);
        assert_eq!((sens, spec), (0.5, 0.5));
    }
}
