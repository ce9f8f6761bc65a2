//! End-to-end screening: preprocessing, compressed screening with rank
//! tuning, reduction to the top variables, then full screening with
//! bootstrap stability selection on the reduced set.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::correlation::StatKind;
use crate::error::{param_err, Result, ScreenError};
use crate::io::check_same_variables;
use crate::matrix::ExpressionMatrix;
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::screening::{css_run, rho_connectivity_bound, rho_information_bound, CssConfig, ScoreVector};
use crate::sparse::SparseDifferential;
use crate::stability::{stability_select, StabilityConfig};
use crate::tuning::{tune_rank, TuneConfig, TuningResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub stat_kind: StatKind,
    /// `None` picks the larger of the two lower bounds.
    pub rho: Option<f64>,
    pub tau: f64,
    /// Fixed rank; `None` tunes it on held-out pairs.
    pub k: Option<usize>,
    pub k_l: usize,
    pub k_u: Option<usize>,
    pub replicates: usize,
    /// Drop variables whose median is below this in either group.
    pub median_floor: Option<f64>,
    /// Apply `log2(x + 1)` after filtering.
    pub log_transform: bool,
    pub top_n: usize,
    pub seed: u64,
    pub eigen_tol: f64,
    pub dump_differential: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stat_kind: StatKind::Spearman,
            rho: None,
            tau: 0.1,
            k: None,
            k_l: 2,
            k_u: None,
            replicates: 100,
            median_floor: Some(0.25),
            log_transform: true,
            top_n: 2000,
            seed: 1,
            eigen_tol: 1e-8,
            dump_differential: false,
        }
    }
}

/// The sampling rate actually used plus the bounds it was checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoChoice {
    pub rho: f64,
    pub information_bound: f64,
    pub connectivity_bound: f64,
    pub warnings: Vec<String>,
}

/// Default `rho = max(2(n1+n2)/(p+1), 2 log p / p)`, capped so that the
/// validation superset `(1 + tau) rho` stays a probability when tuning.
pub fn choose_rho(n1: usize, n2: usize, p: usize, tau: f64, requested: Option<f64>, tuning: bool) -> Result<RhoChoice> {
    let information_bound = rho_information_bound(n1, n2, p);
    let connectivity_bound = rho_connectivity_bound(p);
    let mut warnings = Vec::new();
    let cap = if tuning { 1.0 / (1.0 + tau) } else { 1.0 };
    let rho = match requested {
        Some(r) => {
            if !(r > 0.0 && r <= 1.0) {
                return param_err(format!("rho must lie in (0, 1], got {r}"));
            }
            if r < information_bound.max(connectivity_bound) {
                warnings.push(format!(
                    "rho = {r} is below the recommended lower bound {:.4}",
                    information_bound.max(connectivity_bound)
                ));
            }
            r
        }
        None => {
            let want = information_bound.max(connectivity_bound);
            if want > cap {
                warnings.push(format!(
                    "lower bound {want:.4} exceeds the largest usable rate {cap:.4}; using {cap:.4}"
                ));
                cap
            } else {
                want
            }
        }
    };
    Ok(RhoChoice {
        rho,
        information_bound,
        connectivity_bound,
        warnings,
    })
}

fn median(col: &[f64]) -> f64 {
    let mut v = col.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed<T> {
    pub x1: ExpressionMatrix<T>,
    pub x2: ExpressionMatrix<T>,
    /// Indices (into the input variables) that survived filtering.
    pub kept: Vec<usize>,
}

/// Median filter per group followed by an optional `log2(x + 1)` transform.
pub fn preprocess<T: Scalar>(
    x1: &ExpressionMatrix<T>,
    x2: &ExpressionMatrix<T>,
    median_floor: Option<f64>,
    log_transform: bool,
) -> Result<Preprocessed<T>> {
    check_same_variables(x1, x2)?;
    let p = x1.n_variables();
    let kept: Vec<usize> = match median_floor {
        None => (0..p).collect(),
        Some(floor) => (0..p)
            .filter(|&j| {
                [x1, x2].iter().all(|x| {
                    let col: Vec<f64> = x.column(j).iter().map(|v| v.as_f64()).collect();
                    median(&col) >= floor
                })
            })
            .collect(),
    };
    if kept.is_empty() {
        return param_err("every variable was removed by the median filter");
    }
    if kept.len() < 2 {
        return param_err("fewer than two variables survive the median filter");
    }
    let mut y1 = x1.select_columns(&kept)?;
    let mut y2 = x2.select_columns(&kept)?;
    if log_transform {
        for x in [&y1, &y2] {
            if let Some(v) = x.as_column_major().iter().find(|v| v.as_f64() <= -1.0) {
                return param_err(format!("log2(x + 1) needs values above -1, found {v}"));
            }
        }
        let f = |v: T| T::of_f64((v.as_f64() + 1.0).log2());
        y1 = y1.map(f)?;
        y2 = y2.map(f)?;
    }
    Ok(Preprocessed { x1: y1, x2: y2, kept })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableStatus {
    /// Removed by the median filter.
    Filtered,
    /// Not among the `top_n` stage-1 scores.
    ScreenedOut,
    /// Carried into stages 2 and 3.
    Retained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub status: VariableStatus,
    pub stage1_score: Option<f64>,
    pub stage2_score: Option<f64>,
    pub exceedance: Option<f64>,
    pub selected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess: f64,
    pub stage1: f64,
    pub stage2_3: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub n1: usize,
    pub n2: usize,
    pub p_input: usize,
    pub p_filtered: usize,
    pub p_reduced: usize,
    pub rho: RhoChoice,
    pub k_hat: Option<usize>,
    pub k_used: usize,
    pub seed: u64,
    pub stage3_seed: u64,
    pub selected: usize,
    pub degenerate_variables: Vec<String>,
    pub warnings: Vec<String>,
    pub timings: StageTimings,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub rows: Vec<ReportRow>,
    pub metadata: RunMetadata,
    pub tuning: Option<TuningResult>,
}

pub const REPORT_HEADER: &str = "variable,status,stage1_score,stage2_score,exceedance,selected";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.12e}"))
}

impl ScreeningReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{REPORT_HEADER}")?;
        for r in &self.rows {
            let status = match r.status {
                VariableStatus::Filtered => "filtered",
                VariableStatus::ScreenedOut => "screened_out",
                VariableStatus::Retained => "retained",
            };
            writeln!(
                w,
                "{},{status},{},{},{},{}",
                r.name,
                fmt_opt(r.stage1_score),
                fmt_opt(r.stage2_score),
                r.exceedance.map_or_else(String::new, |x| format!("{x}")),
                r.selected
            )?;
        }
        Ok(())
    }

    pub fn selected_names(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| r.selected).map(|r| r.name.as_str()).collect()
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|source| ScreenError::File {
        path: path.display().to_string(),
        source,
    })?;
    Ok(BufWriter::new(file))
}

/// Output of the first stage, also used by the `tune` subcommand.
pub struct StageOne<T> {
    pub scores: ScoreVector<T>,
    pub tuning: Option<TuningResult>,
    pub differential: SparseDifferential<T>,
    pub k: usize,
}

/// Compressed screening at `rho`; tunes the rank unless `cfg.k` is set.
pub fn stage_one<T: Scalar>(x1: &ExpressionMatrix<T>, x2: &ExpressionMatrix<T>, rho: f64, cfg: &RunConfig) -> Result<StageOne<T>> {
    match cfg.k {
        Some(k) => {
            let mut c = CssConfig::new(rho, k, cfg.stat_kind, cfg.seed);
            c.eigen_tol = cfg.eigen_tol;
            let run = css_run(x1, x2, &c)?;
            Ok(StageOne {
                scores: run.scores,
                tuning: None,
                differential: run.differential,
                k,
            })
        }
        None => {
            let mut t = TuneConfig::new(rho, cfg.stat_kind, cfg.seed);
            t.tau = cfg.tau;
            t.k_l = cfg.k_l;
            t.k_u = cfg.k_u;
            t.eigen_tol = cfg.eigen_tol;
            let out = tune_rank(x1, x2, &t)?;
            let k = out.tuning.k_hat;
            Ok(StageOne {
                scores: out.scores,
                tuning: Some(out.tuning),
                differential: out.differential,
                k,
            })
        }
    }
}

/// Runs every stage. When `out_dir` is given, stage-1 artifacts are written
/// as soon as they exist, then `report.csv` and `metadata.json` at the end.
pub fn run_pipeline<T: Scalar>(
    x1: &ExpressionMatrix<T>,
    x2: &ExpressionMatrix<T>,
    cfg: &RunConfig,
    out_dir: Option<&Path>,
) -> Result<ScreeningReport> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    if cfg.top_n < 2 {
        return param_err("top_n must be at least 2");
    }
    let t0 = Instant::now();
    let pre = preprocess(x1, x2, cfg.median_floor, cfg.log_transform)?;
    let t_pre = t0.elapsed().as_secs_f64();
    let (n1, n2) = (pre.x1.n_samples(), pre.x2.n_samples());
    let p = pre.x1.n_variables();
    let mut warnings = Vec::new();

    let rho = choose_rho(n1, n2, p, cfg.tau, cfg.rho, cfg.k.is_none())?;
    log::info!(
        "rho = {:.5} (bounds: 2(n1+n2)/(p+1) = {:.5}, 2 log p / p = {:.5})",
        rho.rho,
        rho.information_bound,
        rho.connectivity_bound
    );
    warnings.extend(rho.warnings.iter().cloned());

    let t1 = Instant::now();
    let s1 = stage_one(&pre.x1, &pre.x2, rho.rho, cfg)?;
    let t_stage1 = t1.elapsed().as_secs_f64();
    log::info!("stage 1: k = {} in {t_stage1:.2}s", s1.k);
    warnings.extend(s1.scores.warnings.iter().cloned());
    let names = pre.x1.variable_names().to_vec();

    let mut keep = s1.scores.top_indices(cfg.top_n.min(p));
    keep.sort_unstable();
    let mut retained = vec![false; p];
    keep.iter().for_each(|&j| retained[j] = true);

    if let Some(dir) = out_dir {
        s1.scores.write_csv(create(dir, "scores_stage1.csv")?, &names, Some(&retained))?;
        if let Some(t) = &s1.tuning {
            serde_json::to_writer_pretty(create(dir, "tuning.json")?, t)?;
        }
        if cfg.dump_differential {
            s1.differential.write_coordinate(create(dir, "differential.coo")?)?;
        }
    }
    let degenerate: Vec<String> = s1
        .differential
        .degenerate_variables()
        .iter()
        .enumerate()
        .filter_map(|(j, &d)| d.then(|| names[j].clone()))
        .collect();
    drop(s1.differential);

    let t2 = Instant::now();
    let r1 = pre.x1.select_columns(&keep)?;
    let r2 = pre.x2.select_columns(&keep)?;
    let k_used = s1.k.min(keep.len());
    let stage3_seed = derive_seed(cfg.seed, 3);
    let mut sc = StabilityConfig::new(k_used, cfg.stat_kind, stage3_seed);
    sc.replicates = cfg.replicates;
    sc.eigen_tol = cfg.eigen_tol;
    let stab = stability_select(&r1, &r2, &sc)?;
    let t_stage23 = t2.elapsed().as_secs_f64();
    log::info!(
        "stages 2-3: {} of {} variables selected in {t_stage23:.2}s",
        stab.selected_count(),
        keep.len()
    );

    let mut rows: Vec<ReportRow> = x1
        .variable_names()
        .iter()
        .map(|name| ReportRow {
            name: name.clone(),
            status: VariableStatus::Filtered,
            stage1_score: None,
            stage2_score: None,
            exceedance: None,
            selected: false,
        })
        .collect();
    for (local, &orig) in pre.kept.iter().enumerate() {
        let row = &mut rows[orig];
        row.status = VariableStatus::ScreenedOut;
        row.stage1_score = Some(s1.scores.scores[local].as_f64());
    }
    for (r, &local) in keep.iter().enumerate() {
        let row = &mut rows[pre.kept[local]];
        row.status = VariableStatus::Retained;
        row.stage2_score = Some(stab.observed.scores[r].as_f64());
        row.exceedance = Some(stab.exceedance[r]);
        row.selected = stab.selected[r];
    }

    let metadata = RunMetadata {
        n1,
        n2,
        p_input: x1.n_variables(),
        p_filtered: p,
        p_reduced: keep.len(),
        rho,
        k_hat: s1.tuning.as_ref().map(|t| t.k_hat),
        k_used,
        seed: cfg.seed,
        stage3_seed,
        selected: stab.selected_count(),
        degenerate_variables: degenerate,
        warnings,
        timings: StageTimings {
            preprocess: t_pre,
            stage1: t_stage1,
            stage2_3: t_stage23,
        },
        config: cfg.clone(),
    };
    let report = ScreeningReport {
        rows,
        metadata,
        tuning: s1.tuning,
    };
    if let Some(dir) = out_dir {
        let mut w = create(dir, "report.csv")?;
        report.write_csv(&mut w)?;
        w.flush()?;
        serde_json::to_writer_pretty(create(dir, "metadata.json")?, &report.metadata)?;
    }
    Ok(report)
}

/// Loads both inputs and runs [`run_pipeline`].
pub fn run_pipeline_from_files(
    input1: &Path,
    input2: &Path,
    delimiter: Option<u8>,
    cfg: &RunConfig,
    out_dir: Option<PathBuf>,
) -> Result<ScreeningReport> {
    let x1 = crate::io::load_matrix::<f64>(input1, delimiter)?;
    let x2 = crate::io::load_matrix::<f64>(input2, delimiter)?;
    if x1.n_variables() != x2.n_variables() {
        check_same_variables(&x1, &x2)?;
        return Err(ScreenError::Dimension("inputs differ in width".into()));
    }
    run_pipeline(&x1, &x2, cfg, out_dir.as_deref())
}
