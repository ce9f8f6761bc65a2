use std::collections::HashSet;

use csscreen::pipeline::{run_pipeline, RunConfig, VariableStatus};
use csscreen::sim::generate_spiked;
use csscreen::{Expression, StatKind};

fn positive_with_dead_columns(x: &Expression, dead: &[usize]) -> Expression {
    let (n, p) = (x.n_samples(), x.n_variables());
    let mut vals = Vec::with_capacity(n * p);
    for j in 0..p {
        for &v in x.column(j) {
            vals.push(if dead.contains(&j) { 0.1 } else { (v + 6.0).max(0.0) });
        }
    }
    Expression::from_columns(n, p, vals, Some(x.variable_names().to_vec())).unwrap()
}

fn small_run(out: Option<&std::path::Path>) -> csscreen::ScreeningReport {
    let (_, x1, x2) = generate_spiked::<f64>(160, 40, 40, 12).unwrap();
    let dead = [150, 155];
    let x1 = positive_with_dead_columns(&x1, &dead);
    let x2 = positive_with_dead_columns(&x2, &[]);
    let cfg = RunConfig {
        stat_kind: StatKind::Pearson,
        top_n: 120,
        replicates: 20,
        seed: 5,
        dump_differential: true,
        ..RunConfig::default()
    };
    run_pipeline(&x1, &x2, &cfg, out).unwrap()
}

#[test]
fn report_covers_every_variable_once() {
    let dir = tempfile::tempdir().unwrap();
    let report = small_run(Some(dir.path()));
    assert_eq!(report.rows.len(), 160);
    let names: HashSet<_> = report.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names.len(), 160);
    for r in &report.rows {
        match r.status {
            VariableStatus::Filtered => assert!(r.stage1_score.is_none() && r.stage2_score.is_none() && !r.selected),
            VariableStatus::ScreenedOut => assert!(r.stage1_score.is_some() && r.stage2_score.is_none() && !r.selected),
            VariableStatus::Retained => assert!(r.stage1_score.is_some() && r.stage2_score.is_some() && r.exceedance.is_some()),
        }
    }
    assert_eq!(report.rows[150].status, VariableStatus::Filtered);
    assert_eq!(report.rows[155].status, VariableStatus::Filtered);
    let retained = report.rows.iter().filter(|r| r.status == VariableStatus::Retained).count();
    assert_eq!(retained, 120);
    assert_eq!(report.metadata.p_filtered, 158);

    for file in ["report.csv", "metadata.json", "scores_stage1.csv", "tuning.json", "differential.coo"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
    let text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "variable,status,stage1_score,stage2_score,exceedance,selected");
    assert_eq!(text.lines().count(), 161);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert!(meta["k_used"].as_u64().unwrap() >= 2);
    assert!(meta["rho"]["information_bound"].as_f64().unwrap() > 0.0);
}

#[test]
fn repeated_runs_write_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_run(Some(a.path()));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    pool.install(|| small_run(Some(b.path())));
    let ra = std::fs::read(a.path().join("report.csv")).unwrap();
    let rb = std::fs::read(b.path().join("report.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn everything_filtered_is_an_error() {
    let (_, x1, x2) = generate_spiked::<f64>(120, 10, 10, 1).unwrap();
    let cfg = RunConfig {
        median_floor: Some(1e6),
        ..RunConfig::default()
    };
    let err = run_pipeline(&x1, &x2, &cfg, None).unwrap_err();
    assert!(err.to_string().contains("median filter"));
}
