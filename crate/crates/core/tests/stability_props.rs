use csscreen::sim::{generate_spiked, selection_rates};
use csscreen::stability::bootstrap_null_scores;
use csscreen::{stability_select, StabilityConfig, StatKind};

#[test]
fn bootstrap_is_reproducible_and_thread_independent() {
    let (_, x1, x2) = generate_spiked::<f64>(120, 20, 20, 2).unwrap();
    let mut cfg = StabilityConfig::new(2, StatKind::Pearson, 9);
    cfg.replicates = 10;
    let a = stability_select(&x1, &x2, &cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| stability_select(&x1, &x2, &cfg).unwrap());
    assert_eq!(a, b);
    let null = bootstrap_null_scores(&x2, 20, 20, &cfg, 4).unwrap();
    assert_eq!(null, bootstrap_null_scores(&x2, 20, 20, &cfg, 4).unwrap());
}

#[test]
fn spiked_instance_is_mostly_recovered() {
    let (inst, x1, x2) = generate_spiked::<f64>(300, 100, 100, 3).unwrap();
    let mut cfg = StabilityConfig::new(2, StatKind::Pearson, 1);
    cfg.replicates = 50;
    let res = stability_select(&x1, &x2, &cfg).unwrap();
    let (sens, spec) = selection_rates(&res.selected, &inst.truth);
    assert!(sens > 0.8 && spec > 0.9, "sensitivity {sens}, specificity {spec}");
    assert!(res.exceedance.iter().all(|&f| (0.0..=1.0).contains(&f)));
}

#[test]
fn too_few_replicates_are_rejected() {
    let (_, x1, x2) = generate_spiked::<f64>(120, 10, 10, 2).unwrap();
    let mut cfg = StabilityConfig::new(2, StatKind::Pearson, 9);
    cfg.replicates = 0;
    assert!(stability_select(&x1, &x2, &cfg).is_err());
}
