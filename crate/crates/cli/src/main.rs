use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use csscreen::io::{load_matrix, write_matrix};
use csscreen::pipeline::{choose_rho, preprocess, stage_one, Preprocessed};
use csscreen::sim::{generate_spiked_with, run_benchmark, BenchConfig, SpikedConfig};
use csscreen::{run_pipeline, stability_select, Expression, RunConfig, StabilityConfig, StatKind};

#[derive(Parser)]
#[command(name = "csscreen", version, about = "Compressed spectral screening for differential co-expression")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "CSSCREEN_THREADS")]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: compressed screening, reduction, stability selection.
    Screen(ScreenArgs),
    /// Tune the rank on held-out pairs and write stage-1 scores.
    Tune(TuneArgs),
    /// Full-data scores with bootstrap stability selection.
    Stability(StabilityArgs),
    /// Draw a two-spike instance.
    Simulate(SimulateArgs),
    /// Run a simulation grid and report AUC and timing.
    Bench(BenchArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Group 1 matrix (samples in rows, header of variable names).
    x1: PathBuf,
    /// Group 2 matrix with the same variables.
    x2: PathBuf,
    /// Field delimiter; inferred from the extension when omitted.
    #[arg(long)]
    delimiter: Option<char>,
    /// Minimum per-group median to keep a variable.
    #[arg(long, default_value_t = 0.25)]
    median_floor: f64,
    /// Keep every variable.
    #[arg(long)]
    no_filter: bool,
    /// Skip the log2(x + 1) transform.
    #[arg(long)]
    no_log: bool,
}

impl InputArgs {
    fn load(&self) -> Result<Preprocessed<f64>> {
        let delim = match self.delimiter {
            Some(c) if c.is_ascii() => Some(c as u8),
            Some(c) => bail!("delimiter must be a single ASCII character, got {c:?}"),
            None => None,
        };
        let x1: Expression = load_matrix(&self.x1, delim)?;
        let x2: Expression = load_matrix(&self.x2, delim)?;
        let floor = (!self.no_filter).then_some(self.median_floor);
        let pre = preprocess(&x1, &x2, floor, !self.no_log)?;
        log::info!(
            "loaded {} + {} samples, {} of {} variables kept",
            pre.x1.n_samples(),
            pre.x2.n_samples(),
            pre.kept.len(),
            x1.n_variables()
        );
        Ok(pre)
    }
}

#[derive(Args)]
struct ScreenArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory.
    #[arg(short, long, default_value = "csscreen_out")]
    out: PathBuf,
    #[arg(long, default_value = "spearman")]
    stat: StatKind,
    /// Pair sampling rate; defaults to the larger lower bound.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    /// Fixed rank; skips tuning.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 2)]
    k_l: usize,
    #[arg(long)]
    k_u: Option<usize>,
    /// Variables carried from stage 1 into stages 2 and 3.
    #[arg(long, default_value_t = 2000)]
    top_n: usize,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    eigen_tol: f64,
    /// Also write the stage-1 sparse matrix in coordinate form.
    #[arg(long)]
    dump_differential: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(short, long, default_value = "csscreen_out")]
    out: PathBuf,
    #[arg(long, default_value = "spearman")]
    stat: StatKind,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long, default_value_t = 2)]
    k_l: usize,
    #[arg(long)]
    k_u: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    eigen_tol: f64,
    #[arg(long)]
    dump_differential: bool,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(short, long, default_value = "csscreen_out")]
    out: PathBuf,
    #[arg(long, default_value = "spearman")]
    stat: StatKind,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    eigen_tol: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(short, long, default_value = "csscreen_sim")]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    p: usize,
    #[arg(long, default_value_t = 100)]
    n1: usize,
    #[arg(long, default_value_t = 100)]
    n2: usize,
    /// Number of differential variables.
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON grid; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-replication results.
    #[arg(short, long, default_value = "bench.csv")]
    out: PathBuf,
    /// Per-cell summary as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn print_rho(choice: &csscreen::pipeline::RhoChoice) {
    println!(
        "rho = {:.6}  (2(n1+n2)/(p+1) = {:.6}, 2 log(p)/p = {:.6})",
        choice.rho, choice.information_bound, choice.connectivity_bound
    );
    for w in &choice.warnings {
        eprintln!("warning: {w}");
    }
}

fn screen(a: &ScreenArgs) -> Result<()> {
    let i = &a.input;
    let delim = i.delimiter.map(|c| c as u8);
    let x1: Expression = load_matrix(&i.x1, delim)?;
    let x2: Expression = load_matrix(&i.x2, delim)?;
    let cfg = RunConfig {
        stat_kind: a.stat,
        rho: a.rho,
        tau: a.tau,
        k: a.k,
        k_l: a.k_l,
        k_u: a.k_u,
        replicates: a.replicates,
        median_floor: (!i.no_filter).then_some(i.median_floor),
        log_transform: !i.no_log,
        top_n: a.top_n,
        seed: a.seed,
        eigen_tol: a.eigen_tol,
        dump_differential: a.dump_differential,
    };
    let report = run_pipeline(&x1, &x2, &cfg, Some(&a.out))?;
    let m = &report.metadata;
    print_rho(&m.rho);
    println!(
        "k = {}  variables: {} input, {} after filtering, {} retained, {} selected",
        m.k_used, m.p_input, m.p_filtered, m.p_reduced, m.selected
    );
    println!("report written to {}", a.out.join("report.csv").display());
    Ok(())
}

fn tune(a: &TuneArgs) -> Result<()> {
    let pre = a.input.load()?;
    let (n1, n2, p) = (pre.x1.n_samples(), pre.x2.n_samples(), pre.x1.n_variables());
    let choice = choose_rho(n1, n2, p, a.tau, a.rho, true)?;
    print_rho(&choice);
    let cfg = RunConfig {
        stat_kind: a.stat,
        tau: a.tau,
        k: None,
        k_l: a.k_l,
        k_u: a.k_u,
        seed: a.seed,
        eigen_tol: a.eigen_tol,
        ..RunConfig::default()
    };
    let s1 = stage_one(&pre.x1, &pre.x2, choice.rho, &cfg)?;
    fs::create_dir_all(&a.out)?;
    let tuning = s1.tuning.as_ref().expect("rank was tuned");
    serde_json::to_writer_pretty(create(&a.out.join("tuning.json"))?, tuning)?;
    s1.scores.write_csv(create(&a.out.join("scores.csv"))?, pre.x1.variable_names(), None)?;
    if a.dump_differential {
        s1.differential.write_coordinate(create(&a.out.join("differential.coo"))?)?;
    }
    println!("k_hat = {}  (searched {}..={})", tuning.k_hat, tuning.k_l, tuning.k_u);
    for (k, loss) in &tuning.losses {
        println!("  K = {k:>3}  loss = {loss:.6e}");
    }
    Ok(())
}

fn stability(a: &StabilityArgs) -> Result<()> {
    let pre = a.input.load()?;
    let mut cfg = StabilityConfig::new(a.k, a.stat, a.seed);
    cfg.rho = a.rho;
    cfg.replicates = a.replicates;
    cfg.eigen_tol = a.eigen_tol;
    let res = stability_select(&pre.x1, &pre.x2, &cfg)?;
    fs::create_dir_all(&a.out)?;
    res.write_csv(create(&a.out.join("stability.csv"))?, pre.x1.variable_names())?;
    serde_json::to_writer_pretty(create(&a.out.join("stability.json"))?, &res.metadata_json())?;
    println!("{} of {} variables selected", res.selected_count(), res.selected.len());
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = SpikedConfig {
        m: a.m,
        ..SpikedConfig::new(a.p, a.n1, a.n2)
    };
    let (inst, x1, x2) = generate_spiked_with::<f64>(&cfg, a.seed)?;
    fs::create_dir_all(&a.out)?;
    write_matrix(&a.out.join("x1.csv"), &x1, None)?;
    write_matrix(&a.out.join("x2.csv"), &x2, None)?;
    let mut w = create(&a.out.join("truth.csv"))?;
    writeln!(w, "variable,differential")?;
    for (name, t) in x1.variable_names().iter().zip(&inst.truth) {
        writeln!(w, "{name},{}", u8::from(*t))?;
    }
    w.flush()?;
    serde_json::to_writer_pretty(create(&a.out.join("instance.json"))?, &inst)?;
    println!("wrote {} x {} and {} x {} to {}", a.n1, a.p, a.n2, a.p, a.out.display());
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let mut cfg: BenchConfig = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid grid in {}", path.display()))?
        }
        None => BenchConfig::default(),
    };
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let res = run_benchmark(&cfg)?;
    res.write_csv(create(&a.out)?)?;
    println!("{:>6} {:>7} {:>6} {:>9} {:>8} {:>8} {:>9}", "n", "p", "rho", "stat", "AUC", "sd", "seconds");
    for c in &res.cells {
        println!(
            "{:>6} {:>7} {:>6} {:>9} {:>8.4} {:>8.4} {:>9.3}",
            c.n, c.p, c.rho, c.stat, c.mean_auc, c.sd_auc, c.mean_seconds
        );
    }
    if let Some(path) = &a.summary {
        serde_json::to_writer_pretty(create(path)?, &res.cells)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match &cli.command {
        Command::Screen(a) => screen(a),
        Command::Tune(a) => tune(a),
        Command::Stability(a) => stability(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
    }
}
