//! Batch experiment runner. Subcommands cover simulation, the exact
//! expectation table, empirical-vs-exact comparison, integral diagnostics,
//! maximum-degree traces, and parameter sweeps. Exit codes: 0 success,
//! 2 configuration error, 3 operational error, 4 statistical-gate failure.

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, ErrorKind, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{parse_tokens, ExperimentConfig, KvMap, SPEC_KEYS};
use edgestep::edge_step::VertexExpectation;
use edgestep::karamata::{diagnostics_grid, DEFAULT_REL_TOL};
use edgestep::stats::{
    compare_to_theory, max_degree_trace, run_ensemble_with, ComparisonReport, EnsembleOptions,
    ReplicaEnsemble,
};
use edgestep::theory::{evolve_expectations, ExpectationTable};

/// How many z-scores may exceed the 4-sigma gate per checkpoint before the
/// comparison is declared failed (a multiple-testing allowance).
const GATE_Z: f64 = 4.0;
const GATE_ALLOWANCE: usize = 1;

#[derive(Parser)]
#[command(
    name = "edgestep",
    version,
    about = "Random-graph growth with edge steps: simulation and exact checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replica ensemble and write per-checkpoint degree histograms.
    Simulate(CommonArgs),
    /// Write the exact expected-degree-count table.
    Expect(CommonArgs),
    /// Compare ensemble statistics against the exact table.
    Compare(CommonArgs),
    /// Tabulate integral diagnostics and error scales on the time grid.
    Karamata(CommonArgs),
    /// Trace maximum and first-vertex degrees across checkpoints.
    Maxdeg(CommonArgs),
    /// Run expect + simulate + compare over a family/gamma grid.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config file in key=value form; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Edge-step family: power_law, inverse_log_power, inverse_log_log,
    /// exp_neg_log_delta, or constant.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Scale constant for the power_law / inverse_log_power families.
    #[arg(long)]
    c: Option<f64>,
    /// Probability for the constant family.
    #[arg(long)]
    p: Option<f64>,
    /// Exponent in (0,1) for the exp_neg_log_delta family.
    #[arg(long)]
    sv_delta: Option<f64>,
    /// Uniform-attachment mixing weight (0 = pure preferential).
    #[arg(long)]
    delta: Option<f64>,
    /// Comma-separated, strictly ascending snapshot times.
    #[arg(long)]
    checkpoints: Option<String>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Largest degree carried by the exact expectation recursion.
    #[arg(long)]
    d_max: Option<usize>,
    /// Largest degree reported by compare.
    #[arg(long)]
    d_report: Option<u64>,
    /// Deviation parameter controlling the concentration band width.
    #[arg(long)]
    a: Option<f64>,
    /// Interior exponent for the error-scale diagnostic.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (fallback: EDGESTEP_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated families to sweep.
    #[arg(long, default_value = "power_law")]
    families: String,
    /// Comma-separated gamma grid (ignored by the constant family).
    #[arg(long, default_value = "0.0,0.5,1.0")]
    gammas: String,
}

struct CliError {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> CliError {
    CliError {
        code,
        message: message.into(),
    }
}

fn operational(e: impl std::fmt::Display) -> CliError {
    fail(3, e.to_string())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => resolve(&args).and_then(|cfg| cmd_simulate(&cfg)),
        Command::Expect(args) => resolve(&args).and_then(|cfg| cmd_expect(&cfg)),
        Command::Compare(args) => resolve(&args).and_then(|cfg| cmd_compare(&cfg)),
        Command::Karamata(args) => resolve(&args).and_then(|cfg| cmd_karamata(&cfg)),
        Command::Maxdeg(args) => resolve(&args).and_then(|cfg| cmd_maxdeg(&cfg)),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code as i32);
    }
}

/// Merges config file, command-line flags, and the EDGESTEP_THREADS
/// fallback into one key map (later sources win).
fn merged_map(args: &CommonArgs) -> Result<KvMap, CliError> {
    let mut map = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| operational(format!("reading {}: {e}", path.display())))?;
            parse_tokens(&text).map_err(|m| fail(2, m))?
        }
        None => KvMap::new(),
    };
    let mut set = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            map.insert(key.to_string(), v);
        }
    };
    let float = |v: Option<f64>| v.map(|x| format!("{x:?}"));
    set("family", args.family.clone());
    set("gamma", float(args.gamma));
    set("c", float(args.c));
    set("p", float(args.p));
    set("sv_delta", float(args.sv_delta));
    set("delta", float(args.delta));
    set("checkpoints", args.checkpoints.clone());
    set("replicas", args.replicas.map(|v| v.to_string()));
    set("seed", args.seed.map(|v| v.to_string()));
    set("d_max", args.d_max.map(|v| v.to_string()));
    set("d_report", args.d_report.map(|v| v.to_string()));
    set("a", float(args.a));
    set("alpha", float(args.alpha));
    set(
        "out",
        args.out.as_ref().map(|p| p.display().to_string()),
    );
    set("threads", args.threads.map(|v| v.to_string()));
    if !map.contains_key("threads") {
        if let Ok(raw) = std::env::var("EDGESTEP_THREADS") {
            let n: usize = raw
                .parse()
                .map_err(|_| fail(2, format!("EDGESTEP_THREADS has unusable value `{raw}`")))?;
            map.insert("threads".into(), n.to_string());
        }
    }
    Ok(map)
}

fn resolve(args: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::from_map(&merged_map(args)?).map_err(|m| fail(2, m))
}

/// Exclusive claim on an output directory for the duration of a command;
/// the marker file is removed on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| operational(format!("creating {}: {e}", dir.display())))?;
        let path = dir.join(".edgestep.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(fail(
                3,
                format!(
                    "output directory {} is locked by another run (remove {} if stale)",
                    dir.display(),
                    path.display()
                ),
            )),
            Err(e) => Err(operational(format!("locking {}: {e}", dir.display()))),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn create_output(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    let file =
        File::create(&path).map_err(|e| operational(format!("writing {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn persist_config(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mut w = create_output(&cfg.out, "config.resolved")?;
    w.write_all(cfg.to_text().as_bytes()).map_err(operational)?;
    w.flush().map_err(operational)
}

fn ensemble_options(cfg: &ExperimentConfig) -> EnsembleOptions {
    EnsembleOptions {
        retain_birth_degrees: false,
        threads: cfg.threads,
    }
}

fn run_configured_ensemble(cfg: &ExperimentConfig) -> Result<ReplicaEnsemble, CliError> {
    run_ensemble_with(
        cfg.spec,
        cfg.delta,
        &cfg.checkpoints,
        cfg.replicas,
        cfg.seed,
        &ensemble_options(cfg),
    )
    .map_err(operational)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

#[derive(Serialize)]
struct CheckpointSummary {
    t: u64,
    replicas: usize,
    vertex_count_mean: f64,
    expected_vertex_count: f64,
    max_degree_mean: f64,
    first_vertex_degree_mean: f64,
}

fn cmd_simulate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let _lock = DirLock::acquire(&cfg.out)?;
    persist_config(cfg)?;
    let ensemble = run_configured_ensemble(cfg)?;
    let expectation = VertexExpectation::new(cfg.spec);

    let mut summary = create_output(&cfg.out, "summary.jsonl")?;
    for &t in ensemble.checkpoints() {
        let mut pooled: BTreeMap<u64, u64> = BTreeMap::new();
        let mut vertices = 0.0;
        let mut max_degree = 0.0;
        let mut first_degree = 0.0;
        for hist in ensemble.histograms_at(t).map_err(operational)? {
            for (d, count) in hist.realized() {
                *pooled.entry(d).or_insert(0) += count;
            }
            vertices += hist.vertex_count() as f64;
            max_degree += hist.max_degree() as f64;
            first_degree += hist.first_vertex_degree() as f64;
        }
        let mut w = create_output(&cfg.out, &format!("histogram_t{t}.csv"))?;
        writeln!(w, "d,count").map_err(operational)?;
        for (d, count) in pooled {
            writeln!(w, "{d},{count}").map_err(operational)?;
        }
        w.flush().map_err(operational)?;

        let n = cfg.replicas as f64;
        let record = CheckpointSummary {
            t,
            replicas: cfg.replicas,
            vertex_count_mean: vertices / n,
            expected_vertex_count: expectation.at(t),
            max_degree_mean: max_degree / n,
            first_vertex_degree_mean: first_degree / n,
        };
        serde_json::to_writer(&mut summary, &record).map_err(operational)?;
        writeln!(summary).map_err(operational)?;
    }
    summary.flush().map_err(operational)?;
    println!(
        "simulate: {} replicas, {} checkpoints -> {}",
        cfg.replicas,
        cfg.checkpoints.len(),
        cfg.out.display()
    );
    Ok(())
}

/// Largest relative gap between F(t) and the accounted degree-count mass;
/// must be negligible for the table to be trustworthy.
fn mass_identity_residual(table: &ExpectationTable) -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    for &t in table.checkpoints() {
        let f = table.f_at(t).map_err(operational)?;
        let mut retained = 0.0;
        for d in 1..=table.d_max() as u64 {
            retained += table.expected_count(t, d).map_err(operational)?;
        }
        let truncated = table.truncated_mass_at(t).map_err(operational)?;
        worst = worst.max(((retained + truncated) - f).abs() / f);
    }
    Ok(worst)
}

fn cmd_expect(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let _lock = DirLock::acquire(&cfg.out)?;
    persist_config(cfg)?;
    let table =
        evolve_expectations(cfg.spec, &cfg.checkpoints, cfg.d_max).map_err(operational)?;
    let residual = mass_identity_residual(&table)?;
    if residual > 1e-9 {
        return Err(fail(
            3,
            format!("mass identity self-check failed: relative residual {residual:?}"),
        ));
    }
    println!("mass identity self-check: PASS (max relative residual {residual:?})");
    if table.truncation_warning() {
        eprintln!(
            "warning: degree truncation at d_max = {} loses a non-negligible \
             share of the expected counts; raise d_max",
            cfg.d_max
        );
    }
    let mut w = create_output(&cfg.out, "expectation_table.csv")?;
    table.write_csv(&mut w).map_err(operational)?;
    w.flush().map_err(operational)?;
    println!(
        "expect: d <= {} at {} checkpoints -> {}",
        cfg.d_max,
        cfg.checkpoints.len(),
        cfg.out.display()
    );
    Ok(())
}

fn load_or_build_table(cfg: &ExperimentConfig) -> Result<ExpectationTable, CliError> {
    let path = cfg.out.join("expectation_table.csv");
    if path.exists() {
        let text = fs::read_to_string(&path)
            .map_err(|e| operational(format!("reading {}: {e}", path.display())))?;
        ExpectationTable::read_csv(&text, cfg.spec)
            .map_err(|e| fail(3, format!("expectation table {}: {e}", path.display())))
    } else {
        evolve_expectations(cfg.spec, &cfg.checkpoints, cfg.d_max).map_err(operational)
    }
}

fn cmd_compare(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let _lock = DirLock::acquire(&cfg.out)?;
    persist_config(cfg)?;
    let table = load_or_build_table(cfg)?;
    let ensemble = run_configured_ensemble(cfg)?;
    let report = compare_to_theory(&ensemble, &table, cfg.a, cfg.alpha, cfg.d_report)
        .map_err(operational)?;

    let mut w = create_output(&cfg.out, "comparison.csv")?;
    report.write_csv(&mut w).map_err(operational)?;
    w.flush().map_err(operational)?;
    let mut w = create_output(&cfg.out, "comparison.jsonl")?;
    report.write_jsonl(&mut w).map_err(operational)?;
    w.flush().map_err(operational)?;

    let failures = gate_failures(&report);
    for &t in ensemble.checkpoints() {
        let over = report
            .cells
            .iter()
            .filter(|c| c.t == t && c.z_score.abs() > GATE_Z)
            .count();
        let worst = report
            .cells
            .iter()
            .filter(|c| c.t == t)
            .map(|c| c.z_score.abs())
            .fold(0.0f64, f64::max);
        println!(
            "gate t={t}: {over} of {} cells beyond {GATE_Z} sigma (worst |z| = {worst:?})",
            cfg.d_report
        );
    }
    if failures.is_empty() {
        println!("compare: gate PASS -> {}", cfg.out.display());
        Ok(())
    } else {
        let listed: Vec<String> = failures.iter().map(|t| format!("t={t}")).collect();
        Err(fail(
            4,
            format!("oracle-agreement gate failed at {}", listed.join(", ")),
        ))
    }
}

/// Checkpoints with more than the allowed number of beyond-gate cells.
fn gate_failures(report: &ComparisonReport) -> Vec<u64> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for cell in &report.cells {
        if cell.z_score.abs() > GATE_Z {
            *counts.entry(cell.t).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .filter(|&(_, n)| n > GATE_ALLOWANCE)
        .map(|(t, _)| t)
        .collect()
}

fn cmd_karamata(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let _lock = DirLock::acquire(&cfg.out)?;
    persist_config(cfg)?;
    let expectation = VertexExpectation::new(cfg.spec);
    let rows = diagnostics_grid(&expectation, &cfg.checkpoints, cfg.alpha, DEFAULT_REL_TOL)
        .map_err(operational)?;
    if cfg.spec.gamma() >= 1.0 {
        eprintln!(
            "warning: gamma = {:?} >= 1 has no subcritical asymptotics; \
             H, G_bound, F_asym, and err_term are left blank",
            cfg.spec.gamma()
        );
    }
    let mut w = create_output(&cfg.out, "karamata.csv")?;
    writeln!(w, "t,H,G_bound,F_exact,F_asym,err_term").map_err(operational)?;
    for row in &rows {
        writeln!(
            w,
            "{},{},{},{:?},{},{}",
            row.t,
            fmt_opt(row.h),
            fmt_opt(row.g_bound),
            row.f_exact,
            fmt_opt(row.f_asym),
            fmt_opt(row.err_term)
        )
        .map_err(operational)?;
    }
    w.flush().map_err(operational)?;
    println!(
        "karamata: {} grid points -> {}",
        cfg.checkpoints.len(),
        cfg.out.display()
    );
    Ok(())
}

fn cmd_maxdeg(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let _lock = DirLock::acquire(&cfg.out)?;
    persist_config(cfg)?;
    let ensemble = run_configured_ensemble(cfg)?;
    let trace = max_degree_trace(&ensemble);
    let mut w = create_output(&cfg.out, "maxdeg.csv")?;
    writeln!(w, "t,max_degree,first_vertex_degree,first_over_t,first_over_t_f")
        .map_err(operational)?;
    for point in &trace {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?}",
            point.t,
            point.max_degree_mean,
            point.first_vertex_degree_mean,
            point.first_over_t,
            point.first_over_t_f
        )
        .map_err(operational)?;
    }
    w.flush().map_err(operational)?;
    println!(
        "maxdeg: {} checkpoints, {} replicas -> {}",
        cfg.checkpoints.len(),
        cfg.replicas,
        cfg.out.display()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let mut base = merged_map(&args.common)?;
    let parent = PathBuf::from(
        base.get("out")
            .ok_or_else(|| fail(2, "missing required key `out`"))?,
    );
    let constant_p = base.get("p").cloned().unwrap_or_else(|| "0.5".into());
    for key in SPEC_KEYS {
        base.remove(key);
    }
    let families: Vec<String> = args
        .families
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if families.is_empty() {
        return Err(fail(2, "sweep needs at least one family"));
    }
    let mut gammas = Vec::new();
    for piece in args.gammas.split(',') {
        let g: f64 = piece
            .trim()
            .parse()
            .map_err(|_| fail(2, format!("bad gamma `{piece}` in sweep grid")))?;
        gammas.push(g);
    }
    if gammas.is_empty() {
        return Err(fail(2, "sweep needs at least one gamma"));
    }

    let _parent_lock = DirLock::acquire(&parent)?;
    let mut combos: Vec<(String, KvMap)> = Vec::new();
    for family in &families {
        if family == "constant" {
            let mut map = base.clone();
            map.insert("family".into(), family.clone());
            map.insert("p".into(), constant_p.clone());
            combos.push((format!("constant_p{constant_p}"), map));
        } else {
            for &g in &gammas {
                let mut map = base.clone();
                map.insert("family".into(), family.clone());
                map.insert("gamma".into(), format!("{g:?}"));
                combos.push((format!("{family}_gamma{g:?}"), map));
            }
        }
    }

    let mut gate_failures = Vec::new();
    for (name, mut map) in combos {
        let subdir = parent.join(&name);
        map.insert("out".into(), subdir.display().to_string());
        let cfg = ExperimentConfig::from_map(&map).map_err(|m| fail(2, m))?;
        println!("sweep: {name}");
        cmd_expect(&cfg)?;
        cmd_simulate(&cfg)?;
        match cmd_compare(&cfg) {
            Ok(()) => {}
            Err(e) if e.code == 4 => {
                eprintln!("sweep: {name} gate FAIL ({})", e.message);
                gate_failures.push(name);
            }
            Err(e) => return Err(e),
        }
    }
    if gate_failures.is_empty() {
        println!("sweep: all gates passed -> {}", parent.display());
        Ok(())
    } else {
        Err(fail(
            4,
            format!("sweep gate failures: {}", gate_failures.join(", ")),
        ))
    }
}
