//! Ensemble orchestration and empirical estimators: degree histograms,
//! replica ensembles, the empirical-vs-exact comparison report, tail-slope
//! fitting, and the early-vertex / maximum-degree diagnostics.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::edge_step::{EdgeStepSpec, VertexExpectation};
use crate::process::{self, GraphState, VertexId};
use crate::theory::{concentration_halfwidth, ExpectationTable, LimitDistribution};
use crate::{Error, Result};

/// Degrees at or below this bound are counted in a flat array; the rare
/// heavier degrees go to a sorted map.
const DENSE_LIMIT: u64 = 1024;

/// Exact degree counts `N_t(d)` of one graph at one time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeHistogram {
    t: u64,
    vertex_count: u64,
    dense: Vec<u64>,
    sparse: BTreeMap<u64, u64>,
    max_degree: u64,
    first_vertex_degree: u64,
}

impl DegreeHistogram {
    /// Builds the histogram from an explicit degree sequence (vertex 0
    /// first). The sequence must carry total degree `2t`.
    pub fn from_degrees(t: u64, degrees: &[u64]) -> Self {
        assert!(!degrees.is_empty(), "a graph has at least one vertex");
        debug_assert_eq!(degrees.iter().sum::<u64>(), 2 * t);
        let max_degree = degrees.iter().copied().max().unwrap();
        let mut dense = vec![0u64; (max_degree.min(DENSE_LIMIT) + 1) as usize];
        let mut sparse = BTreeMap::new();
        for &d in degrees {
            if d <= DENSE_LIMIT {
                dense[d as usize] += 1;
            } else {
                *sparse.entry(d).or_insert(0) += 1;
            }
        }
        DegreeHistogram {
            t,
            vertex_count: degrees.len() as u64,
            dense,
            sparse,
            max_degree,
            first_vertex_degree: degrees[0],
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn vertex_count(&self) -> u64 {
        self.vertex_count
    }

    pub fn max_degree(&self) -> u64 {
        self.max_degree
    }

    /// Degree of the initial vertex (id 0), the natural maximum-degree
    /// candidate.
    pub fn first_vertex_degree(&self) -> u64 {
        self.first_vertex_degree
    }

    /// `N_t(d)`; zero for unrealized degrees.
    pub fn count(&self, d: u64) -> u64 {
        if d <= DENSE_LIMIT {
            self.dense.get(d as usize).copied().unwrap_or(0)
        } else {
            self.sparse.get(&d).copied().unwrap_or(0)
        }
    }

    /// `N_t(<= d)`.
    pub fn count_at_most(&self, d: u64) -> u64 {
        let dense: u64 = self
            .dense
            .iter()
            .take((d.min(DENSE_LIMIT) + 1) as usize)
            .sum();
        let sparse: u64 = self.sparse.range(..=d).map(|(_, &c)| c).sum();
        dense + sparse
    }

    /// Realized `(d, N_t(d))` pairs, ascending in `d`.
    pub fn realized(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.dense
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(d, &c)| (d as u64, c))
            .chain(self.sparse.iter().map(|(&d, &c)| (d, c)))
    }

    /// `P_hat_t(d)`: the fraction of vertices with degree exactly `d`.
    pub fn empirical_distribution(&self, d: u64) -> f64 {
        self.count(d) as f64 / self.vertex_count as f64
    }

    /// CSV rows `d,count` ascending in `d` (realized degrees only).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "d,count")?;
        for (d, c) in self.realized() {
            writeln!(w, "{d},{c}")?;
        }
        Ok(())
    }
}

/// Snapshot of one graph state for histogram purposes.
pub fn snapshot_histogram<I: VertexId>(state: &GraphState<I>) -> DegreeHistogram {
    DegreeHistogram::from_degrees(state.t(), state.degrees())
}

/// Free-function form of [`DegreeHistogram::empirical_distribution`].
pub fn empirical_distribution(hist: &DegreeHistogram, d: u64) -> f64 {
    hist.empirical_distribution(d)
}

/// Free-function form of [`DegreeHistogram::count_at_most`].
pub fn count_at_most(hist: &DegreeHistogram, d: u64) -> u64 {
    hist.count_at_most(d)
}

/// One checkpoint of one replica: the histogram, plus each vertex's
/// `(birth step, degree)` when retention was requested.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSnapshot {
    pub histogram: DegreeHistogram,
    pub birth_degrees: Option<Vec<(u64, u64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaRecord {
    pub seed: u64,
    /// Parallel to the ensemble's checkpoint list.
    pub snapshots: Vec<CheckpointSnapshot>,
}

/// Independent replicas of one configuration, snapshotted at shared
/// checkpoint times.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaEnsemble {
    spec: EdgeStepSpec,
    delta: f64,
    base_seed: u64,
    checkpoints: Vec<u64>,
    records: Vec<ReplicaRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct EnsembleOptions {
    /// Retain per-vertex (birth step, degree) pairs at every checkpoint;
    /// off by default because it multiplies snapshot memory.
    pub retain_birth_degrees: bool,
    /// Cap on worker threads; `None` uses the global thread pool.
    pub threads: Option<usize>,
}

/// Runs `replicas` independent simulations in parallel and snapshots each at
/// every checkpoint. Replica `i` uses the seed derived from `(base_seed, i)`,
/// so results are independent of scheduling and thread count.
pub fn run_ensemble(
    spec: EdgeStepSpec,
    delta: f64,
    checkpoints: &[u64],
    replicas: usize,
    base_seed: u64,
) -> Result<ReplicaEnsemble> {
    run_ensemble_with(
        spec,
        delta,
        checkpoints,
        replicas,
        base_seed,
        &EnsembleOptions::default(),
    )
}

/// [`run_ensemble`] with explicit options.
pub fn run_ensemble_with(
    spec: EdgeStepSpec,
    delta: f64,
    checkpoints: &[u64],
    replicas: usize,
    base_seed: u64,
    options: &EnsembleOptions,
) -> Result<ReplicaEnsemble> {
    if replicas < 1 {
        return Err(Error::Domain("replicas must be >= 1".into()));
    }
    if checkpoints.is_empty() {
        return Err(Error::Domain("at least one checkpoint is required".into()));
    }
    let t_max = *checkpoints.last().unwrap();
    let records = if t_max <= u32::MAX as u64 {
        run_replicas::<u32>(spec, delta, checkpoints, replicas, base_seed, options)?
    } else {
        run_replicas::<u64>(spec, delta, checkpoints, replicas, base_seed, options)?
    };
    Ok(ReplicaEnsemble {
        spec,
        delta,
        base_seed,
        checkpoints: checkpoints.to_vec(),
        records,
    })
}

fn run_replicas<I: VertexId>(
    spec: EdgeStepSpec,
    delta: f64,
    checkpoints: &[u64],
    replicas: usize,
    base_seed: u64,
    options: &EnsembleOptions,
) -> Result<Vec<ReplicaRecord>> {
    let run_one = |index: usize| -> Result<ReplicaRecord> {
        let wrap = |e: Error| Error::Replica {
            index,
            message: e.to_string(),
        };
        let seed = process::derive_replica_seed(base_seed, index as u64);
        let mut state: GraphState<I> = process::new_initial(spec, delta, seed).map_err(wrap)?;
        let mut snapshots = Vec::with_capacity(checkpoints.len());
        state
            .run_with_checkpoints(checkpoints, |s| {
                let birth_degrees = options.retain_birth_degrees.then(|| {
                    s.birth_times()
                        .iter()
                        .zip(s.degrees())
                        .map(|(&b, &d)| (b, d))
                        .collect()
                });
                snapshots.push(CheckpointSnapshot {
                    histogram: snapshot_histogram(s),
                    birth_degrees,
                });
            })
            .map_err(wrap)?;
        Ok(ReplicaRecord { seed, snapshots })
    };

    match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(|| (0..replicas).into_par_iter().map(run_one).collect()),
        None => (0..replicas).into_par_iter().map(run_one).collect(),
    }
}

impl ReplicaEnsemble {
    pub fn spec(&self) -> EdgeStepSpec {
        self.spec
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn checkpoints(&self) -> &[u64] {
        &self.checkpoints
    }

    pub fn replica_count(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[ReplicaRecord] {
        &self.records
    }

    fn checkpoint_index(&self, t: u64) -> Result<usize> {
        self.checkpoints
            .iter()
            .position(|&c| c == t)
            .ok_or(Error::MissingCheckpoint(t))
    }

    /// Histograms of every replica at checkpoint time `t`.
    pub fn histograms_at(&self, t: u64) -> Result<impl Iterator<Item = &DegreeHistogram>> {
        let idx = self.checkpoint_index(t)?;
        Ok(self.records.iter().map(move |r| &r.snapshots[idx].histogram))
    }
}

/// One `(t, d)` cell of the comparison. Count-scale statistics drive the
/// z-score against the exact expectation; fraction-scale statistics are
/// compared against the oracle ratio within the concentration halfwidth.
/// Band fields are absent when `gamma >= 1` (no limit distribution there).
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonCell {
    pub t: u64,
    pub d: u64,
    pub emp_mean: f64,
    pub emp_se: f64,
    pub count_mean: f64,
    pub count_se: f64,
    pub oracle_count: f64,
    pub oracle: f64,
    pub limit_p: Option<f64>,
    pub halfwidth: Option<f64>,
    pub band_pass: Option<bool>,
    pub z_score: f64,
}

/// Empirical-vs-exact comparison across all ensemble checkpoints for
/// degrees `1..=d_report`.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub spec: String,
    pub delta: f64,
    pub replicas: usize,
    pub a: f64,
    pub alpha: f64,
    pub d_report: u64,
    /// True when `gamma >= 1` forced the band columns to stay empty.
    pub bands_omitted: bool,
    pub cells: Vec<ComparisonCell>,
}

/// Compares ensemble statistics to the exact expectation table. Every
/// ensemble checkpoint must be present in the table, which must describe the
/// same edge-step function. `A` sets the concentration halfwidth and `alpha`
/// is recorded for downstream error-scale reporting.
pub fn compare_to_theory(
    ensemble: &ReplicaEnsemble,
    table: &ExpectationTable,
    a: f64,
    alpha: f64,
    d_report: u64,
) -> Result<ComparisonReport> {
    if table.spec() != ensemble.spec() {
        return Err(Error::Domain(format!(
            "table describes `{}` but the ensemble used `{}`",
            table.spec(),
            ensemble.spec()
        )));
    }
    if d_report < 1 || d_report > table.d_max() as u64 {
        return Err(Error::Domain(format!(
            "d_report {d_report} outside the table's range 1..={}",
            table.d_max()
        )));
    }
    let gamma = ensemble.spec().gamma();
    let bands = gamma < 1.0;
    let limit = if bands {
        Some(LimitDistribution::new(gamma)?)
    } else {
        None
    };
    let expectation = VertexExpectation::new(ensemble.spec());
    let replicas = ensemble.replica_count();

    let mut cells = Vec::new();
    for &t in ensemble.checkpoints() {
        table.f_at(t)?; // surfaces MissingCheckpoint before any work
        for d in 1..=d_report {
            let fractions: Vec<f64> = ensemble
                .histograms_at(t)?
                .map(|h| h.empirical_distribution(d))
                .collect();
            let counts: Vec<f64> = ensemble
                .histograms_at(t)?
                .map(|h| h.count(d) as f64)
                .collect();
            let (emp_mean, emp_se) = mean_and_se(&fractions);
            let (count_mean, count_se) = mean_and_se(&counts);
            let oracle_count = table.expected_count(t, d)?;
            let oracle = table.ratio(t, d)?;
            let z_score = if count_se > 0.0 {
                (count_mean - oracle_count) / count_se
            } else if count_mean == oracle_count {
                0.0
            } else {
                f64::INFINITY * (count_mean - oracle_count).signum()
            };
            let (limit_p, halfwidth, band_pass) = match limit {
                Some(dist) if t >= 2 => {
                    let (hw, _, _) = concentration_halfwidth(&expectation, t, d, a)?;
                    (
                        Some(dist.p(d)),
                        Some(hw),
                        Some((emp_mean - oracle).abs() <= hw),
                    )
                }
                Some(dist) => (Some(dist.p(d)), None, None),
                None => (None, None, None),
            };
            cells.push(ComparisonCell {
                t,
                d,
                emp_mean,
                emp_se,
                count_mean,
                count_se,
                oracle_count,
                oracle,
                limit_p,
                halfwidth,
                band_pass,
                z_score,
            });
        }
    }
    Ok(ComparisonReport {
        spec: ensemble.spec().to_kv(),
        delta: ensemble.delta(),
        replicas,
        a,
        alpha,
        d_report,
        bands_omitted: !bands,
        cells,
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl ComparisonReport {
    /// CSV rows `t,d,emp_mean,emp_se,oracle,limit_p,halfwidth,band_pass,z_score`;
    /// band columns are empty when omitted.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,d,emp_mean,emp_se,oracle,limit_p,halfwidth,band_pass,z_score")?;
        for c in &self.cells {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
            let pass = c
                .band_pass
                .map(|b| b.to_string())
                .unwrap_or_default();
            writeln!(
                w,
                "{},{},{:?},{:?},{:?},{},{},{},{:?}",
                c.t,
                c.d,
                c.emp_mean,
                c.emp_se,
                c.oracle,
                opt(c.limit_p),
                opt(c.halfwidth),
                pass,
                c.z_score
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("CSV output is UTF-8")
    }

    /// One JSON record per cell, in CSV row order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for c in &self.cells {
            serde_json::to_writer(&mut w, c)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Least-squares slope of `log value` against `log d` over `d` in
/// `[d_min, d_max]`, with its standard error. Non-positive values are
/// excluded; fewer than 5 usable points is an error.
pub fn fit_tail_exponent(
    values: &[(u64, f64)],
    d_min: u64,
    d_max: u64,
) -> Result<(f64, f64)> {
    let points: Vec<(f64, f64)> = values
        .iter()
        .filter(|&&(d, v)| d >= d_min && d <= d_max && v > 0.0)
        .map(|&(d, v)| ((d as f64).ln(), v.ln()))
        .collect();
    let n = points.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "tail fit needs >= 5 positive points in [{d_min}, {d_max}], got {n}"
        )));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

/// Among vertices born at step `<= t^(1 - delta_exp)`, the fraction whose
/// degree at time `t` is at most `d`, averaged over replicas. Requires an
/// ensemble built with birth-degree retention.
pub fn early_vertex_small_degree_rate(
    ensemble: &ReplicaEnsemble,
    t: u64,
    delta_exp: f64,
    d: u64,
) -> Result<f64> {
    if !(delta_exp > 0.0 && delta_exp < 1.0) {
        return Err(Error::Domain(format!(
            "delta_exp must lie in (0, 1), got {delta_exp}"
        )));
    }
    let idx = ensemble.checkpoint_index(t)?;
    let cutoff = (t as f64).powf(1.0 - delta_exp);
    let mut total = 0.0;
    for record in ensemble.records() {
        let pairs = record.snapshots[idx].birth_degrees.as_deref().ok_or_else(|| {
            Error::Domain("ensemble was built without birth-degree retention".into())
        })?;
        let mut early = 0u64;
        let mut small = 0u64;
        for &(birth, degree) in pairs {
            if birth as f64 <= cutoff {
                early += 1;
                if degree <= d {
                    small += 1;
                }
            }
        }
        // The initial vertex is born at step 1 <= cutoff, so early >= 1.
        total += small as f64 / early as f64;
    }
    Ok(total / ensemble.replica_count() as f64)
}

/// Per-checkpoint means of the maximum degree and the first vertex's degree,
/// with the first degree normalized by `t` and by `t f(t)`.
#[derive(Debug, Clone, Serialize)]
pub struct MaxDegreePoint {
    pub t: u64,
    pub max_degree_mean: f64,
    pub first_vertex_degree_mean: f64,
    pub first_over_t: f64,
    pub first_over_t_f: f64,
}

pub fn max_degree_trace(ensemble: &ReplicaEnsemble) -> Vec<MaxDegreePoint> {
    let replicas = ensemble.replica_count() as f64;
    ensemble
        .checkpoints()
        .iter()
        .enumerate()
        .map(|(idx, &t)| {
            let mut max_sum = 0.0;
            let mut first_sum = 0.0;
            for record in ensemble.records() {
                let h = &record.snapshots[idx].histogram;
                max_sum += h.max_degree() as f64;
                first_sum += h.first_vertex_degree() as f64;
            }
            let first_mean = first_sum / replicas;
            MaxDegreePoint {
                t,
                max_degree_mean: max_sum / replicas,
                first_vertex_degree_mean: first_mean,
                first_over_t: first_mean / t as f64,
                first_over_t_f: first_mean / (t as f64 * ensemble.spec().evaluate(t)),
            }
        })
        .collect()
}
