//! Seeded trials, threshold sweeps and result files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{diagnose, DiagnosticsReport};
use crate::error::{LsbmError, Result};
use crate::inference::{spectral_recover_with, Recovery, RecoveryOptions};
use crate::model::{critical_t, spectral_condition_check, validate_params, LsbmParams, RawParams};
use crate::rng::{derive_seed, Purpose};
use crate::sampler::{sample_assignment, sample_labels, LabeledGraph};
use crate::stats::{median, wilson_interval, Z95};

pub const CSV_HEADER: &str =
    "t,n,trial,seed,labeled_exact,partition_exact,agreement,margin_over_logn,max_alignment_residual,genie_agreement,wall_clock_ms";

/// Largest `k` for which agreement is maximized over all of `S_k`.
pub const MAX_PERMUTATION_K: usize = 8;

/// Signal strengths to sweep, either absolute or relative to `t_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TGrid {
    Values(Vec<f64>),
    Multipliers(Vec<f64>),
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    /// Template; `t` and `n` are replaced per cell.
    pub params: RawParams,
    pub t_grid: TGrid,
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default = "one")]
    pub parallelism: usize,
    /// When false, `wall_clock_ms` is written as 0 so reruns are byte-identical.
    #[serde(default = "yes")]
    pub record_wall_clock: bool,
    #[serde(default = "yes")]
    pub diagnostics: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One `(t, n)` combination with validated parameters.
#[derive(Clone, Debug)]
pub struct Cell {
    pub index: usize,
    pub t: f64,
    pub multiplier: Option<f64>,
    pub params: LsbmParams,
}

#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub critical_t: Option<f64>,
    pub cells: Vec<Cell>,
}

pub fn resolve(config: &ExperimentConfig) -> Result<ResolvedConfig> {
    if config.trials == 0 {
        return Err(LsbmError::BadShape("trials must be at least 1".into()));
    }
    if config.n_list.is_empty() {
        return Err(LsbmError::BadShape("nList is empty".into()));
    }
    let (grid, multipliers) = match &config.t_grid {
        TGrid::Values(v) => (v.clone(), false),
        TGrid::Multipliers(m) => (m.clone(), true),
    };
    if grid.is_empty() {
        return Err(LsbmError::BadShape("tGrid is empty".into()));
    }
    let template = validate_params(config.params.clone())?;
    let t_c = if multipliers { Some(critical_t(&template)?) } else { None };
    let mut cells = Vec::new();
    for &n in &config.n_list {
        for &g in &grid {
            let t = t_c.map_or(g, |tc| g * tc);
            let params = validate_params(RawParams { t, n, ..config.params.clone() })?;
            cells.push(Cell {
                index: cells.len(),
                t,
                multiplier: multipliers.then_some(g),
                params,
            });
        }
    }
    Ok(ResolvedConfig { critical_t: t_c, cells })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Agreement {
    pub labeled_exact: bool,
    pub partition_exact: bool,
    pub agreement: f64,
    /// Set when `k` was too large for exhaustive permutation search.
    pub greedy: bool,
}

fn confusion(sigma_hat: &[usize], sigma_star: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if sigma_hat.len() != sigma_star.len() {
        return Err(LsbmError::DimensionMismatch(format!(
            "labelings of length {} and {}",
            sigma_hat.len(),
            sigma_star.len()
        )));
    }
    let mut table = vec![vec![0usize; k]; k];
    for (&a, &b) in sigma_hat.iter().zip(sigma_star) {
        if a >= k || b >= k {
            return Err(LsbmError::IndexOutOfRange {
                what: "community",
                index: a.max(b),
                bound: k,
            });
        }
        table[a][b] += 1;
    }
    Ok(table)
}

/// Agreement under the best relabeling `rho` in `S_k`.
pub fn agreement_metrics(sigma_hat: &[usize], sigma_star: &[usize], k: usize) -> Result<Agreement> {
    if k > MAX_PERMUTATION_K {
        return Err(LsbmError::KTooLarge(k));
    }
    let table = confusion(sigma_hat, sigma_star, k)?;
    let n = sigma_hat.len();
    let identity: usize = (0..k).map(|i| table[i][i]).sum();
    let best = (0..k)
        .permutations(k)
        .map(|rho| (0..k).map(|a| table[a][rho[a]]).sum::<usize>())
        .max()
        .unwrap_or(0);
    Ok(Agreement {
        labeled_exact: identity == n,
        partition_exact: best == n,
        agreement: if n == 0 { 1.0 } else { best as f64 / n as f64 },
        greedy: false,
    })
}

/// Greedy matching of the largest confusion-table cells; a lower bound on the optimum.
pub fn agreement_metrics_greedy(sigma_hat: &[usize], sigma_star: &[usize], k: usize) -> Result<Agreement> {
    let table = confusion(sigma_hat, sigma_star, k)?;
    let n = sigma_hat.len();
    let mut cells: Vec<(usize, usize, usize)> = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).map(|(a, b)| (table[a][b], a, b)).collect();
    cells.sort_by(|x, y| y.0.cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let (mut used_a, mut used_b) = (vec![false; k], vec![false; k]);
    let mut matched = 0;
    for (count, a, b) in cells {
        if !used_a[a] && !used_b[b] {
            used_a[a] = true;
            used_b[b] = true;
            matched += count;
        }
    }
    let identity: usize = (0..k).map(|i| table[i][i]).sum();
    Ok(Agreement {
        labeled_exact: identity == n,
        partition_exact: matched == n,
        agreement: if n == 0 { 1.0 } else { matched as f64 / n as f64 },
        greedy: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub t: f64,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub labeled_exact: bool,
    pub partition_exact: bool,
    pub agreement: f64,
    pub margin_over_logn: f64,
    pub max_alignment_residual: f64,
    pub genie_agreement: f64,
    pub wall_clock_ms: u64,
    pub tied_vertices: usize,
    pub posterior_ties: usize,
    pub greedy_matching: bool,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.n,
            self.trial,
            self.seed,
            self.labeled_exact,
            self.partition_exact,
            self.agreement,
            self.margin_over_logn,
            self.max_alignment_residual,
            self.genie_agreement,
            self.wall_clock_ms
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrialOptions {
    pub diagnostics: bool,
    pub record_wall_clock: bool,
    pub recovery: RecoveryOptions,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            diagnostics: true,
            record_wall_clock: true,
            recovery: RecoveryOptions::default(),
        }
    }
}

/// Seed of trial `trial` at size `n`; independent of `t`, so every `t` in a
/// sweep sees the same community draws.
pub fn trial_seed(master_seed: u64, n: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(master_seed, Purpose::Trial, n as u64), Purpose::Trial, trial as u64)
}

/// Samples the graph of one trial.
pub fn sample_trial(params: &LsbmParams, seed: u64) -> Result<LabeledGraph> {
    let assignment = sample_assignment(params, derive_seed(seed, Purpose::Assignment, 0));
    sample_labels(&assignment, params, derive_seed(seed, Purpose::Labels, 0))
}

/// Everything produced by one trial.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub graph: LabeledGraph,
    pub recovery: Option<Recovery>,
    pub diagnostics: Option<DiagnosticsReport>,
}

pub fn run_trial_full(params: &LsbmParams, trial: usize, seed: u64, opts: &TrialOptions) -> Result<TrialOutcome> {
    let start = Instant::now();
    let graph = sample_trial(params, seed)?;
    let truth = graph.assignment().sigma();
    let mut record = TrialRecord {
        t: params.t(),
        n: params.n(),
        trial,
        seed,
        labeled_exact: false,
        partition_exact: false,
        agreement: 0.0,
        margin_over_logn: f64::NAN,
        max_alignment_residual: f64::NAN,
        genie_agreement: f64::NAN,
        wall_clock_ms: 0,
        tied_vertices: 0,
        posterior_ties: 0,
        greedy_matching: false,
        error: None,
    };
    let recovery = match spectral_recover_with(graph.labels(), params, &opts.recovery) {
        Ok(r) => Some(r),
        Err(e) => {
            record.error = Some(format!("recovery: {e}"));
            None
        }
    };
    if let Some(r) = &recovery {
        let agreement = match agreement_metrics(r.labels(), truth, params.k()) {
            Err(LsbmError::KTooLarge(_)) => agreement_metrics_greedy(r.labels(), truth, params.k())?,
            other => other?,
        };
        record.labeled_exact = agreement.labeled_exact;
        record.partition_exact = agreement.partition_exact;
        record.agreement = agreement.agreement;
        record.greedy_matching = agreement.greedy;
        record.tied_vertices = r.best.tied_vertices;
        record.posterior_ties = r.posterior_ties;
    }
    let mut diagnostics = None;
    if opts.diagnostics {
        if let Some(r) = &recovery {
            match diagnose(&graph, params, &r.bases, Some(r.labels())) {
                Ok(report) => {
                    record.margin_over_logn = report.margin_over_log_n;
                    record.max_alignment_residual = report.max_alignment_residual();
                    record.genie_agreement = report.genie_agreement_rate;
                    diagnostics = Some(report);
                }
                Err(e) => record.error = Some(format!("diagnostics: {e}")),
            }
        }
    }
    if opts.record_wall_clock {
        record.wall_clock_ms = start.elapsed().as_millis() as u64;
    }
    Ok(TrialOutcome {
        record,
        graph,
        recovery,
        diagnostics,
    })
}

/// One trial of a resolved cell; failures are recorded, never raised.
pub fn run_trial(cell: &Cell, trial: usize, master_seed: u64, opts: &TrialOptions) -> TrialRecord {
    let seed = trial_seed(master_seed, cell.params.n(), trial);
    match run_trial_full(&cell.params, trial, seed, opts) {
        Ok(outcome) => outcome.record,
        Err(e) => TrialRecord {
            t: cell.t,
            n: cell.params.n(),
            trial,
            seed,
            labeled_exact: false,
            partition_exact: false,
            agreement: 0.0,
            margin_over_logn: f64::NAN,
            max_alignment_residual: f64::NAN,
            genie_agreement: f64::NAN,
            wall_clock_ms: 0,
            tied_vertices: 0,
            posterior_ties: 0,
            greedy_matching: false,
            error: Some(e.to_string()),
        },
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CellSummary {
    pub n: usize,
    pub t: f64,
    pub multiplier: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub labeled_exact_rate: f64,
    pub labeled_exact_ci: (f64, f64),
    pub partition_exact_rate: f64,
    pub partition_exact_ci: (f64, f64),
    pub mean_agreement: f64,
    pub margin_positive_rate: f64,
    pub median_max_alignment_residual: f64,
    pub genie_exact_rate: f64,
}

pub fn summarize(cell: &Cell, records: &[&TrialRecord]) -> CellSummary {
    let trials = records.len();
    let count = |f: &dyn Fn(&TrialRecord) -> bool| records.iter().filter(|r| f(r)).count();
    let labeled = count(&|r| r.labeled_exact);
    let partition = count(&|r| r.partition_exact);
    let rate = |c: usize| if trials == 0 { f64::NAN } else { c as f64 / trials as f64 };
    let residuals: Vec<f64> = records.iter().map(|r| r.max_alignment_residual).filter(|x| x.is_finite()).collect();
    CellSummary {
        n: cell.params.n(),
        t: cell.t,
        multiplier: cell.multiplier,
        trials,
        failures: count(&|r| r.error.is_some()),
        labeled_exact_rate: rate(labeled),
        labeled_exact_ci: wilson_interval(labeled, trials, Z95),
        partition_exact_rate: rate(partition),
        partition_exact_ci: wilson_interval(partition, trials, Z95),
        mean_agreement: records.iter().map(|r| r.agreement).sum::<f64>() / trials.max(1) as f64,
        margin_positive_rate: rate(count(&|r| r.margin_over_logn > 0.0)),
        median_max_alignment_residual: median(&residuals),
        genie_exact_rate: rate(count(&|r| r.genie_agreement == 1.0)),
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepSummary {
    pub master_seed: u64,
    pub critical_t: Option<f64>,
    pub spectral_condition: bool,
    pub interrupted: bool,
    pub cells: Vec<CellSummary>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    /// Sorted by `(n, t, trial)`.
    pub records: Vec<TrialRecord>,
    pub summary: SweepSummary,
}

fn canonical_order(a: &TrialRecord, b: &TrialRecord) -> std::cmp::Ordering {
    a.n.cmp(&b.n).then(a.t.total_cmp(&b.t)).then(a.trial.cmp(&b.trial))
}

pub fn write_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

/// Path of the JSON summary written next to the CSV.
pub fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    run_sweep_with(config, &|_| true)
}

/// Runs every `(cell, trial)` job on a pool of `config.parallelism` workers.
///
/// Rows are appended to the CSV and flushed as trials finish; once all jobs
/// are done the file is rewritten in canonical order. `observer` sees each
/// record and may return `false` to stop scheduling further trials.
pub fn run_sweep_with(config: &ExperimentConfig, observer: &(dyn Fn(&TrialRecord) -> bool + Sync)) -> Result<SweepOutcome> {
    let resolved = resolve(config)?;
    let opts = TrialOptions {
        diagnostics: config.diagnostics,
        record_wall_clock: config.record_wall_clock,
        recovery: RecoveryOptions::default(),
    };
    let sink = match &config.output_path {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "{CSV_HEADER}")?;
            w.flush()?;
            Some(Mutex::new(w))
        }
        None => None,
    };
    let stop = AtomicBool::new(false);
    let jobs: Vec<(usize, usize)> = resolved
        .cells
        .iter()
        .flat_map(|c| (0..config.trials).map(move |trial| (c.index, trial)))
        .collect();
    let execute = |&(cell, trial): &(usize, usize)| -> Result<Option<TrialRecord>> {
        if stop.load(Ordering::SeqCst) {
            return Ok(None);
        }
        let record = run_trial(&resolved.cells[cell], trial, config.master_seed, &opts);
        if let Some(sink) = &sink {
            let mut w = sink.lock().expect("result sink poisoned");
            writeln!(w, "{}", record.csv_row())?;
            w.flush()?;
        }
        if !observer(&record) {
            stop.store(true, Ordering::SeqCst);
        }
        Ok(Some(record))
    };
    let results: Vec<Result<Option<TrialRecord>>> = if config.parallelism <= 1 {
        jobs.iter().map(execute).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| LsbmError::BadShape(format!("worker pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(execute).collect())
    };
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        if let Some(record) = r? {
            records.push(record);
        }
    }
    records.sort_by(canonical_order);
    let interrupted = stop.load(Ordering::SeqCst) && records.len() < jobs.len();

    let cells = resolved
        .cells
        .iter()
        .map(|cell| {
            let mine: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.n == cell.params.n() && r.t == cell.t)
                .collect();
            summarize(cell, &mine)
        })
        .collect();
    let template = validate_params(config.params.clone())?;
    let summary = SweepSummary {
        master_seed: config.master_seed,
        critical_t: resolved.critical_t,
        spectral_condition: spectral_condition_check(&template).satisfied,
        interrupted,
        cells,
    };
    if let Some(path) = &config.output_path {
        drop(sink);
        if !interrupted {
            write_csv(path, &records)?;
        }
        std::fs::write(summary_path(path), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(SweepOutcome { records, summary })
}
