//! Command implementations behind the `qubo-bo` binary.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::acquisition::QuboProblem;
use crate::dataset::read_raw_csv;
use crate::driver::{initial_dataset, run_label, RunConfig, RunKind, Runner};
use crate::encoding::{decode, DesignSpace};
use crate::error::{Error, Result};
use crate::report::{build_report, ReportBundle};
use crate::seed::{initial_data_seed, stream_seed, RunKey, Stream};
use crate::solver::{solve, SamplePool, SolverConfig};
use crate::trace::{read_trace, Trace, TraceHeader, TraceWriter};
use crate::config::LoadedConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Exit status for an error returned by one of the commands.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ConfigParse { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    /// Continue existing traces in the output directory.
    pub resume: bool,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub traces: Vec<PathBuf>,
    pub reports: Vec<PathBuf>,
    pub manifest: PathBuf,
    /// Labels of runs that stopped early.
    pub aborted: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    config_path: String,
    config: &'a str,
    master_seed: u64,
    threshold: f64,
    initial_data_seed: u64,
    runs: Vec<ManifestRun>,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct ManifestRun {
    label: String,
    trace: String,
    loops_completed: usize,
    first_loop_seeds: BTreeMap<&'static str, u64>,
    aborted: Option<String>,
}

fn trace_file_name(kind: RunKind, sigma2: Option<f64>) -> String {
    match (kind, sigma2) {
        (RunKind::Bo, Some(s)) => format!("bo_sigma2_{s}.jsonl"),
        _ => "random.jsonl".into(),
    }
}

fn rel(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}

pub fn load_run_config(config: &Path, opts: &RunOptions) -> Result<(LoadedConfig, RunConfig)> {
    let loaded = match LoadedConfig::load(config) {
        Err(Error::File { path, source }) => {
            return Err(Error::ConfigParse {
                field: "<file>".into(),
                message: format!("{}: {source}", path.display()),
            })
        }
        other => other?,
    };
    let mut cfg = loaded.to_run_config()?;
    if let Some(seed) = opts.seed {
        cfg.master_seed = seed;
    }
    if let Some(t) = opts.threshold {
        cfg.threshold = t;
    }
    Ok((loaded, cfg))
}

/// Runs every grid value plus the random baseline, streaming traces to
/// `out/traces/` and writing the report tables and a manifest to `out/`.
pub fn cmd_run(config: &Path, out: &Path, opts: &RunOptions) -> Result<RunArtifacts> {
    let (loaded, cfg) = load_run_config(config, opts)?;
    let trace_dir = out.join("traces");
    std::fs::create_dir_all(&trace_dir).map_err(|e| Error::file(&trace_dir, e))?;

    let plans: Vec<(RunKind, Option<f64>)> = cfg
        .sigma2_grid
        .iter()
        .map(|&s| (RunKind::Bo, Some(s)))
        .chain(std::iter::once((RunKind::Baseline, None)))
        .collect();

    let existing: Vec<Option<Trace>> = plans
        .iter()
        .map(|&(kind, sigma2)| {
            let path = trace_dir.join(trace_file_name(kind, sigma2));
            if opts.resume && path.exists() {
                read_trace(&path).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    // resumed runs keep the initial data they started from
    let initial = match existing.iter().flatten().next() {
        Some(t) => t.header.initial_dataset()?,
        None => initial_dataset(&cfg)?,
    };

    let mut traces = Vec::new();
    let mut runs = Vec::new();
    let mut aborted = Vec::new();
    for ((kind, sigma2), prior) in plans.into_iter().zip(existing) {
        let path = trace_dir.join(trace_file_name(kind, sigma2));
        let header = TraceHeader::for_run(&cfg, kind, sigma2, &initial);
        let (mut writer, mut data, first_loop) = match prior {
            Some(trace) => {
                if trace.header != header {
                    return Err(Error::Schema(format!(
                        "{}: existing trace was produced by a different configuration",
                        path.display()
                    )));
                }
                let data = trace.final_dataset()?;
                let next = trace.records.len() + 1;
                (TraceWriter::append(&path, &trace)?, data, next)
            }
            None => (TraceWriter::create(&path, &header)?, initial.clone(), 1),
        };
        let runner = Runner::new(&cfg, kind, sigma2)?;
        let result = runner.run(&mut data, first_loop, &mut |r| writer.write(r))?;
        let label = run_label(kind, sigma2);
        let key = sigma2.map_or(RunKey::Baseline, |sigma2| RunKey::Bo { sigma2 });
        let first_loop_seeds = match kind {
            RunKind::Bo => BTreeMap::from([
                ("coefficients", stream_seed(cfg.master_seed, key, 1, Stream::Coefficients)),
                ("solver", stream_seed(cfg.master_seed, key, 1, Stream::Solver)),
            ]),
            RunKind::Baseline => BTreeMap::from([(
                "random_batch",
                stream_seed(cfg.master_seed, key, 1, Stream::RandomBatch),
            )]),
        };
        let completed = first_loop - 1 + result.records.len();
        if let Some(e) = &result.aborted {
            aborted.push(label.clone());
            eprintln!("run {label} aborted after {completed} loops: {e}");
        }
        runs.push(ManifestRun {
            label,
            trace: rel(&path, out),
            loops_completed: completed,
            first_loop_seeds,
            aborted: result.aborted.as_ref().map(|e| e.to_string()),
        });
        traces.push(path);
    }

    let reports = report_from(&traces, Some(cfg.threshold))?.write(out)?;
    let manifest_path = out.join("manifest.json");
    let manifest = Manifest {
        schema_version: 1,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_path: config.display().to_string(),
        config: &loaded.raw,
        master_seed: cfg.master_seed,
        threshold: cfg.threshold,
        initial_data_seed: initial_data_seed(cfg.master_seed),
        runs,
        artifacts: traces
            .iter()
            .chain(&reports)
            .map(|p| rel(p, out))
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&manifest_path, text).map_err(|e| Error::file(&manifest_path, e))?;

    Ok(RunArtifacts {
        traces,
        reports,
        manifest: manifest_path,
        aborted,
    })
}

/// Rebuilds the report tables from trace files alone.
pub fn cmd_report(traces: &[PathBuf], out: &Path, threshold: Option<f64>) -> Result<ReportBundle> {
    let bundle = report_from(traces, threshold)?;
    bundle.write(out)?;
    Ok(bundle)
}

fn report_from(traces: &[PathBuf], threshold: Option<f64>) -> Result<ReportBundle> {
    let loaded = traces
        .iter()
        .map(|p| read_trace(p))
        .collect::<Result<Vec<Trace>>>()?;
    let threshold = match (threshold, loaded.first()) {
        (Some(t), _) => t,
        (None, Some(t)) => t.header.threshold,
        (None, None) => return Err(Error::Schema("no traces given".into())),
    };
    build_report(&loaded, threshold)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    ColumnMismatch(String),
    /// `row` repeats the bits of `first` (1-based data rows).
    Duplicate { row: usize, first: usize },
    Infeasible { row: usize, site: String, code: usize },
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Finding::ColumnMismatch(m) => write!(f, "column mismatch: {m}"),
            Finding::Duplicate { row, first } => write!(f, "row {row}: duplicate of row {first}"),
            Finding::Infeasible { row, site, code } => {
                write!(f, "row {row}: infeasible code {code} at site {site}")
            }
        }
    }
}

/// Lists duplicate rows, infeasible rows and column problems.
pub fn cmd_validate_dataset(path: &Path, space: &DesignSpace) -> Result<Vec<Finding>> {
    let raw = match read_raw_csv(path) {
        Ok(raw) => raw,
        Err(Error::Schema(m)) => return Ok(vec![Finding::ColumnMismatch(m)]),
        Err(e) => return Err(e),
    };
    if raw.n_bits != space.total_bits() {
        return Ok(vec![Finding::ColumnMismatch(format!(
            "{} bit columns but the design space has {} bits",
            raw.n_bits,
            space.total_bits()
        ))]);
    }
    let mut findings = Vec::new();
    let mut first_seen = HashMap::new();
    for (i, obs) in raw.rows.iter().enumerate() {
        let row = i + 1;
        if let Some(&first) = first_seen.get(&obs.x) {
            findings.push(Finding::Duplicate { row, first });
        } else {
            first_seen.insert(obs.x.clone(), row);
        }
        let d = decode(space, &obs.x)?;
        for (code, spec) in d.indices.iter().zip(space.sites()) {
            if *code >= spec.cardinality {
                findings.push(Finding::Infeasible {
                    row,
                    site: spec.name.clone(),
                    code: *code,
                });
            }
        }
    }
    Ok(findings)
}

/// Minimizes a QUBO text file and writes the ranked pool as CSV.
pub fn cmd_solve(qubo: &Path, out: &Path, cfg: &SolverConfig) -> Result<SamplePool> {
    let q = QuboProblem::read(qubo)?;
    let pool = solve(&q, cfg)?;
    pool.write_csv(out)?;
    Ok(pool)
}
