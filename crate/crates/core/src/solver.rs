//! QUBO minimization backends, post-solve screening and batch selection.

use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{energy, DenseQubo, QuboProblem};
use crate::dataset::Dataset;
use crate::encoding::{encode, is_feasible, BitVector, DesignSpace};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const MAX_EXHAUSTIVE_VARS: usize = 30;
pub const POOL_SCHEMA: &str = "# schema_version=1 artifact=sample_pool";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Exhaustive,
    SimulatedAnnealing,
    /// Runs `command [args..] <qubo.txt> <pool.csv>`; the program reads the
    /// QUBO text format and writes a sample pool CSV.
    ExternalAdapter {
        command: PathBuf,
        #[serde(default)]
        args: Vec<String>,
    },
}

/// Inverse temperatures swept geometrically from `start` to `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    /// Derived from the problem's coefficient magnitudes: the hottest sweep
    /// accepts the largest possible uphill move with probability 1/2, the
    /// coldest accepts the smallest one with probability 1/100.
    Auto,
    Geometric { start: f64, end: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub backend: Backend,
    pub reads: usize,
    pub sweeps: usize,
    pub beta: BetaSchedule,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: Backend::SimulatedAnnealing,
            reads: 300,
            sweeps: 1000,
            beta: BetaSchedule::Auto,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn exhaustive() -> Self {
        SolverConfig {
            backend: Backend::Exhaustive,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reads == 0 {
            return Err(Error::InvalidSchedule("reads must be at least 1".into()));
        }
        if self.backend == Backend::SimulatedAnnealing && self.sweeps == 0 {
            return Err(Error::InvalidSchedule("sweeps must be at least 1".into()));
        }
        if let BetaSchedule::Geometric { start, end } = self.beta {
            if !(start > 0.0 && end > start && end.is_finite()) {
                return Err(Error::InvalidSchedule(format!(
                    "need 0 < beta_start < beta_end, got {start} and {end}"
                )));
            }
        }
        Ok(())
    }

    /// States kept by the exhaustive backend.
    pub fn pool_cap(&self) -> usize {
        (10 * self.reads).max(3000)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub x: BitVector,
    pub energy: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool {
    /// Ascending by energy, ties broken by the bit string.
    pub entries: Vec<PoolEntry>,
    pub backend: String,
    pub reads: usize,
    pub sweeps: Option<usize>,
    pub beta: Option<(f64, f64)>,
    pub enumerated: bool,
}

impl SamplePool {
    pub fn best(&self) -> Option<&PoolEntry> {
        self.entries.first()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{POOL_SCHEMA} backend={}", self.backend)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bits", "energy", "multiplicity"])?;
        for e in &self.entries {
            w.write_record([
                e.x.to_string(),
                format!("{:?}", e.energy),
                e.multiplicity.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `bits,energy,multiplicity` rows; energies are taken as given.
    pub fn read_csv(path: &Path) -> Result<Vec<PoolEntry>> {
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(file);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["bits", "energy", "multiplicity"] {
            return Err(Error::Schema(format!(
                "{}: header must be bits,energy,multiplicity",
                path.display()
            )));
        }
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let x: BitVector = rec[0].parse()?;
            let energy = rec[1]
                .parse()
                .map_err(|_| Error::Schema(format!("bad energy `{}`", &rec[1])))?;
            let multiplicity = rec[2]
                .parse()
                .map_err(|_| Error::Schema(format!("bad multiplicity `{}`", &rec[2])))?;
            entries.push(PoolEntry {
                x,
                energy,
                multiplicity,
            });
        }
        Ok(entries)
    }
}

pub fn solve(q: &QuboProblem, cfg: &SolverConfig) -> Result<SamplePool> {
    cfg.validate()?;
    match &cfg.backend {
        Backend::Exhaustive => solve_exhaustive(q, cfg),
        Backend::SimulatedAnnealing => solve_annealing(q, cfg),
        Backend::ExternalAdapter { command, args } => solve_external(q, cfg, command, args),
    }
}

/// Ranking key: energy, then the bit string read as `x_1 x_2 ... x_N`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ranked {
    energy: f64,
    lex: u64,
    mask: u64,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.energy
            .total_cmp(&other.energy)
            .then(self.lex.cmp(&other.lex))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn lex_key(mask: u64, n: usize) -> u64 {
    if n == 0 {
        0
    } else {
        mask.reverse_bits() >> (64 - n)
    }
}

fn solve_exhaustive(q: &QuboProblem, cfg: &SolverConfig) -> Result<SamplePool> {
    let n = q.n_vars;
    if n > MAX_EXHAUSTIVE_VARS {
        return Err(Error::TooLarge {
            n_vars: n,
            max: MAX_EXHAUSTIVE_VARS,
        });
    }
    let dense = q.dense();
    let cap = cfg.pool_cap();
    let total: u64 = 1 << n;
    let chunk = 1u64 << 12;
    let n_chunks = total.div_ceil(chunk);
    let kept: Vec<Ranked> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut heap = BinaryHeap::with_capacity(cap + 1);
            for mask in c * chunk..((c + 1) * chunk).min(total) {
                push_bounded(
                    &mut heap,
                    Ranked {
                        energy: dense.energy_mask(mask, q.offset),
                        lex: lex_key(mask, n),
                        mask,
                    },
                    cap,
                );
            }
            heap.into_vec()
        })
        .reduce(Vec::new, |a, b| {
            let mut heap: BinaryHeap<Ranked> = a.into_iter().collect();
            for r in b {
                push_bounded(&mut heap, r, cap);
            }
            heap.into_vec()
        });
    let entries = finish_entries(
        q,
        kept.into_iter()
            .map(|r| (BitVector::from_mask(r.mask, n), 1)),
    )?;
    Ok(SamplePool {
        entries,
        backend: "exhaustive".into(),
        reads: cfg.reads,
        sweeps: None,
        beta: None,
        enumerated: true,
    })
}

fn push_bounded(heap: &mut BinaryHeap<Ranked>, r: Ranked, cap: usize) {
    if heap.len() < cap {
        heap.push(r);
    } else if let Some(worst) = heap.peek() {
        if r < *worst {
            heap.pop();
            heap.push(r);
        }
    }
}

/// Re-evaluates energies exactly and sorts by (energy, bit string).
fn finish_entries(
    q: &QuboProblem,
    states: impl Iterator<Item = (BitVector, usize)>,
) -> Result<Vec<PoolEntry>> {
    let mut merged: BTreeMap<BitVector, usize> = BTreeMap::new();
    for (x, m) in states {
        *merged.entry(x).or_insert(0) += m;
    }
    let mut entries = merged
        .into_iter()
        .map(|(x, multiplicity)| {
            Ok(PoolEntry {
                energy: energy(q, &x)?,
                x,
                multiplicity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.energy.total_cmp(&b.energy).then_with(|| a.x.cmp(&b.x)));
    Ok(entries)
}

fn auto_beta(dense: &DenseQubo) -> (f64, f64) {
    let n = dense.n;
    let mut max_delta: f64 = 0.0;
    let mut min_delta = f64::INFINITY;
    for i in 0..n {
        let mut field = dense.linear[i].abs();
        let mut consider = |v: f64| {
            if v != 0.0 {
                min_delta = min_delta.min(v.abs());
            }
        };
        consider(dense.linear[i]);
        for j in 0..n {
            if j != i {
                let v = dense.upper[i.min(j) * n + i.max(j)];
                field += v.abs();
                consider(v);
            }
        }
        max_delta = max_delta.max(field);
    }
    if max_delta == 0.0 || !min_delta.is_finite() {
        return (0.1, 10.0);
    }
    let start = std::f64::consts::LN_2 / max_delta;
    let end = (100f64).ln() / min_delta;
    (start, end.max(start * 10.0))
}

fn solve_annealing(q: &QuboProblem, cfg: &SolverConfig) -> Result<SamplePool> {
    let dense = q.dense();
    let (beta_start, beta_end) = match cfg.beta {
        BetaSchedule::Auto => auto_beta(&dense),
        BetaSchedule::Geometric { start, end } => (start, end),
    };
    let sweeps = cfg.sweeps;
    let ratio = if sweeps > 1 {
        (beta_end / beta_start).powf(1.0 / (sweeps - 1) as f64)
    } else {
        1.0
    };
    let states: Vec<BitVector> = (0..cfg.reads)
        .into_par_iter()
        .map(|read| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[read as u64]));
            anneal_once(&dense, beta_start, ratio, sweeps, &mut rng)
        })
        .collect();
    let entries = finish_entries(q, states.into_iter().map(|x| (x, 1)))?;
    Ok(SamplePool {
        entries,
        backend: "simulated_annealing".into(),
        reads: cfg.reads,
        sweeps: Some(sweeps),
        beta: Some((beta_start, beta_end)),
        enumerated: false,
    })
}

/// One Metropolis run with single-bit flips, sweeping variables in order.
fn anneal_once(
    q: &DenseQubo,
    beta_start: f64,
    ratio: f64,
    sweeps: usize,
    rng: &mut ChaCha8Rng,
) -> BitVector {
    let n = q.n;
    let mut x: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    // field[i] = linear_i + Σ_{j≠i} Q_ij x_j, the energy change of setting x_i
    let coupling = |i: usize, j: usize| q.upper[i.min(j) * n + i.max(j)];
    let mut field: Vec<f64> = (0..n)
        .map(|i| {
            q.linear[i]
                + (0..n)
                    .filter(|&j| j != i && x[j])
                    .map(|j| coupling(i, j))
                    .sum::<f64>()
        })
        .collect();
    let mut beta = beta_start;
    for _ in 0..sweeps {
        for i in 0..n {
            let delta = if x[i] { -field[i] } else { field[i] };
            let accept = delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp();
            if accept {
                x[i] = !x[i];
                let sign = if x[i] { 1.0 } else { -1.0 };
                for (j, f) in field.iter_mut().enumerate() {
                    if j != i {
                        *f += sign * coupling(i, j);
                    }
                }
            }
        }
        beta *= ratio;
    }
    BitVector::from_bools(&x)
}

fn solve_external(
    q: &QuboProblem,
    cfg: &SolverConfig,
    command: &Path,
    args: &[String],
) -> Result<SamplePool> {
    let dir = std::env::temp_dir().join(format!(
        "qubo-bo-{}-{:x}",
        std::process::id(),
        derive_seed(cfg.seed, &[q.n_vars as u64, q.offset.to_bits()])
    ));
    std::fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    let qubo_path = dir.join("qubo.txt");
    let pool_path = dir.join("pool.csv");
    q.write(&qubo_path)?;
    let status = Command::new(command)
        .args(args)
        .arg(&qubo_path)
        .arg(&pool_path)
        .status()
        .map_err(|e| Error::ExternalSolver(format!("{}: {e}", command.display())))?;
    let result = if status.success() {
        SamplePool::read_csv(&pool_path)
    } else {
        Err(Error::ExternalSolver(format!(
            "{} exited with {status}",
            command.display()
        )))
    };
    let _ = std::fs::remove_dir_all(&dir);
    let raw = result?;
    if let Some(e) = raw.iter().find(|e| e.x.len() != q.n_vars) {
        return Err(Error::ExternalSolver(format!(
            "sample {} has the wrong length",
            e.x
        )));
    }
    let entries = finish_entries(q, raw.into_iter().map(|e| (e.x, e.multiplicity.max(1))))?;
    Ok(SamplePool {
        entries,
        backend: format!("external:{}", command.display()),
        reads: cfg.reads,
        sweeps: None,
        beta: None,
        enumerated: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub points: Vec<PoolEntry>,
    pub shortfall: bool,
}

/// Lowest-energy pool entries that are feasible, unseen and distinct.
pub fn select_batch(
    pool: &SamplePool,
    space: &DesignSpace,
    data: &Dataset,
    batch_size: usize,
) -> Result<Batch> {
    if batch_size == 0 {
        return Err(Error::param("batch_size", "must be at least 1"));
    }
    let mut seen = HashSet::new();
    let mut points = Vec::with_capacity(batch_size);
    for entry in &pool.entries {
        if points.len() == batch_size {
            break;
        }
        if !is_feasible(space, &entry.x)? || data.contains(&entry.x) || !seen.insert(&entry.x) {
            continue;
        }
        points.push(entry.clone());
    }
    let shortfall = points.len() < batch_size;
    Ok(Batch { points, shortfall })
}

/// Uniform feasible points not yet in `data`, drawn by sampling each site's
/// category independently and rejecting repeats.
pub fn random_batch<R: Rng + ?Sized>(
    space: &DesignSpace,
    data: &Dataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<BitVector>> {
    let seen_feasible = data
        .rows()
        .iter()
        .filter(|r| is_feasible(space, &r.x).unwrap_or(false))
        .count() as u64;
    let available = space.size() - seen_feasible.min(space.size());
    if (batch_size as u64) > available {
        return Err(Error::SpaceExhausted {
            requested: batch_size,
            available,
        });
    }
    let mut chosen = HashSet::new();
    let mut out = Vec::with_capacity(batch_size);
    let mut assignment = vec![0usize; space.num_sites()];
    while out.len() < batch_size {
        for (a, site) in assignment.iter_mut().zip(space.sites()) {
            *a = rng.random_range(0..site.cardinality);
        }
        let x = encode(space, &assignment)?;
        if !data.contains(&x) && chosen.insert(x.clone()) {
            out.push(x);
        }
    }
    Ok(out)
}
