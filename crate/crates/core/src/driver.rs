//! The optimization loop.
//!
//! Each loop refits the posterior on everything observed so far, draws one
//! coefficient vector, turns it into a penalty-corrected QUBO, minimizes it,
//! screens the ranked pool down to a batch of new feasible points and
//! evaluates them. The random baseline replaces the draw/solve/screen part
//! with uniform sampling but still fits the surrogate so R² stays comparable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::build_acquisition;
use crate::dataset::Dataset;
use crate::encoding::{build_penalty_spec, is_feasible, BitVector, DesignSpace, PenaltySpec};
use crate::error::{Error, Result};
use crate::objective::ObjectiveSpec;
use crate::seed::{initial_data_seed, stream_seed, RunKey, Stream};
use crate::solver::{random_batch, select_batch, solve, SolverConfig};
use crate::surrogate::{fit_posterior, r_squared, sample_coefficients};

#[derive(Debug, Clone)]
pub enum InitialData {
    /// Uniform feasible points evaluated through the objective before loop 1.
    Random { size: usize },
    Provided(Dataset),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub space: DesignSpace,
    pub lambda: f64,
    pub sigma2_grid: Vec<f64>,
    pub loops: usize,
    pub batch_size: usize,
    pub solver: SolverConfig,
    pub objective: ObjectiveSpec,
    pub initial: InitialData,
    pub master_seed: u64,
    /// Success cutoff in the objective's reported orientation.
    pub threshold: f64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", format!("must be > 0, got {}", self.lambda)));
        }
        if let Some(s) = self.sigma2_grid.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::param("sigma2", format!("entries must be >= 0, got {s}")));
        }
        if self.loops == 0 {
            return Err(Error::param("loops", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        self.solver.validate()?;
        match &self.initial {
            InitialData::Random { size: 0 } => {
                Err(Error::param("initial.size", "must be at least 1"))
            }
            InitialData::Random { size } if *size as u64 > self.space.size() => Err(Error::param(
                "initial.size",
                format!("exceeds the {} feasible points", self.space.size()),
            )),
            InitialData::Provided(d) if d.is_empty() => Err(Error::EmptyDataset),
            InitialData::Provided(d) if d.n_bits() != self.space.total_bits() => {
                Err(Error::LengthMismatch {
                    expected: self.space.total_bits(),
                    actual: d.n_bits(),
                })
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub x: BitVector,
    /// Acquisition energy; absent for random proposals.
    pub energy: Option<f64>,
    /// Observed value, minimize convention.
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub loop_index: usize,
    pub coefficient_seed: Option<u64>,
    /// Hex fingerprint of the sampled coefficients.
    pub coefficient_hash: Option<String>,
    /// In-sample R² of the posterior mean, before this loop's points.
    pub r2: Option<f64>,
    pub proposals: Vec<Proposal>,
    /// Lowest observed value after this loop, minimize convention.
    pub best_so_far: f64,
    pub shortfall: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Bo,
    Baseline,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub solve_calls: usize,
    pub evaluations: u64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub kind: RunKind,
    pub sigma2: Option<f64>,
    pub records: Vec<LoopRecord>,
    pub stats: RunStats,
    /// Set when the evaluation budget ran out; `records` holds the loops
    /// completed before that.
    pub aborted: Option<Error>,
}

impl RunOutput {
    pub fn label(&self) -> String {
        run_label(self.kind, self.sigma2)
    }

    pub fn proposals(&self) -> impl Iterator<Item = &Proposal> {
        self.records.iter().flat_map(|r| r.proposals.iter())
    }
}

pub fn run_label(kind: RunKind, sigma2: Option<f64>) -> String {
    match (kind, sigma2) {
        (RunKind::Bo, Some(s)) => format!("sigma2={s}"),
        _ => "random".to_string(),
    }
}

/// Evaluates the initial design (or copies a provided one).
pub fn initial_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.initial {
        InitialData::Provided(d) => {
            for row in d.rows() {
                if !is_feasible(&cfg.space, &row.x)? {
                    return Err(Error::param(
                        "initial",
                        format!("initial point {} is infeasible", row.x),
                    ));
                }
            }
            Ok(d.clone())
        }
        InitialData::Random { size } => {
            let mut rng = ChaCha8Rng::seed_from_u64(initial_data_seed(cfg.master_seed));
            let empty = Dataset::new(cfg.space.total_bits());
            let xs = random_batch(&cfg.space, &empty, *size, &mut rng)?;
            let ys = evaluate_all(&cfg.objective, &xs)?;
            let mut data = empty;
            for (x, y) in xs.into_iter().zip(ys) {
                data.push(x, y, 0)?;
            }
            Ok(data)
        }
    }
}

fn evaluate_all(objective: &ObjectiveSpec, xs: &[BitVector]) -> Result<Vec<f64>> {
    xs.par_iter().map(|x| objective.evaluate(x)).collect()
}

/// Runs `cfg.loops` Thompson-sampling loops from a fresh initial dataset.
pub fn run_bo(cfg: &RunConfig, sigma2: f64) -> Result<RunOutput> {
    cfg.validate()?;
    let mut data = initial_dataset(cfg)?;
    Runner::new(cfg, RunKind::Bo, Some(sigma2))?.run(&mut data, 1, &mut |_| Ok(()))
}

/// Random-proposal baseline from a fresh initial dataset.
pub fn run_baseline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut data = initial_dataset(cfg)?;
    Runner::new(cfg, RunKind::Baseline, None)?.run(&mut data, 1, &mut |_| Ok(()))
}

/// Loop executor over a caller-owned dataset, for resuming and streaming.
pub struct Runner<'a> {
    cfg: &'a RunConfig,
    kind: RunKind,
    sigma2: Option<f64>,
    penalties: PenaltySpec,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a RunConfig, kind: RunKind, sigma2: Option<f64>) -> Result<Self> {
        if kind == RunKind::Bo {
            match sigma2 {
                Some(s) if s >= 0.0 && s.is_finite() => {}
                _ => return Err(Error::param("sigma2", "BO runs need a finite sigma2 >= 0")),
            }
        }
        Ok(Runner {
            cfg,
            kind,
            sigma2: if kind == RunKind::Bo { sigma2 } else { None },
            penalties: build_penalty_spec(&cfg.space),
        })
    }

    fn key(&self) -> RunKey {
        match self.sigma2 {
            Some(sigma2) => RunKey::Bo { sigma2 },
            None => RunKey::Baseline,
        }
    }

    /// Executes loops `first_loop..=cfg.loops`, handing each finished record
    /// to `sink` before starting the next.
    pub fn run(
        &self,
        data: &mut Dataset,
        first_loop: usize,
        sink: &mut dyn FnMut(&LoopRecord) -> Result<()>,
    ) -> Result<RunOutput> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut out = RunOutput {
            kind: self.kind,
            sigma2: self.sigma2,
            records: Vec::new(),
            stats: RunStats::default(),
            aborted: None,
        };
        let evaluations_before = self.cfg.objective.evaluations();
        let mut expected_evaluations = 0u64;
        for loop_index in first_loop.max(1)..=self.cfg.loops {
            let record = match self.step(data, loop_index, &mut out.stats) {
                Ok(r) => r,
                Err(e @ Error::BudgetExceeded { .. }) => {
                    out.aborted = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            };
            expected_evaluations += record.proposals.len() as u64;
            let evaluated = self.cfg.objective.evaluations() - evaluations_before;
            if evaluated != expected_evaluations {
                return Err(Error::Invariant(format!(
                    "{evaluated} objective evaluations for {expected_evaluations} proposals"
                )));
            }
            out.stats.evaluations = evaluated;
            sink(&record)?;
            out.records.push(record);
        }
        Ok(out)
    }

    fn step(&self, data: &mut Dataset, loop_index: usize, stats: &mut RunStats) -> Result<LoopRecord> {
        let cfg = self.cfg;
        let post = fit_posterior(data, cfg.lambda, self.sigma2.unwrap_or(0.0))?;
        let r2 = match r_squared(&post, data) {
            Ok(r) => Some(r),
            Err(Error::DegenerateTarget) => None,
            Err(e) => return Err(e),
        };
        let key = self.key();

        let (candidates, energies, coefficient_seed, coefficient_hash, shortfall) = match self.kind {
            RunKind::Bo => {
                let seed = stream_seed(cfg.master_seed, key, loop_index, Stream::Coefficients);
                let alpha = sample_coefficients(&post, &mut ChaCha8Rng::seed_from_u64(seed))?;
                if post.sigma2() == 0.0 && alpha.values() != post.mean() {
                    return Err(Error::Invariant(
                        "zero-variance draw differs from the posterior mean".into(),
                    ));
                }
                let q = build_acquisition(&alpha, &self.penalties)?;
                let solver_cfg = SolverConfig {
                    seed: stream_seed(cfg.master_seed, key, loop_index, Stream::Solver),
                    ..cfg.solver.clone()
                };
                stats.solve_calls += 1;
                let pool = solve(&q, &solver_cfg)?;
                let batch = select_batch(&pool, &cfg.space, data, cfg.batch_size)?;
                let (xs, es): (Vec<_>, Vec<_>) =
                    batch.points.into_iter().map(|e| (e.x, Some(e.energy))).unzip();
                (xs, es, Some(seed), Some(format!("{:016x}", alpha.fingerprint())), batch.shortfall)
            }
            RunKind::Baseline => {
                let seed = stream_seed(cfg.master_seed, key, loop_index, Stream::RandomBatch);
                let xs = random_batch(
                    &cfg.space,
                    data,
                    cfg.batch_size,
                    &mut ChaCha8Rng::seed_from_u64(seed),
                )?;
                let es = vec![None; xs.len()];
                (xs, es, None, None, false)
            }
        };

        for x in &candidates {
            if !is_feasible(&cfg.space, x)? {
                return Err(Error::Invariant(format!("proposed infeasible point {x}")));
            }
            if data.contains(x) {
                return Err(Error::Invariant(format!("proposed known point {x}")));
            }
        }
        let ys = evaluate_all(&cfg.objective, &candidates)?;
        let proposals: Vec<Proposal> = candidates
            .into_iter()
            .zip(energies)
            .zip(ys)
            .map(|((x, energy), y)| Proposal { x, energy, y })
            .collect();
        for p in &proposals {
            // push rejects duplicates, keeping the dataset duplicate-free
            data.push(p.x.clone(), p.y, loop_index)?;
        }
        Ok(LoopRecord {
            loop_index,
            coefficient_seed,
            coefficient_hash,
            r2,
            proposals,
            best_so_far: data.min_y().expect("dataset is non-empty"),
            shortfall,
        })
    }
}

#[derive(Debug)]
pub struct SweepOutput {
    pub initial: Dataset,
    /// One BO run per grid value, in grid order, then the baseline.
    pub runs: Vec<RunOutput>,
}

/// All grid values plus the baseline, from one shared initial dataset.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutput> {
    run_sweep_with(cfg, &mut |_, _| Ok(()))
}

/// Like [`run_sweep`], streaming every finished loop to `sink` together with
/// the label of its run.
pub fn run_sweep_with(
    cfg: &RunConfig,
    sink: &mut dyn FnMut(&str, &LoopRecord) -> Result<()>,
) -> Result<SweepOutput> {
    cfg.validate()?;
    if cfg.sigma2_grid.is_empty() {
        return Err(Error::param("sigma2", "grid is empty"));
    }
    let initial = initial_dataset(cfg)?;
    let mut runs = Vec::with_capacity(cfg.sigma2_grid.len() + 1);
    let plans = cfg
        .sigma2_grid
        .iter()
        .map(|&s| (RunKind::Bo, Some(s)))
        .chain(std::iter::once((RunKind::Baseline, None)));
    for (kind, sigma2) in plans {
        let label = run_label(kind, sigma2);
        let mut data = initial.clone();
        let runner = Runner::new(cfg, kind, sigma2)?;
        let out = runner.run(&mut data, 1, &mut |r| sink(&label, r))?;
        runs.push(out);
    }
    Ok(SweepOutput { initial, runs })
}
