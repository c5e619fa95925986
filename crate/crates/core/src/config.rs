//! TOML run configuration.
//!
//! ```toml
//! master_seed = 7
//! lambda = 0.01
//! sigma2 = [0.0, 0.004, 0.008, 0.012]
//! loops = 20
//! batch_size = 10
//! threshold = 0.88
//!
//! [[sites]]
//! name = "R1"
//! cardinality = 6
//!
//! [solver]
//! backend = "simulated_annealing"   # exhaustive | simulated_annealing | external
//! reads = 300
//! sweeps = 1000
//! # beta_start = 0.1                # both or neither; default derives them
//! # beta_end = 10.0
//! # command = "./anneal.sh"         # external only
//!
//! [objective]
//! kind = "synthetic_qubo"           # synthetic_qubo | synthetic_deceptive | tabular
//! orientation = "minimize"
//! seed = 1
//! density = 0.3
//! # path = "table.csv"             # tabular only, relative to this file
//! # partial = false
//! # budget = 1000
//!
//! [initial]
//! size = 100                        # or: path = "initial.csv"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::driver::{InitialData, RunConfig};
use crate::encoding::{DesignSpace, SiteSpec};
use crate::error::{Error, Result};
use crate::objective::{
    make_synthetic, ObjectiveFunction, ObjectiveSpec, Orientation, SyntheticKind,
    SyntheticParams, TableFunction,
};
use crate::solver::{Backend, BetaSchedule, SolverConfig};

fn default_lambda() -> f64 {
    1e-2
}
fn default_loops() -> usize {
    20
}
fn default_batch() -> usize {
    10
}
fn default_reads() -> usize {
    300
}
fn default_sweeps() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub master_seed: u64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub sigma2: Vec<f64>,
    #[serde(default = "default_loops")]
    pub loops: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub threshold: f64,
    pub sites: Vec<SiteSpec>,
    #[serde(default)]
    pub solver: SolverSection,
    pub objective: ObjectiveSection,
    pub initial: InitialSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "default_reads")]
    pub reads: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
    pub command: Option<PathBuf>,
    #[serde(default)]
    pub args: Vec<String>,
}

fn default_backend() -> String {
    "simulated_annealing".into()
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            backend: default_backend(),
            reads: default_reads(),
            sweeps: default_sweeps(),
            beta_start: None,
            beta_end: None,
            command: None,
            args: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub kind: String,
    #[serde(default)]
    pub orientation: Orientation,
    #[serde(default)]
    pub seed: u64,
    pub density: Option<f64>,
    pub noise: Option<f64>,
    pub scale: Option<f64>,
    pub offset: Option<f64>,
    pub cubic_terms: Option<usize>,
    pub cubic_strength: Option<f64>,
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub partial: bool,
    pub budget: Option<u64>,
}

impl ObjectiveSection {
    pub fn synthetic_params(&self) -> SyntheticParams {
        let d = SyntheticParams::default();
        SyntheticParams {
            density: self.density.unwrap_or(d.density),
            noise: self.noise.unwrap_or(d.noise),
            scale: self.scale.unwrap_or(d.scale),
            offset: self.offset.unwrap_or(d.offset),
            cubic_terms: self.cubic_terms.unwrap_or(d.cubic_terms),
            cubic_strength: self.cubic_strength.unwrap_or(d.cubic_strength),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub size: Option<usize>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub file: ConfigFile,
    pub raw: String,
    pub base_dir: PathBuf,
}

fn cfg_err(field: &str, message: impl Into<String>) -> Error {
    Error::ConfigParse {
        field: field.to_string(),
        message: message.into(),
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&raw, &base_dir)
    }

    pub fn parse(raw: &str, base_dir: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(raw).map_err(|e| {
            let line = e
                .span()
                .map(|s| raw[..s.start.min(raw.len())].matches('\n').count() + 1);
            let field = line.map(|l| format!("line {l}")).unwrap_or_else(|| "<file>".into());
            cfg_err(&field, e.message().trim())
        })?;
        Ok(LoadedConfig {
            file,
            raw: raw.to_string(),
            base_dir: base_dir.to_path_buf(),
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Validates every field and builds the in-memory configuration.
    pub fn to_run_config(&self) -> Result<RunConfig> {
        let f = &self.file;
        if !(f.lambda > 0.0 && f.lambda.is_finite()) {
            return Err(cfg_err("lambda", format!("must be > 0, got {}", f.lambda)));
        }
        if f.sigma2.is_empty() {
            return Err(cfg_err("sigma2", "grid must not be empty"));
        }
        if let Some(s) = f.sigma2.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(cfg_err("sigma2", format!("entries must be >= 0, got {s}")));
        }
        if f.loops == 0 {
            return Err(cfg_err("loops", "must be at least 1"));
        }
        if f.batch_size == 0 {
            return Err(cfg_err("batch_size", "must be at least 1"));
        }
        if !f.threshold.is_finite() {
            return Err(cfg_err("threshold", "must be finite"));
        }
        let space = DesignSpace::new(f.sites.clone()).map_err(|e| cfg_err("sites", e.to_string()))?;

        let s = &f.solver;
        let backend = match s.backend.as_str() {
            "exhaustive" => Backend::Exhaustive,
            "simulated_annealing" | "sa" => Backend::SimulatedAnnealing,
            "external" | "external_adapter" => Backend::ExternalAdapter {
                command: s
                    .command
                    .as_ref()
                    .map(|c| if c.components().count() > 1 { self.resolve(c) } else { c.clone() })
                    .ok_or_else(|| cfg_err("solver.command", "required for the external backend"))?,
                args: s.args.clone(),
            },
            other => return Err(cfg_err("solver.backend", format!("unknown backend `{other}`"))),
        };
        let beta = match (s.beta_start, s.beta_end) {
            (None, None) => BetaSchedule::Auto,
            (Some(start), Some(end)) => BetaSchedule::Geometric { start, end },
            _ => return Err(cfg_err("solver.beta_start", "set both beta_start and beta_end or neither")),
        };
        let solver = SolverConfig {
            backend,
            reads: s.reads,
            sweeps: s.sweeps,
            beta,
            seed: 0,
        };
        solver.validate().map_err(|e| cfg_err("solver", e.to_string()))?;
        if solver.backend == Backend::Exhaustive && space.total_bits() > crate::solver::MAX_EXHAUSTIVE_VARS {
            return Err(cfg_err("solver.backend", "exhaustive search supports at most 30 bits"));
        }

        let o = &f.objective;
        let objective = match o.kind.as_str() {
            "synthetic_qubo" | "synthetic_deceptive" => {
                let kind = if o.kind == "synthetic_qubo" {
                    SyntheticKind::Qubo
                } else {
                    SyntheticKind::Deceptive
                };
                make_synthetic(o.seed, space.total_bits(), kind, &o.synthetic_params())
                    .map_err(|e| cfg_err("objective", e.to_string()))?
            }
            "tabular" => {
                let path = o
                    .path
                    .as_ref()
                    .ok_or_else(|| cfg_err("objective.path", "required for tabular objectives"))?;
                let table = TableFunction::load(&self.resolve(path), &space, o.partial)
                    .map_err(|e| cfg_err("objective.path", e.to_string()))?;
                ObjectiveSpec::new(ObjectiveFunction::Tabular(table), Orientation::Minimize, None)
            }
            other => return Err(cfg_err("objective.kind", format!("unknown kind `{other}`"))),
        }
        .with_orientation(o.orientation)
        .with_budget(o.budget);

        let initial = match (&f.initial.size, &f.initial.path) {
            (Some(size), None) => InitialData::Random { size: *size },
            (None, Some(path)) => {
                let data = Dataset::read_csv(&self.resolve(path))
                    .map_err(|e| cfg_err("initial.path", e.to_string()))?;
                InitialData::Provided(data)
            }
            _ => return Err(cfg_err("initial", "set exactly one of `size` or `path`")),
        };

        let cfg = RunConfig {
            space,
            lambda: f.lambda,
            sigma2_grid: f.sigma2.clone(),
            loops: f.loops,
            batch_size: f.batch_size,
            solver,
            objective,
            initial,
            master_seed: f.master_seed,
            threshold: f.threshold,
        };
        cfg.validate().map_err(|e| match e {
            Error::InvalidParameter { field, message } => cfg_err(&field, message),
            other => cfg_err("initial", other.to_string()),
        })?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
master_seed = 3
sigma2 = [0.0, 0.004]
loops = 2
batch_size = 4
threshold = 0.5

[[sites]]
name = "A"
cardinality = 6

[[sites]]
name = "B"
cardinality = 4

[solver]
backend = "exhaustive"

[objective]
kind = "synthetic_qubo"
seed = 4

[initial]
size = 8
"#;

    fn field_of(e: Error) -> String {
        match e {
            Error::ConfigParse { field, .. } => field,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn parses_and_validates() {
        let c = LoadedConfig::parse(BASE, Path::new(".")).unwrap();
        let run = c.to_run_config().unwrap();
        assert_eq!(run.space.total_bits(), 5);
        assert_eq!(run.lambda, 1e-2);
        assert_eq!(run.solver.backend, Backend::Exhaustive);
        assert_eq!(run.solver.reads, 300);
    }

    #[test]
    fn nonpositive_lambda_names_the_field() {
        for bad in ["lambda = 0.0", "lambda = -1.0"] {
            let text = BASE.replace("master_seed = 3", &format!("master_seed = 3\n{bad}"));
            let c = LoadedConfig::parse(&text, Path::new(".")).unwrap();
            assert_eq!(field_of(c.to_run_config().unwrap_err()), "lambda");
        }
    }

    #[test]
    fn reports_syntax_errors_with_lines() {
        let text = BASE.replace("loops = 2", "loops = \"two\"");
        let e = LoadedConfig::parse(&text, Path::new(".")).unwrap_err();
        assert_eq!(field_of(e), "line 4");
        let text = BASE.replace("loops = 2", "lops = 2");
        assert!(LoadedConfig::parse(&text, Path::new(".")).is_err());
    }

    #[test]
    fn other_field_errors() {
        let cases = [
            ("sigma2 = [0.0, 0.004]", "sigma2 = [-1.0]", "sigma2"),
            ("batch_size = 4", "batch_size = 0", "batch_size"),
            ("backend = \"exhaustive\"", "backend = \"quantum\"", "solver.backend"),
            ("kind = \"synthetic_qubo\"", "kind = \"tabular\"", "objective.path"),
            ("size = 8", "size = 1000", "initial.size"),
            ("cardinality = 4", "cardinality = 1", "sites"),
        ];
        for (from, to, field) in cases {
            let c = LoadedConfig::parse(&BASE.replace(from, to), Path::new(".")).unwrap();
            assert_eq!(field_of(c.to_run_config().unwrap_err()), field, "{to}");
        }
    }
}
