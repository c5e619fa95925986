//! Black-box objectives: planted synthetic functions and recorded tables.
//!
//! The optimizer always minimizes. An objective declared `maximize` returns
//! the negated value from [`ObjectiveSpec::evaluate`]; reports flip it back.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encoding::{encode, BitVector, DesignSpace};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::surrogate::{predict, CoefficientSample, FeatureMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Minimize,
    Maximize,
}

impl Orientation {
    /// Maps a reported value to the minimize convention. Self-inverse.
    pub fn internal(self, value: f64) -> f64 {
        match self {
            Orientation::Minimize => value,
            Orientation::Maximize => -value,
        }
    }

    pub fn reported(self, value: f64) -> f64 {
        self.internal(value)
    }

    /// True when reported value `a` is at least as good as `b`.
    pub fn at_least_as_good(self, a: f64, b: f64) -> bool {
        match self {
            Orientation::Minimize => a <= b,
            Orientation::Maximize => a >= b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Quadratic in the bits; exactly representable by the surrogate.
    Qubo,
    /// Quadratic plus negative third-order terms the surrogate cannot express.
    Deceptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    /// Probability that a pair coefficient is nonzero.
    pub density: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
    /// Multiplier on every planted coefficient.
    pub scale: f64,
    /// Constant term.
    pub offset: f64,
    /// Number of third-order terms for the deceptive kind.
    pub cubic_terms: usize,
    /// Magnitude of each third-order coefficient, before `scale`.
    pub cubic_strength: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            density: 0.3,
            noise: 0.0,
            scale: 1.0,
            offset: 0.0,
            cubic_terms: 1,
            cubic_strength: 4.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedFunction {
    pub kind: SyntheticKind,
    pub quadratic: CoefficientSample,
    /// `(a, b, c, coefficient)` with `a < b < c`.
    pub cubic: Vec<(usize, usize, usize, f64)>,
    pub noise: f64,
    pub seed: u64,
}

impl PlantedFunction {
    /// Noise-free value.
    pub fn mean_value(&self, x: &BitVector) -> Result<f64> {
        let mut v = predict(&self.quadratic, x)?;
        for &(a, b, c, w) in &self.cubic {
            if x.get(a) && x.get(b) && x.get(c) {
                v += w;
            }
        }
        Ok(v)
    }

    fn value(&self, x: &BitVector) -> Result<f64> {
        let mut v = self.mean_value(x)?;
        if self.noise > 0.0 {
            let key = x.ones().fold(x.len() as u64, |h, i| derive_seed(h, &[i as u64]));
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[key]));
            v += self.noise * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(v)
    }
}

#[derive(Debug, Clone)]
pub struct TableFunction {
    values: HashMap<BitVector, f64>,
    partial: bool,
}

impl TableFunction {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_partial(&self) -> bool {
        self.partial
    }

    pub fn get(&self, x: &BitVector) -> Option<f64> {
        self.values.get(x).copied()
    }

    /// Reads a CSV with one column per site (named as in the space) and `y`.
    /// Without `partial`, every feasible point must be present.
    pub fn load(path: &Path, space: &DesignSpace, partial: bool) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(file);
        let header = r.headers()?.clone();
        let mut expected: Vec<&str> = space.sites().iter().map(|s| s.name.as_str()).collect();
        expected.push("y");
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Schema(format!(
                "{}: header must be {}",
                path.display(),
                expected.join(",")
            )));
        }
        let ns = space.num_sites();
        let mut values = HashMap::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: String| {
                Error::Schema(format!("{}: row {}: {what}", path.display(), line + 1))
            };
            let indices = (0..ns)
                .map(|s| rec[s].parse::<usize>().map_err(|_| bad(format!("bad index `{}`", &rec[s]))))
                .collect::<Result<Vec<_>>>()?;
            let y: f64 = rec[ns]
                .parse()
                .map_err(|_| bad(format!("bad y `{}`", &rec[ns])))?;
            let x = encode(space, &indices).map_err(|e| bad(e.to_string()))?;
            if values.insert(x, y).is_some() {
                return Err(bad(format!("duplicate assignment {indices:?}")));
            }
        }
        if !partial && values.len() as u64 != space.size() {
            return Err(Error::Schema(format!(
                "{}: table covers {} of {} feasible points; declare it partial",
                path.display(),
                values.len(),
                space.size()
            )));
        }
        Ok(TableFunction { values, partial })
    }

    pub fn from_values(values: HashMap<BitVector, f64>, partial: bool) -> Self {
        TableFunction { values, partial }
    }
}

#[derive(Debug, Clone)]
pub enum ObjectiveFunction {
    Synthetic(PlantedFunction),
    Tabular(TableFunction),
}

/// An objective with orientation and a metered evaluation budget.
#[derive(Debug)]
pub struct ObjectiveSpec {
    pub function: ObjectiveFunction,
    pub orientation: Orientation,
    pub budget: Option<u64>,
    evaluations: AtomicU64,
}

impl Clone for ObjectiveSpec {
    /// The clone starts with a fresh counter.
    fn clone(&self) -> Self {
        ObjectiveSpec::new(self.function.clone(), self.orientation, self.budget)
    }
}

impl ObjectiveSpec {
    pub fn new(function: ObjectiveFunction, orientation: Orientation, budget: Option<u64>) -> Self {
        ObjectiveSpec {
            function,
            orientation,
            budget,
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_budget(mut self, budget: Option<u64>) -> Self {
        self.budget = budget;
        self
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::SeqCst)
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.function {
            ObjectiveFunction::Synthetic(p) => match p.kind {
                SyntheticKind::Qubo => "synthetic_qubo",
                SyntheticKind::Deceptive => "synthetic_deceptive",
            },
            ObjectiveFunction::Tabular(_) => "tabular",
        }
    }

    /// Value in the reported orientation, without touching the budget.
    pub fn reported_value(&self, x: &BitVector) -> Result<f64> {
        match &self.function {
            ObjectiveFunction::Synthetic(p) => p.value(x),
            ObjectiveFunction::Tabular(t) => t
                .get(x)
                .ok_or_else(|| Error::MissingEntry(x.to_string())),
        }
    }

    /// Metered evaluation in the minimize convention.
    pub fn evaluate(&self, x: &BitVector) -> Result<f64> {
        let cap = self.budget;
        self.evaluations
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| match cap {
                Some(cap) if n >= cap => None,
                _ => Some(n + 1),
            })
            .map_err(|_| Error::BudgetExceeded {
                cap: cap.unwrap_or(0),
            })?;
        Ok(self.orientation.internal(self.reported_value(x)?))
    }
}

/// Draws a planted function: standard normal linear terms, pair terms that
/// are standard normal with probability `density` and zero otherwise.
pub fn make_synthetic(
    seed: u64,
    n_bits: usize,
    kind: SyntheticKind,
    params: &SyntheticParams,
) -> Result<ObjectiveSpec> {
    if n_bits < 2 {
        return Err(Error::param("n_bits", "synthetic objectives need at least 2 bits"));
    }
    if !(0.0..=1.0).contains(&params.density) {
        return Err(Error::InvalidDensity(params.density));
    }
    if !(params.noise >= 0.0 && params.noise.is_finite()) {
        return Err(Error::param("noise", "must be >= 0"));
    }
    if kind == SyntheticKind::Deceptive && (params.cubic_terms == 0 || n_bits < 3) {
        return Err(Error::param(
            "cubic_terms",
            "deceptive objectives need at least one third-order term and 3 bits",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fm = FeatureMap::new(n_bits);
    let mut values = vec![0.0; fm.len()];
    values[0] = params.offset;
    for i in 0..n_bits {
        values[fm.linear_index(i)] = params.scale * rng.sample::<f64, _>(StandardNormal);
    }
    for (i, j) in fm.pairs() {
        let active = rng.random::<f64>() < params.density;
        let w: f64 = rng.sample(StandardNormal);
        if active {
            values[fm.pair_index(i, j)] = params.scale * w;
        }
    }
    let mut cubic = Vec::new();
    if kind == SyntheticKind::Deceptive {
        for _ in 0..params.cubic_terms {
            let mut t = rand::seq::index::sample(&mut rng, n_bits, 3).into_vec();
            t.sort_unstable();
            cubic.push((t[0], t[1], t[2], -params.scale * params.cubic_strength));
        }
    }
    let planted = PlantedFunction {
        kind,
        quadratic: CoefficientSample::new(n_bits, values)?,
        cubic,
        noise: params.noise,
        seed: derive_seed(seed, &[0x6e6f697365]),
    };
    Ok(ObjectiveSpec::new(
        ObjectiveFunction::Synthetic(planted),
        Orientation::Minimize,
        None,
    ))
}
