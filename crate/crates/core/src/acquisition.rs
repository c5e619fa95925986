//! Acquisition QUBO: a sampled surrogate with penalty-corrected pair terms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::encoding::{BitVector, PenaltySpec};
use crate::error::{Error, Result};
use crate::surrogate::CoefficientSample;

#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    pub n_vars: usize,
    pub linear: Vec<f64>,
    /// Keys satisfy `i < j`.
    pub quadratic: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

impl QuboProblem {
    pub fn new(n_vars: usize) -> Self {
        QuboProblem {
            n_vars,
            linear: vec![0.0; n_vars],
            quadratic: BTreeMap::new(),
            offset: 0.0,
        }
    }

    /// Adds `value` to the coefficient of `x_i x_j` (or `x_i` when `i == j`).
    pub fn add(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if j >= self.n_vars {
            return Err(Error::InconsistentDimensions(format!(
                "index {j} out of range for {} variables",
                self.n_vars
            )));
        }
        if i == j {
            self.linear[i] += value;
        } else {
            *self.quadratic.entry((i, j)).or_insert(0.0) += value;
        }
        Ok(())
    }

    pub fn quadratic_coef(&self, i: usize, j: usize) -> f64 {
        self.quadratic.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0)
    }

    /// Serializes as `n_vars`, then `i j value` lines (`i == j` for linear
    /// terms), then the offset on its own line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.n_vars);
        for (i, v) in self.linear.iter().enumerate() {
            let _ = writeln!(s, "{i} {i} {v:?}");
        }
        for (&(i, j), v) in &self.quadratic {
            let _ = writeln!(s, "{i} {j} {v:?}");
        }
        let _ = writeln!(s, "{:?}", self.offset);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let bad = |n: usize, what: &str| Error::Schema(format!("QUBO line {n}: {what}"));
        let (n, first) = lines
            .next()
            .ok_or_else(|| Error::Schema("empty QUBO file".into()))?;
        let n_vars: usize = first.parse().map_err(|_| bad(n, "expected n_vars"))?;
        let mut q = QuboProblem::new(n_vars);
        let mut offset = None;
        for (n, line) in lines {
            if offset.is_some() {
                return Err(bad(n, "content after the offset line"));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [i, j, v] => {
                    let i: usize = i.parse().map_err(|_| bad(n, "bad index"))?;
                    let j: usize = j.parse().map_err(|_| bad(n, "bad index"))?;
                    let v: f64 = v.parse().map_err(|_| bad(n, "bad value"))?;
                    q.add(i, j, v).map_err(|e| bad(n, &e.to_string()))?;
                }
                [v] => offset = Some(v.parse().map_err(|_| bad(n, "bad offset"))?),
                _ => return Err(bad(n, "expected `i j value` or a lone offset")),
            }
        }
        q.offset = offset.ok_or_else(|| Error::Schema("missing offset line".into()))?;
        Ok(q)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::file(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_text(&text)
    }

    /// Dense upper-triangular copy for the solvers.
    pub(crate) fn dense(&self) -> DenseQubo {
        let n = self.n_vars;
        let mut upper = vec![0.0; n * n];
        for (&(i, j), &v) in &self.quadratic {
            upper[i * n + j] = v;
        }
        DenseQubo {
            n,
            linear: self.linear.clone(),
            upper,
        }
    }
}

pub(crate) struct DenseQubo {
    pub n: usize,
    pub linear: Vec<f64>,
    /// Row-major, only `i < j` entries are used.
    pub upper: Vec<f64>,
}

impl DenseQubo {
    /// Energy of a state packed into a mask, starting from `offset`.
    pub fn energy_mask(&self, mask: u64, offset: f64) -> f64 {
        let mut e = offset;
        let mut rest = mask;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let row = &self.upper[i * self.n..];
            e += self.linear[i];
            let mut others = rest;
            while others != 0 {
                let j = others.trailing_zeros() as usize;
                others &= others - 1;
                e += row[j];
            }
        }
        e
    }
}

/// Evaluates the quadratic form. Terms are accumulated in the same order as
/// [`crate::surrogate::predict`], so an unmodified transcription of a
/// coefficient vector reproduces its predictions bit for bit.
pub fn energy(q: &QuboProblem, x: &BitVector) -> Result<f64> {
    if x.len() != q.n_vars {
        return Err(Error::LengthMismatch {
            expected: q.n_vars,
            actual: x.len(),
        });
    }
    let ones: Vec<usize> = x.ones().collect();
    let mut e = q.offset;
    for (a, &i) in ones.iter().enumerate() {
        e += q.linear[i];
        for &j in &ones[a + 1..] {
            if let Some(v) = q.quadratic.get(&(i, j)) {
                e += v;
            }
        }
    }
    Ok(e)
}

/// Penalty constant for one pair: `2·max(α)`, raised when that would not
/// exceed the pair's own surrogate coefficient.
pub fn penalty_constant(alpha: &CoefficientSample, original: f64) -> f64 {
    let c = 2.0 * alpha.max();
    if c < original {
        2.0 * original.max(alpha.min().abs()) + 1.0
    } else {
        c
    }
}

pub fn build_acquisition(alpha: &CoefficientSample, penalties: &PenaltySpec) -> Result<QuboProblem> {
    let n = alpha.n_bits();
    let fm = alpha.feature_map();
    let mut q = QuboProblem::new(n);
    q.offset = alpha.constant();
    for (i, l) in q.linear.iter_mut().enumerate() {
        *l = alpha.linear(i);
    }
    for (i, j) in fm.pairs() {
        q.quadratic.insert((i, j), alpha.pair(i, j));
    }
    for pair in &penalties.pair_terms {
        if pair.i >= pair.j || pair.j >= n {
            return Err(Error::InconsistentDimensions(format!(
                "penalty pair ({}, {}) does not fit {n} variables",
                pair.i, pair.j
            )));
        }
        let original = alpha.pair(pair.i, pair.j);
        q.quadratic
            .insert((pair.i, pair.j), penalty_constant(alpha, original));
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::PenaltyPair;
    use crate::surrogate::{predict, FeatureMap};

    fn spec(pairs: &[(usize, usize)]) -> PenaltySpec {
        PenaltySpec {
            pair_terms: pairs
                .iter()
                .map(|&(i, j)| PenaltyPair { i, j, site: 0 })
                .collect(),
            residual_infeasible: vec![],
        }
    }

    #[test]
    fn zero_coefficients_give_zero_penalty() {
        let alpha = CoefficientSample::new(3, vec![0.0; 7]).unwrap();
        let q = build_acquisition(&alpha, &spec(&[(0, 1)])).unwrap();
        assert_eq!(q.quadratic_coef(0, 1), 0.0);
    }

    #[test]
    fn penalty_is_twice_the_max() {
        let fm = FeatureMap::new(3);
        let mut v = vec![0.5, -1.0, 0.25, 3.0, -2.0, 0.1, 0.7];
        v[fm.pair_index(0, 1)] = -2.0;
        let alpha = CoefficientSample::new(3, v).unwrap();
        let q = build_acquisition(&alpha, &spec(&[(0, 1)])).unwrap();
        assert_eq!(q.quadratic_coef(0, 1), 6.0);
        assert_eq!(q.quadratic_coef(0, 2), alpha.pair(0, 2));
        assert_eq!(q.quadratic_coef(1, 2), alpha.pair(1, 2));
        assert_eq!(q.linear, vec![-1.0, 0.25, 3.0]);
        assert_eq!(q.offset, 0.5);
    }

    #[test]
    fn no_penalties_is_a_transcription() {
        let v: Vec<f64> = (0..11).map(|k| k as f64 * 0.3 - 1.0).collect();
        let alpha = CoefficientSample::new(4, v).unwrap();
        let q = build_acquisition(&alpha, &PenaltySpec::default()).unwrap();
        for m in 0..16 {
            let x = BitVector::from_mask(m, 4);
            assert_eq!(energy(&q, &x).unwrap(), predict(&alpha, &x).unwrap());
        }
    }

    #[test]
    fn negative_max_floors_the_constant() {
        let fm = FeatureMap::new(2);
        let mut v = vec![-3.0, -2.0, -4.0, 0.0];
        v[fm.pair_index(0, 1)] = -1.0;
        let alpha = CoefficientSample::new(2, v).unwrap();
        // 2·max = -2 < -1, so C = 2·max(-1, 4) + 1
        let q = build_acquisition(&alpha, &spec(&[(0, 1)])).unwrap();
        assert_eq!(q.quadratic_coef(0, 1), 9.0);
    }

    #[test]
    fn rejects_mismatched_penalties() {
        let alpha = CoefficientSample::new(2, vec![0.0; 4]).unwrap();
        assert!(matches!(
            build_acquisition(&alpha, &spec(&[(1, 2)])),
            Err(Error::InconsistentDimensions(_))
        ));
    }

    #[test]
    fn energy_examples() {
        let mut q = QuboProblem::new(3);
        q.offset = 1.5;
        q.add(0, 0, 2.0).unwrap();
        q.add(2, 0, -4.0).unwrap();
        assert_eq!(energy(&q, &BitVector::zeros(3)).unwrap(), 1.5);
        assert_eq!(energy(&q, &BitVector::from_bits(&[1, 0, 1])).unwrap(), -0.5);
        assert!(energy(&q, &BitVector::zeros(2)).is_err());
        let dense = q.dense();
        assert_eq!(dense.energy_mask(0b101, q.offset), -0.5);
    }

    #[test]
    fn text_format() {
        let mut q = QuboProblem::new(2);
        q.add(0, 0, 0.1).unwrap();
        q.add(0, 1, -2.5).unwrap();
        q.offset = 3.0;
        let text = q.to_text();
        assert_eq!(text, "2\n0 0 0.1\n1 1 0.0\n0 1 -2.5\n3.0\n");
        assert_eq!(QuboProblem::from_text(&text).unwrap(), q);
        assert!(QuboProblem::from_text("2\n0 5 1.0\n0\n").is_err());
        assert!(QuboProblem::from_text("2\n0 1 1.0\n").is_err());
    }
}
