//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use qubo_bo::objective::{ObjectiveFunction, PlantedFunction};
use qubo_bo::{BitVector, DesignSpace, ObjectiveSpec, QuboProblem};

/// Quadratic features of `x` in the order 1, x_1..x_n, x_i x_j (i < j lexicographic).
pub fn features(x: &[u8]) -> Vec<f64> {
    let n = x.len();
    let mut f = Vec::with_capacity(1 + n + n * (n - 1) / 2);
    f.push(1.0);
    f.extend(x.iter().map(|&b| b as f64));
    for i in 0..n {
        for j in i + 1..n {
            f.push((x[i] * x[j]) as f64);
        }
    }
    f
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Ridge normal matrix `XᵀX + λI` and right-hand side `Xᵀy`.
pub fn normal_equations(xs: &[Vec<u8>], ys: &[f64], lambda: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = features(&xs[0]).len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for (x, &y) in xs.iter().zip(ys) {
        let f = features(x);
        for r in 0..p {
            b[r] += f[r] * y;
            for c in 0..p {
                a[r][c] += f[r] * f[c];
            }
        }
    }
    for (r, row) in a.iter_mut().enumerate() {
        row[r] += lambda;
    }
    (a, b)
}

/// Diagonal of the inverse, one unit-vector solve per column.
pub fn inverse_diagonal(a: &[Vec<f64>]) -> Vec<f64> {
    let p = a.len();
    (0..p)
        .map(|k| {
            let mut e = vec![0.0; p];
            e[k] = 1.0;
            gauss_solve(a.to_vec(), e)[k]
        })
        .collect()
}

/// Direct evaluation of `offset + Σ h_i x_i + Σ J_ij x_i x_j`.
pub fn qubo_value(q: &QuboProblem, x: &[u8]) -> f64 {
    let mut e = q.offset;
    for i in 0..q.n_vars {
        e += q.linear[i] * x[i] as f64;
    }
    for (&(i, j), &v) in &q.quadratic {
        e += v * (x[i] * x[j]) as f64;
    }
    e
}

pub fn bits_of(mask: u64, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((mask >> i) & 1) as u8).collect()
}

/// Category indices read MSB-first per site; `None` when a code is out of range.
pub fn decode_reference(space: &DesignSpace, bits: &[u8]) -> Option<Vec<usize>> {
    let mut pos = 0;
    let mut out = Vec::new();
    for site in space.sites() {
        let b = (usize::BITS - (site.cardinality - 1).leading_zeros()) as usize;
        let mut v = 0;
        for k in 0..b {
            v = v * 2 + bits[pos + k] as usize;
        }
        pos += b;
        if v >= site.cardinality {
            return None;
        }
        out.push(v);
    }
    Some(out)
}

pub fn planted(obj: &ObjectiveSpec) -> &PlantedFunction {
    match &obj.function {
        ObjectiveFunction::Synthetic(p) => p,
        _ => panic!("not a synthetic objective"),
    }
}

/// Noise-free planted value from the raw coefficient vector and cubic terms.
pub fn planted_value(p: &PlantedFunction, x: &[u8]) -> f64 {
    let f = features(x);
    let mut v: f64 = f.iter().zip(p.quadratic.values()).map(|(a, b)| a * b).sum();
    for &(a, b, c, w) in &p.cubic {
        v += w * (x[a] * x[b] * x[c]) as f64;
    }
    v
}

/// Minimizer of the planted function over all feasible points, by enumeration.
pub fn feasible_argmin(space: &DesignSpace, p: &PlantedFunction) -> (BitVector, f64) {
    let n = space.total_bits();
    let mut best: Option<(Vec<u8>, f64)> = None;
    for mask in 0..1u64 << n {
        let bits = bits_of(mask, n);
        if decode_reference(space, &bits).is_none() {
            continue;
        }
        let v = planted_value(p, &bits);
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((bits, v));
        }
    }
    let (bits, v) = best.expect("space has feasible points");
    (BitVector::from_bits(&bits), v)
}

/// Average ranks (ties share the mean rank), 1-based.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut m = k;
        while m + 1 < idx.len() && v[idx[m + 1]] == v[idx[k]] {
            m += 1;
        }
        let avg = (k + m) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=m] {
            r[i] = avg;
        }
        k = m + 1;
    }
    r
}

/// Spearman correlation as Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
