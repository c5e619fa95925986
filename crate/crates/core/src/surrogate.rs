//! Quadratic surrogate over binary inputs with a conjugate Gaussian posterior.
//!
//! Features are `1, x_1..x_N, x_1x_2, x_1x_3, ..., x_{N-1}x_N` on raw bits.
//! With prior `α ~ N(0, σ²_α I)` and likelihood `y ~ N(Xα, σ²_y I)` the
//! posterior is `N(μ, σ² A⁻¹)` where `A = XᵀX + λI`, `μ = A⁻¹Xᵀy`,
//! `λ = σ²_y/σ²_α` and `σ² = σ²_y`. Both hyperparameters are exposed directly.
//!
//! `A` is factored once as `A = RRᵀ` (R lower triangular). The mean comes
//! from two triangular solves and a posterior draw is `μ + σ R⁻ᵀ z`, whose
//! covariance is `σ² R⁻ᵀR⁻¹ = σ² A⁻¹`; the inverse is never formed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::Dataset;
use crate::encoding::BitVector;
use crate::error::{Error, Result};

/// Index layout of the quadratic feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureMap {
    n_bits: usize,
}

impl FeatureMap {
    pub fn new(n_bits: usize) -> Self {
        FeatureMap { n_bits }
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    /// `1 + N + N(N-1)/2`.
    pub fn len(&self) -> usize {
        let n = self.n_bits;
        1 + n + n * n.saturating_sub(1) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn linear_index(&self, i: usize) -> usize {
        debug_assert!(i < self.n_bits);
        1 + i
    }

    /// Feature index of `x_i x_j`, `i < j`.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n_bits);
        let n = self.n_bits;
        1 + n + i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Inverse of [`FeatureMap::pair_index`].
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n_bits;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    fn check(&self, x: &BitVector) -> Result<()> {
        if x.len() != self.n_bits {
            return Err(Error::LengthMismatch {
                expected: self.n_bits,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Indices of the nonzero features of `x`, ascending.
    pub fn active_features(&self, x: &BitVector) -> Vec<usize> {
        let ones: Vec<usize> = x.ones().collect();
        let mut active = Vec::with_capacity(1 + ones.len() * (ones.len() + 1) / 2);
        active.push(0);
        active.extend(ones.iter().map(|&i| self.linear_index(i)));
        for (a, &i) in ones.iter().enumerate() {
            for &j in &ones[a + 1..] {
                active.push(self.pair_index(i, j));
            }
        }
        active
    }
}

pub fn design_row(fm: &FeatureMap, x: &BitVector) -> Result<Vec<u8>> {
    fm.check(x)?;
    let mut row = vec![0u8; fm.len()];
    for k in fm.active_features(x) {
        row[k] = 1;
    }
    Ok(row)
}

/// Surrogate coefficients `(α₀, α_i, α_ij)` in feature order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSample {
    fm: FeatureMap,
    values: Vec<f64>,
}

impl CoefficientSample {
    pub fn new(n_bits: usize, values: Vec<f64>) -> Result<Self> {
        let fm = FeatureMap::new(n_bits);
        if values.len() != fm.len() {
            return Err(Error::LengthMismatch {
                expected: fm.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(
                "coefficient vector has non-finite entries".into(),
            ));
        }
        Ok(CoefficientSample { fm, values })
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.fm
    }

    pub fn n_bits(&self) -> usize {
        self.fm.n_bits()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn constant(&self) -> f64 {
        self.values[0]
    }

    pub fn linear(&self, i: usize) -> f64 {
        self.values[self.fm.linear_index(i)]
    }

    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.values[self.fm.pair_index(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// FNV-1a over the IEEE bits of every coefficient.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for byte in v.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Surrogate value `α₀ + Σ α_i x_i + Σ_{i<j} α_ij x_i x_j`.
pub fn predict(alpha: &CoefficientSample, x: &BitVector) -> Result<f64> {
    alpha.fm.check(x)?;
    let ones: Vec<usize> = x.ones().collect();
    let mut value = alpha.constant();
    for (a, &i) in ones.iter().enumerate() {
        value += alpha.linear(i);
        for &j in &ones[a + 1..] {
            value += alpha.pair(i, j);
        }
    }
    Ok(value)
}

#[derive(Debug, Clone)]
pub struct PosteriorModel {
    fm: FeatureMap,
    mean: Vec<f64>,
    /// Lower Cholesky factor `R` of the precision matrix `XᵀX + λI`.
    precision_factor: DMatrix<f64>,
    sigma2: f64,
    lambda: f64,
    n_obs: usize,
}

impl PosteriorModel {
    pub fn feature_map(&self) -> FeatureMap {
        self.fm
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn mean_sample(&self) -> CoefficientSample {
        CoefficientSample {
            fm: self.fm,
            values: self.mean.clone(),
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn precision_factor(&self) -> &DMatrix<f64> {
        &self.precision_factor
    }

    /// Same fit, different sampling variance.
    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        Ok(PosteriorModel {
            sigma2,
            ..self.clone()
        })
    }

    /// Maps standard normal draws `z` to `R⁻ᵀ z`, a draw with covariance `A⁻¹`.
    pub fn covariance_factor_apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        let z = DVector::from_column_slice(z);
        self.precision_factor
            .tr_solve_lower_triangular(&z)
            .map(|w| w.as_slice().to_vec())
            .ok_or_else(|| Error::NumericalFailure("singular precision factor".into()))
    }

    /// Dense `σ² (XᵀX + λI)⁻¹`. For diagnostics only.
    pub fn covariance(&self) -> DMatrix<f64> {
        let p = self.fm.len();
        let r = &self.precision_factor;
        let r_inv = r
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .expect("factor has a positive diagonal");
        r_inv.transpose() * r_inv * self.sigma2
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::param("sigma2", format!("must be >= 0, got {sigma2}")));
    }
    Ok(())
}

/// Full refit of the ridge posterior on every observation in `data`.
pub fn fit_posterior(data: &Dataset, lambda: f64, sigma2: f64) -> Result<PosteriorModel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
    }
    check_sigma2(sigma2)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let fm = FeatureMap::new(data.n_bits());
    let p = fm.len();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for row in data.rows() {
        let active = fm.active_features(&row.x);
        for (a, &k) in active.iter().enumerate() {
            xty[k] += row.y;
            // lower triangle only; Cholesky reads nothing else
            for &l in &active[..=a] {
                gram[(k, l)] += 1.0;
            }
        }
    }
    for k in 0..p {
        gram[(k, k)] += lambda;
        for l in k + 1..p {
            gram[(k, l)] = gram[(l, k)];
        }
    }
    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
        Error::NumericalFailure(format!(
            "XᵀX + λI is not positive definite (λ = {lambda}); increase λ"
        ))
    })?;
    let mean = chol.solve(&xty);
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(
            "posterior mean has non-finite entries".into(),
        ));
    }
    Ok(PosteriorModel {
        fm,
        mean: mean.as_slice().to_vec(),
        precision_factor: chol.unpack(),
        sigma2,
        lambda,
        n_obs: data.len(),
    })
}

/// Thompson draw `μ + √σ² R⁻ᵀ z`. With `σ² = 0` the mean is returned as is.
pub fn sample_coefficients<R: Rng + ?Sized>(
    post: &PosteriorModel,
    rng: &mut R,
) -> Result<CoefficientSample> {
    if post.sigma2 == 0.0 {
        return Ok(post.mean_sample());
    }
    let z: Vec<f64> = (0..post.fm.len())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let w = post.covariance_factor_apply(&z)?;
    let scale = post.sigma2.sqrt();
    let values = post
        .mean
        .iter()
        .zip(w)
        .map(|(m, w)| m + scale * w)
        .collect();
    CoefficientSample::new(post.fm.n_bits(), values)
}

/// In-sample coefficient of determination of the posterior-mean predictor.
pub fn r_squared(post: &PosteriorModel, data: &Dataset) -> Result<f64> {
    let alpha = post.mean_sample();
    let predictions = data
        .rows()
        .iter()
        .map(|r| predict(&alpha, &r.x))
        .collect::<Result<Vec<f64>>>()?;
    r_squared_of(data.ys().collect::<Vec<_>>().as_slice(), &predictions)
}

/// `1 - SS_res / SS_tot`.
pub fn r_squared_of(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: observed.len(),
            actual: predicted.len(),
        });
    }
    let first = observed.first().copied().ok_or(Error::EmptyDataset)?;
    if observed.iter().all(|&y| y == first) {
        return Err(Error::DegenerateTarget);
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(y, f)| (y - f).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bv(bits: &[u8]) -> BitVector {
        BitVector::from_bits(bits)
    }

    #[test]
    fn feature_count_and_pair_order() {
        let fm = FeatureMap::new(20);
        assert_eq!(fm.len(), 211);
        let fm = FeatureMap::new(4);
        let idx: Vec<usize> = fm.pairs().map(|(i, j)| fm.pair_index(i, j)).collect();
        assert_eq!(idx, (5..11).collect::<Vec<_>>());
        assert_eq!(fm.pair_index(0, 1), 5);
        assert_eq!(fm.pair_index(2, 3), 10);
    }

    #[test]
    fn design_row_examples() {
        let fm = FeatureMap::new(3);
        assert_eq!(design_row(&fm, &bv(&[0, 0, 0])).unwrap(), vec![1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(design_row(&fm, &bv(&[1, 1, 0])).unwrap(), vec![1, 1, 1, 0, 1, 0, 0]);
        assert_eq!(design_row(&FeatureMap::new(20), &BitVector::zeros(20)).unwrap().len(), 211);
        assert!(matches!(
            design_row(&fm, &bv(&[1, 1])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn single_zero_row_shrinks_constant() {
        let mut data = Dataset::new(5);
        data.push(BitVector::zeros(5), 2.5, 0).unwrap();
        for lambda in [1e-2, 1.0, 3.0] {
            let post = fit_posterior(&data, lambda, 0.0).unwrap();
            assert!((post.mean()[0] - 2.5 / (1.0 + lambda)).abs() < 1e-12);
            assert!(post.mean()[1..].iter().all(|&m| m == 0.0));
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let mut data = Dataset::new(2);
        data.push(bv(&[0, 1]), 1.0, 0).unwrap();
        assert!(fit_posterior(&data, 0.0, 0.0).is_err());
        assert!(fit_posterior(&data, -1.0, 0.0).is_err());
        assert!(fit_posterior(&data, 1e-2, -1e-3).is_err());
        assert!(matches!(
            fit_posterior(&Dataset::new(2), 1e-2, 0.0),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn zero_variance_sample_is_the_mean() {
        let mut data = Dataset::new(3);
        data.push(bv(&[0, 1, 1]), 1.0, 0).unwrap();
        data.push(bv(&[1, 1, 0]), -0.5, 0).unwrap();
        let post = fit_posterior(&data, 1e-2, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_coefficients(&post, &mut rng).unwrap();
        assert_eq!(s.values(), post.mean());
    }

    #[test]
    fn seeded_samples_repeat() {
        let mut data = Dataset::new(3);
        data.push(bv(&[0, 1, 1]), 1.0, 0).unwrap();
        data.push(bv(&[1, 1, 0]), -0.5, 0).unwrap();
        let post = fit_posterior(&data, 1e-2, 4e-3).unwrap();
        let a = sample_coefficients(&post, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_coefficients(&post, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), post.mean());
    }

    #[test]
    fn r_squared_definitions() {
        let y = [1.0, 2.0, 4.0];
        assert_eq!(r_squared_of(&y, &y).unwrap(), 1.0);
        let m = 7.0 / 3.0;
        assert!(r_squared_of(&y, &[m, m, m]).unwrap().abs() < 1e-15);
        assert!(matches!(
            r_squared_of(&[2.0, 2.0], &[1.0, 3.0]),
            Err(Error::DegenerateTarget)
        ));
    }

    #[test]
    fn predict_examples() {
        let n = 4;
        let p = FeatureMap::new(n).len();
        let mut v = vec![0.0; p];
        v[0] = 1.75;
        let alpha = CoefficientSample::new(n, v.clone()).unwrap();
        assert_eq!(predict(&alpha, &BitVector::zeros(n)).unwrap(), 1.75);

        let mut unit = vec![0.0; p];
        unit[FeatureMap::new(n).pair_index(0, 1)] = 1.0;
        let alpha = CoefficientSample::new(n, unit).unwrap();
        assert_eq!(predict(&alpha, &bv(&[1, 1, 0, 0])).unwrap(), 1.0);
        assert_eq!(predict(&alpha, &bv(&[1, 0, 1, 1])).unwrap(), 0.0);

        assert!(CoefficientSample::new(n, vec![0.0; p - 1]).is_err());
    }
}
