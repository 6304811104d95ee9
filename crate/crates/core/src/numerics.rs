//! Dense symmetric positive definite linear algebra and the random number
//! stream used by every stochastic routine in the crate.
//!
//! Matrices here are small (K is at most a few dozen basis functions at the
//! scales of interest), so everything is dense and stored in `nalgebra`
//! containers. The Cholesky factorization is written out by hand so that the
//! positive-definiteness threshold is explicit: a pivot at or below
//! `1e-12 * max(diag(A))` is reported as [`DlmError::NotPositiveDefinite`].

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{DlmError, Result};

/// Relative pivot tolerance used by [`cholesky`].
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L z = rhs` in place.
    fn forward(&self, rhs: &mut DVector<f64>) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = rhs[i];
            for j in 0..i {
                acc -= self.lower[(i, j)] * rhs[j];
            }
            rhs[i] = acc / self.lower[(i, i)];
        }
    }

    /// Solves `Lᵀ z = rhs` in place.
    fn backward(&self, rhs: &mut DVector<f64>) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for j in (i + 1)..n {
                acc -= self.lower[(j, i)] * rhs[j];
            }
            rhs[i] = acc / self.lower[(i, i)];
        }
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.dim() {
            return Err(DlmError::DimensionMismatch(format!(
                "factor has dimension {}, right-hand side has length {}",
                self.dim(),
                rhs.len()
            )));
        }
        let mut out = rhs.clone();
        self.forward(&mut out);
        self.backward(&mut out);
        Ok(out)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.dim() {
            return Err(DlmError::DimensionMismatch(format!(
                "factor has dimension {}, right-hand side has {} rows",
                self.dim(),
                rhs.nrows()
            )));
        }
        let mut out = rhs.clone();
        for mut col in out.column_iter_mut() {
            let mut v = DVector::from_iterator(col.len(), col.iter().copied());
            self.forward(&mut v);
            self.backward(&mut v);
            col.copy_from(&v);
        }
        Ok(out)
    }

    /// `L Lᵀ`, used to check reconstruction.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }
}

/// Cholesky factorization of a symmetric matrix. Only the lower triangle of
/// `a` is read.
pub fn cholesky(a: &DMatrix<f64>) -> Result<SpdFactor> {
    if !a.is_square() {
        return Err(DlmError::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let max_diag = a.diagonal().iter().fold(0.0_f64, |m, &d| m.max(d));
    let tol = PIVOT_TOLERANCE * max_diag;
    let mut lower = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= lower[(j, k)] * lower[(j, k)];
        }
        if !(pivot > tol) {
            return Err(DlmError::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let ljj = pivot.sqrt();
        lower[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= lower[(i, k)] * lower[(j, k)];
            }
            lower[(i, j)] = acc / ljj;
        }
    }
    Ok(SpdFactor { lower })
}

pub fn solve_spd(factor: &SpdFactor, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    factor.solve(rhs)
}

/// One exact draw from `N(P⁻¹ h, P⁻¹)` given precision `P` and linear term `h`.
pub fn sample_gaussian_precision(
    rng: &mut RngStream,
    precision: &DMatrix<f64>,
    linear_term: &DVector<f64>,
) -> Result<DVector<f64>> {
    let factor = cholesky(precision)?;
    sample_gaussian_factored(rng, &factor, linear_term)
}

/// As [`sample_gaussian_precision`] with the factor already computed.
pub fn sample_gaussian_factored(
    rng: &mut RngStream,
    factor: &SpdFactor,
    linear_term: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = factor.dim();
    let mut mean = factor.solve(linear_term)?;
    let mut z = DVector::from_iterator(n, (0..n).map(|_| rng.standard_normal()));
    // Lᵀ u = z gives u ~ N(0, (L Lᵀ)⁻¹).
    factor.backward(&mut z);
    mean += z;
    Ok(mean)
}

/// Effective dimension `tr[X (XᵀX + S)⁻¹ Xᵀ]`, evaluated as the K×K trace
/// `tr[(XᵀX + S)⁻¹ XᵀX]`.
pub fn effective_dimension(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let gram = x.transpose() * x;
    effective_dimension_gram(&gram, s)
}

/// [`effective_dimension`] from a precomputed Gram matrix `XᵀX`.
pub fn effective_dimension_gram(gram: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<f64> {
    if gram.shape() != s.shape() {
        return Err(DlmError::DimensionMismatch(format!(
            "XᵀX is {:?} but the penalty is {:?}",
            gram.shape(),
            s.shape()
        )));
    }
    let factor = cholesky(&(gram + s))?;
    let solved = factor.solve_matrix(gram)?;
    Ok(solved.trace())
}

/// Deterministic random stream backed by ChaCha8, whose output is identical
/// across platforms for a given seed.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream keyed by a master seed and a path of indices
    /// (scenario, model, replicate, ...). Scheduling never enters the seed.
    pub fn derive(master: u64, path: &[u64]) -> Self {
        Self::new(derive_seed(master, path))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits in [0, 1).
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Gamma draw with shape/rate parameterisation.
    pub fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        Gamma::new(shape, 1.0 / rate)
            .expect("gamma shape and rate must be positive and finite")
            .sample(&mut self.inner)
    }

    /// Inverse-Gamma draw with density ∝ x^{-shape-1} exp(-rate / x).
    pub fn inverse_gamma(&mut self, shape: f64, rate: f64) -> f64 {
        rate / self.gamma(shape, 1.0)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Platform-stable seed mixing.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Sample quantile with linear interpolation between order statistics
/// (the usual "type 7" rule). `sorted` must be sorted ascending.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
