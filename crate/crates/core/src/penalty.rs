//! Penalty and precision matrices.
//!
//! * `P`, the first-order random-walk (ICAR) structure on `K` coefficients,
//!   with `bᵀPb = Σ (b_{k+1} - b_k)²`.
//! * `Q`, its adaptive generalisation with one precision per neighbouring
//!   pair and a corner term `ρ` on the last coefficient:
//!   `bᵀQb = Σ λ_k (b_{k+1} - b_k)² + ρ b_K²`.
//! * The hyper-prior structure on the log-precisions (same pattern as `P`).
//! * The lag-increasing ridge `scale · diag(1, …, K)` and the P-spline
//!   combination `λP + ρI`.
//!
//! Every builder assigns symmetric entries from the same value, so the
//! returned matrices are exactly symmetric.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DlmError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructureKind {
    RandomWalk,
    Adaptive,
    Hyper,
    RidgeDiag,
    PSplineCombo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureMatrix {
    entries: DMatrix<f64>,
    kind: StructureKind,
}

impl StructureMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let n = self.dim();
        assert_eq!(v.len(), n);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += v[i] * self.entries[(i, j)] * v[j];
            }
        }
        acc
    }
}

/// Pairwise smoothing precisions `λ_1..λ_{K-1}` and the corner term `ρ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionComponents {
    pub lambdas: Vec<f64>,
    pub rho: f64,
}

impl PrecisionComponents {
    pub fn new(lambdas: Vec<f64>, rho: f64) -> Result<Self> {
        let pc = Self { lambdas, rho };
        pc.validate()?;
        Ok(pc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(DlmError::InvalidPenalty("need at least one pairwise precision (K >= 2)".into()));
        }
        if let Some((i, l)) = self.lambdas.iter().enumerate().find(|(_, l)| !(**l > 0.0 && l.is_finite())) {
            return Err(DlmError::InvalidPenalty(format!("lambda[{i}] = {l} must be positive and finite")));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(DlmError::InvalidPenalty(format!("rho = {} must be non-negative", self.rho)));
        }
        Ok(())
    }

    /// Number of coefficients `K`.
    pub fn dim(&self) -> usize {
        self.lambdas.len() + 1
    }

    /// `bᵀQb` in O(K) without forming `Q`.
    pub fn quadratic_form(&self, b: &[f64]) -> f64 {
        assert_eq!(b.len(), self.dim());
        let diffs: f64 = self
            .lambdas
            .iter()
            .zip(b.windows(2))
            .map(|(l, w)| l * (w[1] - w[0]).powi(2))
            .sum();
        diffs + self.rho * b[b.len() - 1].powi(2)
    }

    /// `log det Q = log ρ + Σ log λ_k`. `Q = Dᵀ diag(λ, ρ) D` with `D` unit
    /// triangular (first differences, last row `e_K`), so the determinant is
    /// the product of the weights. Minus infinity when `ρ = 0`.
    pub fn log_det(&self) -> f64 {
        self.rho.ln() + self.lambdas.iter().map(|l| l.ln()).sum::<f64>()
    }
}

fn tridiagonal(diag: &[f64], off: &[f64], kind: StructureKind) -> StructureMatrix {
    let n = diag.len();
    let mut entries = DMatrix::zeros(n, n);
    for (i, &d) in diag.iter().enumerate() {
        entries[(i, i)] = d;
    }
    for (i, &o) in off.iter().enumerate() {
        entries[(i, i + 1)] = o;
        entries[(i + 1, i)] = o;
    }
    StructureMatrix { entries, kind }
}

fn rw1(k: usize, kind: StructureKind) -> StructureMatrix {
    let mut diag = vec![2.0; k];
    diag[0] = 1.0;
    diag[k - 1] = 1.0;
    tridiagonal(&diag, &vec![-1.0; k - 1], kind)
}

/// First-order random-walk structure matrix on `k` coefficients.
pub fn build_p(k: usize) -> Result<StructureMatrix> {
    if k < 2 {
        return Err(DlmError::InvalidPenalty(format!("random-walk structure needs K >= 2, got {k}")));
    }
    Ok(rw1(k, StructureKind::RandomWalk))
}

/// Adaptive precision matrix `Q(λ, ρ)`.
pub fn build_q(pc: &PrecisionComponents) -> Result<StructureMatrix> {
    pc.validate()?;
    let lam = &pc.lambdas;
    let k = pc.dim();
    let mut diag = vec![0.0; k];
    diag[0] = lam[0];
    for i in 1..k - 1 {
        diag[i] = lam[i - 1] + lam[i];
    }
    diag[k - 1] = lam[k - 2] + pc.rho;
    let off: Vec<f64> = lam.iter().map(|l| -l).collect();
    Ok(tridiagonal(&diag, &off, StructureKind::Adaptive))
}

/// Prior conditional mean and variance of `b_k` (0-based) given the other
/// coefficients, read off the tridiagonal `Q`.
pub fn conditional_moments_b(pc: &PrecisionComponents, b: &[f64], k: usize) -> Result<(f64, f64)> {
    pc.validate()?;
    let dim = pc.dim();
    if b.len() != dim {
        return Err(DlmError::DimensionMismatch(format!(
            "coefficient vector has length {}, precision has dimension {dim}",
            b.len()
        )));
    }
    if k >= dim {
        return Err(DlmError::IndexOutOfRange { index: k, dim });
    }
    let lam = &pc.lambdas;
    let left = if k > 0 { lam[k - 1] } else { 0.0 };
    let right = if k + 1 < dim { lam[k] } else { pc.rho };
    let qkk = left + right;
    let mut num = 0.0;
    if k > 0 {
        num += left * b[k - 1];
    }
    if k + 1 < dim {
        num += right * b[k + 1];
    }
    Ok((num / qkk, 1.0 / qkk))
}

/// Random-walk structure of size `m` for the log-precision hyper-prior.
pub fn build_k_hyper(m: usize) -> Result<StructureMatrix> {
    if m < 2 {
        return Err(DlmError::InvalidPenalty(format!("hyper-prior structure needs m >= 2, got {m}")));
    }
    Ok(rw1(m, StructureKind::Hyper))
}

/// `scale · diag(1, 2, …, K)`.
pub fn build_ridge_diag(k: usize, scale: f64) -> Result<StructureMatrix> {
    if k < 1 {
        return Err(DlmError::InvalidPenalty("ridge penalty needs K >= 1".into()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DlmError::InvalidPenalty(format!("ridge scale {scale} must be positive")));
    }
    let diag: Vec<f64> = (1..=k).map(|i| scale * i as f64).collect();
    Ok(tridiagonal(&diag, &[], StructureKind::RidgeDiag))
}

/// `λP + ρI`.
pub fn build_pspline_combo(k: usize, lambda: f64, rho: f64) -> Result<StructureMatrix> {
    if k < 2 {
        return Err(DlmError::InvalidPenalty(format!("P-spline penalty needs K >= 2, got {k}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(DlmError::InvalidPenalty(format!("lambda = {lambda} must be positive")));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(DlmError::InvalidPenalty(format!("rho = {rho} must be non-negative")));
    }
    let mut diag = vec![2.0 * lambda + rho; k];
    diag[0] = lambda + rho;
    diag[k - 1] = lambda + rho;
    Ok(tridiagonal(&diag, &vec![-lambda; k - 1], StructureKind::PSplineCombo))
}

/// Eigenvalues `2 - 2 cos(π i / K)`, `i = 0..K-1`, of the random-walk
/// structure matrix.
pub fn rw1_eigenvalues(k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| 2.0 - 2.0 * (std::f64::consts::PI * i as f64 / k as f64).cos())
        .collect()
}

/// `Σ (b_{k+1} - b_k)²`.
pub fn squared_differences(b: &[f64]) -> f64 {
    b.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}
