//! B-spline bases over the lag axis and the distributed-lag design matrix.
//!
//! A lag curve `β_0..β_p` is represented as `β_j = Σ_k B_k(j) b_k`. The knot
//! vectors are clamped on `[0, p]`, so exactly `K` basis functions are
//! non-zero on the lag range and the basis is a partition of unity there.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DlmError, Result};

/// Where the interior knots go.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnotPlacement {
    /// Equally spaced on `[0, p]`.
    Uniform,
    /// Equally spaced on the `log(1 + j)` scale, dense at short lags.
    Logarithmic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    /// Maximum lag.
    pub p: usize,
    /// Number of basis functions.
    pub k: usize,
    pub degree: usize,
    pub placement: KnotPlacement,
}

impl BasisSpec {
    pub fn new(p: usize, k: usize, degree: usize, placement: KnotPlacement) -> Result<Self> {
        let spec = Self { p, k, degree, placement };
        spec.validate()?;
        Ok(spec)
    }

    /// Cubic uniform basis with `K = floor(2 (p + 1) / 3)` functions.
    pub fn uniform_default(p: usize) -> Result<Self> {
        Self::new(p, default_basis_size(p), 3, KnotPlacement::Uniform)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(DlmError::InvalidBasis("maximum lag p must be at least 1".into()));
        }
        if self.k < self.degree + 1 {
            return Err(DlmError::InvalidBasis(format!(
                "K = {} basis functions cannot carry a degree-{} spline (need K >= {})",
                self.k,
                self.degree,
                self.degree + 1
            )));
        }
        Ok(())
    }

    pub fn n_interior(&self) -> usize {
        self.k - self.degree - 1
    }

    pub fn knots(&self) -> Result<Vec<f64>> {
        self.validate()?;
        match self.placement {
            KnotPlacement::Uniform => uniform_knots(self),
            KnotPlacement::Logarithmic => log_knots(self.p, self.n_interior() as i64, self.degree),
        }
    }

    /// Basis evaluated at the integer lags `0..=p`.
    pub fn lag_basis(&self) -> Result<BasisMatrix> {
        let knots = self.knots()?;
        let lags: Vec<f64> = (0..=self.p).map(|j| j as f64).collect();
        eval_basis(&knots, self.degree, &lags)
    }
}

/// `floor((2/3) (p + 1))`, the number of basis functions used for a lag range
/// of `p + 1` lags.
pub fn default_basis_size(p: usize) -> usize {
    2 * (p + 1) / 3
}

fn clamped(lo: f64, hi: f64, interior: impl IntoIterator<Item = f64>, degree: usize) -> Vec<f64> {
    let mut knots = vec![lo; degree + 1];
    knots.extend(interior);
    knots.extend(std::iter::repeat(hi).take(degree + 1));
    knots
}

/// Clamped knot vector on `[0, p]` with `K - degree - 1` equally spaced
/// interior knots.
pub fn uniform_knots(spec: &BasisSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if spec.placement != KnotPlacement::Uniform {
        return Err(DlmError::InvalidBasis("uniform_knots called on a non-uniform spec".into()));
    }
    let n_int = spec.n_interior();
    let p = spec.p as f64;
    let step = p / (n_int + 1) as f64;
    Ok(clamped(0.0, p, (1..=n_int).map(|i| i as f64 * step), spec.degree))
}

/// Clamped knot vector on `[0, p]` whose interior knots are equally spaced in
/// `log(1 + j)`: knot `i` sits at `(p + 1)^{i / (n + 1)} - 1`.
pub fn log_knots(p: usize, n_interior: i64, degree: usize) -> Result<Vec<f64>> {
    if n_interior < 0 {
        return Err(DlmError::InvalidBasis(format!(
            "number of interior knots must be non-negative, got {n_interior}"
        )));
    }
    if p < 1 {
        return Err(DlmError::InvalidBasis("maximum lag p must be at least 1".into()));
    }
    let n = n_interior as usize;
    let top = ((p + 1) as f64).ln();
    let interior = (1..=n).map(|i| ((i as f64 / (n + 1) as f64) * top).exp() - 1.0);
    Ok(clamped(0.0, p as f64, interior, degree))
}

/// Values `B_k(j)` of each basis function at each evaluation point.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisMatrix {
    entries: DMatrix<f64>,
}

impl BasisMatrix {
    pub fn from_matrix(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    /// The `(p+1) × (p+1)` identity, i.e. the unprojected lag model.
    pub fn identity(p: usize) -> Self {
        Self { entries: DMatrix::identity(p + 1, p + 1) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n_points(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.entries.ncols()
    }

    /// Lag curve `B b` for a coefficient vector `b`.
    pub fn curve(&self, coefs: &[f64]) -> Vec<f64> {
        assert_eq!(coefs.len(), self.n_basis(), "coefficient length must equal K");
        (0..self.n_points())
            .map(|j| (0..self.n_basis()).map(|k| self.entries[(j, k)] * coefs[k]).sum())
            .collect()
    }
}

/// Index `i` of the knot span `[t_i, t_{i+1})` containing `x`; the right end
/// of the range maps to the last non-empty span.
fn find_span(knots: &[f64], degree: usize, x: f64) -> usize {
    let n_basis = knots.len() - degree - 1;
    if x >= knots[n_basis] {
        // Last non-degenerate span.
        let mut i = n_basis - 1;
        while i > degree && knots[i] == knots[i + 1] {
            i -= 1;
        }
        return i;
    }
    let mut lo = degree;
    let mut hi = n_basis;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// The `degree + 1` basis functions that are non-zero on span `span`
/// (Cox–de Boor triangle).
fn nonzero_basis(knots: &[f64], degree: usize, span: usize, x: f64) -> Vec<f64> {
    let mut values = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    values[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { values[r] / denom };
            values[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        values[j] = saved;
    }
    values
}

/// Evaluates every B-spline of the given degree on `knots` at `points`.
pub fn eval_basis(knots: &[f64], degree: usize, points: &[f64]) -> Result<BasisMatrix> {
    if knots.len() < 2 * (degree + 1) {
        return Err(DlmError::InvalidBasis(format!(
            "{} knots cannot support a degree-{} basis",
            knots.len(),
            degree
        )));
    }
    if knots.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(DlmError::InvalidBasis("knot vector must be finite and non-decreasing".into()));
    }
    let n_basis = knots.len() - degree - 1;
    let lo = knots[degree];
    let hi = knots[n_basis];
    if !(hi > lo) {
        return Err(DlmError::InvalidBasis("knot range has zero width".into()));
    }
    let mut entries = DMatrix::zeros(points.len(), n_basis);
    for (row, &x) in points.iter().enumerate() {
        if !(x >= lo && x <= hi) {
            return Err(DlmError::PointOutOfRange { point: x, lo, hi });
        }
        let span = find_span(knots, degree, x);
        for (r, v) in nonzero_basis(knots, degree, span, x).into_iter().enumerate() {
            entries[(row, span - degree + r)] = v;
        }
    }
    Ok(BasisMatrix { entries })
}

/// Greville abscissae `(t_{k+1} + … + t_{k+degree}) / degree`.
pub fn greville(knots: &[f64], degree: usize) -> Vec<f64> {
    let n_basis = knots.len() - degree - 1;
    if degree == 0 {
        return (0..n_basis).map(|k| 0.5 * (knots[k] + knots[k + 1])).collect();
    }
    (0..n_basis)
        .map(|k| knots[k + 1..=k + degree].iter().sum::<f64>() / degree as f64)
        .collect()
}

/// Lag-projected design: row `r` corresponds to time `t = p + r` (0-based)
/// and holds `Σ_j x_{t-j} B_k(j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    entries: DMatrix<f64>,
    p: usize,
}

impl DesignMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn max_lag(&self) -> usize {
        self.p
    }

    pub fn n_rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.entries.ncols()
    }
}

/// The `(n - p) × (p + 1)` matrix whose row for time `t` is
/// `(x_t, x_{t-1}, …, x_{t-p})`.
pub fn lag_embedding(x: &[f64], p: usize) -> Result<DMatrix<f64>> {
    let n = x.len();
    if n <= p {
        return Err(DlmError::SeriesTooShort { n, p });
    }
    Ok(DMatrix::from_fn(n - p, p + 1, |r, j| x[p + r - j]))
}

pub fn build_design(x: &[f64], spec: &BasisSpec, basis: &BasisMatrix) -> Result<DesignMatrix> {
    if basis.n_points() != spec.p + 1 {
        return Err(DlmError::DimensionMismatch(format!(
            "basis has {} rows but the lag range 0..={} needs {}",
            basis.n_points(),
            spec.p,
            spec.p + 1
        )));
    }
    let embed = lag_embedding(x, spec.p)?;
    Ok(DesignMatrix {
        entries: embed * basis.matrix(),
        p: spec.p,
    })
}
