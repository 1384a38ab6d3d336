//! Covariance estimation, symmetric eigendecomposition and PCA.
//!
//! Data matrices are `p × m` with one sample per column. Eigenvalues are
//! always reported in descending order and clamped at zero.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Maximum tolerated `|a_ij - a_ji|` for a covariance matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Eigenvalues at or below `RANK_TOLERANCE * lambda_max` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Negative eigenvalues down to `-NEGATIVE_SLACK * lambda_max` are clamped to
/// zero; anything more negative is rejected.
pub const NEGATIVE_SLACK: f64 = 1e-9;

/// A symmetric positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    /// Wraps `matrix` after checking that it is square and symmetric within
    /// [`SYMMETRY_TOLERANCE`]. The stored matrix is exactly symmetrized.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(Error::param("covariance matrix must be non-empty"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("covariance matrix has non-finite entries"));
        }
        let asym = max_asymmetry(&matrix);
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym,
            });
        }
        Ok(Self(symmetrize(matrix)))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Copies the average of each off-diagonal pair into both positions.
pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    m
}

/// Descending eigenvalue list with derived statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    trace: f64,
    lambda_min: f64,
    lambda_max: f64,
    lambda_mean: f64,
    rank: usize,
    condition_number: f64,
}

impl Spectrum {
    /// Builds a spectrum from arbitrary-order eigenvalues. Values must be
    /// finite and non-negative.
    pub fn new(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::param("spectrum must contain at least one eigenvalue"));
        }
        if let Some(bad) = eigenvalues.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::param(format!(
                "eigenvalues must be finite and non-negative, got {bad}"
            )));
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let n = eigenvalues.len();
        let trace: f64 = eigenvalues.iter().sum();
        let lambda_max = eigenvalues[0];
        let lambda_min = eigenvalues[n - 1];
        let tol = lambda_max * RANK_TOLERANCE;
        let rank = eigenvalues.iter().take_while(|&&v| v > tol).count();
        let condition_number = if lambda_max > 0.0 && lambda_min > tol {
            lambda_max / lambda_min
        } else {
            f64::INFINITY
        };
        Ok(Self {
            eigenvalues,
            trace,
            lambda_min,
            lambda_max,
            lambda_mean: trace / n as f64,
            rank,
            condition_number,
        })
    }

    /// Clamps values in `[-NEGATIVE_SLACK * max, 0)` to zero before building.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        let max = values.iter().cloned().fold(0.0_f64, f64::max);
        let floor = -NEGATIVE_SLACK * max;
        let mut clamped = Vec::with_capacity(values.len());
        for v in values {
            if !v.is_finite() {
                return Err(Error::param("non-finite eigenvalue"));
            }
            if v < 0.0 {
                if v < floor {
                    return Err(Error::NotPositiveSemidefinite { eigenvalue: v });
                }
                clamped.push(0.0);
            } else {
                clamped.push(v);
            }
        }
        Self::new(clamped)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn lambda_mean(&self) -> f64 {
        self.lambda_mean
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `lambda_max / lambda_min`, or `+inf` for a singular spectrum.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.lambda_max * RANK_TOLERANCE
    }

    pub fn is_singular(&self) -> bool {
        self.rank < self.eigenvalues.len()
    }

    /// Eigenvalues above the rank tolerance, descending.
    pub fn nonzero(&self) -> &[f64] {
        &self.eigenvalues[..self.rank]
    }

    /// Smallest eigenvalue above the rank tolerance.
    pub fn nonzero_lambda_min(&self) -> Option<f64> {
        self.nonzero().last().copied()
    }
}

/// Eigenvalues plus the matching orthonormal eigenvectors (one per column).
#[derive(Debug, Clone)]
pub struct Eigen {
    pub spectrum: Spectrum,
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(
            self.spectrum.eigenvalues(),
        ));
        &self.vectors * lambda * self.vectors.transpose()
    }
}

/// Symmetric eigendecomposition, sorted descending, with each eigenvector's
/// largest-magnitude entry made positive.
pub fn eigendecompose(cov: &CovarianceMatrix) -> Result<Eigen> {
    let n = cov.dim();
    let decomposition = SymmetricEigen::new(cov.as_matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        decomposition.eigenvalues[b]
            .total_cmp(&decomposition.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let raw: Vec<f64> = order.iter().map(|&i| decomposition.eigenvalues[i]).collect();
    let spectrum = Spectrum::from_raw(raw)?;

    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = decomposition.eigenvectors.column(src).clone_owned();
        fix_sign(col.as_mut_slice());
        vectors.set_column(dst, &col);
    }
    Ok(Eigen { spectrum, vectors })
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v.get(pivot).is_some_and(|&p| p < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Per-row means of a `p × m` data matrix.
pub fn row_means(data: &DMatrix<f64>) -> DVector<f64> {
    let m = data.ncols() as f64;
    DVector::from_iterator(data.nrows(), data.row_iter().map(|r| r.sum() / m))
}

/// Unbiased `(1/(m-1)) Y'Y'^T` estimator, with `Y'` the optionally
/// row-centered data.
pub fn estimate_covariance(data: &DMatrix<f64>, centered: bool) -> Result<CovarianceMatrix> {
    let m = data.ncols();
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let mut y = data.clone();
    if centered {
        let mean = row_means(data);
        for mut col in y.column_iter_mut() {
            col -= &mean;
        }
    }
    let yt = y.transpose();
    let scatter = yt.tr_mul(&yt) / (m - 1) as f64;
    CovarianceMatrix::new(symmetrize(scatter))
}

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaSelector {
    Dim(usize),
    Ratio(f64),
}

/// A fitted PCA projection `Ũ^T (y - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub input_dim: usize,
    pub output_dim: usize,
    /// `input_dim × output_dim`, orthonormal columns.
    pub components: DMatrix<f64>,
    pub component_eigenvalues: Vec<f64>,
    pub cumulative_variance_ratio: f64,
    /// Trace of the full covariance the components were drawn from.
    pub total_variance: f64,
    pub mean: DVector<f64>,
}

/// Fits PCA on row-centered data.
pub fn fit_pca(data: &DMatrix<f64>, selector: PcaSelector) -> Result<PcaModel> {
    fit_pca_with(data, selector, true)
}

pub fn fit_pca_with(data: &DMatrix<f64>, selector: PcaSelector, centered: bool) -> Result<PcaModel> {
    let (p, m) = data.shape();
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let cov = estimate_covariance(data, centered)?;
    let eigen = eigendecompose(&cov)?;
    let mean = if centered {
        row_means(data)
    } else {
        DVector::zeros(p)
    };
    let max_dim = if centered { p.min(m - 1) } else { p.min(m) };
    PcaModel::from_eigen(&eigen, mean, selector, max_dim)
}

/// Smallest count whose cumulative eigenvalue mass reaches `ratio * trace`.
pub fn components_for_ratio(spectrum: &Spectrum, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::param(format!(
            "cumulative variance ratio must lie in (0, 1], got {ratio}"
        )));
    }
    let trace = spectrum.trace();
    if trace <= 0.0 {
        return Err(Error::DegenerateSource);
    }
    // Relative slack absorbs rounding in the running sum.
    let target = ratio * trace - 1e-12 * trace;
    let mut acc = 0.0;
    for (i, v) in spectrum.eigenvalues().iter().enumerate() {
        acc += v;
        if acc >= target {
            return Ok(i + 1);
        }
    }
    Ok(spectrum.dim())
}

impl PcaModel {
    /// Keeps the leading eigenvectors of an existing decomposition.
    /// `max_dim` bounds an explicit `Dim` selector.
    pub fn from_eigen(
        eigen: &Eigen,
        mean: DVector<f64>,
        selector: PcaSelector,
        max_dim: usize,
    ) -> Result<Self> {
        let p = eigen.vectors.nrows();
        if mean.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: mean.len(),
            });
        }
        let n = match selector {
            PcaSelector::Dim(n) => {
                if n == 0 || n > max_dim {
                    return Err(Error::param(format!(
                        "target dimension {n} outside [1, {max_dim}]"
                    )));
                }
                n
            }
            PcaSelector::Ratio(r) => components_for_ratio(&eigen.spectrum, r)?,
        };
        let total = eigen.spectrum.trace();
        let kept: Vec<f64> = eigen.spectrum.eigenvalues()[..n].to_vec();
        let kept_sum: f64 = kept.iter().sum();
        let ratio = if total > 0.0 { kept_sum / total } else { 1.0 };
        Ok(Self {
            input_dim: p,
            output_dim: n,
            components: eigen.vectors.columns(0, n).clone_owned(),
            component_eigenvalues: kept,
            cumulative_variance_ratio: ratio,
            total_variance: total,
            mean,
        })
    }

    /// `lambda_1 / lambda_n` over the retained components.
    pub fn retained_condition_number(&self) -> f64 {
        let first = self.component_eigenvalues[0];
        let last = self.component_eigenvalues[self.output_dim - 1];
        if last > first * RANK_TOLERANCE {
            first / last
        } else {
            f64::INFINITY
        }
    }

    pub fn transform(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        pca_transform(self, data)
    }
}

/// Projects `p × m` data onto the model's components.
pub fn pca_transform(model: &PcaModel, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if data.nrows() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            got: data.nrows(),
        });
    }
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &model.mean;
    }
    Ok(model.components.tr_mul(&centered))
}

/// One entry of a PCA dimension sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub dim: usize,
    pub condition_number: f64,
    pub variance_ratio: f64,
}

/// Retained condition number and variance ratio for every `n` in `1..=max_dim`.
pub fn condition_sweep(spectrum: &Spectrum, max_dim: usize) -> Vec<SweepPoint> {
    let vals = spectrum.eigenvalues();
    let total = spectrum.trace();
    let tol = spectrum.rank_tolerance();
    let mut acc = 0.0;
    (1..=max_dim.min(vals.len()))
        .map(|n| {
            acc += vals[n - 1];
            let last = vals[n - 1];
            SweepPoint {
                dim: n,
                condition_number: if last > tol { vals[0] / last } else { f64::INFINITY },
                variance_ratio: if total > 0.0 { acc / total } else { 1.0 },
            }
        })
        .collect()
}
