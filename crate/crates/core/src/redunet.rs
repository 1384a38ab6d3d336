//! AR-ReduNet: a white-box network whose layers are gradient-ascent steps
//! on the coding-rate-reduction objective, with each log-det regularizer
//! `alpha` chosen so the approximate rate vanishes at the trace.
//!
//! Setting [`Mode::FixedAlphaOne`] gives the original ReduNet (`alpha = 1`
//! everywhere); both modes share every formula and code path.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::rd::{find_alpha_star, DEFAULT_DELTA, DEFAULT_MAX_ITERATIONS};
use crate::spectral::{eigendecompose, fix_sign, symmetrize, CovarianceMatrix};

/// Lower limit for an adaptive `alpha` whose covariance is singular.
pub const ALPHA_FLOOR: f64 = 1e-12;

/// Column norms must equal one within this tolerance.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `alpha` solved by bisection for every covariance at every layer.
    Adaptive,
    /// `alpha = 1`, the baseline ReduNet.
    FixedAlphaOne,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Adaptive => "ar",
            Mode::FixedAlphaOne => "fixed",
        }
    }
}

/// `n × m` features, every column on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    /// Wraps columns that are already unit-norm.
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        for (i, col) in columns.column_iter().enumerate() {
            if (col.norm() - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::param(format!("feature column {i} is not unit-norm")));
            }
        }
        Ok(Self(columns))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn count(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Features whose columns satisfy `keep`.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> DMatrix<f64> {
        let idx: Vec<usize> = (0..self.count()).filter(|&i| keep(i)).collect();
        self.0.select_columns(&idx)
    }
}

fn normalize_columns(
    mut m: DMatrix<f64>,
    on_zero: impl Fn(usize) -> Error,
) -> Result<FeatureMatrix> {
    for (i, mut col) in m.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(on_zero(i));
        }
        col /= norm;
    }
    Ok(FeatureMatrix(m))
}

/// Projects every sample onto the unit sphere.
pub fn init_features(data: &DMatrix<f64>) -> Result<FeatureMatrix> {
    normalize_columns(data.clone(), Error::ZeroColumn)
}

/// Class membership weights `pi[j][i]`, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipSet {
    weights: Vec<Vec<f64>>,
}

impl MembershipSet {
    pub fn one_hot(labels: &[usize], class_count: usize) -> Result<Self> {
        let mut weights = vec![vec![0.0; labels.len()]; class_count];
        for (i, &label) in labels.iter().enumerate() {
            if label >= class_count {
                return Err(Error::param(format!(
                    "label {label} of sample {i} is not below the class count {class_count}"
                )));
            }
            weights[label][i] = 1.0;
        }
        Ok(Self { weights })
    }

    /// Checks non-negativity and that each sample's weights sum to one.
    pub fn from_weights(weights: Vec<Vec<f64>>) -> Result<Self> {
        let m = weights.first().map_or(0, Vec::len);
        if weights.iter().any(|w| w.len() != m) {
            return Err(Error::param("membership rows have different lengths"));
        }
        for i in 0..m {
            let mut total = 0.0;
            for w in &weights {
                if w[i].is_nan() || w[i] < 0.0 {
                    return Err(Error::param(format!("negative membership for sample {i}")));
                }
                total += w[i];
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!(
                    "memberships of sample {i} sum to {total}, not 1"
                )));
            }
        }
        Ok(Self { weights })
    }

    pub fn class_count(&self) -> usize {
        self.weights.len()
    }

    pub fn sample_count(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn weights(&self, class: usize) -> &[f64] {
        &self.weights[class]
    }

    /// `tr(Pi_j)`, summed in sample order.
    pub fn trace(&self, class: usize) -> f64 {
        self.weights[class].iter().sum()
    }

    pub fn is_one_hot(&self) -> bool {
        (0..self.sample_count()).all(|i| {
            let ones = self.weights.iter().filter(|w| w[i] == 1.0).count();
            let zeros = self.weights.iter().filter(|w| w[i] == 0.0).count();
            ones == 1 && zeros + 1 == self.weights.len()
        })
    }
}

/// Per-class part of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassOperator {
    pub alpha: f64,
    pub compression: DMatrix<f64>,
}

/// Parameters of one layer: `alpha`, `E`, and `(alpha_j, C_j)` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub index: usize,
    pub alpha: f64,
    pub expansion: DMatrix<f64>,
    pub classes: Vec<ClassOperator>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epsilon_sq: f64,
    pub eta: f64,
    /// Softmax sharpness for test-time memberships.
    pub lambda_u: f64,
    pub delta: f64,
    pub max_iterations: usize,
    pub layers: usize,
    pub mode: Mode,
    /// Fraction of singular-value energy kept per class subspace.
    pub ns_energy: f64,
    /// Fixed subspace rank, overriding `ns_energy` when set.
    pub ns_rank: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epsilon_sq: 0.5,
            eta: 0.5,
            lambda_u: 500.0,
            delta: DEFAULT_DELTA,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            layers: 1000,
            mode: Mode::Adaptive,
            ns_energy: 0.95,
            ns_rank: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_sq > 0.0 && self.epsilon_sq <= 1.0) {
            return Err(Error::param(format!(
                "epsilon^2 must lie in (0, 1], got {}",
                self.epsilon_sq
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::param(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.lambda_u > 0.0 && self.lambda_u.is_finite()) {
            return Err(Error::param(format!(
                "lambda_u must be positive, got {}",
                self.lambda_u
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::param(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.ns_energy > 0.0 && self.ns_energy <= 1.0) {
            return Err(Error::param(format!(
                "subspace energy threshold must lie in (0, 1], got {}",
                self.ns_energy
            )));
        }
        if self.ns_rank == Some(0) {
            return Err(Error::param("subspace rank override must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork {
    pub dim: usize,
    pub class_count: usize,
    pub layers: Vec<LayerParams>,
    /// Per class, an `n × r_t` orthonormal basis.
    pub ns_bases: Vec<DMatrix<f64>>,
    pub config: TrainConfig,
}

impl TrainedNetwork {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: TrainedNetwork,
    pub features: FeatureMatrix,
    /// Objective before every layer plus once after the last.
    pub objective_trace: Vec<f64>,
}

/// `Z diag(w) Z^T`, built the same way for the whole set and for each class.
fn weighted_gram(z: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut scaled = z.clone();
    for (mut col, &w) in scaled.column_iter_mut().zip(weights) {
        col *= w;
    }
    symmetrize(&scaled * z.transpose())
}

/// `alpha` for the covariance `gram / weight`.
fn solve_alpha(gram: &DMatrix<f64>, weight: f64, mode: Mode, delta: f64, max_iterations: usize) -> Result<f64> {
    match mode {
        Mode::FixedAlphaOne => Ok(1.0),
        Mode::Adaptive => {
            let cov = CovarianceMatrix::new(gram / weight)?;
            let spectrum = eigendecompose(&cov)?.spectrum;
            let alpha = find_alpha_star(&spectrum, delta, max_iterations)?.alpha_star;
            Ok(if spectrum.is_singular() {
                alpha.max(ALPHA_FLOOR)
            } else {
                alpha
            })
        }
    }
}

/// `lead * (alpha I + n / (weight eps^2) gram)^{-1}`, symmetrized.
fn regularized_inverse(gram: &DMatrix<f64>, weight: f64, lead: f64, alpha: f64, epsilon_sq: f64) -> Result<DMatrix<f64>> {
    let n = gram.nrows();
    let inner = n as f64 / (weight * epsilon_sq);
    let mut m = gram * inner;
    for i in 0..n {
        m[(i, i)] += alpha;
    }
    let chol = Cholesky::new(m).ok_or(Error::SingularRegularization { alpha })?;
    Ok(symmetrize(chol.inverse() * lead))
}

struct Settings {
    epsilon_sq: f64,
    mode: Mode,
    delta: f64,
    max_iterations: usize,
}

impl From<&TrainConfig> for Settings {
    fn from(c: &TrainConfig) -> Self {
        Self {
            epsilon_sq: c.epsilon_sq,
            mode: c.mode,
            delta: c.delta,
            max_iterations: c.max_iterations,
        }
    }
}

fn operator(z: &DMatrix<f64>, weights: &[f64], s: &Settings) -> Result<(f64, DMatrix<f64>)> {
    let (n, m) = z.shape();
    let trace: f64 = weights.iter().sum();
    let gram = weighted_gram(z, weights);
    let alpha = solve_alpha(&gram, trace, s.mode, s.delta, s.max_iterations)?;
    let lead = n as f64 / (m as f64 * s.epsilon_sq);
    let inverse = regularized_inverse(&gram, trace, lead, alpha, s.epsilon_sq)?;
    Ok((alpha, inverse))
}

fn check_epsilon(epsilon_sq: f64) -> Result<()> {
    if epsilon_sq > 0.0 && epsilon_sq.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("epsilon^2 must be positive, got {epsilon_sq}")))
    }
}

/// `(alpha, E)` with `E = n/(m eps^2) (alpha I + n/(m eps^2) Z Z^T)^{-1}`.
pub fn expansion_matrix(z: &FeatureMatrix, epsilon_sq: f64, mode: Mode, delta: f64) -> Result<(f64, DMatrix<f64>)> {
    check_epsilon(epsilon_sq)?;
    let ones = vec![1.0; z.count()];
    let s = Settings {
        epsilon_sq,
        mode,
        delta,
        max_iterations: DEFAULT_MAX_ITERATIONS,
    };
    operator(z.as_matrix(), &ones, &s)
}

/// `(alpha_j, C_j)` per class, with
/// `C_j = n/(m eps^2) (alpha_j I + n/(tr(Pi_j) eps^2) Z Pi_j Z^T)^{-1}`.
pub fn compression_matrices(
    z: &FeatureMatrix,
    memberships: &MembershipSet,
    epsilon_sq: f64,
    mode: Mode,
    delta: f64,
) -> Result<Vec<ClassOperator>> {
    check_epsilon(epsilon_sq)?;
    let s = Settings {
        epsilon_sq,
        mode,
        delta,
        max_iterations: DEFAULT_MAX_ITERATIONS,
    };
    class_operators(z, memberships, &s)
}

fn class_operators(z: &FeatureMatrix, memberships: &MembershipSet, s: &Settings) -> Result<Vec<ClassOperator>> {
    if memberships.sample_count() != z.count() {
        return Err(Error::DimensionMismatch {
            expected: z.count(),
            got: memberships.sample_count(),
        });
    }
    (0..memberships.class_count())
        .map(|j| {
            if memberships.trace(j) <= 0.0 {
                return Err(Error::EmptyClass(j));
            }
            let (alpha, compression) = operator(z.as_matrix(), memberships.weights(j), s)?;
            Ok(ClassOperator { alpha, compression })
        })
        .collect()
}

/// One step `Z + eta E Z - eta sum_j C_j Z Pi_j`, then back to the sphere.
pub fn layer_update(
    z: &FeatureMatrix,
    expansion: &DMatrix<f64>,
    classes: &[ClassOperator],
    memberships: &MembershipSet,
    eta: f64,
    layer: usize,
) -> Result<FeatureMatrix> {
    let zm = z.as_matrix();
    if expansion.nrows() != z.dim() {
        return Err(Error::DimensionMismatch {
            expected: z.dim(),
            got: expansion.nrows(),
        });
    }
    if classes.len() != memberships.class_count() || memberships.sample_count() != z.count() {
        return Err(Error::param("membership shape does not match layer"));
    }
    let mut step = expansion * zm;
    for (j, class) in classes.iter().enumerate() {
        let cz = &class.compression * zm;
        for (i, w) in memberships.weights(j).iter().enumerate() {
            if *w != 0.0 {
                let mut col = step.column_mut(i);
                col.axpy(-*w, &cz.column(i), 1.0);
            }
        }
    }
    let next = zm + step * eta;
    normalize_columns(next, |sample| Error::CollapsedFeature { layer, sample })
}

/// Regularizers for the whole set and for each class.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphas {
    pub expansion: f64,
    pub compression: Vec<f64>,
}

/// Solves every `alpha` the objective needs at the current features.
pub fn solve_alphas(z: &FeatureMatrix, memberships: &MembershipSet, mode: Mode, delta: f64) -> Result<Alphas> {
    let zm = z.as_matrix();
    let m = z.count() as f64;
    let expansion = solve_alpha(&weighted_gram(zm, &vec![1.0; z.count()]), m, mode, delta, DEFAULT_MAX_ITERATIONS)?;
    let compression = (0..memberships.class_count())
        .map(|j| {
            let tr = memberships.trace(j);
            if tr <= 0.0 {
                return Err(Error::EmptyClass(j));
            }
            solve_alpha(&weighted_gram(zm, memberships.weights(j)), tr, mode, delta, DEFAULT_MAX_ITERATIONS)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Alphas {
        expansion,
        compression,
    })
}

/// `ln det(alpha I + scale * gram)` from the eigenvalues of `gram`.
fn log_det_regularized(gram: &DMatrix<f64>, alpha: f64, scale: f64) -> Result<f64> {
    let spectrum = eigendecompose(&CovarianceMatrix::new(gram.clone())?)?.spectrum;
    Ok(spectrum
        .eigenvalues()
        .iter()
        .map(|&mu| (alpha + scale * mu).ln())
        .sum())
}

/// Rate reduction: whole-set coding rate minus the weighted class rates.
pub fn objective(z: &FeatureMatrix, memberships: &MembershipSet, epsilon_sq: f64, alphas: &Alphas) -> Result<f64> {
    check_epsilon(epsilon_sq)?;
    if memberships.sample_count() != z.count() || alphas.compression.len() != memberships.class_count() {
        return Err(Error::param("objective inputs have inconsistent shapes"));
    }
    let zm = z.as_matrix();
    let (n, m) = (z.dim() as f64, z.count() as f64);
    let gram = weighted_gram(zm, &vec![1.0; z.count()]);
    let whole = 0.5 * log_det_regularized(&gram, alphas.expansion, n / (m * epsilon_sq))?;
    let mut classes = 0.0;
    for (j, &alpha_j) in alphas.compression.iter().enumerate() {
        let tr = memberships.trace(j);
        if tr <= 0.0 {
            return Err(Error::EmptyClass(j));
        }
        let gram_j = weighted_gram(zm, memberships.weights(j));
        classes += tr / (2.0 * m) * log_det_regularized(&gram_j, alpha_j, n / (tr * epsilon_sq))?;
    }
    Ok(whole - classes)
}

/// Softmax of `-lambda_u ||C_j z_i||` over classes, per sample.
pub fn estimate_membership(z: &FeatureMatrix, compressions: &[&DMatrix<f64>], lambda_u: f64) -> Result<MembershipSet> {
    if lambda_u.is_nan() || lambda_u <= 0.0 {
        return Err(Error::param(format!("lambda_u must be positive, got {lambda_u}")));
    }
    let k = compressions.len();
    let m = z.count();
    let norms: Vec<Vec<f64>> = compressions
        .iter()
        .map(|c| {
            let cz = *c * z.as_matrix();
            cz.column_iter().map(|col| col.norm()).collect()
        })
        .collect();
    let mut weights = vec![vec![0.0; m]; k];
    let mut scores = vec![0.0; k];
    for i in 0..m {
        for j in 0..k {
            scores[j] = -lambda_u * norms[j][i];
        }
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - top).exp();
            total += *s;
        }
        for j in 0..k {
            weights[j][i] = scores[j] / total;
        }
    }
    Ok(MembershipSet { weights })
}

fn class_counts(labels: &[usize]) -> Vec<usize> {
    let k = labels.iter().max().map_or(0, |&l| l + 1);
    let mut counts = vec![0; k];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Runs the layer recursion on labelled data and fits the class subspaces.
pub fn train(data: &DMatrix<f64>, labels: &[usize], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (n, m) = data.shape();
    if n < 2 {
        return Err(Error::param(format!("feature dimension must be at least 2, got {n}")));
    }
    if labels.len() != m {
        return Err(Error::CountMismatch {
            images: m,
            labels: labels.len(),
        });
    }
    let counts = class_counts(labels);
    if counts.is_empty() {
        return Err(Error::InsufficientSamples { needed: 2, got: 0 });
    }
    for (j, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::EmptyClass(j));
        }
        if c < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: c });
        }
    }
    let k = counts.len();
    let memberships = MembershipSet::one_hot(labels, k)?;
    let settings = Settings::from(config);

    let mut z = init_features(data)?;
    let mut layers = Vec::with_capacity(config.layers);
    let mut trace = Vec::with_capacity(config.layers + 1);
    let ones = vec![1.0; m];

    for index in 0..config.layers {
        let step = || -> Result<(LayerParams, f64, FeatureMatrix)> {
            let (alpha, expansion) = operator(z.as_matrix(), &ones, &settings)?;
            let classes = class_operators(&z, &memberships, &settings)?;
            let alphas = Alphas {
                expansion: alpha,
                compression: classes.iter().map(|c| c.alpha).collect(),
            };
            let value = objective(&z, &memberships, config.epsilon_sq, &alphas)?;
            let next = layer_update(&z, &expansion, &classes, &memberships, config.eta, index)?;
            Ok((
                LayerParams {
                    index,
                    alpha,
                    expansion,
                    classes,
                },
                value,
                next,
            ))
        };
        match step() {
            Ok((params, value, next)) => {
                layers.push(params);
                trace.push(value);
                z = next;
            }
            Err(source) => {
                return Err(Error::TrainingAborted {
                    layer: index,
                    objective_trace: trace,
                    source: Box::new(source),
                })
            }
        }
    }

    let final_alphas = solve_alphas(&z, &memberships, config.mode, config.delta)?;
    trace.push(objective(&z, &memberships, config.epsilon_sq, &final_alphas)?);

    let ns_bases = fit_subspaces(&z, labels, k, config.ns_energy, config.ns_rank)?;
    Ok(TrainOutcome {
        network: TrainedNetwork {
            dim: n,
            class_count: k,
            layers,
            ns_bases,
            config: *config,
        },
        features: z,
        objective_trace: trace,
    })
}

/// Left singular vectors of each class's features, truncated to the smallest
/// rank whose squared singular values reach `energy` of the total (or to a
/// fixed rank).
pub fn fit_subspaces(
    features: &FeatureMatrix,
    labels: &[usize],
    class_count: usize,
    energy: f64,
    rank: Option<usize>,
) -> Result<Vec<DMatrix<f64>>> {
    (0..class_count)
        .map(|t| {
            let zt = features.select(|i| labels[i] == t);
            if zt.ncols() == 0 {
                return Err(Error::EmptyClass(t));
            }
            Ok(leading_left_singular(zt, energy, rank))
        })
        .collect()
}

fn leading_left_singular(zt: DMatrix<f64>, energy: f64, rank: Option<usize>) -> DMatrix<f64> {
    let n = zt.nrows();
    let svd = SVD::new(zt, true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let available = order.len();
    let r = match rank {
        Some(r) => r.min(available),
        None => {
            let total: f64 = order.iter().map(|&i| sv[i] * sv[i]).sum();
            let target = energy * total - 1e-12 * total;
            let mut acc = 0.0;
            let mut r = available;
            for (count, &i) in order.iter().enumerate() {
                acc += sv[i] * sv[i];
                if acc >= target {
                    r = count + 1;
                    break;
                }
            }
            r
        }
    };
    let mut basis = DMatrix::zeros(n, r);
    for (dst, &src) in order.iter().take(r).enumerate() {
        let mut col: DVector<f64> = u.column(src).clone_owned();
        fix_sign(col.as_mut_slice());
        basis.set_column(dst, &col);
    }
    basis
}

/// Inference: replays the stored layers with softmax memberships.
pub fn forward(network: &TrainedNetwork, data: &DMatrix<f64>) -> Result<FeatureMatrix> {
    forward_inspect(network, data, |_, _| {})
}

/// As [`forward`], handing each layer's estimated memberships to `inspect`.
pub fn forward_inspect(
    network: &TrainedNetwork,
    data: &DMatrix<f64>,
    mut inspect: impl FnMut(usize, &MembershipSet),
) -> Result<FeatureMatrix> {
    if data.nrows() != network.dim {
        return Err(Error::DimensionMismatch {
            expected: network.dim,
            got: data.nrows(),
        });
    }
    let mut z = init_features(data)?;
    for layer in &network.layers {
        let compressions: Vec<&DMatrix<f64>> = layer.classes.iter().map(|c| &c.compression).collect();
        let memberships = estimate_membership(&z, &compressions, network.config.lambda_u)?;
        inspect(layer.index, &memberships);
        z = layer_update(&z, &layer.expansion, &layer.classes, &memberships, network.config.eta, layer.index)?;
    }
    Ok(z)
}

/// `||(I - U_t U_t^T) z||^2` for every basis and column, `[t][i]`.
pub fn subspace_residuals(bases: &[DMatrix<f64>], features: &FeatureMatrix) -> Vec<Vec<f64>> {
    let z = features.as_matrix();
    bases
        .iter()
        .map(|u| {
            let proj = u * u.tr_mul(z);
            (z - proj).column_iter().map(|c| c.norm_squared()).collect()
        })
        .collect()
}

/// Nearest-subspace class per column; ties go to the lowest class index.
pub fn ns_classify(network: &TrainedNetwork, features: &FeatureMatrix) -> Vec<usize> {
    classify_with_bases(&network.ns_bases, features)
}

pub fn classify_with_bases(bases: &[DMatrix<f64>], features: &FeatureMatrix) -> Vec<usize> {
    let residuals = subspace_residuals(bases, features);
    (0..features.count())
        .map(|i| {
            let mut best = 0;
            for t in 1..residuals.len() {
                if residuals[t][i] < residuals[best][i] {
                    best = t;
                }
            }
            best
        })
        .collect()
}

/// Fraction of `predicted` equal to `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / predicted.len() as f64
}

#[derive(Debug, Clone)]
pub struct SimilarityReport {
    /// `Z^T Z`.
    pub gram: DMatrix<f64>,
    /// Mean `|cos|` per class pair; within-class means skip self-pairs and
    /// are NaN for singleton classes.
    pub class_means: DMatrix<f64>,
}

pub fn cosine_similarity_report(features: &FeatureMatrix, labels: &[usize]) -> Result<SimilarityReport> {
    if labels.len() != features.count() {
        return Err(Error::CountMismatch {
            images: features.count(),
            labels: labels.len(),
        });
    }
    let z = features.as_matrix();
    let gram = z.tr_mul(z);
    let k = labels.iter().max().map_or(0, |&l| l + 1);
    let mut sums = DMatrix::<f64>::zeros(k, k);
    let mut counts = DMatrix::<f64>::zeros(k, k);
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if i != j {
                sums[(labels[i], labels[j])] += gram[(i, j)].abs();
                counts[(labels[i], labels[j])] += 1.0;
            }
        }
    }
    let class_means = sums.zip_map(&counts, |s, c| if c > 0.0 { s / c } else { f64::NAN });
    Ok(SimilarityReport { gram, class_means })
}
