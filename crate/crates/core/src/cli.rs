//! Command implementations behind the `rdalpha` binary.
//!
//! Every command takes a [`RunConfig`] (TOML file merged under flags) and
//! returns a report struct; `main` only prints and maps errors to the exit
//! status.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::{self, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model_file;
use crate::rd::{
    self, alpha_star_upper_bound, corollary1_bounds, find_alpha_star, rd_curve, theorem2_bounds, AlphaStar,
    RdCurve, Variant, DEFAULT_GRID_FLOOR,
};
use crate::redunet::{self, Mode, TrainConfig, TrainOutcome};
use crate::spectral::{
    condition_sweep, eigendecompose, estimate_covariance, fit_pca, CovarianceMatrix, PcaModel, PcaSelector,
    Spectrum, SweepPoint,
};

pub const DEFAULT_GRID_POINTS: usize = 200;
/// Slack when checking `lower <= observed <= upper`.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "rdalpha", version, about = "Gaussian rate-distortion approximations and AR-ReduNet")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Tabulate R, R0, R1 and R_alpha* over a distortion grid.
    Rdcurve,
    /// Solve alpha* by bisection.
    Alpha,
    /// Audit the approximation error bounds.
    Bounds,
    /// Fit PCA and report dimension and condition number.
    Pca,
    /// Train AR-ReduNet (or the alpha = 1 baseline).
    Train,
    /// Evaluate a trained model with the nearest-subspace classifier.
    Eval,
    /// Write a synthetic union-of-subspaces dataset.
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Ar,
    Fixed,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ar => Mode::Adaptive,
            ModeArg::Fixed => Mode::FixedAlphaOne,
        }
    }
}

/// Flags and config-file keys share these names; flags win.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// TOML file with any of these settings.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Spectrum literal, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub eigenvalues: Option<Vec<f64>>,
    /// Covariance matrix file (comma-delimited rows).
    #[arg(long, global = true)]
    pub cov: Option<PathBuf>,
    /// Samples: IDX image file or CSV with one sample per row.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Labels: IDX label file or one integer per line.
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,
    /// Distortion grid size.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Evenly spaced instead of log-spaced grid.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub linear_grid: Option<bool>,
    /// Bisection tolerance on |R_alpha(tr)|.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub eps2: Option<f64>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub lambda_u: Option<f64>,
    #[arg(long, global = true)]
    pub layers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, global = true)]
    pub pca_dim: Option<usize>,
    #[arg(long, global = true)]
    pub pca_ratio: Option<f64>,
    /// Energy kept by each nearest-subspace basis.
    #[arg(long, global = true)]
    pub ns_energy: Option<f64>,
    /// Fixed nearest-subspace rank.
    #[arg(long, global = true)]
    pub ns_rank: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Main output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report rates in bits instead of nats.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub bits: Option<bool>,
    /// Trained model file (eval).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Objective trace table (train).
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
    /// Class-pair cosine similarity table (eval).
    #[arg(long, global = true)]
    pub similarity: Option<PathBuf>,
    /// Condition-number sweep table (pca).
    #[arg(long, global = true)]
    pub sweep: Option<PathBuf>,
    /// Number of random spectra to audit (bounds).
    #[arg(long, global = true)]
    pub batch: Option<usize>,

    /// Synthetic data: number of classes.
    #[arg(long, global = true)]
    pub classes: Option<usize>,
    /// Synthetic data: ambient dimension.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Synthetic data: dimension of each class subspace.
    #[arg(long, global = true)]
    pub subspace_dim: Option<usize>,
    /// Synthetic data: training samples per class.
    #[arg(long, global = true)]
    pub per_class: Option<usize>,
    /// Synthetic data: held-out samples per class.
    #[arg(long, global = true)]
    pub test_per_class: Option<usize>,
    /// Synthetic data: noise standard deviation.
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    /// Synthetic data: orthogonal class subspaces.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub orthogonal: Option<bool>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

macro_rules! fill {
    ($cfg:ident; $($field:ident = $value:expr),* $(,)?) => {
        $( if $cfg.$field.is_none() { $cfg.$field = Some($value); } )*
    };
}

impl RunConfig {
    /// Reads the config file (if any) and lays the flags over it.
    pub fn load(flags: RunConfig) -> Result<RunConfig> {
        let mut base = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str::<RunConfig>(&text).map_err(|e| Error::format(path, e.to_string()))?
            }
            None => RunConfig::default(),
        };
        base.merge(&flags);
        base.config = flags.config;
        Ok(base)
    }

    /// Values set in `top` replace those in `self`.
    pub fn merge(&mut self, top: &RunConfig) {
        overlay!(self, top; eigenvalues, cov, data, labels, grid, linear_grid, delta, eps2, eta, lambda_u,
            layers, mode, pca_dim, pca_ratio, ns_energy, ns_rank, seed, out, bits, model, trace, similarity,
            sweep, batch, classes, dim, subspace_dim, per_class, test_per_class, noise, orthogonal);
    }

    /// Every defaulted setting made explicit.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        let t = TrainConfig::default();
        let s = default_synthetic();
        fill!(c;
            grid = DEFAULT_GRID_POINTS,
            linear_grid = false,
            delta = t.delta,
            eps2 = t.epsilon_sq,
            eta = t.eta,
            lambda_u = t.lambda_u,
            layers = t.layers,
            mode = ModeArg::Ar,
            ns_energy = t.ns_energy,
            seed = s.seed,
            bits = false,
        );
        if self.data.is_none() {
            fill!(c;
                classes = s.class_count,
                dim = s.dim,
                subspace_dim = s.subspace_dim,
                per_class = s.per_class,
                test_per_class = DEFAULT_TEST_PER_CLASS,
                noise = s.noise,
                orthogonal = s.orthogonal,
            );
        }
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unprintable config: {e}\n"))
    }

    fn delta(&self) -> f64 {
        self.delta.unwrap_or(rd::DEFAULT_DELTA)
    }

    fn bits(&self) -> bool {
        self.bits.unwrap_or(false)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epsilon_sq: self.eps2.unwrap_or(d.epsilon_sq),
            eta: self.eta.unwrap_or(d.eta),
            lambda_u: self.lambda_u.unwrap_or(d.lambda_u),
            delta: self.delta(),
            max_iterations: d.max_iterations,
            layers: self.layers.unwrap_or(d.layers),
            mode: self.mode.map_or(d.mode, Mode::from),
            ns_energy: self.ns_energy.unwrap_or(d.ns_energy),
            ns_rank: self.ns_rank.or(d.ns_rank),
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let d = default_synthetic();
        SyntheticSpec {
            class_count: self.classes.unwrap_or(d.class_count),
            dim: self.dim.unwrap_or(d.dim),
            subspace_dim: self.subspace_dim.unwrap_or(d.subspace_dim),
            per_class: self.per_class.unwrap_or(d.per_class) + self.test_per_class(),
            noise: self.noise.unwrap_or(d.noise),
            seed: self.seed(),
            orthogonal: self.orthogonal.unwrap_or(d.orthogonal),
        }
    }

    fn test_per_class(&self) -> usize {
        self.test_per_class.unwrap_or(DEFAULT_TEST_PER_CLASS)
    }

    fn pca_selector(&self) -> Result<Option<PcaSelector>> {
        match (self.pca_dim, self.pca_ratio) {
            (Some(_), Some(_)) => Err(Error::param("give either --pca-dim or --pca-ratio, not both")),
            (Some(n), None) => Ok(Some(PcaSelector::Dim(n))),
            (None, Some(r)) => Ok(Some(PcaSelector::Ratio(r))),
            (None, None) => Ok(None),
        }
    }
}

pub const DEFAULT_TEST_PER_CLASS: usize = 100;

/// Three orthogonal planes in R^20 with light noise.
pub fn default_synthetic() -> SyntheticSpec {
    SyntheticSpec {
        class_count: 3,
        dim: 20,
        subspace_dim: 2,
        per_class: 100,
        noise: 0.05,
        seed: 0,
        orthogonal: true,
    }
}

/// Samples from an IDX file (by magic number) or a CSV.
pub fn load_dataset(data: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let mut head = [0u8; 4];
    let is_idx = std::fs::File::open(data)
        .and_then(|mut f| std::io::Read::read_exact(&mut f, &mut head))
        .map(|_| u32::from_be_bytes(head) == data_io::IDX_IMAGE_MAGIC)
        .unwrap_or(false);
    if is_idx {
        let labels = labels.ok_or_else(|| Error::param("IDX images need a --labels file"))?;
        data_io::load_idx(data, labels)
    } else {
        data_io::load_csv(data, labels)
    }
}

/// The spectrum from `--eigenvalues`, `--cov` or the covariance of `--data`.
pub fn spectrum_from(cfg: &RunConfig) -> Result<Spectrum> {
    if let Some(values) = &cfg.eigenvalues {
        return Spectrum::new(values.clone());
    }
    if let Some(path) = &cfg.cov {
        let cov = CovarianceMatrix::new(data_io::read_matrix_rows(path)?)?;
        return Ok(eigendecompose(&cov)?.spectrum);
    }
    if let Some(path) = &cfg.data {
        let ds = load_dataset(path, cfg.labels.as_deref())?;
        let cov = estimate_covariance(&ds.samples, true)?;
        return Ok(eigendecompose(&cov)?.spectrum);
    }
    Err(Error::param("no spectrum source: give --eigenvalues, --cov or --data"))
}

fn grid_for(cfg: &RunConfig, trace: f64) -> Result<Vec<f64>> {
    let points = cfg.grid.unwrap_or(DEFAULT_GRID_POINTS);
    if points == 0 {
        return Err(Error::param("grid size must be positive"));
    }
    Ok(if cfg.linear_grid.unwrap_or(false) {
        rd::linear_grid(trace, points)
    } else {
        rd::log_grid(trace, points, DEFAULT_GRID_FLOOR)
    })
}

fn unit(bits: bool) -> (&'static str, f64) {
    if bits {
        ("bits", std::f64::consts::LN_2)
    } else {
        ("nats", 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct RdCurveReport {
    pub curve: RdCurve,
    pub dim: usize,
    pub trace: f64,
    pub condition_number: f64,
    pub bits: bool,
}

impl RdCurveReport {
    pub const COLUMNS: [&'static str; 5] = ["D", "R", "R0", "R1", "Ralpha_star"];

    /// Rows in the table's unit; `None` cells become NaN.
    pub fn table_rows(&self) -> Vec<Vec<f64>> {
        let (_, scale) = unit(self.bits);
        self.curve
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.distortion];
                row.extend(Variant::ALL.iter().map(|&v| r.get(v).map_or(f64::NAN, |x| x / scale)));
                row
            })
            .collect()
    }
}

impl fmt::Display for RdCurveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, scale) = unit(self.bits);
        write!(f, "n = {}, trace = {}, kappa = {}", self.dim, self.trace, self.condition_number)?;
        if let Some(a) = &self.curve.alpha_star {
            write!(f, ", alpha* = {}", a.alpha_star)?;
        }
        for v in [Variant::R0, Variant::R1, Variant::RAlphaStar] {
            if let Some(e) = self.curve.max_abs_error(v) {
                write!(f, ", maxerr({}) = {} {name}", v.column_name(), e / scale)?;
            }
        }
        if self.curve.r0_divergent {
            write!(f, "; R0 is -inf (singular spectrum)")?;
        }
        Ok(())
    }
}

pub fn cmd_rdcurve(cfg: &RunConfig) -> Result<RdCurveReport> {
    let spectrum = spectrum_from(cfg)?;
    let grid = grid_for(cfg, spectrum.trace())?;
    let curve = rd_curve(&spectrum, &grid, &Variant::ALL, cfg.delta())?;
    let report = RdCurveReport {
        curve,
        dim: spectrum.dim(),
        trace: spectrum.trace(),
        condition_number: spectrum.condition_number(),
        bits: cfg.bits(),
    };
    if let Some(out) = &cfg.out {
        data_io::write_table(out, &RdCurveReport::COLUMNS, &report.table_rows())?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct AlphaReport {
    pub result: AlphaStar,
    /// `1 - lambda_min / lambda_mean`.
    pub upper_bracket: f64,
    pub condition_number: f64,
}

impl fmt::Display for AlphaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.result;
        writeln!(f, "alpha* = {}", r.alpha_star)?;
        writeln!(f, "residual = {:e}", r.residual)?;
        writeln!(f, "iterations = {}", r.iterations)?;
        writeln!(f, "delta = {:e}", r.delta)?;
        writeln!(f, "kappa = {}", self.condition_number)?;
        write!(f, "bracket = [0, {}]", self.upper_bracket)
    }
}

pub fn cmd_alpha(cfg: &RunConfig) -> Result<AlphaReport> {
    let spectrum = spectrum_from(cfg)?;
    let result = find_alpha_star(&spectrum, cfg.delta(), rd::DEFAULT_MAX_ITERATIONS)?;
    Ok(AlphaReport {
        result,
        upper_bracket: alpha_star_upper_bound(&spectrum),
        condition_number: spectrum.condition_number(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub spectrum: usize,
    pub distortion: f64,
    pub observed: f64,
    pub theorem2: (f64, f64),
    pub corollary1: (f64, f64),
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub rows: Vec<BoundsRow>,
    pub spectra: usize,
    pub failures: usize,
}

impl BoundsReport {
    pub const COLUMNS: [&'static str; 8] = [
        "spectrum",
        "D",
        "observed",
        "theorem2_lower",
        "theorem2_upper",
        "corollary1_lower",
        "corollary1_upper",
        "pass",
    ];

    pub fn records(&self) -> Vec<Vec<String>> {
        let f = data_io::format_float;
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.spectrum.to_string(),
                    f(r.distortion),
                    f(r.observed),
                    f(r.theorem2.0),
                    f(r.theorem2.1),
                    f(r.corollary1.0),
                    f(r.corollary1.1),
                    if r.pass { "pass" } else { "FAIL" }.to_string(),
                ]
            })
            .collect()
    }
}

impl fmt::Display for BoundsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} spectra, {} rows, {} failures",
            self.spectra,
            self.rows.len(),
            self.failures
        )
    }
}

/// Strictly positive eigenvalues, log-uniform over four decades, `1..=max_dim` of them.
pub fn random_spectrum(rng: &mut impl Rng, max_dim: usize) -> Spectrum {
    let n = rng.gen_range(1..=max_dim);
    let values = (0..n).map(|_| 10f64.powf(rng.gen_range(-3.0..1.0))).collect();
    Spectrum::new(values).expect("positive eigenvalues")
}

fn audit_spectrum(index: usize, spectrum: &Spectrum, grid: &[f64], delta: f64, rows: &mut Vec<BoundsRow>) -> Result<()> {
    let a = find_alpha_star(spectrum, delta, rd::DEFAULT_MAX_ITERATIONS)?.alpha_star;
    for &d in grid {
        let t2 = theorem2_bounds(spectrum, a, d)?;
        let c1 = corollary1_bounds(spectrum, a, d)?;
        rows.push(BoundsRow {
            spectrum: index,
            distortion: d,
            observed: t2.observed,
            theorem2: (t2.lower, t2.upper),
            corollary1: (c1.lower, c1.upper),
            pass: t2.holds(BOUND_SLACK) && c1.holds(BOUND_SLACK),
        });
    }
    Ok(())
}

/// Audits the given spectrum, or `--batch` random ones seeded by `--seed`.
pub fn cmd_bounds(cfg: &RunConfig) -> Result<BoundsReport> {
    let mut rows = Vec::new();
    let spectra = match cfg.batch {
        Some(count) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
            for i in 0..count {
                let s = random_spectrum(&mut rng, 20);
                let grid = grid_for(cfg, s.trace())?;
                audit_spectrum(i, &s, &grid, cfg.delta(), &mut rows)?;
            }
            count
        }
        None => {
            let s = spectrum_from(cfg)?;
            let grid = grid_for(cfg, s.trace())?;
            audit_spectrum(0, &s, &grid, cfg.delta(), &mut rows)?;
            1
        }
    };
    let failures = rows.iter().filter(|r| !r.pass).count();
    let report = BoundsReport {
        rows,
        spectra,
        failures,
    };
    if let Some(out) = &cfg.out {
        data_io::write_records(out, &BoundsReport::COLUMNS, &report.records())?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct PcaReport {
    pub model: PcaModel,
    pub input_condition_number: f64,
    pub retained_condition_number: f64,
    pub sweep: Vec<SweepPoint>,
}

impl fmt::Display for PcaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p = {}, n = {}, P = {}, kappa before = {}, kappa after = {}",
            self.model.input_dim,
            self.model.output_dim,
            self.model.cumulative_variance_ratio,
            self.input_condition_number,
            self.retained_condition_number
        )
    }
}

pub fn cmd_pca(cfg: &RunConfig) -> Result<PcaReport> {
    let selector = cfg
        .pca_selector()?
        .ok_or_else(|| Error::param("pca needs --pca-dim or --pca-ratio"))?;
    let (model, spectrum) = if let Some(path) = &cfg.data {
        let ds = load_dataset(path, cfg.labels.as_deref())?;
        let model = fit_pca(&ds.samples, selector)?;
        let spectrum = eigendecompose(&estimate_covariance(&ds.samples, true)?)?.spectrum;
        (model, spectrum)
    } else if let Some(path) = &cfg.cov {
        let cov = CovarianceMatrix::new(data_io::read_matrix_rows(path)?)?;
        let eigen = eigendecompose(&cov)?;
        let p = cov.dim();
        let model = PcaModel::from_eigen(&eigen, nalgebra::DVector::zeros(p), selector, p)?;
        (model, eigen.spectrum)
    } else {
        return Err(Error::param("pca needs --data or --cov"));
    };
    let sweep = if cfg.sweep.is_some() {
        condition_sweep(&spectrum, spectrum.rank().max(1))
    } else {
        Vec::new()
    };
    if let Some(path) = &cfg.sweep {
        let rows: Vec<Vec<f64>> = sweep
            .iter()
            .map(|s| vec![s.dim as f64, s.condition_number, s.variance_ratio])
            .collect();
        data_io::write_table(path, &["n", "kappa", "P"], &rows)?;
    }
    if let Some(out) = &cfg.out {
        model_file::save_pca(out, &model)?;
    }
    Ok(PcaReport {
        retained_condition_number: model.retained_condition_number(),
        input_condition_number: spectrum.condition_number(),
        model,
        sweep,
    })
}

/// Training and held-out sets named by the config: files, or synthetic
/// data split per class when no `--data` is given.
fn datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.data {
        Some(path) => {
            let ds = load_dataset(path, cfg.labels.as_deref())?;
            Ok((ds.clone(), ds))
        }
        None => {
            let spec = cfg.synthetic_spec();
            let all = data_io::generate_synthetic(&spec)?;
            all.split_per_class(spec.per_class - cfg.test_per_class())
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub outcome: TrainOutcome,
    pub pca: Option<PcaModel>,
    pub train_accuracy: f64,
    pub model_path: Option<PathBuf>,
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let net = &self.outcome.network;
        let trace = &self.outcome.objective_trace;
        write!(
            f,
            "mode = {}, layers = {}, n = {}, k = {}, objective {} -> {}, train accuracy = {}",
            net.config.mode.name(),
            net.layer_count(),
            net.dim,
            net.class_count,
            trace.first().copied().unwrap_or(f64::NAN),
            trace.last().copied().unwrap_or(f64::NAN),
            self.train_accuracy
        )?;
        let ranks: Vec<usize> = net.ns_bases.iter().map(|b| b.ncols()).collect();
        write!(f, ", subspace ranks = {ranks:?}")?;
        if let Some(p) = &self.model_path {
            write!(f, ", model = {}", p.display())?;
        }
        Ok(())
    }
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    let (train, _) = datasets(cfg)?;
    let labels = train.require_labels()?.to_vec();
    let pca = match cfg.pca_selector()? {
        Some(sel) => Some(fit_pca(&train.samples, sel)?),
        None => None,
    };
    let samples = match &pca {
        Some(p) => p.transform(&train.samples)?,
        None => train.samples.clone(),
    };
    let outcome = redunet::train(&samples, &labels, &cfg.train_config())?;
    let predicted = redunet::ns_classify(&outcome.network, &outcome.features);
    let train_accuracy = redunet::accuracy(&predicted, &labels);
    if let Some(out) = &cfg.out {
        model_file::save_network(out, &outcome.network, pca.as_ref())?;
    }
    if let Some(path) = &cfg.trace {
        let rows: Vec<Vec<f64>> = outcome
            .objective_trace
            .iter()
            .enumerate()
            .map(|(l, &v)| vec![l as f64, v])
            .collect();
        data_io::write_table(path, &["layer", "objective"], &rows)?;
    }
    Ok(TrainReport {
        outcome,
        pca,
        train_accuracy,
        model_path: cfg.out.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `(correct, total)` per class.
    pub per_class: Vec<(usize, usize)>,
    pub predictions: Vec<usize>,
    /// Mean `|cos|` per class pair, when requested.
    pub similarity: Option<DMatrix<f64>>,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "accuracy = {}", self.accuracy)?;
        for (t, (c, n)) in self.per_class.iter().enumerate() {
            write!(f, "\nclass {t}: {c}/{n}")?;
        }
        Ok(())
    }
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let model_path = cfg.model.as_ref().ok_or_else(|| Error::param("eval needs --model"))?;
    let (network, pca) = model_file::load_network(model_path)?;
    let (_, test) = datasets(cfg)?;
    if test.is_empty() {
        return Err(Error::param("test set is empty"));
    }
    let labels = test.require_labels()?.to_vec();
    let samples = match &pca {
        Some(p) => p.transform(&test.samples)?,
        None => test.samples.clone(),
    };
    let features = redunet::forward(&network, &samples)?;
    let predictions = redunet::ns_classify(&network, &features);
    let k = network.class_count.max(test.class_count);
    let mut per_class = vec![(0, 0); k];
    for (&p, &t) in predictions.iter().zip(&labels) {
        per_class[t].1 += 1;
        if p == t {
            per_class[t].0 += 1;
        }
    }
    let similarity = match &cfg.similarity {
        Some(path) => {
            let report = redunet::cosine_similarity_report(&features, &labels)?;
            let rows: Vec<Vec<f64>> = (0..report.class_means.nrows())
                .map(|i| report.class_means.row(i).iter().copied().collect())
                .collect();
            let names: Vec<String> = (0..report.class_means.ncols()).map(|j| format!("class{j}")).collect();
            let columns: Vec<&str> = names.iter().map(String::as_str).collect();
            data_io::write_table(path, &columns, &rows)?;
            Some(report.class_means)
        }
        None => None,
    };
    Ok(EvalReport {
        accuracy: redunet::accuracy(&predictions, &labels),
        per_class,
        predictions,
        similarity,
    })
}

#[derive(Debug, Clone)]
pub struct SynthReport {
    pub spec: SyntheticSpec,
    pub samples: usize,
}

impl fmt::Display for SynthReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "wrote {} samples ({:?})", self.samples, self.spec)
    }
}

/// Writes samples to `--out` (one per row) and labels to `--labels`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthReport> {
    let out = cfg.out.as_ref().ok_or_else(|| Error::param("synth needs --out"))?;
    let spec = cfg.synthetic_spec();
    let ds = data_io::generate_synthetic(&spec)?;
    let rows: Vec<Vec<f64>> = ds.samples.column_iter().map(|c| c.iter().copied().collect()).collect();
    let names: Vec<String> = (0..ds.dim()).map(|i| format!("x{i}")).collect();
    let columns: Vec<&str> = names.iter().map(String::as_str).collect();
    data_io::write_table(out, &columns, &rows)?;
    if let Some(path) = &cfg.labels {
        let rows: Vec<Vec<String>> = ds.require_labels()?.iter().map(|l| vec![l.to_string()]).collect();
        data_io::write_records(path, &["label"], &rows)?;
    }
    Ok(SynthReport { spec, samples: ds.len() })
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let cfg = RunConfig::load(cli.config)?;
    for line in cfg.resolved().to_toml().lines() {
        println!("# {line}");
    }
    match cli.command {
        Command::Rdcurve => {
            let report = cmd_rdcurve(&cfg)?;
            if cfg.out.is_none() {
                println!("{}", RdCurveReport::COLUMNS.join(","));
                for row in report.table_rows() {
                    let cells: Vec<String> = row.iter().map(|&v| data_io::format_float(v)).collect();
                    println!("{}", cells.join(","));
                }
            }
            println!("{report}");
        }
        Command::Alpha => println!("{}", cmd_alpha(&cfg)?),
        Command::Bounds => {
            let report = cmd_bounds(&cfg)?;
            println!("{report}");
            if report.failures > 0 {
                return Ok(1);
            }
        }
        Command::Pca => println!("{}", cmd_pca(&cfg)?),
        Command::Train => println!("{}", cmd_train(&cfg)?),
        Command::Eval => println!("{}", cmd_eval(&cfg)?),
        Command::Synth => println!("{}", cmd_synth(&cfg)?),
    }
    Ok(0)
}
