//! Gaussian rate-distortion function and the `R_alpha` approximation family.
//!
//! All rates are in nats. A spectrum's zero eigenvalues (at or below the
//! rank tolerance) are excluded from the exact function but kept in
//! `R_alpha`, where each contributes `ln(alpha) / 2`.

use crate::error::{Error, Result};
use crate::spectral::Spectrum;

/// Bisection precision used unless the caller asks otherwise.
pub const DEFAULT_DELTA: f64 = 1e-8;

/// Hard cap on bisection steps.
pub const DEFAULT_MAX_ITERATIONS: usize = 60;

/// Relative slack allowed when a distortion is compared against the trace.
const TRACE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub distortion: f64,
    pub rate: f64,
}

/// Reverse water-filling allocation for a target distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    pub water_level: f64,
    /// `min(L, lambda_i)` in spectrum order; zero eigenvalues get zero.
    pub distortions: Vec<f64>,
    /// Spectrum indices with `L < lambda_i`.
    pub active: Vec<usize>,
}

fn check_distortion(d: f64) -> Result<()> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("distortion must be positive and finite, got {d}")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::param(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

fn within_trace(spectrum: &Spectrum, d: f64) -> Result<()> {
    if d > spectrum.trace() * (1.0 + TRACE_SLACK) {
        return Err(Error::param(format!(
            "distortion {d} exceeds the trace {}",
            spectrum.trace()
        )));
    }
    Ok(())
}

/// Solves `sum_i min(L, lambda_i) = d` exactly by walking the breakpoints of
/// the piecewise-linear left-hand side.
pub fn water_level(spectrum: &Spectrum, d: f64) -> Result<WaterFill> {
    check_distortion(d)?;
    let nonzero = spectrum.nonzero();
    if nonzero.is_empty() {
        return Err(Error::DegenerateSource);
    }
    within_trace(spectrum, d)?;

    // `nonzero` is descending; walk it from the smallest value up.
    let r = nonzero.len();
    let mut saturated = 0.0;
    let mut level = nonzero[0];
    for (k, &lambda) in nonzero.iter().rev().enumerate() {
        let candidate = (d - saturated) / (r - k) as f64;
        if candidate <= lambda {
            level = candidate;
            break;
        }
        saturated += lambda;
    }

    let rank = spectrum.rank();
    let distortions = spectrum
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, &lambda)| if i < rank { level.min(lambda) } else { 0.0 })
        .collect();
    let active = (0..rank).filter(|&i| level < spectrum.eigenvalues()[i]).collect();
    Ok(WaterFill {
        water_level: level,
        distortions,
        active,
    })
}

/// Exact rate `sum_i ln(lambda_i / D_i) / 2`; zero once `d` reaches the trace.
pub fn exact_rate(spectrum: &Spectrum, d: f64) -> Result<RdPoint> {
    check_distortion(d)?;
    if spectrum.rank() == 0 {
        return Err(Error::DegenerateSource);
    }
    if d >= spectrum.trace() {
        return Ok(RdPoint {
            distortion: d,
            rate: 0.0,
        });
    }
    let fill = water_level(spectrum, d)?;
    let lambdas = spectrum.eigenvalues();
    let rate = fill
        .active
        .iter()
        .map(|&i| 0.5 * (lambdas[i] / fill.water_level).ln())
        .sum();
    Ok(RdPoint { distortion: d, rate })
}

/// `ln det(alpha I + (n/d) Sigma) / 2` over all `n` eigenvalues.
///
/// Returns `-inf` when `alpha = 0` and the spectrum has an exact zero.
pub fn r_alpha(spectrum: &Spectrum, alpha: f64, d: f64) -> Result<f64> {
    check_distortion(d)?;
    check_alpha(alpha)?;
    Ok(r_alpha_unchecked(spectrum, alpha, d))
}

fn r_alpha_unchecked(spectrum: &Spectrum, alpha: f64, d: f64) -> f64 {
    let scale = spectrum.dim() as f64 / d;
    0.5 * spectrum
        .eigenvalues()
        .iter()
        .map(|&lambda| (alpha + scale * lambda).ln())
        .sum::<f64>()
}

/// Outcome of the `alpha*` bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaStar {
    pub alpha_star: f64,
    /// `|R_{alpha*}(tr Sigma)|`.
    pub residual: f64,
    pub iterations: usize,
    pub delta: f64,
}

/// Upper end of the `[0, 1 - lambda_min / lambda_mean]` bracket for `alpha*`.
pub fn alpha_star_upper_bound(spectrum: &Spectrum) -> f64 {
    1.0 - spectrum.lambda_min() / spectrum.lambda_mean()
}

/// Bisects `alpha` on `[0, 1]` until `|R_alpha(tr Sigma)| <= delta`.
///
/// The residual is checked at each fresh midpoint; the endpoint `alpha = 0`
/// is tried first so isotropic spectra return exactly zero.
pub fn find_alpha_star(spectrum: &Spectrum, delta: f64, max_iterations: usize) -> Result<AlphaStar> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::param(format!("delta must be positive, got {delta}")));
    }
    if spectrum.rank() == 0 {
        return Err(Error::DegenerateSource);
    }
    let trace = spectrum.trace();
    let at = |alpha: f64| r_alpha_unchecked(spectrum, alpha, trace);

    let at_zero = at(0.0);
    if at_zero.abs() <= delta {
        return Ok(AlphaStar {
            alpha_star: 0.0,
            residual: at_zero.abs(),
            iterations: 0,
            delta,
        });
    }

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for iteration in 1..=max_iterations {
        let mid = 0.5 * (lo + hi);
        let value = at(mid);
        if value.abs() <= delta {
            return Ok(AlphaStar {
                alpha_star: mid,
                residual: value.abs(),
                iterations: iteration,
                delta,
            });
        }
        if value < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::BisectionExhausted {
        iterations: max_iterations,
        lo,
        hi,
    })
}

/// Which published inequality a [`BoundReport`] checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSource {
    Theorem1,
    Theorem2,
    Corollary1,
}

impl BoundSource {
    pub fn name(self) -> &'static str {
        match self {
            BoundSource::Theorem1 => "theorem1",
            BoundSource::Theorem2 => "theorem2",
            BoundSource::Corollary1 => "corollary1",
        }
    }
}

/// Per-dimension error `(R_alpha(D) - R(D)) / n` with its enclosing bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub distortion: f64,
    pub lower: f64,
    pub upper: f64,
    pub observed: f64,
    pub source: BoundSource,
    /// Set for singular spectra, where `lambda_min` is taken over the
    /// nonzero eigenvalues and the inequality is not guaranteed.
    pub restricted: bool,
}

impl BoundReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.observed >= self.lower - slack && self.observed <= self.upper + slack
    }
}

fn per_dim_error(spectrum: &Spectrum, alpha: f64, d: f64) -> Result<f64> {
    let approx = r_alpha(spectrum, alpha, d)?;
    let exact = exact_rate(spectrum, d)?.rate;
    Ok((approx - exact) / spectrum.dim() as f64)
}

/// `lambda_min` for the bounds plus the `restricted` flag.
fn bound_lambda_min(spectrum: &Spectrum) -> Result<(f64, bool)> {
    match spectrum.nonzero_lambda_min() {
        None => Err(Error::DegenerateSource),
        Some(v) if spectrum.is_singular() => Ok((v, true)),
        Some(_) => Ok((spectrum.lambda_min(), false)),
    }
}

pub fn theorem1_bounds(spectrum: &Spectrum, alpha: f64, d: f64) -> Result<BoundReport> {
    check_distortion(d)?;
    check_alpha(alpha)?;
    within_trace(spectrum, d)?;
    let (lambda_min, restricted) = bound_lambda_min(spectrum)?;
    let n = spectrum.dim() as f64;
    let upper = 0.5 * (1.0 + alpha).ln();
    let lower = if d <= n * lambda_min {
        0.0
    } else {
        upper - 0.5 * (spectrum.lambda_mean() / lambda_min).ln()
    };
    Ok(BoundReport {
        distortion: d,
        lower,
        upper,
        observed: per_dim_error(spectrum, alpha, d)?,
        source: BoundSource::Theorem1,
        restricted,
    })
}

/// Bounds at `alpha = alpha_star` in terms of `lambda_min / lambda_mean`.
pub fn theorem2_bounds(spectrum: &Spectrum, alpha_star: f64, d: f64) -> Result<BoundReport> {
    check_distortion(d)?;
    within_trace(spectrum, d)?;
    let (lambda_min, restricted) = bound_lambda_min(spectrum)?;
    let ratio = lambda_min / spectrum.lambda_mean();
    Ok(BoundReport {
        distortion: d,
        lower: 0.5 * ratio.ln(),
        upper: 0.5 * (2.0 - ratio).ln(),
        observed: per_dim_error(spectrum, alpha_star, d)?,
        source: BoundSource::Theorem2,
        restricted,
    })
}

/// Bounds at `alpha = alpha_star` in terms of the condition number.
/// An infinite condition number gives `(-inf, ln(2)/2)`.
pub fn corollary1_bounds(spectrum: &Spectrum, alpha_star: f64, d: f64) -> Result<BoundReport> {
    check_distortion(d)?;
    within_trace(spectrum, d)?;
    if spectrum.rank() == 0 {
        return Err(Error::DegenerateSource);
    }
    let inv_kappa = 1.0 / spectrum.condition_number();
    Ok(BoundReport {
        distortion: d,
        lower: 0.5 * inv_kappa.ln(),
        upper: 0.5 * (2.0 - inv_kappa).ln(),
        observed: per_dim_error(spectrum, alpha_star, d)?,
        source: BoundSource::Corollary1,
        restricted: spectrum.is_singular(),
    })
}

/// Average absolute error of `R_alpha` at the two anchors `n * lambda_min`
/// and `tr Sigma`. Diagnostic only.
pub fn anchor_error(spectrum: &Spectrum, alpha: f64) -> Result<f64> {
    let (lambda_min, _) = bound_lambda_min(spectrum)?;
    let n = spectrum.dim() as f64;
    let trace = spectrum.trace();
    let small = (n * lambda_min).min(trace);
    let e_small = (r_alpha(spectrum, alpha, small)? - exact_rate(spectrum, small)?.rate).abs();
    let e_trace = r_alpha(spectrum, alpha, trace)?.abs();
    Ok(0.5 * e_small + 0.5 * e_trace)
}

/// Curves that [`rd_curve`] can tabulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Exact,
    R0,
    R1,
    RAlphaStar,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Exact, Variant::R0, Variant::R1, Variant::RAlphaStar];

    pub fn column_name(self) -> &'static str {
        match self {
            Variant::Exact => "R",
            Variant::R0 => "R0",
            Variant::R1 => "R1",
            Variant::RAlphaStar => "Ralpha_star",
        }
    }

    fn index(self) -> usize {
        match self {
            Variant::Exact => 0,
            Variant::R0 => 1,
            Variant::R1 => 2,
            Variant::RAlphaStar => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub distortion: f64,
    values: [Option<f64>; 4],
}

impl CurveRow {
    pub fn get(&self, variant: Variant) -> Option<f64> {
        self.values[variant.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    pub variants: Vec<Variant>,
    pub alpha_star: Option<AlphaStar>,
    pub rows: Vec<CurveRow>,
    /// `R0` was requested and diverges to `-inf` (singular spectrum).
    pub r0_divergent: bool,
}

impl RdCurve {
    /// `max_D |variant(D) - R(D)|`, `None` unless both columns were computed.
    pub fn max_abs_error(&self, variant: Variant) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for row in &self.rows {
            let exact = row.get(Variant::Exact)?;
            let value = row.get(variant)?;
            let err = (value - exact).abs();
            worst = Some(worst.map_or(err, |w| w.max(err)));
        }
        worst
    }
}

/// Tabulates the requested variants at every grid distortion.
pub fn rd_curve(spectrum: &Spectrum, grid: &[f64], variants: &[Variant], delta: f64) -> Result<RdCurve> {
    if grid.is_empty() {
        return Err(Error::param("distortion grid is empty"));
    }
    for &d in grid {
        check_distortion(d)?;
        within_trace(spectrum, d)?;
    }
    let wants = |v: Variant| variants.contains(&v);
    let alpha_star = if wants(Variant::RAlphaStar) {
        Some(find_alpha_star(spectrum, delta, DEFAULT_MAX_ITERATIONS)?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(grid.len());
    for &d in grid {
        let mut values = [None; 4];
        if wants(Variant::Exact) {
            values[0] = Some(exact_rate(spectrum, d)?.rate);
        }
        if wants(Variant::R0) {
            values[1] = Some(r_alpha(spectrum, 0.0, d)?);
        }
        if wants(Variant::R1) {
            values[2] = Some(r_alpha(spectrum, 1.0, d)?);
        }
        if let Some(a) = alpha_star {
            values[3] = Some(r_alpha(spectrum, a.alpha_star, d)?);
        }
        rows.push(CurveRow { distortion: d, values });
    }
    let r0_divergent = rows
        .iter()
        .any(|r| r.get(Variant::R0) == Some(f64::NEG_INFINITY));
    Ok(RdCurve {
        variants: Variant::ALL.iter().copied().filter(|v| wants(*v)).collect(),
        alpha_star,
        rows,
        r0_divergent,
    })
}

/// Lower end of default log grids, as a fraction of the trace.
pub const DEFAULT_GRID_FLOOR: f64 = 1e-6;

/// `points` log-spaced distortions from `trace * floor` up to exactly `trace`.
pub fn log_grid(trace: f64, points: usize, floor: f64) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![trace],
        _ => {
            let lo = floor.ln();
            let step = -lo / (points - 1) as f64;
            (0..points)
                .map(|k| {
                    if k == points - 1 {
                        trace
                    } else {
                        trace * (lo + step * k as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// `points` evenly spaced distortions in `(0, trace]`, ending at `trace`.
pub fn linear_grid(trace: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|k| trace * k as f64 / points as f64).collect()
}
