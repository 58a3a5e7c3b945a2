//! Least-squares recovery of model parameters from measured curves.
//!
//! Two fits are supported: the conversion-efficiency saturation curve
//! `y = eta_max * sin^2(L * sqrt(alpha * x))` with the waveguide length `L`
//! treated as known hardware and `(eta_max, alpha)` free, and a
//! through-origin line for the converter noise rate versus pump power.
//!
//! The nonlinear fit is a damped Gauss-Newton iteration with a
//! multiply-by-ten/divide-by-ten damping schedule. Both parameters are
//! positive by construction, so the iteration runs in log space, which keeps
//! step proposals from driving them through zero and the sine argument
//! through a sign flip. Honest convergence reporting matters more here than
//! squeezing iterations: `converged` is set only when the gradient of the
//! squared residual drops below tolerance, and a separate `flat_direction`
//! flag reports when the data fail to constrain some parameter combination.

use thiserror::Error;

/// Errors from fitting or prediction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} points with distinct pump powers, got {got}")]
    TooFewDistinct { needed: usize, got: usize },
    #[error("point {index}: {message}")]
    InvalidPoint { index: usize, message: String },
    #[error("waveguide_length_m must be positive and finite, got {0}")]
    InvalidLength(f64),
    #[error("initial {name} must be positive and finite, got {value}")]
    InvalidInit { name: &'static str, value: f64 },
    #[error("all efficiency values are non-positive; the curve scale is unidentifiable")]
    NoPositiveData,
    #[error("all pump powers are zero; a through-origin slope is unidentifiable")]
    AllPumpZero,
    #[error("prediction requires a converged fit")]
    Unconverged,
    #[error("fit result carries {got} parameters where {expected} were expected")]
    MalformedResult { expected: usize, got: usize },
}

/// One measured point: pump power versus efficiency or noise rate, with an
/// optional positive weight (for count-derived data, inverse variance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub weight: Option<f64>,
}

impl CurvePoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, weight: None }
    }
}

/// Which model a `FitResult` refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitModel {
    ConversionCurve { waveguide_length_m: f64 },
    NoiseThroughOrigin,
}

/// One named fitted parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParameter {
    pub name: &'static str,
    pub value: f64,
    /// Standard error from the Jacobian at the optimum; `NaN` when the
    /// normal matrix is singular there.
    pub std_error: f64,
}

/// Outcome of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    pub parameters: Vec<FitParameter>,
    /// Parameter covariance, row-major, in the original (not log) space.
    pub covariance: Vec<f64>,
    pub residual_sum_squares: f64,
    /// Optimizer loop passes used (one attempted step each).
    pub iterations: usize,
    /// True only when the residual gradient met tolerance.
    pub converged: bool,
    /// True when the data leave a parameter direction essentially
    /// unconstrained (near-singular normal matrix).
    pub flat_direction: bool,
    /// Residual sum of squares after each accepted step, starting from the
    /// initial guess. Non-increasing by construction.
    pub rss_history: Vec<f64>,
}

/// Convergence is declared when the objective gradient falls below this
/// fraction of the weighted sum of squared data values. Tying the tolerance
/// to the data scale keeps the fit equivariant: rescaling every value by a
/// constant rescales the gradient and the tolerance together.
const GRADIENT_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 200;
/// A direction counts as flat when the smaller eigenvalue of the log-space
/// normal matrix is below this fraction of the larger. Well-designed sweeps
/// sit around 1e-2; a design that pins only one parameter combination (for
/// example, all pump powers clustered at a single value) falls below 1e-5.
const FLAT_EIGENVALUE_RATIO: f64 = 1e-4;

fn validate_points(points: &[CurvePoint]) -> Result<(), FitError> {
    for (index, point) in points.iter().enumerate() {
        if !point.x.is_finite() || point.x < 0.0 {
            return Err(FitError::InvalidPoint {
                index,
                message: format!(
                    "pump power must be non-negative and finite, got {}",
                    point.x
                ),
            });
        }
        if !point.y.is_finite() {
            return Err(FitError::InvalidPoint {
                index,
                message: format!("value must be finite, got {}", point.y),
            });
        }
        if let Some(w) = point.weight {
            if !w.is_finite() || w <= 0.0 {
                return Err(FitError::InvalidPoint {
                    index,
                    message: format!("weight must be positive and finite, got {w}"),
                });
            }
        }
    }
    Ok(())
}

fn distinct_x_count(points: &[CurvePoint]) -> usize {
    let mut xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.len()
}

/// Model value of the saturation curve.
fn curve_value(eta_max: f64, alpha: f64, length_m: f64, x: f64) -> f64 {
    let u = length_m * (alpha * x).sqrt();
    eta_max * u.sin().powi(2)
}

/// Partial derivatives of the curve with respect to `(eta_max, alpha)`.
fn curve_gradient(eta_max: f64, alpha: f64, length_m: f64, x: f64) -> (f64, f64) {
    let u = length_m * (alpha * x).sqrt();
    let sin_u = u.sin();
    let d_eta = sin_u * sin_u;
    // d(sin^2 u)/d(alpha) = sin(2u) * du/d(alpha), and du/d(alpha) = u / (2 alpha).
    let d_alpha = eta_max * (2.0 * u).sin() * u / (2.0 * alpha);
    (d_eta, d_alpha)
}

struct Linearization {
    rss: f64,
    /// Gradient of the squared-residual objective in log space.
    gradient: [f64; 2],
    /// Right-hand side J^T r of the Gauss-Newton normal equations.
    jtr: [f64; 2],
    /// Normal matrix J^T J, symmetric `[a00, a01, a11]`.
    jtj: [f64; 3],
}

/// One pass over the data: weighted residuals and the log-space Jacobian,
/// reduced straight to the normal-equation pieces.
fn linearize(points: &[CurvePoint], length_m: f64, theta: [f64; 2]) -> Linearization {
    let eta_max = theta[0].exp();
    let alpha = theta[1].exp();
    let mut rss = 0.0;
    let mut jtr = [0.0f64; 2];
    let mut jtj = [0.0f64; 3];
    for point in points {
        let sqrt_w = point.weight.unwrap_or(1.0).sqrt();
        let u = length_m * (alpha * point.x).sqrt();
        let value = eta_max * u.sin().powi(2);
        let residual = sqrt_w * (point.y - value);
        // In log space: d y / d ln(eta_max) = y itself, and
        // d y / d ln(alpha) = eta_max * sin(2u) * u / 2.
        let j0 = sqrt_w * value;
        let j1 = sqrt_w * eta_max * (2.0 * u).sin() * u / 2.0;
        rss += residual * residual;
        jtr[0] += j0 * residual;
        jtr[1] += j1 * residual;
        jtj[0] += j0 * j0;
        jtj[1] += j0 * j1;
        jtj[2] += j1 * j1;
    }
    Linearization {
        rss,
        gradient: [-2.0 * jtr[0], -2.0 * jtr[1]],
        jtr,
        jtj,
    }
}

fn initial_guess(points: &[CurvePoint], length_m: f64) -> Result<(f64, f64), FitError> {
    let eta0 = points.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    if eta0 <= 0.0 {
        return Err(FitError::NoPositiveData);
    }
    // In the small-argument regime the curve is linear: y ~ eta_max L^2 alpha x.
    // A through-origin slope over the lowest third of the positive-pump
    // points pins down alpha to the right order of magnitude.
    let mut positive: Vec<&CurvePoint> = points.iter().filter(|p| p.x > 0.0).collect();
    positive.sort_by(|a, b| f64::total_cmp(&a.x, &b.x));
    let take = (positive.len() / 3).max(2).min(positive.len());
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for point in &positive[..take] {
        sxy += point.x * point.y;
        sxx += point.x * point.x;
    }
    let slope = sxy / sxx;
    let x_max = positive.last().map(|p| p.x).unwrap_or(1.0);
    let mut alpha0 = slope / (eta0 * length_m * length_m);
    if !(alpha0.is_finite() && alpha0 > 0.0) {
        alpha0 = 1.0 / (length_m * length_m * x_max);
    }
    // Start on the rising flank: cap alpha so the sine argument stays below
    // pi/2 across the data. An overshooting guess can drop the iteration into
    // a spurious basin where the curve oscillates through the points.
    let monotone_cap = (std::f64::consts::FRAC_PI_2 / length_m).powi(2) / x_max;
    Ok((eta0, alpha0.min(monotone_cap)))
}

/// Fits `(eta_max, alpha)` of the saturation curve to measured points, with
/// the waveguide length held fixed.
///
/// Needs at least three distinct pump powers. Without an explicit starting
/// point, `eta_max` starts at the largest measured value and `alpha` at the
/// slope of the small-signal regime. Non-convergence within the iteration
/// cap is reported through the `converged` flag, not as an error.
pub fn fit_conversion_curve(
    points: &[CurvePoint],
    waveguide_length_m: f64,
    init: Option<(f64, f64)>,
) -> Result<FitResult, FitError> {
    if !(waveguide_length_m.is_finite() && waveguide_length_m > 0.0) {
        return Err(FitError::InvalidLength(waveguide_length_m));
    }
    validate_points(points)?;
    let distinct = distinct_x_count(points);
    if distinct < 3 {
        return Err(FitError::TooFewDistinct {
            needed: 3,
            got: distinct,
        });
    }
    let (eta0, alpha0) = match init {
        Some((eta, alpha)) => {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(FitError::InvalidInit {
                    name: "eta_max",
                    value: eta,
                });
            }
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(FitError::InvalidInit {
                    name: "alpha",
                    value: alpha,
                });
            }
            (eta, alpha)
        }
        None => initial_guess(points, waveguide_length_m)?,
    };

    // Scale reference for the convergence test; positive because at least one
    // value is positive past the `NoPositiveData` guard in `initial_guess`,
    // and checked again here for the caller-supplied-init path.
    let data_scale: f64 = points
        .iter()
        .map(|p| p.weight.unwrap_or(1.0) * p.y * p.y)
        .sum();
    if data_scale <= 0.0 {
        return Err(FitError::NoPositiveData);
    }
    let gradient_cutoff = GRADIENT_TOLERANCE * data_scale;

    let mut theta = [eta0.ln(), alpha0.ln()];
    let mut current = linearize(points, waveguide_length_m, theta);
    let mut rss_history = vec![current.rss];
    let mut damping = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if current.gradient[0].abs().max(current.gradient[1].abs()) <= gradient_cutoff {
            converged = true;
            break;
        }
        // Damped normal equations: (J^T J + damping * diag(J^T J)) delta = J^T r.
        let a00 = current.jtj[0] * (1.0 + damping);
        let a01 = current.jtj[1];
        let a11 = current.jtj[2] * (1.0 + damping);
        let det = a00 * a11 - a01 * a01;
        if !(det.is_finite() && det.abs() > f64::MIN_POSITIVE) {
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
            continue;
        }
        let delta = [
            (a11 * current.jtr[0] - a01 * current.jtr[1]) / det,
            (a00 * current.jtr[1] - a01 * current.jtr[0]) / det,
        ];
        let candidate = [theta[0] + delta[0], theta[1] + delta[1]];
        let trial = linearize(points, waveguide_length_m, candidate);
        if trial.rss.is_finite() && trial.rss < current.rss {
            theta = candidate;
            current = trial;
            rss_history.push(current.rss);
            damping = (damping / 10.0).max(1e-15);
        } else {
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }
    }
    if !converged {
        converged = current.gradient[0].abs().max(current.gradient[1].abs()) <= gradient_cutoff;
    }

    let eta_max = theta[0].exp();
    let alpha = theta[1].exp();

    // Identifiability check on the log-space normal matrix: eigenvalue ratio
    // of a symmetric 2x2.
    let trace = current.jtj[0] + current.jtj[2];
    let det = current.jtj[0] * current.jtj[2] - current.jtj[1] * current.jtj[1];
    let spread = (trace * trace - 4.0 * det).max(0.0).sqrt();
    let eig_max = (trace + spread) / 2.0;
    let eig_min = (trace - spread) / 2.0;
    // A non-finite normal matrix (overflowed model values) counts as flat.
    let mut flat_direction =
        eig_max.is_nan() || eig_max <= 0.0 || eig_min <= FLAT_EIGENVALUE_RATIO * eig_max;

    // Standard errors propagate through the original-space Jacobian.
    let mut ata = [0.0f64; 3];
    for point in points {
        let w = point.weight.unwrap_or(1.0);
        let (d_eta, d_alpha) = curve_gradient(eta_max, alpha, waveguide_length_m, point.x);
        ata[0] += w * d_eta * d_eta;
        ata[1] += w * d_eta * d_alpha;
        ata[2] += w * d_alpha * d_alpha;
    }
    let ata_det = ata[0] * ata[2] - ata[1] * ata[1];
    let dof = points.len() as f64 - 2.0;
    let sigma2 = current.rss / dof;
    let (covariance, se_eta, se_alpha) = if ata_det.is_finite() && ata_det > 0.0 {
        let c00 = sigma2 * ata[2] / ata_det;
        let c01 = -sigma2 * ata[1] / ata_det;
        let c11 = sigma2 * ata[0] / ata_det;
        (
            vec![c00, c01, c01, c11],
            c00.max(0.0).sqrt(),
            c11.max(0.0).sqrt(),
        )
    } else {
        flat_direction = true;
        (vec![f64::NAN; 4], f64::NAN, f64::NAN)
    };

    Ok(FitResult {
        model: FitModel::ConversionCurve { waveguide_length_m },
        parameters: vec![
            FitParameter {
                name: "eta_max",
                value: eta_max,
                std_error: se_eta,
            },
            FitParameter {
                name: "alpha_qfc_per_w_m2",
                value: alpha,
                std_error: se_alpha,
            },
        ],
        covariance,
        residual_sum_squares: current.rss,
        iterations,
        converged,
        flat_direction,
        rss_history,
    })
}

/// Fits a through-origin line `y = slope * x`, the natural model for a
/// noise background that vanishes without pump light.
pub fn fit_noise_linear(points: &[CurvePoint]) -> Result<FitResult, FitError> {
    validate_points(points)?;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for point in points {
        let w = point.weight.unwrap_or(1.0);
        sxy += w * point.x * point.y;
        sxx += w * point.x * point.x;
    }
    if sxx <= 0.0 {
        return Err(FitError::AllPumpZero);
    }
    let slope = sxy / sxx;
    let rss: f64 = points
        .iter()
        .map(|p| {
            let r = p.y - slope * p.x;
            p.weight.unwrap_or(1.0) * r * r
        })
        .sum();
    let dof = points.len() as f64 - 1.0;
    let variance = if dof > 0.0 {
        (rss / dof) / sxx
    } else {
        f64::NAN
    };
    Ok(FitResult {
        model: FitModel::NoiseThroughOrigin,
        parameters: vec![FitParameter {
            name: "slope_hz_per_w",
            value: slope,
            std_error: variance.sqrt(),
        }],
        covariance: vec![variance],
        residual_sum_squares: rss,
        iterations: 0,
        converged: true,
        flat_direction: false,
        rss_history: vec![rss],
    })
}

/// One row of a prediction band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub y_hat: f64,
    /// First-order propagated one-sigma band half-width.
    pub y_err: f64,
}

/// Evaluates a converged fit on a grid, with the parameter covariance
/// propagated to a one-sigma band.
pub fn predict_with_band(fit: &FitResult, xs: &[f64]) -> Result<Vec<BandPoint>, FitError> {
    if !fit.converged {
        return Err(FitError::Unconverged);
    }
    let mut band = Vec::with_capacity(xs.len());
    match fit.model {
        FitModel::ConversionCurve { waveguide_length_m } => {
            if fit.parameters.len() != 2 || fit.covariance.len() != 4 {
                return Err(FitError::MalformedResult {
                    expected: 2,
                    got: fit.parameters.len(),
                });
            }
            let eta_max = fit.parameters[0].value;
            let alpha = fit.parameters[1].value;
            for (index, &x) in xs.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(FitError::InvalidPoint {
                        index,
                        message: format!("pump power must be non-negative and finite, got {x}"),
                    });
                }
                let y_hat = curve_value(eta_max, alpha, waveguide_length_m, x);
                let (g0, g1) = curve_gradient(eta_max, alpha, waveguide_length_m, x);
                let variance = g0 * g0 * fit.covariance[0]
                    + 2.0 * g0 * g1 * fit.covariance[1]
                    + g1 * g1 * fit.covariance[3];
                band.push(BandPoint {
                    x,
                    y_hat,
                    y_err: band_width(variance),
                });
            }
        }
        FitModel::NoiseThroughOrigin => {
            if fit.parameters.len() != 1 || fit.covariance.len() != 1 {
                return Err(FitError::MalformedResult {
                    expected: 1,
                    got: fit.parameters.len(),
                });
            }
            let slope = fit.parameters[0].value;
            for &x in xs {
                let variance = fit.covariance[0] * x * x;
                band.push(BandPoint {
                    x,
                    y_hat: slope * x,
                    y_err: band_width(variance),
                });
            }
        }
    }
    Ok(band)
}

fn band_width(variance: f64) -> f64 {
    if variance.is_nan() {
        f64::NAN
    } else {
        variance.max(0.0).sqrt()
    }
}
