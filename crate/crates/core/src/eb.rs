//! Negative binomial safety performance function and empirical Bayes
//! shrinkage, the conventional baseline the multiresolution estimator is
//! compared against.
//!
//! The SPF is an NB2 regression: counts have mean `μ = exp(Xβ)` and variance
//! `μ + φμ²`, the gamma-mixed Poisson form. β and φ are fit jointly by
//! alternating a weighted-least-squares (Fisher scoring) update for β at
//! fixed φ with a damped one-dimensional Newton step for φ at fixed β. The
//! empirical Bayes estimate then blends model prediction and observed count
//! with weight `φμ/(1+φμ)` on the count, so dispersed sites trust their own
//! history and well-modeled sites shrink to the SPF.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

use crate::data::NetworkDataset;

const MAX_OUTER_ITERATIONS: usize = 200;
const COEFFICIENT_TOLERANCE: f64 = 1e-8;
const DISPERSION_TOLERANCE: f64 = 1e-8;
/// φ below this is reported as the Poisson limit.
const PHI_FLOOR: f64 = 1e-8;
const MU_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EbError {
    #[error("design matrix has {rows} rows but the response has {response} entries")]
    ShapeMismatch { rows: usize, response: usize },
    #[error("need more observations ({rows}) than parameters ({cols}) to fit")]
    TooFewRows { rows: usize, cols: usize },
    #[error("column '{0}' is identically zero")]
    ZeroColumn(String),
    #[error("response must be nonnegative integers; entry {index} is {value}")]
    BadResponse { index: usize, value: f64 },
    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    SingularDesign { columns: Vec<String> },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error(
        "did not converge within {iterations} iterations (gradient max-norm {gradient_norm:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        last_beta: Vec<f64>,
        last_phi: f64,
    },
    #[error("covariate '{0}' not present in the dataset")]
    UnknownCovariate(String),
    #[error("model expects columns {expected:?} but was given {actual:?}")]
    SchemaMismatch {
        expected: Vec<String>,
        actual: Vec<String>,
    },
    #[error("period '{0}' has no series")]
    EmptyPeriod(String),
}

/// A fitted safety performance function with Wald inference and fit
/// diagnostics. Serializes to JSON for persistence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SPFModel {
    pub covariate_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Wald chi-square p-values on the observed information.
    pub p_values: Vec<f64>,
    pub overdispersion: f64,
    pub fitted_mu: Vec<f64>,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    /// Set when the dispersion was driven to zero and the fit fell back to
    /// the Poisson limit.
    pub poisson_limit: bool,
    pub iterations: usize,
}

/// NB2 log-likelihood at mean vector `mu` and dispersion `phi`; `phi == 0`
/// is the Poisson limit.
pub fn nb_log_likelihood(y: &[f64], mu: &[f64], phi: f64) -> f64 {
    if phi <= 0.0 {
        return y
            .iter()
            .zip(mu)
            .map(|(&yi, &mi)| {
                let m = mi.max(MU_FLOOR);
                yi * m.ln() - m - ln_gamma(yi + 1.0)
            })
            .sum();
    }
    let theta = 1.0 / phi;
    y.iter()
        .zip(mu)
        .map(|(&yi, &mi)| {
            let m = mi.max(MU_FLOOR);
            ln_gamma(yi + theta) - ln_gamma(theta) - ln_gamma(yi + 1.0)
                - (yi + theta) * (1.0 + phi * m).ln()
                + yi * (phi * m).ln()
        })
        .sum()
}

/// Gradient of the NB2 log-likelihood at `(beta, phi)` with respect to every
/// coefficient and to the dispersion. The β block is
/// `Σ (y - μ) x / (1 + φμ)`; the φ component uses the digamma form of the
/// gamma-mixture likelihood.
pub fn nb_gradient(x: &DMatrix<f64>, y: &[f64], beta: &[f64], phi: f64) -> (Vec<f64>, f64) {
    let mu = mu_from(x, beta);
    let p = x.ncols();
    let mut grad_beta = vec![0.0; p];
    for i in 0..x.nrows() {
        let w = (y[i] - mu[i]) / (1.0 + phi * mu[i]);
        for j in 0..p {
            grad_beta[j] += w * x[(i, j)];
        }
    }
    (grad_beta, dispersion_score(y, &mu, phi))
}

fn mu_from(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    let beta = DVector::from_column_slice(beta);
    let eta = x * beta;
    eta.iter().map(|&e| e.exp().max(MU_FLOOR)).collect()
}

/// ∂ℓ/∂φ for the NB2 likelihood.
fn dispersion_score(y: &[f64], mu: &[f64], phi: f64) -> f64 {
    let u = 1.0 / phi;
    y.iter()
        .zip(mu)
        .map(|(&yi, &mi)| {
            let one_plus = 1.0 + phi * mi;
            u * u * (one_plus.ln() - digamma(yi + u) + digamma(u))
                + (yi - mi) / (phi * one_plus)
        })
        .sum()
}

/// ∂²ℓ/∂φ² for the NB2 likelihood.
fn dispersion_curvature(y: &[f64], mu: &[f64], phi: f64) -> f64 {
    let u = 1.0 / phi;
    let u2 = u * u;
    let u3 = u2 * u;
    let u4 = u2 * u2;
    y.iter()
        .zip(mu)
        .map(|(&yi, &mi)| {
            let one_plus = 1.0 + phi * mi;
            2.0 * u3 * (digamma(yi + u) - digamma(u) - one_plus.ln())
                + u4 * (trigamma(yi + u) - trigamma(u))
                + u2 * mi / one_plus
                - (yi - mi) * (1.0 + 2.0 * phi * mi) / (phi * one_plus * (phi * one_plus))
        })
        .sum()
}

/// ψ'(x) by the ascending recurrence into the asymptotic series.
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        * (1.0
            + 0.5 * inv
            + inv2
                * (1.0 / 6.0
                    - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0)))))
}

/// Fit an NB2 regression of counts `y` on the design matrix `x` (which must
/// already contain the intercept column). `names` labels the columns for the
/// coefficient report.
pub fn fit_nb_regression(
    x: &DMatrix<f64>,
    names: &[String],
    y: &[f64],
) -> Result<SPFModel, EbError> {
    fit_core(x, names, y, true)
}

/// Poisson regression with the same scoring machinery, i.e. the NB2 fit with
/// the dispersion pinned at zero.
pub fn fit_poisson_regression(
    x: &DMatrix<f64>,
    names: &[String],
    y: &[f64],
) -> Result<SPFModel, EbError> {
    fit_core(x, names, y, false)
}

fn fit_core(
    x: &DMatrix<f64>,
    names: &[String],
    y: &[f64],
    estimate_phi: bool,
) -> Result<SPFModel, EbError> {
    let (rows, cols) = (x.nrows(), x.ncols());
    if rows != y.len() {
        return Err(EbError::ShapeMismatch {
            rows,
            response: y.len(),
        });
    }
    if rows < cols + 1 {
        return Err(EbError::TooFewRows { rows, cols });
    }
    for (index, &value) in y.iter().enumerate() {
        if value < 0.0 || value.fract() != 0.0 {
            return Err(EbError::BadResponse { index, value });
        }
    }
    for j in 0..cols {
        if (0..rows).all(|i| x[(i, j)] == 0.0) {
            return Err(EbError::ZeroColumn(names[j].to_string()));
        }
    }
    check_rank(x, names)?;

    // initial β: least squares on log(y + 0.5)
    let z0 = DVector::from_iterator(rows, y.iter().map(|&v| (v + 0.5).ln()));
    let xt = x.transpose();
    let mut beta = (&xt * x)
        .cholesky()
        .ok_or_else(|| EbError::NumericalFailure("normal equations not positive definite".into()))?
        .solve(&(&xt * z0));

    // initial φ: method of moments on Pearson residuals
    let mu = mu_vec(x, &beta);
    let mut phi = if estimate_phi {
        moment_phi(y, &mu).max(1e-4)
    } else {
        0.0
    };
    let mut poisson_limit = !estimate_phi;

    let mut iterations = 0;
    loop {
        iterations += 1;
        let beta_prev = beta.clone();
        let phi_prev = phi;

        // β: weighted least squares to convergence at fixed φ
        for _ in 0..50 {
            let next = irls_beta_step(x, y, &beta, phi)?;
            let delta = (&next - &beta).amax();
            beta = next;
            if delta < COEFFICIENT_TOLERANCE {
                break;
            }
        }
        // φ: one safeguarded Newton step at fixed β
        if !poisson_limit {
            phi = newton_phi_step(y, &mu_vec(x, &beta), phi);
            if phi < PHI_FLOOR {
                phi = 0.0;
                poisson_limit = true;
            }
        }

        let beta_delta = (&beta - &beta_prev).amax();
        let phi_delta = (phi - phi_prev).abs();
        if beta_delta < COEFFICIENT_TOLERANCE && phi_delta < DISPERSION_TOLERANCE {
            break;
        }
        if iterations >= MAX_OUTER_ITERATIONS {
            let beta_slice: Vec<f64> = beta.iter().copied().collect();
            let (gb, gp) = nb_gradient(x, y, &beta_slice, phi);
            let gradient_norm = gb
                .iter()
                .map(|g| g.abs())
                .fold(if poisson_limit { 0.0 } else { gp.abs() }, f64::max);
            return Err(EbError::NonConvergence {
                iterations,
                gradient_norm,
                last_beta: beta_slice,
                last_phi: phi,
            });
        }
    }

    let mu = mu_vec(x, &beta);
    let fitted_mu: Vec<f64> = mu.iter().copied().collect();
    let log_likelihood = nb_log_likelihood(y, &fitted_mu, phi);
    // parameter count includes the dispersion
    let p = cols as f64 + 1.0;
    let aic = -2.0 * log_likelihood + 2.0 * p;
    let bic = -2.0 * log_likelihood + p * (rows as f64).ln();

    let (std_errors, p_values) = wald_inference(x, y, &fitted_mu, &beta, phi)?;

    Ok(SPFModel {
        covariate_names: names.to_vec(),
        coefficients: beta.iter().copied().collect(),
        std_errors,
        p_values,
        overdispersion: phi,
        fitted_mu,
        log_likelihood,
        aic,
        bic,
        poisson_limit,
        iterations,
    })
}

fn mu_vec(x: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta;
    eta.map(|e| e.exp().max(MU_FLOOR))
}

fn moment_phi(y: &[f64], mu: &DVector<f64>) -> f64 {
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let m = mu[i];
        numerator += (yi - m) * (yi - m) - m;
        denominator += m * m;
    }
    if denominator > 0.0 {
        (numerator / denominator).max(0.0)
    } else {
        0.0
    }
}

/// One Fisher-scoring update of β at fixed φ: weighted least squares with
/// weights `μ/(1+φμ)` and working response `η + (y-μ)/μ`.
fn irls_beta_step(
    x: &DMatrix<f64>,
    y: &[f64],
    beta: &DVector<f64>,
    phi: f64,
) -> Result<DVector<f64>, EbError> {
    let rows = x.nrows();
    let cols = x.ncols();
    let eta = x * beta;
    let mut xtwx = DMatrix::<f64>::zeros(cols, cols);
    let mut xtwz = DVector::<f64>::zeros(cols);
    for i in 0..rows {
        let mu = eta[i].exp().max(MU_FLOOR);
        let w = mu / (1.0 + phi * mu);
        let z = eta[i] + (y[i] - mu) / mu;
        for a in 0..cols {
            let xa = x[(i, a)];
            xtwz[a] += w * xa * z;
            for b in a..cols {
                xtwx[(a, b)] += w * xa * x[(i, b)];
            }
        }
    }
    for a in 0..cols {
        for b in 0..a {
            xtwx[(a, b)] = xtwx[(b, a)];
        }
    }
    xtwx.cholesky()
        .map(|ch| ch.solve(&xtwz))
        .ok_or_else(|| {
            EbError::NumericalFailure("weighted normal equations not positive definite".into())
        })
}

/// One safeguarded Newton update of φ at fixed β. The step direction comes
/// from the score (Newton when the curvature is usable, an uphill move
/// otherwise) and is backtracked until the likelihood does not decrease.
/// Iterates pushed to the boundary collapse to 0, the Poisson limit.
fn newton_phi_step(y: &[f64], mu: &DVector<f64>, phi: f64) -> f64 {
    let mu_slice: Vec<f64> = mu.iter().copied().collect();
    let score = dispersion_score(y, &mu_slice, phi);
    if score.abs() < 1e-14 {
        return phi;
    }
    let curvature = dispersion_curvature(y, &mu_slice, phi);
    let raw = if curvature < 0.0 {
        -score / curvature
    } else {
        score.signum() * (0.5 * phi).max(0.1)
    };
    let cap = phi.max(0.1) * 2.0;
    let mut step = raw.clamp(-cap, cap);

    let current = nb_log_likelihood_slice(y, &mu_slice, phi);
    for _ in 0..60 {
        let candidate = phi + step;
        if candidate <= 0.0 {
            // the maximizer sits at the boundary once even tiny iterates
            // keep pointing below it
            if phi <= PHI_FLOOR * 2.0 {
                return 0.0;
            }
            step *= 0.5;
            continue;
        }
        if nb_log_likelihood_slice(y, &mu_slice, candidate) >= current - 1e-12 {
            return candidate;
        }
        step *= 0.5;
    }
    phi
}

fn nb_log_likelihood_slice(y: &[f64], mu: &[f64], phi: f64) -> f64 {
    nb_log_likelihood(y, mu, phi)
}

/// Wald standard errors and chi-square p-values from the observed information
/// β block `Σ μ(1+φy)/(1+φμ)² x xᵀ`.
fn wald_inference(
    x: &DMatrix<f64>,
    y: &[f64],
    mu: &[f64],
    beta: &DVector<f64>,
    phi: f64,
) -> Result<(Vec<f64>, Vec<f64>), EbError> {
    let rows = x.nrows();
    let cols = x.ncols();
    let mut information = DMatrix::<f64>::zeros(cols, cols);
    for i in 0..rows {
        let denom = 1.0 + phi * mu[i];
        let w = mu[i] * (1.0 + phi * y[i]) / (denom * denom);
        for a in 0..cols {
            for b in a..cols {
                information[(a, b)] += w * x[(i, a)] * x[(i, b)];
            }
        }
    }
    for a in 0..cols {
        for b in 0..a {
            information[(a, b)] = information[(b, a)];
        }
    }
    let covariance = information
        .cholesky()
        .ok_or_else(|| EbError::SingularDesign {
            columns: vec!["observed information not positive definite".into()],
        })?
        .inverse();
    let std_errors: Vec<f64> = (0..cols).map(|j| covariance[(j, j)].sqrt()).collect();
    let p_values: Vec<f64> = (0..cols)
        .map(|j| {
            let z = beta[j] / std_errors[j];
            erfc(z.abs() / std::f64::consts::SQRT_2)
        })
        .collect();
    Ok((std_errors, p_values))
}

/// Reject rank-deficient designs, naming the columns a pivoted QR puts past
/// the numerical rank. Columns are normalized to unit length first so the
/// check is scale-invariant (an intercept next to a raw-traffic column must
/// not trip it).
fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<(), EbError> {
    let mut scaled = x.clone();
    for j in 0..scaled.ncols() {
        let norm = scaled.column(j).norm();
        if norm > 0.0 {
            for i in 0..scaled.nrows() {
                scaled[(i, j)] /= norm;
            }
        }
    }
    let qr = scaled.col_piv_qr();
    let r = qr.r();
    let tolerance = 1e-7;
    let rank = (0..x.ncols().min(r.nrows()))
        .take_while(|&j| r[(j, j)].abs() > tolerance)
        .count();
    if rank < x.ncols() {
        // recover the pivot order by permuting an index row the same way the
        // factorization permuted the columns of x
        let mut index_row = DMatrix::<f64>::from_fn(1, x.ncols(), |_, j| j as f64);
        qr.p().permute_columns(&mut index_row);
        let columns: Vec<String> = (rank..x.ncols())
            .map(|j| names[index_row[(0, j)] as usize].clone())
            .collect();
        return Err(EbError::SingularDesign { columns });
    }
    Ok(())
}

/// Predicted means for a design matrix under a fitted model; the column names
/// must match the model's.
pub fn predict_mu(model: &SPFModel, x: &DMatrix<f64>, names: &[String]) -> Result<Vec<f64>, EbError> {
    if names != model.covariate_names.as_slice() {
        return Err(EbError::SchemaMismatch {
            expected: model.covariate_names.clone(),
            actual: names.to_vec(),
        });
    }
    Ok(mu_from(x, &model.coefficients))
}

/// The empirical Bayes blend of model prediction and observed count:
/// `(1 - w) μ + w y` with `w = φμ/(1+φμ)`.
pub fn eb_estimate(mu: f64, phi: f64, y: f64) -> f64 {
    debug_assert!(mu > 0.0 && phi >= 0.0);
    let weight = phi * mu / (1.0 + phi * mu);
    (1.0 - weight) * mu + weight * y
}

/// Pooled design matrix and response for one period of a dataset.
///
/// `covariates` may name numeric covariate columns plus the categorical
/// pseudo-covariates `route_id` and `direction`, which enter as one-hot
/// columns with the first (sorted) level dropped. The intercept is always
/// included. Returns `(x, column_names, y)` with sections pooled in dataset
/// order.
pub fn build_design(
    dataset: &NetworkDataset,
    period: &str,
    covariates: &[String],
) -> Result<(DMatrix<f64>, Vec<String>, Vec<f64>), EbError> {
    let series_indices = dataset.series_indices_for_period(period);
    if series_indices.is_empty() {
        return Err(EbError::EmptyPeriod(period.to_string()));
    }
    let rows: usize = series_indices.iter().map(|&i| dataset.series[i].len()).sum();

    let mut names: Vec<String> = vec!["(Intercept)".into()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; rows]];

    for covariate in covariates {
        match covariate.as_str() {
            "route_id" | "direction" => {
                let mut levels: Vec<String> = series_indices
                    .iter()
                    .map(|&i| categorical_level(&dataset.series[i], covariate))
                    .collect();
                levels.sort();
                levels.dedup();
                // first level is the reference
                for level in levels.iter().skip(1) {
                    let mut column = Vec::with_capacity(rows);
                    for &i in &series_indices {
                        let value =
                            if categorical_level(&dataset.series[i], covariate) == *level {
                                1.0
                            } else {
                                0.0
                            };
                        column.extend(std::iter::repeat(value).take(dataset.series[i].len()));
                    }
                    names.push(format!("{covariate}={level}"));
                    columns.push(column);
                }
            }
            name => {
                let position = dataset
                    .covariate_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| EbError::UnknownCovariate(name.to_string()))?;
                let mut column = Vec::with_capacity(rows);
                for &i in &series_indices {
                    column.extend_from_slice(&dataset.covariate_values[i][position]);
                }
                names.push(name.to_string());
                columns.push(column);
            }
        }
    }

    let y: Vec<f64> = series_indices
        .iter()
        .flat_map(|&i| dataset.series[i].counts.iter().map(|&c| c as f64))
        .collect();

    let x = DMatrix::from_fn(rows, columns.len(), |r, c| columns[c][r]);
    Ok((x, names, y))
}

fn categorical_level(series: &crate::data::SectionSeries, which: &str) -> String {
    match which {
        "route_id" => series.route_id.clone(),
        _ => series.direction.clone(),
    }
}
