//! Propensity scores under the three weighting regimes.
//!
//! * true scores are passed through unchanged,
//! * fitted scores come from a logistic regression of Z on covariates,
//! * calibrated scores come from a logistic regression of Z on an intercept
//!   and the logit of known or externally estimated scores.
//!
//! Logistic fits use Newton-Raphson / IRLS with step-halving.

use nalgebra::{DMatrix, DVector};

use crate::dgp::{logistic, logit};
use crate::error::{Error, Result};

/// Fitted and calibrated scores are clamped into `[SCORE_FLOOR, 1 - SCORE_FLOOR]`.
pub const SCORE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    True,
    Fitted,
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on the max-abs score (gradient) component.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Separation is declared when a coefficient exceeds this in magnitude
    /// before the gradient has converged.
    pub separation_bound: f64,
    /// Ridge penalty on non-intercept coefficients. Zero gives the MLE.
    pub ridge: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
            max_halvings: 30,
            separation_bound: 1e3,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_abs_score_gradient: f64,
    pub log_likelihood: f64,
    /// Set when the coefficient bound was hit before convergence.
    pub separated: bool,
}

impl LogisticFit {
    pub fn n_covariates(&self) -> usize {
        self.coefficients.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityScores {
    pub scores: Vec<f64>,
    pub provenance: Provenance,
    pub model: Option<LogisticFit>,
    /// Number of scores moved by the clamping policy.
    pub clamped: usize,
}

impl PropensityScores {
    /// Wraps known scores; they must already lie strictly inside (0, 1).
    pub fn from_true(scores: Vec<f64>) -> Result<Self> {
        check_interior(&scores)?;
        Ok(Self {
            scores,
            provenance: Provenance::True,
            model: None,
            clamped: 0,
        })
    }

    fn clamped_from(raw: Vec<f64>, provenance: Provenance, model: Option<LogisticFit>) -> Self {
        let mut clamped = 0;
        let scores = raw
            .into_iter()
            .map(|p| {
                let c = p.clamp(SCORE_FLOOR, 1.0 - SCORE_FLOOR);
                if c != p {
                    clamped += 1;
                }
                c
            })
            .collect();
        Self {
            scores,
            provenance,
            model,
            clamped,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores at the given positions, same provenance and model.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
            provenance: self.provenance,
            model: self.model.clone(),
            clamped: if self.clamped == 0 {
                0
            } else {
                idx.iter()
                    .filter(|&&i| {
                        let p = self.scores[i];
                        p == SCORE_FLOOR || p == 1.0 - SCORE_FLOOR
                    })
                    .count()
            },
        }
    }
}

fn check_interior(scores: &[f64]) -> Result<()> {
    match scores.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
        Some(i) => Err(Error::InvalidInput(format!(
            "score {} at position {i} is not strictly inside (0, 1)",
            scores[i]
        ))),
        None => Ok(()),
    }
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::from_element(n, x.ncols() + 1, 1.0);
    out.view_mut((0, 1), (n, x.ncols())).copy_from(x);
    out
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn penalized_ll(xa: &DMatrix<f64>, z: &[bool], beta: &DVector<f64>, ridge: f64) -> f64 {
    let eta = xa * beta;
    let ll: f64 = eta
        .iter()
        .zip(z)
        .map(|(&e, &zi)| if zi { e - softplus(e) } else { -softplus(e) })
        .sum();
    let penalty: f64 = beta.iter().skip(1).map(|b| b * b).sum();
    ll - 0.5 * ridge * penalty
}

fn penalized_score(xa: &DMatrix<f64>, z: &[bool], beta: &DVector<f64>, ridge: f64) -> DVector<f64> {
    let eta = xa * beta;
    let resid = DVector::from_iterator(
        z.len(),
        eta.iter()
            .zip(z)
            .map(|(&e, &zi)| f64::from(u8::from(zi)) - logistic(e)),
    );
    let mut g = xa.tr_mul(&resid);
    for j in 1..g.len() {
        g[j] -= ridge * beta[j];
    }
    g
}

/// Bernoulli log-likelihood of `coefficients` (intercept first) on `x`.
pub fn log_likelihood(x: &DMatrix<f64>, z: &[bool], coefficients: &[f64]) -> f64 {
    penalized_ll(
        &with_intercept(x),
        z,
        &DVector::from_column_slice(coefficients),
        0.0,
    )
}

/// Analytic score vector X'(z - p) of the unpenalized log-likelihood.
pub fn score_vector(x: &DMatrix<f64>, z: &[bool], coefficients: &[f64]) -> Vec<f64> {
    penalized_score(
        &with_intercept(x),
        z,
        &DVector::from_column_slice(coefficients),
        0.0,
    )
    .iter()
    .copied()
    .collect()
}

/// Finds the first column (intercept = 0) that is a linear combination of
/// the ones before it. Two-pass modified Gram-Schmidt.
fn first_dependent_column(xa: &DMatrix<f64>) -> Option<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..xa.ncols() {
        let col = xa.column(j).into_owned();
        let norm = col.norm();
        let mut r = col;
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&r);
                r -= q * proj;
            }
        }
        let rn = r.norm();
        if rn <= 1e-9 * norm || rn == 0.0 {
            return Some(j);
        }
        basis.push(r / rn);
    }
    None
}

/// Logistic MLE of `z` on an intercept plus the columns of `x`.
pub fn fit_logistic(x: &DMatrix<f64>, z: &[bool], opts: &SolverOptions) -> Result<LogisticFit> {
    let names: Vec<String> = (1..=x.ncols()).map(|j| format!("column {j}")).collect();
    fit_logistic_named(x, &names, z, opts)
}

fn newton_step(xa: &DMatrix<f64>, beta: &DVector<f64>, grad: &DVector<f64>, ridge: f64) -> Option<DVector<f64>> {
    let eta = xa * beta;
    let mut weighted = xa.clone();
    for (i, &e) in eta.iter().enumerate() {
        let p = logistic(e);
        weighted.row_mut(i).scale_mut(p * (1.0 - p));
    }
    let mut hessian = xa.tr_mul(&weighted);
    for j in 1..hessian.ncols() {
        hessian[(j, j)] += ridge;
    }
    match hessian.clone().cholesky() {
        Some(ch) => Some(ch.solve(grad)),
        None => hessian.lu().solve(grad),
    }
}

/// As [`fit_logistic`], naming columns in rank-deficiency errors.
pub fn fit_logistic_named(
    x: &DMatrix<f64>,
    names: &[String],
    z: &[bool],
    opts: &SolverOptions,
) -> Result<LogisticFit> {
    let n = x.nrows();
    if z.len() != n {
        return Err(Error::LengthMismatch {
            what: "z",
            got: z.len(),
            expected: n,
        });
    }
    let k = x.ncols() + 1;
    if n < k {
        return Err(Error::InvalidInput(format!(
            "{n} observations cannot identify {k} coefficients"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("design contains non-finite values".into()));
    }
    let treated = z.iter().filter(|&&b| b).count();
    if treated == 0 || treated == n {
        return Err(Error::Separation(format!("{treated} of {n} units treated")));
    }
    let xa = with_intercept(x);
    if let Some(col) = first_dependent_column(&xa) {
        let name = if col == 0 {
            "intercept".to_string()
        } else {
            names
                .get(col - 1)
                .cloned()
                .unwrap_or_else(|| format!("column {col}"))
        };
        return Err(Error::RankDeficient { column: col, name });
    }

    let ridge = opts.ridge;
    let mut beta = DVector::zeros(k);
    beta[0] = logit(treated as f64 / n as f64);
    let mut ll = penalized_ll(&xa, z, &beta, ridge);
    let mut iterations = 0;
    let mut separated = false;

    for _ in 0..opts.max_iterations {
        let grad = penalized_score(&xa, z, &beta, ridge);
        if grad.amax() <= opts.tolerance {
            // One more full step costs little and takes the gradient from
            // the tolerance down to rounding level.
            if let Some(step) = newton_step(&xa, &beta, &grad, ridge) {
                let candidate = &beta + &step;
                let cand_ll = penalized_ll(&xa, z, &candidate, ridge);
                if cand_ll.is_finite()
                    && cand_ll >= ll - 1e-12 * (1.0 + ll.abs())
                    && penalized_score(&xa, z, &candidate, ridge).amax() < grad.amax()
                {
                    beta = candidate;
                    ll = cand_ll;
                    iterations += 1;
                }
            }
            break;
        }
        if beta.amax() > opts.separation_bound {
            separated = true;
            break;
        }
        let Some(step) = newton_step(&xa, &beta, &grad, ridge) else {
            break;
        };

        let mut scale = 1.0;
        let mut accepted = false;
        let slack = 1e-12 * (1.0 + ll.abs());
        for _ in 0..=opts.max_halvings {
            let candidate = &beta + &step * scale;
            let cand_ll = penalized_ll(&xa, z, &candidate, ridge);
            if cand_ll.is_finite() && cand_ll >= ll - slack {
                beta = candidate;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        iterations += 1;
    }

    let grad = penalized_score(&xa, z, &beta, ridge);
    let max_abs = grad.amax();
    let converged = max_abs <= opts.tolerance;
    if !converged && beta.amax() > opts.separation_bound {
        separated = true;
    }
    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        iterations,
        converged,
        max_abs_score_gradient: max_abs,
        log_likelihood: ll,
        separated,
    })
}

/// Applies a fit to new rows (no intercept column in `x_new`).
pub fn predict(fit: &LogisticFit, x_new: &DMatrix<f64>) -> Result<PropensityScores> {
    if x_new.ncols() != fit.n_covariates() {
        return Err(Error::LengthMismatch {
            what: "x_new columns",
            got: x_new.ncols(),
            expected: fit.n_covariates(),
        });
    }
    let raw: Vec<f64> = (0..x_new.nrows())
        .map(|i| {
            let eta = fit.coefficients[0]
                + (0..x_new.ncols())
                    .map(|j| x_new[(i, j)] * fit.coefficients[j + 1])
                    .sum::<f64>();
            logistic(eta)
        })
        .collect();
    Ok(PropensityScores::clamped_from(
        raw,
        Provenance::Fitted,
        Some(fit.clone()),
    ))
}

/// Fits a logistic model and returns its in-sample scores.
pub fn fit_and_predict(
    x: &DMatrix<f64>,
    z: &[bool],
    opts: &SolverOptions,
) -> Result<PropensityScores> {
    let fit = fit_logistic(x, z, opts)?;
    predict(&fit, x)
}

/// One-dimensional logistic calibration of `scores` against `z`.
///
/// Fits `z ~ 1 + logit(scores)`. When the logit is constant the slope is
/// unidentified and the intercept-only fit (the treated fraction) is used.
pub fn calibrate(scores: &[f64], z: &[bool], opts: &SolverOptions) -> Result<PropensityScores> {
    if scores.len() != z.len() {
        return Err(Error::LengthMismatch {
            what: "scores",
            got: scores.len(),
            expected: z.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores to calibrate".into()));
    }
    check_interior(scores)?;
    let r: Vec<f64> = scores.iter().map(|&p| logit(p)).collect();
    let (lo, hi) = r
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let constant = hi - lo <= 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    let x = if constant {
        DMatrix::zeros(r.len(), 0)
    } else {
        DMatrix::from_column_slice(r.len(), 1, &r)
    };
    let fit = fit_logistic_named(&x, &["logit(score)".to_string()], z, opts)?;
    let mut out = predict(&fit, &x)?;
    out.provenance = Provenance::Calibrated;
    Ok(out)
}
