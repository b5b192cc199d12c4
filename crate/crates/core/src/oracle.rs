//! Exact finite-sample variances for stratified IPW designs.
//!
//! A design is a set of covariate cells with fixed sizes. Within each cell
//! the treated count is Binomial(n, p); outcome cell means have
//! E[Ȳ | N] = μ and V[Ȳ | N] = σ²/N. Three estimators are compared:
//!
//! * `true`: IPW with the true cell propensity p,
//! * `hat`: IPW with the empirical cell propensity (stratified difference in
//!   means over cells),
//! * `hat_px`: IPW with the empirical propensity pooled over each group of
//!   cells sharing the same p (stratification on the propensity alone).
//!
//! Every distribution is conditioned on all cells having at least one
//! treated and one control unit, so that every 1/N term is defined. Moments
//! follow from the law of total variance, enumerating all count
//! configurations.

use rand_distr::{Binomial, Distribution, StandardNormal};
use statrs::function::factorial::ln_binomial;

use crate::dgp::TwoBinary;
use crate::error::{Error, Result};
use crate::rng;

const MAX_STATES: u128 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    /// Cells in the same group share one propensity and are pooled by `hat_px`.
    pub group: usize,
    pub n: u32,
    pub p: f64,
    /// Outcome mean indexed by treatment (0 = control, 1 = treated).
    pub mu: [f64; 2],
    pub sigma2: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumDesign {
    cells: Vec<Cell>,
}

impl StratumDesign {
    pub fn new(cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidInput("design has no cells".into()));
        }
        for (i, c) in cells.iter().enumerate() {
            if c.n < 2 {
                return Err(Error::InvalidInput(format!(
                    "cell {i} has n = {}; at least 2 units are needed to fill both arms",
                    c.n
                )));
            }
            if !(c.p > 0.0 && c.p < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "cell {i} propensity {} outside (0, 1)",
                    c.p
                )));
            }
            if c.sigma2.iter().any(|&s| !(s >= 0.0 && s.is_finite()))
                || c.mu.iter().any(|m| !m.is_finite())
            {
                return Err(Error::InvalidInput(format!("cell {i} has invalid moments")));
            }
        }
        for a in &cells {
            for b in &cells {
                if a.group == b.group && a.p != b.p {
                    return Err(Error::InvalidInput(format!(
                        "group {} mixes propensities {} and {}",
                        a.group, a.p, b.p
                    )));
                }
            }
        }
        Ok(Self { cells })
    }

    /// The two-binary-covariate process with fixed (x₁, x₂) cell sizes
    /// `n_x[x1][x2]`, unit outcome variance and groups keyed by x₁.
    pub fn two_binary(n_x: [[u32; 2]; 2], spec: &TwoBinary) -> Result<Self> {
        let mut cells = Vec::with_capacity(4);
        for (x1, row) in n_x.iter().enumerate() {
            for (x2, &n) in row.iter().enumerate() {
                let base = spec.gamma1 * x1 as f64 + spec.gamma2 * x2 as f64;
                cells.push(Cell {
                    group: x1,
                    n,
                    p: spec.propensity(x1 as f64),
                    mu: [base, base + spec.tau],
                    sigma2: [1.0, 1.0],
                });
            }
        }
        Self::new(cells)
    }

    /// Four cells of size `n_x`; propensity `p` when x₁ = 0 and `1 - p` when
    /// x₁ = 1; outcome mean γ₁x₁ + γ₂x₂ + τz with unit variance.
    pub fn symmetric(n_x: u32, p: f64, gamma1: f64, gamma2: f64, tau: f64) -> Result<Self> {
        let mut cells = Vec::with_capacity(4);
        for x1 in 0..2 {
            for x2 in 0..2 {
                let base = gamma1 * x1 as f64 + gamma2 * x2 as f64;
                cells.push(Cell {
                    group: x1,
                    n: n_x,
                    p: if x1 == 0 { p } else { 1.0 - p },
                    mu: [base, base + tau],
                    sigma2: [1.0, 1.0],
                });
            }
        }
        Self::new(cells)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn n_total(&self) -> u32 {
        self.cells.iter().map(|c| c.n).sum()
    }

    fn groups(&self) -> Vec<Vec<usize>> {
        let mut ids: Vec<usize> = self.cells.iter().map(|c| c.group).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.iter()
            .map(|g| {
                (0..self.cells.len())
                    .filter(|&i| self.cells[i].group == *g)
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariancePair {
    pub v_true: f64,
    pub v_hat: f64,
    pub v_hat_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMoments {
    pub true_weights: Moments,
    pub hat: Moments,
    pub hat_px: Moments,
}

impl ExactMoments {
    pub fn variances(&self) -> VariancePair {
        VariancePair {
            v_true: self.true_weights.variance,
            v_hat: self.hat.variance,
            v_hat_px: self.hat_px.variance,
        }
    }
}

/// Binomial(n, p) probabilities for k = 1..n-1, renormalized.
pub fn truncated_binomial(n: u32, p: f64) -> Vec<(u32, f64)> {
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let raw: Vec<(u32, f64)> = (1..n)
        .map(|k| {
            let lpmf = ln_binomial(u64::from(n), u64::from(k)) + f64::from(k) * lp + f64::from(n - k) * lq;
            (k, lpmf.exp())
        })
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter().map(|(k, w)| (k, w / total)).collect()
}

/// Accumulates E[m], E[m²] and E[v] over weighted states.
#[derive(Default, Clone, Copy)]
struct Acc {
    mean: f64,
    second: f64,
    cond_var: f64,
}

impl Acc {
    fn add(&mut self, w: f64, cond_mean: f64, cond_var: f64) {
        self.mean += w * cond_mean;
        self.second += w * cond_mean * cond_mean;
        self.cond_var += w * cond_var;
    }

    /// Law of total variance: E[V | N] + V[E | N].
    fn moments(self) -> Moments {
        Moments {
            mean: self.mean,
            variance: self.cond_var + (self.second - self.mean * self.mean).max(0.0),
        }
    }
}

fn add_moments(a: Moments, b: Moments) -> Moments {
    Moments {
        mean: a.mean + b.mean,
        variance: a.variance + b.variance,
    }
}

/// Exact means and variances of the three estimators.
pub fn exact_moments(design: &StratumDesign) -> Result<ExactMoments> {
    let n = f64::from(design.n_total());
    let zero = Moments { mean: 0.0, variance: 0.0 };
    let mut true_w = zero;
    let mut hat = zero;

    // Cells are independent, so per-cell contributions add.
    for c in design.cells() {
        let nc = f64::from(c.n);
        let share = nc / n;
        let mut acc_true = Acc::default();
        let mut acc_hat = Acc::default();
        for (k, w) in truncated_binomial(c.n, c.p) {
            let k1 = f64::from(k);
            let k0 = nc - k1;
            let (p1, p0) = (c.p, 1.0 - c.p);
            acc_true.add(
                w,
                (k1 * c.mu[1] / p1 - k0 * c.mu[0] / p0) / n,
                (k1 * c.sigma2[1] / (p1 * p1) + k0 * c.sigma2[0] / (p0 * p0)) / (n * n),
            );
            acc_hat.add(
                w,
                share * (c.mu[1] - c.mu[0]),
                share * share * (c.sigma2[1] / k1 + c.sigma2[0] / k0),
            );
        }
        true_w = add_moments(true_w, acc_true.moments());
        hat = add_moments(hat, acc_hat.moments());
    }

    // Groups are independent; cells inside a group are enumerated jointly.
    let mut hat_px = zero;
    for members in design.groups() {
        let cells: Vec<Cell> = members.iter().map(|&i| design.cells()[i]).collect();
        let pmfs: Vec<Vec<(u32, f64)>> = cells.iter().map(|c| truncated_binomial(c.n, c.p)).collect();
        let states: u128 = pmfs.iter().map(|v| v.len() as u128).product();
        if states > MAX_STATES {
            return Err(Error::EnumerationTooLarge(states));
        }
        let n_group: f64 = cells.iter().map(|c| f64::from(c.n)).sum();
        let share = n_group / n;
        let mut acc = Acc::default();
        let mut idx = vec![0usize; cells.len()];
        loop {
            let mut w = 1.0;
            let (mut t1, mut t0) = (0.0, 0.0);
            let (mut m1, mut m0) = (0.0, 0.0);
            let (mut v1, mut v0) = (0.0, 0.0);
            for (j, c) in cells.iter().enumerate() {
                let (k, wk) = pmfs[j][idx[j]];
                w *= wk;
                let k1 = f64::from(k);
                let k0 = f64::from(c.n) - k1;
                t1 += k1;
                t0 += k0;
                m1 += k1 * c.mu[1];
                m0 += k0 * c.mu[0];
                v1 += k1 * c.sigma2[1];
                v0 += k0 * c.sigma2[0];
            }
            acc.add(
                w,
                share * (m1 / t1 - m0 / t0),
                share * share * (v1 / (t1 * t1) + v0 / (t0 * t0)),
            );
            // odometer
            let mut j = 0;
            loop {
                if j == idx.len() {
                    break;
                }
                idx[j] += 1;
                if idx[j] < pmfs[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == idx.len() {
                break;
            }
        }
        hat_px = add_moments(hat_px, acc.moments());
    }

    Ok(ExactMoments {
        true_weights: true_w,
        hat,
        hat_px,
    })
}

pub fn exact_variances(design: &StratumDesign) -> Result<VariancePair> {
    Ok(exact_moments(design)?.variances())
}

/// Inflation factors on E[V[Ȳ_z | N]] in the closed-form true-weight
/// variance: (n p(1−p) + n²p²)/(n²p²) for the treated arm and the mirror
/// expression for the control arm. Both exceed 1 for n > 0 and 0 < p < 1.
pub fn true_weight_inflation(n: u32, p: f64) -> (f64, f64) {
    let n = f64::from(n);
    let q = 1.0 - p;
    (
        (n * p * q + n * n * p * p) / (n * n * p * p),
        (n * p * q + n * n * q * q) / (n * n * q * q),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormCheck {
    pub exact: f64,
    pub closed_form: f64,
    pub agrees: bool,
}

/// Compares the factored closed form of the true-weight variance with the
/// enumeration. The closed form multiplies an inflation factor into
/// E[V[Ȳ | N]]; the enumeration does not assume that factorization, and the
/// two disagree under the non-empty conditioning. Reported, not asserted.
pub fn closed_form_true_variance(design: &StratumDesign) -> Result<ClosedFormCheck> {
    let n = f64::from(design.n_total());
    let exact = exact_moments(design)?.true_weights.variance;
    let mut closed = 0.0;
    for c in design.cells() {
        let nc = f64::from(c.n);
        let share2 = (nc / n).powi(2);
        let (infl1, infl0) = true_weight_inflation(c.n, c.p);
        let mut e_v1 = 0.0;
        let mut e_v0 = 0.0;
        let mut between = Acc::default();
        for (k, w) in truncated_binomial(c.n, c.p) {
            let k1 = f64::from(k);
            let k0 = nc - k1;
            e_v1 += w * c.sigma2[1] / k1;
            e_v0 += w * c.sigma2[0] / k0;
            between.add(
                w,
                k1 / (nc * c.p) * c.mu[1] - k0 / (nc * (1.0 - c.p)) * c.mu[0],
                0.0,
            );
        }
        closed += share2 * (infl1 * e_v1 + infl0 * e_v0 + between.moments().variance);
    }
    let agrees = (closed - exact).abs() <= 1e-9 * exact.abs().max(1e-300);
    Ok(ClosedFormCheck {
        exact,
        closed_form: closed,
        agrees,
    })
}

/// One stratum of the first covariate with fixed arm sizes; the second
/// binary covariate splits each arm as Binomial(arm size, 1/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDesign {
    pub n_total: u32,
    /// Arm sizes indexed by treatment.
    pub n_arm: [u32; 2],
    /// Outcome means indexed `[x2][z]`.
    pub mu: [[f64; 2]; 2],
    pub sigma2: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitVariances {
    pub hat: Moments,
    pub hat_px: Moments,
}

/// Exact moments of the cell-stratified and the pooled estimator over the
/// second-covariate split, conditioned on no empty (x₂, z) cell.
pub fn split_variances(d: &SplitDesign) -> Result<SplitVariances> {
    if d.n_arm.iter().any(|&a| a < 2) {
        return Err(Error::InvalidInput(
            "each arm needs at least 2 units to populate both x2 levels".into(),
        ));
    }
    let stratum = f64::from(d.n_arm[0] + d.n_arm[1]);
    if f64::from(d.n_total) < stratum {
        return Err(Error::InvalidInput("n_total smaller than the stratum".into()));
    }
    let n = f64::from(d.n_total);
    let treated = truncated_binomial(d.n_arm[1], 0.5);
    let control = truncated_binomial(d.n_arm[0], 0.5);
    let (a1, a0) = (f64::from(d.n_arm[1]), f64::from(d.n_arm[0]));
    let mut hat = Acc::default();
    let mut px = Acc::default();
    for &(t, wt) in &treated {
        for &(c, wc) in &control {
            let w = wt * wc;
            // counts[x2][z]
            let counts = [
                [a0 - f64::from(c), a1 - f64::from(t)],
                [f64::from(c), f64::from(t)],
            ];
            let mut mean_hat = 0.0;
            let mut var_hat = 0.0;
            let mut m1 = 0.0;
            let mut m0 = 0.0;
            let mut v1 = 0.0;
            let mut v0 = 0.0;
            for x2 in 0..2 {
                let size = counts[x2][0] + counts[x2][1];
                let share = size / n;
                mean_hat += share * (d.mu[x2][1] - d.mu[x2][0]);
                var_hat += share * share
                    * (d.sigma2[x2][1] / counts[x2][1] + d.sigma2[x2][0] / counts[x2][0]);
                m1 += counts[x2][1] * d.mu[x2][1];
                m0 += counts[x2][0] * d.mu[x2][0];
                v1 += counts[x2][1] * d.sigma2[x2][1];
                v0 += counts[x2][0] * d.sigma2[x2][0];
            }
            hat.add(w, mean_hat, var_hat);
            let share = stratum / n;
            px.add(
                w,
                share * (m1 / a1 - m0 / a0),
                share * share * (v1 / (a1 * a1) + v0 / (a0 * a0)),
            );
        }
    }
    Ok(SplitVariances {
        hat: hat.moments(),
        hat_px: px.moments(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Exact equality, decided in integer arithmetic.
    pub equality: bool,
}

/// Evaluates (a+b+c+d)²/(a+c) ≤ (a+b)²/a + (c+d)²/c.
///
/// `a` and `c` are treated counts and must be positive; `b` and `d` are the
/// matching control counts.
pub fn appb_inequality(a: u64, b: u64, c: u64, d: u64) -> Result<InequalityCheck> {
    if a == 0 || c == 0 {
        return Err(Error::InvalidInput(format!(
            "treated counts must be positive (a = {a}, c = {c}): empty stratum"
        )));
    }
    let (fa, fb, fc, fd) = (a as f64, b as f64, c as f64, d as f64);
    let lhs = (fa + fb + fc + fd).powi(2) / (fa + fc);
    let rhs = (fa + fb).powi(2) / fa + (fc + fd).powi(2) / fc;
    // Cross-multiplied by a·c·(a+c) > 0.
    let (a, b, c, d) = (a as u128, b as u128, c as u128, d as u128);
    let left = (a + b + c + d).pow(2) * a * c;
    let right = ((a + b).pow(2) * c + (c + d).pow(2) * a) * (a + c);
    Ok(InequalityCheck {
        lhs,
        rhs,
        holds: left <= right,
        equality: left == right,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianMinors {
    pub m1: f64,
    pub m2: f64,
    pub det: f64,
}

/// Principal minors of the Hessian of f(x, y) = (x + y)²/y.
pub fn hessian_minors(x: f64, y: f64) -> Result<HessianMinors> {
    if !(y > 0.0) || !x.is_finite() || !y.is_finite() {
        return Err(Error::InvalidInput(format!("need finite x and y > 0, got ({x}, {y})")));
    }
    // f_xx·f_yy and f_xy² both reduce to 4x²/y⁴; the determinant is their
    // difference in that reduced form.
    let diag_product = 4.0 * x * x / y.powi(4);
    let off_diag_squared = 4.0 * x * x / y.powi(4);
    Ok(HessianMinors {
        m1: 2.0 / y,
        m2: 2.0 * x * x / (y * y * y),
        det: diag_product - off_diag_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleEstimator {
    True,
    Hat,
    HatPx,
}

impl OracleEstimator {
    pub fn as_str(self) -> &'static str {
        match self {
            OracleEstimator::True => "true",
            OracleEstimator::Hat => "hat",
            OracleEstimator::HatPx => "hat_px",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McVariance {
    pub mean: f64,
    pub variance: f64,
    /// Jackknife standard error of `variance`.
    pub se: f64,
    /// Replications redrawn because a cell arm was empty.
    pub redraws: u64,
}

/// Sample variance and its leave-one-out jackknife standard error.
pub fn jackknife_variance(values: &[f64]) -> (f64, f64, f64) {
    let m = values.len();
    let mf = m as f64;
    let mean = values.iter().sum::<f64>() / mf;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let var = ss / (mf - 1.0);
    // Leave-one-out: SS₋ᵢ = SS − (xᵢ − x̄)²·m/(m−1), variance SS₋ᵢ/(m−2).
    let loo: Vec<f64> = values
        .iter()
        .map(|v| (ss - (v - mean).powi(2) * mf / (mf - 1.0)) / (mf - 2.0))
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / mf;
    let jk = ((mf - 1.0) / mf * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>()).sqrt();
    (mean, var, jk)
}

/// Monte-Carlo variance of one estimator under the design, redrawing any
/// replication with an empty cell arm.
pub fn mc_variance(
    design: &StratumDesign,
    estimator: OracleEstimator,
    reps: usize,
    seed: u64,
) -> Result<McVariance> {
    if reps < 1000 {
        return Err(Error::InvalidInput(format!("reps must be >= 1000, got {reps}")));
    }
    let cells = design.cells();
    let binomials: Vec<Binomial> = cells
        .iter()
        .map(|c| Binomial::new(u64::from(c.n), c.p).map_err(|e| Error::InvalidInput(e.to_string())))
        .collect::<Result<_>>()?;
    let groups = design.groups();
    let n = f64::from(design.n_total());
    let mut r = rng::stream(seed);
    let mut values = Vec::with_capacity(reps);
    let mut counts = vec![0u64; cells.len()];
    let mut means = vec![[0.0f64; 2]; cells.len()];
    let mut redraws = 0u64;
    for _ in 0..reps {
        loop {
            for (k, b) in counts.iter_mut().zip(&binomials) {
                *k = b.sample(&mut r);
            }
            if cells.iter().zip(&counts).all(|(c, &k)| k >= 1 && k < u64::from(c.n)) {
                break;
            }
            redraws += 1;
        }
        for (j, c) in cells.iter().enumerate() {
            let k1 = counts[j] as f64;
            let k0 = f64::from(c.n) - k1;
            for (z, size) in [(0, k0), (1, k1)] {
                let e: f64 = StandardNormal.sample(&mut r);
                means[j][z] = c.mu[z] + e * (c.sigma2[z] / size).sqrt();
            }
        }
        let value = match estimator {
            OracleEstimator::True => cells
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let k1 = counts[j] as f64;
                    let k0 = f64::from(c.n) - k1;
                    (k1 * means[j][1] / c.p - k0 * means[j][0] / (1.0 - c.p)) / n
                })
                .sum(),
            OracleEstimator::Hat => cells
                .iter()
                .enumerate()
                .map(|(j, c)| f64::from(c.n) / n * (means[j][1] - means[j][0]))
                .sum(),
            OracleEstimator::HatPx => groups
                .iter()
                .map(|members| {
                    let (mut s1, mut s0, mut t1, mut t0, mut size) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for &j in members {
                        let k1 = counts[j] as f64;
                        let k0 = f64::from(cells[j].n) - k1;
                        s1 += k1 * means[j][1];
                        s0 += k0 * means[j][0];
                        t1 += k1;
                        t0 += k0;
                        size += f64::from(cells[j].n);
                    }
                    size / n * (s1 / t1 - s0 / t0)
                })
                .sum(),
        };
        values.push(value);
    }
    let (mean, variance, se) = jackknife_variance(&values);
    Ok(McVariance {
        mean,
        variance,
        se,
        redraws,
    })
}
