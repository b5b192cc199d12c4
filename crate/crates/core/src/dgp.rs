//! Data-generating processes and MCAR outcome labeling.
//!
//! Three processes are available:
//!
//! * `two_binary`: two Bernoulli(1/2) covariates, a logistic propensity in
//!   the first covariate only, and a Gaussian outcome linear in both.
//! * `hahn`: five covariates (three Gaussian, one binary, one three-level
//!   categorical), a piecewise prognostic function and either randomized or
//!   targeted treatment assignment.
//! * `linear_misspec`: Gaussian covariates with a linear outcome and a
//!   logistic propensity, one distinguished covariate whose confounding role
//!   and propensity strength are configurable.
//!
//! All three have a homogeneous treatment effect, so `tau` is the ATE.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::design::Term;
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBinary {
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub tau: f64,
}

impl Default for TwoBinary {
    /// Propensities {0.3, 0.7}; X₂ carries no outcome signal.
    fn default() -> Self {
        Self {
            alpha1: -0.8473,
            alpha2: 1.6946,
            gamma1: 2.0,
            gamma2: 0.0,
            tau: 1.0,
        }
    }
}

impl TwoBinary {
    /// Treatment probability for a unit with first covariate `x1`.
    pub fn propensity(&self, x1: f64) -> f64 {
        logistic(self.alpha1 + self.alpha2 * x1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Randomized,
    Targeted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hahn {
    pub assignment: Assignment,
    pub tau: f64,
}

impl Hahn {
    pub fn new(assignment: Assignment) -> Self {
        Self {
            assignment,
            tau: 3.0,
        }
    }
}

/// How the nuisance coefficients of the misspecification process are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientDraw {
    /// β and γ are redrawn from their uniform ranges for every dataset.
    PerDataset,
    /// Fixed (β, γ), each of length p. Generated datasets record their
    /// realized coefficients this way.
    Fixed { beta: Vec<f64>, gamma: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMisspec {
    pub p: usize,
    pub xj_index: usize,
    pub xj_confounder: bool,
    pub gamma_xj: f64,
    pub tau: f64,
    pub coefficients: CoefficientDraw,
}

impl LinearMisspec {
    pub fn new(p: usize, xj_confounder: bool, gamma_xj: f64) -> Self {
        Self {
            p,
            xj_index: 0,
            xj_confounder,
            gamma_xj,
            tau: 3.0,
            coefficients: CoefficientDraw::PerDataset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DgpSpec {
    TwoBinary(TwoBinary),
    Hahn(Hahn),
    LinearMisspec(LinearMisspec),
}

impl DgpSpec {
    /// Ground-truth average treatment effect.
    pub fn tau(&self) -> f64 {
        match self {
            DgpSpec::TwoBinary(s) => s.tau,
            DgpSpec::Hahn(s) => s.tau,
            DgpSpec::LinearMisspec(s) => s.tau,
        }
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            DgpSpec::TwoBinary(s) => s.tau = tau,
            DgpSpec::Hahn(s) => s.tau = tau,
            DgpSpec::LinearMisspec(s) => s.tau = tau,
        }
        out
    }

    pub fn name(&self) -> &'static str {
        match self {
            DgpSpec::TwoBinary(_) => "two_binary",
            DgpSpec::Hahn(Hahn {
                assignment: Assignment::Randomized,
                ..
            }) => "hahn_randomized",
            DgpSpec::Hahn(Hahn {
                assignment: Assignment::Targeted,
                ..
            }) => "hahn_targeted",
            DgpSpec::LinearMisspec(_) => "linear_misspec",
        }
    }

    /// Smallest sample the process can generate.
    pub fn min_n(&self) -> usize {
        match self {
            DgpSpec::Hahn(h) if h.assignment == Assignment::Targeted => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be finite, got {v}")))
            }
        };
        match self {
            DgpSpec::TwoBinary(s) => {
                finite("alpha1", s.alpha1)?;
                finite("alpha2", s.alpha2)?;
                finite("gamma1", s.gamma1)?;
                finite("gamma2", s.gamma2)?;
                finite("tau", s.tau)
            }
            DgpSpec::Hahn(s) => finite("tau", s.tau),
            DgpSpec::LinearMisspec(s) => {
                finite("tau", s.tau)?;
                finite("gamma_xj", s.gamma_xj)?;
                if s.p < 2 {
                    return Err(Error::InvalidInput(format!("p must be >= 2, got {}", s.p)));
                }
                if s.xj_index >= s.p {
                    return Err(Error::InvalidInput(format!(
                        "xj_index {} out of range for p = {}",
                        s.xj_index, s.p
                    )));
                }
                if let CoefficientDraw::Fixed { beta, gamma } = &s.coefficients {
                    if beta.len() != s.p || gamma.len() != s.p {
                        return Err(Error::InvalidInput(format!(
                            "fixed coefficients must have length p = {}",
                            s.p
                        )));
                    }
                    for v in beta.iter().chain(gamma) {
                        finite("coefficient", *v)?;
                    }
                }
                Ok(())
            }
        }
    }

    /// Covariate terms entering a fitted propensity model.
    ///
    /// `two_binary` uses the saturated cell model on (X₁, X₂); `hahn` uses
    /// X₁..X₄ linearly with X₅ as an unordered categorical; `linear_misspec`
    /// uses every covariate linearly.
    pub fn propensity_terms(&self) -> Vec<Term> {
        match self {
            DgpSpec::TwoBinary(_) => vec![Term::Categorical(vec![0, 1])],
            DgpSpec::Hahn(_) => vec![
                Term::Numeric(0),
                Term::Numeric(1),
                Term::Numeric(2),
                Term::Numeric(3),
                Term::Categorical(vec![4]),
            ],
            DgpSpec::LinearMisspec(s) => (0..s.p).map(Term::Numeric).collect(),
        }
    }

    /// Draws a dataset of `n` units.
    pub fn generate(&self, n: usize, rng: &mut Stream) -> Result<Dataset> {
        match self {
            DgpSpec::TwoBinary(s) => generate_two_binary(s, n, rng),
            DgpSpec::Hahn(s) => generate_hahn(s, n, rng),
            DgpSpec::LinearMisspec(s) => generate_linear_misspec(s, n, rng),
        }
    }
}

/// One simulated sample. Every unit starts labeled; see [`label_mcar`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub z: Vec<bool>,
    pub y: Vec<f64>,
    pub labeled: Vec<bool>,
    /// Realized P(Z = 1 | X) per unit, including any assignment noise.
    pub true_scores: Vec<f64>,
    pub spec: DgpSpec,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_labeled(&self) -> usize {
        self.labeled.iter().filter(|&&l| l).count()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labeled[i]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        let check = |what: &'static str, got: usize| {
            if got == n {
                Ok(())
            } else {
                Err(Error::LengthMismatch {
                    what,
                    got,
                    expected: n,
                })
            }
        };
        check("x rows", self.x.nrows())?;
        check("z", self.z.len())?;
        check("labeled", self.labeled.len())?;
        check("true_scores", self.true_scores.len())?;
        if let Some(i) = self.true_scores.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidInput(format!(
                "positivity violated at unit {i}: true score {}",
                self.true_scores[i]
            )));
        }
        Ok(())
    }

    /// Writes `x1..xp,z,y,labeled,true_score` with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let p = self.x.ncols();
        let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
        header.extend(["z", "y", "labeled", "true_score"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut row: Vec<String> = (0..p).map(|j| self.x[(i, j)].to_string()).collect();
            row.push(u8::from(self.z[i]).to_string());
            row.push(self.y[i].to_string());
            row.push(u8::from(self.labeled[i]).to_string());
            row.push(self.true_scores[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Keeps a mathematically interior probability representable as interior.
/// The logistic of |η| > ~37 rounds to exactly 0 or 1 in f64.
fn interior(p: f64) -> f64 {
    const LO: f64 = f64::MIN_POSITIVE;
    const HI: f64 = 1.0 - f64::EPSILON / 2.0;
    p.clamp(LO, HI)
}

fn bernoulli(rng: &mut Stream, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn normal(rng: &mut Stream) -> f64 {
    StandardNormal.sample(rng)
}

fn check_n(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::InvalidInput(format!("n must be >= {min}, got {n}")));
    }
    Ok(())
}

pub fn generate_two_binary(spec: &TwoBinary, n: usize, rng: &mut Stream) -> Result<Dataset> {
    let full = DgpSpec::TwoBinary(*spec);
    full.validate()?;
    check_n(n, 1)?;
    let mut x = DMatrix::zeros(n, 2);
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let x1 = f64::from(u8::from(bernoulli(rng, 0.5)));
        let x2 = f64::from(u8::from(bernoulli(rng, 0.5)));
        let p = interior(spec.propensity(x1));
        let zi = bernoulli(rng, p);
        let mean = spec.gamma1 * x1 + spec.gamma2 * x2 + spec.tau * f64::from(u8::from(zi));
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        z.push(zi);
        y.push(mean + normal(rng));
        scores.push(p);
    }
    Ok(Dataset {
        x,
        z,
        y,
        labeled: vec![true; n],
        true_scores: scores,
        spec: full,
    })
}

/// Prognostic function, piecewise in the level of X₅.
pub fn hahn_mu(x1: f64, x3: f64, x5: u8) -> f64 {
    let offset = match x5 {
        1 => 3.0,
        2 => 0.0,
        _ => -3.0,
    };
    offset + x1 * x3
}

/// Same prognostic function written as 1 + g(X₅) + X₁X₃.
pub fn hahn_mu_additive(x1: f64, x3: f64, x5: u8) -> f64 {
    let g = match x5 {
        1 => 2.0,
        2 => -1.0,
        _ => -4.0,
    };
    1.0 + g + x1 * x3
}

pub fn generate_hahn(spec: &Hahn, n: usize, rng: &mut Stream) -> Result<Dataset> {
    let full = DgpSpec::Hahn(*spec);
    full.validate()?;
    check_n(n, full.min_n())?;
    let mut x = DMatrix::zeros(n, 5);
    let mut mu = Vec::with_capacity(n);
    for i in 0..n {
        let x1 = normal(rng);
        let x2 = normal(rng);
        let x3 = normal(rng);
        let x4 = f64::from(u8::from(bernoulli(rng, 0.5)));
        let u: f64 = rng.random();
        let x5: u8 = if u < 0.25 {
            1
        } else if u < 0.75 {
            2
        } else {
            3
        };
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        x[(i, 2)] = x3;
        x[(i, 3)] = x4;
        x[(i, 4)] = f64::from(x5);
        mu.push(hahn_mu(x1, x3, x5));
    }

    let scores: Vec<f64> = match spec.assignment {
        Assignment::Randomized => vec![0.5; n],
        Assignment::Targeted => {
            let s = sample_sd(&mu);
            if !(s > 0.0) {
                return Err(Error::Degenerate(
                    "prognostic values have zero sample standard deviation".into(),
                ));
            }
            (0..n)
                .map(|i| {
                    let u: f64 = rng.random();
                    0.8 * std_normal_cdf(3.0 * mu[i] / s - 0.5 * x[(i, 0)]) + 0.05 + u / 10.0
                })
                .collect()
        }
    };

    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let zi = bernoulli(rng, scores[i]);
        z.push(zi);
        y.push(mu[i] + spec.tau * f64::from(u8::from(zi)) + normal(rng));
    }
    Ok(Dataset {
        x,
        z,
        y,
        labeled: vec![true; n],
        true_scores: scores,
        spec: full,
    })
}

pub fn generate_linear_misspec(
    spec: &LinearMisspec,
    n: usize,
    rng: &mut Stream,
) -> Result<Dataset> {
    DgpSpec::LinearMisspec(spec.clone()).validate()?;
    check_n(n, 1)?;
    let p = spec.p;
    let (beta, gamma) = match &spec.coefficients {
        CoefficientDraw::Fixed { beta, gamma } => (beta.clone(), gamma.clone()),
        CoefficientDraw::PerDataset => {
            let mut beta: Vec<f64> = (0..p).map(|_| rng.random_range(-0.5..0.5)).collect();
            let mut gamma: Vec<f64> = (0..p).map(|_| rng.random_range(-0.3..0.3)).collect();
            beta[spec.xj_index] = if spec.xj_confounder { 0.5 } else { 0.0 };
            gamma[spec.xj_index] = spec.gamma_xj;
            (beta, gamma)
        }
    };

    let mut x = DMatrix::zeros(n, p);
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let mut eta = 0.0;
        let mut lin = 0.0;
        for j in 0..p {
            let v = normal(rng);
            x[(i, j)] = v;
            eta += v * gamma[j];
            lin += v * beta[j];
        }
        let ps = interior(logistic(eta));
        let zi = bernoulli(rng, ps);
        z.push(zi);
        y.push(lin + spec.tau * f64::from(u8::from(zi)) + normal(rng));
        scores.push(ps);
    }
    let realized = LinearMisspec {
        coefficients: CoefficientDraw::Fixed { beta, gamma },
        ..spec.clone()
    };
    Ok(Dataset {
        x,
        z,
        y,
        labeled: vec![true; n],
        true_scores: scores,
        spec: DgpSpec::LinearMisspec(realized),
    })
}

/// Marks exactly `n_labeled` units as labeled, uniformly without replacement.
pub fn label_mcar(ds: &Dataset, n_labeled: usize, rng: &mut Stream) -> Result<Dataset> {
    let n = ds.n();
    if n_labeled == 0 || n_labeled > n {
        return Err(Error::InvalidInput(format!(
            "n_labeled must be in 1..={n}, got {n_labeled}"
        )));
    }
    let mut labeled = vec![false; n];
    for i in index::sample(rng, n, n_labeled) {
        labeled[i] = true;
    }
    Ok(Dataset {
        labeled,
        ..ds.clone()
    })
}

pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return f64::NAN;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let ss: f64 = v.iter().map(|a| (a - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn table_spec() -> TwoBinary {
        TwoBinary::default()
    }

    #[test]
    fn two_binary_scores_are_point_three_and_point_seven() {
        let ds = generate_two_binary(&table_spec(), 200, &mut rng::stream(1)).unwrap();
        for (i, &p) in ds.true_scores.iter().enumerate() {
            let expected = if ds.x[(i, 0)] == 1.0 { 0.7 } else { 0.3 };
            assert!((p - expected).abs() < 5e-5, "unit {i}: {p}");
        }
        ds.validate().unwrap();
    }

    #[test]
    fn zero_alpha_gives_half() {
        let spec = TwoBinary {
            alpha1: 0.0,
            alpha2: 0.0,
            ..table_spec()
        };
        let ds = generate_two_binary(&spec, 50, &mut rng::stream(2)).unwrap();
        assert!(ds.true_scores.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn non_finite_parameter_rejected() {
        let spec = TwoBinary {
            gamma1: f64::NAN,
            ..table_spec()
        };
        assert!(matches!(
            generate_two_binary(&spec, 10, &mut rng::stream(0)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn two_binary_treated_fraction_matches_mixture() {
        let n = 1_000_000;
        let ds = generate_two_binary(&table_spec(), n, &mut rng::stream(3)).unwrap();
        let mean = ds.z.iter().filter(|&&z| z).count() as f64 / n as f64;
        // mixture 0.5 * 0.3 + 0.5 * 0.7; Var(Z) = 0.25
        let target = 0.5 * 0.3 + 0.5 * 0.7;
        let se = (0.25 / n as f64).sqrt();
        assert!((mean - target).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn two_binary_conditional_treatment_passes_chi_square() {
        let n = 100_000;
        let spec = table_spec();
        let ds = generate_two_binary(&spec, n, &mut rng::stream(4)).unwrap();
        let mut counts = [[0.0f64; 2]; 2];
        for i in 0..n {
            counts[ds.x[(i, 0)] as usize][usize::from(ds.z[i])] += 1.0;
        }
        let mut stat = 0.0;
        for x1 in 0..2 {
            let nx = counts[x1][0] + counts[x1][1];
            let p = spec.propensity(x1 as f64);
            for (z, prob) in [(0, 1.0 - p), (1, p)] {
                let e = nx * prob;
                stat += (counts[x1][z] - e).powi(2) / e;
            }
        }
        let critical = ChiSquared::new(2.0).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "chi2 {stat} >= {critical}");
    }

    #[test]
    fn hahn_mu_piecewise_examples() {
        assert_eq!(hahn_mu(0.0, 0.0, 1), 3.0);
        assert_eq!(hahn_mu(0.0, 0.0, 2), 0.0);
        assert_eq!(hahn_mu(0.0, 0.0, 3), -3.0);
        assert_eq!(hahn_mu(2.0, -1.5, 3), -6.0);
    }

    #[test]
    fn hahn_mu_forms_coincide() {
        let ds = generate_hahn(&Hahn::new(Assignment::Targeted), 2000, &mut rng::stream(5)).unwrap();
        for i in 0..ds.n() {
            let (x1, x3, x5) = (ds.x[(i, 0)], ds.x[(i, 2)], ds.x[(i, 4)] as u8);
            assert_eq!(hahn_mu(x1, x3, x5), hahn_mu_additive(x1, x3, x5));
        }
    }

    #[test]
    fn hahn_randomized_scores_are_half() {
        let ds = generate_hahn(&Hahn::new(Assignment::Randomized), 500, &mut rng::stream(6)).unwrap();
        assert!(ds.true_scores.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn hahn_targeted_scores_bounded() {
        let ds = generate_hahn(&Hahn::new(Assignment::Targeted), 5000, &mut rng::stream(7)).unwrap();
        assert!(ds.true_scores.iter().all(|&p| (0.05..=0.95).contains(&p)));
        ds.validate().unwrap();
    }

    #[test]
    fn hahn_targeted_needs_two_units() {
        let spec = Hahn::new(Assignment::Targeted);
        assert!(matches!(
            generate_hahn(&spec, 1, &mut rng::stream(0)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn hahn_categorical_levels_are_one_two_three() {
        let ds = generate_hahn(&Hahn::new(Assignment::Randomized), 4000, &mut rng::stream(8)).unwrap();
        let mut freq = [0usize; 3];
        for i in 0..ds.n() {
            freq[ds.x[(i, 4)] as usize - 1] += 1;
        }
        let f: Vec<f64> = freq.iter().map(|&c| c as f64 / 4000.0).collect();
        assert!((f[0] - 0.25).abs() < 0.03 && (f[1] - 0.5).abs() < 0.03 && (f[2] - 0.25).abs() < 0.03);
    }

    #[test]
    fn misspec_confounder_sets_beta_half() {
        let spec = LinearMisspec::new(5, true, 1.0);
        let ds = generate_linear_misspec(&spec, 10, &mut rng::stream(9)).unwrap();
        let DgpSpec::LinearMisspec(realized) = &ds.spec else {
            unreachable!()
        };
        let CoefficientDraw::Fixed { beta, gamma } = &realized.coefficients else {
            panic!("realized coefficients missing")
        };
        assert_eq!(beta[0], 0.5);
        assert_eq!(gamma[0], 1.0);
        assert!(beta[1..].iter().all(|b| (-0.5..0.5).contains(b)));
        assert!(gamma[1..].iter().all(|g| (-0.3..0.3).contains(g)));

        let spec = LinearMisspec::new(5, false, 1.0);
        let ds = generate_linear_misspec(&spec, 10, &mut rng::stream(9)).unwrap();
        let DgpSpec::LinearMisspec(LinearMisspec {
            coefficients: CoefficientDraw::Fixed { beta, .. },
            ..
        }) = &ds.spec
        else {
            unreachable!()
        };
        assert_eq!(beta[0], 0.0);
    }

    #[test]
    fn misspec_zero_gamma_gives_half() {
        let spec = LinearMisspec {
            coefficients: CoefficientDraw::Fixed {
                beta: vec![0.1; 4],
                gamma: vec![0.0; 4],
            },
            ..LinearMisspec::new(4, true, 0.0)
        };
        let ds = generate_linear_misspec(&spec, 100, &mut rng::stream(10)).unwrap();
        assert!(ds.true_scores.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn misspec_strong_gamma_pushes_scores_to_extremes() {
        // Quadrature oracle: P(logistic(10 X) outside (0.05, 0.95)) for X ~ N(0, 1).
        let cut = logit(0.95);
        let steps = 200_000;
        let (lo, hi) = (-10.0f64, 10.0f64);
        let h = (hi - lo) / steps as f64;
        let mut oracle = 0.0;
        for k in 0..steps {
            let x = lo + (k as f64 + 0.5) * h;
            if (10.0 * x).abs() >= cut {
                oracle += (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt() * h;
            }
        }
        let spec = LinearMisspec::new(5, false, 10.0);
        let ds = generate_linear_misspec(&spec, 100_000, &mut rng::stream(11)).unwrap();
        let frac = ds
            .true_scores
            .iter()
            .filter(|&&p| p <= 0.05 || p >= 0.95)
            .count() as f64
            / ds.n() as f64;
        assert!(frac > 0.5, "fraction {frac}");
        // remaining covariates only widen the linear predictor slightly
        assert!((frac - oracle).abs() < 0.05, "fraction {frac}, oracle {oracle}");
        ds.validate().unwrap();
    }

    #[test]
    fn misspec_rejects_bad_index() {
        let spec = LinearMisspec {
            xj_index: 7,
            ..LinearMisspec::new(5, true, 1.0)
        };
        assert!(generate_linear_misspec(&spec, 10, &mut rng::stream(0)).is_err());
        let spec = LinearMisspec::new(1, true, 1.0);
        assert!(generate_linear_misspec(&spec, 10, &mut rng::stream(0)).is_err());
    }

    #[test]
    fn label_counts() {
        let ds = generate_hahn(&Hahn::new(Assignment::Randomized), 5000, &mut rng::stream(12)).unwrap();
        let l = label_mcar(&ds, 500, &mut rng::stream(13)).unwrap();
        assert_eq!(l.n_labeled(), 500);
        assert_eq!((&l.x, &l.z, &l.y, &l.true_scores), (&ds.x, &ds.z, &ds.y, &ds.true_scores));
        let all = label_mcar(&ds, 5000, &mut rng::stream(13)).unwrap();
        assert!(all.labeled.iter().all(|&b| b));
        assert!(label_mcar(&ds, 5001, &mut rng::stream(13)).is_err());
        assert!(label_mcar(&ds, 0, &mut rng::stream(13)).is_err());
    }

    #[test]
    fn labeling_is_uniform_per_unit() {
        let ds = generate_two_binary(&table_spec(), 10, &mut rng::stream(14)).unwrap();
        let reps = 10_000;
        let k = 3;
        let mut freq = [0usize; 10];
        let mut r = rng::stream(15);
        for _ in 0..reps {
            let l = label_mcar(&ds, k, &mut r).unwrap();
            for (i, &b) in l.labeled.iter().enumerate() {
                freq[i] += usize::from(b);
            }
        }
        let p = k as f64 / 10.0;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        for (i, &f) in freq.iter().enumerate() {
            let rate = f as f64 / reps as f64;
            assert!((rate - p).abs() < 3.0 * se, "unit {i}: {rate}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for spec in [
            DgpSpec::TwoBinary(table_spec()),
            DgpSpec::Hahn(Hahn::new(Assignment::Targeted)),
            DgpSpec::LinearMisspec(LinearMisspec::new(5, true, 1.0)),
        ] {
            let a = spec.generate(300, &mut rng::stream(99)).unwrap();
            let b = spec.generate(300, &mut rng::stream(99)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let ds = generate_two_binary(&table_spec(), 3, &mut rng::stream(16)).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x1,x2,z,y,labeled,true_score");
        assert_eq!(lines.len(), 4);
        assert!(text.ends_with('\n'));
    }
}
