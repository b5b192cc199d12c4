//! IPW point estimates, plug-in standard errors and the estimation pipelines.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::{without_column, DesignEncoder};
use crate::dgp::Dataset;
use crate::error::{Error, Result};
use crate::propensity::{self, PropensityScores, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Approach {
    /// Fit and estimate on labeled units only.
    CompleteCase,
    /// Fit on every unit's (x, z), estimate on labeled units.
    SemiSupervised,
    /// Weight labeled units by their true propensities.
    TrueProp,
}

impl Approach {
    pub fn as_str(self) -> &'static str {
        match self {
            Approach::CompleteCase => "complete_case",
            Approach::SemiSupervised => "semi_supervised",
            Approach::TrueProp => "true_prop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "complete_case" => Some(Approach::CompleteCase),
            "semi_supervised" => Some(Approach::SemiSupervised),
            "true_prop" => Some(Approach::TrueProp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Weighting {
    True,
    Fitted,
    Calibrated,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::True => "true",
            Weighting::Fitted => "fitted",
            Weighting::Calibrated => "calibrated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "true" => Some(Weighting::True),
            "fitted" => Some(Weighting::Fitted),
            "calibrated" => Some(Weighting::Calibrated),
            _ => None,
        }
    }

    /// Estimator label used in result tables.
    pub fn estimator_label(self) -> &'static str {
        match self {
            Weighting::True => "ipw_true",
            Weighting::Fitted => "ipw_logistic",
            Weighting::Calibrated => "ipw_calibrated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorVariant {
    /// Unnormalized inverse-propensity sum.
    #[default]
    HorvitzThompson,
    /// Weights normalized within each arm.
    Hajek,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteEstimate {
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_used: usize,
    pub weighting: Weighting,
    /// Scores moved by the clamping policy.
    pub clamped: usize,
}

impl AteEstimate {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub level: f64,
    pub solver: SolverOptions,
    pub variant: EstimatorVariant,
    /// Covariate column left out of fitted propensity models.
    pub exclude_column: Option<usize>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            solver: SolverOptions::default(),
            variant: EstimatorVariant::HorvitzThompson,
            exclude_column: None,
        }
    }
}

fn check_inputs(y: &[f64], z: &[bool], scores: &PropensityScores) -> Result<()> {
    if y.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if z.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "z",
            got: z.len(),
            expected: y.len(),
        });
    }
    if scores.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "scores",
            got: scores.len(),
            expected: y.len(),
        });
    }
    if let Some(i) = scores.scores.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidInput(format!(
            "score {} at position {i} is not strictly inside (0, 1)",
            scores.scores[i]
        )));
    }
    Ok(())
}

fn ht_terms<'a>(y: &'a [f64], z: &'a [bool], p: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    y.iter().zip(z).zip(p).map(|((&yi, &zi), &pi)| {
        if zi {
            yi / pi
        } else {
            -yi / (1.0 - pi)
        }
    })
}

/// (1/n) Σ [ y z / p − y (1 − z) / (1 − p) ].
pub fn ipw_point(y: &[f64], z: &[bool], scores: &PropensityScores) -> Result<f64> {
    check_inputs(y, z, scores)?;
    Ok(ht_terms(y, z, &scores.scores).sum::<f64>() / y.len() as f64)
}

/// Normalized-weight variant: difference of weighted arm means.
pub fn ipw_hajek_point(y: &[f64], z: &[bool], scores: &PropensityScores) -> Result<f64> {
    check_inputs(y, z, scores)?;
    let (m1, m0) = hajek_means(y, z, &scores.scores)?;
    Ok(m1 - m0)
}

fn hajek_means(y: &[f64], z: &[bool], p: &[f64]) -> Result<(f64, f64)> {
    let (mut s1, mut w1, mut s0, mut w0) = (0.0, 0.0, 0.0, 0.0);
    for ((&yi, &zi), &pi) in y.iter().zip(z).zip(p) {
        if zi {
            s1 += yi / pi;
            w1 += 1.0 / pi;
        } else {
            s0 += yi / (1.0 - pi);
            w0 += 1.0 / (1.0 - pi);
        }
    }
    if w1 == 0.0 || w0 == 0.0 {
        return Err(Error::DegenerateArm {
            arm: if w1 == 0.0 { "treated" } else { "control" },
            count: 0,
        });
    }
    Ok((s1 / w1, s0 / w0))
}

/// Two-sided normal quantile for a confidence level.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

fn interval(point: f64, se: f64, level: f64, n: usize, scores: &PropensityScores, weighting: Weighting) -> Result<AteEstimate> {
    let q = normal_quantile(level)?;
    Ok(AteEstimate {
        point,
        se,
        ci_low: point - q * se,
        ci_high: point + q * se,
        n_used: n,
        weighting,
        clamped: scores.clamped,
    })
}

fn weighting_of(scores: &PropensityScores) -> Weighting {
    match scores.provenance {
        propensity::Provenance::True => Weighting::True,
        propensity::Provenance::Fitted => Weighting::Fitted,
        propensity::Provenance::Calibrated => Weighting::Calibrated,
    }
}

/// Point estimate with the plug-in influence-function standard error.
///
/// ψᵢ = yᵢzᵢ/pᵢ − yᵢ(1−zᵢ)/(1−pᵢ) − point and se = √(Σψᵢ²)/n. Weights are
/// treated as known, so the interval is conservative for estimated scores.
pub fn ipw_interval(
    y: &[f64],
    z: &[bool],
    scores: &PropensityScores,
    level: f64,
) -> Result<AteEstimate> {
    check_inputs(y, z, scores)?;
    let n = y.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 units, got {n}")));
    }
    let point = ipw_point(y, z, scores)?;
    let ss: f64 = ht_terms(y, z, &scores.scores)
        .map(|t| (t - point).powi(2))
        .sum();
    let se = ss.sqrt() / n as f64;
    interval(point, se, level, n, scores, weighting_of(scores))
}

/// Normalized-weight estimate with its linearized standard error.
pub fn ipw_hajek_interval(
    y: &[f64],
    z: &[bool],
    scores: &PropensityScores,
    level: f64,
) -> Result<AteEstimate> {
    check_inputs(y, z, scores)?;
    let n = y.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 units, got {n}")));
    }
    let p = &scores.scores;
    let (m1, m0) = hajek_means(y, z, p)?;
    let nf = n as f64;
    let w1: f64 = z.iter().zip(p).filter(|(&zi, _)| zi).map(|(_, &pi)| 1.0 / pi).sum::<f64>() / nf;
    let w0: f64 = z.iter().zip(p).filter(|(&zi, _)| !zi).map(|(_, &pi)| 1.0 / (1.0 - pi)).sum::<f64>() / nf;
    let ss: f64 = y
        .iter()
        .zip(z)
        .zip(p)
        .map(|((&yi, &zi), &pi)| {
            if zi {
                (yi - m1) / (pi * w1)
            } else {
                -(yi - m0) / ((1.0 - pi) * w0)
            }
        })
        .map(|psi| psi * psi)
        .sum();
    interval(m1 - m0, ss.sqrt() / nf, level, n, scores, weighting_of(scores))
}

fn arm_counts(ds: &Dataset, rows: &[usize]) -> (usize, usize) {
    let treated = rows.iter().filter(|&&i| ds.z[i]).count();
    (treated, rows.len() - treated)
}

/// Propensity scores for the labeled units under an approach and weighting.
pub fn pipeline_scores(
    ds: &Dataset,
    approach: Approach,
    weighting: Weighting,
    opts: &PipelineOptions,
) -> Result<PropensityScores> {
    let labeled = ds.labeled_indices();
    let z_lab: Vec<bool> = labeled.iter().map(|&i| ds.z[i]).collect();

    if approach == Approach::TrueProp {
        let base: Vec<f64> = labeled.iter().map(|&i| ds.true_scores[i]).collect();
        return match weighting {
            Weighting::True => PropensityScores::from_true(base),
            Weighting::Calibrated => propensity::calibrate(&base, &z_lab, &opts.solver),
            Weighting::Fitted => Err(Error::InvalidInput(
                "true_prop approach takes true or calibrated weighting".into(),
            )),
        };
    }
    if weighting == Weighting::True {
        return Err(Error::InvalidInput(format!(
            "{} approach takes fitted or calibrated weighting",
            approach.as_str()
        )));
    }

    let mut terms = ds.spec.propensity_terms();
    if let Some(col) = opts.exclude_column {
        terms = without_column(&terms, col);
    }
    let all: Vec<usize> = (0..ds.n()).collect();
    let fit_rows: &[usize] = match approach {
        Approach::CompleteCase => &labeled,
        _ => &all,
    };
    let encoder = DesignEncoder::fit(&terms, &ds.x, fit_rows);
    let x_fit = encoder.encode(&ds.x, fit_rows);
    let z_fit: Vec<bool> = fit_rows.iter().map(|&i| ds.z[i]).collect();
    let fit = propensity::fit_logistic_named(&x_fit, encoder.names(), &z_fit, &opts.solver)?;
    let fitted = propensity::predict(&fit, &encoder.encode(&ds.x, &labeled))?;
    match weighting {
        Weighting::Calibrated => propensity::calibrate(&fitted.scores, &z_lab, &opts.solver),
        _ => Ok(fitted),
    }
}

/// Runs one approach end to end on the labeled units of `ds`.
pub fn estimate_pipeline(
    ds: &Dataset,
    approach: Approach,
    weighting: Weighting,
    opts: &PipelineOptions,
) -> Result<AteEstimate> {
    let labeled = ds.labeled_indices();
    let (treated, control) = arm_counts(ds, &labeled);
    if treated < 2 {
        return Err(Error::DegenerateArm {
            arm: "treated",
            count: treated,
        });
    }
    if control < 2 {
        return Err(Error::DegenerateArm {
            arm: "control",
            count: control,
        });
    }
    let scores = pipeline_scores(ds, approach, weighting, opts)?;
    let y: Vec<f64> = labeled.iter().map(|&i| ds.y[i]).collect();
    let z: Vec<bool> = labeled.iter().map(|&i| ds.z[i]).collect();
    match opts.variant {
        EstimatorVariant::HorvitzThompson => ipw_interval(&y, &z, &scores, opts.level),
        EstimatorVariant::Hajek => ipw_hajek_interval(&y, &z, &scores, opts.level),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{generate_two_binary, label_mcar, Assignment, DgpSpec, Hahn, TwoBinary};
    use crate::rng;
    use proptest::prelude::*;

    fn truth(v: Vec<f64>) -> PropensityScores {
        PropensityScores::from_true(v).unwrap()
    }

    fn bools(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&b| b == 1).collect()
    }

    #[test]
    fn balanced_half_scores_is_difference_in_means() {
        let est = ipw_point(&[2.0, 2.0, 1.0, 1.0], &bools(&[1, 1, 0, 0]), &truth(vec![0.5; 4])).unwrap();
        assert!((est - 1.0).abs() < 1e-15);
    }

    #[test]
    fn three_unit_hand_evaluation() {
        let y = [1.0, 2.0, 3.0];
        let z = bools(&[1, 0, 1]);
        let s = truth(vec![0.5, 0.25, 0.8]);
        // terms: 1/0.5 = 2, -2/0.75 = -8/3, 3/0.8 = 3.75
        let terms = [2.0, -8.0 / 3.0, 3.75];
        let point = terms.iter().sum::<f64>() / 3.0;
        assert!((ipw_point(&y, &z, &s).unwrap() - point).abs() < 1e-14);
        assert!((point - 37.0 / 36.0).abs() < 1e-12);

        let est = ipw_interval(&y, &z, &s, 0.95).unwrap();
        let se = terms.iter().map(|t| (t - point).powi(2)).sum::<f64>().sqrt() / 3.0;
        assert!((est.se - se).abs() < 1e-14);
        let q = normal_quantile(0.95).unwrap();
        assert!((q - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((est.ci_high - est.ci_low - 2.0 * q * se).abs() < 1e-12);
        assert!(est.ci_low <= est.point && est.point <= est.ci_high);
    }

    #[test]
    fn zero_outcome_zero_se() {
        let est = ipw_interval(&[0.0; 4], &bools(&[1, 0, 1, 0]), &truth(vec![0.2, 0.4, 0.6, 0.8]), 0.95).unwrap();
        assert_eq!((est.point, est.se), (0.0, 0.0));
    }

    #[test]
    fn errors_on_bad_input() {
        assert!(ipw_point(&[], &[], &truth(vec![])).is_err());
        assert!(ipw_interval(&[1.0], &[true], &truth(vec![0.5]), 0.95).is_err());
        assert!(ipw_interval(&[1.0, 2.0], &[true, false], &truth(vec![0.5, 0.5]), 1.0).is_err());
        assert!(matches!(
            ipw_point(&[1.0, 2.0], &[true], &truth(vec![0.5, 0.5])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    /// Brute-force stratified difference in means over (x1, x2) cells.
    fn stratified_dim(ds: &Dataset) -> f64 {
        let mut sum = [[[0.0; 2]; 2]; 2];
        let mut cnt = [[[0.0; 2]; 2]; 2];
        for i in 0..ds.n() {
            let (a, b, z) = (ds.x[(i, 0)] as usize, ds.x[(i, 1)] as usize, usize::from(ds.z[i]));
            sum[a][b][z] += ds.y[i];
            cnt[a][b][z] += 1.0;
        }
        let n = ds.n() as f64;
        let mut total = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let nx = cnt[a][b][0] + cnt[a][b][1];
                total += nx / n * (sum[a][b][1] / cnt[a][b][1] - sum[a][b][0] / cnt[a][b][0]);
            }
        }
        total
    }

    #[test]
    fn saturated_fit_reduces_to_stratified_difference_in_means() {
        let ds = generate_two_binary(&TwoBinary::default(), 400, &mut rng::stream(21)).unwrap();
        let scores = pipeline_scores(&ds, Approach::CompleteCase, Weighting::Fitted, &PipelineOptions::default()).unwrap();
        let point = ipw_point(&ds.y, &ds.z, &scores).unwrap();
        let oracle = stratified_dim(&ds);
        assert!((point - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "{point} vs {oracle}");
    }

    #[test]
    fn true_prop_pipeline_is_pass_through() {
        let ds = generate_two_binary(&TwoBinary::default(), 300, &mut rng::stream(22)).unwrap();
        let ds = label_mcar(&ds, 120, &mut rng::stream(23)).unwrap();
        let est = estimate_pipeline(&ds, Approach::TrueProp, Weighting::True, &PipelineOptions::default()).unwrap();
        let idx = ds.labeled_indices();
        let y: Vec<f64> = idx.iter().map(|&i| ds.y[i]).collect();
        let z: Vec<bool> = idx.iter().map(|&i| ds.z[i]).collect();
        let p: Vec<f64> = idx.iter().map(|&i| ds.true_scores[i]).collect();
        assert_eq!(est.point, ipw_point(&y, &z, &truth(p)).unwrap());
        assert_eq!(est.n_used, 120);
        assert_eq!(est.weighting, Weighting::True);
    }

    #[test]
    fn calibrated_true_scores_pool_over_first_covariate() {
        // With γ₂ = 0 and an exact first-stage model, the semi-supervised
        // calibrated estimator is the X₁-stratified difference in means.
        let spec = TwoBinary { gamma2: 0.0, ..TwoBinary::default() };
        let ds = generate_two_binary(&spec, 500, &mut rng::stream(24)).unwrap();
        let ds = label_mcar(&ds, 200, &mut rng::stream(25)).unwrap();
        let est = estimate_pipeline(&ds, Approach::TrueProp, Weighting::Calibrated, &PipelineOptions::default()).unwrap();
        let mut sum = [[0.0; 2]; 2];
        let mut cnt = [[0.0; 2]; 2];
        for i in ds.labeled_indices() {
            let (a, z) = (ds.x[(i, 0)] as usize, usize::from(ds.z[i]));
            sum[a][z] += ds.y[i];
            cnt[a][z] += 1.0;
        }
        let oracle: f64 = (0..2)
            .map(|a| (cnt[a][0] + cnt[a][1]) / 200.0 * (sum[a][1] / cnt[a][1] - sum[a][0] / cnt[a][0]))
            .sum();
        assert!((est.point - oracle).abs() < 1e-9, "{} vs {oracle}", est.point);
    }

    #[test]
    fn invalid_combinations_rejected() {
        let ds = generate_two_binary(&TwoBinary::default(), 100, &mut rng::stream(26)).unwrap();
        let o = PipelineOptions::default();
        assert!(estimate_pipeline(&ds, Approach::CompleteCase, Weighting::True, &o).is_err());
        assert!(estimate_pipeline(&ds, Approach::TrueProp, Weighting::Fitted, &o).is_err());
    }

    #[test]
    fn empty_arm_among_labeled_is_error() {
        let mut ds = generate_two_binary(&TwoBinary::default(), 50, &mut rng::stream(27)).unwrap();
        ds.labeled = ds.z.clone();
        let err = estimate_pipeline(&ds, Approach::TrueProp, Weighting::True, &PipelineOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateArm { arm: "control", count: 0 }));
    }

    #[test]
    fn semi_supervised_fits_on_all_units() {
        let spec = DgpSpec::Hahn(Hahn::new(Assignment::Randomized));
        let ds = spec.generate(2000, &mut rng::stream(28)).unwrap();
        let ds = label_mcar(&ds, 100, &mut rng::stream(29)).unwrap();
        let o = PipelineOptions::default();
        let semi = pipeline_scores(&ds, Approach::SemiSupervised, Weighting::Fitted, &o).unwrap();
        let cc = pipeline_scores(&ds, Approach::CompleteCase, Weighting::Fitted, &o).unwrap();
        assert_eq!(semi.len(), 100);
        assert_eq!(cc.len(), 100);
        // a model fitted on 2000 randomized units stays close to 0.5
        let spread = |s: &PropensityScores| s.scores.iter().map(|p| (p - 0.5).abs()).fold(0.0, f64::max);
        assert!(spread(&semi) < spread(&cc));
        let cal = pipeline_scores(&ds, Approach::SemiSupervised, Weighting::Calibrated, &o).unwrap();
        let mean_cal = cal.scores.iter().sum::<f64>() / 100.0;
        let frac = ds.labeled_indices().iter().filter(|&&i| ds.z[i]).count() as f64 / 100.0;
        // the calibrated intercept matches the labeled treated fraction on average
        assert!((mean_cal - frac).abs() < 1e-8);
    }

    #[test]
    fn hajek_variant_matches_difference_in_means_at_constant_scores() {
        let y = [3.0, 1.0, 4.0, 1.0, 5.0];
        let z = bools(&[1, 0, 1, 0, 0]);
        let s = truth(vec![0.3; 5]);
        let h = ipw_hajek_point(&y, &z, &s).unwrap();
        assert!((h - (3.5 - 7.0 / 3.0)).abs() < 1e-14);
        let est = ipw_hajek_interval(&y, &z, &s, 0.9).unwrap();
        assert!((est.point - h).abs() < 1e-15 && est.se > 0.0);
    }

    proptest! {
        #[test]
        fn outcome_shift_moves_point_by_weight_imbalance(
            seed in 0u64..1000,
            c in -5.0f64..5.0,
        ) {
            use rand::Rng;
            let mut r = rng::stream(seed);
            let n = 30;
            let y: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| r.random_range(0.1..0.9)).collect();
            let z: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let s = truth(p.clone());
            let imbalance: f64 = z.iter().zip(&p).map(|(&zi, &pi)| if zi { 1.0 / pi } else { -1.0 / (1.0 - pi) }).sum::<f64>() / n as f64;
            let a = ipw_point(&y, &z, &s).unwrap();
            let b = ipw_point(&shifted, &z, &s).unwrap();
            prop_assert!((b - a - c * imbalance).abs() < 1e-10);
        }

        #[test]
        fn se_invariant_to_permutation(seed in 0u64..1000) {
            use rand::{seq::SliceRandom, Rng};
            let mut r = rng::stream(seed);
            let n = 25;
            let y: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| r.random_range(0.1..0.9)).collect();
            let z: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut r);
            let a = ipw_interval(&y, &z, &truth(p.clone()), 0.95).unwrap();
            let b = ipw_interval(
                &perm.iter().map(|&i| y[i]).collect::<Vec<_>>(),
                &perm.iter().map(|&i| z[i]).collect::<Vec<_>>(),
                &truth(perm.iter().map(|&i| p[i]).collect()),
                0.95,
            ).unwrap();
            prop_assert!((a.se - b.se).abs() <= 1e-12 * a.se.max(1e-300));
        }

        #[test]
        fn balanced_half_scores_equal_difference_in_means(
            pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..20)
        ) {
            let k = pairs.len();
            let n = k * 2;
            let y: Vec<f64> = pairs.iter().map(|p| p.0).chain(pairs.iter().map(|p| p.1)).collect();
            let z: Vec<bool> = (0..n).map(|i| i < k).collect();
            let m1 = pairs.iter().map(|p| p.0).sum::<f64>() / k as f64;
            let m0 = pairs.iter().map(|p| p.1).sum::<f64>() / k as f64;
            let est = ipw_point(&y, &z, &truth(vec![0.5; n])).unwrap();
            prop_assert!((est - (m1 - m0)).abs() < 1e-12);
        }
    }
}
