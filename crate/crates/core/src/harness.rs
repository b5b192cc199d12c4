//! Replicated simulation studies.
//!
//! Every replication draws from its own stream, derived from the master seed
//! and the replication index only, so results do not depend on how the
//! replications are scheduled. Within a replication all approaches see the
//! same dataset, and all approaches at one labeled-sample size see the same
//! labeling mask.

use rayon::prelude::*;

use crate::dgp::{label_mcar, Dataset, DgpSpec, LinearMisspec, TwoBinary};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_pipeline, ipw_point, pipeline_scores, Approach, AteEstimate, EstimatorVariant,
    PipelineOptions, Weighting,
};
use crate::propensity::{PropensityScores, SolverOptions};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dgp: DgpSpec,
    pub n_total: usize,
    pub n_labeled_grid: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    pub approaches: Vec<Approach>,
    /// Weighting for the fitted approaches; `True` is only valid when the
    /// study runs `true_prop` alone.
    pub weighting: Weighting,
    pub calibrate_semi: bool,
    pub confidence: f64,
    /// Run `true_prop` at every labeled size instead of only the largest.
    pub true_prop_all_sizes: bool,
    pub variant: EstimatorVariant,
    pub solver: SolverOptions,
    pub exclude_column: Option<usize>,
}

impl SimConfig {
    pub fn new(dgp: DgpSpec, n_total: usize, n_labeled_grid: Vec<usize>, reps: usize, master_seed: u64) -> Self {
        Self {
            dgp,
            n_total,
            n_labeled_grid,
            reps,
            master_seed,
            approaches: vec![Approach::CompleteCase, Approach::SemiSupervised, Approach::TrueProp],
            weighting: Weighting::Fitted,
            calibrate_semi: false,
            confidence: 0.95,
            true_prop_all_sizes: false,
            variant: EstimatorVariant::HorvitzThompson,
            solver: SolverOptions::default(),
            exclude_column: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.reps == 0 {
            return Err(Error::InvalidInput("reps must be at least 1".into()));
        }
        if self.n_total < self.dgp.min_n() {
            return Err(Error::InvalidInput(format!(
                "n_total must be at least {} for {}, got {}",
                self.dgp.min_n(),
                self.dgp.name(),
                self.n_total
            )));
        }
        if self.n_labeled_grid.is_empty() {
            return Err(Error::InvalidInput("n_labeled grid is empty".into()));
        }
        if let Some(&bad) = self.n_labeled_grid.iter().find(|&&k| k == 0 || k > self.n_total) {
            return Err(Error::InvalidInput(format!(
                "n_labeled {bad} outside 1..={}",
                self.n_total
            )));
        }
        if self.approaches.is_empty() {
            return Err(Error::InvalidInput("no approaches selected".into()));
        }
        let mut seen = self.approaches.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.approaches.len() {
            return Err(Error::InvalidInput("duplicate approach".into()));
        }
        if self.weighting == Weighting::True && self.approaches != [Approach::TrueProp] {
            return Err(Error::InvalidInput(
                "weighting=true requires approaches=true_prop".into(),
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidInput(format!(
                "confidence must be in (0, 1), got {}",
                self.confidence
            )));
        }
        Ok(())
    }

    pub fn weighting_for(&self, approach: Approach) -> Weighting {
        match approach {
            Approach::TrueProp if self.weighting == Weighting::Calibrated => Weighting::Calibrated,
            Approach::TrueProp => Weighting::True,
            Approach::SemiSupervised if self.calibrate_semi => Weighting::Calibrated,
            _ if self.weighting == Weighting::Calibrated => Weighting::Calibrated,
            _ => Weighting::Fitted,
        }
    }

    fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            level: self.confidence,
            solver: self.solver,
            variant: self.variant,
            exclude_column: self.exclude_column,
        }
    }

    /// (approach, grid index) pairs in output order.
    fn cells(&self) -> Vec<(Approach, usize)> {
        let largest = (0..self.n_labeled_grid.len())
            .max_by_key(|&i| self.n_labeled_grid[i])
            .unwrap_or(0);
        let mut out = Vec::new();
        for &a in &self.approaches {
            for i in 0..self.n_labeled_grid.len() {
                if a != Approach::TrueProp || self.true_prop_all_sizes || i == largest {
                    out.push((a, i));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub approach: Approach,
    pub n_labeled: usize,
    pub weighting: Weighting,
    pub result: std::result::Result<AteEstimate, Error>,
}

/// One replication; pipeline failures are recorded, not raised.
pub fn run_replication(cfg: &SimConfig, rep_index: usize) -> Result<Vec<RepRecord>> {
    cfg.validate()?;
    Ok(replicate(cfg, rep_index))
}

fn data_seed(rep_seed: u64) -> u64 {
    rng::mix(rep_seed, 0)
}

fn label_seed(rep_seed: u64, grid_index: usize) -> u64 {
    rng::mix(rep_seed, 1 + grid_index as u64)
}

/// The labeled dataset that replication `rep_index` uses at grid entry
/// `grid_index`.
pub fn replication_dataset(cfg: &SimConfig, rep_index: usize, grid_index: usize) -> Result<Dataset> {
    cfg.validate()?;
    let k = *cfg.n_labeled_grid.get(grid_index).ok_or_else(|| {
        Error::InvalidInput(format!("grid index {grid_index} out of range"))
    })?;
    let rep_seed = rng::derive(cfg.master_seed, &[rep_index as u64]);
    let ds = cfg.dgp.generate(cfg.n_total, &mut rng::stream(data_seed(rep_seed)))?;
    label_mcar(&ds, k, &mut rng::stream(label_seed(rep_seed, grid_index)))
}

fn replicate(cfg: &SimConfig, rep_index: usize) -> Vec<RepRecord> {
    let rep_seed = rng::derive(cfg.master_seed, &[rep_index as u64]);
    let cells = cfg.cells();
    let fail_all = |e: Error| -> Vec<RepRecord> {
        cells
            .iter()
            .map(|&(a, i)| RepRecord {
                approach: a,
                n_labeled: cfg.n_labeled_grid[i],
                weighting: cfg.weighting_for(a),
                result: Err(e.clone()),
            })
            .collect()
    };
    let mut data_rng = rng::stream(data_seed(rep_seed));
    let ds = match cfg.dgp.generate(cfg.n_total, &mut data_rng) {
        Ok(ds) => ds,
        Err(e) => return fail_all(e),
    };
    let mut masks = Vec::with_capacity(cfg.n_labeled_grid.len());
    for (i, &k) in cfg.n_labeled_grid.iter().enumerate() {
        let mut label_rng = rng::stream(label_seed(rep_seed, i));
        masks.push(label_mcar(&ds, k, &mut label_rng));
    }
    let opts = cfg.pipeline_options();
    cells
        .iter()
        .map(|&(a, i)| {
            let weighting = cfg.weighting_for(a);
            let result = masks[i]
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|labeled| estimate_pipeline(labeled, a, weighting, &opts));
            RepRecord {
                approach: a,
                n_labeled: cfg.n_labeled_grid[i],
                weighting,
                result,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mean_ate: f64,
    pub bias: f64,
    pub rmse: f64,
    pub sd: f64,
    pub coverage: f64,
    pub successes: usize,
}

/// Aggregates successful estimates against the ground truth `tau`.
pub fn summarize(tau: f64, estimates: &[AteEstimate]) -> Option<Metrics> {
    let m = estimates.len();
    if m == 0 {
        return None;
    }
    let mf = m as f64;
    let mean = estimates.iter().map(|e| e.point).sum::<f64>() / mf;
    let mse = estimates.iter().map(|e| (e.point - tau).powi(2)).sum::<f64>() / mf;
    let sd = if m > 1 {
        (estimates.iter().map(|e| (e.point - mean).powi(2)).sum::<f64>() / (mf - 1.0)).sqrt()
    } else {
        0.0
    };
    let covered = estimates.iter().filter(|e| e.covers(tau)).count();
    Some(Metrics {
        mean_ate: mean,
        bias: mean - tau,
        rmse: mse.sqrt(),
        sd,
        coverage: covered as f64 / mf,
        successes: m,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub approach: Approach,
    pub n_total: usize,
    pub n_labeled: usize,
    pub weighting: Weighting,
    pub mean_ate: f64,
    pub rmse: f64,
    pub bias: f64,
    pub coverage: f64,
    pub sd: f64,
    pub failed_reps: usize,
    pub reps: usize,
    pub clamped: usize,
}

impl SummaryRow {
    pub fn estimator(&self) -> &'static str {
        self.weighting.estimator_label()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub tau: f64,
    pub rows: Vec<SummaryRow>,
}

impl SimSummary {
    pub fn row(&self, approach: Approach, n_labeled: usize) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.approach == approach && r.n_labeled == n_labeled)
    }
}

/// Runs all replications in parallel on the current rayon pool and
/// aggregates them in replication order.
pub fn run_study(cfg: &SimConfig) -> Result<SimSummary> {
    cfg.validate()?;
    let records: Vec<Vec<RepRecord>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| replicate(cfg, r))
        .collect();
    let tau = cfg.dgp.tau();
    let mut rows = Vec::new();
    for (j, &(approach, i)) in cfg.cells().iter().enumerate() {
        let ok: Vec<AteEstimate> = records
            .iter()
            .filter_map(|rep| rep[j].result.as_ref().ok().cloned())
            .collect();
        let failed = cfg.reps - ok.len();
        let m = summarize(tau, &ok).ok_or(Error::AllFailed(cfg.reps))?;
        rows.push(SummaryRow {
            approach,
            n_total: cfg.n_total,
            n_labeled: cfg.n_labeled_grid[i],
            weighting: cfg.weighting_for(approach),
            mean_ate: m.mean_ate,
            rmse: m.rmse,
            bias: m.bias,
            coverage: m.coverage,
            sd: m.sd,
            failed_reps: failed,
            reps: cfg.reps,
            clamped: ok.iter().map(|e| e.clamped).sum(),
        });
    }
    Ok(SimSummary { tau, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Config {
    pub spec: TwoBinary,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            spec: TwoBinary::default(),
            n_grid: vec![15, 25, 50, 100, 250],
            reps: 10_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Row {
    pub n: usize,
    pub reps: usize,
    pub sd_true: f64,
    pub sd_fitted: f64,
    pub sd_calibrated: f64,
    pub mean_true: f64,
    pub mean_fitted: f64,
    pub mean_calibrated: f64,
    pub failed_reps: usize,
}

fn table1_rep(spec: &TwoBinary, n: usize, seed: u64) -> Result<[f64; 3]> {
    let ds = DgpSpec::TwoBinary(*spec).generate(n, &mut rng::stream(seed))?;
    let opts = PipelineOptions::default();
    let true_scores = PropensityScores::from_true(ds.true_scores.clone())?;
    let fitted = pipeline_scores(&ds, Approach::CompleteCase, Weighting::Fitted, &opts)?;
    let calibrated = pipeline_scores(&ds, Approach::TrueProp, Weighting::Calibrated, &opts)?;
    Ok([
        ipw_point(&ds.y, &ds.z, &true_scores)?,
        ipw_point(&ds.y, &ds.z, &fitted)?,
        ipw_point(&ds.y, &ds.z, &calibrated)?,
    ])
}

/// SD of the IPW estimate under true, saturated-fitted and calibrated
/// weights, with every unit labeled. A replication counts as failed when any
/// of the three weightings fails, so the three columns share their samples.
pub fn table1_study(cfg: &Table1Config) -> Result<Vec<Table1Row>> {
    DgpSpec::TwoBinary(cfg.spec).validate()?;
    if cfg.reps < 2 {
        return Err(Error::InvalidInput("reps must be at least 2".into()));
    }
    if cfg.n_grid.is_empty() || cfg.n_grid.iter().any(|&n| n < 2) {
        return Err(Error::InvalidInput("every n must be at least 2".into()));
    }
    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    for (ni, &n) in cfg.n_grid.iter().enumerate() {
        let results: Vec<Result<[f64; 3]>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| table1_rep(&cfg.spec, n, rng::derive(cfg.seed, &[ni as u64, r as u64])))
            .collect();
        let ok: Vec<[f64; 3]> = results.into_iter().filter_map(|r| r.ok()).collect();
        if ok.len() < 2 {
            return Err(Error::AllFailed(cfg.reps));
        }
        let column = |k: usize| -> (f64, f64) {
            let v: Vec<f64> = ok.iter().map(|e| e[k]).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (mean, crate::dgp::sample_sd(&v))
        };
        let (mt, st) = column(0);
        let (mf, sf) = column(1);
        let (mc, sc) = column(2);
        rows.push(Table1Row {
            n,
            reps: cfg.reps,
            sd_true: st,
            sd_fitted: sf,
            sd_calibrated: sc,
            mean_true: mt,
            mean_fitted: mf,
            mean_calibrated: mc,
            failed_reps: cfg.reps - ok.len(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisspecConfig {
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub gamma_xj: f64,
    pub xj_index: usize,
    pub seed: u64,
}

impl Default for MisspecConfig {
    fn default() -> Self {
        Self {
            p: 5,
            n: 1000,
            reps: 100,
            gamma_xj: 10.0,
            xj_index: 0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisspecRow {
    pub case: u8,
    pub xj_confounder: bool,
    pub xj_included: bool,
    pub gamma_xj: f64,
    pub n: usize,
    pub reps: usize,
    pub mean_ate: f64,
    pub bias: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub sd: f64,
    pub failed_reps: usize,
}

/// (confounder, included) for cases 1 to 4.
pub const MISSPEC_CASES: [(bool, bool); 4] = [(true, true), (false, true), (true, false), (false, false)];

/// Complete-data IPW with a fitted logistic propensity, toggling whether the
/// special covariate confounds and whether it enters the propensity model.
/// Replication `r` uses the same seed in every case.
pub fn misspec_study(cfg: &MisspecConfig) -> Result<Vec<MisspecRow>> {
    if cfg.reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(4);
    for (c, &(confounder, included)) in MISSPEC_CASES.iter().enumerate() {
        let spec = DgpSpec::LinearMisspec(LinearMisspec {
            xj_index: cfg.xj_index,
            ..LinearMisspec::new(cfg.p, confounder, cfg.gamma_xj)
        });
        spec.validate()?;
        if cfg.n < spec.min_n() {
            return Err(Error::InvalidInput(format!("n must be at least {}", spec.min_n())));
        }
        let opts = PipelineOptions {
            exclude_column: (!included).then_some(cfg.xj_index),
            ..PipelineOptions::default()
        };
        let results: Vec<Result<AteEstimate>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let ds = spec.generate(cfg.n, &mut rng::substream(cfg.seed, &[r as u64]))?;
                estimate_pipeline(&ds, Approach::CompleteCase, Weighting::Fitted, &opts)
            })
            .collect();
        let ok: Vec<AteEstimate> = results.into_iter().filter_map(|r| r.ok()).collect();
        let m = summarize(spec.tau(), &ok).ok_or(Error::AllFailed(cfg.reps))?;
        rows.push(MisspecRow {
            case: c as u8 + 1,
            xj_confounder: confounder,
            xj_included: included,
            gamma_xj: cfg.gamma_xj,
            n: cfg.n,
            reps: cfg.reps,
            mean_ate: m.mean_ate,
            bias: m.bias,
            rmse: m.rmse,
            coverage: m.coverage,
            sd: m.sd,
            failed_reps: cfg.reps - ok.len(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{Assignment, Hahn};
    use proptest::prelude::*;

    fn small(dgp: DgpSpec) -> SimConfig {
        SimConfig::new(dgp, 400, vec![100, 200], 20, 7)
    }

    #[test]
    fn replication_is_deterministic() {
        let cfg = small(DgpSpec::Hahn(Hahn::new(Assignment::Targeted)));
        assert_eq!(run_replication(&cfg, 3).unwrap(), run_replication(&cfg, 3).unwrap());
        assert_ne!(run_replication(&cfg, 3).unwrap(), run_replication(&cfg, 4).unwrap());
    }

    #[test]
    fn replication_dataset_matches_replication() {
        let cfg = SimConfig {
            approaches: vec![Approach::CompleteCase],
            n_labeled_grid: vec![150],
            ..small(DgpSpec::Hahn(Hahn::new(Assignment::Targeted)))
        };
        let ds = replication_dataset(&cfg, 2, 0).unwrap();
        assert_eq!(ds.n_labeled(), 150);
        let direct = estimate_pipeline(&ds, Approach::CompleteCase, Weighting::Fitted, &cfg.pipeline_options()).unwrap();
        let rec = run_replication(&cfg, 2).unwrap();
        assert_eq!(rec[0].result.as_ref().unwrap(), &direct);
        assert!(replication_dataset(&cfg, 2, 1).is_err());
    }

    #[test]
    fn default_study_has_seven_rows() {
        let cfg = SimConfig::new(
            DgpSpec::Hahn(Hahn::new(Assignment::Targeted)),
            600,
            vec![50, 100, 500],
            3,
            1,
        );
        let rows = run_study(&cfg).unwrap().rows;
        let keys: Vec<(Approach, usize)> = rows.iter().map(|r| (r.approach, r.n_labeled)).collect();
        assert_eq!(keys.len(), 7);
        assert_eq!(keys[6], (Approach::TrueProp, 500));
    }

    #[test]
    fn true_prop_on_randomized_uses_half() {
        let cfg = SimConfig {
            approaches: vec![Approach::TrueProp],
            ..small(DgpSpec::Hahn(Hahn::new(Assignment::Randomized)))
        };
        for rep in 0..3 {
            let rec = run_replication(&cfg, rep).unwrap();
            assert_eq!(rec[0].weighting, Weighting::True);
            let ds = DgpSpec::Hahn(Hahn::new(Assignment::Randomized))
                .generate(400, &mut rng::stream(rng::mix(rng::derive(7, &[rep as u64]), 0)))
                .unwrap();
            assert!(ds.true_scores.iter().all(|&p| p == 0.5));
        }
    }

    #[test]
    fn approaches_share_dataset_and_mask() {
        // With every unit labeled, complete-case and semi-supervised fit on
        // the same rows, so any difference would come from different data.
        let cfg = SimConfig {
            approaches: vec![Approach::CompleteCase, Approach::SemiSupervised],
            n_labeled_grid: vec![400],
            ..small(DgpSpec::Hahn(Hahn::new(Assignment::Targeted)))
        };
        let rec = run_replication(&cfg, 0).unwrap();
        let a = rec[0].result.as_ref().unwrap();
        let b = rec[1].result.as_ref().unwrap();
        assert_eq!(a.point, b.point);
        assert_eq!(a.se, b.se);
    }

    #[test]
    fn scheduling_does_not_change_results() {
        let cfg = small(DgpSpec::Hahn(Hahn::new(Assignment::Targeted)));
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_study(&cfg)).unwrap();
        let b = four.install(|| run_study(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rmse_decomposes_into_bias_and_sd() {
        let cfg = small(DgpSpec::Hahn(Hahn::new(Assignment::Targeted)));
        for row in run_study(&cfg).unwrap().rows {
            let m = (row.reps - row.failed_reps) as f64;
            let lhs = row.rmse * row.rmse;
            let rhs = row.bias * row.bias + (m - 1.0) / m * row.sd * row.sd;
            assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1e-12), "{lhs} vs {rhs}");
            assert!((0.0..=1.0).contains(&row.coverage));
        }
    }

    #[test]
    fn tau_shift_moves_mean_only() {
        // The normalized estimator adds exactly the shift to every estimate.
        let base = SimConfig {
            variant: EstimatorVariant::Hajek,
            ..small(DgpSpec::Hahn(Hahn::new(Assignment::Targeted)))
        };
        let shifted = SimConfig {
            dgp: base.dgp.with_tau(5.0),
            ..base.clone()
        };
        let a = run_study(&base).unwrap();
        let b = run_study(&shifted).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert!((rb.mean_ate - ra.mean_ate - 2.0).abs() < 1e-9);
            assert!((rb.sd - ra.sd).abs() < 1e-9);
            assert!((rb.bias - ra.bias).abs() < 1e-9);
        }
    }

    #[test]
    fn tau_shift_unnormalized_within_noise() {
        // Horvitz-Thompson adds 2·mean(z/p̂), which is 2 only on average.
        let base = small(DgpSpec::Hahn(Hahn::new(Assignment::Randomized)));
        let shifted = SimConfig {
            dgp: base.dgp.with_tau(5.0),
            ..base.clone()
        };
        let a = run_study(&base).unwrap();
        let b = run_study(&shifted).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            let se = (ra.sd.powi(2) + rb.sd.powi(2)).sqrt() / (ra.reps as f64).sqrt();
            assert!((rb.mean_ate - ra.mean_ate - 2.0).abs() < 4.0 * se, "{ra:?} {rb:?}");
        }
    }

    #[test]
    fn coverage_uses_true_tau() {
        let est = |lo: f64, hi: f64| AteEstimate {
            point: (lo + hi) / 2.0,
            se: 1.0,
            ci_low: lo,
            ci_high: hi,
            n_used: 10,
            weighting: Weighting::True,
            clamped: 0,
        };
        let m = summarize(3.0, &[est(2.0, 4.0), est(3.5, 4.5)]).unwrap();
        assert_eq!(m.coverage, 0.5);
    }

    #[test]
    fn config_validation() {
        let good = small(DgpSpec::Hahn(Hahn::new(Assignment::Targeted)));
        assert!(good.validate().is_ok());
        assert!(SimConfig { reps: 0, ..good.clone() }.validate().is_err());
        assert!(SimConfig { n_labeled_grid: vec![401], ..good.clone() }.validate().is_err());
        assert!(SimConfig { weighting: Weighting::True, ..good.clone() }.validate().is_err());
        assert!(SimConfig {
            weighting: Weighting::True,
            approaches: vec![Approach::TrueProp],
            ..good.clone()
        }
        .validate()
        .is_ok());
        assert!(SimConfig { confidence: 1.0, ..good }.validate().is_err());
    }

    #[test]
    fn weighting_resolution() {
        let mut cfg = small(DgpSpec::Hahn(Hahn::new(Assignment::Targeted)));
        assert_eq!(cfg.weighting_for(Approach::SemiSupervised), Weighting::Fitted);
        cfg.calibrate_semi = true;
        assert_eq!(cfg.weighting_for(Approach::SemiSupervised), Weighting::Calibrated);
        assert_eq!(cfg.weighting_for(Approach::CompleteCase), Weighting::Fitted);
        assert_eq!(cfg.weighting_for(Approach::TrueProp), Weighting::True);
    }

    #[test]
    fn table1_small_run() {
        let cfg = Table1Config {
            n_grid: vec![30, 60],
            reps: 200,
            ..Table1Config::default()
        };
        let rows = table1_study(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.sd_true > 0.0 && r.failed_reps < 5));
    }

    #[test]
    fn misspec_cases_are_paired() {
        let cfg = MisspecConfig {
            n: 300,
            reps: 5,
            gamma_xj: 0.0,
            ..MisspecConfig::default()
        };
        let rows = misspec_study(&cfg).unwrap();
        assert_eq!(rows.iter().map(|r| r.case).collect::<Vec<_>>(), [1, 2, 3, 4]);
        assert!(rows[0].xj_included && !rows[2].xj_included);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn summary_invariants(points in prop::collection::vec(-10.0f64..10.0, 2..40), tau in -5.0f64..5.0) {
            let est: Vec<AteEstimate> = points.iter().map(|&p| AteEstimate {
                point: p, se: 1.0, ci_low: p - 1.96, ci_high: p + 1.96,
                n_used: 10, weighting: Weighting::Fitted, clamped: 0,
            }).collect();
            let m = summarize(tau, &est).unwrap();
            let k = points.len() as f64;
            let rhs = m.bias * m.bias + (k - 1.0) / k * m.sd * m.sd;
            prop_assert!((m.rmse * m.rmse - rhs).abs() <= 1e-9 * rhs.max(1e-12));
            prop_assert!(m.rmse * m.rmse >= m.bias * m.bias - 1e-12);
            prop_assert!((0.0..=1.0).contains(&m.coverage));
        }
    }
}
