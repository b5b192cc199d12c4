//! Subcommand configuration and execution.

use std::path::PathBuf;

use ipwlab::dgp::{Assignment, DgpSpec, Hahn, LinearMisspec, TwoBinary};
use ipwlab::estimators::{Approach, EstimatorVariant, Weighting};
use ipwlab::harness::{self, MisspecConfig, SimConfig, Table1Config};
use ipwlab::oracle::{self, StratumDesign};
use ipwlab::report::{self, VarianceRow};

use crate::config::{ConfigError, Settings};

/// CSV bytes plus one human-readable line per data row.
pub struct Output {
    pub csv: Vec<u8>,
    pub summaries: Vec<String>,
}

pub const STUDY_HELP: &str = "\
Study keys (required: dgp, reps, seed):
  dgp                 two_binary | hahn_randomized | hahn_targeted | linear_misspec
  reps                replications, >= 1
  seed                master seed (u64); --seed overrides
  n_total             units per dataset [5000]
  n_labeled           comma list of labeled sample sizes [50,100,500]
  approaches          subset of complete_case,semi_supervised,true_prop [all three]
  weighting           fitted | calibrated | true [fitted]; true needs approaches=true_prop
  calibrate_semi      calibrate the semi-supervised scores [false]
  confidence          interval level [0.95]
  true_prop_all_sizes run true_prop at every n_labeled, not only the largest [false]
  variant             horvitz_thompson | hajek [horvitz_thompson]
  exclude_column      0-based covariate column left out of the fitted model [none]
  dump_dataset        write replication 0's dataset (first n_labeled) to this CSV path
  tau                 treatment effect [3; 1 for two_binary]
  two_binary:         alpha1 [-0.8473] alpha2 [1.6946] gamma1 [2] gamma2 [0]
  linear_misspec:     p [5] xj_index [0] xj_confounder [true] gamma_xj [1]";

pub const TABLE1_HELP: &str = "\
Table1 keys: alpha1 [-0.8473] alpha2 [1.6946] gamma1 [2] gamma2 [0] tau [1]
  n_grid [15,25,50,100,250] reps [10000] seed [1]";

pub const MISSPEC_HELP: &str = "\
Misspec keys: gamma_xj [10] reps [100] seed [1] n [1000] p [5] xj_index [0]";

pub const ORACLE_HELP: &str = "\
Oracle keys: table = inequality | variance [inequality]
  inequality: a, b, c, d (comma lists, every combination) [1 each]
  variance:   n_x [5,10,20] p [0.3,0.5,0.7] gamma1 [2] gamma2 [0] tau [1]";

const TWO_BINARY_KEYS: [&str; 4] = ["alpha1", "alpha2", "gamma1", "gamma2"];
const MISSPEC_DGP_KEYS: [&str; 4] = ["p", "xj_index", "xj_confounder", "gamma_xj"];

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

fn positive(settings: &Settings, key: &str, value: usize) -> Result<usize, ConfigError> {
    if value == 0 {
        return Err(invalid(key, format!("must be >= 1, got 0 ({})", settings.origin(key).unwrap_or_default())));
    }
    Ok(value)
}

fn two_binary(settings: &Settings) -> Result<TwoBinary, ConfigError> {
    let d = TwoBinary::default();
    Ok(TwoBinary {
        alpha1: settings.get_or("alpha1", d.alpha1)?,
        alpha2: settings.get_or("alpha2", d.alpha2)?,
        gamma1: settings.get_or("gamma1", d.gamma1)?,
        gamma2: settings.get_or("gamma2", d.gamma2)?,
        tau: settings.get_or("tau", d.tau)?,
    })
}

fn dgp(settings: &Settings) -> Result<(DgpSpec, Vec<&'static str>), ConfigError> {
    let name: String = settings.require("dgp")?;
    let (spec, keys) = match name.as_str() {
        "two_binary" => (DgpSpec::TwoBinary(two_binary(settings)?), TWO_BINARY_KEYS.to_vec()),
        "hahn_randomized" | "hahn_targeted" => {
            let assignment = if name == "hahn_targeted" {
                Assignment::Targeted
            } else {
                Assignment::Randomized
            };
            let base = Hahn::new(assignment);
            let spec = Hahn {
                tau: settings.get_or("tau", base.tau)?,
                ..base
            };
            (DgpSpec::Hahn(spec), vec![])
        }
        "linear_misspec" => {
            let base = LinearMisspec::new(
                settings.get_or("p", 5)?,
                settings.get_or("xj_confounder", true)?,
                settings.get_or("gamma_xj", 1.0)?,
            );
            let spec = LinearMisspec {
                xj_index: settings.get_or("xj_index", base.xj_index)?,
                tau: settings.get_or("tau", base.tau)?,
                ..base
            };
            (DgpSpec::LinearMisspec(spec), MISSPEC_DGP_KEYS.to_vec())
        }
        other => {
            return Err(invalid(
                "dgp",
                format!("unknown process `{other}`; expected two_binary, hahn_randomized, hahn_targeted or linear_misspec"),
            ))
        }
    };
    spec.validate().map_err(|e| invalid("dgp", e.to_string()))?;
    Ok((spec, keys))
}

pub struct StudyPlan {
    pub config: SimConfig,
    pub dump_dataset: Option<PathBuf>,
}

pub fn study_plan(settings: &Settings) -> Result<StudyPlan, ConfigError> {
    let (spec, dgp_keys) = dgp(settings)?;
    let mut allowed = vec![
        "dgp", "reps", "seed", "n_total", "n_labeled", "approaches", "weighting", "calibrate_semi",
        "confidence", "true_prop_all_sizes", "variant", "exclude_column", "dump_dataset", "tau",
    ];
    allowed.extend(dgp_keys);
    settings.check_keys(&allowed, "study")?;

    let reps = positive(settings, "reps", settings.require("reps")?)?;
    let seed: u64 = settings.require("seed")?;
    let n_total: usize = settings.get_or("n_total", 5000)?;
    let grid: Vec<usize> = settings.list_or("n_labeled", vec![50, 100, 500])?;
    let approaches = settings
        .list_or::<String>(
            "approaches",
            vec!["complete_case".into(), "semi_supervised".into(), "true_prop".into()],
        )?
        .iter()
        .map(|s| Approach::parse(s).ok_or_else(|| invalid("approaches", format!("unknown approach `{s}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let weighting_name: String = settings.get_or("weighting", "fitted".to_string())?;
    let weighting = Weighting::parse(&weighting_name)
        .ok_or_else(|| invalid("weighting", format!("unknown weighting `{weighting_name}`")))?;
    let variant = match settings.get_or("variant", "horvitz_thompson".to_string())?.as_str() {
        "horvitz_thompson" => EstimatorVariant::HorvitzThompson,
        "hajek" => EstimatorVariant::Hajek,
        other => return Err(invalid("variant", format!("unknown variant `{other}`"))),
    };

    let config = SimConfig {
        approaches,
        weighting,
        calibrate_semi: settings.get_or("calibrate_semi", false)?,
        confidence: settings.get_or("confidence", 0.95)?,
        true_prop_all_sizes: settings.get_or("true_prop_all_sizes", false)?,
        variant,
        exclude_column: settings.get("exclude_column")?,
        ..SimConfig::new(spec, n_total, grid, reps, seed)
    };
    config.validate().map_err(|e| invalid("study", e.to_string()))?;
    Ok(StudyPlan {
        config,
        dump_dataset: settings.get::<String>("dump_dataset")?.map(PathBuf::from),
    })
}

pub fn run_study(plan: &StudyPlan) -> ipwlab::Result<Output> {
    if let Some(path) = &plan.dump_dataset {
        let ds = harness::replication_dataset(&plan.config, 0, 0)?;
        ds.write_csv(std::fs::File::create(path)?)?;
    }
    let summary = harness::run_study(&plan.config)?;
    let mut csv = Vec::new();
    report::write_summary(&mut csv, &summary)?;
    let summaries = summary
        .rows
        .iter()
        .map(|r| {
            format!(
                "{} n_labeled={} {}: ate={:.4} rmse={:.4} bias={:.4} coverage={:.3} sd={:.4} failed={}",
                r.approach.as_str(),
                r.n_labeled,
                r.estimator(),
                r.mean_ate,
                r.rmse,
                r.bias,
                r.coverage,
                r.sd,
                r.failed_reps
            )
        })
        .collect();
    Ok(Output { csv, summaries })
}

pub fn table1_config(settings: &Settings) -> Result<Table1Config, ConfigError> {
    settings.check_keys(
        &["alpha1", "alpha2", "gamma1", "gamma2", "tau", "n_grid", "reps", "seed"],
        "table1",
    )?;
    let d = Table1Config::default();
    let cfg = Table1Config {
        spec: two_binary(settings)?,
        n_grid: settings.list_or("n_grid", d.n_grid)?,
        reps: settings.get_or("reps", d.reps)?,
        seed: settings.get_or("seed", d.seed)?,
    };
    if cfg.reps < 2 {
        return Err(invalid("reps", format!("must be >= 2, got {}", cfg.reps)));
    }
    if let Some(n) = cfg.n_grid.iter().find(|&&n| n < 2) {
        return Err(invalid("n_grid", format!("every n must be >= 2, got {n}")));
    }
    DgpSpec::TwoBinary(cfg.spec)
        .validate()
        .map_err(|e| invalid("table1", e.to_string()))?;
    Ok(cfg)
}

pub fn run_table1(cfg: &Table1Config) -> ipwlab::Result<Output> {
    let rows = harness::table1_study(cfg)?;
    let mut csv = Vec::new();
    report::write_table1(&mut csv, &rows)?;
    let summaries = rows
        .iter()
        .map(|r| {
            format!(
                "n={}: sd_true={:.4} sd_fitted={:.4} sd_calibrated={:.4} failed={}",
                r.n, r.sd_true, r.sd_fitted, r.sd_calibrated, r.failed_reps
            )
        })
        .collect();
    Ok(Output { csv, summaries })
}

pub fn misspec_config(settings: &Settings) -> Result<MisspecConfig, ConfigError> {
    settings.check_keys(&["gamma_xj", "reps", "seed", "n", "p", "xj_index"], "misspec")?;
    let d = MisspecConfig::default();
    let cfg = MisspecConfig {
        gamma_xj: settings.get_or("gamma_xj", d.gamma_xj)?,
        reps: positive(settings, "reps", settings.get_or("reps", d.reps)?)?,
        seed: settings.get_or("seed", d.seed)?,
        n: settings.get_or("n", d.n)?,
        p: settings.get_or("p", d.p)?,
        xj_index: settings.get_or("xj_index", d.xj_index)?,
    };
    DgpSpec::LinearMisspec(LinearMisspec {
        xj_index: cfg.xj_index,
        ..LinearMisspec::new(cfg.p, true, cfg.gamma_xj)
    })
    .validate()
    .map_err(|e| invalid("misspec", e.to_string()))?;
    Ok(cfg)
}

pub fn run_misspec(cfg: &MisspecConfig) -> ipwlab::Result<Output> {
    let rows = harness::misspec_study(cfg)?;
    let mut csv = Vec::new();
    report::write_misspec(&mut csv, &rows)?;
    let summaries = rows
        .iter()
        .map(|r| {
            format!(
                "case {} (confounder={}, included={}): bias={:.4} rmse={:.4} coverage={:.3} failed={}",
                r.case, r.xj_confounder, r.xj_included, r.bias, r.rmse, r.coverage, r.failed_reps
            )
        })
        .collect();
    Ok(Output { csv, summaries })
}

pub enum OraclePlan {
    Inequality(Vec<[u64; 4]>),
    Variance {
        n_x: Vec<u32>,
        p: Vec<f64>,
        gamma1: f64,
        gamma2: f64,
        tau: f64,
    },
}

pub fn oracle_plan(settings: &Settings) -> Result<OraclePlan, ConfigError> {
    let table: String = settings.get_or("table", "inequality".to_string())?;
    match table.as_str() {
        "inequality" => {
            settings.check_keys(&["table", "a", "b", "c", "d"], "oracle table=inequality")?;
            let lists: Vec<Vec<u64>> = ["a", "b", "c", "d"]
                .iter()
                .map(|k| settings.list_or(k, vec![1]))
                .collect::<Result<_, _>>()?;
            for key in ["a", "c"] {
                let idx = if key == "a" { 0 } else { 2 };
                if lists[idx].contains(&0) {
                    return Err(invalid(key, "must be > 0 (no empty strata)"));
                }
            }
            let mut rows = Vec::new();
            for &a in &lists[0] {
                for &b in &lists[1] {
                    for &c in &lists[2] {
                        for &d in &lists[3] {
                            rows.push([a, b, c, d]);
                        }
                    }
                }
            }
            Ok(OraclePlan::Inequality(rows))
        }
        "variance" => {
            settings.check_keys(&["table", "n_x", "p", "gamma1", "gamma2", "tau"], "oracle table=variance")?;
            let plan = OraclePlan::Variance {
                n_x: settings.list_or("n_x", vec![5, 10, 20])?,
                p: settings.list_or("p", vec![0.3, 0.5, 0.7])?,
                gamma1: settings.get_or("gamma1", 2.0)?,
                gamma2: settings.get_or("gamma2", 0.0)?,
                tau: settings.get_or("tau", 1.0)?,
            };
            if let OraclePlan::Variance { n_x, p, .. } = &plan {
                if let Some(n) = n_x.iter().find(|&&n| n < 2) {
                    return Err(invalid("n_x", format!("every cell needs n_x >= 2, got {n}")));
                }
                if let Some(v) = p.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
                    return Err(invalid("p", format!("must be in (0, 1), got {v}")));
                }
            }
            Ok(plan)
        }
        other => Err(invalid("table", format!("expected inequality or variance, got `{other}`"))),
    }
}

pub fn run_oracle(plan: &OraclePlan) -> ipwlab::Result<Output> {
    let mut csv = Vec::new();
    let mut summaries = Vec::new();
    match plan {
        OraclePlan::Inequality(cases) => {
            let rows = cases
                .iter()
                .map(|&[a, b, c, d]| Ok(([a, b, c, d], oracle::appb_inequality(a, b, c, d)?)))
                .collect::<ipwlab::Result<Vec<_>>>()?;
            for ([a, b, c, d], r) in &rows {
                summaries.push(format!(
                    "(a,b,c,d)=({a},{b},{c},{d}): lhs={} rhs={} holds={}",
                    r.lhs, r.rhs, r.holds
                ));
            }
            report::write_inequality(&mut csv, &rows)?;
        }
        OraclePlan::Variance {
            n_x,
            p,
            gamma1,
            gamma2,
            tau,
        } => {
            let mut rows = Vec::new();
            for &n in n_x {
                for &pv in p {
                    let design = StratumDesign::symmetric(n, pv, *gamma1, *gamma2, *tau)?;
                    let v = oracle::exact_variances(&design)?;
                    let closed = oracle::closed_form_true_variance(&design)?;
                    rows.push(VarianceRow {
                        n_x: n,
                        p: pv,
                        v_true: v.v_true,
                        v_hat: v.v_hat,
                        v_hat_px: v.v_hat_px,
                        v_true_closed_form: closed.closed_form,
                        closed_form_agrees: closed.agrees,
                    });
                    summaries.push(format!(
                        "n_x={n} p={pv}: v_true={:.6} v_hat={:.6} v_hat_px={:.6} closed_form_agrees={}",
                        v.v_true, v.v_hat, v.v_hat_px, closed.agrees
                    ));
                }
            }
            report::write_variances(&mut csv, &rows)?;
        }
    }
    Ok(Output { csv, summaries })
}
