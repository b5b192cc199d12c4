//! Simulation laboratory for inverse-propensity weighting.
//!
//! Three weighting regimes are supported: true propensities, propensities
//! fitted by logistic regression on covariates, and propensities obtained by
//! a one-dimensional logistic calibration of known or externally estimated
//! scores on the labeled sample. The crate also carries the semi-supervised
//! pipeline (fit on all units, estimate on the labeled subset), a seeded and
//! scheduling-independent replication harness, and exact finite-sample
//! variance oracles for the two-binary-covariate design.

pub mod design;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod oracle;
pub mod propensity;
pub mod report;
pub mod rng;

pub use dgp::{Assignment, CoefficientDraw, Dataset, DgpSpec, Hahn, LinearMisspec, TwoBinary};
pub use error::{Error, Result};
pub use estimators::{Approach, AteEstimate, EstimatorVariant, PipelineOptions, Weighting};
pub use harness::{MisspecConfig, SimConfig, SimSummary, SummaryRow, Table1Config, Table1Row};
pub use oracle::{Cell, StratumDesign, VariancePair};
pub use propensity::{LogisticFit, PropensityScores, Provenance, SolverOptions};
