//! Recovery of ordered, bounded in-degree discrete Bayesian networks from
//! low-order tuple marginals, plus the VC-dimension machinery that says how
//! many samples suffice to estimate those marginals uniformly.
//!
//! Variables are indexed `0..n` in their fixed ordering. Files and reports
//! written by [`io`] use 1-based variable labels (`x1..xn`).
//!
//! Module map:
//!
//! - [`model`]: DAGs with conditional probability tables, dense joints, random instances.
//! - [`oracle`]: exact marginals, conditional independence, Markov parents and compatibility.
//! - [`estimation`]: ancestral sampling, k-tuple frequency tables, the empirical CI rule.
//! - [`recovery`]: structure search over m-subsets with the independence battery.
//! - [`vcbounds`]: cylinder-set VC bounds, the uniform-convergence risk and sample sizes.
//! - [`experiment`]: seeded end-to-end trials with CSV/JSON reports.

pub mod combinatorics;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod io;
pub mod model;
pub mod oracle;
mod par;
pub mod recovery;
pub mod vcbounds;

pub use error::{Error, Result};
pub use estimation::{
    empirical_ci_test, sample, tuple_frequencies, EmpiricalProvider, FrequencyTable, SampleMatrix,
};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, TrialReport};
pub use model::{random_dag, CylinderKey, DiscreteDag, JointTable, RandomDagOptions, Violation};
pub use oracle::{
    conditional_independent, is_markov_relative, marginal, markov_parents, CiDecision,
    ExactProvider, MarginalProvider, MarginalTable,
};
pub use recovery::{
    attach_cpts, minimize_parent_set, recover_structure, CiDecider, ProviderDecider, RecoveryTrace,
    Skeleton,
};
