//! Variable importance for selection and ranking algorithms.
//!
//! Given data, a predictiveness metric and a ranking (or selection) of the
//! covariates, this crate estimates how much predictiveness is lost when the
//! top-ranked covariates are removed from an oracle prediction function. The
//! sequence of these losses over ranking prefixes is the VROC curve; its
//! trapezoid area is the AUVROC. Estimates come with influence-function
//! Wald intervals, a uniform band over the curve, and partial-bootstrap
//! intervals that account for the algorithm's own variability.
//!
//! ```
//! use vroc_core::{estimate_vroc, CrossFitPlan, LearnerSpec, OutcomeKind, RSquared, Ranking, SeedSpec};
//! use vroc_core::simulation::{draw, DgpKind, DgpSpec};
//!
//! let data = draw(&DgpSpec { kind: DgpKind::Illustrative, n: 300, seed: SeedSpec::new(1, "doc", 0) }).unwrap();
//! let plan = CrossFitPlan::crossfit(&data, LearnerSpec::Ols, OutcomeKind::Continuous, 5, SeedSpec::new(1, "plan", 0)).unwrap();
//! let ranking = Ranking::new((0..10).collect(), 10).unwrap();
//! let vroc = estimate_vroc(&plan, &RSquared, &ranking).unwrap();
//! assert_eq!(vroc.psi_seq.len(), 10);
//! ```

pub mod algorithms;
pub mod bootstrap;
pub mod data;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod learners;
pub mod metrics;
pub mod rng;
pub mod simulation;

pub use algorithms::{rank, select, RankerSpec, SelectorSpec};
pub use bootstrap::{bootstrap_interval, partial_bootstrap, BootstrapDraws, BootstrapPlan, BootstrapTarget};
pub use data::{Dataset, FoldAssignment, Ranking, Subset};
pub use error::{Error, Result};
pub use estimation::{
    auvroc, estimate_selection, estimate_vim, estimate_vroc, ppsv, CrossFitPlan, Mode, SelectionEstimate, VimEstimate,
    VrocEstimate,
};
pub use inference::{compare_curves, vroc_inference, ConfidenceInterval, IntervalMethod, VrocInference};
pub use learners::LearnerSpec;
pub use metrics::{metric_by_name, Accuracy, Deviance, OutcomeKind, PredictivenessMetric, RSquared};
pub use rng::SeedSpec;
