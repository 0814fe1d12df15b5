//! Closed-form lifting, loss functionals, dispersion and bound checks, the
//! streaming lift, and a dense least-squares reference solver.

mod bounds;
mod field;
mod lift;
mod loss;
mod oracle;
mod streaming;

pub use bounds::{beta, bound_report, BetaReport, BoundReport, BETA_MU_EPS};
pub use field::{FeatureField, LabelTable, ObservationSet, COVERAGE_EPS};
pub use lift::{lift, lift_rowsum, lift_rowsum_squared, LiftMode};
pub use loss::{loss_surrogate, loss_true, surrogate_gradient, Loss};
pub use oracle::{
    lsq_oracle, lsq_oracle_with_stats, OracleStats, ORACLE_DAMPING, ORACLE_GRADIENT_TOL, ORACLE_MAX_PRIMITIVES,
};
pub use streaming::lift_streaming;
