//! Log pairs on curves: exact lct and klt tests, the genus-0 weight
//! criterion, one-cluster collision strata, partition functions, and the
//! factorization of the Slater determinant along a section.

pub mod density;
pub mod factorization;
pub mod lct;
pub mod partition;
pub mod probe;
pub mod strata;

pub use density::{deformed_log_density, DeformedDensityParams, LogDensity, SingularPoint};
pub use lct::{
    genus1_exponent_bookkeeping, genus1_exponent_bookkeeping_with, global_lct_probe,
    lct_curve_divisor, weight_condition, CurveDivisor, ExponentEntry, ExponentLedger, GlobalLct,
    Lct,
};
pub use partition::{partition_estimate, PartitionEstimate, PartitionMethod, SeedDiagnostic};
pub use strata::{collision_exponent, one_cluster_strata, CollisionExponent, Stratum, StratumLocation};
pub use factorization::{vanishing_order, vanishing_order_with};
pub use partition::Proposal;
pub use probe::{gibbs_stable_probe, probe_params, ProbeSettings, StabilityReport, Verdict};
