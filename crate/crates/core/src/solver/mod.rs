//! Lattice solutions of the mild equation, Picard iterates, and the
//! deterministic second-moment oracle for linear σ.

mod evolve;
mod lattice_moment;
mod montecarlo;
mod oracle;
mod plan;
mod positivity;
mod sigma;
mod stability;

pub use evolve::{EvolveState, FieldLattice, Scheme};
pub use montecarlo::{probe_samples, replicate, sample_stats, thread_count, MomentRow, MomentTable, SampleStats};
pub use oracle::{pam_second_moment_oracle, OracleOptions, PamOracle};
pub use plan::{GridSpec, LatticePlan};
pub use positivity::{positivity_scan, PositivityScan};
pub use sigma::{SigmaKind, SigmaSpec};
pub use stability::{deterministic_distance, stability_bound, stability_compare, StabilityPoint};
