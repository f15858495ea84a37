//! Constrained SCFA problems: variants, packing, constraints, objectives and the solver.

pub mod constraints;
pub mod identifiability;
pub mod init;
pub mod objective;
pub mod online;
pub mod optimize;
pub mod packing;
pub mod permutation;
pub mod variant;

pub use constraints::{build_constraints, ConstraintSet, FixedEntry, LinearRow};
pub use identifiability::{check_identifiability, kruskal_rank, minimum_mics, Identifiability};
pub use init::{initialize_segment, Initialization, WarmStart};
pub use objective::{Evaluation, SegmentObjective};
pub use online::{run_bin, run_online, solve_segment, BinTrack, OnlineConfig, OnlineEstimate, SegmentEstimate};
pub use optimize::{minimize, SolveReport, SolverOptions, Termination};
pub use packing::VariablePacking;
pub use permutation::{permute_columns, resolve_permutation};
pub use variant::{ConstraintParams, ObjectiveKind, ProblemVariant, PsdSumConstraint, RatfBox};
