//! Design engine for multi-arm multi-stage trials that compare every pair of
//! arms with no common control.
//!
//! The crate computes stopping boundaries, the familywise error rate under
//! binding and non-binding similarity rules, power under the least favourable
//! configuration, expected sample sizes and outcome breakdowns. Every
//! analytic quantity has an independent Monte Carlo counterpart in
//! [`simulator`].
//!
//! The crate is `no_std` with `alloc`. The default `std` feature adds rayon
//! parallelism over rectangle families and simulation replications.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod characteristics;
pub mod comparators;
pub mod correlation;
pub mod enumeration;
pub mod error;
pub mod model;
pub mod mvn;
pub mod normal;
pub mod partitions;
pub mod simulator;
pub mod solver;

mod par;
mod sum;

pub use characteristics::{
    evaluate_design, expected_sample_size, fwer_binding_global, fwer_nonbinding_global,
    outcome_breakdown, power_lfc, strong_control_certificate, Breakdown, Certificate,
    EvaluationOptions, OperatingReport, Verdict,
};
pub use comparators::{comparator_report, ComparatorContext, ComparatorKind, ComparatorReport, ComparatorSpec};
pub use correlation::{build_model, JointGaussianModel};
pub use enumeration::{ConfigurationFamily, FamilyKind};
pub use error::{Error, Result};
pub use model::{
    ArmSet, BoundarySet, EffectConfiguration, HypothesisIndex, OutcomeConfiguration,
    RegionCode, TrialDesign, TrialLayout,
};
pub use mvn::{rect_prob, ProbabilityEstimate, QuadratureOptions, Rectangle};
pub use simulator::{simulate, simulate_type_i_profile, SimulationOptions, SimulationResult};
pub use solver::{
    assemble_design, calibrate_theta, solve_boundary_scale, solve_design, solve_group_size,
    AllocationTemplate, BoundaryFamily, BoundaryShape, DesignTargets, SolvedDesign, SolverOptions,
};
