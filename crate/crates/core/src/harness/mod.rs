//! Scenario library, adversarial schedules, schedule exploration and the
//! property matrix.

pub mod adversary;
pub mod explore;
pub mod matrix;
pub mod scenarios;

pub use adversary::{adversarial_schedule, adversary_config, builtin_schedule, fids_plan, rfids_plan, AdversaryPlan};
pub use explore::{explore, ExplorationResult, ExploreError, ExploreMode, Granularity, Violation};
pub use matrix::{build_matrix, MatrixReport};
