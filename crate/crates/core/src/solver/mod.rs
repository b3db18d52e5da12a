//! Simultaneity constraints over adjustable delays and their exact solution.
//!
//! Every BSA contributes one constraint: the photon arriving at its left
//! input and the one arriving at its right input must coincide to within a
//! tolerance. Arrival times are integer picoseconds, so checks are exact.

mod constraints;
mod cycle;
mod solve;

pub use constraints::{
    build_constraints, current_value, emission_epoch, static_arrival, ArrivalExpr, SimultaneityConstraint,
    TimingConstraintSystem, TimingVariable, VarId, VarKind,
};
pub use cycle::cycle_imbalance;
pub use solve::{
    apply_assignment, solve, BoundsCertificate, InfeasibilityCertificate, Solution, TimingAssignment,
    DEFAULT_EPSILON,
};
