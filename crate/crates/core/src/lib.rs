//! Minimal-perturbation attacks on ReLU networks, synthesised by encoding
//! the network as a mixed-integer linear program and solving it with a
//! built-in simplex and branch-and-bound solver.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for the common cases.

pub mod attack;
pub mod bb_solver;
pub mod encoder;
pub mod lp_solver;
pub mod milp_model;
pub mod network;
pub mod scalar;
mod segments;

pub use attack::{
    brute_force, enumerate_scenarios, run_campaign, synthesize, verify, AttackConfig, AttackError, AttackResult,
    AttackStatus, CampaignReport, Scenario, Verdict, VerifyReason,
};
pub use bb_solver::{lexicographic_solve, solve_milp, MilpOutcome, MilpStatus, NodeHooks, SolveError, SolverConfig};
pub use encoder::{encode, AttackConstraint, EncodedAttack, ObjectiveKind, PerturbationSpec};
pub use lp_solver::{solve_lp, LpOutcome, LpProblem, LpStatus};
pub use milp_model::{Constraint, IndicatorConstraint, LinearExpr, MilpModel, Objective, VarId};
pub use network::{ActivationKind, Interval, IntervalBox, LayerSpec, Network, NetworkError};
pub use scalar::Scalar;

pub type Network64 = Network<f64>;
pub type Network32 = Network<f32>;
pub type MilpModel64 = MilpModel<f64>;
pub type MilpModel32 = MilpModel<f32>;
pub type LpProblem64 = LpProblem<f64>;
pub type LpProblem32 = LpProblem<f32>;
pub type EncodedAttack64 = EncodedAttack<f64>;
pub type EncodedAttack32 = EncodedAttack<f32>;
pub type AttackConfig64 = AttackConfig<f64>;
pub type AttackConfig32 = AttackConfig<f32>;
pub type AttackResult64 = AttackResult<f64>;
