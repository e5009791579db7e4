//! Seed generation for numerical inverse kinematics on redundant dual-arm
//! mobile robots.
//!
//! The pipeline: build a [`reachability`] map offline (wrist-center
//! positions → sampled arm postures), enumerate full-arm [`candidates`] for
//! a target hand pose via the analytic [`wrist`] solve, score them with the
//! joint-limit-aware [`goodness`] metric, and let the [`ga`]-driven
//! [`seed`] generator pick trunk/base placements whose worst goal is best.
//! Online, [`ik`] solves from those seeds and [`eval`] measures how often
//! it succeeds under randomized target perturbations.

pub mod candidates;
pub mod chain;
pub mod error;
pub mod eval;
pub mod ga;
pub mod goodness;
pub mod ik;
pub mod jacobian;
pub mod pose;
pub mod reachability;
pub mod scenario;
pub mod seed;
pub mod wrist;

pub use candidates::{arm_candidates, ArmCandidate};
pub use chain::{load_chain, Joint, JointDef, JointKind, KinematicChain};
pub use error::{Error, Result};
pub use eval::{evaluate, fitness_vs_success, perturb, EvalReport, PerturbationSpec, SeedSet};
pub use ga::{run_ga, GaParams};
pub use goodness::{goodness, limit_distances, scaled_jacobian, GoodnessParams, LimitDistances};
pub use ik::{solve, solve_trajectory, IkOutcome, IkRequest, IkStatus, Tolerances};
pub use jacobian::geometric_jacobian;
pub use pose::Pose;
pub use reachability::{build_map, BuildOptions, GridParams, MapSample, ReachabilityMap};
pub use scenario::Scenario;
pub use seed::{evolve, fitness, goal_states, SeedResult};
pub use wrist::{solve_zxz, wrist_center, WristSolution};
