//! Plan, execute and learn parameterized manipulation skills.
//!
//! A scene ([`world_model::WorldModel`]) is translated to PDDL and planned
//! into a skill sequence, assembled into a behavior tree, and executed in a
//! simplified impedance-controlled simulator. The learnable skill parameters
//! are tuned with multi-objective Bayesian optimization over domain-randomized
//! worlds, and the resulting Pareto front is stored for replay.

pub mod behavior_tree;
pub mod control_sim;
pub mod harness;
pub mod math;
pub mod optimizer;
pub mod pddl;
pub mod rewards;
pub mod skills;
pub mod space;
pub mod world_model;

pub use math::Real;

pub type Vec3 = math::Vec3<f64>;
pub type Quat = math::Quat<f64>;
pub type Pose = math::Pose<f64>;
pub type Matrix = math::Matrix<f64>;
pub type Gp = optimizer::Gp<f64>;
