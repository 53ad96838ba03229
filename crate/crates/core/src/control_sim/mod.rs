//! Simplified robot simulation: an impedance-controlled end effector (or a
//! 7-joint arm) driven by a motion generator, with penalty-contact
//! environments for peg insertion and planar pushing.
//!
//! The inner loop runs at `dt` (2 ms); a new [`Action`] is issued every
//! `substeps` inner steps. Spring, damper and contact normal forces are
//! treated linearly-implicitly, everything else with semi-implicit Euler.

pub mod contact;
pub mod kinematics;
pub mod motion;
pub mod peg;
pub mod push;

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contact::{contact_force, ContactForce, ContactParams, Polygon};
pub use kinematics::{external_wrench_torque, impedance_torque, PlanarChain, SpatialChain};
pub use motion::{MotionCommand, MotionGenerator, Overlay};
pub use peg::{PegEnv, PegGeometry};
pub use push::{PushEnv, PushObject};

use crate::behavior_tree::Status;
use crate::math::{Matrix, Pose, Quat, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("non-finite state at t = {time:.3} s: {what}")]
    NonFinite { time: f64, what: String },
    #[error("invalid simulator configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fidelity {
    /// End effector as a 6-DOF rigid body.
    #[default]
    Cartesian,
    /// Seven revolute joints driven through the Jacobian transpose.
    Arm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Inner control step (s).
    pub dt: f64,
    /// Inner steps per action.
    pub substeps: usize,
    pub fidelity: Fidelity,
    /// End-effector mass (kg) and rotational inertia (kg m^2).
    pub ee_mass: f64,
    pub ee_inertia: f64,
    /// Joint inertias in arm mode (kg m^2).
    pub joint_inertia: f64,
    /// `D = 2 * ratio * sqrt(K * m) + floor`.
    pub damping_ratio: f64,
    pub damping_floor: [f64; 6],
    /// Ramp rates: N/m/s, Nm/rad/s, N/s and Nm/s.
    pub stiffness_rate: f64,
    pub rot_stiffness_rate: f64,
    pub wrench_rate: f64,
    pub torque_rate: f64,
    /// Angular speed of the attractor orientation (rad/s).
    pub rot_speed: f64,
    pub contact: ContactParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.002,
            substeps: 10,
            fidelity: Fidelity::Cartesian,
            ee_mass: 1.0,
            ee_inertia: 0.02,
            joint_inertia: 0.3,
            damping_ratio: 1.0,
            damping_floor: [5.0, 5.0, 5.0, 0.2, 0.2, 0.2],
            stiffness_rate: 2000.0,
            rot_stiffness_rate: 200.0,
            wrench_rate: 50.0,
            torque_rate: 5.0,
            rot_speed: 1.0,
            contact: ContactParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !(pos(self.dt) && self.substeps >= 1 && pos(self.ee_mass) && pos(self.ee_inertia) && pos(self.joint_inertia))
        {
            return Err(SimError::Config(
                "time step, masses and inertias must be positive".into(),
            ));
        }
        if !(self.damping_ratio >= 0.0 && self.damping_floor.iter().all(|d| *d >= 0.0)) {
            return Err(SimError::Config("damping must be non-negative".into()));
        }
        if ![
            self.stiffness_rate,
            self.rot_stiffness_rate,
            self.wrench_rate,
            self.torque_rate,
        ]
        .iter()
        .all(|r| pos(*r))
        {
            return Err(SimError::Config("ramp rates must be positive".into()));
        }
        Ok(())
    }

    pub fn action_period(&self) -> f64 {
        self.dt * self.substeps as f64
    }

    /// Critical damping for the given stiffness plus the configured floor.
    pub fn damping(&self, stiffness: &[f64; 6]) -> [f64; 6] {
        let mut d = [0.0; 6];
        for i in 0..6 {
            let m = if i < 3 { self.ee_mass } else { self.ee_inertia };
            d[i] = 2.0 * self.damping_ratio * (stiffness[i].max(0.0) * m).sqrt() + self.damping_floor[i];
        }
        d
    }
}

/// Controller input held for one action period: attractor pose, diagonal
/// stiffness and commanded wrench.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub reference: Pose<f64>,
    pub stiffness: [f64; 6],
    pub wrench: [f64; 6],
}

impl Action {
    pub const DIM: usize = 19;

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.reference.to_array().to_vec();
        v.extend_from_slice(&self.stiffness);
        v.extend_from_slice(&self.wrench);
        v
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        if v.len() != Self::DIM {
            return None;
        }
        let mut pose = [0.0; 7];
        pose.copy_from_slice(&v[..7]);
        let mut stiffness = [0.0; 6];
        stiffness.copy_from_slice(&v[7..13]);
        let mut wrench = [0.0; 6];
        wrench.copy_from_slice(&v[13..]);
        Some(Self {
            reference: Pose::from_array(pose),
            stiffness,
            wrench,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RobotState {
    Cartesian { pose: Pose<f64>, twist: [f64; 6] },
    Arm { q: Vec<f64>, qd: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub robot: RobotState,
    pub objects: Vec<(String, Pose<f64>)>,
    pub time: f64,
}

impl SimState {
    /// Robot part of the state as a flat vector: joint positions and
    /// velocities in arm mode, pose and twist otherwise.
    pub fn robot_vector(&self) -> Vec<f64> {
        match &self.robot {
            RobotState::Cartesian { pose, twist } => {
                let mut v = pose.to_array().to_vec();
                v.extend_from_slice(twist);
                v
            }
            RobotState::Arm { q, qd } => q.iter().chain(qd).copied().collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.robot_vector().iter().all(|v| v.is_finite())
            && self.objects.iter().all(|(_, p)| p.is_finite())
            && self.time.is_finite()
    }
}

/// End effector as a free rigid body under impedance control.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianBody {
    pub pose: Pose<f64>,
    pub velocity: Vec3<f64>,
    pub spin: Vec3<f64>,
    pub mass: f64,
    pub inertia: f64,
}

impl CartesianBody {
    pub fn new(pose: Pose<f64>, mass: f64, inertia: f64) -> Self {
        Self {
            pose,
            velocity: Vec3::zeros(),
            spin: Vec3::zeros(),
            mass,
            inertia,
        }
    }

    /// One step of `m a = -K x_e - D v + F` with spring and damper implicit.
    /// `surface_load` adds implicit planar Coulomb friction with coefficient
    /// `mu`; returns the friction force that was applied.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        reference: &Pose<f64>,
        stiffness: &[f64; 6],
        damping: &[f64; 6],
        force: &[f64; 6],
        surface_load: f64,
        mu: f64,
        dt: f64,
    ) -> Vec3<f64> {
        let e = self.pose.error_to(reference);
        let mut v = self.velocity.to_array();
        let mut w = self.spin.to_array();
        for i in 0..3 {
            let (k, d, m) = (stiffness[i], damping[i], self.mass);
            v[i] = (m * v[i] + dt * (-k * e[i] + force[i])) / (m + dt * d + dt * dt * k);
            let (k, d, m) = (stiffness[i + 3], damping[i + 3], self.inertia);
            w[i] = (m * w[i] + dt * (-k * e[i + 3] + force[i + 3])) / (m + dt * d + dt * dt * k);
        }
        let mut friction = Vec3::zeros();
        if surface_load > 0.0 && mu > 0.0 {
            let [fx, fy] = contact::friction_velocity([v[0], v[1]], mu * surface_load * dt, self.mass);
            friction = Vec3::new((fx - v[0]) * self.mass / dt, (fy - v[1]) * self.mass / dt, 0.0);
            v[0] = fx;
            v[1] = fy;
        }
        self.velocity = Vec3::from_slice(&v);
        self.spin = Vec3::from_slice(&w);
        self.pose.position += self.velocity.scale(dt);
        self.pose.orientation = (Quat::from_rotation_vector(self.spin.scale(dt)) * self.pose.orientation).normalized();
        friction
    }

    /// Kinetic energy plus the energy stored in the impedance spring.
    pub fn energy(&self, reference: &Pose<f64>, stiffness: &[f64; 6]) -> f64 {
        let e = self.pose.error_to(reference);
        let kinetic = 0.5 * self.mass * self.velocity.norm_squared() + 0.5 * self.inertia * self.spin.norm_squared();
        let spring: f64 = (0..6).map(|i| 0.5 * stiffness[i] * e[i] * e[i]).sum();
        kinetic + spring
    }
}

/// Seven-joint arm with diagonal joint inertia, driven by
/// `tau = J^T (-K x_e - D J qd) + J^T F`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmBody {
    pub chain: SpatialChain<f64>,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub inertia: Vec<f64>,
}

impl ArmBody {
    pub const SEED: [f64; 7] = [0.0, 0.6, 0.0, -1.4, 0.0, 1.14, 0.0];

    pub fn reaching(pose: &Pose<f64>, inertia: f64) -> Self {
        let chain = SpatialChain::seven_dof();
        let q = chain.inverse(pose, &Self::SEED, 200);
        let n = chain.dof();
        Self {
            chain,
            q,
            qd: vec![0.0; n],
            inertia: vec![inertia; n],
        }
    }

    pub fn pose(&self) -> Pose<f64> {
        self.chain.forward(&self.q)
    }

    pub fn twist(&self) -> [f64; 6] {
        let v = self.chain.jacobian(&self.q).mul_vec(&self.qd);
        [v[0], v[1], v[2], v[3], v[4], v[5]]
    }

    /// Linearly-implicit joint-space step:
    /// `(M + dt J^T D J + dt^2 J^T K J) qd' = M qd + dt J^T (-K x_e + F)`.
    pub fn step(&mut self, reference: &Pose<f64>, stiffness: &[f64; 6], damping: &[f64; 6], force: &[f64; 6], dt: f64) {
        let n = self.q.len();
        let j = self.chain.jacobian(&self.q);
        let e = self.pose().error_to(reference);
        let mut a = Matrix::from_diagonal(&self.inertia);
        for r in 0..n {
            for c in 0..n {
                let mut s = 0.0;
                for k in 0..6 {
                    s += j[(k, r)] * (dt * damping[k] + dt * dt * stiffness[k]) * j[(k, c)];
                }
                a[(r, c)] += s;
            }
        }
        let f: Vec<f64> = (0..6).map(|k| -stiffness[k] * e[k] + force[k]).collect();
        let jt_f = j.tr_mul_vec(&f);
        let b: Vec<f64> = (0..n).map(|i| self.inertia[i] * self.qd[i] + dt * jt_f[i]).collect();
        if let Some(ch) = a.cholesky() {
            self.qd = ch.solve(&b);
        }
        for i in 0..n {
            self.q[i] += self.qd[i] * dt;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Robot {
    Cartesian(CartesianBody),
    Arm(ArmBody),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    Free,
    Peg(PegEnv),
    Push(PushEnv),
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub config: SimConfig,
    pub robot: Robot,
    pub env: Environment,
    pub motion: MotionGenerator,
    pub time: f64,
    /// Executed (ramped) stiffness and wrench.
    stiffness: [f64; 6],
    wrench: [f64; 6],
    action: Action,
    contact: Vec3<f64>,
    /// Poses reported with the state besides the environment's own objects.
    pub static_objects: Vec<(String, Pose<f64>)>,
    /// Name of the pushed object, if any.
    pub pushed_object: Option<String>,
}

fn ramp(current: f64, target: f64, max_step: f64) -> f64 {
    current + (target - current).clamp(-max_step, max_step)
}

impl Simulator {
    pub fn new(config: SimConfig, start: Pose<f64>, env: Environment) -> Result<Self, SimError> {
        config.validate()?;
        let robot = match config.fidelity {
            Fidelity::Cartesian => Robot::Cartesian(CartesianBody::new(start, config.ee_mass, config.ee_inertia)),
            Fidelity::Arm => Robot::Arm(ArmBody::reaching(&start, config.joint_inertia)),
        };
        let mut motion = MotionGenerator::new(start);
        motion.rot_speed = config.rot_speed;
        Ok(Self {
            robot,
            env,
            motion,
            time: 0.0,
            stiffness: [0.0; 6],
            wrench: [0.0; 6],
            action: Action {
                reference: start,
                stiffness: [0.0; 6],
                wrench: [0.0; 6],
            },
            contact: Vec3::zeros(),
            static_objects: Vec::new(),
            pushed_object: None,
            config,
        })
    }

    /// Starts with the given stiffness already applied.
    pub fn with_stiffness(mut self, stiffness: [f64; 6]) -> Self {
        self.stiffness = stiffness;
        self.action.stiffness = stiffness;
        self
    }

    pub fn ee_pose(&self) -> Pose<f64> {
        match &self.robot {
            Robot::Cartesian(b) => b.pose,
            Robot::Arm(a) => a.pose(),
        }
    }

    pub fn ee_twist(&self) -> [f64; 6] {
        match &self.robot {
            Robot::Cartesian(b) => {
                let (v, w) = (b.velocity, b.spin);
                [v.x, v.y, v.z, w.x, w.y, w.z]
            }
            Robot::Arm(a) => a.twist(),
        }
    }

    pub fn reference(&self) -> Pose<f64> {
        self.action.reference
    }

    pub fn last_action(&self) -> &Action {
        &self.action
    }

    pub fn applied_stiffness(&self) -> [f64; 6] {
        self.stiffness
    }

    pub fn applied_wrench(&self) -> [f64; 6] {
        self.wrench
    }

    /// Contact force on the end effector during the last inner step.
    pub fn contact_force(&self) -> Vec3<f64> {
        self.contact
    }

    /// Insertion depth of the peg, zero outside the hole or without a peg.
    pub fn insertion_depth(&self) -> f64 {
        match &self.env {
            Environment::Peg(p) => p.inserted_depth(self.ee_pose().position),
            _ => 0.0,
        }
    }

    pub fn objects(&self) -> Vec<(String, Pose<f64>)> {
        let mut out = self.static_objects.clone();
        if let (Environment::Push(p), Some(name)) = (&self.env, &self.pushed_object) {
            out.push((name.clone(), p.object.pose(0.0)));
        }
        out
    }

    pub fn state(&self) -> SimState {
        let robot = match &self.robot {
            Robot::Cartesian(b) => RobotState::Cartesian {
                pose: b.pose,
                twist: self.ee_twist(),
            },
            Robot::Arm(a) => RobotState::Arm {
                q: a.q.clone(),
                qd: a.qd.clone(),
            },
        };
        SimState {
            robot,
            objects: self.objects(),
            time: self.time,
        }
    }

    /// One inner step under `action`.
    pub fn step(&mut self, action: &Action) -> Result<(), SimError> {
        let dt = self.config.dt;
        self.action = *action;
        for i in 0..6 {
            let (ks, ws) = if i < 3 {
                (self.config.stiffness_rate, self.config.wrench_rate)
            } else {
                (self.config.rot_stiffness_rate, self.config.torque_rate)
            };
            self.stiffness[i] = ramp(self.stiffness[i], action.stiffness[i].max(0.0), ks * dt);
            self.wrench[i] = ramp(self.wrench[i], action.wrench[i], ws * dt);
        }
        let damping = self.config.damping(&self.stiffness);
        let pose = self.ee_pose();
        let twist = self.ee_twist();
        let velocity = Vec3::new(twist[0], twist[1], twist[2]);
        let (contact, surface_load, mu) = match &mut self.env {
            Environment::Free => (Vec3::zeros(), 0.0, 0.0),
            Environment::Peg(peg) => {
                let c = peg.contact(pose.position, velocity);
                (c.force, c.surface_load, peg.surface_friction)
            }
            Environment::Push(push) => {
                let f = push.step(&pose, velocity, twist[5], dt);
                (Vec3::new(f[0], f[1], 0.0), 0.0, 0.0)
            }
        };
        let mut force = self.wrench;
        force[0] += contact.x;
        force[1] += contact.y;
        force[2] += contact.z;
        let friction = match &mut self.robot {
            Robot::Cartesian(b) => b.step(
                &action.reference,
                &self.stiffness,
                &damping,
                &force,
                surface_load,
                mu,
                dt,
            ),
            Robot::Arm(a) => {
                let mut friction = Vec3::zeros();
                if surface_load > 0.0 {
                    let slip = Vec3::new(velocity.x, velocity.y, 0.0);
                    let speed = slip.norm().max(1e-3);
                    friction = slip.scale(-mu * surface_load / speed);
                    force[0] += friction.x;
                    force[1] += friction.y;
                }
                a.step(&action.reference, &self.stiffness, &damping, &force, dt);
                friction
            }
        };
        self.contact = contact + friction;
        self.time += dt;
        self.check_finite()
    }

    fn check_finite(&self) -> Result<(), SimError> {
        let bad = |what: &str| {
            Err(SimError::NonFinite {
                time: self.time,
                what: what.to_string(),
            })
        };
        if !self.ee_pose().is_finite() || !self.ee_twist().iter().all(|v| v.is_finite()) {
            return bad("end effector");
        }
        if let Environment::Push(p) = &self.env {
            let o = &p.object;
            if ![o.x, o.y, o.yaw, o.vx, o.vy, o.w].iter().all(|v| v.is_finite()) {
                return bad("pushed object");
            }
        }
        Ok(())
    }

    /// Holds `action` for one action period.
    pub fn step_period(&mut self, action: &Action) -> Result<(), SimError> {
        for _ in 0..self.config.substeps {
            self.step(action)?;
        }
        Ok(())
    }

    /// Advances the motion generator by one action period under `cmd` and
    /// executes the resulting action.
    pub fn command(&mut self, cmd: &MotionCommand) -> Result<Action, SimError> {
        let reference = self.motion.step(cmd, self.config.action_period());
        let action = Action {
            reference,
            stiffness: cmd.stiffness,
            wrench: cmd.wrench,
        };
        self.step_period(&action)?;
        Ok(action)
    }
}

/// Domain randomization: Gaussian planar noise on the listed objects and a
/// uniformly drawn start configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationSpec {
    /// Standard deviation of the x and y perturbation (m).
    pub sigma: f64,
    pub starts: Vec<Pose<f64>>,
    /// Object ids whose poses are perturbed.
    #[serde(default)]
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSample {
    pub seed: u64,
    pub start: usize,
    pub offsets: BTreeMap<String, [f64; 2]>,
}

impl RandomizationSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(SimError::Config("sigma must be finite and non-negative".into()));
        }
        if self.starts.is_empty() {
            return Err(SimError::Config("at least one start configuration is required".into()));
        }
        Ok(())
    }

    pub fn sample(&self, seed: u64) -> WorldSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = rand::Rng::gen_range(&mut rng, 0..self.starts.len().max(1));
        let mut offsets = BTreeMap::new();
        for t in &self.targets {
            let o = if self.sigma > 0.0 {
                let n = Normal::new(0.0, self.sigma).expect("sigma checked");
                [n.sample(&mut rng), n.sample(&mut rng)]
            } else {
                [0.0, 0.0]
            };
            offsets.insert(t.clone(), o);
        }
        WorldSample { seed, start, offsets }
    }
}

impl WorldSample {
    pub fn offset(&self, id: &str) -> [f64; 2] {
        self.offsets.get(id).copied().unwrap_or([0.0, 0.0])
    }

    pub fn perturb(&self, id: &str, pose: &Pose<f64>) -> Pose<f64> {
        let [dx, dy] = self.offset(id);
        let mut p = *pose;
        p.position.x += dx;
        p.position.y += dy;
        p
    }
}

/// One row of an episode trace, taken once per action period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub ee: Pose<f64>,
    pub reference: Pose<f64>,
    /// Contact force on the end effector (N).
    pub contact: Vec3<f64>,
    /// Poses aligned with [`EpisodeTrace::object_ids`].
    pub objects: Vec<Pose<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub object_ids: Vec<String>,
    /// Axis-aligned half extents of box-like objects.
    pub extents: BTreeMap<String, [f64; 3]>,
    /// Time between rows (s).
    pub period: f64,
    pub steps: Vec<StepRecord>,
    pub result: Status,
    /// Diagnostic when the simulation was aborted.
    pub aborted: Option<String>,
}

impl EpisodeTrace {
    pub fn object_index(&self, id: &str) -> Option<usize> {
        self.object_ids.iter().position(|o| o == id)
    }

    pub fn succeeded(&self) -> bool {
        self.result == Status::Success
    }

    /// Writes the trace as comma-separated rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let pose_cols = |p: &str| ["x", "y", "z", "qx", "qy", "qz", "qw"].map(|c| format!("{p}_{c}"));
        let mut header = vec!["t".to_string()];
        header.extend(pose_cols("ee"));
        header.extend(pose_cols("ref"));
        header.extend(["fx", "fy", "fz"].map(String::from));
        for id in &self.object_ids {
            header.extend(pose_cols(id));
        }
        writeln!(out, "{}", header.join(","))?;
        for s in &self.steps {
            let mut row = vec![s.t];
            row.extend(s.ee.to_array());
            row.extend(s.reference.to_array());
            row.extend(s.contact.to_array());
            for p in &s.objects {
                row.extend(p.to_array());
            }
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_has_nineteen_numbers() {
        let a = Action {
            reference: Pose::from_position(Vec3::new(0.1, 0.2, 0.3)),
            stiffness: [1.0; 6],
            wrench: [2.0; 6],
        };
        let v = a.to_vec();
        assert_eq!(v.len(), Action::DIM);
        assert_eq!(Action::from_slice(&v), Some(a));
        assert_eq!(Action::from_slice(&v[..18]), None);
    }

    #[test]
    fn arm_state_has_fourteen_numbers() {
        let cfg = SimConfig {
            fidelity: Fidelity::Arm,
            ..SimConfig::default()
        };
        let start = Pose::new(
            Vec3::new(0.5, 0.0, 0.4),
            Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), std::f64::consts::PI),
        );
        let sim = Simulator::new(cfg, start, Environment::Free).unwrap();
        assert_eq!(sim.state().robot_vector().len(), 14);
        let e = sim.ee_pose().error_to(&start);
        assert!(e.iter().all(|v| v.abs() < 1e-6), "{e:?}");
    }

    #[test]
    fn ramping_limits_change_per_step() {
        let mut sim = Simulator::new(SimConfig::default(), Pose::default(), Environment::Free).unwrap();
        let a = Action {
            reference: Pose::default(),
            stiffness: [1000.0; 6],
            wrench: [0.0, 0.0, -10.0, 0.0, 0.0, 0.0],
        };
        sim.step(&a).unwrap();
        assert!((sim.applied_stiffness()[0] - 4.0).abs() < 1e-12);
        assert!((sim.applied_wrench()[2] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn randomization_is_seeded() {
        let spec = RandomizationSpec {
            sigma: 0.007,
            starts: vec![Pose::default(); 4],
            targets: vec!["a".into(), "b".into()],
        };
        assert_eq!(spec.sample(9), spec.sample(9));
        assert_ne!(spec.sample(9), spec.sample(10));
        let zero = RandomizationSpec { sigma: 0.0, ..spec };
        assert_eq!(zero.sample(1).offset("a"), [0.0, 0.0]);
    }
}
