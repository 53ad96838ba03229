//! Reward functions and their accumulation into per-objective returns.
//!
//! Every objective is maximized. Per-step rewards are evaluated once per
//! trace row; the applied-wrench reward is a time integral and enters its
//! objective negated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_sim::EpisodeTrace;
use crate::math::{Pose, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("reward refers to unknown objective `{0}`")]
    UnknownObjective(String),
    #[error("reward `{kind}` needs parameter `{param}`")]
    MissingParameter { kind: &'static str, param: &'static str },
    #[error("reward `{kind}`: {msg}")]
    Invalid { kind: &'static str, msg: String },
    #[error("object `{0}` is not part of the episode trace")]
    UnknownObject(String),
    #[error("distance plus offset is zero")]
    ZeroDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    /// Fixed reward when the tree returns success.
    TaskCompletion,
    /// `1 / (2 (d + d_o))` with `d` the end-effector distance to a box.
    EeBoxDistance,
    /// Integral of the contact force magnitude over time.
    AppliedWrench,
    /// Exponential of the end-effector distance to a target object.
    EeGoalDistance,
    /// Exponential of the distance between end effector and attractor.
    EeReferenceDistance,
    /// Exponential of the pose divergence between an object and its goal.
    ObjectPoseDivergence,
}

impl RewardKind {
    pub fn name(&self) -> &'static str {
        match self {
            RewardKind::TaskCompletion => "task-completion",
            RewardKind::EeBoxDistance => "ee-box-distance",
            RewardKind::AppliedWrench => "applied-wrench",
            RewardKind::EeGoalDistance => "ee-goal-distance",
            RewardKind::EeReferenceDistance => "ee-reference-distance",
            RewardKind::ObjectPoseDivergence => "object-pose-divergence",
        }
    }
}

/// Which part of the pose divergence an object-pose-divergence reward uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceMetric {
    /// Translational plus angular distance.
    #[default]
    Both,
    Position,
    Orientation,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub kind: RewardKind,
    pub objective: String,
    #[serde(default = "one")]
    pub weight: f64,
    /// Width of exponential rewards.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Distance offset `d_o` (m).
    #[serde(default)]
    pub offset: f64,
    /// Task-completion reward value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Box, goal or object the reward refers to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Goal pose for object-pose-divergence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<String>,
    #[serde(default)]
    pub metric: DivergenceMetric,
}

impl RewardSpec {
    pub fn new(kind: RewardKind, objective: &str) -> Self {
        Self {
            kind,
            objective: objective.into(),
            weight: 1.0,
            sigma: None,
            offset: 0.0,
            value: None,
            target: None,
            goal: None,
            metric: DivergenceMetric::Both,
        }
    }

    fn missing(&self, param: &'static str) -> RewardError {
        RewardError::MissingParameter {
            kind: self.kind.name(),
            param,
        }
    }

    fn invalid(&self, msg: &str) -> RewardError {
        RewardError::Invalid {
            kind: self.kind.name(),
            msg: msg.into(),
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !self.weight.is_finite() {
            return Err(self.invalid("weight must be finite"));
        }
        if !(self.offset >= 0.0 && self.offset.is_finite()) {
            return Err(self.invalid("offset must be non-negative"));
        }
        match self.kind {
            RewardKind::TaskCompletion => {
                let v = self.value.ok_or_else(|| self.missing("value"))?;
                if !v.is_finite() {
                    return Err(self.invalid("value must be finite"));
                }
            }
            RewardKind::EeBoxDistance | RewardKind::EeGoalDistance => {
                self.target.as_ref().ok_or_else(|| self.missing("target"))?;
            }
            RewardKind::ObjectPoseDivergence => {
                self.target.as_ref().ok_or_else(|| self.missing("target"))?;
                self.goal.as_ref().ok_or_else(|| self.missing("goal"))?;
            }
            RewardKind::AppliedWrench | RewardKind::EeReferenceDistance => {}
        }
        if matches!(
            self.kind,
            RewardKind::EeGoalDistance | RewardKind::EeReferenceDistance | RewardKind::ObjectPoseDivergence
        ) {
            let s = self.sigma.ok_or_else(|| self.missing("sigma"))?;
            if !(s > 0.0 && s.is_finite()) {
                return Err(self.invalid("sigma must be positive"));
            }
        }
        Ok(())
    }
}

/// `1 / (2 (d + d_o))`.
pub fn reward_ee_box(d: f64, offset: f64) -> Result<f64, RewardError> {
    let s = d + offset;
    if s <= 0.0 {
        return Err(RewardError::ZeroDistance);
    }
    Ok(1.0 / (2.0 * s))
}

/// `exp(-(d_m + d_o) / (2 sigma^2))`.
pub fn reward_exp(d_m: f64, sigma: f64, offset: f64) -> f64 {
    (-(d_m + offset) / (2.0 * sigma * sigma)).exp()
}

pub fn reward_task_completion(succeeded: bool, value: f64) -> f64 {
    if succeeded {
        value
    } else {
        0.0
    }
}

/// Trapezoidal integral of the contact force magnitude over the trace.
pub fn reward_applied_wrench(trace: &EpisodeTrace) -> f64 {
    trace
        .steps
        .windows(2)
        .map(|w| 0.5 * (w[0].contact.norm() + w[1].contact.norm()) * (w[1].t - w[0].t))
        .sum()
}

/// Distance from `p` to a box with half extents `half` at `pose`; zero inside.
pub fn box_distance(p: Vec3<f64>, pose: &Pose<f64>, half: [f64; 3]) -> f64 {
    let local = pose.orientation.conjugate().rotate(p - pose.position);
    let l = local.to_array();
    let mut s = 0.0;
    for i in 0..3 {
        let excess = l[i].abs() - half[i];
        if excess > 0.0 {
            s += excess * excess;
        }
    }
    s.sqrt()
}

/// Translational plus angular distance between two poses.
pub fn pose_divergence(a: &Pose<f64>, b: &Pose<f64>) -> f64 {
    divergence(a, b, DivergenceMetric::Both)
}

pub fn divergence(a: &Pose<f64>, b: &Pose<f64>, metric: DivergenceMetric) -> f64 {
    let dp = || (a.position - b.position).norm();
    let dr = || a.orientation.angle_to(b.orientation);
    match metric {
        DivergenceMetric::Both => dp() + dr(),
        DivergenceMetric::Position => dp(),
        DivergenceMetric::Orientation => dr(),
    }
}

/// Accumulated return per objective, in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ObjectiveVector {
    pub fn zeros(names: &[String]) -> Self {
        Self {
            names: names.to_vec(),
            values: vec![0.0; names.len()],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Component-wise mean of vectors sharing the same objectives.
    pub fn mean(items: &[ObjectiveVector]) -> Option<ObjectiveVector> {
        let first = items.first()?;
        let mut values = vec![0.0; first.values.len()];
        for it in items {
            for (acc, v) in values.iter_mut().zip(&it.values) {
                *acc += v;
            }
        }
        let n = items.len() as f64;
        values.iter_mut().for_each(|v| *v /= n);
        Some(ObjectiveVector {
            names: first.names.clone(),
            values,
        })
    }
}

fn object_pose(trace: &EpisodeTrace, row: usize, id: &str) -> Result<Pose<f64>, RewardError> {
    let i = trace
        .object_index(id)
        .ok_or_else(|| RewardError::UnknownObject(id.into()))?;
    Ok(trace.steps[row].objects[i])
}

/// Unweighted return of one reward over the trace.
pub fn episode_reward(trace: &EpisodeTrace, spec: &RewardSpec) -> Result<f64, RewardError> {
    spec.validate()?;
    let rows = 0..trace.steps.len();
    let target = || spec.target.as_deref().unwrap_or_default();
    Ok(match spec.kind {
        RewardKind::TaskCompletion => reward_task_completion(trace.succeeded(), spec.value.unwrap_or_default()),
        RewardKind::AppliedWrench => -reward_applied_wrench(trace),
        RewardKind::EeBoxDistance => {
            let half = *trace
                .extents
                .get(target())
                .ok_or_else(|| RewardError::UnknownObject(target().into()))?;
            let mut sum = 0.0;
            for r in rows {
                let pose = object_pose(trace, r, target())?;
                sum += reward_ee_box(box_distance(trace.steps[r].ee.position, &pose, half), spec.offset)?;
            }
            sum
        }
        RewardKind::EeGoalDistance => {
            let sigma = spec.sigma.unwrap_or(1.0);
            let mut sum = 0.0;
            for r in rows {
                let g = object_pose(trace, r, target())?;
                sum += reward_exp((trace.steps[r].ee.position - g.position).norm(), sigma, spec.offset);
            }
            sum
        }
        RewardKind::EeReferenceDistance => {
            let sigma = spec.sigma.unwrap_or(1.0);
            trace
                .steps
                .iter()
                .map(|s| reward_exp((s.ee.position - s.reference.position).norm(), sigma, spec.offset))
                .sum()
        }
        RewardKind::ObjectPoseDivergence => {
            let sigma = spec.sigma.unwrap_or(1.0);
            let goal = spec.goal.as_deref().unwrap_or_default();
            let mut sum = 0.0;
            for r in rows {
                let d = divergence(
                    &object_pose(trace, r, target())?,
                    &object_pose(trace, r, goal)?,
                    spec.metric,
                );
                sum += reward_exp(d, sigma, spec.offset);
            }
            sum
        }
    })
}

/// Per objective, the weighted sum of its rewards' returns.
pub fn accumulate(
    trace: &EpisodeTrace,
    specs: &[RewardSpec],
    objectives: &[String],
) -> Result<ObjectiveVector, RewardError> {
    let mut out = ObjectiveVector::zeros(objectives);
    for spec in specs {
        let i = objectives
            .iter()
            .position(|o| *o == spec.objective)
            .ok_or_else(|| RewardError::UnknownObjective(spec.objective.clone()))?;
        out.values[i] += spec.weight * episode_reward(trace, spec)?;
    }
    Ok(out)
}
