//! Skill implementations as behavior-tree expansions.
//!
//! Skills talk to the episode loop through the blackboard:
//!
//! | key | written by | content |
//! |-----|------------|---------|
//! | `time` | loop | simulated time (s) |
//! | `ee.pose` | loop | end-effector pose `[x,y,z,qx,qy,qz,qw]` |
//! | `ee.reference` | loop | current attractor pose |
//! | `object.<id>.pose` | loop | pose of object `<id>` as known to the robot |
//! | `peg.depth` | loop | peg insertion depth (m) |
//! | `cmd.goal` | skills | attractor goal pose |
//! | `cmd.stiffness` | skills | diagonal stiffness (6) |
//! | `cmd.wrench` | skills | commanded wrench (6) |
//! | `cmd.overlay` | skills | `[]`, `[0, radius, velocity]` or `[1, radius, velocity, pitch]` |
//! | `cmd.path_speed` | skills | attractor speed (m/s) |

use std::collections::BTreeMap;

use crate::behavior_tree::{
    ActionLeaf, Blackboard, BtError, NodeId, NodeKind, SkillExpander, Status, TreeBuilder, Value,
};
use crate::math::{Pose, Vec3};
use crate::space::{ParamSpace, ParamValue};
use crate::world_model::{learnable_name, SkillCall, SkillParameter, WorldModel};

pub use crate::control_sim::{MotionCommand, Overlay};

pub const TIME: &str = "time";
pub const EE_POSE: &str = "ee.pose";
pub const EE_REFERENCE: &str = "ee.reference";
pub const PEG_DEPTH: &str = "peg.depth";
pub const CMD_GOAL: &str = "cmd.goal";
pub const CMD_STIFFNESS: &str = "cmd.stiffness";
pub const CMD_WRENCH: &str = "cmd.wrench";
pub const CMD_OVERLAY: &str = "cmd.overlay";
pub const CMD_PATH_SPEED: &str = "cmd.path_speed";

/// Position tolerance of linear motions (m).
pub const GOAL_TOLERANCE: f64 = 0.005;

pub fn object_pose_key(id: &str) -> String {
    format!("object.{id}.pose")
}

pub fn set_pose(bb: &mut Blackboard, key: &str, pose: &Pose<f64>) {
    bb.set(key, Value::Vector(pose.to_array().to_vec()));
}

pub fn get_pose(bb: &Blackboard, key: &str) -> Option<Pose<f64>> {
    let v = bb.vector(key)?;
    let arr: [f64; 7] = v.try_into().ok()?;
    Some(Pose::from_array(arr))
}

pub fn encode_overlay(o: &Overlay) -> Vec<f64> {
    match *o {
        Overlay::None => Vec::new(),
        Overlay::Circular { radius, path_velocity } => vec![0.0, radius, path_velocity],
        Overlay::Spiral {
            radius,
            path_velocity,
            pitch,
        } => vec![1.0, radius, path_velocity, pitch],
    }
}

pub fn decode_overlay(v: &[f64]) -> Option<Overlay> {
    match v {
        [] => Some(Overlay::None),
        [k, radius, path_velocity] if *k == 0.0 => Some(Overlay::Circular {
            radius: *radius,
            path_velocity: *path_velocity,
        }),
        [k, radius, path_velocity, pitch] if *k == 1.0 => Some(Overlay::Spiral {
            radius: *radius,
            path_velocity: *path_velocity,
            pitch: *pitch,
        }),
        _ => None,
    }
}

pub fn write_command(bb: &mut Blackboard, cmd: &MotionCommand) {
    set_pose(bb, CMD_GOAL, &cmd.goal);
    bb.set(CMD_STIFFNESS, Value::Vector(cmd.stiffness.to_vec()));
    bb.set(CMD_WRENCH, Value::Vector(cmd.wrench.to_vec()));
    bb.set(CMD_OVERLAY, Value::Vector(encode_overlay(&cmd.overlay)));
    bb.set(CMD_PATH_SPEED, Value::Number(cmd.path_speed));
}

/// The command currently on the blackboard, if all its keys are present.
pub fn read_command(bb: &Blackboard) -> Option<MotionCommand> {
    Some(MotionCommand {
        goal: get_pose(bb, CMD_GOAL)?,
        stiffness: bb.vector(CMD_STIFFNESS)?.try_into().ok()?,
        wrench: bb.vector(CMD_WRENCH)?.try_into().ok()?,
        overlay: decode_overlay(bb.vector(CMD_OVERLAY)?)?,
        path_speed: bb.number(CMD_PATH_SPEED)?,
    })
}

/// A planned skill with every parameter resolved to a value.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillInstance {
    pub call: SkillCall,
    /// Object parameter name to bound object id.
    pub objects: BTreeMap<String, String>,
    pub values: BTreeMap<String, ParamValue>,
}

impl SkillInstance {
    fn err(&self, msg: String) -> BtError {
        BtError::Expansion {
            skill: self.call.skill.clone(),
            msg,
        }
    }

    pub fn number(&self, name: &str) -> Result<f64, BtError> {
        self.values
            .get(name)
            .and_then(ParamValue::as_f64)
            .ok_or_else(|| self.err(format!("parameter `{name}` has no numeric value")))
    }

    pub fn label(&self, name: &str) -> Option<&str> {
        match self.values.get(name) {
            Some(ParamValue::Label(s)) => Some(s),
            _ => None,
        }
    }

    /// Object bound to the object parameter `name`.
    pub fn object(&self, name: &str) -> Result<&str, BtError> {
        self.objects
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| self.err(format!("no object bound to `{name}`")))
    }
}

/// Resolves every plan step's parameters: registry schema defaults, then
/// scene template defaults, then the values of `config` for learnables.
pub fn instantiate(
    plan: &[SkillCall],
    model: &WorldModel,
    registry: &SkillRegistry,
    space: &ParamSpace,
    config: &[ParamValue],
) -> Result<Vec<SkillInstance>, BtError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for call in plan {
        *counts.entry(call.skill.as_str()).or_default() += 1;
    }
    let mut out = Vec::with_capacity(plan.len());
    for (step, call) in plan.iter().enumerate() {
        let template = model
            .skill(&call.skill)
            .ok_or_else(|| BtError::UnknownSkill(call.skill.clone()))?;
        let mut values = BTreeMap::new();
        if let Some(entry) = registry.entries.get(&call.skill) {
            for p in &entry.schema {
                if let Some(d) = &p.default {
                    values.insert(p.name.clone(), d.clone());
                }
            }
        }
        for p in template.parameters.iter().filter(|p| !p.is_object()) {
            if p.learnable {
                let name = learnable_name(&call.skill, step, counts[call.skill.as_str()] > 1, &p.name);
                let i = space.index_of(&name).ok_or_else(|| BtError::Expansion {
                    skill: call.skill.clone(),
                    msg: format!("learnable `{name}` missing from the search space"),
                })?;
                let v = config.get(i).ok_or_else(|| BtError::Expansion {
                    skill: call.skill.clone(),
                    msg: format!("configuration has no value for `{name}`"),
                })?;
                values.insert(p.name.clone(), v.clone());
            } else if let Some(d) = &p.default {
                values.insert(p.name.clone(), d.clone());
            }
        }
        let objects = template
            .object_parameters()
            .map(|p| p.name.clone())
            .zip(call.args.iter().cloned())
            .collect();
        out.push(SkillInstance {
            call: call.clone(),
            objects,
            values,
        });
    }
    Ok(out)
}

pub type ExpandFn = fn(&SkillInstance, &WorldModel, &mut TreeBuilder) -> Result<NodeId, BtError>;

struct Entry {
    schema: Vec<SkillParameter>,
    expand: ExpandFn,
}

/// Skill implementations keyed by template name.
pub struct SkillRegistry {
    entries: BTreeMap<String, Entry>,
}

impl Default for SkillRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl SkillRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// GoToLinear, Push and PegInsertion.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("GoToLinear", go_to_linear_schema(), expand_go_to_linear);
        r.register("Push", push_schema(), expand_push);
        r.register("PegInsertion", peg_schema(), expand_peg_insertion);
        r
    }

    pub fn register(&mut self, name: &str, schema: Vec<SkillParameter>, expand: ExpandFn) {
        self.entries.insert(name.to_string(), Entry { schema, expand });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn schema(&self, name: &str) -> Option<&[SkillParameter]> {
        self.entries.get(name).map(|e| e.schema.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Expander over the resolved instances of one plan.
    pub fn bind<'a>(&'a self, instances: &'a [SkillInstance]) -> BoundSkills<'a> {
        BoundSkills {
            registry: self,
            instances,
        }
    }
}

pub struct BoundSkills<'a> {
    registry: &'a SkillRegistry,
    instances: &'a [SkillInstance],
}

impl SkillExpander for BoundSkills<'_> {
    fn expand(
        &self,
        step: usize,
        call: &SkillCall,
        model: &WorldModel,
        builder: &mut TreeBuilder,
    ) -> Result<NodeId, BtError> {
        let entry = self
            .registry
            .entries
            .get(&call.skill)
            .ok_or_else(|| BtError::UnknownSkill(call.skill.clone()))?;
        let instance = self
            .instances
            .get(step)
            .filter(|i| i.call == *call)
            .ok_or_else(|| BtError::Expansion {
                skill: call.skill.clone(),
                msg: format!("no parameter binding for plan step {step}"),
            })?;
        (entry.expand)(instance, model, builder)
    }
}

fn stiffness(translational: f64, rotational: f64) -> [f64; 6] {
    [
        translational,
        translational,
        translational,
        rotational,
        rotational,
        rotational,
    ]
}

fn ee_pose(bb: &Blackboard) -> Option<Pose<f64>> {
    get_pose(bb, EE_POSE)
}

fn go_to_linear_schema() -> Vec<SkillParameter> {
    vec![
        SkillParameter::real("speed", 0.1),
        SkillParameter::real("stiffness", 1000.0),
        SkillParameter::real("rot_stiffness", 50.0),
        SkillParameter::real("tolerance", GOAL_TOLERANCE),
    ]
}

/// Moves the attractor along a straight line to a target object's pose and
/// succeeds once the end effector is within tolerance of it.
#[derive(Debug, Clone)]
pub struct GoToLinear {
    pub target: String,
    pub speed: f64,
    pub stiffness: [f64; 6],
    pub tolerance: f64,
}

impl ActionLeaf for GoToLinear {
    fn tick(&mut self, bb: &mut Blackboard) -> Status {
        let (Some(goal), Some(ee)) = (get_pose(bb, &object_pose_key(&self.target)), ee_pose(bb)) else {
            return Status::Failure;
        };
        write_command(
            bb,
            &MotionCommand {
                goal,
                stiffness: self.stiffness,
                wrench: [0.0; 6],
                overlay: Overlay::None,
                path_speed: self.speed,
            },
        );
        if (ee.position - goal.position).norm() <= self.tolerance {
            Status::Success
        } else {
            Status::Running
        }
    }
}

fn expand_go_to_linear(inst: &SkillInstance, _model: &WorldModel, b: &mut TreeBuilder) -> Result<NodeId, BtError> {
    let target = inst.object("target")?.to_string();
    let leaf = GoToLinear {
        speed: inst.number("speed")?,
        stiffness: stiffness(inst.number("stiffness")?, inst.number("rot_stiffness")?),
        tolerance: inst.number("tolerance")?,
        target: target.clone(),
    };
    let a = b.action(format!("go-to-linear {target}"), leaf);
    b.control(NodeKind::ParallelFirstSuccess, "processor", &[a])
}

fn push_schema() -> Vec<SkillParameter> {
    vec![
        SkillParameter::real("start_offset_x", 0.0),
        SkillParameter::real("start_offset_y", 0.0),
        SkillParameter::real("goal_offset_x", 0.0),
        SkillParameter::real("goal_offset_y", 0.0),
        SkillParameter::real("speed", 0.05),
        SkillParameter::real("stiffness", 1500.0),
        SkillParameter::real("rot_stiffness", 50.0),
        SkillParameter::real("position_tolerance", 0.01),
        SkillParameter::real("rotation_tolerance_deg", 5.0),
        SkillParameter::real("settle_time", 2.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PushPhase {
    Start,
    ToObject,
    ToGoal,
    Settling(f64),
}

/// Two-phase push: the attractor first moves to the object's geometric
/// centre plus a start offset, then in a straight line to the goal plus a
/// goal offset. Succeeds as soon as the object is within tolerance of the
/// goal; fails when the attractor has rested at the final target for
/// `settle_time` without success.
#[derive(Debug, Clone)]
pub struct Push {
    pub object: String,
    pub goal: String,
    pub start_offset: [f64; 2],
    pub goal_offset: [f64; 2],
    pub speed: f64,
    pub stiffness: [f64; 6],
    pub position_tolerance: f64,
    pub rotation_tolerance: f64,
    pub settle_time: f64,
    phase: PushPhase,
    target: Pose<f64>,
}

impl Push {
    pub fn new(object: &str, goal: &str, start_offset: [f64; 2], goal_offset: [f64; 2]) -> Self {
        Self {
            object: object.into(),
            goal: goal.into(),
            start_offset,
            goal_offset,
            speed: 0.05,
            stiffness: stiffness(1500.0, 50.0),
            position_tolerance: 0.01,
            rotation_tolerance: 5f64.to_radians(),
            settle_time: 2.0,
            phase: PushPhase::Start,
            target: Pose::default(),
        }
    }

    /// Attractor target of the current phase.
    pub fn target(&self) -> Pose<f64> {
        self.target
    }

    fn within_tolerance(&self, object: &Pose<f64>, goal: &Pose<f64>) -> bool {
        let d = (object.position.x - goal.position.x).hypot(object.position.y - goal.position.y);
        let r = crate::math::wrap_angle(object.orientation.yaw() - goal.orientation.yaw()).abs();
        d < self.position_tolerance && r < self.rotation_tolerance
    }

    fn command(&self, bb: &mut Blackboard) {
        write_command(
            bb,
            &MotionCommand {
                goal: self.target,
                stiffness: self.stiffness,
                wrench: [0.0; 6],
                overlay: Overlay::None,
                path_speed: self.speed,
            },
        );
    }
}

impl ActionLeaf for Push {
    fn tick(&mut self, bb: &mut Blackboard) -> Status {
        let (Some(object), Some(goal), Some(ee)) = (
            get_pose(bb, &object_pose_key(&self.object)),
            get_pose(bb, &object_pose_key(&self.goal)),
            ee_pose(bb),
        ) else {
            return Status::Failure;
        };
        if self.within_tolerance(&object, &goal) {
            return Status::Success;
        }
        let reference = get_pose(bb, EE_REFERENCE).unwrap_or(ee);
        let reached = (reference.position - self.target.position).norm() < 1e-9;
        match self.phase {
            PushPhase::Start => {
                let p = Vec3::new(
                    object.position.x + self.start_offset[0],
                    object.position.y + self.start_offset[1],
                    ee.position.z,
                );
                self.target = Pose::new(p, ee.orientation);
                self.phase = PushPhase::ToObject;
            }
            PushPhase::ToObject if reached => {
                let p = Vec3::new(
                    goal.position.x + self.goal_offset[0],
                    goal.position.y + self.goal_offset[1],
                    self.target.position.z,
                );
                self.target.position = p;
                self.phase = PushPhase::ToGoal;
            }
            PushPhase::ToGoal if reached => {
                self.phase = PushPhase::Settling(bb.number(TIME).unwrap_or(0.0));
            }
            PushPhase::Settling(since) if bb.number(TIME).unwrap_or(f64::INFINITY) - since >= self.settle_time => {
                return Status::Failure;
            }
            _ => {}
        }
        self.command(bb);
        Status::Running
    }

    fn halt(&mut self, _bb: &mut Blackboard) {
        self.phase = PushPhase::Start;
    }
}

fn expand_push(inst: &SkillInstance, _model: &WorldModel, b: &mut TreeBuilder) -> Result<NodeId, BtError> {
    let (object, goal) = (inst.object("object")?, inst.object("goal")?);
    let mut leaf = Push::new(
        object,
        goal,
        [inst.number("start_offset_x")?, inst.number("start_offset_y")?],
        [inst.number("goal_offset_x")?, inst.number("goal_offset_y")?],
    );
    leaf.speed = inst.number("speed")?;
    leaf.stiffness = stiffness(inst.number("stiffness")?, inst.number("rot_stiffness")?);
    leaf.position_tolerance = inst.number("position_tolerance")?;
    leaf.rotation_tolerance = inst.number("rotation_tolerance_deg")?.to_radians();
    leaf.settle_time = inst.number("settle_time")?;
    let a = b.action(format!("push {object} {goal}"), leaf);
    b.control(NodeKind::ParallelFirstSuccess, "processor", &[a])
}

fn peg_schema() -> Vec<SkillParameter> {
    vec![
        SkillParameter::real("force", 10.0),
        SkillParameter::real("radius", 0.0),
        SkillParameter::real("path_velocity", 0.01),
        SkillParameter::real("pitch", 0.0025),
        SkillParameter::real("stiffness", 1000.0),
        SkillParameter::real("rot_stiffness", 50.0),
        SkillParameter::real("speed", 0.05),
        SkillParameter::real("depth", 0.01),
        SkillParameter {
            name: "pattern".into(),
            ty: "categorical".into(),
            default: Some(ParamValue::Label("spiral".into())),
            learnable: false,
            bounds: None,
            values: Some(vec![
                ParamValue::Label("circular".into()),
                ParamValue::Label("spiral".into()),
            ]),
        },
    ]
}

/// Mutation applied by one peg-insertion primitive to the shared command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PegPrimitive {
    /// Drops the z stiffness to zero.
    ReleaseZ,
    /// Commands a downward force (N).
    PressDown(f64),
    /// Moves the attractor over the hole; running until it arrives.
    CentreOnHole,
    /// Starts the search overlay; runs until preempted.
    Search(Overlay),
}

/// One primitive of the peg insertion. Primitives modify the command left on
/// the blackboard by their predecessors.
#[derive(Debug, Clone)]
pub struct PegStep {
    pub primitive: PegPrimitive,
    pub box_id: String,
    pub stiffness: [f64; 6],
    pub speed: f64,
}

impl ActionLeaf for PegStep {
    fn tick(&mut self, bb: &mut Blackboard) -> Status {
        let Some(ee) = ee_pose(bb) else {
            return Status::Failure;
        };
        let mut cmd = read_command(bb).unwrap_or_else(|| {
            let mut c = MotionCommand::hold(get_pose(bb, EE_REFERENCE).unwrap_or(ee), self.stiffness);
            c.path_speed = self.speed;
            c
        });
        let status = match self.primitive {
            PegPrimitive::ReleaseZ => {
                cmd.stiffness = self.stiffness;
                cmd.stiffness[2] = 0.0;
                Status::Success
            }
            PegPrimitive::PressDown(f) => {
                cmd.wrench[2] = -f;
                Status::Success
            }
            PegPrimitive::CentreOnHole => {
                let Some(hole) = get_pose(bb, &object_pose_key(&self.box_id)) else {
                    return Status::Failure;
                };
                cmd.goal.position.x = hole.position.x;
                cmd.goal.position.y = hole.position.y;
                cmd.path_speed = self.speed;
                let reference = get_pose(bb, EE_REFERENCE).unwrap_or(ee);
                let dx = reference.position.x - hole.position.x;
                let dy = reference.position.y - hole.position.y;
                if dx.hypot(dy) < 1e-9 {
                    Status::Success
                } else {
                    Status::Running
                }
            }
            PegPrimitive::Search(o) => {
                cmd.overlay = o;
                Status::Running
            }
        };
        write_command(bb, &cmd);
        status
    }
}

/// Succeeds once the peg is inserted deeper than `depth`.
#[derive(Debug, Clone)]
pub struct DepthMonitor {
    pub depth: f64,
}

impl ActionLeaf for DepthMonitor {
    fn tick(&mut self, bb: &mut Blackboard) -> Status {
        if bb.number(PEG_DEPTH).unwrap_or(0.0) > self.depth {
            Status::Success
        } else {
            Status::Running
        }
    }
}

fn expand_peg_insertion(inst: &SkillInstance, _model: &WorldModel, b: &mut TreeBuilder) -> Result<NodeId, BtError> {
    let box_id = inst.object("box")?.to_string();
    let radius = inst.number("radius")?;
    let path_velocity = inst.number("path_velocity")?;
    let overlay = match inst.label("pattern").unwrap_or("spiral") {
        "circular" => Overlay::Circular { radius, path_velocity },
        "spiral" => Overlay::Spiral {
            radius,
            path_velocity,
            pitch: inst.number("pitch")?,
        },
        other => return Err(inst.err(format!("unknown search pattern `{other}`"))),
    };
    let step = |primitive| PegStep {
        primitive,
        box_id: box_id.clone(),
        stiffness: stiffness(
            inst.number("stiffness").unwrap_or(1000.0),
            inst.number("rot_stiffness").unwrap_or(50.0),
        ),
        speed: inst.number("speed").unwrap_or(0.05),
    };
    let force = inst.number("force")?;
    let primitives = [
        ("set-z-stiffness 0".to_string(), step(PegPrimitive::ReleaseZ)),
        (format!("apply-force {force:.3}"), step(PegPrimitive::PressDown(force))),
        (format!("go-to-hole {box_id}"), step(PegPrimitive::CentreOnHole)),
        (
            format!("search-overlay {radius:.4} {path_velocity:.4}"),
            step(PegPrimitive::Search(overlay)),
        ),
    ];
    let ids: Vec<NodeId> = primitives
        .into_iter()
        .map(|(label, leaf)| b.action(label, leaf))
        .collect();
    let seq = b.control(NodeKind::SequenceStar, "primitives", &ids)?;
    let monitor = b.action(
        "insertion-depth",
        DepthMonitor {
            depth: inst.number("depth")?,
        },
    );
    b.control(NodeKind::ParallelFirstSuccess, "processor", &[seq, monitor])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb_with(ee: Pose<f64>) -> Blackboard {
        let mut bb = Blackboard::new();
        set_pose(&mut bb, EE_POSE, &ee);
        set_pose(&mut bb, EE_REFERENCE, &ee);
        bb.set(TIME, Value::Number(0.0));
        bb
    }

    #[test]
    fn command_round_trips_through_blackboard() {
        let mut bb = Blackboard::new();
        let mut cmd = MotionCommand::hold(Pose::from_position(Vec3::new(0.1, 0.2, 0.3)), [100.0; 6]);
        cmd.wrench[2] = -5.0;
        for overlay in [
            Overlay::None,
            Overlay::Circular {
                radius: 0.01,
                path_velocity: 0.02,
            },
            Overlay::Spiral {
                radius: 0.01,
                path_velocity: 0.02,
                pitch: 0.003,
            },
        ] {
            cmd.overlay = overlay;
            write_command(&mut bb, &cmd);
            assert_eq!(read_command(&bb), Some(cmd));
        }
    }

    #[test]
    fn go_to_same_pose_succeeds_immediately() {
        let p = Pose::from_position(Vec3::new(0.4, 0.0, 0.2));
        let mut bb = bb_with(p);
        set_pose(&mut bb, &object_pose_key("target"), &p);
        let mut leaf = GoToLinear {
            target: "target".into(),
            speed: 0.1,
            stiffness: [500.0; 6],
            tolerance: GOAL_TOLERANCE,
        };
        assert_eq!(leaf.tick(&mut bb), Status::Success);
        assert_eq!(read_command(&bb).unwrap().goal, p);
    }

    #[test]
    fn push_start_offset_displaces_first_target() {
        let ee = Pose::from_position(Vec3::new(0.0, 0.3, 0.05));
        let mut bb = bb_with(ee);
        set_pose(
            &mut bb,
            &object_pose_key("obj"),
            &Pose::from_position(Vec3::new(0.5, 0.2, 0.0)),
        );
        set_pose(
            &mut bb,
            &object_pose_key("goal"),
            &Pose::from_position(Vec3::new(0.5, -0.2, 0.0)),
        );
        let mut leaf = Push::new("obj", "goal", [0.0, -0.1], [0.0, 0.0]);
        assert_eq!(leaf.tick(&mut bb), Status::Running);
        let t = leaf.target().position;
        assert!((t.x - 0.5).abs() < 1e-12 && (t.y - 0.1).abs() < 1e-12);
    }

    #[test]
    fn push_switches_to_goal_when_reference_arrives() {
        let ee = Pose::from_position(Vec3::new(0.5, 0.4, 0.05));
        let mut bb = bb_with(ee);
        set_pose(
            &mut bb,
            &object_pose_key("obj"),
            &Pose::from_position(Vec3::new(0.5, 0.2, 0.0)),
        );
        set_pose(
            &mut bb,
            &object_pose_key("goal"),
            &Pose::from_position(Vec3::new(0.5, -0.2, 0.0)),
        );
        let mut leaf = Push::new("obj", "goal", [0.0, 0.0], [0.02, 0.0]);
        leaf.tick(&mut bb);
        let first = leaf.target();
        set_pose(&mut bb, EE_REFERENCE, &first);
        leaf.tick(&mut bb);
        let t = leaf.target().position;
        assert!((t.x - 0.52).abs() < 1e-12 && (t.y + 0.2).abs() < 1e-12);
        assert_eq!(read_command(&bb).unwrap().goal.position, t);
    }

    #[test]
    fn push_succeeds_within_tolerance() {
        let ee = Pose::from_position(Vec3::new(0.5, 0.4, 0.05));
        let mut bb = bb_with(ee);
        set_pose(
            &mut bb,
            &object_pose_key("obj"),
            &Pose::from_position(Vec3::new(0.505, -0.2, 0.0)),
        );
        set_pose(
            &mut bb,
            &object_pose_key("goal"),
            &Pose::from_position(Vec3::new(0.5, -0.2, 0.0)),
        );
        let mut leaf = Push::new("obj", "goal", [0.0, 0.0], [0.0, 0.0]);
        assert_eq!(leaf.tick(&mut bb), Status::Success);
        set_pose(
            &mut bb,
            &object_pose_key("obj"),
            &Pose::new(
                Vec3::new(0.5, -0.2, 0.0),
                crate::math::Quat::from_yaw(6f64.to_radians()),
            ),
        );
        assert_eq!(leaf.tick(&mut bb), Status::Running);
    }

    #[test]
    fn peg_primitives_compose_the_command() {
        let ee = Pose::from_position(Vec3::new(0.5, 0.0, 0.15));
        let mut bb = bb_with(ee);
        set_pose(
            &mut bb,
            &object_pose_key("box"),
            &Pose::from_position(Vec3::new(0.52, 0.01, 0.1)),
        );
        let mk = |primitive| PegStep {
            primitive,
            box_id: "box".into(),
            stiffness: [800.0, 800.0, 800.0, 40.0, 40.0, 40.0],
            speed: 0.05,
        };
        assert_eq!(mk(PegPrimitive::ReleaseZ).tick(&mut bb), Status::Success);
        assert_eq!(mk(PegPrimitive::PressDown(12.0)).tick(&mut bb), Status::Success);
        assert_eq!(mk(PegPrimitive::CentreOnHole).tick(&mut bb), Status::Running);
        let o = Overlay::Circular {
            radius: 0.01,
            path_velocity: 0.02,
        };
        assert_eq!(mk(PegPrimitive::Search(o)).tick(&mut bb), Status::Running);
        let cmd = read_command(&bb).unwrap();
        assert_eq!(cmd.stiffness[2], 0.0);
        assert_eq!(cmd.stiffness[0], 800.0);
        assert_eq!(cmd.wrench[2], -12.0);
        assert_eq!((cmd.goal.position.x, cmd.goal.position.y), (0.52, 0.01));
        assert_eq!(cmd.overlay, o);
        assert!(cmd.is_valid());
    }
}
