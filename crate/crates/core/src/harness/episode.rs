//! One episode: a behavior tree driving the simulator in a randomized world.

use std::collections::BTreeMap;

use super::{build_tree, EnvironmentSpec, HarnessError, Prepared, ScenarioConfig};
use crate::behavior_tree::{load_facts, Blackboard, Status, Value};
use crate::control_sim::push::PushObject;
use crate::control_sim::{
    Action, Environment, EpisodeTrace, MotionCommand, PegEnv, PegGeometry, Polygon, PushEnv, RandomizationSpec,
    Simulator, StepRecord, WorldSample,
};
use crate::math::{Pose, Vec3};
use crate::rewards::{accumulate, ObjectiveVector};
use crate::skills::{self, object_pose_key, read_command, set_pose, write_command, SkillRegistry};
use crate::space::ParamValue;

/// A sampled world with the true poses of every scene object.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub sample: WorldSample,
    pub start: Pose<f64>,
    pub actual: BTreeMap<String, Pose<f64>>,
}

pub fn build_world(cfg: &ScenarioConfig, seed: u64) -> World {
    let spec = RandomizationSpec {
        sigma: cfg.randomization.sigma,
        starts: cfg.starts(),
        targets: cfg.randomization.targets.clone(),
    };
    let sample = spec.sample(seed);
    let actual = cfg
        .model
        .objects
        .iter()
        .map(|o| (o.id.clone(), sample.perturb(&o.id, &o.pose)))
        .collect();
    World {
        start: spec.starts[sample.start],
        sample,
        actual,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub trace: EpisodeTrace,
    pub objectives: ObjectiveVector,
}

impl EpisodeOutcome {
    pub fn succeeded(&self) -> bool {
        self.trace.succeeded()
    }
}

fn environment(cfg: &ScenarioConfig, world: &World) -> Result<(Environment, Option<String>), HarnessError> {
    let prop = |id: &str, key: &str| -> Result<f64, HarnessError> {
        cfg.model
            .require(id)?
            .property(key)
            .ok_or_else(|| HarnessError::Config(format!("object `{id}` needs property `{key}`")))
    };
    Ok(match &cfg.environment {
        EnvironmentSpec::Free => (Environment::Free, None),
        EnvironmentSpec::Push {
            object,
            goal,
            pusher_side,
            shape,
            pusher_friction,
        } => {
            let (a, b) = (prop(object, "size-x")?, prop(object, "size-y")?);
            let outline = match shape.as_str() {
                "box" => Polygon {
                    vertices: vec![[0.0, 0.0], [a, 0.0], [a, b], [0.0, b]],
                },
                _ => PushObject::right_triangle(a, b),
            };
            let o = cfg.model.require(object)?;
            let com = [
                o.property("com-offset-x").unwrap_or(0.0),
                o.property("com-offset-y").unwrap_or(0.0),
            ];
            let p = world.actual[object.as_str()];
            let g = world.actual[goal.as_str()];
            let body = PushObject::new(
                outline,
                com,
                prop(object, "mass")?,
                p.position.x,
                p.position.y,
                p.orientation.yaw(),
            );
            let env = PushEnv::new(
                body,
                *pusher_side,
                [g.position.x, g.position.y, g.orientation.yaw()],
                cfg.sim.contact,
            )
            .with_pusher_friction(*pusher_friction);
            (Environment::Push(env), Some(object.clone()))
        }
        EnvironmentSpec::Peg { peg, box_id } => {
            let geometry = PegGeometry {
                peg_radius: prop(peg, "radius")?,
                hole_radius: prop(box_id, "hole-radius")?,
                hole_depth: prop(box_id, "hole-depth")?,
            };
            let b = world.actual[box_id.as_str()];
            let top = b.position + Vec3::new(0.0, 0.0, 0.5 * prop(box_id, "size-z")?);
            (Environment::Peg(PegEnv::new(geometry, top, cfg.sim.contact)), None)
        }
    })
}

fn half_extents(cfg: &ScenarioConfig) -> BTreeMap<String, [f64; 3]> {
    cfg.model
        .objects
        .iter()
        .filter_map(|o| {
            let s = [o.property("size-x")?, o.property("size-y")?, o.property("size-z")?];
            Some((o.id.clone(), s.map(|v| 0.5 * v)))
        })
        .collect()
}

/// Runs the policy of `config` in `world` for the episode horizon.
///
/// The tree is ticked once per action period until it returns success or
/// failure; afterwards the attractor holds still and the episode runs on,
/// so every episode has the same number of rows. A simulation fault ends
/// the episode early with the rows recorded so far.
pub fn run_episode(
    cfg: &ScenarioConfig,
    prepared: &Prepared,
    registry: &SkillRegistry,
    config: &[ParamValue],
    world: &World,
) -> Result<EpisodeOutcome, HarnessError> {
    let mut tree = build_tree(cfg, prepared, registry, config)?;
    let (env, pushed) = environment(cfg, world)?;
    let [kt, kr] = cfg.episode.hold_stiffness;
    let hold = [kt, kt, kt, kr, kr, kr];
    let mut sim = Simulator::new(cfg.sim.clone(), world.start, env)?.with_stiffness(hold);
    sim.static_objects = world
        .actual
        .iter()
        .filter(|(id, _)| Some(*id) != pushed.as_ref())
        .map(|(id, p)| (id.clone(), *p))
        .collect();
    sim.pushed_object = pushed.clone();

    let object_ids: Vec<String> = cfg.model.objects.iter().map(|o| o.id.clone()).collect();
    let mut bb = Blackboard::new();
    load_facts(&cfg.model, &mut bb);
    for o in &cfg.model.objects {
        set_pose(&mut bb, &object_pose_key(&o.id), &o.pose);
    }
    write_command(&mut bb, &MotionCommand::hold(world.start, hold));

    let period = sim.config.action_period();
    let rows = (cfg.episode.horizon / period).round().max(1.0) as usize;
    let mut steps = Vec::with_capacity(rows);
    let mut status = Status::Running;
    let mut aborted = None;
    let mut held: Option<MotionCommand> = None;

    'episode: for _ in 0..rows {
        let ee = sim.ee_pose();
        let current = sim.objects();
        bb.set(skills::TIME, Value::Number(sim.time));
        set_pose(&mut bb, skills::EE_POSE, &ee);
        set_pose(&mut bb, skills::EE_REFERENCE, &sim.motion.reference());
        bb.set(skills::PEG_DEPTH, Value::Number(sim.insertion_depth()));
        for id in &cfg.episode.observed {
            if let Some((_, p)) = current.iter().find(|(o, _)| o == id) {
                set_pose(&mut bb, &object_pose_key(id), p);
            }
        }

        let cmd = match held {
            Some(c) => c,
            None => {
                status = tree.tick(&mut bb);
                let cmd = read_command(&bb).unwrap_or_else(|| MotionCommand::hold(sim.motion.reference(), hold));
                if status == Status::Running {
                    cmd
                } else {
                    let mut c = cmd;
                    c.goal = sim.motion.base;
                    c.overlay = crate::control_sim::Overlay::None;
                    held = Some(c);
                    c
                }
            }
        };
        if !cmd.is_valid() {
            aborted = Some(format!("invalid motion command at t = {:.3} s", sim.time));
            break;
        }

        let reference = sim.motion.step(&cmd, period);
        let action = Action {
            reference,
            stiffness: cmd.stiffness,
            wrench: cmd.wrench,
        };
        let mut contact = Vec3::zeros();
        for _ in 0..sim.config.substeps {
            if let Err(e) = sim.step(&action) {
                aborted = Some(e.to_string());
                break 'episode;
            }
            contact += sim.contact_force();
        }
        let contact = contact.scale(1.0 / sim.config.substeps as f64);
        let now = sim.objects();
        steps.push(StepRecord {
            t: sim.time,
            ee: sim.ee_pose(),
            reference,
            contact,
            objects: object_ids
                .iter()
                .map(|id| {
                    now.iter()
                        .find(|(o, _)| o == id)
                        .map(|(_, p)| *p)
                        .unwrap_or_else(|| world.actual[id.as_str()])
                })
                .collect(),
        });
    }
    if aborted.is_some() {
        status = Status::Failure;
    }
    let trace = EpisodeTrace {
        object_ids,
        extents: half_extents(cfg),
        period,
        steps,
        result: status,
        aborted,
    };
    let objectives = accumulate(&trace, &cfg.rewards, &cfg.objective_names())?;
    Ok(EpisodeOutcome { trace, objectives })
}
