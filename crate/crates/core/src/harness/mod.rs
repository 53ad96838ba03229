//! Scenario loading, planning, episode execution and the learning loop.
//!
//! A scenario file is a scene ([`WorldModel`]) with extra tables:
//!
//! ```toml
//! [environment]          # kind = "push" | "peg" | "free"
//! [episode]              # horizon, observed objects, hold stiffness
//! [randomization]        # sigma, worlds, targets, [[randomization.starts]]
//! [learning]             # iterations, repeats, seed, BO settings
//! [[objectives]]         # name, sense
//! [[rewards]]            # kind, objective, weight, params...
//! [sim]                  # simulator overrides
//! ```

mod episode;
mod learn;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::behavior_tree::{assemble_bt, BtError, Tree};
use crate::control_sim::{SimConfig, SimError};
use crate::math::Pose;
use crate::optimizer::{BoSettings, OptError, Sense};
use crate::pddl::{self, PddlDomain, PddlError, PddlProblem, Plan, PlanOutcome};
use crate::rewards::{RewardError, RewardSpec};
use crate::skills::{instantiate, SkillRegistry};
use crate::space::{ParamSpace, ParamValue, SpaceError};
use crate::world_model::{learnable_name, SkillCall, WmError, WorldModel};

pub use episode::{build_world, run_episode, EpisodeOutcome, World};
pub use learn::{
    evaluate_configuration, held_out_success, load_results, replay, run_learning, world_seeds, Evaluation, Record,
    Replay, RunResult, RunSummary,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("goal is unreachable from the initial state")]
    Unsolvable,
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    WorldModel(#[from] WmError),
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error(transparent)]
    Bt(#[from] BtError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Optimizer(#[from] OptError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("results file {path}: {msg}")]
    Results { path: String, msg: String },
    #[error("unknown trial {0}")]
    UnknownTrial(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 2 for an unsolvable goal, 3 for configuration
    /// problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Unsolvable => 2,
            HarnessError::Config(_)
            | HarnessError::WorldModel(_)
            | HarnessError::Pddl(_)
            | HarnessError::Reward(_)
            | HarnessError::Space(_)
            | HarnessError::Results { .. } => 3,
            _ => 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvironmentSpec {
    /// No contact; only the end effector moves.
    #[default]
    Free,
    /// Planar pushing of `object` to `goal`. The object needs `size-x`,
    /// `size-y` and `mass` properties and may have `com-offset-x/y`.
    Push {
        object: String,
        goal: String,
        #[serde(default = "default_pusher_side")]
        pusher_side: f64,
        #[serde(default = "default_shape")]
        shape: String,
        /// Friction coefficient between pusher and object.
        #[serde(default)]
        pusher_friction: f64,
    },
    /// Peg insertion of `peg` (property `radius`) into `box` (properties
    /// `hole-radius`, `hole-depth` and `size-z`).
    Peg {
        peg: String,
        #[serde(rename = "box")]
        box_id: String,
    },
}

fn default_pusher_side() -> f64 {
    0.07
}

fn default_shape() -> String {
    "right-triangle".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeSpec {
    /// Episode length (s).
    pub horizon: f64,
    /// Objects whose true pose the robot sees; all others are known only
    /// by their nominal scene pose.
    pub observed: Vec<String>,
    /// Stiffness before the first skill command: translational, rotational.
    pub hold_stiffness: [f64; 2],
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self {
            horizon: 30.0,
            observed: Vec::new(),
            hold_stiffness: [1000.0, 50.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationConfig {
    /// Standard deviation of the planar pose noise (m).
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Worlds per evaluation.
    #[serde(default = "default_worlds")]
    pub worlds: usize,
    /// Objects whose poses are perturbed.
    #[serde(default)]
    pub targets: Vec<String>,
    /// End-effector start poses `[x, y, z, qx, qy, qz, qw]`.
    pub starts: Vec<[f64; 7]>,
}

fn default_sigma() -> f64 {
    0.007
}

fn default_worlds() -> usize {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningSpec {
    pub iterations: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Worker threads for world evaluation; 0 uses all cores.
    pub jobs: usize,
    #[serde(flatten)]
    pub bo: BoSettings,
}

impl Default for LearningSpec {
    fn default() -> Self {
        Self {
            iterations: 400,
            repeats: 1,
            seed: 0,
            jobs: 0,
            bo: BoSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub name: String,
    #[serde(default = "default_sense")]
    pub sense: Sense,
}

fn default_sense() -> Sense {
    Sense::Max
}

#[derive(Debug, Deserialize)]
struct Sections {
    #[serde(default)]
    environment: EnvironmentSpec,
    #[serde(default)]
    episode: EpisodeSpec,
    randomization: RandomizationConfig,
    #[serde(default)]
    learning: LearningSpec,
    objectives: Vec<ObjectiveSpec>,
    #[serde(default)]
    rewards: Vec<RewardSpec>,
    #[serde(default)]
    sim: SimConfig,
}

/// Everything needed to plan, execute and learn one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Scene file the scenario was read from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub model: WorldModel,
    pub environment: EnvironmentSpec,
    pub episode: EpisodeSpec,
    pub randomization: RandomizationConfig,
    pub learning: LearningSpec,
    pub objectives: Vec<ObjectiveSpec>,
    pub rewards: Vec<RewardSpec>,
    pub sim: SimConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let model = WorldModel::from_toml_str(text)?;
        let s: Sections = toml::from_str(text).map_err(|e| config_err(e.message().to_string()))?;
        let cfg = Self {
            path: None,
            model,
            environment: s.environment,
            episode: s.episode,
            randomization: s.randomization,
            learning: s.learning,
            objectives: s.objectives,
            rewards: s.rewards,
            sim: s.sim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.path = Some(path.to_path_buf());
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.randomization.worlds == 0 {
            return Err(config_err("randomization.worlds must be at least 1"));
        }
        if !(self.randomization.sigma >= 0.0 && self.randomization.sigma.is_finite()) {
            return Err(config_err("randomization.sigma must be finite and non-negative"));
        }
        if self.randomization.starts.is_empty() {
            return Err(config_err("randomization.starts must not be empty"));
        }
        for s in &self.randomization.starts {
            let p = Pose::from_array(*s);
            if !p.is_finite() || (p.orientation.norm() - 1.0).abs() > 1e-9 {
                return Err(config_err(format!("start pose {s:?} is not a valid pose")));
            }
        }
        for id in self.randomization.targets.iter().chain(&self.episode.observed) {
            self.model.require(id)?;
        }
        if !(self.episode.horizon > 0.0 && self.episode.horizon.is_finite()) {
            return Err(config_err("episode.horizon must be positive"));
        }
        if self.learning.iterations < self.learning.bo.warmup && self.learning.iterations > 0 {
            return Err(config_err(format!(
                "learning.iterations ({}) is smaller than the warm-up ({})",
                self.learning.iterations, self.learning.bo.warmup
            )));
        }
        if self.objectives.is_empty() {
            return Err(config_err("at least one objective is required"));
        }
        for (i, o) in self.objectives.iter().enumerate() {
            if self.objectives[..i].iter().any(|p| p.name == o.name) {
                return Err(config_err(format!("objective `{}` declared twice", o.name)));
            }
        }
        let names = self.objective_names();
        for r in &self.rewards {
            r.validate()?;
            if !names.contains(&r.objective) {
                return Err(RewardError::UnknownObjective(r.objective.clone()).into());
            }
            for id in r.target.iter().chain(&r.goal) {
                self.model.require(id)?;
            }
        }
        self.sim.validate()?;
        self.check_environment()
    }

    fn check_environment(&self) -> Result<(), HarnessError> {
        let need = |id: &str, keys: &[&str]| -> Result<(), HarnessError> {
            let o = self.model.require(id)?;
            for k in keys {
                if o.property(k).is_none() {
                    return Err(config_err(format!("object `{id}` needs property `{k}`")));
                }
            }
            Ok(())
        };
        match &self.environment {
            EnvironmentSpec::Free => Ok(()),
            EnvironmentSpec::Push {
                object,
                goal,
                pusher_side,
                shape,
                pusher_friction,
            } => {
                need(object, &["size-x", "size-y", "mass"])?;
                if !(*pusher_friction >= 0.0) {
                    return Err(config_err("environment.pusher_friction must be non-negative"));
                }
                self.model.require(goal)?;
                if !(*pusher_side > 0.0) {
                    return Err(config_err("environment.pusher_side must be positive"));
                }
                if shape != "right-triangle" && shape != "box" {
                    return Err(config_err(format!("unknown push shape `{shape}`")));
                }
                Ok(())
            }
            EnvironmentSpec::Peg { peg, box_id } => {
                need(peg, &["radius"])?;
                need(box_id, &["hole-radius", "hole-depth", "size-z"])?;
                let (r, h) = (
                    self.model.require(peg)?.property("radius").unwrap_or_default(),
                    self.model.require(box_id)?.property("hole-radius").unwrap_or_default(),
                );
                if r >= h {
                    return Err(config_err("peg radius must be smaller than the hole radius"));
                }
                Ok(())
            }
        }
    }

    pub fn objective_names(&self) -> Vec<String> {
        self.objectives.iter().map(|o| o.name.clone()).collect()
    }

    pub fn senses(&self) -> Vec<Sense> {
        self.objectives.iter().map(|o| o.sense).collect()
    }

    pub fn starts(&self) -> Vec<Pose<f64>> {
        self.randomization.starts.iter().map(|s| Pose::from_array(*s)).collect()
    }

    /// SHA-256 over the canonical JSON form, leaving out the run length
    /// (iterations, repeats) and the worker count so that a run can be
    /// extended or resumed with a different thread count.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.path = None;
        c.learning.iterations = 0;
        c.learning.repeats = 0;
        c.learning.jobs = 0;
        digest(&c)
    }

    /// Like [`hash`](Self::hash) but blind to the whole learning section:
    /// everything an episode depends on.
    pub fn episode_hash(&self) -> String {
        let mut c = self.clone();
        c.path = None;
        c.learning = LearningSpec::default();
        digest(&c)
    }
}

fn digest(c: &ScenarioConfig) -> String {
    let json = serde_json::to_string(c).expect("scenario serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Planning products of a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub domain: PddlDomain,
    pub problem: PddlProblem,
    pub plan: Plan,
    pub calls: Vec<SkillCall>,
    pub space: ParamSpace,
}

/// Generates PDDL, plans, and collects the learnable parameters.
pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared, HarnessError> {
    let domain = pddl::generate_domain(&cfg.model)?;
    let problem = pddl::generate_problem(&cfg.model, &domain)?;
    let plan = match pddl::plan(&domain, &problem)? {
        PlanOutcome::Solved(p) => p,
        PlanOutcome::Unsolvable => return Err(HarnessError::Unsolvable),
    };
    let calls = pddl::plan_to_skill_calls(&plan, &cfg.model)?;
    let space = cfg.model.collect_learnables(&calls)?;
    space.validate()?;
    Ok(Prepared {
        domain,
        problem,
        plan,
        calls,
        space,
    })
}

#[derive(Serialize)]
struct PlanFile<'a> {
    scenario: &'a str,
    steps: &'a [SkillCall],
    learnables: &'a [crate::space::ParamDef],
}

impl Prepared {
    /// The plan and its learnable parameters as TOML.
    pub fn plan_toml(&self, scenario: &str) -> String {
        let file = PlanFile {
            scenario,
            steps: &self.calls,
            learnables: &self.space.params,
        };
        toml::to_string(&file).expect("plan serializes")
    }
}

/// Configuration of template defaults; learnables without a default take
/// the lower bound (or first value).
pub fn default_configuration(cfg: &ScenarioConfig, prepared: &Prepared) -> Vec<ParamValue> {
    let mut out = prepared.space.decode(&vec![0.0; prepared.space.encoded_dim()]);
    let mut counts = std::collections::BTreeMap::new();
    for call in &prepared.calls {
        *counts.entry(call.skill.as_str()).or_insert(0usize) += 1;
    }
    for (step, call) in prepared.calls.iter().enumerate() {
        let Some(template) = cfg.model.skill(&call.skill) else {
            continue;
        };
        for p in template.parameters.iter().filter(|p| p.learnable) {
            let name = learnable_name(&call.skill, step, counts[call.skill.as_str()] > 1, &p.name);
            if let (Some(i), Some(d)) = (prepared.space.index_of(&name), &p.default) {
                out[i] = d.clone();
            }
        }
    }
    out
}

/// The behavior tree executing `config`.
pub fn build_tree(
    cfg: &ScenarioConfig,
    prepared: &Prepared,
    registry: &SkillRegistry,
    config: &[ParamValue],
) -> Result<Tree, HarnessError> {
    prepared.space.check(config)?;
    let instances = instantiate(&prepared.calls, &cfg.model, registry, &prepared.space, config)?;
    Ok(assemble_bt(&prepared.calls, &cfg.model, &registry.bind(&instances))?)
}

/// Per-world seed: splitmix64 of the parent seed and an index, so that a
/// world's seed depends only on its position and never on evaluation order.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    let mut z = parent
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)))
        .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
