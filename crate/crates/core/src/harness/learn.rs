//! The learning loop and its append-only results file.
//!
//! Results are JSON lines: one `header`, then `trial` records as they are
//! evaluated and a `pareto` record when a repeat completes. A run is resumed
//! by reading the file back, dropping a torn last line, and continuing every
//! repeat at its recorded trial count.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_world, derive_seed, prepare, run_episode, EpisodeOutcome, HarnessError, ObjectiveSpec, Prepared,
    ScenarioConfig,
};
use crate::optimizer::{pareto_front, suggest, GpHyper, Trial};
use crate::rewards::ObjectiveVector;
use crate::skills::SkillRegistry;
use crate::space::ParamValue;

const FORMAT_VERSION: u32 = 1;
/// Separates the optimizer's random stream from the world seeds.
const SUGGEST_STREAM: u64 = 0x5EED_0FB0;

/// Mean objectives of one configuration over a set of worlds.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objectives: Vec<f64>,
    pub worlds: Vec<Vec<f64>>,
    pub successes: Vec<bool>,
    /// Every world aborted.
    pub aborted: bool,
}

impl Evaluation {
    pub fn success_rate(&self) -> f64 {
        if self.successes.is_empty() {
            return 0.0;
        }
        self.successes.iter().filter(|s| **s).count() as f64 / self.successes.len() as f64
    }
}

fn evaluate_seeds(
    cfg: &ScenarioConfig,
    prepared: &Prepared,
    registry: &SkillRegistry,
    config: &[ParamValue],
    seeds: &[u64],
) -> Result<Evaluation, HarnessError> {
    let outcomes: Vec<EpisodeOutcome> = seeds
        .par_iter()
        .map(|s| run_episode(cfg, prepared, registry, config, &build_world(cfg, *s)))
        .collect::<Result<_, _>>()?;
    let vectors: Vec<ObjectiveVector> = outcomes.iter().map(|o| o.objectives.clone()).collect();
    let mean = ObjectiveVector::mean(&vectors).map(|m| m.values).unwrap_or_default();
    Ok(Evaluation {
        objectives: mean,
        worlds: vectors.into_iter().map(|v| v.values).collect(),
        successes: outcomes.iter().map(EpisodeOutcome::succeeded).collect(),
        aborted: !outcomes.is_empty() && outcomes.iter().all(|o| o.trace.aborted.is_some()),
    })
}

/// World seeds of an evaluation seeded with `seed`.
pub fn world_seeds(cfg: &ScenarioConfig, seed: u64) -> Vec<u64> {
    (0..cfg.randomization.worlds as u64)
        .map(|w| derive_seed(seed, w))
        .collect()
}

/// Runs `config` in the evaluation's randomized worlds (concurrently on the
/// current rayon pool) and averages the objective vectors by world index.
pub fn evaluate_configuration(
    cfg: &ScenarioConfig,
    prepared: &Prepared,
    registry: &SkillRegistry,
    config: &[ParamValue],
    seed: u64,
) -> Result<Evaluation, HarnessError> {
    evaluate_seeds(cfg, prepared, registry, config, &world_seeds(cfg, seed))
}

/// Fraction of successful episodes over explicitly given world seeds.
pub fn held_out_success(
    cfg: &ScenarioConfig,
    prepared: &Prepared,
    registry: &SkillRegistry,
    config: &[ParamValue],
    seeds: &[u64],
) -> Result<f64, HarnessError> {
    Ok(evaluate_seeds(cfg, prepared, registry, config, seeds)?.success_rate())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum Record {
    Header {
        version: u32,
        scenario: String,
        /// Scenario file the run was started from.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source: Option<String>,
        config_hash: String,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        episode_hash: String,
        /// Unix time (s) the file was created.
        created: u64,
        parameters: Vec<String>,
        objectives: Vec<ObjectiveSpec>,
    },
    Trial {
        repeat: usize,
        trial: Trial,
        successes: Vec<bool>,
    },
    Pareto {
        repeat: usize,
        trials: Vec<usize>,
        /// Wall-clock seconds spent on the repeat in this session.
        elapsed: f64,
    },
}

/// A results file read back.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunResult {
    pub scenario: String,
    pub source: Option<String>,
    pub config_hash: String,
    /// Empty in files that predate it.
    pub episode_hash: String,
    pub created: u64,
    pub parameters: Vec<String>,
    pub objectives: Vec<ObjectiveSpec>,
    /// `(repeat, trial, per-world success)` in file order.
    pub trials: Vec<(usize, Trial, Vec<bool>)>,
    /// Latest stored front of each repeat, as trial ids.
    pub fronts: BTreeMap<usize, Vec<usize>>,
}

impl RunResult {
    pub fn trial(&self, id: usize) -> Option<&Trial> {
        self.trials.iter().map(|(_, t, _)| t).find(|t| t.id == id)
    }

    pub fn repeat_trials(&self, repeat: usize) -> impl Iterator<Item = &Trial> {
        self.trials
            .iter()
            .filter(move |(r, _, _)| *r == repeat)
            .map(|(_, t, _)| t)
    }

    pub fn success_rate(&self, id: usize) -> Option<f64> {
        let (_, _, s) = self.trials.iter().find(|(_, t, _)| t.id == id)?;
        Some(s.iter().filter(|x| **x).count() as f64 / s.len().max(1) as f64)
    }

    /// Trials of the stored fronts, by repeat.
    pub fn front_trials(&self) -> Vec<(usize, Vec<&Trial>)> {
        self.fronts
            .iter()
            .map(|(r, ids)| (*r, ids.iter().filter_map(|i| self.trial(*i)).collect()))
            .collect()
    }

    fn next_id(&self) -> usize {
        self.trials.iter().map(|(_, t, _)| t.id + 1).max().unwrap_or(0)
    }
}

fn results_err(path: &Path, msg: impl Into<String>) -> HarnessError {
    HarnessError::Results {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Reads a results file. A final line that does not parse (an interrupted
/// write) is ignored; `valid_len` reports the byte length of the intact
/// prefix.
fn read_results(path: &Path) -> Result<(RunResult, u64), HarnessError> {
    let file = File::open(path).map_err(|e| results_err(path, e.to_string()))?;
    let mut reader = BufReader::new(file);
    let mut result = RunResult::default();
    let mut valid = 0u64;
    let mut line = String::new();
    let mut seen_header = false;
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        let record: Record = match serde_json::from_str(line.trim_end()) {
            Ok(r) if complete => r,
            Ok(_) | Err(_) => {
                let mut rest = String::new();
                if reader.read_line(&mut rest)? == 0 {
                    break;
                }
                return Err(results_err(path, format!("line {lineno} is not a valid record")));
            }
        };
        valid += n as u64;
        match record {
            Record::Header {
                version,
                scenario,
                source,
                config_hash,
                episode_hash,
                created,
                parameters,
                objectives,
            } => {
                if seen_header {
                    return Err(results_err(path, "more than one header"));
                }
                if version != FORMAT_VERSION {
                    return Err(results_err(path, format!("unsupported format version {version}")));
                }
                seen_header = true;
                result.scenario = scenario;
                result.source = source;
                result.config_hash = config_hash;
                result.episode_hash = episode_hash;
                result.created = created;
                result.parameters = parameters;
                result.objectives = objectives;
            }
            _ if !seen_header => return Err(results_err(path, "missing header")),
            Record::Trial {
                repeat,
                trial,
                successes,
            } => result.trials.push((repeat, trial, successes)),
            Record::Pareto { repeat, trials, .. } => {
                result.fronts.insert(repeat, trials);
            }
        }
    }
    if !seen_header {
        return Err(results_err(path, "missing header"));
    }
    Ok((result, valid))
}

pub fn load_results(path: impl AsRef<Path>) -> Result<RunResult, HarnessError> {
    Ok(read_results(path.as_ref())?.0)
}

fn append(file: &mut File, record: &Record) -> Result<(), HarnessError> {
    let mut line = serde_json::to_string(record).map_err(|e| HarnessError::Config(e.to_string()))?;
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.flush()?;
    Ok(())
}

/// Progress of a learning run, reported after every trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub repeat: usize,
    pub iteration: usize,
    pub trial: usize,
    pub success_rate: f64,
}

/// Runs (or resumes) `cfg.learning.repeats` independent optimizations of
/// `cfg.learning.iterations` trials each, appending to `results`.
///
/// Every random decision derives from the master seed, the repeat and the
/// iteration, so a resumed run produces the same records as an
/// uninterrupted one.
pub fn run_learning(
    cfg: &ScenarioConfig,
    registry: &SkillRegistry,
    results: impl AsRef<Path>,
    progress: &mut dyn FnMut(&RunSummary),
) -> Result<RunResult, HarnessError> {
    let path = results.as_ref();
    let prepared = prepare(cfg)?;
    let hash = cfg.hash();
    let mut run = if path.exists() && std::fs::metadata(path)?.len() > 0 {
        let (run, valid) = read_results(path)?;
        if run.config_hash != hash {
            return Err(results_err(path, "was written for a different scenario configuration"));
        }
        OpenOptions::new().write(true).open(path)?.set_len(valid)?;
        run
    } else {
        RunResult::default()
    };
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if run.config_hash.is_empty() {
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let header = Record::Header {
            version: FORMAT_VERSION,
            scenario: cfg.model.name.clone(),
            source: cfg.path.as_ref().map(|p| p.display().to_string()),
            config_hash: hash.clone(),
            episode_hash: cfg.episode_hash(),
            created,
            parameters: prepared.space.params.iter().map(|p| p.name.clone()).collect(),
            objectives: cfg.objectives.clone(),
        };
        append(&mut file, &header)?;
        if let Record::Header {
            scenario,
            source,
            config_hash,
            episode_hash,
            created,
            parameters,
            objectives,
            ..
        } = header
        {
            run.scenario = scenario;
            run.source = source;
            run.config_hash = config_hash;
            run.episode_hash = episode_hash;
            run.created = created;
            run.parameters = parameters;
            run.objectives = objectives;
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.learning.jobs)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let senses = cfg.senses();
    let iterations = cfg.learning.iterations;
    for repeat in 0..cfg.learning.repeats {
        let done = run.repeat_trials(repeat).count();
        if done >= iterations && (iterations == 0 || run.fronts.contains_key(&repeat)) {
            continue;
        }
        let started = Instant::now();
        let repeat_seed = derive_seed(cfg.learning.seed, repeat as u64);
        for iteration in done..iterations {
            let mine: Vec<&Trial> = run.repeat_trials(repeat).collect();
            let history: Vec<(&[ParamValue], &[f64])> = mine
                .iter()
                .map(|t| (t.config.as_slice(), t.objectives.as_slice()))
                .collect();
            let warm: Option<GpHyper<f64>> = mine.iter().rev().find_map(|t| t.hyper.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(repeat_seed ^ SUGGEST_STREAM, iteration as u64));
            let suggestion = suggest(
                &prepared.space,
                &senses,
                &history,
                &cfg.learning.bo,
                warm.as_ref(),
                &mut rng,
            )?;
            let seed = derive_seed(repeat_seed, iteration as u64);
            let eval = pool.install(|| evaluate_configuration(cfg, &prepared, registry, &suggestion.config, seed))?;
            let trial = Trial {
                id: run.next_id(),
                iteration,
                config: suggestion.config,
                objectives: eval.objectives.clone(),
                worlds: eval.worlds.clone(),
                seed,
                aborted: eval.aborted,
                hyper: suggestion.hyper,
            };
            append(
                &mut file,
                &Record::Trial {
                    repeat,
                    trial: trial.clone(),
                    successes: eval.successes.clone(),
                },
            )?;
            progress(&RunSummary {
                repeat,
                iteration,
                trial: trial.id,
                success_rate: eval.success_rate(),
            });
            run.trials.push((repeat, trial, eval.successes));
        }
        let mine: Vec<&Trial> = run.repeat_trials(repeat).collect();
        let points: Vec<Vec<f64>> = mine.iter().map(|t| t.objectives.clone()).collect();
        let front: Vec<usize> = pareto_front(&points, &senses).into_iter().map(|i| mine[i].id).collect();
        append(
            &mut file,
            &Record::Pareto {
                repeat,
                trials: front.clone(),
                elapsed: started.elapsed().as_secs_f64(),
            },
        )?;
        run.fronts.insert(repeat, front);
    }
    Ok(run)
}

/// One replayed episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub seed: u64,
    pub outcome: EpisodeOutcome,
}

/// Re-executes a stored trial, on its own world seeds unless `seeds` is
/// given.
pub fn replay(
    cfg: &ScenarioConfig,
    registry: &SkillRegistry,
    run: &RunResult,
    trial: usize,
    seeds: Option<&[u64]>,
) -> Result<Vec<Replay>, HarnessError> {
    let t = run.trial(trial).ok_or(HarnessError::UnknownTrial(trial))?;
    let matches = if run.episode_hash.is_empty() {
        run.config_hash == cfg.hash()
    } else {
        run.episode_hash == cfg.episode_hash()
    };
    if !matches {
        return Err(HarnessError::Config(
            "results were written for a different scenario configuration".into(),
        ));
    }
    let prepared = prepare(cfg)?;
    let seeds = match seeds {
        Some(s) => s.to_vec(),
        None => world_seeds(cfg, t.seed),
    };
    seeds
        .par_iter()
        .map(|s| {
            let outcome = run_episode(cfg, &prepared, registry, &t.config, &build_world(cfg, *s))?;
            Ok(Replay { seed: *s, outcome })
        })
        .collect()
}
