//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skillbo_core::behavior_tree::{NodeKind, Scripted, Status, Tree, TreeBuilder};
use skillbo_core::math::Matrix;
use skillbo_core::optimizer::{suggest, BoSettings, GpHyper, Sense};
use skillbo_core::pddl::{Atom, PddlDomain, PddlProblem};
use skillbo_core::space::{ParamDef, ParamKind, ParamSpace, ParamValue};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

/// `J^T (-K e - D J qd)` and `J^T w` by explicit loops.
pub fn naive_torques(
    j: &Matrix<f64>,
    qd: &[f64],
    xe: &[f64],
    k: &Matrix<f64>,
    d: &Matrix<f64>,
    w: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = qd.len();
    let mut tau = vec![0.0; n];
    let mut ext = vec![0.0; n];
    for col in 0..n {
        for r in 0..6 {
            let mut f = 0.0;
            for c in 0..6 {
                let mut xdot = 0.0;
                for m in 0..n {
                    xdot += j[(c, m)] * qd[m];
                }
                f += -k[(r, c)] * xe[c] - d[(r, c)] * xdot;
            }
            tau[col] += j[(r, col)] * f;
            ext[col] += j[(r, col)] * w[r];
        }
    }
    (tau, ext)
}

/// Trapezoid rule over uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    values.windows(2).map(|w| h * (w[0] + w[1]) / 2.0).sum()
}

pub const ALL: [Status; 3] = [Status::Success, Status::Failure, Status::Running];

pub fn pair(kind: NodeKind, a: Status, b: Status) -> Tree {
    let mut t = TreeBuilder::new();
    let x = t.action("a", Scripted::constant(a));
    let y = t.action("b", Scripted::constant(b));
    let root = t.control(kind, "root", &[x, y]).unwrap();
    t.build(root).unwrap()
}

pub fn sequence_oracle(a: Status, b: Status) -> Status {
    if a != Status::Success {
        a
    } else {
        b
    }
}

pub fn selector_oracle(a: Status, b: Status) -> Status {
    if a != Status::Failure {
        a
    } else {
        b
    }
}

pub fn parallel_oracle(a: Status, b: Status) -> Status {
    if a == Status::Failure || b == Status::Failure {
        Status::Failure
    } else if a == Status::Success && b == Status::Success {
        Status::Success
    } else {
        Status::Running
    }
}

pub fn first_success_oracle(a: Status, b: Status) -> Status {
    if a == Status::Success || b == Status::Success {
        Status::Success
    } else if a == Status::Failure || b == Status::Failure {
        Status::Failure
    } else {
        Status::Running
    }
}

pub const BLOCKS: &str = "
(define (domain blocks)
  (:requirements :strips :typing)
  (:types block)
  (:predicates (on ?x - block ?y - block) (ontable ?x - block) (clear ?x - block)
               (handempty) (holding ?x - block))
  (:action pick-up
    :parameters (?x - block)
    :precondition (and (clear ?x) (ontable ?x) (handempty))
    :effect (and (not (ontable ?x)) (not (clear ?x)) (not (handempty)) (holding ?x)))
  (:action put-down
    :parameters (?x - block)
    :precondition (holding ?x)
    :effect (and (not (holding ?x)) (clear ?x) (handempty) (ontable ?x)))
  (:action stack
    :parameters (?x - block ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (not (holding ?x)) (not (clear ?y)) (clear ?x) (handempty) (on ?x ?y)))
  (:action unstack
    :parameters (?x - block ?y - block)
    :precondition (and (on ?x ?y) (clear ?x) (handempty))
    :effect (and (holding ?x) (clear ?y) (not (clear ?x)) (not (handempty)) (not (on ?x ?y)))))
";

/// Towers listed bottom to top.
pub fn tower_atoms(towers: &[Vec<usize>]) -> Vec<Atom> {
    let b = |i: usize| format!("b{i}");
    let mut atoms = vec![Atom::new("handempty", &[])];
    for t in towers {
        atoms.push(Atom::new("ontable", &[&b(t[0])]));
        for w in t.windows(2) {
            atoms.push(Atom::new("on", &[&b(w[1]), &b(w[0])]));
        }
        atoms.push(Atom::new("clear", &[&b(*t.last().unwrap())]));
    }
    atoms
}

pub fn blocks_problem(towers: &[Vec<usize>], goal: &[Atom], n: usize) -> PddlProblem {
    PddlProblem {
        name: "random".into(),
        domain: "blocks".into(),
        objects: (0..n).map(|i| (format!("b{i}"), "block".into())).collect(),
        init: tower_atoms(towers),
        goal: goal.to_vec(),
    }
}

pub fn random_towers(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut blocks: Vec<usize> = (0..n).collect();
    blocks.shuffle(rng);
    let mut towers: Vec<Vec<usize>> = Vec::new();
    for b in blocks {
        if towers.is_empty() || rng.gen_bool(0.4) {
            towers.push(vec![b]);
        } else {
            let k = rng.gen_range(0..towers.len());
            towers[k].push(b);
        }
    }
    towers
}

/// Breadth-first search over explicit atom sets; returns the optimal plan length.
pub fn bfs_length(domain: &PddlDomain, problem: &PddlProblem) -> Option<usize> {
    let objects: Vec<&str> = problem.objects.iter().map(|(o, _)| o.as_str()).collect();
    let mut ops: Vec<(BTreeSet<Atom>, Vec<Atom>, Vec<Atom>)> = Vec::new();
    for a in &domain.actions {
        let k = a.params.len();
        let mut idx = vec![0usize; k];
        loop {
            let bind: HashMap<&str, &str> = a
                .params
                .iter()
                .map(|(v, _)| v.as_str())
                .zip(idx.iter().map(|&i| objects[i]))
                .collect();
            let g = |atom: &Atom| Atom {
                predicate: atom.predicate.clone(),
                args: atom
                    .args
                    .iter()
                    .map(|x| bind.get(x.as_str()).copied().unwrap_or(x).to_string())
                    .collect(),
            };
            ops.push((
                a.precondition.iter().map(g).collect(),
                a.add.iter().map(g).collect(),
                a.delete.iter().map(g).collect(),
            ));
            let mut j = 0;
            while j < k {
                idx[j] += 1;
                if idx[j] < objects.len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == k {
                break;
            }
        }
    }
    let start: BTreeSet<Atom> = problem.init.iter().cloned().collect();
    let done = |s: &BTreeSet<Atom>| problem.goal.iter().all(|g| s.contains(g));
    let mut seen = BTreeSet::from([start.clone()]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((s, d)) = queue.pop_front() {
        if done(&s) {
            return Some(d);
        }
        for (pre, add, del) in &ops {
            if pre.is_subset(&s) {
                let mut next = s.clone();
                for x in del {
                    next.remove(x);
                }
                next.extend(add.iter().cloned());
                if seen.insert(next.clone()) {
                    queue.push_back((next, d + 1));
                }
            }
        }
    }
    None
}

pub fn matern_oracle(a: &[f64], b: &[f64], l: &[f64], s2: f64) -> f64 {
    let r: f64 = a
        .iter()
        .zip(b)
        .zip(l)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt();
    let c = 5f64.sqrt() * r;
    s2 * (1.0 + c + c * c / 3.0) * (-c).exp()
}

pub fn real(name: &str, lower: f64, upper: f64) -> ParamDef {
    ParamDef {
        name: name.into(),
        kind: ParamKind::Real { lower, upper },
    }
}

pub fn as_reals(c: &[ParamValue]) -> Vec<f64> {
    c.iter().map(|v| v.as_f64().unwrap()).collect()
}

/// Runs `n` evaluations of `f` and returns every configuration with its
/// objective vector.
pub fn optimize(
    space: &ParamSpace,
    senses: &[Sense],
    f: impl Fn(&[f64]) -> Vec<f64>,
    n: usize,
    settings: &BoSettings,
    seed: u64,
) -> Vec<(Vec<ParamValue>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history: Vec<(Vec<ParamValue>, Vec<f64>)> = Vec::new();
    let mut warm: Option<GpHyper<f64>> = None;
    for _ in 0..n {
        let view: Vec<(&[ParamValue], &[f64])> = history.iter().map(|(c, y)| (c.as_slice(), y.as_slice())).collect();
        let s = suggest(space, senses, &view, settings, warm.as_ref(), &mut rng).unwrap();
        if s.hyper.is_some() {
            warm = s.hyper.clone();
        }
        let y = f(&as_reals(&s.config));
        history.push((s.config, y));
    }
    history
}

pub fn brute_front(points: &[Vec<f64>], senses: &[Sense]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !(0..points.len()).any(|j| {
                let no_worse = (0..senses.len()).all(|k| match senses[k] {
                    Sense::Min => points[j][k] <= points[i][k],
                    Sense::Max => points[j][k] >= points[i][k],
                });
                no_worse && points[j] != points[i]
            })
        })
        .collect()
}
