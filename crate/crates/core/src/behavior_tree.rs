//! Behavior trees: control-flow nodes over condition and action leaves,
//! ticked from the root once per action period.
//!
//! Trees live in an arena built with [`TreeBuilder`]; malformed trees are
//! rejected by [`TreeBuilder::build`], so ticking never fails.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world_model::{Literal, SkillCall, Term, WorldModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Success,
    Failure,
    Running,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Number(f64),
    Vector(Vec<f64>),
    Text(String),
}

/// Key-value store shared by the leaves of one tree and the simulator loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Blackboard {
    entries: BTreeMap<String, Value>,
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: Value) {
        self.entries.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.entries.remove(key)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        match self.entries.get(key) {
            Some(Value::Number(x)) => Some(*x),
            _ => None,
        }
    }

    pub fn vector(&self, key: &str) -> Option<&[f64]> {
        match self.entries.get(key) {
            Some(Value::Vector(v)) => Some(v),
            _ => None,
        }
    }

    pub fn flag(&self, key: &str) -> bool {
        matches!(self.entries.get(key), Some(Value::Bool(true)))
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.entries.get(key) {
            Some(Value::Text(s)) => Some(s),
            _ => None,
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Key under which a ground symbolic fact is stored.
    pub fn fact_key(fact: &str) -> String {
        format!("fact:{fact}")
    }

    pub fn set_fact(&mut self, fact: &str, holds: bool) {
        self.set(Self::fact_key(fact), Value::Bool(holds));
    }

    pub fn fact(&self, fact: &str) -> bool {
        self.flag(&Self::fact_key(fact))
    }
}

pub trait ActionLeaf: Send {
    fn tick(&mut self, bb: &mut Blackboard) -> Status;
    /// Called once when a running leaf is preempted.
    fn halt(&mut self, _bb: &mut Blackboard) {}
}

pub trait ConditionLeaf: Send {
    fn check(&self, bb: &Blackboard) -> bool;
}

impl<F: Fn(&Blackboard) -> bool + Send> ConditionLeaf for F {
    fn check(&self, bb: &Blackboard) -> bool {
        self(bb)
    }
}

pub enum NodeKind {
    Sequence,
    SequenceStar,
    Selector,
    Parallel,
    ParallelFirstSuccess,
    Action(Box<dyn ActionLeaf>),
    Condition(Box<dyn ConditionLeaf>),
    AlwaysSuccess,
}

impl NodeKind {
    pub fn is_control(&self) -> bool {
        matches!(
            self,
            NodeKind::Sequence
                | NodeKind::SequenceStar
                | NodeKind::Selector
                | NodeKind::Parallel
                | NodeKind::ParallelFirstSuccess
        )
    }

    pub fn tag(&self) -> &'static str {
        match self {
            NodeKind::Sequence => "sequence",
            NodeKind::SequenceStar => "sequence-star",
            NodeKind::Selector => "selector",
            NodeKind::Parallel => "parallel",
            NodeKind::ParallelFirstSuccess => "parallel-first-success",
            NodeKind::Action(_) => "action",
            NodeKind::Condition(_) => "condition",
            NodeKind::AlwaysSuccess => "always-success",
        }
    }
}

impl fmt::Debug for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum BtError {
    #[error("control node `{0}` has no children")]
    EmptyControl(String),
    #[error("leaf `{0}` cannot have children")]
    LeafWithChildren(String),
    #[error("node `{0}` has more than one parent")]
    SharedChild(String),
    #[error("cycle through node `{0}`")]
    Cycle(String),
    #[error("node `{0}` is not reachable from the root")]
    Unreachable(String),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("no behavior tree expansion registered for skill `{0}`")]
    UnknownSkill(String),
    #[error("skill `{skill}`: {msg}")]
    Expansion { skill: String, msg: String },
}

struct Node {
    kind: NodeKind,
    label: String,
    children: Vec<NodeId>,
    running: bool,
    /// Next child for sequence-star.
    cursor: usize,
    /// Per-child completion memory for parallel.
    done: Vec<bool>,
}

#[derive(Default)]
pub struct TreeBuilder {
    nodes: Vec<Node>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, kind: NodeKind, label: impl Into<String>) -> NodeId {
        self.nodes.push(Node {
            kind,
            label: label.into(),
            children: Vec::new(),
            running: false,
            cursor: 0,
            done: Vec::new(),
        });
        self.nodes.len() - 1
    }

    pub fn action(&mut self, label: impl Into<String>, leaf: impl ActionLeaf + 'static) -> NodeId {
        self.node(NodeKind::Action(Box::new(leaf)), label)
    }

    pub fn condition(&mut self, label: impl Into<String>, leaf: impl ConditionLeaf + 'static) -> NodeId {
        self.node(NodeKind::Condition(Box::new(leaf)), label)
    }

    pub fn add_child(&mut self, parent: NodeId, child: NodeId) -> Result<(), BtError> {
        if child >= self.nodes.len() {
            return Err(BtError::UnknownNode(child));
        }
        self.nodes
            .get_mut(parent)
            .ok_or(BtError::UnknownNode(parent))?
            .children
            .push(child);
        Ok(())
    }

    /// Control node with the given children, in order.
    pub fn control(
        &mut self,
        kind: NodeKind,
        label: impl Into<String>,
        children: &[NodeId],
    ) -> Result<NodeId, BtError> {
        let id = self.node(kind, label);
        for &c in children {
            self.add_child(id, c)?;
        }
        Ok(id)
    }

    pub fn build(mut self, root: NodeId) -> Result<Tree, BtError> {
        if root >= self.nodes.len() {
            return Err(BtError::UnknownNode(root));
        }
        let n = self.nodes.len();
        let mut parents = vec![0usize; n];
        for node in &self.nodes {
            if node.kind.is_control() && node.children.is_empty() {
                return Err(BtError::EmptyControl(node.label.clone()));
            }
            if !node.kind.is_control() && !node.children.is_empty() {
                return Err(BtError::LeafWithChildren(node.label.clone()));
            }
            for &c in &node.children {
                parents[c] += 1;
            }
        }
        // depth-first walk with colors: 0 new, 1 on stack, 2 finished
        let mut color = vec![0u8; n];
        let mut stack = vec![(root, 0usize)];
        color[root] = 1;
        while let Some(&mut (id, ref mut next)) = stack.last_mut() {
            if let Some(&c) = self.nodes[id].children.get(*next) {
                *next += 1;
                match color[c] {
                    0 => {
                        color[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => return Err(BtError::Cycle(self.nodes[c].label.clone())),
                    _ => return Err(BtError::SharedChild(self.nodes[c].label.clone())),
                }
            } else {
                color[id] = 2;
                stack.pop();
            }
        }
        if parents[root] > 0 {
            return Err(BtError::Cycle(self.nodes[root].label.clone()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if parents[i] > 1 {
                return Err(BtError::SharedChild(node.label.clone()));
            }
            if color[i] == 0 {
                return Err(BtError::Unreachable(node.label.clone()));
            }
        }
        for node in &mut self.nodes {
            node.done = vec![false; node.children.len()];
        }
        Ok(Tree {
            nodes: self.nodes,
            root,
        })
    }
}

pub struct Tree {
    nodes: Vec<Node>,
    root: NodeId,
}

impl fmt::Debug for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.dump())
    }
}

impl Tree {
    /// A tree that always succeeds.
    pub fn noop() -> Self {
        let mut b = TreeBuilder::new();
        let root = b.node(NodeKind::AlwaysSuccess, "no-op");
        b.build(root).expect("single leaf is valid")
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self, id: NodeId) -> &NodeKind {
        &self.nodes[id].kind
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id].label
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn tick(&mut self, bb: &mut Blackboard) -> Status {
        self.tick_node(self.root, bb)
    }

    /// Preempts everything that is currently running.
    pub fn halt(&mut self, bb: &mut Blackboard) {
        self.halt_node(self.root, bb);
    }

    fn halt_node(&mut self, id: NodeId, bb: &mut Blackboard) {
        let node = &mut self.nodes[id];
        node.cursor = 0;
        node.done.iter_mut().for_each(|d| *d = false);
        if !node.running {
            return;
        }
        node.running = false;
        if let NodeKind::Action(leaf) = &mut node.kind {
            leaf.halt(bb);
            return;
        }
        for i in 0..self.nodes[id].children.len() {
            let c = self.nodes[id].children[i];
            self.halt_node(c, bb);
        }
    }

    fn halt_children_from(&mut self, id: NodeId, from: usize, bb: &mut Blackboard) {
        for i in from..self.nodes[id].children.len() {
            let c = self.nodes[id].children[i];
            self.halt_node(c, bb);
        }
    }

    fn tick_node(&mut self, id: NodeId, bb: &mut Blackboard) -> Status {
        let status = match &mut self.nodes[id].kind {
            NodeKind::Action(leaf) => leaf.tick(bb),
            NodeKind::Condition(leaf) => {
                if leaf.check(bb) {
                    Status::Success
                } else {
                    Status::Failure
                }
            }
            NodeKind::AlwaysSuccess => Status::Success,
            NodeKind::Sequence => self.tick_sequence(id, bb),
            NodeKind::SequenceStar => self.tick_sequence_star(id, bb),
            NodeKind::Selector => self.tick_selector(id, bb),
            NodeKind::Parallel => self.tick_parallel(id, bb),
            NodeKind::ParallelFirstSuccess => self.tick_parallel_first_success(id, bb),
        };
        self.nodes[id].running = status == Status::Running;
        status
    }

    fn tick_sequence(&mut self, id: NodeId, bb: &mut Blackboard) -> Status {
        let n = self.nodes[id].children.len();
        for i in 0..n {
            let c = self.nodes[id].children[i];
            match self.tick_node(c, bb) {
                Status::Success => {}
                other => {
                    self.halt_children_from(id, i + 1, bb);
                    return other;
                }
            }
        }
        Status::Success
    }

    fn tick_sequence_star(&mut self, id: NodeId, bb: &mut Blackboard) -> Status {
        let n = self.nodes[id].children.len();
        while self.nodes[id].cursor < n {
            let i = self.nodes[id].cursor;
            let c = self.nodes[id].children[i];
            match self.tick_node(c, bb) {
                Status::Success => self.nodes[id].cursor += 1,
                other => return other,
            }
        }
        self.nodes[id].cursor = 0;
        Status::Success
    }

    fn tick_selector(&mut self, id: NodeId, bb: &mut Blackboard) -> Status {
        let n = self.nodes[id].children.len();
        for i in 0..n {
            let c = self.nodes[id].children[i];
            match self.tick_node(c, bb) {
                Status::Failure => {}
                other => {
                    self.halt_children_from(id, i + 1, bb);
                    return other;
                }
            }
        }
        Status::Failure
    }

    fn tick_parallel(&mut self, id: NodeId, bb: &mut Blackboard) -> Status {
        let n = self.nodes[id].children.len();
        let mut failed = false;
        for i in 0..n {
            if self.nodes[id].done[i] {
                continue;
            }
            let c = self.nodes[id].children[i];
            match self.tick_node(c, bb) {
                Status::Success => self.nodes[id].done[i] = true,
                Status::Failure => failed = true,
                Status::Running => {}
            }
        }
        if failed {
            self.halt_children_from(id, 0, bb);
            return Status::Failure;
        }
        if self.nodes[id].done.iter().all(|&d| d) {
            self.nodes[id].done.iter_mut().for_each(|d| *d = false);
            return Status::Success;
        }
        Status::Running
    }

    fn tick_parallel_first_success(&mut self, id: NodeId, bb: &mut Blackboard) -> Status {
        let n = self.nodes[id].children.len();
        let mut statuses = Vec::with_capacity(n);
        for i in 0..n {
            let c = self.nodes[id].children[i];
            statuses.push(self.tick_node(c, bb));
        }
        if statuses.contains(&Status::Success) {
            self.halt_children_from(id, 0, bb);
            Status::Success
        } else if statuses.contains(&Status::Failure) {
            self.halt_children_from(id, 0, bb);
            Status::Failure
        } else {
            Status::Running
        }
    }

    /// Indented text rendering, one node per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let node = &self.nodes[id];
            out.push_str(&"  ".repeat(depth));
            out.push_str(node.kind.tag());
            if !node.label.is_empty() {
                out.push(' ');
                out.push_str(&node.label);
            }
            out.push('\n');
            for &c in node.children.iter().rev() {
                stack.push((c, depth + 1));
            }
        }
        out
    }
}

/// Builds the behavior-tree subtree that executes one planned skill.
pub trait SkillExpander {
    /// Adds the nodes performing `call`, the `step`-th skill of the plan (its
    /// primitives under a parallel-first-success processor), and returns the
    /// processor node.
    fn expand(
        &self,
        step: usize,
        call: &SkillCall,
        model: &WorldModel,
        builder: &mut TreeBuilder,
    ) -> Result<NodeId, BtError>;
}

/// Grounds a condition pattern against a skill call's object arguments.
pub fn ground_literal(lit: &Literal, call: &SkillCall, model: &WorldModel) -> Result<String, BtError> {
    let template = model
        .skill(&call.skill)
        .ok_or_else(|| BtError::UnknownSkill(call.skill.clone()))?;
    let vars: Vec<&str> = template.object_parameters().map(|p| p.name.as_str()).collect();
    let mut args = Vec::with_capacity(lit.args.len());
    for t in &lit.args {
        match t {
            Term::Const(c) => args.push(c.clone()),
            Term::Var(v) => {
                let i = vars.iter().position(|x| x == v).ok_or_else(|| BtError::Expansion {
                    skill: call.skill.clone(),
                    msg: format!("?{v} is not an object parameter"),
                })?;
                let a = call.args.get(i).ok_or_else(|| BtError::Expansion {
                    skill: call.skill.clone(),
                    msg: format!("missing argument for ?{v}"),
                })?;
                args.push(a.clone());
            }
        }
    }
    Ok(if args.is_empty() {
        format!("({})", lit.predicate)
    } else {
        format!("({} {})", lit.predicate, args.join(" "))
    })
}

/// Seeds the blackboard with the model's relations as symbolic facts.
pub fn load_facts(model: &WorldModel, bb: &mut Blackboard) {
    for r in &model.relations {
        bb.set_fact(&r.to_string(), true);
    }
}

struct ApplyEffects {
    add: Vec<String>,
    del: Vec<String>,
}

impl ActionLeaf for ApplyEffects {
    fn tick(&mut self, bb: &mut Blackboard) -> Status {
        for d in &self.del {
            bb.set_fact(d, false);
        }
        for a in &self.add {
            bb.set_fact(a, true);
        }
        Status::Success
    }
}

/// Assembles the policy tree of a plan: a sequence-star root with one
/// sequence-star subtree per skill, made of precondition checks, the skill's
/// processor, a symbolic effect update and postcondition checks.
pub fn assemble_bt(plan: &[SkillCall], model: &WorldModel, expander: &dyn SkillExpander) -> Result<Tree, BtError> {
    if plan.is_empty() {
        return Ok(Tree::noop());
    }
    let mut b = TreeBuilder::new();
    let mut subtrees = Vec::with_capacity(plan.len());
    for (step, call) in plan.iter().enumerate() {
        let template = model
            .skill(&call.skill)
            .ok_or_else(|| BtError::UnknownSkill(call.skill.clone()))?;
        let parse = |s: &String| {
            Literal::parse(s).map_err(|e| BtError::Expansion {
                skill: call.skill.clone(),
                msg: e.to_string(),
            })
        };
        let mut children = Vec::new();
        for pre in &template.preconditions {
            let lit = parse(pre)?;
            let fact = ground_literal(&lit, call, model)?;
            children.push(fact_condition(&mut b, fact, lit.negated));
        }
        children.push(expander.expand(step, call, model, &mut b)?);
        let mut add = Vec::new();
        let mut del = Vec::new();
        let mut posts = Vec::new();
        for post in &template.postconditions {
            let lit = parse(post)?;
            let fact = ground_literal(&lit, call, model)?;
            if lit.negated {
                del.push(fact.clone());
            } else {
                add.push(fact.clone());
            }
            posts.push((fact, lit.negated));
        }
        children.push(b.action("effects", ApplyEffects { add, del }));
        for (fact, negated) in posts {
            children.push(fact_condition(&mut b, fact, negated));
        }
        subtrees.push(b.control(NodeKind::SequenceStar, call.to_string(), &children)?);
    }
    let root = b.control(NodeKind::SequenceStar, "plan", &subtrees)?;
    b.build(root)
}

fn fact_condition(b: &mut TreeBuilder, fact: String, negated: bool) -> NodeId {
    let label = if negated { format!("(not {fact})") } else { fact.clone() };
    b.condition(label, move |bb: &Blackboard| bb.fact(&fact) != negated)
}

/// Test leaf that replays a fixed script of results, repeating the last one.
pub struct Scripted {
    script: Vec<Status>,
    pos: usize,
    pub ticks: std::sync::Arc<std::sync::atomic::AtomicUsize>,
    pub halts: std::sync::Arc<std::sync::atomic::AtomicUsize>,
}

impl Scripted {
    pub fn new(script: &[Status]) -> Self {
        assert!(!script.is_empty());
        Self {
            script: script.to_vec(),
            pos: 0,
            ticks: Default::default(),
            halts: Default::default(),
        }
    }

    pub fn constant(status: Status) -> Self {
        Self::new(&[status])
    }
}

impl ActionLeaf for Scripted {
    fn tick(&mut self, _bb: &mut Blackboard) -> Status {
        use std::sync::atomic::Ordering;
        self.ticks.fetch_add(1, Ordering::SeqCst);
        let s = self.script[self.pos.min(self.script.len() - 1)];
        self.pos += 1;
        s
    }

    fn halt(&mut self, _bb: &mut Blackboard) {
        self.halts.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
    }
}
