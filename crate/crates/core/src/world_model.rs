//! Semantic scene description: typed objects with poses, relations between
//! them, and skill templates whose pre/post-conditions drive planning and whose
//! learnable parameters define the search space.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Pose, Quat, Vec3};
use crate::space::{ParamDef, ParamKind, ParamSpace, ParamValue};

#[derive(Debug, Error)]
pub enum WmError {
    #[error("object `{0}` already exists")]
    DuplicateId(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("object `{id}`: quaternion norm {norm} is not 1")]
    BadQuaternion { id: String, norm: f64 },
    #[error("object `{id}`: property `{key}` must be positive")]
    NonPositiveProperty { id: String, key: String },
    #[error("skill `{skill}`: learnable parameter `{param}` has no finite bounds")]
    MissingBounds { skill: String, param: String },
    #[error("skill `{skill}`: condition references undeclared `{name}`")]
    UndeclaredReference { skill: String, name: String },
    #[error("skill `{skill}` expects {expected} object arguments, got {got}")]
    Arity { skill: String, expected: usize, got: usize },
    #[error("bad condition pattern `{0}`")]
    BadPattern(String),
    #[error("scene file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Geometric property keys; these must be strictly positive.
const GEOMETRIC_KEYS: &[&str] = &["mass", "size", "radius", "length", "height", "width", "side", "depth"];

fn is_geometric_key(key: &str) -> bool {
    !key.contains("offset") && GEOMETRIC_KEYS.iter().any(|k| key.contains(k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmObject {
    pub id: String,
    pub kind: String,
    #[serde(with = "pose_array")]
    pub pose: Pose<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<String, f64>,
}

impl WmObject {
    pub fn new(id: impl Into<String>, kind: impl Into<String>, pose: Pose<f64>) -> Self {
        Self {
            id: id.into(),
            kind: kind.into(),
            pose,
            properties: BTreeMap::new(),
        }
    }

    pub fn with_property(mut self, key: impl Into<String>, value: f64) -> Self {
        self.properties.insert(key.into(), value);
        self
    }

    pub fn property(&self, key: &str) -> Option<f64> {
        self.properties.get(key).copied()
    }
}

mod pose_array {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(pose: &Pose<f64>, s: S) -> Result<S::Ok, S::Error> {
        pose.to_array().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose<f64>, D::Error> {
        let a = <[f64; 7]>::deserialize(d)?;
        Ok(Pose::from_array(a))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Relation {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Self {
        Self {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {} {})", self.predicate, self.subject, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

/// A possibly negated relation pattern such as `(not (robot-at ?arm ?from))`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Literal {
    pub negated: bool,
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Literal {
    pub fn parse(text: &str) -> Result<Self, WmError> {
        let bad = || WmError::BadPattern(text.to_string());
        let tokens: Vec<String> = text
            .replace('(', " ( ")
            .replace(')', " ) ")
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let (negated, inner) = match tokens.as_slice() {
            [o, not, o2, rest @ .., c2, c]
                if o == "(" && not.eq_ignore_ascii_case("not") && o2 == "(" && c2 == ")" && c == ")" =>
            {
                (true, rest)
            }
            [o, rest @ .., c] if o == "(" && c == ")" => (false, rest),
            _ => return Err(bad()),
        };
        let (pred, args) = inner.split_first().ok_or_else(bad)?;
        if pred.starts_with('?') || args.iter().any(|a| a == "(" || a == ")") {
            return Err(bad());
        }
        let args = args
            .iter()
            .map(|a| match a.strip_prefix('?') {
                Some(v) if !v.is_empty() => Ok(Term::Var(v.to_string())),
                Some(_) => Err(bad()),
                None => Ok(Term::Const(a.clone())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            negated,
            predicate: pred.clone(),
            args,
        })
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(ToString::to_string).collect();
        let atom = if args.is_empty() {
            format!("({})", self.predicate)
        } else {
            format!("({} {})", self.predicate, args.join(" "))
        };
        if self.negated {
            write!(f, "(not {atom})")
        } else {
            write!(f, "{atom}")
        }
    }
}

/// Value types of skill parameters; anything else names an object kind.
pub const VALUE_TYPES: &[&str] = &["real", "integer", "ordinal", "categorical"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillParameter {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ParamValue>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub learnable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<ParamValue>>,
}

impl SkillParameter {
    pub fn object(name: &str, ty: &str) -> Self {
        Self {
            name: name.into(),
            ty: ty.into(),
            default: None,
            learnable: false,
            bounds: None,
            values: None,
        }
    }

    pub fn real(name: &str, default: f64) -> Self {
        Self {
            name: name.into(),
            ty: "real".into(),
            default: Some(ParamValue::Real(default)),
            learnable: false,
            bounds: None,
            values: None,
        }
    }

    pub fn learnable_real(name: &str, default: f64, lower: f64, upper: f64) -> Self {
        Self {
            learnable: true,
            bounds: Some([lower, upper]),
            ..Self::real(name, default)
        }
    }

    pub fn is_object(&self) -> bool {
        !VALUE_TYPES.contains(&self.ty.as_str())
    }

    fn search_kind(&self, skill: &str) -> Result<ParamKind, WmError> {
        let missing = || WmError::MissingBounds {
            skill: skill.to_string(),
            param: self.name.clone(),
        };
        match self.ty.as_str() {
            "real" => {
                let [lower, upper] = self.bounds.ok_or_else(missing)?;
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(missing());
                }
                Ok(ParamKind::Real { lower, upper })
            }
            "integer" => {
                let [lower, upper] = self.bounds.ok_or_else(missing)?;
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(missing());
                }
                Ok(ParamKind::Integer {
                    lower: lower.ceil() as i64,
                    upper: upper.floor() as i64,
                })
            }
            "ordinal" => {
                let values: Vec<f64> = self.values.iter().flatten().filter_map(ParamValue::as_f64).collect();
                if values.is_empty() {
                    return Err(missing());
                }
                Ok(ParamKind::Ordinal { values })
            }
            "categorical" => {
                let values: Vec<String> = self
                    .values
                    .iter()
                    .flatten()
                    .map(|v| match v {
                        ParamValue::Label(s) => s.clone(),
                        other => other.as_f64().unwrap_or_default().to_string(),
                    })
                    .collect();
                if values.is_empty() {
                    return Err(missing());
                }
                Ok(ParamKind::Categorical { values })
            }
            _ => Err(missing()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillTemplate {
    pub name: String,
    #[serde(default)]
    pub preconditions: Vec<String>,
    #[serde(default)]
    pub postconditions: Vec<String>,
    #[serde(default)]
    pub parameters: Vec<SkillParameter>,
}

impl SkillTemplate {
    pub fn object_parameters(&self) -> impl Iterator<Item = &SkillParameter> {
        self.parameters.iter().filter(|p| p.is_object())
    }

    pub fn parameter(&self, name: &str) -> Option<&SkillParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn precondition_literals(&self) -> Result<Vec<Literal>, WmError> {
        self.preconditions.iter().map(|s| Literal::parse(s)).collect()
    }

    pub fn postcondition_literals(&self) -> Result<Vec<Literal>, WmError> {
        self.postconditions.iter().map(|s| Literal::parse(s)).collect()
    }
}

/// One step of a plan: a skill template bound to object arguments, in the
/// order of the template's object-typed parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillCall {
    pub skill: String,
    pub args: Vec<String>,
}

impl SkillCall {
    pub fn new(skill: &str, args: &[&str]) -> Self {
        Self {
            skill: skill.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for SkillCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.skill, self.args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldModel {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub objects: Vec<WmObject>,
    #[serde(default)]
    pub relations: Vec<Relation>,
    #[serde(default)]
    pub skills: Vec<SkillTemplate>,
    #[serde(default)]
    pub goal: Vec<Relation>,
}

impl WorldModel {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn add_object(&mut self, object: WmObject) -> Result<(), WmError> {
        if self.object(&object.id).is_some() {
            return Err(WmError::DuplicateId(object.id));
        }
        check_object(&object)?;
        self.objects.push(object);
        Ok(())
    }

    pub fn object(&self, id: &str) -> Option<&WmObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: &str) -> Option<&mut WmObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn require(&self, id: &str) -> Result<&WmObject, WmError> {
        self.object(id).ok_or_else(|| WmError::UnknownObject(id.into()))
    }

    pub fn add_relation(&mut self, relation: Relation) -> Result<(), WmError> {
        self.require(&relation.subject)?;
        self.require(&relation.object)?;
        self.relations.push(relation);
        Ok(())
    }

    pub fn skill(&self, name: &str) -> Option<&SkillTemplate> {
        self.skills.iter().find(|s| s.name == name)
    }

    /// Objects `o` with `(predicate subject o)`.
    pub fn related<'a>(&'a self, subject: &'a str, predicate: &'a str) -> impl Iterator<Item = &'a str> {
        self.relations
            .iter()
            .filter(move |r| r.subject == subject && r.predicate == predicate)
            .map(|r| r.object.as_str())
    }

    pub fn validate(&self) -> Result<(), WmError> {
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id.as_str()) {
                return Err(WmError::DuplicateId(o.id.clone()));
            }
            check_object(o)?;
        }
        for r in self.relations.iter().chain(&self.goal) {
            self.require(&r.subject)?;
            self.require(&r.object)?;
        }
        for s in &self.skills {
            self.check_skill(s)?;
        }
        Ok(())
    }

    fn check_skill(&self, skill: &SkillTemplate) -> Result<(), WmError> {
        let declared: BTreeSet<&str> = skill.parameters.iter().map(|p| p.name.as_str()).collect();
        let pre = skill.precondition_literals()?;
        let post = skill.postcondition_literals()?;
        for lit in pre.iter().chain(&post) {
            for t in &lit.args {
                let ok = match t {
                    Term::Var(v) => declared.contains(v.as_str()),
                    Term::Const(c) => self.object(c).is_some(),
                };
                if !ok {
                    return Err(WmError::UndeclaredReference {
                        skill: skill.name.clone(),
                        name: t.to_string(),
                    });
                }
            }
        }
        for p in skill.parameters.iter().filter(|p| p.learnable) {
            p.search_kind(&skill.name)?;
        }
        Ok(())
    }

    /// Learnable parameters of the skills in `plan`, in plan order and then
    /// declaration order. Names are `Skill.param`, or `Skill[i].param` when a
    /// skill occurs more than once in the plan.
    pub fn collect_learnables(&self, plan: &[SkillCall]) -> Result<ParamSpace, WmError> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for call in plan {
            *counts.entry(call.skill.as_str()).or_default() += 1;
        }
        let mut params = Vec::new();
        for (step, call) in plan.iter().enumerate() {
            let template = self
                .skill(&call.skill)
                .ok_or_else(|| WmError::UnknownSkill(call.skill.clone()))?;
            for p in template.parameters.iter().filter(|p| p.learnable) {
                let kind = p.search_kind(&template.name)?;
                params.push(ParamDef {
                    name: learnable_name(&call.skill, step, counts[call.skill.as_str()] > 1, &p.name),
                    kind,
                });
            }
        }
        Ok(ParamSpace { params })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, WmError> {
        let model: Self = toml::from_str(text).map_err(|e| WmError::Parse(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml_string(&self) -> Result<String, WmError> {
        toml::to_string(self).map_err(|e| WmError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WmError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WmError> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

pub fn learnable_name(skill: &str, step: usize, repeated: bool, param: &str) -> String {
    if repeated {
        format!("{skill}[{step}].{param}")
    } else {
        format!("{skill}.{param}")
    }
}

fn check_object(o: &WmObject) -> Result<(), WmError> {
    let q: Quat<f64> = o.pose.orientation;
    let norm = q.norm();
    if !((norm - 1.0).abs() <= 1e-9) {
        return Err(WmError::BadQuaternion { id: o.id.clone(), norm });
    }
    let p: Vec3<f64> = o.pose.position;
    if !p.is_finite() {
        return Err(WmError::Parse(format!("object `{}`: non-finite position", o.id)));
    }
    for (k, v) in &o.properties {
        if is_geometric_key(k) && !(*v > 0.0 && v.is_finite()) {
            return Err(WmError::NonPositiveProperty {
                id: o.id.clone(),
                key: k.clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peg() -> WmObject {
        WmObject::new("Peg-1", "peg", Pose::from_position(Vec3::new(0.0, 0.0, 0.3))).with_property("radius", 0.01)
    }

    #[test]
    fn add_then_lookup() {
        let mut wm = WorldModel::new("t");
        wm.add_object(peg()).unwrap();
        assert_eq!(wm.object("Peg-1"), Some(&peg()));
        assert!(matches!(wm.add_object(peg()), Err(WmError::DuplicateId(id)) if id == "Peg-1"));
    }

    #[test]
    fn hole_radius_property_is_stored() {
        let mut wm = WorldModel::new("t");
        let peg_radius = 0.01;
        wm.add_object(peg()).unwrap();
        wm.add_object(
            WmObject::new("BoxWithHole-1", "box-with-hole", Pose::default())
                .with_property("hole-radius", peg_radius + 0.0015),
        )
        .unwrap();
        let r = wm.object("BoxWithHole-1").unwrap().property("hole-radius").unwrap();
        assert!((r - 0.0115).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_objects() {
        let mut wm = WorldModel::new("t");
        let bad_q = WmObject::new("a", "box", Pose::new(Vec3::zeros(), Quat::new(0.0, 0.0, 0.0, 1.1)));
        assert!(matches!(wm.add_object(bad_q), Err(WmError::BadQuaternion { .. })));
        let neg = WmObject::new("b", "box", Pose::default()).with_property("mass", -1.0);
        assert!(matches!(wm.add_object(neg), Err(WmError::NonPositiveProperty { .. })));
        let offset = WmObject::new("c", "box", Pose::default()).with_property("com-offset-x", -0.01);
        assert!(wm.add_object(offset).is_ok());
    }

    #[test]
    fn relation_must_resolve() {
        let mut wm = WorldModel::new("t");
        wm.add_object(peg()).unwrap();
        assert!(wm.add_relation(Relation::new("Peg-1", "at", "Nowhere")).is_err());
    }

    #[test]
    fn literal_parsing() {
        let l = Literal::parse("(not (robot-at ?arm ?from))").unwrap();
        assert!(l.negated);
        assert_eq!(l.predicate, "robot-at");
        assert_eq!(l.args, vec![Term::Var("arm".into()), Term::Var("from".into())]);
        assert_eq!(l.to_string(), "(not (robot-at ?arm ?from))");
        let c = Literal::parse("(at Peg-1 ?box)").unwrap();
        assert_eq!(c.args[0], Term::Const("Peg-1".into()));
        assert!(Literal::parse("at ?x").is_err());
        assert!(Literal::parse("(at (nested ?x))").is_err());
    }

    #[test]
    fn learnable_without_bounds_is_rejected() {
        let mut wm = WorldModel::new("t");
        let mut p = SkillParameter::real("force", 5.0);
        p.learnable = true;
        wm.skills.push(SkillTemplate {
            name: "Press".into(),
            preconditions: vec![],
            postconditions: vec![],
            parameters: vec![p],
        });
        assert!(matches!(wm.validate(), Err(WmError::MissingBounds { .. })));
        let plan = [SkillCall::new("Press", &[])];
        assert!(matches!(
            wm.collect_learnables(&plan),
            Err(WmError::MissingBounds { .. })
        ));
    }

    #[test]
    fn undeclared_condition_variable() {
        let mut wm = WorldModel::new("t");
        wm.skills.push(SkillTemplate {
            name: "Go".into(),
            preconditions: vec![],
            postconditions: vec!["(robot-at ?arm ?to)".into()],
            parameters: vec![SkillParameter::object("arm", "robot-arm")],
        });
        assert!(matches!(wm.validate(), Err(WmError::UndeclaredReference { .. })));
    }

    #[test]
    fn learnables_repeated_skill_names() {
        let mut wm = WorldModel::new("t");
        wm.skills.push(SkillTemplate {
            name: "Press".into(),
            preconditions: vec![],
            postconditions: vec![],
            parameters: vec![
                SkillParameter::learnable_real("force", 5.0, 1.0, 10.0),
                SkillParameter::real("speed", 0.1),
            ],
        });
        let plan = [SkillCall::new("Press", &[]), SkillCall::new("Press", &[])];
        let space = wm.collect_learnables(&plan).unwrap();
        let names: Vec<&str> = space.params.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["Press[0].force", "Press[1].force"]);
        assert!(wm.collect_learnables(&[]).unwrap().is_empty());
        assert!(matches!(
            wm.collect_learnables(&[SkillCall::new("Nope", &[])]),
            Err(WmError::UnknownSkill(_))
        ));
    }
}
