//! Directional plan extraction from the bidirectional model.
//!
//! All planners are pure functions of an immutable, validated model. Plans
//! carry the model id, the model digest and the inventory they start from, so
//! they can be replayed by [`crate::exec`] independently.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::model_digest;
use crate::model::{BiPanModel, ModelError, NodeId, ProductKind};
use crate::validate::{validate, Diagnostics};

/// Skill label treated as the generic handling skill of a process.
pub const MANIPULATION: &str = "manipulation";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("model has validation errors:\n{0}")]
    InvalidModel(Diagnostics),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("`{0}` is the final product")]
    TargetIsFinal(NodeId),
    #[error("`{id}` is a {kind} product and cannot be replaced")]
    BrokenKindNotReplaceable { id: NodeId, kind: ProductKind },
    #[error("no replacement given for broken `{0}`")]
    MissingReplacement(NodeId),
    #[error("replacement `{replacement}` for `{broken}`: {reason}")]
    InvalidReplacement {
        broken: NodeId,
        replacement: String,
        reason: &'static str,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl PlanError {
    pub fn code(&self) -> &'static str {
        match self {
            PlanError::InvalidModel(_) => "invalid-model",
            PlanError::UnknownNode(_) => "unknown-node",
            PlanError::TargetIsFinal(_) => "target-is-final",
            PlanError::BrokenKindNotReplaceable { .. } => "broken-kind-not-replaceable",
            PlanError::MissingReplacement(_) => "missing-replacement",
            PlanError::InvalidReplacement { .. } => "invalid-replacement",
            PlanError::Model(e) => e.code(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
    Swap,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
            Direction::Swap => "swap",
        })
    }
}

/// Maps assembly-direction skill labels to their disassembly counterparts.
/// Unmapped labels invert to themselves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkillInversion(BTreeMap<String, String>);

impl Default for SkillInversion {
    fn default() -> Self {
        SkillInversion::from_pairs([
            ("screwing", "unscrewing"),
            ("connecting-cables", "disconnecting-cables"),
            (MANIPULATION, MANIPULATION),
        ])
    }
}

impl SkillInversion {
    pub fn identity() -> Self {
        SkillInversion(BTreeMap::new())
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        SkillInversion(
            pairs
                .into_iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        )
    }

    pub fn invert<'a>(&'a self, label: &'a str) -> &'a str {
        self.0.get(label).map_or(label, String::as_str)
    }

    /// Inverts every label, returning a sorted, de-duplicated list.
    pub fn invert_all(&self, labels: &[String]) -> Vec<String> {
        labels
            .iter()
            .map(|l| self.invert(l).to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// The mapping extended with the inverse of every pair, so that
    /// disassembly labels map back to assembly labels. Existing entries win.
    pub fn with_inverse_pairs(&self) -> Self {
        let mut map = self.0.clone();
        for (from, to) in &self.0 {
            map.entry(to.clone()).or_insert_with(|| from.clone());
        }
        SkillInversion(map)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }
}

/// One direction-tagged process application.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    pub process: NodeId,
    pub direction: Direction,
    pub consumed: Vec<NodeId>,
    pub produced: Vec<NodeId>,
    pub required_skills: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap_target: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap_replacement: Option<NodeId>,
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.direction, self.process)?;
        if let (Some(target), Some(replacement)) = (&self.swap_target, &self.swap_replacement) {
            write!(f, " ({target} -> {replacement})")?;
        }
        write!(f, " [{}]", self.required_skills.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub model_id: String,
    pub model_digest: String,
    /// Inventory the plan is meant to be replayed from.
    pub start: Vec<NodeId>,
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `(direction, process)` pairs, handy for comparisons.
    pub fn sequence(&self) -> Vec<(Direction, &str)> {
        self.steps
            .iter()
            .map(|s| (s.direction, s.process.as_str()))
            .collect()
    }

    /// Replacement parts introduced by swap steps.
    pub fn replacements(&self) -> Vec<&NodeId> {
        self.steps
            .iter()
            .filter_map(|s| s.swap_replacement.as_ref())
            .collect()
    }
}

fn ensure_valid(model: &BiPanModel) -> Result<(), PlanError> {
    let diagnostics = validate(model);
    if diagnostics.has_errors() {
        return Err(PlanError::InvalidModel(diagnostics));
    }
    Ok(())
}

fn final_product(model: &BiPanModel) -> NodeId {
    model
        .finals()
        .first()
        .map(|id| (*id).clone())
        .expect("validated model has one final product")
}

fn new_plan(model: &BiPanModel, start: Vec<NodeId>, steps: Vec<PlanStep>) -> Plan {
    Plan {
        model_id: model.id().to_string(),
        model_digest: model_digest(model),
        start,
        steps,
    }
}

/// Applies the substitution record to a list of model ids, keeping it sorted.
fn substituted(ids: &[NodeId], subs: &BTreeMap<NodeId, NodeId>) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = ids
        .iter()
        .map(|id| subs.get(id).unwrap_or(id).clone())
        .collect();
    out.sort();
    out
}

fn forward_step(model: &BiPanModel, process: &NodeId, subs: &BTreeMap<NodeId, NodeId>) -> PlanStep {
    PlanStep {
        process: process.clone(),
        direction: Direction::Forward,
        consumed: substituted(model.inputs(process.as_str()), subs),
        produced: model.outputs(process.as_str()).to_vec(),
        required_skills: model.skill_labels(process.as_str()),
        swap_target: None,
        swap_replacement: None,
    }
}

fn reverse_step(
    model: &BiPanModel,
    process: &NodeId,
    inv: &SkillInversion,
    subs: &BTreeMap<NodeId, NodeId>,
) -> PlanStep {
    PlanStep {
        process: process.clone(),
        direction: Direction::Reverse,
        consumed: model.outputs(process.as_str()).to_vec(),
        produced: substituted(model.inputs(process.as_str()), subs),
        required_skills: inv.invert_all(&model.skill_labels(process.as_str())),
        swap_target: None,
        swap_replacement: None,
    }
}

/// Topological order of all processes in assembly direction; ties go to the
/// smallest process id.
fn assembly_order(model: &BiPanModel) -> Vec<NodeId> {
    let mut pending: BTreeMap<&NodeId, usize> = BTreeMap::new();
    let mut ready: BTreeSet<&NodeId> = BTreeSet::new();
    for process in model.processes() {
        let upstream = model
            .inputs(process.id.as_str())
            .iter()
            .filter(|p| !model.producers(p.as_str()).is_empty())
            .count();
        if upstream == 0 {
            ready.insert(&process.id);
        } else {
            pending.insert(&process.id, upstream);
        }
    }
    let mut order = Vec::new();
    while let Some(process) = ready.pop_first() {
        order.push(process.clone());
        for output in model.outputs(process.as_str()) {
            for consumer in model.consumers(output.as_str()) {
                if let Some(left) = pending.get_mut(consumer) {
                    *left -= 1;
                    if *left == 0 {
                        pending.remove(consumer);
                        ready.insert(consumer);
                    }
                }
            }
        }
    }
    order
}

/// Forward plan over every process, starting from the leaf inventory.
pub fn assembly_recipe(model: &BiPanModel) -> Result<Plan, PlanError> {
    ensure_valid(model)?;
    let none = BTreeMap::new();
    let steps = assembly_order(model)
        .iter()
        .map(|p| forward_step(model, p, &none))
        .collect();
    let start = model.leaves().into_iter().cloned().collect();
    Ok(new_plan(model, start, steps))
}

/// Reverse of the assembly recipe, from the final product down to the leaves.
pub fn full_disassembly(model: &BiPanModel, inv: &SkillInversion) -> Result<Plan, PlanError> {
    ensure_valid(model)?;
    let none = BTreeMap::new();
    let steps = assembly_order(model)
        .iter()
        .rev()
        .map(|p| reverse_step(model, p, inv, &none))
        .collect();
    Ok(new_plan(model, vec![final_product(model)], steps))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisassemblyMode {
    /// Stop once the assembly containing the target is the topmost item.
    Expose,
    /// Also reverse the process consuming the target, freeing it.
    Extract,
}

/// Partial disassembly down to `target`.
pub fn disassembly_to(
    model: &BiPanModel,
    target: &str,
    mode: DisassemblyMode,
    inv: &SkillInversion,
) -> Result<Plan, PlanError> {
    ensure_valid(model)?;
    let product = model
        .product(target)
        .ok_or_else(|| PlanError::UnknownNode(target.to_string()))?;
    if product.kind == ProductKind::Final {
        return Err(PlanError::TargetIsFinal(product.id.clone()));
    }
    let spine = model.spine(target)?;
    let keep = match mode {
        DisassemblyMode::Expose => 1,
        DisassemblyMode::Extract => 0,
    };
    let none = BTreeMap::new();
    let steps = spine[keep..]
        .iter()
        .rev()
        .map(|p| reverse_step(model, p, inv, &none))
        .collect();
    Ok(new_plan(model, vec![final_product(model)], steps))
}

/// Skill labels a swap of `broken` inside `process` requires: forward and
/// inverted labels of the scoped skill set.
fn swap_skills(
    model: &BiPanModel,
    process: &NodeId,
    broken: &NodeId,
    inv: &SkillInversion,
) -> Vec<String> {
    let inputs = model.inputs(process.as_str());
    let covering: Vec<_> = model
        .fastens()
        .filter(|l| l.secures.contains(broken) && inputs.contains(&l.fastener))
        .collect();
    let scope: BTreeSet<&NodeId> = if covering.is_empty() {
        model.process_skills(process.as_str()).iter().collect()
    } else {
        let manipulation = model.process_skills(process.as_str()).iter().filter(|s| {
            model
                .skill(s.as_str())
                .is_some_and(|s| s.label == MANIPULATION)
        });
        covering
            .iter()
            .flat_map(|l| l.skills.iter())
            .chain(manipulation)
            .collect()
    };
    let mut labels = BTreeSet::new();
    for skill in scope {
        if let Some(skill) = model.skill(skill.as_str()) {
            labels.insert(skill.label.clone());
            labels.insert(inv.invert(&skill.label).to_string());
        }
    }
    labels.into_iter().collect()
}

/// Replaces each broken component with its replacement in one pass: reverse
/// from the root down to every swap site, swap, then reassemble.
///
/// A swap happens while the output of the consuming process is the topmost
/// present assembly. When one swap site sits above another broken component,
/// it is swapped first and then reversed like any other process on the way.
pub fn repair_plan(
    model: &BiPanModel,
    broken: &BTreeSet<NodeId>,
    replacements: &BTreeMap<NodeId, NodeId>,
    inv: &SkillInversion,
) -> Result<Plan, PlanError> {
    ensure_valid(model)?;
    let root_product = final_product(model);

    let mut sites: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    let mut to_reverse: BTreeSet<NodeId> = BTreeSet::new();
    let mut seen_replacements = BTreeSet::new();
    for id in broken {
        let product = model
            .product(id.as_str())
            .ok_or_else(|| PlanError::UnknownNode(id.to_string()))?;
        if matches!(product.kind, ProductKind::Stage | ProductKind::Final) {
            return Err(PlanError::BrokenKindNotReplaceable {
                id: id.clone(),
                kind: product.kind,
            });
        }
        let replacement = replacements
            .get(id)
            .ok_or_else(|| PlanError::MissingReplacement(id.clone()))?;
        let reason = if model.contains(replacement.as_str()) {
            Some("id already exists in the model")
        } else if !seen_replacements.insert(replacement) {
            Some("id is used for more than one broken component")
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(PlanError::InvalidReplacement {
                broken: id.clone(),
                replacement: replacement.to_string(),
                reason,
            });
        }
        let spine = model.spine(id.as_str())?;
        sites.entry(spine[0].clone()).or_default().push(id.clone());
        to_reverse.extend(spine[1..].iter().cloned());
    }

    let mut steps = Vec::new();
    let mut subs: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut reversed = Vec::new();
    if let Some(root) = model.producers(root_product.as_str()).first() {
        let mut stack = vec![root.clone()];
        while let Some(process) = stack.pop() {
            for target in sites.get(&process).into_iter().flatten() {
                let replacement = replacements[target].clone();
                steps.push(PlanStep {
                    process: process.clone(),
                    direction: Direction::Swap,
                    consumed: vec![replacement.clone()],
                    produced: vec![target.clone()],
                    required_skills: swap_skills(model, &process, target, inv),
                    swap_target: Some(target.clone()),
                    swap_replacement: Some(replacement.clone()),
                });
                subs.insert(target.clone(), replacement);
            }
            if to_reverse.contains(&process) {
                steps.push(reverse_step(model, &process, inv, &subs));
                reversed.push(process.clone());
                // visit children in ascending id order
                let mut children: Vec<NodeId> = model
                    .inputs(process.as_str())
                    .iter()
                    .filter_map(|input| model.producers(input.as_str()).first())
                    .filter(|p| to_reverse.contains(*p) || sites.contains_key(*p))
                    .cloned()
                    .collect();
                children.sort();
                stack.extend(children.into_iter().rev());
            }
        }
    }
    for process in reversed.iter().rev() {
        steps.push(forward_step(model, process, &subs));
    }

    let mut start: Vec<NodeId> = vec![root_product];
    start.extend(broken.iter().map(|b| replacements[b].clone()));
    start.sort();
    Ok(new_plan(model, start, steps))
}

/// A resource and the skill labels it offers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resource {
    pub id: String,
    pub skills: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("duplicate resource id `{0}`")]
pub struct DuplicateResource(pub String);

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RegistryDocument", into = "RegistryDocument")]
pub struct ResourceRegistry {
    resources: Vec<Resource>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDocument {
    resources: Vec<Resource>,
}

impl TryFrom<RegistryDocument> for ResourceRegistry {
    type Error = DuplicateResource;

    fn try_from(doc: RegistryDocument) -> Result<Self, Self::Error> {
        ResourceRegistry::new(doc.resources)
    }
}

impl From<ResourceRegistry> for RegistryDocument {
    fn from(registry: ResourceRegistry) -> Self {
        RegistryDocument {
            resources: registry.resources,
        }
    }
}

impl ResourceRegistry {
    pub fn new(mut resources: Vec<Resource>) -> Result<Self, DuplicateResource> {
        resources.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(pair) = resources.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(DuplicateResource(pair[0].id.clone()));
        }
        Ok(ResourceRegistry { resources })
    }

    /// A registry with a single resource offering `skills`.
    pub fn single(id: &str, skills: &[&str]) -> Self {
        ResourceRegistry {
            resources: vec![Resource {
                id: id.to_string(),
                skills: skills.iter().map(|s| s.to_string()).collect(),
            }],
        }
    }

    pub fn resources(&self) -> &[Resource] {
        &self.resources
    }

    pub fn skills(&self) -> BTreeSet<&str> {
        self.resources
            .iter()
            .flat_map(|r| r.skills.iter().map(String::as_str))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFeasibility {
    pub step: usize,
    pub process: NodeId,
    pub missing_skills: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub per_step: Vec<StepFeasibility>,
}

impl FeasibilityReport {
    pub fn missing(&self) -> impl Iterator<Item = &StepFeasibility> {
        self.per_step
            .iter()
            .filter(|s| !s.missing_skills.is_empty())
    }
}

/// Matches every step's required skills against the union of the registry.
pub fn check_feasibility(plan: &Plan, registry: &ResourceRegistry) -> FeasibilityReport {
    let available = registry.skills();
    let per_step: Vec<StepFeasibility> = plan
        .steps
        .iter()
        .enumerate()
        .map(|(step, s)| StepFeasibility {
            step,
            process: s.process.clone(),
            missing_skills: s
                .required_skills
                .iter()
                .filter(|k| !available.contains(k.as_str()))
                .cloned()
                .collect(),
        })
        .collect();
    FeasibilityReport {
        feasible: per_step.iter().all(|s| s.missing_skills.is_empty()),
        per_step,
    }
}
