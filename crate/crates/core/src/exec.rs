//! Plan interpreter over an inventory state machine.
//!
//! The interpreter derives what each step consumes and produces from the
//! model itself (plus the substitutions applied so far) and only then checks
//! the plan's declared lists against it. This keeps it usable as an oracle
//! for the planners.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::model_digest;
use crate::model::{BiPanModel, NodeId};
use crate::plan::{Direction, Plan, PlanStep};
use crate::validate::{validate, Diagnostics};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("missing input: {}", join(.0))]
    MissingInput(Vec<NodeId>),
    #[error("unknown process `{0}`")]
    UnknownProcess(NodeId),
    #[error("already present: {}", join(.0))]
    DoubleProduce(Vec<NodeId>),
    #[error("step declares {field} [{}] but the model implies [{}]", join(.declared), join(.expected))]
    StepMismatch {
        field: &'static str,
        declared: Vec<NodeId>,
        expected: Vec<NodeId>,
    },
    #[error("invalid swap: {0}")]
    InvalidSwap(String),
}

impl StepError {
    pub fn code(&self) -> &'static str {
        match self {
            StepError::MissingInput(_) => "missing-input",
            StepError::UnknownProcess(_) => "unknown-process",
            StepError::DoubleProduce(_) => "double-produce",
            StepError::StepMismatch { .. } => "step-mismatch",
            StepError::InvalidSwap(_) => "invalid-swap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("plan was made for model digest {expected}, model has {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("step {index} ({step}): {source}")]
    Step {
        index: usize,
        step: String,
        source: StepError,
    },
    #[error("model has validation errors:\n{0}")]
    InvalidModel(Diagnostics),
}

impl ExecError {
    pub fn code(&self) -> &'static str {
        match self {
            ExecError::DigestMismatch { .. } => "digest-mismatch",
            ExecError::Step { source, .. } => source.code(),
            ExecError::InvalidModel(_) => "invalid-model",
        }
    }
}

fn join(ids: &[NodeId]) -> String {
    ids.iter()
        .map(NodeId::as_str)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Items currently in existence plus the substitutions applied so far.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecState {
    pub present: BTreeSet<NodeId>,
    /// broken component -> replacement
    pub substitutions: BTreeMap<NodeId, NodeId>,
}

impl ExecState {
    pub fn with_items(items: impl IntoIterator<Item = NodeId>) -> Self {
        ExecState {
            present: items.into_iter().collect(),
            substitutions: BTreeMap::new(),
        }
    }

    fn resolve(&self, id: &NodeId) -> NodeId {
        self.substitutions.get(id).unwrap_or(id).clone()
    }

    fn resolve_all(&self, ids: &[NodeId]) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = ids.iter().map(|id| self.resolve(id)).collect();
        out.sort();
        out
    }
}

impl fmt::Display for ExecState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let present: Vec<&str> = self.present.iter().map(NodeId::as_str).collect();
        write!(f, "{{{}}}", present.join(", "))?;
        if !self.substitutions.is_empty() {
            let subs: Vec<String> = self
                .substitutions
                .iter()
                .map(|(b, r)| format!("{b}={r}"))
                .collect();
            write!(f, " substitutions {{{}}}", subs.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub state: ExecState,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub start: ExecState,
    pub entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn final_state(&self) -> &ExecState {
        self.entries.last().map_or(&self.start, |e| &e.state)
    }
}

/// Leaf inventory: every product without a producer.
pub fn initial_inventory(model: &BiPanModel) -> Result<ExecState, ExecError> {
    let diagnostics = validate(model);
    if diagnostics.has_errors() {
        return Err(ExecError::InvalidModel(diagnostics));
    }
    Ok(ExecState::with_items(model.leaves().into_iter().cloned()))
}

/// Inventory holding only the final product.
pub fn final_inventory(model: &BiPanModel) -> Result<ExecState, ExecError> {
    let diagnostics = validate(model);
    if diagnostics.has_errors() {
        return Err(ExecError::InvalidModel(diagnostics));
    }
    Ok(ExecState::with_items(model.finals().into_iter().cloned()))
}

fn check_declared(
    field: &'static str,
    declared: &[NodeId],
    expected: &[NodeId],
) -> Result<(), StepError> {
    let mut sorted = declared.to_vec();
    sorted.sort();
    if sorted != expected {
        return Err(StepError::StepMismatch {
            field,
            declared: declared.to_vec(),
            expected: expected.to_vec(),
        });
    }
    Ok(())
}

fn transfer(state: &ExecState, remove: &[NodeId], add: &[NodeId]) -> Result<ExecState, StepError> {
    let missing: Vec<NodeId> = remove
        .iter()
        .filter(|id| !state.present.contains(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(StepError::MissingInput(missing));
    }
    let mut next = state.clone();
    for id in remove {
        next.present.remove(id);
    }
    let doubled: Vec<NodeId> = add
        .iter()
        .filter(|id| next.present.contains(*id))
        .cloned()
        .collect();
    if !doubled.is_empty() {
        return Err(StepError::DoubleProduce(doubled));
    }
    next.present.extend(add.iter().cloned());
    Ok(next)
}

/// Applies one step to `state`, returning the successor state.
pub fn apply_step(
    state: &ExecState,
    step: &PlanStep,
    model: &BiPanModel,
) -> Result<ExecState, StepError> {
    let process = step.process.as_str();
    if model.process(process).is_none() {
        return Err(StepError::UnknownProcess(step.process.clone()));
    }
    let inputs = state.resolve_all(model.inputs(process));
    let outputs = model.outputs(process).to_vec();

    match step.direction {
        Direction::Forward => {
            check_declared("consumed", &step.consumed, &inputs)?;
            check_declared("produced", &step.produced, &outputs)?;
            transfer(state, &inputs, &outputs)
        }
        Direction::Reverse => {
            check_declared("consumed", &step.consumed, &outputs)?;
            check_declared("produced", &step.produced, &inputs)?;
            transfer(state, &outputs, &inputs)
        }
        Direction::Swap => {
            let (Some(target), Some(replacement)) = (&step.swap_target, &step.swap_replacement)
            else {
                return Err(StepError::InvalidSwap(
                    "swap step without target or replacement".into(),
                ));
            };
            if !model.inputs(process).contains(target) {
                return Err(StepError::InvalidSwap(format!(
                    "`{target}` is not an input of `{process}`"
                )));
            }
            if state.substitutions.contains_key(target) {
                return Err(StepError::InvalidSwap(format!(
                    "`{target}` was already replaced"
                )));
            }
            check_declared(
                "consumed",
                &step.consumed,
                std::slice::from_ref(replacement),
            )?;
            check_declared("produced", &step.produced, std::slice::from_ref(target))?;
            let missing: Vec<NodeId> = outputs
                .iter()
                .chain(std::iter::once(replacement))
                .filter(|id| !state.present.contains(*id))
                .cloned()
                .collect();
            if !missing.is_empty() {
                return Err(StepError::MissingInput(missing));
            }
            let mut next = transfer(
                state,
                std::slice::from_ref(replacement),
                std::slice::from_ref(target),
            )?;
            next.substitutions
                .insert(target.clone(), replacement.clone());
            Ok(next)
        }
    }
}

/// Replays `plan` from `state`, stopping at the first failing step.
pub fn run(plan: &Plan, state: &ExecState, model: &BiPanModel) -> Result<Trace, ExecError> {
    let actual = model_digest(model);
    if plan.model_digest != actual {
        return Err(ExecError::DigestMismatch {
            expected: plan.model_digest.clone(),
            actual,
        });
    }
    let mut entries = Vec::with_capacity(plan.steps.len());
    let mut current = state.clone();
    for (index, step) in plan.steps.iter().enumerate() {
        current = apply_step(&current, step, model).map_err(|source| ExecError::Step {
            index,
            step: step.to_string(),
            source,
        })?;
        entries.push(TraceEntry {
            step: index,
            state: current.clone(),
        });
    }
    Ok(Trace {
        start: state.clone(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::f1;
    use crate::model::{nid, ModelParts, ProductKind};
    use crate::plan::{assembly_recipe, full_disassembly, repair_plan, SkillInversion};

    fn ids(v: &[&str]) -> BTreeSet<NodeId> {
        v.iter().map(|s| nid(s)).collect()
    }

    #[test]
    fn initial_inventory_of_f1() {
        let state = initial_inventory(&f1()).unwrap();
        assert_eq!(state.present.len(), 23);
        assert!(state.present.contains("mod8"));
        assert!(!state.present.contains("stage1"));
        assert!(state.substitutions.is_empty());
    }

    #[test]
    fn initial_inventory_of_small_models() {
        let two = ModelParts::new("m")
            .product("a", "a", ProductKind::Elementary)
            .product("b", "b", ProductKind::Elementary)
            .product("f", "f", ProductKind::Final)
            .process("q", "q")
            .input("a", "q")
            .input("b", "q")
            .output("q", "f")
            .build()
            .unwrap();
        assert_eq!(initial_inventory(&two).unwrap().present, ids(&["a", "b"]));

        let one = ModelParts::new("m")
            .product("a", "a", ProductKind::Elementary)
            .product("f", "f", ProductKind::Final)
            .process("q", "q")
            .input("a", "q")
            .output("q", "f")
            .build()
            .unwrap();
        assert_eq!(initial_inventory(&one).unwrap().present, ids(&["a"]));

        let invalid = ModelParts::new("m").build().unwrap();
        assert!(matches!(
            initial_inventory(&invalid),
            Err(ExecError::InvalidModel(_))
        ));
    }

    #[test]
    fn forward_p1_from_initial() {
        let m = f1();
        let plan = assembly_recipe(&m).unwrap();
        let start = initial_inventory(&m).unwrap();
        let next = apply_step(&start, &plan.steps[0], &m).unwrap();
        let removed: BTreeSet<_> = start.present.difference(&next.present).cloned().collect();
        let added: BTreeSet<_> = next.present.difference(&start.present).cloned().collect();
        assert_eq!(removed, ids(&["screws1", "cooling", "box"]));
        assert_eq!(added, ids(&["stage1"]));
    }

    #[test]
    fn forward_p1_without_inputs() {
        let m = f1();
        let plan = assembly_recipe(&m).unwrap();
        let err =
            apply_step(&ExecState::with_items([nid("battery")]), &plan.steps[0], &m).unwrap_err();
        assert_eq!(
            err,
            StepError::MissingInput(vec![nid("box"), nid("cooling"), nid("screws1")])
        );
    }

    #[test]
    fn swap_at_stage2() {
        let m = f1();
        let (broken, repl) = (
            BTreeSet::from([nid("mod8")]),
            BTreeMap::from([(nid("mod8"), nid("mod8r"))]),
        );
        let plan = repair_plan(&m, &broken, &repl, &SkillInversion::default()).unwrap();
        let swap = &plan.steps[3];
        let state = ExecState::with_items([nid("stage2"), nid("mod8r")]);
        let next = apply_step(&state, swap, &m).unwrap();
        assert_eq!(next.present, ids(&["stage2", "mod8"]));
        assert_eq!(
            next.substitutions,
            BTreeMap::from([(nid("mod8"), nid("mod8r"))])
        );
        // stage2 must be present for the swap
        let err = apply_step(&ExecState::with_items([nid("mod8r")]), swap, &m).unwrap_err();
        assert_eq!(err, StepError::MissingInput(vec![nid("stage2")]));
    }

    #[test]
    fn run_round_trips() {
        let m = f1();
        let leaves = initial_inventory(&m).unwrap();
        let assembled = run(&assembly_recipe(&m).unwrap(), &leaves, &m).unwrap();
        assert_eq!(assembled.final_state().present, ids(&["battery"]));
        assert_eq!(assembled.len(), 5);

        let plan = full_disassembly(&m, &SkillInversion::default()).unwrap();
        let back = run(&plan, assembled.final_state(), &m).unwrap();
        assert_eq!(back.final_state(), &leaves);
    }

    #[test]
    fn empty_plan_leaves_state_alone() {
        let m = f1();
        let mut plan = assembly_recipe(&m).unwrap();
        plan.steps.clear();
        let state = ExecState::with_items([nid("whatever")]);
        let trace = run(&plan, &state, &m).unwrap();
        assert!(trace.is_empty());
        assert_eq!(trace.final_state(), &state);
    }

    #[test]
    fn digest_mismatch_and_step_index() {
        let m = f1();
        let mut plan = assembly_recipe(&m).unwrap();
        let leaves = initial_inventory(&m).unwrap();

        let edited = m
            .to_parts()
            .product("spare", "Spare", ProductKind::Elementary)
            .build()
            .unwrap();
        assert!(matches!(
            run(&plan, &leaves, &edited),
            Err(ExecError::DigestMismatch { .. })
        ));

        plan.steps.swap(1, 2);
        match run(&plan, &leaves, &m) {
            Err(ExecError::Step {
                index: 1,
                source: StepError::MissingInput(_),
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn declared_lists_are_checked() {
        let m = f1();
        let plan = assembly_recipe(&m).unwrap();
        let mut step = plan.steps[0].clone();
        step.consumed.pop();
        let err = apply_step(&initial_inventory(&m).unwrap(), &step, &m).unwrap_err();
        assert_eq!(err.code(), "step-mismatch");

        let mut step = plan.steps[0].clone();
        step.process = nid("p9");
        assert_eq!(
            apply_step(&initial_inventory(&m).unwrap(), &step, &m).unwrap_err(),
            StepError::UnknownProcess(nid("p9"))
        );
    }

    #[test]
    fn double_produce_is_reported() {
        let m = f1();
        let plan = assembly_recipe(&m).unwrap();
        let mut state = initial_inventory(&m).unwrap();
        state.present.insert(nid("stage1"));
        assert_eq!(
            apply_step(&state, &plan.steps[0], &m).unwrap_err(),
            StepError::DoubleProduce(vec![nid("stage1")])
        );
    }
}
