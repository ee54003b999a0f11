//! Structural well-formedness checks.
//!
//! [`validate`] runs a fixed list of checks and returns every finding; an
//! empty [`Diagnostics`] means the model is valid. Cascading findings are
//! reported as-is.
//!
//! | code | severity | finding |
//! |------|----------|---------|
//! | V001 | error    | process without exactly one output product |
//! | V002 | error    | process without input products |
//! | V003 | error    | product with more than one producer or consumer |
//! | V004 | error    | not exactly one final product |
//! | V005 | error    | final product is consumed or has no producer |
//! | V006 | error    | stage lacking a producer or a consumer |
//! | V007 | error    | elementary/sub-product/fastener with a producer |
//! | V008 | error    | cycle in the flow graph |
//! | V009 | warning  | process without skills |
//! | V010 | warning  | node unreachable from the final product |
//! | V011 | error    | fastening link whose endpoints are not co-inputs of one process |
//! | V012 | error    | position with a non-finite component |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::model::{BiPanModel, FlowRole, NodeId, ProductKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Code {
    V001,
    V002,
    V003,
    V004,
    V005,
    V006,
    V007,
    V008,
    V009,
    V010,
    V011,
    V012,
}

impl Code {
    pub const ALL: [Code; 12] = [
        Code::V001,
        Code::V002,
        Code::V003,
        Code::V004,
        Code::V005,
        Code::V006,
        Code::V007,
        Code::V008,
        Code::V009,
        Code::V010,
        Code::V011,
        Code::V012,
    ];

    pub fn severity(self) -> Severity {
        match self {
            Code::V009 | Code::V010 => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: Code,
    pub severity: Severity,
    pub nodes: Vec<NodeId>,
    pub message: String,
}

impl Diagnostic {
    fn new(code: Code, nodes: Vec<NodeId>, message: String) -> Self {
        Diagnostic {
            code,
            severity: code.severity(),
            nodes,
            message,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.code, self.severity)?;
        if !self.nodes.is_empty() {
            let nodes: Vec<&str> = self.nodes.iter().map(NodeId::as_str).collect();
            write!(f, " [{}]", nodes.join(", "))?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Findings sorted by code, then first node id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub items: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.items.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.items
            .iter()
            .filter(|d| d.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn codes(&self) -> BTreeSet<Code> {
        self.items.iter().map(|d| d.code).collect()
    }

    /// True when some finding carries `code` and mentions `node`.
    pub fn contains(&self, code: Code, node: &str) -> bool {
        self.items
            .iter()
            .any(|d| d.code == code && d.nodes.iter().any(|n| n.as_str() == node))
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.items {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Runs every check over `model`.
pub fn validate(model: &BiPanModel) -> Diagnostics {
    let mut items = Vec::new();
    check_processes(model, &mut items);
    check_products(model, &mut items);
    check_finals(model, &mut items);
    check_cycles(model, &mut items);
    check_reachability(model, &mut items);
    check_fastens(model, &mut items);
    items.sort_by(|a, b| (a.code, a.nodes.first()).cmp(&(b.code, b.nodes.first())));
    Diagnostics { items }
}

fn check_processes(model: &BiPanModel, out: &mut Vec<Diagnostic>) {
    for process in model.processes() {
        let id = &process.id;
        let outputs = model.outputs(id.as_str());
        if outputs.len() != 1 {
            out.push(Diagnostic::new(
                Code::V001,
                vec![id.clone()],
                format!("process has {} output products, expected 1", outputs.len()),
            ));
        }
        if model.inputs(id.as_str()).is_empty() {
            out.push(Diagnostic::new(
                Code::V002,
                vec![id.clone()],
                "process has no input products".into(),
            ));
        }
        if model.process_skills(id.as_str()).is_empty() {
            out.push(Diagnostic::new(
                Code::V009,
                vec![id.clone()],
                "process has no skill requirements".into(),
            ));
        }
    }
}

fn check_products(model: &BiPanModel, out: &mut Vec<Diagnostic>) {
    for product in model.products() {
        let id = product.id.as_str();
        let producers = model.producers(id).len();
        let consumers = model.consumers(id).len();
        if producers > 1 || consumers > 1 {
            out.push(Diagnostic::new(
                Code::V003,
                vec![product.id.clone()],
                format!("product has {producers} producers and {consumers} consumers, at most one of each allowed"),
            ));
        }
        match product.kind {
            ProductKind::Final => {
                if consumers > 0 || producers == 0 {
                    out.push(Diagnostic::new(
                        Code::V005,
                        vec![product.id.clone()],
                        format!("final product must have a producer and no consumer (producers: {producers}, consumers: {consumers})"),
                    ));
                }
            }
            ProductKind::Stage => {
                if producers == 0 || consumers == 0 {
                    out.push(Diagnostic::new(
                        Code::V006,
                        vec![product.id.clone()],
                        format!("stage must have a producer and a consumer (producers: {producers}, consumers: {consumers})"),
                    ));
                }
            }
            kind => {
                if producers > 0 {
                    out.push(Diagnostic::new(
                        Code::V007,
                        vec![product.id.clone()],
                        format!("{kind} product must not be produced by a process"),
                    ));
                }
            }
        }
        if product.position.is_some_and(|p| !p.is_finite()) {
            out.push(Diagnostic::new(
                Code::V012,
                vec![product.id.clone()],
                "position has a non-finite component".into(),
            ));
        }
    }
}

fn check_finals(model: &BiPanModel, out: &mut Vec<Diagnostic>) {
    let finals = model.finals();
    if finals.len() != 1 {
        out.push(Diagnostic::new(
            Code::V004,
            finals.iter().map(|id| (*id).clone()).collect(),
            format!(
                "model has {} final products, expected exactly 1",
                finals.len()
            ),
        ));
    }
}

fn check_cycles(model: &BiPanModel, out: &mut Vec<Diagnostic>) {
    let mut graph: DiGraph<&NodeId, ()> = DiGraph::new();
    let mut index: BTreeMap<&NodeId, NodeIndex> = BTreeMap::new();
    for id in model
        .products()
        .map(|p| &p.id)
        .chain(model.processes().map(|p| &p.id))
    {
        index.insert(id, graph.add_node(id));
    }
    for edge in model.flows() {
        let (product, process) = (index[&edge.product], index[&edge.process]);
        match edge.role {
            FlowRole::Input => graph.add_edge(product, process, ()),
            FlowRole::Output => graph.add_edge(process, product, ()),
        };
    }
    for component in tarjan_scc(&graph) {
        // bipartite graph: no self loops, so a cycle spans at least two nodes
        if component.len() > 1 {
            let mut nodes: Vec<NodeId> = component.iter().map(|ix| graph[*ix].clone()).collect();
            nodes.sort();
            out.push(Diagnostic::new(
                Code::V008,
                nodes,
                "flow graph contains a cycle".into(),
            ));
        }
    }
}

fn check_reachability(model: &BiPanModel, out: &mut Vec<Diagnostic>) {
    // Without any final product every node would be reported; V004 covers it.
    let finals = model.finals();
    if finals.is_empty() {
        return;
    }
    let mut reached: BTreeSet<&NodeId> = BTreeSet::new();
    let mut stack: Vec<&NodeId> = finals;
    while let Some(product) = stack.pop() {
        if !reached.insert(product) {
            continue;
        }
        for process in model.producers(product.as_str()) {
            if reached.insert(process) {
                reached.extend(model.process_skills(process.as_str()));
                stack.extend(model.inputs(process.as_str()));
            }
        }
    }
    let all = model
        .products()
        .map(|p| &p.id)
        .chain(model.processes().map(|p| &p.id))
        .chain(model.skills().map(|s| &s.id));
    for id in all {
        if !reached.contains(id) {
            out.push(Diagnostic::new(
                Code::V010,
                vec![id.clone()],
                "node is unreachable from the final product".into(),
            ));
        }
    }
}

fn check_fastens(model: &BiPanModel, out: &mut Vec<Diagnostic>) {
    for link in model.fastens() {
        let mut nodes = vec![link.fastener.clone()];
        nodes.extend(link.secures.iter().cloned());
        let problem = fastens_problem(model, link);
        if let Some(problem) = problem {
            out.push(Diagnostic::new(Code::V011, nodes, problem));
        }
    }
}

fn fastens_problem(model: &BiPanModel, link: &crate::model::FastensLink) -> Option<String> {
    let fastener = link.fastener.as_str();
    if model.product(fastener).map(|p| p.kind) != Some(ProductKind::Fastener) {
        return Some("fastening link must start at a Fastener product".into());
    }
    if link.secures.is_empty() {
        return Some("fastening link secures nothing".into());
    }
    if link.secures.contains(fastener) {
        return Some("fastener cannot secure itself".into());
    }
    let common = model.consumers(fastener).iter().find(|process| {
        let inputs = model.inputs(process.as_str());
        link.secures.iter().all(|s| inputs.contains(s))
    });
    let Some(process) = common else {
        return Some("fastener and secured products are not inputs of one common process".into());
    };
    let skills = model.process_skills(process.as_str());
    if let Some(skill) = link.skills.iter().find(|s| !skills.contains(s)) {
        return Some(format!(
            "skill `{skill}` is not required by the common process `{process}`"
        ));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::f1;
    use crate::model::{nid, FlowEdge, ModelParts, Position};

    fn edit(f: impl FnOnce(&mut ModelParts)) -> BiPanModel {
        let mut parts = f1().to_parts();
        f(&mut parts);
        parts.build().unwrap()
    }

    fn drop_flow(parts: &mut ModelParts, product: &str, process: &str, role: FlowRole) {
        let before = parts.flows.len();
        parts.flows.retain(|e| {
            !(e.product.as_str() == product && e.process.as_str() == process && e.role == role)
        });
        assert_eq!(parts.flows.len(), before - 1);
    }

    fn rekind(parts: &mut ModelParts, product: &str, kind: ProductKind) {
        parts
            .products
            .iter_mut()
            .find(|p| p.id.as_str() == product)
            .unwrap()
            .kind = kind;
    }

    #[test]
    fn f1_is_valid() {
        let diags = validate(&f1());
        assert!(diags.is_empty(), "{diags}");
    }

    #[test]
    fn removing_stage4_input_flags_v006() {
        let m = edit(|p| drop_flow(p, "stage4", "p5", FlowRole::Input));
        let diags = validate(&m);
        assert!(diags.contains(Code::V006, "stage4"), "{diags}");
        assert!(!diags.codes().contains(&Code::V002));
        // the upstream island is reported as unreachable
        assert!(diags.contains(Code::V010, "p4"));
        assert!(diags.contains(Code::V010, "connect"));
        assert!(!diags.contains(Code::V010, "cover"));
    }

    #[test]
    fn rekinding_final_to_stage() {
        let m = edit(|p| rekind(p, "battery", ProductKind::Stage));
        let diags = validate(&m);
        assert_eq!(diags.codes(), BTreeSet::from([Code::V004, Code::V006]));
        assert!(diags.contains(Code::V006, "battery"));
        assert_eq!(diags.items.len(), 2);
    }

    #[test]
    fn missing_output_is_v001() {
        let m = edit(|p| drop_flow(p, "stage1", "p1", FlowRole::Output));
        let diags = validate(&m);
        assert!(diags.contains(Code::V001, "p1"));
    }

    #[test]
    fn two_consumers_is_v003() {
        let m = edit(|p| {
            p.flows.push(FlowEdge {
                product: nid("mod1"),
                process: nid("p3"),
                role: FlowRole::Input,
            })
        });
        assert!(validate(&m).contains(Code::V003, "mod1"));
    }

    #[test]
    fn produced_leaf_is_v007() {
        let m = edit(|p| rekind(p, "stage1", ProductKind::Elementary));
        let diags = validate(&m);
        assert!(diags.contains(Code::V007, "stage1"));
    }

    #[test]
    fn consumed_final_closes_a_cycle() {
        let m = edit(|p| {
            p.flows.push(FlowEdge {
                product: nid("battery"),
                process: nid("p1"),
                role: FlowRole::Input,
            })
        });
        let diags = validate(&m);
        assert!(diags.contains(Code::V008, "p1"));
        assert!(diags.contains(Code::V005, "battery"));
        let cycle = diags.items.iter().find(|d| d.code == Code::V008).unwrap();
        // battery, p1..p5, stage1..stage4
        assert_eq!(cycle.nodes.len(), 10);
    }

    #[test]
    fn skill_less_process_warns() {
        let m = edit(|p| p.skill_edges.retain(|e| e.process.as_str() != "p4"));
        let diags = validate(&m);
        assert!(diags.contains(Code::V009, "p4"));
        assert!(!diags.has_errors());
    }

    #[test]
    fn fastens_links() {
        let ok = edit(|p| {
            *p = std::mem::take(p).fastens("bolts1", &["mod8"], &["screw"]);
        });
        assert!(validate(&ok).is_empty());

        let wrong_process = edit(|p| {
            *p = std::mem::take(p).fastens("bolts1", &["brace1"], &[]);
        });
        assert!(validate(&wrong_process).contains(Code::V011, "bolts1"));

        let not_fastener = edit(|p| {
            *p = std::mem::take(p).fastens("bms", &["mod8"], &[]);
        });
        assert!(validate(&not_fastener).contains(Code::V011, "bms"));

        let foreign_skill = edit(|p| {
            *p = std::mem::take(p).fastens("screws2", &["cover"], &["connect"]);
        });
        assert!(validate(&foreign_skill).contains(Code::V011, "screws2"));
    }

    #[test]
    fn non_finite_position_is_v012() {
        let m = edit(|p| {
            p.products[0].position = Some(Position::new(0.0, f64::NAN, 1.0));
        });
        let first = f1().products().next().unwrap().id.clone();
        assert!(validate(&m).contains(Code::V012, first.as_str()));
    }

    #[test]
    fn empty_model_reports_v004_only() {
        let m = ModelParts::new("empty").build().unwrap();
        let diags = validate(&m);
        assert_eq!(diags.codes(), BTreeSet::from([Code::V004]));
        assert!(diags.items[0].nodes.is_empty());
    }

    #[test]
    fn ordering_is_deterministic() {
        let m = edit(|p| drop_flow(p, "stage4", "p5", FlowRole::Input));
        let a = validate(&m);
        let b = validate(&m);
        assert_eq!(a, b);
        let keys: Vec<_> = a.items.iter().map(|d| (d.code, d.nodes.first())).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
