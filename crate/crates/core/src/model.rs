//! Core graph data model for a bi-flow product/process/resource network.
//!
//! A [`BiPanModel`] holds typed product, process and skill nodes together with
//! flow edges (product <-> process), skill edges (process -> skill) and
//! optional fastening links. A single flow edge encodes both directions: read
//! top-down it is an assembly step, read bottom-up a disassembly step. The
//! direction only materialises once a plan is extracted.
//!
//! Models are immutable once built. Use [`ModelParts`] to assemble or edit the
//! raw node and edge lists, then [`ModelParts::build`] to resolve references.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid node id {0:?}: ids must be non-empty and match [A-Za-z0-9_.-]+")]
    InvalidId(String),
    #[error("duplicate node id `{0}`")]
    DuplicateId(NodeId),
    #[error("dangling reference `{id}`: no {expected} with this id")]
    DanglingReference { id: NodeId, expected: &'static str },
    #[error("duplicate edge {0}")]
    DuplicateEdge(String),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("node `{0}` is detached: it has no consumer and is not the final product")]
    DetachedNode(NodeId),
    #[error("flow cycle reached while walking from `{0}`")]
    Cycle(NodeId),
}

impl ModelError {
    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::InvalidId(_) => "invalid-id",
            ModelError::DuplicateId(_) => "duplicate-id",
            ModelError::DanglingReference { .. } => "dangling-reference",
            ModelError::DuplicateEdge(_) => "duplicate-edge",
            ModelError::UnknownNode(_) => "unknown-node",
            ModelError::DetachedNode(_) => "detached-node",
            ModelError::Cycle(_) => "cycle",
        }
    }
}

/// Identifier of a node, unique across all node sets of one model.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        if is_valid_id(&id) {
            Ok(NodeId(id))
        } else {
            Err(ModelError::InvalidId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Returns true when `id` is non-empty and only uses `[A-Za-z0-9_.-]`.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-'))
}

impl TryFrom<String> for NodeId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        NodeId::new(value)
    }
}

impl TryFrom<&str> for NodeId {
    type Error = ModelError;

    fn try_from(value: &str) -> Result<Self, Self::Error> {
        NodeId::new(value)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> Self {
        id.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Builds a [`NodeId`] from a literal, panicking on an invalid id.
///
/// Intended for fixtures and tests.
pub fn nid(id: &str) -> NodeId {
    NodeId::new(id).unwrap_or_else(|e| panic!("{e}"))
}

/// Role of a product within the assembly/disassembly structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProductKind {
    /// Cannot be disassembled any further.
    Elementary,
    /// Composite, but treated as atomic within this network.
    SubProduct,
    /// Secures other products (screws, bolts).
    Fastener,
    /// The finished product.
    Final,
    /// Intermediate, partially assembled product between two processes.
    Stage,
}

impl ProductKind {
    pub const ALL: [ProductKind; 5] = [
        ProductKind::Elementary,
        ProductKind::SubProduct,
        ProductKind::Fastener,
        ProductKind::Final,
        ProductKind::Stage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProductKind::Elementary => "Elementary",
            ProductKind::SubProduct => "SubProduct",
            ProductKind::Fastener => "Fastener",
            ProductKind::Final => "Final",
            ProductKind::Stage => "Stage",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Leaf kinds may be consumed but never produced.
    pub fn is_leaf_kind(self) -> bool {
        matches!(
            self,
            ProductKind::Elementary | ProductKind::SubProduct | ProductKind::Fastener
        )
    }
}

impl fmt::Display for ProductKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Position in the product coordinate system, in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductNode {
    pub id: NodeId,
    pub label: String,
    pub kind: ProductKind,
    /// Shared part type, e.g. two screw instances both typed `M6-screw`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl ProductNode {
    pub fn new(id: NodeId, label: impl Into<String>, kind: ProductKind) -> Self {
        ProductNode {
            id,
            label: label.into(),
            kind,
            type_ref: None,
            position: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_type_ref(mut self, type_ref: impl Into<String>) -> Self {
        self.type_ref = Some(type_ref.into());
        self
    }

    pub fn with_position(mut self, position: Position) -> Self {
        self.position = Some(position);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessNode {
    pub id: NodeId,
    pub label: String,
}

/// A resource skill such as `manipulation` or `screwing`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillNode {
    pub id: NodeId,
    pub label: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FlowRole {
    Input,
    Output,
}

/// Product/process link. In assembly direction an `Input` product flows into
/// the process and the process yields its `Output` product.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEdge {
    pub product: NodeId,
    pub process: NodeId,
    pub role: FlowRole,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillEdge {
    pub process: NodeId,
    pub skill: NodeId,
}

/// Declares which sibling inputs a fastener secures, and optionally which
/// skills of the common process handle it. Narrows the skill scope of swap
/// steps during repair planning.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FastensLink {
    pub fastener: NodeId,
    pub secures: BTreeSet<NodeId>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub skills: BTreeSet<NodeId>,
}

/// Unresolved node and edge lists of a model.
///
/// This is also the shape of the native document format. Lists are kept as
/// given so that duplicates can be reported by [`ModelParts::build`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParts {
    pub id: String,
    #[serde(default)]
    pub products: Vec<ProductNode>,
    #[serde(default)]
    pub processes: Vec<ProcessNode>,
    #[serde(default)]
    pub skills: Vec<SkillNode>,
    #[serde(default)]
    pub flows: Vec<FlowEdge>,
    #[serde(default)]
    pub skill_edges: Vec<SkillEdge>,
    #[serde(default)]
    pub fastens: Vec<FastensLink>,
}

impl ModelParts {
    pub fn new(id: impl Into<String>) -> Self {
        ModelParts {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn product(mut self, id: &str, label: &str, kind: ProductKind) -> Self {
        self.products.push(ProductNode::new(nid(id), label, kind));
        self
    }

    pub fn product_node(mut self, node: ProductNode) -> Self {
        self.products.push(node);
        self
    }

    pub fn process(mut self, id: &str, label: &str) -> Self {
        self.processes.push(ProcessNode {
            id: nid(id),
            label: label.to_string(),
        });
        self
    }

    pub fn skill(mut self, id: &str, label: &str) -> Self {
        self.skills.push(SkillNode {
            id: nid(id),
            label: label.to_string(),
        });
        self
    }

    /// Adds an `Input` flow from `product` into `process`.
    pub fn input(mut self, product: &str, process: &str) -> Self {
        self.flows.push(FlowEdge {
            product: nid(product),
            process: nid(process),
            role: FlowRole::Input,
        });
        self
    }

    /// Adds an `Output` flow from `process` to `product`.
    pub fn output(mut self, process: &str, product: &str) -> Self {
        self.flows.push(FlowEdge {
            product: nid(product),
            process: nid(process),
            role: FlowRole::Output,
        });
        self
    }

    pub fn requires(mut self, process: &str, skill: &str) -> Self {
        self.skill_edges.push(SkillEdge {
            process: nid(process),
            skill: nid(skill),
        });
        self
    }

    pub fn fastens(mut self, fastener: &str, secures: &[&str], skills: &[&str]) -> Self {
        self.fastens.push(FastensLink {
            fastener: nid(fastener),
            secures: secures.iter().map(|s| nid(s)).collect(),
            skills: skills.iter().map(|s| nid(s)).collect(),
        });
        self
    }

    /// Resolves all references. Structural rules beyond reference integrity
    /// are left to [`crate::validate::validate`].
    pub fn build(self) -> Result<BiPanModel, ModelError> {
        let mut seen: BTreeSet<&NodeId> = BTreeSet::new();
        let ids = self
            .products
            .iter()
            .map(|p| &p.id)
            .chain(self.processes.iter().map(|p| &p.id))
            .chain(self.skills.iter().map(|s| &s.id));
        for id in ids {
            if !seen.insert(id) {
                return Err(ModelError::DuplicateId(id.clone()));
            }
        }

        let products: BTreeMap<NodeId, ProductNode> = self
            .products
            .into_iter()
            .map(|p| (p.id.clone(), p))
            .collect();
        let processes: BTreeMap<NodeId, ProcessNode> = self
            .processes
            .into_iter()
            .map(|p| (p.id.clone(), p))
            .collect();
        let skills: BTreeMap<NodeId, SkillNode> =
            self.skills.into_iter().map(|s| (s.id.clone(), s)).collect();

        let need = |present: bool, id: &NodeId, expected: &'static str| {
            if present {
                Ok(())
            } else {
                Err(ModelError::DanglingReference {
                    id: id.clone(),
                    expected,
                })
            }
        };

        let mut flows = BTreeSet::new();
        for edge in self.flows {
            need(
                products.contains_key(&edge.product),
                &edge.product,
                "product",
            )?;
            need(
                processes.contains_key(&edge.process),
                &edge.process,
                "process",
            )?;
            if flows.contains(&edge) {
                return Err(ModelError::DuplicateEdge(format!(
                    "{:?} {} / {}",
                    edge.role, edge.product, edge.process
                )));
            }
            flows.insert(edge);
        }

        let mut skill_edges = BTreeSet::new();
        for edge in self.skill_edges {
            need(
                processes.contains_key(&edge.process),
                &edge.process,
                "process",
            )?;
            need(skills.contains_key(&edge.skill), &edge.skill, "skill")?;
            if !skill_edges.insert(edge.clone()) {
                return Err(ModelError::DuplicateEdge(format!(
                    "skill {} / {}",
                    edge.process, edge.skill
                )));
            }
        }

        let mut fastens = BTreeSet::new();
        for link in self.fastens {
            need(
                products.contains_key(&link.fastener),
                &link.fastener,
                "product",
            )?;
            for id in &link.secures {
                need(products.contains_key(id), id, "product")?;
            }
            for id in &link.skills {
                need(skills.contains_key(id), id, "skill")?;
            }
            if !fastens.insert(link.clone()) {
                return Err(ModelError::DuplicateEdge(format!(
                    "fastens {}",
                    link.fastener
                )));
            }
        }

        let index = Index::build(&flows, &skill_edges);
        Ok(BiPanModel {
            id: self.id,
            products,
            processes,
            skills,
            flows,
            skill_edges,
            fastens,
            index,
        })
    }
}

/// Adjacency derived from the edge sets. Lists are sorted by id.
#[derive(Clone, Debug, Default, PartialEq)]
struct Index {
    inputs: BTreeMap<NodeId, Vec<NodeId>>,
    outputs: BTreeMap<NodeId, Vec<NodeId>>,
    producers: BTreeMap<NodeId, Vec<NodeId>>,
    consumers: BTreeMap<NodeId, Vec<NodeId>>,
    skills: BTreeMap<NodeId, Vec<NodeId>>,
}

impl Index {
    fn build(flows: &BTreeSet<FlowEdge>, skill_edges: &BTreeSet<SkillEdge>) -> Self {
        let mut index = Index::default();
        for edge in flows {
            let (by_process, by_product) = match edge.role {
                FlowRole::Input => (&mut index.inputs, &mut index.consumers),
                FlowRole::Output => (&mut index.outputs, &mut index.producers),
            };
            by_process
                .entry(edge.process.clone())
                .or_default()
                .push(edge.product.clone());
            by_product
                .entry(edge.product.clone())
                .or_default()
                .push(edge.process.clone());
        }
        for edge in skill_edges {
            index
                .skills
                .entry(edge.process.clone())
                .or_default()
                .push(edge.skill.clone());
        }
        for list in index
            .inputs
            .values_mut()
            .chain(index.outputs.values_mut())
            .chain(index.producers.values_mut())
            .chain(index.consumers.values_mut())
            .chain(index.skills.values_mut())
        {
            list.sort();
        }
        index
    }
}

/// The bidirectional product/process/resource graph.
#[derive(Clone, Debug, PartialEq)]
pub struct BiPanModel {
    id: String,
    products: BTreeMap<NodeId, ProductNode>,
    processes: BTreeMap<NodeId, ProcessNode>,
    skills: BTreeMap<NodeId, SkillNode>,
    flows: BTreeSet<FlowEdge>,
    skill_edges: BTreeSet<SkillEdge>,
    fastens: BTreeSet<FastensLink>,
    index: Index,
}

const EMPTY: &[NodeId] = &[];

impl BiPanModel {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn products(&self) -> impl Iterator<Item = &ProductNode> {
        self.products.values()
    }

    pub fn processes(&self) -> impl Iterator<Item = &ProcessNode> {
        self.processes.values()
    }

    pub fn skills(&self) -> impl Iterator<Item = &SkillNode> {
        self.skills.values()
    }

    pub fn flows(&self) -> impl Iterator<Item = &FlowEdge> {
        self.flows.iter()
    }

    pub fn skill_edges(&self) -> impl Iterator<Item = &SkillEdge> {
        self.skill_edges.iter()
    }

    pub fn fastens(&self) -> impl Iterator<Item = &FastensLink> {
        self.fastens.iter()
    }

    pub fn product(&self, id: &str) -> Option<&ProductNode> {
        self.products.get(id)
    }

    pub fn process(&self, id: &str) -> Option<&ProcessNode> {
        self.processes.get(id)
    }

    pub fn skill(&self, id: &str) -> Option<&SkillNode> {
        self.skills.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.products.contains_key(id)
            || self.processes.contains_key(id)
            || self.skills.contains_key(id)
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty() && self.processes.is_empty() && self.skills.is_empty()
    }

    /// Input products of `process`, sorted by id.
    pub fn inputs(&self, process: &str) -> &[NodeId] {
        self.index.inputs.get(process).map_or(EMPTY, Vec::as_slice)
    }

    /// Output products of `process`; exactly one in a valid model.
    pub fn outputs(&self, process: &str) -> &[NodeId] {
        self.index.outputs.get(process).map_or(EMPTY, Vec::as_slice)
    }

    pub fn output_of(&self, process: &str) -> Option<&NodeId> {
        self.outputs(process).first()
    }

    /// All processes with an `Output` edge to `product`.
    pub fn producers(&self, product: &str) -> &[NodeId] {
        self.index
            .producers
            .get(product)
            .map_or(EMPTY, Vec::as_slice)
    }

    /// All processes with an `Input` edge from `product`.
    pub fn consumers(&self, product: &str) -> &[NodeId] {
        self.index
            .consumers
            .get(product)
            .map_or(EMPTY, Vec::as_slice)
    }

    /// Skill ids attached to `process`, sorted by id.
    pub fn process_skills(&self, process: &str) -> &[NodeId] {
        self.index.skills.get(process).map_or(EMPTY, Vec::as_slice)
    }

    /// Sorted, de-duplicated skill labels required by `process`.
    pub fn skill_labels(&self, process: &str) -> Vec<String> {
        self.process_skills(process)
            .iter()
            .filter_map(|s| self.skills.get(s))
            .map(|s| s.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    fn require_product(&self, product: &str) -> Result<&ProductNode, ModelError> {
        self.products
            .get(product)
            .ok_or_else(|| ModelError::UnknownNode(unknown_id(product)))
    }

    /// The process producing `product`, if any.
    pub fn producer_of(&self, product: &str) -> Result<Option<&NodeId>, ModelError> {
        self.require_product(product)?;
        Ok(self.producers(product).first())
    }

    /// The process consuming `product`, if any.
    pub fn consumer_of(&self, product: &str) -> Result<Option<&NodeId>, ModelError> {
        self.require_product(product)?;
        Ok(self.consumers(product).first())
    }

    /// Products of kind `Final`, sorted by id.
    pub fn finals(&self) -> Vec<&NodeId> {
        self.products
            .values()
            .filter(|p| p.kind == ProductKind::Final)
            .map(|p| &p.id)
            .collect()
    }

    /// Products without a producer, i.e. the inventory an assembly starts from.
    pub fn leaves(&self) -> Vec<&NodeId> {
        self.products
            .keys()
            .filter(|id| self.producers(id.as_str()).is_empty())
            .collect()
    }

    /// Processes from the consumer of `product` up to the process yielding the
    /// final product, ordered leaf-to-root.
    ///
    /// Assumes a validated model. The final product itself has an empty spine.
    pub fn spine(&self, product: &str) -> Result<Vec<NodeId>, ModelError> {
        let node = self.require_product(product)?;
        let mut spine = Vec::new();
        let Some(mut process) = self.consumers(product).first() else {
            return if node.kind == ProductKind::Final {
                Ok(spine)
            } else {
                Err(ModelError::DetachedNode(node.id.clone()))
            };
        };
        let mut visited = BTreeSet::new();
        loop {
            if !visited.insert(process) {
                return Err(ModelError::Cycle(node.id.clone()));
            }
            spine.push(process.clone());
            let Some(out) = self.output_of(process.as_str()) else {
                break;
            };
            match self.consumers(out.as_str()).first() {
                Some(next) => process = next,
                None => break,
            }
        }
        Ok(spine)
    }

    pub fn to_parts(&self) -> ModelParts {
        ModelParts {
            id: self.id.clone(),
            products: self.products.values().cloned().collect(),
            processes: self.processes.values().cloned().collect(),
            skills: self.skills.values().cloned().collect(),
            flows: self.flows.iter().cloned().collect(),
            skill_edges: self.skill_edges.iter().cloned().collect(),
            fastens: self.fastens.iter().cloned().collect(),
        }
    }
}

// Unknown ids may not even be syntactically valid; keep them printable.
fn unknown_id(id: &str) -> NodeId {
    NodeId(id.to_string())
}
