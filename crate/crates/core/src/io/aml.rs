//! Import of product structure from a subset of CAEX (AutomationML) XML.
//!
//! Recognized subset:
//!
//! ```text
//! CAEXFile
//! └── SystemUnitClassLib
//!     └── SystemUnitClass
//!         └── InternalElement  (ID, Name, RefBaseSystemUnitPath)
//!             ├── Attribute Name="Position" { Attribute x | y | z -> Value }
//!             ├── Attribute Name="BiPanKind" -> Value (one of the five kinds)
//!             ├── Attribute Name=... -> Value   (copied into attributes)
//!             └── InternalElement ...           (flattened, attributes["parent"])
//! ```
//!
//! Namespaces and prefixes are ignored, so CAEX 2.x and 3.x files are both
//! accepted. Everything outside the subset is skipped.

use std::collections::{BTreeMap, BTreeSet};

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

use crate::model::{BiPanModel, ModelError, NodeId, Position, ProductKind, ProductNode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmlError {
    #[error("xml parse error at {location}: {message}")]
    XmlParse { location: String, message: String },
    #[error("unsupported root element `{0}`, expected CAEXFile")]
    UnsupportedRoot(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("non-numeric position at {element}: {axis} = {value:?}")]
    NonNumericPosition {
        element: String,
        axis: &'static str,
        value: String,
    },
}

impl AmlError {
    pub fn code(&self) -> &'static str {
        match self {
            AmlError::XmlParse { .. } => "xml-parse-error",
            AmlError::UnsupportedRoot(_) => "unsupported-root",
            AmlError::DuplicateId(_) => "duplicate-id",
            AmlError::NonNumericPosition { .. } => "non-numeric-position",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("kind conflict on {}", join(.0))]
    KindConflict(Vec<NodeId>),
    #[error("label conflict on {}", join(.0))]
    LabelConflict(Vec<NodeId>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl MergeError {
    pub fn code(&self) -> &'static str {
        match self {
            MergeError::KindConflict(_) => "kind-conflict",
            MergeError::LabelConflict(_) => "label-conflict",
            MergeError::Model(e) => e.code(),
        }
    }
}

fn join(ids: &[NodeId]) -> String {
    ids.iter()
        .map(NodeId::as_str)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Clone, Debug, PartialEq)]
pub struct FragmentProduct {
    pub node: ProductNode,
    /// Kind came from a `BiPanKind` attribute rather than the default.
    pub kind_declared: bool,
}

/// Products-only model fragment, sorted by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AmlFragment {
    pub products: Vec<FragmentProduct>,
}

impl AmlFragment {
    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ProductNode> {
        self.products
            .iter()
            .map(|p| &p.node)
            .find(|n| n.id.as_str() == id)
    }
}

/// Minimal element tree; text is the concatenated direct text content.
#[derive(Debug, Default)]
struct Element {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Element>,
    text: String,
}

impl Element {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    fn children<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.children.iter().filter(move |c| c.name == name)
    }

    fn segment(&self, position: usize) -> String {
        match self.attr("Name") {
            Some(n) => format!("{}[{}]", self.name, n),
            None => format!("{}[#{}]", self.name, position + 1),
        }
    }
}

fn line_col(bytes: &[u8], offset: usize) -> String {
    let upto = &bytes[..offset.min(bytes.len())];
    let line = upto.iter().filter(|b| **b == b'\n').count() + 1;
    let column = upto.iter().rev().take_while(|b| **b != b'\n').count() + 1;
    format!("line {line}, column {column}")
}

fn local_name(raw: &[u8]) -> String {
    let name = String::from_utf8_lossy(raw);
    match name.rsplit_once(':') {
        Some((_, local)) => local.to_string(),
        None => name.into_owned(),
    }
}

fn open(start: &BytesStart, bytes: &[u8], offset: usize) -> Result<Element, AmlError> {
    let mut attrs = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| AmlError::XmlParse {
            location: line_col(bytes, offset),
            message: e.to_string(),
        })?;
        let key = attr.key.as_ref();
        if key == b"xmlns" || key.starts_with(b"xmlns:") {
            continue;
        }
        let value = attr.unescape_value().map_err(|e| AmlError::XmlParse {
            location: line_col(bytes, offset),
            message: e.to_string(),
        })?;
        attrs.push((local_name(key), value.into_owned()));
    }
    Ok(Element {
        name: local_name(start.name().as_ref()),
        attrs,
        ..Default::default()
    })
}

fn parse_tree(bytes: &[u8]) -> Result<Element, AmlError> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    let mut buf = Vec::new();
    loop {
        let offset = reader.buffer_position() as usize;
        let err = |message: String| AmlError::XmlParse {
            location: line_col(bytes, offset),
            message,
        };
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| err(e.to_string()))?;
        match event {
            Event::Start(start) => stack.push(open(&start, bytes, offset)?),
            Event::Empty(start) => {
                let element = open(&start, bytes, offset)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(element),
                    None if root.is_none() => root = Some(element),
                    None => return Err(err("multiple root elements".into())),
                }
            }
            Event::End(_) => {
                let element = stack
                    .pop()
                    .ok_or_else(|| err("unbalanced end tag".into()))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(element),
                    None if root.is_none() => root = Some(element),
                    None => return Err(err("multiple root elements".into())),
                }
            }
            Event::Text(text) => {
                let text = text.unescape().map_err(|e| err(e.to_string()))?;
                if let Some(current) = stack.last_mut() {
                    current.text.push_str(&text);
                } else if !text.trim().is_empty() {
                    return Err(err("text outside the root element".into()));
                }
            }
            Event::CData(data) => {
                if let Some(current) = stack.last_mut() {
                    current.text.push_str(&String::from_utf8_lossy(&data));
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(AmlError::XmlParse {
            location: line_col(bytes, bytes.len()),
            message: format!("unclosed element `{}`", stack[stack.len() - 1].name),
        });
    }
    root.ok_or_else(|| AmlError::XmlParse {
        location: line_col(bytes, 0),
        message: "document has no root element".into(),
    })
}

/// Value of a CAEX attribute element: `Value`, falling back to `DefaultValue`.
fn attribute_value(attr: &Element) -> Option<String> {
    attr.children("Value")
        .chain(attr.children("DefaultValue"))
        .next()
        .map(|v| v.text.trim().to_string())
}

struct Importer {
    products: Vec<FragmentProduct>,
    seen: BTreeSet<String>,
}

impl Importer {
    fn element(
        &mut self,
        el: &Element,
        path: &str,
        parent: Option<&NodeId>,
    ) -> Result<(), AmlError> {
        let parse_err = |message: String| AmlError::XmlParse {
            location: path.to_string(),
            message,
        };
        let raw_id = el
            .attr("ID")
            .ok_or_else(|| parse_err("InternalElement without ID attribute".into()))?;
        // GUID-style ids are commonly wrapped in braces
        let trimmed = raw_id.trim().trim_start_matches('{').trim_end_matches('}');
        let id = NodeId::new(trimmed).map_err(|e| parse_err(e.to_string()))?;
        if !self.seen.insert(id.to_string()) {
            return Err(AmlError::DuplicateId(id.to_string()));
        }

        let label = el.attr("Name").unwrap_or(id.as_str()).to_string();
        let mut node = ProductNode::new(id.clone(), label, ProductKind::Elementary);
        node.type_ref = el.attr("RefBaseSystemUnitPath").map(str::to_string);
        let mut kind_declared = false;

        for (i, attr) in el
            .children
            .iter()
            .enumerate()
            .filter(|(_, c)| c.name == "Attribute")
        {
            let attr_path = format!("{path}/{}", attr.segment(i));
            let name = attr.attr("Name").ok_or_else(|| AmlError::XmlParse {
                location: attr_path.clone(),
                message: "Attribute without Name".into(),
            })?;
            match name {
                "Position" => node.position = Some(position(attr, &attr_path)?),
                "BiPanKind" => {
                    let value = attribute_value(attr).unwrap_or_default();
                    node.kind =
                        ProductKind::from_name(&value).ok_or_else(|| AmlError::XmlParse {
                            location: attr_path.clone(),
                            message: format!("unknown BiPanKind {value:?}"),
                        })?;
                    kind_declared = true;
                }
                _ => flatten_attribute(attr, name, &mut node.attributes),
            }
        }
        if let Some(parent) = parent {
            node.attributes
                .insert("parent".to_string(), parent.to_string());
        }
        self.products.push(FragmentProduct {
            node,
            kind_declared,
        });

        for (i, child) in el
            .children
            .iter()
            .enumerate()
            .filter(|(_, c)| c.name == "InternalElement")
        {
            self.element(child, &format!("{path}/{}", child.segment(i)), Some(&id))?;
        }
        Ok(())
    }
}

fn flatten_attribute(attr: &Element, name: &str, out: &mut BTreeMap<String, String>) {
    if let Some(value) = attribute_value(attr) {
        out.insert(name.to_string(), value);
    }
    for sub in attr.children("Attribute") {
        if let Some(sub_name) = sub.attr("Name") {
            flatten_attribute(sub, &format!("{name}.{sub_name}"), out);
        }
    }
}

fn position(attr: &Element, path: &str) -> Result<Position, AmlError> {
    let axis = |axis: &'static str| -> Result<f64, AmlError> {
        let raw = attr
            .children("Attribute")
            .find(|a| a.attr("Name") == Some(axis))
            .and_then(attribute_value);
        let bad = |value: String| AmlError::NonNumericPosition {
            element: path.to_string(),
            axis,
            value,
        };
        let raw = raw.ok_or_else(|| bad(String::new()))?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(bad(raw)),
        }
    };
    Ok(Position::new(axis("x")?, axis("y")?, axis("z")?))
}

/// Parses the recognized CAEX subset into a products-only fragment.
pub fn import_aml(bytes: &[u8]) -> Result<AmlFragment, AmlError> {
    let root = parse_tree(bytes)?;
    if root.name != "CAEXFile" {
        return Err(AmlError::UnsupportedRoot(root.name));
    }
    let mut importer = Importer {
        products: Vec::new(),
        seen: BTreeSet::new(),
    };
    for (li, lib) in root
        .children
        .iter()
        .enumerate()
        .filter(|(_, c)| c.name == "SystemUnitClassLib")
    {
        let lib_path = format!("/CAEXFile/{}", lib.segment(li));
        for (ci, class) in lib
            .children
            .iter()
            .enumerate()
            .filter(|(_, c)| c.name == "SystemUnitClass")
        {
            let class_path = format!("{lib_path}/{}", class.segment(ci));
            for (ei, el) in class
                .children
                .iter()
                .enumerate()
                .filter(|(_, c)| c.name == "InternalElement")
            {
                importer.element(el, &format!("{class_path}/{}", el.segment(ei)), None)?;
            }
        }
    }
    let mut products = importer.products;
    products.sort_by(|a, b| a.node.id.cmp(&b.node.id));
    Ok(AmlFragment { products })
}

/// Enriches `model` with the fragment's product data.
///
/// Matching products gain positions and attributes (and a type reference if
/// they had none); unmatched products are added as new nodes. A declared kind
/// or a label that disagrees with the model is a conflict.
pub fn merge(fragment: &AmlFragment, model: &BiPanModel) -> Result<BiPanModel, MergeError> {
    let mut parts = model.to_parts();
    let mut kind_conflicts = Vec::new();
    let mut label_conflicts = Vec::new();
    for item in &fragment.products {
        let incoming = &item.node;
        match parts.products.iter_mut().find(|p| p.id == incoming.id) {
            Some(existing) => {
                if item.kind_declared && existing.kind != incoming.kind {
                    kind_conflicts.push(incoming.id.clone());
                    continue;
                }
                if existing.label != incoming.label {
                    label_conflicts.push(incoming.id.clone());
                    continue;
                }
                if incoming.position.is_some() {
                    existing.position = incoming.position;
                }
                if existing.type_ref.is_none() {
                    existing.type_ref = incoming.type_ref.clone();
                }
                existing.attributes.extend(
                    incoming
                        .attributes
                        .iter()
                        .map(|(k, v)| (k.clone(), v.clone())),
                );
            }
            None => parts.products.push(incoming.clone()),
        }
    }
    if !kind_conflicts.is_empty() {
        return Err(MergeError::KindConflict(kind_conflicts));
    }
    if !label_conflicts.is_empty() {
        return Err(MergeError::LabelConflict(label_conflicts));
    }
    Ok(parts.build()?)
}
