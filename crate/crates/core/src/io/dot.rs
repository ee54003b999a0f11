//! Graphviz DOT rendering.
//!
//! Products are red circles shaded by kind, processes green boxes, skills blue
//! rounded boxes. Flow edges are black and drawn in assembly direction; skill
//! edges are dashed with a yellow marker. An optional plan is overlaid as
//! numbered red edges, one per step.

use std::fmt::Write;

use crate::model::{BiPanModel, FlowRole, ProductKind};
use crate::plan::{Direction, Plan};

fn fill(kind: ProductKind) -> &'static str {
    match kind {
        ProductKind::Final => "#b71c1c",
        ProductKind::Stage => "#e57373",
        ProductKind::SubProduct => "#ef9a9a",
        ProductKind::Fastener => "#ff8a80",
        ProductKind::Elementary => "#ffcdd2",
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Deterministic DOT text for `model`, optionally overlaid with `plan`.
pub fn export_dot(model: &BiPanModel, plan: Option<&Plan>) -> String {
    let mut out = String::new();
    // writing into a String cannot fail
    let _ = render(&mut out, model, plan);
    out
}

fn render(out: &mut String, model: &BiPanModel, plan: Option<&Plan>) -> std::fmt::Result {
    writeln!(out, "digraph {} {{", quote(model.id()))?;
    writeln!(out, "  rankdir=TB;")?;
    writeln!(out, "  node [fontname=\"Helvetica\", fontsize=10];")?;
    writeln!(out, "  edge [fontname=\"Helvetica\", fontsize=9];")?;

    writeln!(out, "  // products")?;
    for p in model.products() {
        let font = if p.kind == ProductKind::Final {
            "white"
        } else {
            "black"
        };
        writeln!(
            out,
            "  {} [label={}, shape=circle, style=filled, fillcolor=\"{}\", fontcolor={}, tooltip={}];",
            quote(p.id.as_str()),
            quote(&p.label),
            fill(p.kind),
            font,
            quote(p.kind.name()),
        )?;
    }
    writeln!(out, "  // processes")?;
    for p in model.processes() {
        writeln!(
            out,
            "  {} [label={}, shape=box, style=filled, fillcolor=\"#a5d6a7\"];",
            quote(p.id.as_str()),
            quote(&p.label),
        )?;
    }
    writeln!(out, "  // skills")?;
    for s in model.skills() {
        writeln!(
            out,
            "  {} [label={}, shape=box, style=\"rounded,filled\", fillcolor=\"#90caf9\"];",
            quote(s.id.as_str()),
            quote(&s.label),
        )?;
    }

    writeln!(out, "  // flows")?;
    for e in model.flows() {
        let (from, to) = match e.role {
            FlowRole::Input => (&e.product, &e.process),
            FlowRole::Output => (&e.process, &e.product),
        };
        writeln!(
            out,
            "  {} -> {} [color=black];",
            quote(from.as_str()),
            quote(to.as_str())
        )?;
    }
    writeln!(out, "  // skill edges")?;
    for e in model.skill_edges() {
        writeln!(
            out,
            "  {} -> {} [style=dashed, color=\"#fbc02d\", arrowhead=dot];",
            quote(e.process.as_str()),
            quote(e.skill.as_str())
        )?;
    }

    if let Some(plan) = plan {
        writeln!(out, "  // plan overlay")?;
        for (i, step) in plan.steps.iter().enumerate() {
            let number = i + 1;
            let process = step.process.as_str();
            let (from, to, label) = match step.direction {
                Direction::Forward => {
                    let output = model.output_of(process).map_or(process, |o| o.as_str());
                    (process, output, format!("{number} forward"))
                }
                Direction::Reverse => {
                    let output = model.output_of(process).map_or(process, |o| o.as_str());
                    (output, process, format!("{number} reverse"))
                }
                Direction::Swap => {
                    let target = step.swap_target.as_ref().map_or(process, |t| t.as_str());
                    let replacement = step.swap_replacement.as_ref().map_or("?", |r| r.as_str());
                    (
                        process,
                        target,
                        format!("{number} swap {target} -> {replacement}"),
                    )
                }
            };
            writeln!(
                out,
                "  {} -> {} [color=red, penwidth=2, constraint=false, label={}];",
                quote(from),
                quote(to),
                quote(&label)
            )?;
        }
    }
    writeln!(out, "}}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::f1;
    use crate::model::ModelParts;

    #[test]
    fn empty_model_is_an_empty_digraph() {
        let dot = export_dot(&ModelParts::new("empty").build().unwrap(), None);
        assert!(dot.starts_with("digraph \"empty\" {\n"));
        assert!(dot.ends_with("}\n"));
        assert!(!dot.contains("->"));
    }

    #[test]
    fn f1_counts() {
        let dot = export_dot(&f1(), None);
        let count = |needle: &str| dot.lines().filter(|l| l.contains(needle)).count();
        assert_eq!(count("shape=circle"), 28);
        assert_eq!(count("shape=box, style=filled"), 5);
        assert_eq!(count("style=\"rounded,filled\""), 3);
        assert_eq!(count("[color=black]"), 32);
        assert_eq!(count("style=dashed"), 10);
        assert_eq!(dot, export_dot(&f1(), None));
    }

    #[test]
    fn quoting() {
        assert_eq!(quote(r#"a "b" \c"#), r#""a \"b\" \\c""#);
    }
}
