//! Graphviz export of a milestone DAG.

use std::fmt::Write;

use crate::milestone::{Category, MilestoneDag, Strength};

fn colour(tags: &[Category]) -> &'static str {
    match tags.first() {
        Some(Category::Feature) => "#a6cee3",
        Some(Category::Bugfix) => "#fb9a99",
        Some(Category::Refactor) => "#b2df8a",
        Some(Category::Enhance) => "#fdbf6f",
        Some(Category::Chore) | None => "#d9d9d9",
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n"))
}

/// One statement per node and per edge. Nodes are filled by their first
/// category; ungraded ones get a dashed outline. Strong edges are solid,
/// weak edges dashed.
pub fn export_dot(mdag: &MilestoneDag) -> String {
    let mut out = String::from("digraph milestones {\n  rankdir=LR;\n");
    for m in &mdag.milestones {
        let style = if m.graded { "filled" } else { "filled,dashed" };
        let label = format!("{}\n{}", m.id, m.title);
        writeln!(
            out,
            "  {} [shape=box, style={style:?}, fillcolor={:?}, label={}];",
            quote(&m.id),
            colour(&m.tags),
            quote(&label)
        )
        .expect("writing to a String");
    }
    for e in &mdag.edges {
        let style = match e.strength {
            Strength::Strong => "solid",
            Strength::Weak => "dashed",
        };
        writeln!(out, "  {} -> {} [style={style}];", quote(&e.from), quote(&e.to)).expect("writing to a String");
    }
    out.push_str("}\n");
    out
}
