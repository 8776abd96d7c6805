use serde::Serialize;

use super::{Color, NodeId, PrefixTree};

#[derive(Debug, Clone, Serialize)]
pub struct TreeNodeDoc {
    pub id: NodeId,
    pub color: Color,
    pub parent: Option<NodeId>,
    pub merged_into: Option<NodeId>,
    pub size: u64,
    pub final_count: u64,
    /// `(symbol, count, child)` for every symbol seen at this node.
    pub transitions: Vec<(u32, u64, Option<NodeId>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeDoc {
    pub alphabet_size: usize,
    pub nodes: Vec<TreeNodeDoc>,
}

impl PrefixTree {
    pub fn to_doc(&self) -> TreeDoc {
        TreeDoc {
            alphabet_size: self.alphabet().size(),
            nodes: self
                .nodes
                .iter()
                .map(|n| TreeNodeDoc {
                    id: n.id,
                    color: n.color,
                    parent: n.parent,
                    merged_into: n.merged_into,
                    size: n.size,
                    final_count: n.final_count(),
                    transitions: self
                        .alphabet()
                        .symbols()
                        .filter(|&a| n.count(a) > 0)
                        .map(|a| (a.0, n.count(a), n.child(a)))
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(&self.to_doc())
    }

    /// Graphviz rendering of the live part of the tree.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph prefix_tree {\n");
        for n in self.nodes.iter().filter(|n| n.is_alive()) {
            let fill = match n.color {
                Color::Red => "#f4a3a3",
                Color::Blue => "#a3c4f4",
                Color::White => "#ffffff",
            };
            out.push_str(&format!(
                "  {} [label=\"{}\\nn={} f={}\", style=filled, fillcolor=\"{fill}\"];\n",
                n.id,
                n.id,
                n.size,
                n.final_count()
            ));
            for &(s, c) in n.children() {
                out.push_str(&format!(
                    "  {} -> {} [label=\"{s}:{}\"];\n",
                    n.id,
                    c,
                    n.count(s)
                ));
            }
        }
        out.push_str("}\n");
        out
    }
}
