//! Typed graphs over the belief state.
//!
//! The top-level graph has one slot-dependent node (S) per informable slot
//! and one slot-independent delegate node (I) per subtask; S-nodes connect
//! only to their own delegate, delegates are fully interconnected. The
//! low-level graph adds a single subtask node (T) carrying the top-level
//! decision; delegates connect to it instead of to each other.

use serde::Serialize;

/// Node types. T appears only in low-level graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum NodeType {
    S,
    I,
    T,
}

impl NodeType {
    pub fn name(self) -> &'static str {
        match self {
            NodeType::S => "S",
            NodeType::I => "I",
            NodeType::T => "T",
        }
    }
}

/// Edge type, determined solely by the endpoint node types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct EdgeType {
    pub src: NodeType,
    pub dst: NodeType,
}

impl EdgeType {
    pub fn name(self) -> String {
        format!("{}>{}", self.src.name(), self.dst.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphNode {
    pub id: usize,
    pub ty: NodeType,
    /// Owning subtask; the T-node reports subtask 0 but belongs to all.
    pub subtask: usize,
    /// Informable-slot position for S-nodes.
    pub slot: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub ty: EdgeType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Top,
    Low,
}

/// A fixed typed graph plus incoming-edge lists.
#[derive(Debug, Clone)]
pub struct GraphSpec {
    pub kind: GraphKind,
    pub subtask_count: usize,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    /// Per node: indices into `edges` of its incoming edges.
    pub in_edges: Vec<Vec<usize>>,
}

impl GraphSpec {
    pub fn new(
        kind: GraphKind,
        subtask_count: usize,
        nodes: Vec<GraphNode>,
        edges: Vec<GraphEdge>,
    ) -> Self {
        let mut in_edges = vec![Vec::new(); nodes.len()];
        for (e, edge) in edges.iter().enumerate() {
            in_edges[edge.dst].push(e);
        }
        GraphSpec {
            kind,
            subtask_count,
            nodes,
            edges,
            in_edges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Distinct edge types present.
    pub fn edge_types(&self) -> Vec<EdgeType> {
        let mut types: Vec<EdgeType> = self.edges.iter().map(|e| e.ty).collect();
        types.sort_unstable();
        types.dedup();
        types
    }

    /// Distinct node types present.
    pub fn node_types(&self) -> Vec<NodeType> {
        let mut types: Vec<NodeType> = self.nodes.iter().map(|n| n.ty).collect();
        types.sort_unstable();
        types.dedup();
        types
    }

    /// Dense adjacency matrix (z_ij = 1 iff an edge i→j exists).
    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        let n = self.nodes.len();
        let mut z = vec![vec![0u8; n]; n];
        for e in &self.edges {
            z[e.src][e.dst] = 1;
        }
        z
    }

    /// Id of subtask k's delegate (I) node.
    pub fn i_node(&self, k: usize) -> usize {
        self.nodes
            .iter()
            .position(|n| n.ty == NodeType::I && n.subtask == k)
            .expect("every subtask has a delegate node")
    }

    /// Id of the T-node (low-level graphs only).
    pub fn t_node(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.ty == NodeType::T)
    }

    /// S-node ids of subtask k, in slot order.
    pub fn s_nodes(&self, k: usize) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.ty == NodeType::S && n.subtask == k)
            .map(|n| n.id)
            .collect()
    }
}

fn push_pair(edges: &mut Vec<GraphEdge>, nodes: &[GraphNode], a: usize, b: usize) {
    edges.push(GraphEdge {
        src: a,
        dst: b,
        ty: EdgeType {
            src: nodes[a].ty,
            dst: nodes[b].ty,
        },
    });
    edges.push(GraphEdge {
        src: b,
        dst: a,
        ty: EdgeType {
            src: nodes[b].ty,
            dst: nodes[a].ty,
        },
    });
}

fn base_nodes(slot_counts: &[usize]) -> Vec<GraphNode> {
    let mut nodes = Vec::new();
    for (k, &n) in slot_counts.iter().enumerate() {
        for j in 0..n {
            nodes.push(GraphNode {
                id: nodes.len(),
                ty: NodeType::S,
                subtask: k,
                slot: Some(j),
            });
        }
        nodes.push(GraphNode {
            id: nodes.len(),
            ty: NodeType::I,
            subtask: k,
            slot: None,
        });
    }
    nodes
}

fn add_self_loops(edges: &mut Vec<GraphEdge>, nodes: &[GraphNode]) {
    for n in nodes {
        edges.push(GraphEdge {
            src: n.id,
            dst: n.id,
            ty: EdgeType {
                src: n.ty,
                dst: n.ty,
            },
        });
    }
}

/// Top-level graph from per-subtask informable-slot counts.
pub fn build_top_graph_from_counts(slot_counts: &[usize], self_loops: bool) -> GraphSpec {
    let nodes = base_nodes(slot_counts);
    let mut edges = Vec::new();
    for k in 0..slot_counts.len() {
        let i_node = nodes
            .iter()
            .position(|n| n.ty == NodeType::I && n.subtask == k)
            .unwrap();
        for n in &nodes {
            if n.ty == NodeType::S && n.subtask == k {
                push_pair(&mut edges, &nodes, n.id, i_node);
            }
        }
    }
    // Delegates are fully interconnected.
    let delegates: Vec<usize> = nodes
        .iter()
        .filter(|n| n.ty == NodeType::I)
        .map(|n| n.id)
        .collect();
    for (a, &ia) in delegates.iter().enumerate() {
        for &ib in delegates.iter().skip(a + 1) {
            push_pair(&mut edges, &nodes, ia, ib);
        }
    }
    if self_loops {
        add_self_loops(&mut edges, &nodes);
    }
    GraphSpec::new(GraphKind::Top, slot_counts.len(), nodes, edges)
}

/// Low-level graph: S↔I within each subtask, every delegate connected to the
/// single T-node, no delegate-delegate edges.
pub fn build_low_graph_from_counts(slot_counts: &[usize], self_loops: bool) -> GraphSpec {
    let mut nodes = base_nodes(slot_counts);
    let t_id = nodes.len();
    nodes.push(GraphNode {
        id: t_id,
        ty: NodeType::T,
        subtask: 0,
        slot: None,
    });
    let mut edges = Vec::new();
    for k in 0..slot_counts.len() {
        let i_node = nodes
            .iter()
            .position(|n| n.ty == NodeType::I && n.subtask == k)
            .unwrap();
        for id in 0..t_id {
            let n = nodes[id];
            if n.ty == NodeType::S && n.subtask == k {
                push_pair(&mut edges, &nodes, n.id, i_node);
            }
        }
        push_pair(&mut edges, &nodes, i_node, t_id);
    }
    if self_loops {
        add_self_loops(&mut edges, &nodes);
    }
    GraphSpec::new(GraphKind::Low, slot_counts.len(), nodes, edges)
}

/// Top-level graph of an ontology (one S-node per informable slot).
pub fn build_top_graph(ontology: &crate::ontology::Ontology, self_loops: bool) -> GraphSpec {
    let counts: Vec<usize> = (0..ontology.subtask_count())
        .map(|k| ontology.informable_count(k))
        .collect();
    build_top_graph_from_counts(&counts, self_loops)
}

/// Low-level graph of an ontology.
pub fn build_low_graph(ontology: &crate::ontology::Ontology, self_loops: bool) -> GraphSpec {
    let counts: Vec<usize> = (0..ontology.subtask_count())
        .map(|k| ontology.informable_count(k))
        .collect();
    build_low_graph_from_counts(&counts, self_loops)
}

#[derive(Serialize)]
struct NodeDump {
    id: usize,
    #[serde(rename = "type")]
    ty: &'static str,
    subtask: usize,
    slot: Option<usize>,
}

#[derive(Serialize)]
struct EdgeDump {
    src: usize,
    dst: usize,
    #[serde(rename = "type")]
    ty: String,
}

#[derive(Serialize)]
struct GraphDump {
    version: u32,
    nodes: Vec<NodeDump>,
    edges: Vec<EdgeDump>,
}

/// Versioned JSON debug dump for visualization and tests.
pub fn graph_dump_json(graph: &GraphSpec) -> String {
    let dump = GraphDump {
        version: 1,
        nodes: graph
            .nodes
            .iter()
            .map(|n| NodeDump {
                id: n.id,
                ty: n.ty.name(),
                subtask: n.subtask,
                slot: n.slot,
            })
            .collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| EdgeDump {
                src: e.src,
                dst: e.dst,
                ty: e.ty.name(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&serde_json::to_value(&dump).unwrap()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_graph_counts_for_two_by_three() {
        let g = build_top_graph_from_counts(&[3, 3], false);
        assert_eq!(g.node_count(), 8);
        // 6 S-nodes with bidirectional delegate edges + one delegate pair.
        let si = g
            .edges
            .iter()
            .filter(|e| e.ty.src != e.ty.dst)
            .count();
        let ii = g
            .edges
            .iter()
            .filter(|e| e.ty == EdgeType { src: NodeType::I, dst: NodeType::I })
            .count();
        assert_eq!(si, 12);
        assert_eq!(ii, 2);
        assert_eq!(g.edges.len(), 14);
        assert_eq!(g.edge_types().len(), 3);
    }

    #[test]
    fn top_graph_single_subtask_has_no_delegate_edges() {
        let g = build_top_graph_from_counts(&[3], false);
        assert!(g
            .edges
            .iter()
            .all(|e| e.ty != EdgeType { src: NodeType::I, dst: NodeType::I }));
    }

    #[test]
    fn top_graph_adjacency_is_symmetric() {
        let g = build_top_graph_from_counts(&[3, 4], false);
        let z = g.adjacency();
        for i in 0..g.node_count() {
            for j in 0..g.node_count() {
                assert_eq!(z[i][j], z[j][i]);
            }
        }
    }

    #[test]
    fn self_loop_flag_yields_four_top_edge_types() {
        let g = build_top_graph_from_counts(&[3, 3], true);
        assert_eq!(g.edge_types().len(), 4);
    }

    #[test]
    fn low_graph_counts_and_types() {
        let g = build_low_graph_from_counts(&[3, 3], false);
        assert_eq!(g.node_count(), 9);
        assert_eq!(g.edge_types().len(), 4);
        // No S-T edges in either direction.
        assert!(g.edges.iter().all(|e| {
            !(matches!((e.ty.src, e.ty.dst), (NodeType::S, NodeType::T))
                || matches!((e.ty.src, e.ty.dst), (NodeType::T, NodeType::S)))
        }));
    }

    #[test]
    fn removing_t_node_disconnects_subtask_components() {
        let g = build_low_graph_from_counts(&[3, 3], false);
        let t = g.t_node().unwrap();
        // Reachability from subtask 0's delegate without passing through T.
        let start = g.i_node(0);
        let mut seen = vec![false; g.node_count()];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for e in &g.edges {
                if e.src == v && e.dst != t && !seen[e.dst] {
                    seen[e.dst] = true;
                    stack.push(e.dst);
                }
            }
        }
        assert!(!seen[g.i_node(1)], "subtasks connect only through T");
        assert!(g.s_nodes(0).iter().all(|&s| seen[s]));
    }

    #[test]
    fn graph_dump_is_versioned_json() {
        let g = build_low_graph_from_counts(&[2], false);
        let dump = graph_dump_json(&g);
        let v: serde_json::Value = serde_json::from_str(&dump).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["nodes"].as_array().unwrap().len(), 4);
        assert!(v["edges"][0]["type"].is_string());
    }
}
