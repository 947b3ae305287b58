//! The syntactic graph: one directed graph per sentence combining
//! word-order chain edges, dependency relations and constituency
//! structure, selected by [`FeatureFlags`].
//!
//! Edges never carry labels. A labeled dependency edge `u -(L)-> v` is
//! rewritten into a fresh node `x` with text `L` and the unlabeled
//! edges `u -> x` and `x -> v`, so the encoder can embed relation
//! labels like any other node.

use crate::corpus::{Example, TreeChild};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("cannot build a graph over an empty token list")]
    EmptySentence,
    #[error("dependency features requested but the example has no dependency parse")]
    MissingDependencyParse,
    #[error("constituency features requested but the example has no constituent tree")]
    MissingConstituencyParse,
    #[error("feature flags must enable at least one feature")]
    NoFeatures,
    #[error("malformed graph payload: {0}")]
    Malformed(String),
}

/// Which syntactic features the graph includes; ablation studies turn
/// individual features off. Defaults to all three.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureFlags {
    pub word_order: bool,
    pub dependency: bool,
    pub constituency: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        FeatureFlags::all()
    }
}

impl FeatureFlags {
    pub fn all() -> Self {
        FeatureFlags {
            word_order: true,
            dependency: true,
            constituency: true,
        }
    }

    pub fn word_order_only() -> Self {
        FeatureFlags {
            word_order: true,
            dependency: false,
            constituency: false,
        }
    }

    pub fn any(&self) -> bool {
        self.word_order || self.dependency || self.constituency
    }

    /// Short identifier such as `word_order+dependency`, used in
    /// ablation tables and manifests.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if self.word_order {
            parts.push("word_order");
        }
        if self.dependency {
            parts.push("dependency");
        }
        if self.constituency {
            parts.push("constituency");
        }
        parts.join("+")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Word,
    EdgeLabel,
    Constituent,
}

/// A node of the syntactic graph. Word nodes carry their token
/// position; label and constituent nodes do not.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub text: String,
    pub kind: NodeKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub word_index: Option<usize>,
}

/// Directed graph of word / edge-label / constituent nodes with
/// unlabeled edges. Nodes have dense ids; the edge set holds no
/// duplicates and no self-loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntacticGraph {
    nodes: Vec<GraphNode>,
    edges: BTreeSet<(usize, usize)>,
    flags: FeatureFlags,
    forward: Vec<Vec<usize>>,
    backward: Vec<Vec<usize>>,
}

/// Intermediate graph whose edges may still carry string labels; the
/// output of construction steps before label rewriting.
#[derive(Clone, Debug, Default)]
pub struct LabeledGraph {
    pub nodes: Vec<GraphNode>,
    pub unlabeled: BTreeSet<(usize, usize)>,
    pub labeled: Vec<(usize, usize, String)>,
}

impl LabeledGraph {
    fn add_node(&mut self, text: &str, kind: NodeKind, word_index: Option<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(GraphNode {
            id,
            text: text.to_string(),
            kind,
            word_index,
        });
        id
    }

    fn add_edge(&mut self, src: usize, dst: usize) {
        assert_ne!(src, dst, "self-loops are not allowed");
        self.unlabeled.insert((src, dst));
    }
}

/// Replace every labeled edge `(u, v, L)` by a fresh [`NodeKind::EdgeLabel`]
/// node `x` with text `L` plus the unlabeled edges `u -> x` and
/// `x -> v`. Each labeled edge gets its own node even when labels
/// repeat, so distinct grammatical relations never share a hub.
/// Unlabeled edges pass through untouched.
pub fn rewrite_labeled_edges(g: LabeledGraph, flags: FeatureFlags) -> SyntacticGraph {
    let LabeledGraph {
        mut nodes,
        mut unlabeled,
        labeled,
    } = g;
    for (src, dst, label) in labeled {
        let id = nodes.len();
        nodes.push(GraphNode {
            id,
            text: label,
            kind: NodeKind::EdgeLabel,
            word_index: None,
        });
        unlabeled.insert((src, id));
        unlabeled.insert((id, dst));
    }
    SyntacticGraph::from_parts(nodes, unlabeled, flags)
}

impl SyntacticGraph {
    fn from_parts(
        nodes: Vec<GraphNode>,
        edges: BTreeSet<(usize, usize)>,
        flags: FeatureFlags,
    ) -> Self {
        let mut forward = vec![Vec::new(); nodes.len()];
        let mut backward = vec![Vec::new(); nodes.len()];
        for &(src, dst) in &edges {
            forward[src].push(dst);
            backward[dst].push(src);
        }
        // BTreeSet iteration leaves `forward` sorted; sort `backward`
        // so neighbour iteration order never depends on insertion.
        for list in &mut backward {
            list.sort_unstable();
        }
        SyntacticGraph {
            nodes,
            edges,
            flags,
            forward,
            backward,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &GraphNode {
        &self.nodes[id]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.edges.contains(&(src, dst))
    }

    pub fn flags(&self) -> FeatureFlags {
        self.flags
    }

    /// Nodes that `v` directs to, in ascending id order.
    pub fn neighbors_forward(&self, v: usize) -> &[usize] {
        &self.forward[v]
    }

    /// Nodes that direct to `v`, in ascending id order.
    pub fn neighbors_backward(&self, v: usize) -> &[usize] {
        &self.backward[v]
    }
}

/// Build the syntactic graph for an example under the given feature
/// flags:
///
/// * one word node per token, ids matching token positions;
/// * word order: edges `i -> i+1` and `i+1 -> i` for adjacent tokens;
/// * dependency: a labeled edge head -> dependent per non-ROOT arc,
///   immediately rewritten through an edge-label node (ROOT arcs add
///   nothing);
/// * constituency: one constituent node per non-terminal and a
///   parent -> child edge per tree link, children at the frontier
///   being word nodes.
pub fn build_syntactic_graph(ex: &Example, flags: FeatureFlags) -> Result<SyntacticGraph, GraphError> {
    if !flags.any() {
        return Err(GraphError::NoFeatures);
    }
    if ex.tokens.is_empty() {
        return Err(GraphError::EmptySentence);
    }
    if flags.dependency && ex.dep.is_none() {
        return Err(GraphError::MissingDependencyParse);
    }
    if flags.constituency && ex.cons.is_none() {
        return Err(GraphError::MissingConstituencyParse);
    }

    let mut g = LabeledGraph::default();
    for tok in &ex.tokens {
        g.add_node(&tok.surface, NodeKind::Word, Some(tok.index));
    }
    if flags.word_order {
        for i in 0..ex.tokens.len() - 1 {
            g.add_edge(i, i + 1);
            g.add_edge(i + 1, i);
        }
    }
    if flags.dependency {
        let dep = ex.dep.as_ref().expect("checked above");
        for arc in dep.non_root_arcs() {
            let head = arc.head.expect("non-root arc has a head");
            g.labeled.push((head, arc.dependent, arc.label.clone()));
        }
    }
    // Rewrite dependency labels before adding constituent nodes so
    // label-node ids come right after the word nodes.
    let mut graph = rewrite_labeled_edges(g, flags);
    if flags.constituency {
        let tree = ex.cons.as_ref().expect("checked above");
        let mut nodes = graph.nodes;
        let mut edges = graph.edges;
        let base = nodes.len();
        for nt in 0..tree.non_terminal_count() {
            nodes.push(GraphNode {
                id: base + nt,
                text: tree.label(nt).to_string(),
                kind: NodeKind::Constituent,
                word_index: None,
            });
        }
        for nt in 0..tree.non_terminal_count() {
            for child in tree.children(nt) {
                let dst = match child {
                    TreeChild::Leaf(tok) => *tok,
                    TreeChild::NonTerminal(c) => base + *c,
                };
                edges.insert((base + nt, dst));
            }
        }
        graph = SyntacticGraph::from_parts(nodes, edges, flags);
    }
    Ok(graph)
}

// ---------------------------------------------------------------------------
// Serialization: one JSON object per graph with stable field order.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    nodes: Vec<GraphNode>,
    edges: Vec<(usize, usize)>,
    flags: FeatureFlags,
}

/// One-line JSON rendering with nodes, edges and flags.
pub fn serialize_graph(g: &SyntacticGraph) -> String {
    let repr = GraphRepr {
        nodes: g.nodes.clone(),
        edges: g.edges.iter().copied().collect(),
        flags: g.flags,
    };
    serde_json::to_string(&repr).expect("graph serialization cannot fail")
}

/// Inverse of [`serialize_graph`], validating ids, edge endpoints,
/// self-loops, duplicates and the word-index convention.
pub fn deserialize_graph(text: &str) -> Result<SyntacticGraph, GraphError> {
    let repr: GraphRepr =
        serde_json::from_str(text).map_err(|e| GraphError::Malformed(e.to_string()))?;
    for (i, node) in repr.nodes.iter().enumerate() {
        if node.id != i {
            return Err(GraphError::Malformed(format!(
                "node ids must be dense, found {} at position {i}",
                node.id
            )));
        }
        let has_index = node.word_index.is_some();
        if (node.kind == NodeKind::Word) != has_index {
            return Err(GraphError::Malformed(format!(
                "node {i}: word_index present iff the node is a word node"
            )));
        }
    }
    let mut edges = BTreeSet::new();
    for &(src, dst) in &repr.edges {
        if src >= repr.nodes.len() || dst >= repr.nodes.len() {
            return Err(GraphError::Malformed(format!(
                "edge ({src}, {dst}) points outside the node set"
            )));
        }
        if src == dst {
            return Err(GraphError::Malformed(format!("self-loop at node {src}")));
        }
        if !edges.insert((src, dst)) {
            return Err(GraphError::Malformed(format!(
                "duplicate edge ({src}, {dst})"
            )));
        }
    }
    Ok(SyntacticGraph::from_parts(repr.nodes, edges, repr.flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_bracketed_tree, parse_conllu, parse_parallel_corpus};
    use proptest::prelude::*;

    fn example(q: &str) -> Example {
        parse_parallel_corpus(&format!("{q}\tanswer ( x )"))
            .unwrap()
            .remove(0)
    }

    #[test]
    fn word_order_only_two_tokens() {
        let g = build_syntactic_graph(&example("list jobs"), FeatureFlags::word_order_only()).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 2);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
    }

    #[test]
    fn figure_sentence_word_order_counts() {
        // 18 tokens -> 18 word nodes and 2*(18-1) = 34 chain edges.
        let q = "what are the jobs for programmer that has salary 50000 \
                 that uses c++ and not related with AI";
        let g = build_syntactic_graph(&example(q), FeatureFlags::word_order_only()).unwrap();
        assert_eq!(g.node_count(), 18);
        assert_eq!(g.edge_count(), 34);
    }

    #[test]
    fn dependency_arc_becomes_label_node() {
        let mut ex = example("the jobs");
        ex.dep = Some(parse_conllu("1 the 2 det\n2 jobs 0 root").unwrap());
        let flags = FeatureFlags {
            word_order: true,
            dependency: true,
            constituency: false,
        };
        let g = build_syntactic_graph(&ex, flags).unwrap();
        // Nodes: the, jobs, det. Edges: two word-order plus jobs->det->the.
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 4);
        let det = g.node(2);
        assert_eq!(det.kind, NodeKind::EdgeLabel);
        assert_eq!(det.text, "det");
        assert_eq!(det.word_index, None);
        assert!(g.has_edge(1, 2), "head -> label");
        assert!(g.has_edge(2, 0), "label -> dependent");
    }

    #[test]
    fn root_arcs_add_no_edges() {
        let mut ex = example("jobs");
        ex.dep = Some(parse_conllu("1 jobs 0 root").unwrap());
        let flags = FeatureFlags {
            word_order: true,
            dependency: true,
            constituency: false,
        };
        let g = build_syntactic_graph(&ex, flags).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn constituency_adds_parent_child_edges() {
        let mut ex = example("the jobs");
        ex.cons = Some(parse_bracketed_tree("(NP (DT the) (NNS jobs))").unwrap());
        let flags = FeatureFlags {
            word_order: false,
            dependency: false,
            constituency: true,
        };
        let g = build_syntactic_graph(&ex, flags).unwrap();
        // 2 words + 3 non-terminals; 4 tree edges.
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.edge_count(), 4);
        let kinds: Vec<_> = g.nodes().iter().map(|n| n.kind).collect();
        assert_eq!(
            kinds,
            vec![
                NodeKind::Word,
                NodeKind::Word,
                NodeKind::Constituent,
                NodeKind::Constituent,
                NodeKind::Constituent
            ]
        );
        // Pre-terminals point at their word nodes.
        assert!(g.has_edge(2, 0) || g.has_edge(3, 0));
    }

    #[test]
    fn rewrite_gives_each_labeled_edge_its_own_node() {
        let mut g = LabeledGraph::default();
        g.add_node("a", NodeKind::Word, Some(0));
        g.add_node("b", NodeKind::Word, Some(1));
        g.add_node("c", NodeKind::Word, Some(2));
        g.labeled.push((0, 1, "det".to_string()));
        g.labeled.push((1, 2, "det".to_string()));
        let rewritten = rewrite_labeled_edges(g, FeatureFlags::all());
        assert_eq!(rewritten.node_count(), 5);
        assert_eq!(rewritten.edge_count(), 4);
        let labels: Vec<_> = rewritten
            .nodes()
            .iter()
            .filter(|n| n.kind == NodeKind::EdgeLabel)
            .collect();
        assert_eq!(labels.len(), 2, "label nodes are per-edge, never shared");
        assert!(labels.iter().all(|n| n.text == "det"));
    }

    #[test]
    fn rewrite_without_labels_is_identity_on_counts() {
        let mut g = LabeledGraph::default();
        g.add_node("a", NodeKind::Word, Some(0));
        g.add_node("b", NodeKind::Word, Some(1));
        g.add_edge(0, 1);
        let rewritten = rewrite_labeled_edges(g, FeatureFlags::word_order_only());
        assert_eq!(rewritten.node_count(), 2);
        assert_eq!(rewritten.edge_count(), 1);
    }

    #[test]
    fn neighbor_queries_match_definitions() {
        let g = build_syntactic_graph(&example("a b"), FeatureFlags::word_order_only()).unwrap();
        assert_eq!(g.neighbors_forward(0), &[1]);
        assert_eq!(g.neighbors_backward(0), &[1]);

        let mut ex = example("x");
        ex.dep = Some(parse_conllu("1 x 0 root").unwrap());
        let g = build_syntactic_graph(
            &ex,
            FeatureFlags {
                word_order: true,
                dependency: true,
                constituency: false,
            },
        )
        .unwrap();
        assert!(g.neighbors_forward(0).is_empty());
        assert!(g.neighbors_backward(0).is_empty());
    }

    #[test]
    fn empty_sentence_and_missing_parses_error() {
        let mut empty = example("x");
        empty.tokens.clear();
        assert!(matches!(
            build_syntactic_graph(&empty, FeatureFlags::word_order_only()),
            Err(GraphError::EmptySentence)
        ));
        assert!(matches!(
            build_syntactic_graph(&example("a b"), FeatureFlags::all()),
            Err(GraphError::MissingDependencyParse)
        ));
        let no_flags = FeatureFlags {
            word_order: false,
            dependency: false,
            constituency: false,
        };
        assert!(matches!(
            build_syntactic_graph(&example("a b"), no_flags),
            Err(GraphError::NoFeatures)
        ));
    }

    #[test]
    fn every_node_reachable_from_a_word_node_with_all_features() {
        // With all three features on and well-formed parses, label and
        // constituent nodes always attach to the word backbone.
        let data = crate::toy::generate(40, 0, 19);
        for ex in &data.train.examples {
            let g = build_syntactic_graph(ex, FeatureFlags::all()).unwrap();
            let mut seen = vec![false; g.node_count()];
            let mut stack: Vec<usize> = g
                .nodes()
                .iter()
                .filter(|n| n.kind == NodeKind::Word)
                .map(|n| n.id)
                .collect();
            for &s in &stack {
                seen[s] = true;
            }
            while let Some(v) = stack.pop() {
                for &u in g.neighbors_forward(v).iter().chain(g.neighbors_backward(v)) {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            assert!(
                seen.iter().all(|s| *s),
                "unreachable node in graph for {:?}",
                ex.surfaces()
            );
        }
    }

    #[test]
    fn serialize_roundtrip_empty_edges_and_truncation() {
        let g = build_syntactic_graph(&example("solo"), FeatureFlags::word_order_only()).unwrap();
        assert_eq!(g.edge_count(), 0);
        let text = serialize_graph(&g);
        assert_eq!(deserialize_graph(&text).unwrap(), g);

        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            deserialize_graph(truncated),
            Err(GraphError::Malformed(_))
        ));
    }

    prop_compose! {
        fn arb_graph()(n in 1usize..12)(
            n in Just(n),
            edges in proptest::collection::btree_set((0..n, 0..n), 0..30)
        ) -> SyntacticGraph {
            let nodes: Vec<GraphNode> = (0..n).map(|id| GraphNode {
                id,
                text: format!("w{id}"),
                kind: NodeKind::Word,
                word_index: Some(id),
            }).collect();
            let edges: BTreeSet<(usize, usize)> =
                edges.into_iter().filter(|(a, b)| a != b).collect();
            SyntacticGraph::from_parts(nodes, edges, FeatureFlags::word_order_only())
        }
    }

    proptest! {
        #[test]
        fn adjacency_duality(g in arb_graph()) {
            // b in forward(a) iff a in backward(b), checked both ways.
            for (a, b) in g.edges() {
                prop_assert!(g.neighbors_forward(a).contains(&b));
                prop_assert!(g.neighbors_backward(b).contains(&a));
            }
            for v in 0..g.node_count() {
                for &u in g.neighbors_forward(v) {
                    prop_assert!(g.neighbors_backward(u).contains(&v));
                }
                for &u in g.neighbors_backward(v) {
                    prop_assert!(g.neighbors_forward(u).contains(&v));
                }
            }
        }

        #[test]
        fn serialization_roundtrips(g in arb_graph()) {
            let text = serialize_graph(&g);
            let back = deserialize_graph(&text).unwrap();
            prop_assert_eq!(g, back);
        }
    }
}
