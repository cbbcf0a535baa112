//! Labeled digraphs, pointed digraphs, backward bisimulation and bounded
//! backward unraveling.
//!
//! Nodes are addressed by their position in [`Digraph::nodes`]; the original
//! string ids are kept for serialization and error messages.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node within its digraph.
pub type NodeIx = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed graph document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("empty node set")]
    EmptyNodeSet,
    #[error("nodes[{index}]: duplicate node id {id:?}")]
    DuplicateNode { index: usize, id: String },
    #[error("labels.{node}: label width {found}, expected {expected}")]
    LabelWidth {
        node: String,
        found: usize,
        expected: usize,
    },
    #[error("labels.{node}: invalid label {label:?} (only '0' and '1' allowed)")]
    LabelChars { node: String, label: String },
    #[error("labels: node {0:?} has no label")]
    MissingLabel(String),
    #[error("labels.{0}: label for undeclared node")]
    LabelForUnknownNode(String),
    #[error("edges[{index}]: endpoint {id:?} is not a declared node")]
    UndeclaredEndpoint { index: usize, id: String },
    #[error("edges[{index}]: duplicate edge {src:?}->{dst:?}")]
    DuplicateEdge {
        index: usize,
        src: String,
        dst: String,
    },
    #[error("unknown node id {0:?}")]
    UnknownNode(String),
    #[error("bit-width mismatch: {0} vs {1}")]
    BitWidthMismatch(usize, usize),
}

/// A fixed-width bit label. Position `i` is bit `i` of the label, written
/// left to right in the serialized form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(Vec<bool>);

impl Label {
    pub fn new(bits: Vec<bool>) -> Self {
        Label(bits)
    }

    /// The label of width `width` whose big-endian reading is `value`.
    pub fn from_index(value: usize, width: usize) -> Self {
        Label(
            (0..width)
                .map(|i| (value >> (width - 1 - i)) & 1 == 1)
                .collect(),
        )
    }

    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Label)
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Big-endian integer value; the inverse of [`Label::from_index`].
    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Serialized form of a [`Digraph`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub bits: usize,
    pub nodes: Vec<String>,
    pub labels: BTreeMap<String, String>,
    pub edges: Vec<(String, String)>,
}

/// A finite, nonempty, node-labeled directed graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    bits: usize,
    nodes: Vec<String>,
    labels: Vec<Label>,
    /// Sorted, duplicate-free.
    edges: Vec<(NodeIx, NodeIx)>,
    in_edges: Vec<Vec<usize>>,
    index: HashMap<String, NodeIx>,
}

impl Digraph {
    /// Builds a digraph from node ids, labels (parallel to `nodes`) and
    /// edges given as index pairs.
    pub fn new(
        bits: usize,
        nodes: Vec<String>,
        labels: Vec<Label>,
        edges: impl IntoIterator<Item = (NodeIx, NodeIx)>,
    ) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::EmptyNodeSet);
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, id) in nodes.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode {
                    index: i,
                    id: id.clone(),
                });
            }
        }
        assert_eq!(labels.len(), nodes.len(), "one label per node");
        for (id, label) in nodes.iter().zip(&labels) {
            if label.width() != bits {
                return Err(GraphError::LabelWidth {
                    node: id.clone(),
                    found: label.width(),
                    expected: bits,
                });
            }
        }
        let edges: BTreeSet<(NodeIx, NodeIx)> = edges.into_iter().collect();
        for &(u, v) in &edges {
            assert!(
                u < nodes.len() && v < nodes.len(),
                "edge index out of range"
            );
        }
        Ok(Self::assemble(
            bits,
            nodes,
            labels,
            edges.into_iter().collect(),
            index,
        ))
    }

    fn assemble(
        bits: usize,
        nodes: Vec<String>,
        labels: Vec<Label>,
        edges: Vec<(NodeIx, NodeIx)>,
        index: HashMap<String, NodeIx>,
    ) -> Self {
        let mut in_edges = vec![Vec::new(); nodes.len()];
        for (e, &(_, v)) in edges.iter().enumerate() {
            in_edges[v].push(e);
        }
        Digraph {
            bits,
            nodes,
            labels,
            edges,
            in_edges,
            index,
        }
    }

    pub fn from_doc(doc: GraphDoc) -> Result<Self, GraphError> {
        if doc.nodes.is_empty() {
            return Err(GraphError::EmptyNodeSet);
        }
        let mut index = HashMap::with_capacity(doc.nodes.len());
        for (i, id) in doc.nodes.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode {
                    index: i,
                    id: id.clone(),
                });
            }
        }
        for id in doc.labels.keys() {
            if !index.contains_key(id) {
                return Err(GraphError::LabelForUnknownNode(id.clone()));
            }
        }
        let mut labels = Vec::with_capacity(doc.nodes.len());
        for id in &doc.nodes {
            let raw = doc
                .labels
                .get(id)
                .ok_or_else(|| GraphError::MissingLabel(id.clone()))?;
            let label = Label::parse(raw).ok_or_else(|| GraphError::LabelChars {
                node: id.clone(),
                label: raw.clone(),
            })?;
            if label.width() != doc.bits {
                return Err(GraphError::LabelWidth {
                    node: id.clone(),
                    found: label.width(),
                    expected: doc.bits,
                });
            }
            labels.push(label);
        }
        let mut edges = BTreeSet::new();
        for (i, (src, dst)) in doc.edges.iter().enumerate() {
            let lookup = |id: &String| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| GraphError::UndeclaredEndpoint {
                        index: i,
                        id: id.clone(),
                    })
            };
            let (u, v) = (lookup(src)?, lookup(dst)?);
            if !edges.insert((u, v)) {
                return Err(GraphError::DuplicateEdge {
                    index: i,
                    src: src.clone(),
                    dst: dst.clone(),
                });
            }
        }
        Ok(Self::assemble(
            doc.bits,
            doc.nodes,
            labels,
            edges.into_iter().collect(),
            index,
        ))
    }

    /// Parses the JSON graph document format.
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        Self::from_doc(serde_json::from_str(text)?)
    }

    pub fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            bits: self.bits,
            nodes: self.nodes.clone(),
            labels: self
                .nodes
                .iter()
                .zip(&self.labels)
                .map(|(id, l)| (id.clone(), l.to_string()))
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|&(u, v)| (self.nodes[u].clone(), self.nodes[v].clone()))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("graph documents always serialize")
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_id(&self, v: NodeIx) -> &str {
        &self.nodes[v]
    }

    pub fn node_index(&self, id: &str) -> Result<NodeIx, GraphError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn label(&self, v: NodeIx) -> &Label {
        &self.labels[v]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Edges in sorted order; an edge's position here is its edge index.
    pub fn edges(&self) -> &[(NodeIx, NodeIx)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, u: NodeIx, v: NodeIx) -> bool {
        self.edges.binary_search(&(u, v)).is_ok()
    }

    /// Edge indices of the edges entering `v`.
    pub fn in_edges(&self, v: NodeIx) -> &[usize] {
        &self.in_edges[v]
    }

    /// Sources of the edges entering `v`, in ascending order.
    pub fn in_neighbors(&self, v: NodeIx) -> impl Iterator<Item = NodeIx> + '_ {
        self.in_edges[v].iter().map(move |&e| self.edges[e].0)
    }

    /// The incoming neighbors of the node named `v`.
    pub fn incoming(&self, v: &str) -> Result<BTreeSet<&str>, GraphError> {
        let v = self.node_index(v)?;
        Ok(self
            .in_neighbors(v)
            .map(|u| self.nodes[u].as_str())
            .collect())
    }

    pub fn edge_key(&self, e: usize) -> String {
        let (u, v) = self.edges[e];
        format!("{}->{}", self.nodes[u], self.nodes[v])
    }
}

/// A digraph with a distinguished node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointedDigraph {
    pub graph: Digraph,
    pub point: NodeIx,
}

impl PointedDigraph {
    pub fn new(graph: Digraph, point: &str) -> Result<Self, GraphError> {
        let point = graph.node_index(point)?;
        Ok(PointedDigraph { graph, point })
    }

    pub fn at(graph: Digraph, point: NodeIx) -> Self {
        assert!(point < graph.node_count(), "point out of range");
        PointedDigraph { graph, point }
    }

    pub fn point_id(&self) -> &str {
        self.graph.node_id(self.point)
    }
}

/// Decides whether two pointed digraphs are backward bisimilar.
///
/// Computes the largest backward bisimulation between the two graphs by
/// pair deletion: start from all label-equal pairs and drop pairs whose
/// incoming edges cannot be matched, until nothing changes.
pub fn backward_bisimilar(a: &PointedDigraph, b: &PointedDigraph) -> Result<bool, GraphError> {
    let rel = largest_backward_bisimulation(&a.graph, &b.graph)?;
    Ok(rel[a.point][b.point])
}

/// The largest backward bisimulation between `g` and `h`, as a relation
/// matrix indexed `[node of g][node of h]`.
pub fn largest_backward_bisimulation(
    g: &Digraph,
    h: &Digraph,
) -> Result<Vec<Vec<bool>>, GraphError> {
    if g.bits != h.bits {
        return Err(GraphError::BitWidthMismatch(g.bits, h.bits));
    }
    let mut rel: Vec<Vec<bool>> = (0..g.node_count())
        .map(|v| {
            (0..h.node_count())
                .map(|w| g.label(v) == h.label(w))
                .collect()
        })
        .collect();
    loop {
        let mut changed = false;
        for v in 0..g.node_count() {
            for w in 0..h.node_count() {
                if !rel[v][w] {
                    continue;
                }
                let forth = g
                    .in_neighbors(v)
                    .all(|u| h.in_neighbors(w).any(|x| rel[u][x]));
                let back = h
                    .in_neighbors(w)
                    .all(|x| g.in_neighbors(v).any(|u| rel[u][x]));
                if !(forth && back) {
                    rel[v][w] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(rel);
        }
    }
}

/// Unravels `p` backwards up to `depth` levels.
///
/// Tree nodes at levels `< depth` correspond to backward paths from the
/// point. Every path reaching level `depth` ends in a fresh copy of the
/// whole original graph, entered at the node the path reached. The result
/// is pointed at the root and is backward bisimilar to `p`.
pub fn backward_unravel(p: &PointedDigraph, depth: usize) -> PointedDigraph {
    struct Builder<'a> {
        g: &'a Digraph,
        depth: usize,
        nodes: Vec<String>,
        labels: Vec<Label>,
        edges: Vec<(NodeIx, NodeIx)>,
        copies: usize,
    }

    impl Builder<'_> {
        fn attach_copy(&mut self, at: NodeIx) -> NodeIx {
            let base = self.nodes.len();
            let c = self.copies;
            self.copies += 1;
            for (v, id) in self.g.nodes().iter().enumerate() {
                self.nodes.push(format!("c{c}:{id}"));
                self.labels.push(self.g.label(v).clone());
            }
            for &(u, v) in self.g.edges() {
                self.edges.push((base + u, base + v));
            }
            base + at
        }

        fn build(&mut self, orig: NodeIx, level: usize) -> NodeIx {
            if level == self.depth {
                return self.attach_copy(orig);
            }
            let me = self.nodes.len();
            self.nodes.push(format!("t{me}:{}", self.g.node_id(orig)));
            self.labels.push(self.g.label(orig).clone());
            let preds: Vec<NodeIx> = self.g.in_neighbors(orig).collect();
            for u in preds {
                let child = self.build(u, level + 1);
                self.edges.push((child, me));
            }
            me
        }
    }

    let mut b = Builder {
        g: &p.graph,
        depth,
        nodes: Vec::new(),
        labels: Vec::new(),
        edges: Vec::new(),
        copies: 0,
    };
    let root = b.build(p.point, 0);
    let graph = Digraph::new(p.graph.bits, b.nodes, b.labels, b.edges)
        .expect("unraveling preserves digraph invariants");
    PointedDigraph::at(graph, root)
}

/// Number of digraphs produced by [`enumerate_digraphs`].
pub fn digraph_count(max_nodes: usize, bits: usize) -> u128 {
    (1..=max_nodes).map(|m| 1u128 << (m * m + bits * m)).sum()
}

/// Every digraph on nodes `n0..n{m-1}` for `1 <= m <= max_nodes`, every edge
/// subset and every labeling. Ordered by node count, then edge mask, then
/// labeling. No isomorphism reduction.
pub fn enumerate_digraphs(max_nodes: usize, bits: usize) -> DigraphEnumeration {
    assert!(max_nodes >= 1, "max_nodes must be positive");
    assert!(
        max_nodes * max_nodes + bits * max_nodes < 64,
        "enumeration space too large"
    );
    DigraphEnumeration {
        max_nodes,
        bits,
        nodes: 1,
        edge_mask: 0,
        label_mask: 0,
    }
}

#[derive(Debug, Clone)]
pub struct DigraphEnumeration {
    max_nodes: usize,
    bits: usize,
    nodes: usize,
    edge_mask: u64,
    label_mask: u64,
}

impl Iterator for DigraphEnumeration {
    type Item = Digraph;

    fn next(&mut self) -> Option<Digraph> {
        if self.nodes > self.max_nodes {
            return None;
        }
        let m = self.nodes;
        let g = digraph_from_masks(m, self.bits, self.edge_mask, self.label_mask);
        self.label_mask += 1;
        if self.label_mask == 1 << (self.bits * m) {
            self.label_mask = 0;
            self.edge_mask += 1;
            if self.edge_mask == 1 << (m * m) {
                self.edge_mask = 0;
                self.nodes += 1;
            }
        }
        Some(g)
    }
}

/// Builds the digraph on `n0..n{m-1}` whose edge `(u, v)` is present iff bit
/// `u * m + v` of `edge_mask` is set, and whose node `v` carries the label
/// read from bits `v * bits ..` of `label_mask`.
pub fn digraph_from_masks(m: usize, bits: usize, edge_mask: u64, label_mask: u64) -> Digraph {
    let nodes: Vec<String> = (0..m).map(|i| format!("n{i}")).collect();
    let labels = (0..m)
        .map(|v| {
            let chunk = (label_mask >> (v * bits)) as usize & ((1usize << bits) - 1);
            Label::from_index(chunk, bits)
        })
        .collect();
    let edges = (0..m)
        .flat_map(|u| (0..m).map(move |v| (u, v)))
        .filter(|&(u, v)| edge_mask >> (u * m + v) & 1 == 1);
    Digraph::new(bits, nodes, labels, edges).expect("generated digraphs are valid")
}

/// A digraph on `m` nodes with each ordered pair present independently with
/// probability `edge_p` and uniform labels.
pub fn random_digraph<R: Rng + ?Sized>(rng: &mut R, m: usize, bits: usize, edge_p: f64) -> Digraph {
    let nodes: Vec<String> = (0..m).map(|i| format!("n{i}")).collect();
    let labels = (0..m)
        .map(|_| Label::new((0..bits).map(|_| rng.gen_bool(0.5)).collect()))
        .collect();
    let mut edges = Vec::new();
    for u in 0..m {
        for v in 0..m {
            if rng.gen_bool(edge_p) {
                edges.push((u, v));
            }
        }
    }
    Digraph::new(bits, nodes, labels, edges).expect("generated digraphs are valid")
}
