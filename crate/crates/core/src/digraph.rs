//! Correlated functional digraph of a candidate mapping relative to the truth.
//!
//! Nodes are G1 edges. A G2 edge that is the truth image of some G1 edge is
//! merged into that G1 edge; every other G2 edge is a standalone node. Each
//! G1 edge `e` in the working set contributes one arc `e -> pi(e)`. Because
//! both lifted maps are injective, every node has in- and out-degree at most
//! one, so the weak components are simple paths and cycles.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::align::distance;
use crate::error::{Error, Result};
use crate::model::InjectiveMapping;

/// Unordered vertex pair with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EdgeId {
    pub u: usize,
    pub v: usize,
}

impl EdgeId {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(EdgeId { u: a, v: b }),
            std::cmp::Ordering::Greater => Ok(EdgeId { u: b, v: a }),
            std::cmp::Ordering::Equal => Err(Error::domain(format!("loop edge ({a}, {a})"))),
        }
    }

    fn of(a: usize, b: usize) -> Self {
        EdgeId::new(a, b).expect("distinct endpoints")
    }
}

/// All unordered pairs of a vertex list, in lexicographic order.
pub fn pairs_of(vertices: &[usize]) -> Vec<EdgeId> {
    let mut vs = vertices.to_vec();
    vs.sort_unstable();
    let mut out = Vec::with_capacity(vs.len() * vs.len().saturating_sub(1) / 2);
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            out.push(EdgeId { u: vs[i], v: vs[j] });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Path,
    Cycle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Component {
    pub kind: ComponentKind,
    /// G1-side edges in traversal order.
    pub edges: Vec<EdgeId>,
}

impl Component {
    pub fn is_self_loop(&self) -> bool {
        self.kind == ComponentKind::Cycle && self.edges.len() == 1
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DigraphDecomposition {
    pub components: Vec<Component>,
    pub self_loop_count: usize,
    pub total_edges: usize,
}

#[derive(Serialize)]
struct DumpComponent {
    kind: ComponentKind,
    edges: Vec<[usize; 2]>,
}

#[derive(Serialize)]
struct Dump {
    components: Vec<DumpComponent>,
    self_loops: usize,
    total: usize,
}

impl DigraphDecomposition {
    /// Debug dump `{components: [{kind, edges}], self_loops, total}`.
    pub fn to_json(&self) -> String {
        let dump = Dump {
            components: self
                .components
                .iter()
                .map(|c| DumpComponent {
                    kind: c.kind,
                    edges: c.edges.iter().map(|e| [e.u, e.v]).collect(),
                })
                .collect(),
            self_loops: self.self_loop_count,
            total: self.total_edges,
        };
        serde_json::to_string(&dump).expect("plain data serializes")
    }

    /// Number of path components and cycle components (self-loops included).
    pub fn counts(&self) -> (usize, usize) {
        let paths = self.components.iter().filter(|c| c.kind == ComponentKind::Path).count();
        (paths, self.components.len() - paths)
    }
}

/// Merged-digraph node: a G1 edge (possibly merged with its truth image) or
/// a G2 edge outside the truth image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    G1(EdgeId),
    G2(EdgeId),
}

/// Induced edge map `uv -> pi(u)pi(v)` on all pairs of the domain.
pub fn lift_to_edges(pi: &InjectiveMapping) -> BTreeMap<EdgeId, EdgeId> {
    let pairs = pi.pairs();
    let mut out = BTreeMap::new();
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            out.insert(
                EdgeId { u: pairs[i].0, v: pairs[j].0 },
                EdgeId::of(pairs[i].1, pairs[j].1),
            );
        }
    }
    out
}

fn image_edge(pi: &InjectiveMapping, e: EdgeId) -> Option<EdgeId> {
    Some(EdgeId::of(pi.get(e.u)?, pi.get(e.v)?))
}

/// Node holding the G2 edge `f` after merging along the truth.
fn g2_node(truth: &InjectiveMapping, f: EdgeId) -> Node {
    match (truth.preimage(f.u), truth.preimage(f.v)) {
        (Some(a), Some(b)) => Node::G1(EdgeId::of(a, b)),
        _ => Node::G2(f),
    }
}

/// Arc list `(G1(e), node(pi(e)))` for every `e` in `edge_set`.
pub fn merged_arcs(
    pi: &InjectiveMapping,
    truth: &InjectiveMapping,
    edge_set: &[EdgeId],
) -> Result<Vec<(Node, Node)>> {
    let mut seen = BTreeSet::new();
    let mut arcs = Vec::with_capacity(edge_set.len());
    for &e in edge_set {
        if !seen.insert(e) {
            return Err(Error::domain(format!("edge ({}, {}) listed twice", e.u, e.v)));
        }
        let f = image_edge(pi, e).ok_or_else(|| {
            Error::domain(format!("edge ({}, {}) not inside the mapping's domain", e.u, e.v))
        })?;
        arcs.push((Node::G1(e), g2_node(truth, f)));
    }
    Ok(arcs)
}

/// Largest in-degree and out-degree over the merged digraph.
pub fn max_degrees(arcs: &[(Node, Node)]) -> (usize, usize) {
    let mut indeg: HashMap<Node, usize> = HashMap::new();
    let mut outdeg: HashMap<Node, usize> = HashMap::new();
    for &(a, b) in arcs {
        *outdeg.entry(a).or_default() += 1;
        *indeg.entry(b).or_default() += 1;
    }
    (
        indeg.values().copied().max().unwrap_or(0),
        outdeg.values().copied().max().unwrap_or(0),
    )
}

/// Path/cycle decomposition of the digraph restricted to `edge_set`.
pub fn build_decomposition(
    pi: &InjectiveMapping,
    truth: &InjectiveMapping,
    edge_set: &[EdgeId],
) -> Result<DigraphDecomposition> {
    let arcs = merged_arcs(pi, truth, edge_set)?;
    let mut next: HashMap<Node, Node> = HashMap::with_capacity(arcs.len());
    let mut has_pred: BTreeSet<Node> = BTreeSet::new();
    for &(a, b) in &arcs {
        next.insert(a, b);
        if !has_pred.insert(b) {
            return Err(Error::Verification("merged digraph has in-degree > 1".into()));
        }
    }

    let mut visited: BTreeSet<EdgeId> = BTreeSet::new();
    let mut components = Vec::new();

    // Paths start at sources without predecessors; iterate sources in order.
    let mut sources: Vec<EdgeId> = edge_set.to_vec();
    sources.sort_unstable();
    for &e in &sources {
        if has_pred.contains(&Node::G1(e)) {
            continue;
        }
        let mut edges = Vec::new();
        let mut cur = Node::G1(e);
        while let Some(&nx) = next.get(&cur) {
            let Node::G1(ce) = cur else { unreachable!("only G1 nodes have out-arcs") };
            visited.insert(ce);
            edges.push(ce);
            cur = nx;
        }
        components.push(Component { kind: ComponentKind::Path, edges });
    }

    // Whatever remains lies on cycles; start each at its smallest edge.
    for &e in &sources {
        if visited.contains(&e) {
            continue;
        }
        let mut edges = Vec::new();
        let mut cur = e;
        loop {
            visited.insert(cur);
            edges.push(cur);
            match next[&Node::G1(cur)] {
                Node::G1(nx) if nx == e => break,
                Node::G1(nx) => cur = nx,
                Node::G2(_) => unreachable!("a node with a predecessor chain ending in G2 is a path"),
            }
        }
        components.push(Component { kind: ComponentKind::Cycle, edges });
    }

    let self_loop_count = components.iter().filter(|c| c.is_self_loop()).count();
    Ok(DigraphDecomposition { components, self_loop_count, total_edges: edge_set.len() })
}

/// Vertices on which `pi` agrees with the truth.
pub fn agreement_set(pi: &InjectiveMapping, truth: &InjectiveMapping) -> Vec<usize> {
    pi.pairs()
        .iter()
        .filter(|&&(s, t)| truth.get(s) == Some(t))
        .map(|p| p.0)
        .collect()
}

/// Pairs of the candidate domain not contained in the agreement set.
pub fn disagreement_edges(pi: &InjectiveMapping, truth: &InjectiveMapping) -> Vec<EdgeId> {
    let agree: BTreeSet<usize> = agreement_set(pi, truth).into_iter().collect();
    pairs_of(&pi.domain())
        .into_iter()
        .filter(|e| !(agree.contains(&e.u) && agree.contains(&e.v)))
        .collect()
}

/// Decomposition over the pairs not fixed by the agreement set.
pub fn restricted_decomposition(
    pi: &InjectiveMapping,
    truth: &InjectiveMapping,
) -> Result<DigraphDecomposition> {
    if pi.len() != truth.len() {
        return Err(Error::domain(format!(
            "mapping sizes differ: {} vs {}",
            pi.len(),
            truth.len()
        )));
    }
    build_decomposition(pi, truth, &disagreement_edges(pi, truth))
}

/// Convenience: distance between the candidate and the truth.
pub fn disagreement(pi: &InjectiveMapping, truth: &InjectiveMapping) -> Result<usize> {
    distance(pi, truth)
}
