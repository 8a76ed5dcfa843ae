use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::QueryModality;
use crate::tensor::Var;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    BasicScene,
    BasicFace,
    BasicText,
    IndirectScene,
    IndirectFace,
    IndirectText,
    DirectAudioScene,
    DirectAudioFace,
    DirectAudioText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeTier {
    Basic,
    Indirect,
    Direct,
}

impl NodeKind {
    pub fn new(tier: NodeTier, modality: QueryModality) -> Self {
        use NodeKind::*;
        use QueryModality as Q;
        match (tier, modality) {
            (NodeTier::Basic, Q::Scene) => BasicScene,
            (NodeTier::Basic, Q::Face) => BasicFace,
            (NodeTier::Basic, Q::Text) => BasicText,
            (NodeTier::Indirect, Q::Scene) => IndirectScene,
            (NodeTier::Indirect, Q::Face) => IndirectFace,
            (NodeTier::Indirect, Q::Text) => IndirectText,
            (NodeTier::Direct, Q::Scene) => DirectAudioScene,
            (NodeTier::Direct, Q::Face) => DirectAudioFace,
            (NodeTier::Direct, Q::Text) => DirectAudioText,
        }
    }

    pub fn tier(self) -> NodeTier {
        use NodeKind::*;
        match self {
            BasicScene | BasicFace | BasicText => NodeTier::Basic,
            IndirectScene | IndirectFace | IndirectText => NodeTier::Indirect,
            DirectAudioScene | DirectAudioFace | DirectAudioText => NodeTier::Direct,
        }
    }

    /// For direct audio nodes, the modality of the query that matched them.
    pub fn modality(self) -> QueryModality {
        use NodeKind::*;
        match self {
            BasicScene | IndirectScene | DirectAudioScene => QueryModality::Scene,
            BasicFace | IndirectFace | DirectAudioFace => QueryModality::Face,
            BasicText | IndirectText | DirectAudioText => QueryModality::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Basic,
    Indirect,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Beg,
    Ieg,
    Deg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub kind: NodeKind,
    pub source_record_id: Option<u64>,
}

/// Undirected edge between node indices `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
}

/// Node and edge structure of an emotion graph, independent of features.
///
/// Node order: basic (scene, face, text), then indirect scene/face/text in
/// rank order, then direct audio in the same modality-rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub stage: Stage,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl Topology {
    pub fn basic() -> Self {
        let nodes = QueryModality::ALL
            .iter()
            .map(|&m| GraphNode { kind: NodeKind::new(NodeTier::Basic, m), source_record_id: None })
            .collect();
        let edges =
            [(0, 1), (0, 2), (1, 2)].into_iter().map(|(a, b)| GraphEdge { a, b, kind: EdgeKind::Basic }).collect();
        Topology { stage: Stage::Beg, nodes, edges }
    }

    /// Index of the basic node of `m`; always 0, 1, 2 for scene, face, text.
    pub fn basic_index(m: QueryModality) -> usize {
        m.index()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|e| e.a == i || e.b == i).count()
    }

    pub fn count_edges(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Row-major `n×n` neighborhood mask: edges in both directions plus
    /// self-loops.
    pub fn attention_mask(&self) -> Vec<bool> {
        let n = self.nodes.len();
        let mut mask = vec![false; n * n];
        for i in 0..n {
            mask[i * n + i] = true;
        }
        for e in &self.edges {
            mask[e.a * n + e.b] = true;
            mask[e.b * n + e.a] = true;
        }
        mask
    }

    /// Checks edge-kind legality and stage composition.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::State(msg));
        let kinds: Vec<NodeKind> = self.nodes.iter().map(|n| n.kind).collect();
        for m in QueryModality::ALL {
            let want = NodeKind::new(NodeTier::Basic, m);
            if kinds.iter().filter(|&&k| k == want).count() != 1 || kinds.get(m.index()) != Some(&want) {
                return bad(format!("graph must hold exactly one {want:?} at index {}", m.index()));
            }
        }
        let max_tier = match self.stage {
            Stage::Beg => NodeTier::Basic,
            Stage::Ieg => NodeTier::Indirect,
            Stage::Deg => NodeTier::Direct,
        };
        if let Some(k) = kinds.iter().find(|k| k.tier() > max_tier) {
            return bad(format!("{k:?} node in a {:?} graph", self.stage));
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.a >= kinds.len() || e.b >= kinds.len() || e.a == e.b {
                return bad(format!("edge {e:?} out of range or a self-loop"));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return bad(format!("duplicate edge {e:?}"));
            }
            let (ka, kb) = (kinds[e.a], kinds[e.b]);
            let ok = match e.kind {
                EdgeKind::Basic => ka.tier() == NodeTier::Basic && kb.tier() == NodeTier::Basic,
                EdgeKind::Indirect | EdgeKind::Direct => {
                    let tier = if e.kind == EdgeKind::Indirect { NodeTier::Indirect } else { NodeTier::Direct };
                    let pair = |x: NodeKind, y: NodeKind| {
                        x.tier() == tier && y.tier() == NodeTier::Basic && x.modality() == y.modality()
                    };
                    pair(ka, kb) || pair(kb, ka)
                }
            };
            if !ok {
                return bad(format!("{:?} edge between {ka:?} and {kb:?}", e.kind));
            }
        }
        Ok(())
    }
}

/// Topology plus per-node features (an `n×d_h` matrix on a tape).
#[derive(Debug, Clone)]
pub struct EmotionGraph {
    pub topology: Topology,
    pub features: Var,
    pub encoded: bool,
    /// Per layer and head, the `n×n` attention weights of the last encode.
    pub attention: Vec<Var>,
}

impl EmotionGraph {
    pub fn stage(&self) -> Stage {
        self.topology.stage
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.topology.edge_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_triangle() {
        let t = Topology::basic();
        t.validate().unwrap();
        assert_eq!((t.node_count(), t.edge_count()), (3, 3));
        assert!((0..3).all(|i| t.degree(i) == 2));
        assert!(t.is_connected());
    }

    #[test]
    fn illegal_edges_rejected() {
        let mut t = Topology::basic();
        t.stage = Stage::Ieg;
        t.nodes.push(GraphNode { kind: NodeKind::IndirectFace, source_record_id: Some(1) });
        t.edges.push(GraphEdge { a: 0, b: 3, kind: EdgeKind::Indirect });
        assert!(t.validate().is_err());
        t.edges.pop();
        t.edges.push(GraphEdge { a: 1, b: 3, kind: EdgeKind::Direct });
        assert!(t.validate().is_err());
        t.edges.pop();
        t.edges.push(GraphEdge { a: 3, b: 1, kind: EdgeKind::Indirect });
        t.validate().unwrap();
        t.stage = Stage::Beg;
        assert!(t.validate().is_err());
    }

    #[test]
    fn mask_has_self_loops_and_symmetry() {
        let mut t = Topology::basic();
        t.stage = Stage::Ieg;
        t.nodes.push(GraphNode { kind: NodeKind::IndirectScene, source_record_id: None });
        t.edges.push(GraphEdge { a: 0, b: 3, kind: EdgeKind::Indirect });
        let m = t.attention_mask();
        let n = 4;
        for i in 0..n {
            assert!(m[i * n + i]);
            for j in 0..n {
                assert_eq!(m[i * n + j], m[j * n + i]);
            }
        }
        assert!(!m[3 * n + 1]);
    }

    #[test]
    fn disconnected_detected() {
        let mut t = Topology::basic();
        t.nodes.push(GraphNode { kind: NodeKind::IndirectScene, source_record_id: None });
        assert!(!t.is_connected());
    }
}
