//! Social community graph and degree-centrality based popularity ranking.
//!
//! Centrality of a node is its degree divided by `n - 1`, the largest
//! possible number of direct connections inside a community of `n` nodes.
//! The ranking derived from it decides which sender is served first and
//! which single flow carries the top-popularity flag.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::{FlowId, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum SocialGraphError {
    #[error("self-loop on node {0:?} is not allowed")]
    SelfLoop(NodeId),
    #[error("edge references unknown node {0:?}")]
    UnknownNode(NodeId),
    #[error("community has {0} nodes; centrality needs at least 2")]
    CommunityTooSmall(usize),
    #[error("popularity profile needs at least one flow")]
    NoFlows,
}

/// Undirected community graph. Immutable once built; safe to share.
#[derive(Debug, Clone)]
pub struct SocialGraph {
    node_count: usize,
    edges: BTreeSet<(NodeId, NodeId)>,
    degree: Vec<u32>,
}

impl SocialGraph {
    /// Builds a graph over nodes `0..node_count` from an undirected edge
    /// list. Reversed duplicates collapse onto one edge; self-loops are
    /// rejected.
    pub fn build(
        node_count: usize,
        edge_list: &[(NodeId, NodeId)],
    ) -> Result<Self, SocialGraphError> {
        let mut edges = BTreeSet::new();
        let mut degree = vec![0u32; node_count];
        for &(a, b) in edge_list {
            if a == b {
                return Err(SocialGraphError::SelfLoop(a));
            }
            for node in [a, b] {
                if node.index() >= node_count {
                    return Err(SocialGraphError::UnknownNode(node));
                }
            }
            let key = if a < b { (a, b) } else { (b, a) };
            if edges.insert(key) {
                degree[a.index()] += 1;
                degree[b.index()] += 1;
            }
        }
        Ok(Self {
            node_count,
            edges,
            degree,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, node: NodeId) -> Result<u32, SocialGraphError> {
        self.degree
            .get(node.index())
            .copied()
            .ok_or(SocialGraphError::UnknownNode(node))
    }

    /// Degree centrality of `node`: direct connections over `n - 1`.
    /// Always in `[0, 1]`; exactly 1 iff the node touches every other node.
    pub fn degree_centrality(&self, node: NodeId) -> Result<f64, SocialGraphError> {
        if self.node_count < 2 {
            return Err(SocialGraphError::CommunityTooSmall(self.node_count));
        }
        let degree = self.degree(node)?;
        Ok(f64::from(degree) / (self.node_count as f64 - 1.0))
    }
}

/// Per-flow centrality values plus the popularity ranking derived from them.
///
/// Exactly one flow carries the top-popularity flag; ties in centrality are
/// broken toward the lower flow id so replays stay bit-identical.
#[derive(Debug, Clone)]
pub struct PopularityProfile {
    centrality: Vec<f64>,
    rank: Vec<FlowId>,
}

impl PopularityProfile {
    /// Computes centralities for `flows` (flow index -> community node) and
    /// ranks them by decreasing centrality.
    pub fn compute(graph: &SocialGraph, flows: &[NodeId]) -> Result<Self, SocialGraphError> {
        if flows.is_empty() {
            return Err(SocialGraphError::NoFlows);
        }
        let centrality = flows
            .iter()
            .map(|&node| graph.degree_centrality(node))
            .collect::<Result<Vec<_>, _>>()?;
        let mut rank: Vec<FlowId> = (0..flows.len() as u32).map(FlowId).collect();
        rank.sort_by(|&a, &b| {
            centrality[b.index()]
                .total_cmp(&centrality[a.index()])
                .then(a.cmp(&b))
        });
        Ok(Self { centrality, rank })
    }

    /// Builds a profile from already-known centralities. Used by tests and
    /// by synthetic sweep scenarios.
    pub fn from_centralities(centrality: Vec<f64>) -> Result<Self, SocialGraphError> {
        if centrality.is_empty() {
            return Err(SocialGraphError::NoFlows);
        }
        let mut rank: Vec<FlowId> = (0..centrality.len() as u32).map(FlowId).collect();
        rank.sort_by(|&a, &b| {
            centrality[b.index()]
                .total_cmp(&centrality[a.index()])
                .then(a.cmp(&b))
        });
        Ok(Self { centrality, rank })
    }

    pub fn flow_count(&self) -> usize {
        self.centrality.len()
    }

    pub fn centrality(&self, flow: FlowId) -> f64 {
        self.centrality[flow.index()]
    }

    pub fn centralities(&self) -> &[f64] {
        &self.centrality
    }

    /// Flow ids ordered by decreasing popularity.
    pub fn ranked(&self) -> &[FlowId] {
        &self.rank
    }

    /// The single most popular flow.
    pub fn top(&self) -> FlowId {
        self.rank[0]
    }

    /// True only for the most popular flow.
    pub fn is_top(&self, flow: FlowId) -> bool {
        self.rank[0] == flow
    }
}
