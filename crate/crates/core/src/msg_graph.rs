//! Message-sequence graphs.
//!
//! The graph of a window has one node per CAN id and a directed edge
//! `(a, b)` whose weight counts how many times a frame with id `a` was
//! immediately followed by a frame with id `b`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::can_log::{FrameWindow, Pid};
use thiserror::Error;

#[derive(Error, Debug, PartialEq, Eq)]
pub enum GraphError {
    #[error("window {index} has {len} frames; a graph needs at least 2")]
    WindowTooSmall { index: usize, len: usize },
}

pub type Edge = (Pid, Pid);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageSequenceGraph {
    window_index: usize,
    edges: BTreeMap<Edge, u32>,
    nodes: BTreeSet<Pid>,
}

impl MessageSequenceGraph {
    /// Builds the graph from an id sequence.
    pub fn from_pids<'a, I>(window_index: usize, pids: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = &'a Pid>,
    {
        let mut edges = BTreeMap::new();
        let mut nodes = BTreeSet::new();
        let mut prev: Option<&Pid> = None;
        let mut len = 0usize;
        for pid in pids {
            len += 1;
            if let Some(p) = prev {
                *edges.entry((p.clone(), pid.clone())).or_insert(0) += 1;
            }
            nodes.insert(pid.clone());
            prev = Some(pid);
        }
        if len < 2 {
            return Err(GraphError::WindowTooSmall { index: window_index, len });
        }
        Ok(MessageSequenceGraph { window_index, edges, nodes })
    }

    pub fn window_index(&self) -> usize {
        self.window_index
    }

    pub fn edges(&self) -> &BTreeMap<Edge, u32> {
        &self.edges
    }

    pub fn nodes(&self) -> &BTreeSet<Pid> {
        &self.nodes
    }

    pub fn count(&self, from: &Pid, to: &Pid) -> u32 {
        self.edges.get(&(from.clone(), to.clone())).copied().unwrap_or(0)
    }

    /// Sum of edge weights; one less than the number of frames.
    pub fn total(&self) -> u64 {
        self.edges.values().map(|&c| u64::from(c)).sum()
    }

    /// Graphviz rendering, one labelled edge per transition.
    pub fn to_dot(&self) -> String {
        let mut out = format!("digraph msg_{} {{\n", self.window_index);
        for n in &self.nodes {
            let _ = writeln!(out, "  \"{n}\";");
        }
        for ((a, b), c) in &self.edges {
            let _ = writeln!(out, "  \"{a}\" -> \"{b}\" [label=\"{c}\"];");
        }
        out.push_str("}\n");
        out
    }
}

/// Graph of one window.
pub fn compute_msg(window: &FrameWindow) -> Result<MessageSequenceGraph, GraphError> {
    MessageSequenceGraph::from_pids(window.index, window.pids())
}

/// Aligns two graphs on the sorted union of their edges, zero-filling
/// edges missing from one side.
pub fn edge_vectors(g1: &MessageSequenceGraph, g2: &MessageSequenceGraph) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(g1.edges.len().max(g2.edges.len()));
    let mut y = Vec::with_capacity(x.capacity());
    let mut a = g1.edges.iter().peekable();
    let mut b = g2.edges.iter().peekable();
    // Merge of two sorted maps.
    loop {
        match (a.peek(), b.peek()) {
            (Some((ka, &ca)), Some((kb, &cb))) => match ka.cmp(kb) {
                std::cmp::Ordering::Less => {
                    x.push(f64::from(ca));
                    y.push(0.0);
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    x.push(0.0);
                    y.push(f64::from(cb));
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    x.push(f64::from(ca));
                    y.push(f64::from(cb));
                    a.next();
                    b.next();
                }
            },
            (Some((_, &ca)), None) => {
                x.push(f64::from(ca));
                y.push(0.0);
                a.next();
            }
            (None, Some((_, &cb))) => {
                x.push(0.0);
                y.push(f64::from(cb));
                b.next();
            }
            (None, None) => break,
        }
    }
    (x, y)
}

/// Sorted edge union that `edge_vectors` is aligned to.
pub fn edge_union(g1: &MessageSequenceGraph, g2: &MessageSequenceGraph) -> Vec<Edge> {
    let keys: BTreeSet<&Edge> = g1.edges.keys().chain(g2.edges.keys()).collect();
    keys.into_iter().cloned().collect()
}
