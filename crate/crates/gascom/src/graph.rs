//! Discussion trees: rooted trees of labeled posts with reply edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque post identifier, unique within one discussion.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Binary class. `Pos` means "support" for polarity and "hate" for hate speech.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Pos => 0,
            Label::Neg => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PostNode {
    pub id: NodeId,
    #[serde(rename = "parent_id")]
    pub parent: Option<NodeId>,
    pub text: String,
    pub label: Option<Label>,
}

/// A validated discussion tree. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Discussion {
    pub discussion_id: String,
    root: NodeId,
    nodes: BTreeMap<NodeId, PostNode>,
    children: BTreeMap<NodeId, Vec<NodeId>>,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: malformed record: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },
    #[error("discussion {discussion}: duplicate node id {id}")]
    DuplicateId { discussion: String, id: NodeId },
    #[error("discussion {discussion}: node {id} references missing parent {parent}")]
    DanglingParent {
        discussion: String,
        id: NodeId,
        parent: NodeId,
    },
    #[error("discussion {discussion}: expected exactly one root, found {count}")]
    BadRootCount { discussion: String, count: usize },
    #[error("discussion {discussion}: parent cycle through node {id}")]
    Cycle { discussion: String, id: NodeId },
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct DiscussionRecord {
    discussion_id: String,
    nodes: Vec<PostNode>,
}

/// One invariant violation found by [`validate_tree`]. Violations are data, not faults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    MultipleRoots { roots: Vec<NodeId> },
    NoRoot,
    DuplicateId { id: NodeId },
    DanglingParent { id: NodeId, parent: NodeId },
    Cycle { id: NodeId },
    Disconnected { id: NodeId },
}

impl Discussion {
    /// Build from raw nodes, enforcing the tree invariants.
    pub fn new(discussion_id: String, raw: Vec<PostNode>) -> Result<Discussion, GraphError> {
        let report = validate_nodes(&raw);
        if let Some(v) = report.first() {
            return Err(match v {
                Violation::DuplicateId { id } => GraphError::DuplicateId {
                    discussion: discussion_id,
                    id: id.clone(),
                },
                Violation::DanglingParent { id, parent } => GraphError::DanglingParent {
                    discussion: discussion_id,
                    id: id.clone(),
                    parent: parent.clone(),
                },
                Violation::MultipleRoots { roots } => GraphError::BadRootCount {
                    discussion: discussion_id,
                    count: roots.len(),
                },
                Violation::NoRoot => GraphError::BadRootCount {
                    discussion: discussion_id,
                    count: 0,
                },
                Violation::Cycle { id } | Violation::Disconnected { id } => GraphError::Cycle {
                    discussion: discussion_id,
                    id: id.clone(),
                },
            });
        }
        let mut nodes = BTreeMap::new();
        let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        let mut root = None;
        for node in raw {
            if let Some(p) = &node.parent {
                children.entry(p.clone()).or_default().push(node.id.clone());
            } else {
                root = Some(node.id.clone());
            }
            nodes.insert(node.id.clone(), node);
        }
        for kids in children.values_mut() {
            kids.sort();
        }
        Ok(Discussion {
            discussion_id,
            root: root.expect("validated"),
            nodes,
            children,
        })
    }

    pub fn root(&self) -> &NodeId {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &NodeId) -> Result<&PostNode, GraphError> {
        self.nodes.get(id).ok_or_else(|| GraphError::UnknownNode(id.clone()))
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Nodes in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &PostNode> {
        self.nodes.values()
    }

    pub fn children(&self, id: &NodeId) -> &[NodeId] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn parent(&self, id: &NodeId) -> Option<&NodeId> {
        self.nodes.get(id).and_then(|n| n.parent.as_ref())
    }

    /// Parent (if any) plus children, ascending id order. Never contains `id`.
    pub fn neighbors(&self, id: &NodeId) -> Result<Vec<NodeId>, GraphError> {
        let node = self.node(id)?;
        let mut out: Vec<NodeId> = Vec::new();
        if let Some(p) = &node.parent {
            out.push(p.clone());
        }
        out.extend(self.children(id).iter().cloned());
        out.sort();
        Ok(out)
    }

    /// All nodes at undirected tree distance 1..=k from `id`, ascending id order.
    pub fn k_hop_neighborhood(&self, id: &NodeId, k: usize) -> Result<Vec<NodeId>, GraphError> {
        self.node(id)?;
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        let mut queue = VecDeque::new();
        queue.push_back((id.clone(), 0usize));
        seen.insert(id.clone());
        let mut out = BTreeSet::new();
        while let Some((cur, dist)) = queue.pop_front() {
            if dist == k {
                continue;
            }
            for nbr in self.neighbors(&cur)? {
                if seen.insert(nbr.clone()) {
                    out.insert(nbr.clone());
                    queue.push_back((nbr, dist + 1));
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Labeled nodes in ascending id order (the prediction set).
    pub fn labeled_nodes(&self) -> impl Iterator<Item = &PostNode> {
        self.iter().filter(|n| n.label.is_some())
    }

    fn to_record(&self) -> DiscussionRecord {
        DiscussionRecord {
            discussion_id: self.discussion_id.clone(),
            nodes: self.iter().cloned().collect(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("serialize discussion")
    }
}

/// Structural check on raw nodes. Empty report iff the nodes form a valid tree.
pub fn validate_nodes(raw: &[PostNode]) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut ids = BTreeSet::new();
    for node in raw {
        if !ids.insert(node.id.clone()) {
            report.push(Violation::DuplicateId { id: node.id.clone() });
        }
    }
    let roots: Vec<NodeId> = raw
        .iter()
        .filter(|n| n.parent.is_none())
        .map(|n| n.id.clone())
        .collect();
    match roots.len() {
        0 if !raw.is_empty() => report.push(Violation::NoRoot),
        0 | 1 => {}
        _ => report.push(Violation::MultipleRoots { roots: roots.clone() }),
    }
    for node in raw {
        if let Some(p) = &node.parent {
            if !ids.contains(p) {
                report.push(Violation::DanglingParent {
                    id: node.id.clone(),
                    parent: p.clone(),
                });
            }
        }
    }
    // Cycle / connectivity: follow parent pointers; every node must reach a root.
    let parent_of: BTreeMap<&NodeId, Option<&NodeId>> =
        raw.iter().map(|n| (&n.id, n.parent.as_ref())).collect();
    let mut reaches_root: BTreeMap<&NodeId, bool> = BTreeMap::new();
    for node in raw {
        let mut path = Vec::new();
        let mut cur = &node.id;
        let ok = loop {
            if let Some(&known) = reaches_root.get(cur) {
                break known;
            }
            if path.contains(&cur) {
                break false;
            }
            path.push(cur);
            match parent_of.get(cur) {
                Some(Some(p)) if parent_of.contains_key(p) => cur = p,
                Some(Some(_)) => break false, // dangling, reported above
                Some(None) => break true,
                None => break false,
            }
        };
        for id in path {
            reaches_root.insert(id, ok);
        }
        if !ok && node.parent.is_some() && parent_of.contains_key(node.parent.as_ref().unwrap()) {
            report.push(Violation::Cycle { id: node.id.clone() });
        }
    }
    report
}

pub fn validate_tree(d: &Discussion) -> Vec<Violation> {
    let raw: Vec<PostNode> = d.iter().cloned().collect();
    validate_nodes(&raw)
}

/// Parse line-delimited discussion records. Nodes may appear in any order
/// within a record.
pub fn parse_discussions<R: BufRead>(reader: R) -> Result<Vec<Discussion>, GraphError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DiscussionRecord =
            serde_json::from_str(&line).map_err(|source| GraphError::Malformed {
                line: idx + 1,
                source,
            })?;
        out.push(Discussion::new(record.discussion_id, record.nodes)?);
    }
    Ok(out)
}

pub fn parse_discussions_file(path: &std::path::Path) -> Result<Vec<Discussion>, GraphError> {
    let file = std::fs::File::open(path)?;
    parse_discussions(std::io::BufReader::new(file))
}
