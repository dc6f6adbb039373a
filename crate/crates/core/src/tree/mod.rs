//! Scenario trees: a finite filtration with per-node realizations.
//!
//! Node ids are dense and breadth-first, with the root at 0. Probabilities are
//! stored conditionally on the parent.

mod generate;
mod io;

pub use generate::{generate_synthetic, SeriesKind, SeriesSpec, SyntheticParams};

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {context}: {message}")]
    Schema { context: String, message: String },
    #[error("malformed tree: {0}")]
    Structure(String),
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub stage: usize,
    pub prob_conditional: f64,
    /// One value per entry of the tree's `series_names`.
    pub realization: Vec<f64>,
}

/// Node description used to assemble a tree; children are derived from parents.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub parent: Option<usize>,
    pub stage: usize,
    pub prob_conditional: f64,
    pub realization: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    horizon: usize,
    series_names: Vec<String>,
    nodes: Vec<TreeNode>,
    unconditional: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(id) => write!(f, "node {id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// A subtree together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Subtree {
    pub tree: ScenarioTree,
    /// Original ids from the old root down to the new root, inclusive.
    pub path: Vec<usize>,
    /// Original id of every node of the subtree, indexed by its new id.
    pub original_ids: Vec<usize>,
}

impl ScenarioTree {
    /// Assembles a tree from nodes listed by id.
    ///
    /// Fails only when the parent links do not describe a tree: node 0 must be
    /// the unique root, every other node's parent must have a smaller id, and
    /// every realization must have one value per series. Probability and stage
    /// consistency is left to [`ScenarioTree::validate`].
    pub fn from_nodes(horizon: usize, series_names: Vec<String>, specs: Vec<NodeSpec>) -> Result<Self, TreeError> {
        if specs.is_empty() {
            return Err(TreeError::Structure("tree has no nodes".into()));
        }
        let mut nodes: Vec<TreeNode> = Vec::with_capacity(specs.len());
        for (id, spec) in specs.into_iter().enumerate() {
            match (id, spec.parent) {
                (0, None) => {}
                (0, Some(p)) => return Err(TreeError::Structure(format!("root node 0 has parent {p}"))),
                (_, None) => return Err(TreeError::Structure(format!("node {id} has no parent; only node 0 may be the root"))),
                (_, Some(p)) if p >= id => {
                    return Err(TreeError::Structure(format!(
                        "node {id} has parent {p}; parents must precede their children"
                    )))
                }
                _ => {}
            }
            if spec.realization.len() != series_names.len() {
                return Err(TreeError::Structure(format!(
                    "node {id} has {} realization values for {} series",
                    spec.realization.len(),
                    series_names.len()
                )));
            }
            if let Some(p) = spec.parent {
                nodes[p].children.push(id);
            }
            nodes.push(TreeNode {
                id,
                parent: spec.parent,
                children: Vec::new(),
                stage: spec.stage,
                prob_conditional: spec.prob_conditional,
                realization: spec.realization,
            });
        }
        let mut unconditional = vec![0.0; nodes.len()];
        for id in 0..nodes.len() {
            unconditional[id] = match nodes[id].parent {
                None => nodes[id].prob_conditional,
                Some(p) => unconditional[p] * nodes[id].prob_conditional,
            };
        }
        Ok(Self { horizon, series_names, nodes, unconditional })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn series_names(&self) -> &[String] {
        &self.series_names
    }

    pub fn series_index(&self, name: &str) -> Option<usize> {
        self.series_names.iter().position(|s| s == name)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Result<&TreeNode, TreeError> {
        self.nodes.get(id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.nodes[id].parent
    }

    pub fn stage(&self, id: usize) -> usize {
        self.nodes[id].stage
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.nodes[id].children.is_empty()
    }

    pub fn realization(&self, id: usize, series: usize) -> f64 {
        self.nodes[id].realization[series]
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.is_leaf(i))
    }

    pub fn non_leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| !self.is_leaf(i))
    }

    pub fn nodes_at_stage(&self, stage: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.nodes[i].stage == stage)
    }

    /// Product of conditional probabilities from the root to `id`.
    pub fn unconditional_prob(&self, id: usize) -> f64 {
        self.unconditional[id]
    }

    /// Ids from the root down to `id`, inclusive.
    pub fn path_to(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Every invariant violation, each tagged with the offending node.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut flag = |node: Option<usize>, message: String| out.push(Violation { node, message });
        let root = &self.nodes[0];
        if root.stage != 0 {
            flag(Some(0), format!("root has stage {}", root.stage));
        }
        if root.prob_conditional != 1.0 {
            flag(Some(0), format!("root has conditional probability {}", root.prob_conditional));
        }
        for node in &self.nodes {
            let p = node.prob_conditional;
            if node.parent.is_some() && !(p > 0.0 && p <= 1.0) {
                flag(Some(node.id), format!("conditional probability {p} outside (0, 1]"));
            }
            if let Some(v) = node.realization.iter().find(|v| !v.is_finite()) {
                flag(Some(node.id), format!("non-finite realization value {v}"));
            }
            if let Some(parent) = node.parent {
                let ps = self.nodes[parent].stage;
                if node.stage != ps + 1 {
                    flag(Some(node.id), format!("stage {} under a parent at stage {ps}", node.stage));
                }
            }
            if node.children.is_empty() {
                if node.stage != self.horizon {
                    flag(Some(node.id), format!("leaf at stage {} but the horizon is {}", node.stage, self.horizon));
                }
            } else {
                let total: f64 = node.children.iter().map(|&c| self.nodes[c].prob_conditional).sum();
                if (total - 1.0).abs() > 1e-12 {
                    flag(Some(node.id), format!("children's conditional probabilities sum to {total}"));
                }
            }
        }
        let leaf_mass: f64 = self.leaves().map(|l| self.unconditional[l]).sum();
        if (leaf_mass - 1.0).abs() > 1e-10 {
            flag(None, format!("leaf probabilities sum to {leaf_mass}"));
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// The tree hanging below `id`, re-rooted: stages shift so the new root is
    /// at stage 0 with probability 1. Realizations are kept as they are.
    pub fn subtree(&self, id: usize) -> Result<Subtree, TreeError> {
        let top = self.node(id)?;
        let shift = top.stage;
        let mut original_ids = vec![id];
        let mut head = 0;
        while head < original_ids.len() {
            let cur = original_ids[head];
            original_ids.extend_from_slice(&self.nodes[cur].children);
            head += 1;
        }
        let mut new_id = vec![usize::MAX; self.len()];
        for (k, &o) in original_ids.iter().enumerate() {
            new_id[o] = k;
        }
        let specs = original_ids
            .iter()
            .map(|&o| {
                let n = &self.nodes[o];
                NodeSpec {
                    parent: if o == id { None } else { n.parent.map(|p| new_id[p]) },
                    stage: n.stage - shift,
                    prob_conditional: if o == id { 1.0 } else { n.prob_conditional },
                    realization: n.realization.clone(),
                }
            })
            .collect();
        let tree = Self::from_nodes(self.horizon.saturating_sub(shift), self.series_names.clone(), specs)?;
        Ok(Subtree { tree, path: self.path_to(id), original_ids })
    }
}
