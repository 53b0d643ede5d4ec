//! Reasoning-tree data structures and the pure search arithmetic.
//!
//! A [`SearchTree`] holds one node per reasoning step. Nodes are stored in a
//! flat table indexed by [`NodeId`]; ids are assigned in creation order, so
//! "insertion order" tie-breaking is simply "lowest id wins".
//!
//! Nothing in this module talks to a model. Selection ([`select_leaf`]),
//! reward propagation ([`backpropagate`]) and final-path extraction
//! ([`extract_thinking`]) are deterministic functions of the tree.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a node inside one [`SearchTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("tree has no reasoning steps below the root")]
    EmptyTree,
    #[error("search ended in failure: {0}")]
    FailedSearch(String),
    #[error("search has not terminated yet")]
    Unfinished,
    #[error("duplicate sibling step: {0:?}")]
    DuplicateSibling(String),
    #[error("node {0} is terminal and cannot be expanded")]
    TerminalNode(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Guidance attached to a node after evaluation.
///
/// `End` is the terminal marker: the model judged the question solved at this node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum Reflection {
    End,
    Guidance(String),
}

impl Reflection {
    pub fn is_end(&self) -> bool {
        matches!(self, Reflection::End)
    }

    /// Text to feed into the next expansion, `None` for terminal nodes.
    pub fn guidance(&self) -> Option<&str> {
        match self {
            Reflection::End => None,
            Reflection::Guidance(text) => Some(text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// The question plus every step accumulated above this node.
    pub state: String,
    /// The step this node contributes; `None` on the root.
    pub action: Option<String>,
    /// Normalized evaluation score in `[0, 1]`.
    pub reward: f64,
    pub reflection: Option<Reflection>,
    pub visits: u64,
    pub depth: usize,
}

impl SearchNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn is_terminal(&self) -> bool {
        self.reflection.as_ref().is_some_and(Reflection::is_end)
    }

    /// State handed to this node's children: own state followed by own action.
    pub fn child_state(&self) -> String {
        concat_state(&self.state, self.action.as_deref())
    }
}

/// Why a search stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cause", content = "reason", rename_all = "snake_case")]
pub enum Termination {
    EndTagReached,
    IterationLimit,
    Failure(String),
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::EndTagReached => "end_tag_reached",
            Termination::IterationLimit => "iteration_limit",
            Termination::Failure(_) => "failure",
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Termination::Failure(_))
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Failure(reason) => write!(f, "failure: {reason}"),
            other => f.write_str(other.label()),
        }
    }
}

/// Search hyperparameters. Defaults: c = 0.5, alpha = 0.5, 3 children per
/// expansion, 5 attempts per child, 5 iterations, temperature 0.9, top-p 0.98.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Exploration constant `c` of UCB1.
    pub exploration_c: f64,
    /// Weight of a parent's own reward during backpropagation.
    pub alpha: f64,
    /// Children generated per expansion.
    pub branching: usize,
    /// Generation attempts per child before giving up on duplicates.
    pub max_retries: usize,
    pub iteration_limit: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: Option<u64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            exploration_c: 0.5,
            alpha: 0.5,
            branching: 3,
            max_retries: 5,
            iteration_limit: 5,
            temperature: 0.9,
            top_p: 0.98,
            seed: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.exploration_c >= 0.0 && self.exploration_c.is_finite()) {
            return Err(format!("exploration_c must be a finite value >= 0, got {}", self.exploration_c));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.branching == 0 {
            return Err("branching must be positive".into());
        }
        if self.max_retries == 0 {
            return Err("max_retries must be positive".into());
        }
        if self.iteration_limit == 0 {
            return Err("iteration_limit must be positive".into());
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must lie in (0, 1], got {}", self.top_p));
        }
        Ok(())
    }
}

/// Joins a state with the action taken from it. An absent or blank action leaves
/// the state unchanged, so children of the root share the bare question.
pub fn concat_state(state: &str, action: Option<&str>) -> String {
    match action.map(str::trim) {
        Some(a) if !a.is_empty() => format!("{state}\n{a}"),
        _ => state.to_string(),
    }
}

/// Canonical form used to decide whether two sibling steps are duplicates:
/// lowercased, whitespace runs collapsed, trailing punctuation removed.
pub fn normalize_step(step: &str) -> String {
    let collapsed = step
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

pub fn is_duplicate_step(candidate: &str, siblings: &[String]) -> bool {
    let norm = normalize_step(candidate);
    siblings.iter().any(|s| normalize_step(s) == norm)
}

/// UCB1 score of a child.
///
/// Unvisited children score `+inf` so every expanded child is tried once. With
/// `c == 0` the exploration term is dropped entirely and the score is the bare
/// reward, including for unvisited children.
pub fn ucb1(reward: f64, c: f64, parent_visits: u64, node_visits: u64) -> f64 {
    if c == 0.0 {
        return reward;
    }
    if node_visits == 0 {
        return f64::INFINITY;
    }
    let n = node_visits as f64;
    let ln_parent = (parent_visits as f64).ln();
    reward + c * (2.0 * ln_parent / n).sqrt()
}

/// One reward rewrite performed by [`backpropagate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardUpdate {
    pub node: NodeId,
    pub old: f64,
    pub delta: f64,
    pub new: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    pub root: NodeId,
    pub nodes: Vec<SearchNode>,
    pub iterations_run: usize,
    pub terminated: Option<Termination>,
}

impl SearchTree {
    /// A tree holding only the root, whose state is the question itself.
    pub fn new(question: &str) -> Self {
        let root = SearchNode {
            id: NodeId::ROOT,
            parent: None,
            children: Vec::new(),
            state: question.to_string(),
            action: None,
            reward: 0.0,
            reflection: None,
            visits: 0,
            depth: 0,
        };
        Self {
            root: NodeId::ROOT,
            nodes: vec![root],
            iterations_run: 0,
            terminated: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    pub fn node(&self, id: NodeId) -> Result<&SearchNode, TreeError> {
        self.nodes.get(id.0).ok_or(TreeError::UnknownNode(id))
    }

    pub fn node_mut(&mut self, id: NodeId) -> Result<&mut SearchNode, TreeError> {
        self.nodes.get_mut(id.0).ok_or(TreeError::UnknownNode(id))
    }

    pub fn root_node(&self) -> &SearchNode {
        &self.nodes[self.root.0]
    }

    /// Actions of `id`'s children in generation order.
    pub fn child_actions(&self, id: NodeId) -> Result<Vec<String>, TreeError> {
        let node = self.node(id)?;
        node.children
            .iter()
            .map(|c| Ok(self.node(*c)?.action.clone().unwrap_or_default()))
            .collect()
    }

    /// Appends a child carrying `action`. The child's state is the parent's
    /// state followed by the parent's action.
    pub fn add_child(&mut self, parent: NodeId, action: &str) -> Result<NodeId, TreeError> {
        let siblings = self.child_actions(parent)?;
        let parent_node = self.node(parent)?;
        if parent_node.is_terminal() {
            return Err(TreeError::TerminalNode(parent));
        }
        if is_duplicate_step(action, &siblings) {
            return Err(TreeError::DuplicateSibling(action.to_string()));
        }
        let id = NodeId(self.nodes.len());
        let child = SearchNode {
            id,
            parent: Some(parent),
            children: Vec::new(),
            state: parent_node.child_state(),
            action: Some(action.to_string()),
            reward: 0.0,
            reflection: None,
            visits: 0,
            depth: parent_node.depth + 1,
        };
        self.nodes.push(child);
        self.nodes[parent.0].children.push(id);
        Ok(id)
    }

    /// Sets a node's reward, clamped into `[0, 1]`.
    pub fn set_reward(&mut self, id: NodeId, reward: f64) -> Result<(), TreeError> {
        self.node_mut(id)?.reward = reward.clamp(0.0, 1.0);
        Ok(())
    }

    pub fn set_reflection(&mut self, id: NodeId, reflection: Reflection) -> Result<(), TreeError> {
        self.node_mut(id)?.reflection = Some(reflection);
        Ok(())
    }

    /// Node ids from the root down to `id`, inclusive.
    pub fn path_to(&self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        let mut path = vec![id];
        let mut cur = self.node(id)?;
        while let Some(p) = cur.parent {
            if path.len() > self.nodes.len() {
                return Err(TreeError::MalformedTree("cycle in parent links".into()));
            }
            path.push(p);
            cur = self.node(p)?;
        }
        path.reverse();
        Ok(path)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &SearchNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn terminal_nodes(&self) -> impl Iterator<Item = &SearchNode> {
        self.nodes.iter().filter(|n| n.is_terminal())
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Checks every structural invariant of the tree.
    pub fn validate(&self) -> Result<(), TreeError> {
        let bad = |msg: String| Err(TreeError::MalformedTree(msg));
        if self.nodes.is_empty() {
            return bad("no root".into());
        }
        let root = self.node(self.root)?;
        if root.parent.is_some() || root.depth != 0 || root.action.is_some() {
            return bad("root must have depth 0, no parent and no action".into());
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.id.0 != idx {
                return bad(format!("node at slot {idx} carries id {}", node.id));
            }
            if !(0.0..=1.0).contains(&node.reward) {
                return bad(format!("{} has reward {} outside [0, 1]", node.id, node.reward));
            }
            if node.is_terminal() && !node.children.is_empty() {
                return bad(format!("terminal node {} has children", node.id));
            }
            let mut child_visits = 0u64;
            let mut seen = Vec::with_capacity(node.children.len());
            for c in &node.children {
                let child = self.node(*c)?;
                if child.parent != Some(node.id) {
                    return bad(format!("{} lists {} as child but parent link differs", node.id, c));
                }
                child_visits += child.visits;
                let norm = normalize_step(child.action.as_deref().unwrap_or_default());
                if seen.contains(&norm) {
                    return bad(format!("duplicate sibling actions under {}", node.id));
                }
                seen.push(norm);
            }
            if child_visits > node.visits {
                return bad(format!(
                    "{} has {} visits but its children sum to {child_visits}",
                    node.id, node.visits
                ));
            }
            if node.id == self.root {
                continue;
            }
            let Some(pid) = node.parent else {
                return bad(format!("{} has no parent", node.id));
            };
            let parent = self.node(pid)?;
            if !parent.children.contains(&node.id) {
                return bad(format!("{} missing from its parent's child list", node.id));
            }
            if node.depth != parent.depth + 1 {
                return bad(format!("{} has depth {} under parent depth {}", node.id, node.depth, parent.depth));
            }
            if node.state != parent.child_state() {
                return bad(format!("{} state is not parent state + parent action", node.id));
            }
            if node.action.is_none() {
                return bad(format!("{} has no action", node.id));
            }
        }
        // Reachability: every node must be found from the root exactly once.
        let mut reached = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut reached[id.0], true) {
                return bad(format!("{id} reachable twice"));
            }
            stack.extend(self.nodes[id.0].children.iter().copied());
        }
        if let Some(idx) = reached.iter().position(|r| !r) {
            return bad(format!("n{idx} unreachable from root"));
        }
        Ok(())
    }
}

/// Walks from the root choosing the child with the highest UCB1 at every level
/// until a leaf is reached. Every node on the path has its visit count
/// incremented. Scores use visit counts as they were before this call.
pub fn select_leaf(tree: &mut SearchTree, config: &SearchConfig) -> Result<NodeId, TreeError> {
    let mut path = vec![tree.root];
    let mut cur = tree.node(tree.root)?;
    while !cur.children.is_empty() {
        let mut best: Option<(NodeId, f64)> = None;
        for cid in &cur.children {
            let child = tree.node(*cid)?;
            if child.parent != Some(cur.id) {
                return Err(TreeError::MalformedTree(format!("{cid} is not a child of {}", cur.id)));
            }
            if child.visits > cur.visits {
                return Err(TreeError::MalformedTree(format!(
                    "{cid} visited more often than its parent {}",
                    cur.id
                )));
            }
            let score = ucb1(child.reward, config.exploration_c, cur.visits, child.visits);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((*cid, score));
            }
        }
        let (next, _) = best.expect("non-empty children");
        if path.len() > tree.nodes.len() {
            return Err(TreeError::MalformedTree("cycle during selection".into()));
        }
        path.push(next);
        cur = tree.node(next)?;
    }
    let leaf = cur.id;
    for id in path {
        tree.nodes[id.0].visits += 1;
    }
    Ok(leaf)
}

/// Visit-weighted mean reward of `id`'s children, weighting each child by
/// `visits + 1` so that freshly expanded children still count.
pub fn children_reward(tree: &SearchTree, id: NodeId) -> Result<Option<f64>, TreeError> {
    let node = tree.node(id)?;
    if node.children.is_empty() {
        return Ok(None);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for c in &node.children {
        let child = tree.node(*c)?;
        let w = child.visits as f64 + 1.0;
        num += w * child.reward;
        den += w;
    }
    Ok(Some(num / den))
}

/// Blends the expanded node's reward with its children's weighted mean, then
/// repeats for each ancestor up to the root. Returns the updates in the order
/// they were applied (deepest first).
pub fn backpropagate(
    tree: &mut SearchTree,
    expanded_parent: NodeId,
    alpha: f64,
) -> Result<Vec<RewardUpdate>, TreeError> {
    if tree.node(expanded_parent)?.children.is_empty() {
        return Err(TreeError::MalformedTree(format!(
            "{expanded_parent} has no children to backpropagate from"
        )));
    }
    let mut updates = Vec::new();
    let mut cur = Some(expanded_parent);
    while let Some(id) = cur {
        let delta = children_reward(tree, id)?
            .ok_or_else(|| TreeError::MalformedTree(format!("ancestor {id} has no children")))?;
        let node = tree.node_mut(id)?;
        let old = node.reward;
        let new = (alpha * old + (1.0 - alpha) * delta).clamp(0.0, 1.0);
        node.reward = new;
        updates.push(RewardUpdate { node: id, old, delta, new });
        cur = node.parent;
        if updates.len() > tree.nodes.len() {
            return Err(TreeError::MalformedTree("cycle during backpropagation".into()));
        }
    }
    Ok(updates)
}

/// The reasoning steps chosen from a finished tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinkingRecord {
    pub steps: Vec<String>,
    pub node_path: Vec<NodeId>,
    pub path_rewards: Vec<f64>,
    pub termination: Termination,
}

impl ThinkingRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Steps as a numbered list, one per line.
    pub fn numbered(&self) -> String {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn mean_reward(&self) -> f64 {
        if self.path_rewards.is_empty() {
            0.0
        } else {
            self.path_rewards.iter().sum::<f64>() / self.path_rewards.len() as f64
        }
    }
}

/// Picks the final reasoning path.
///
/// If any node carries the end marker, the path to the best such node is used
/// (highest reward, earliest created on ties). Otherwise descend greedily by
/// reward, breaking ties by visits and then by creation order.
pub fn extract_thinking(tree: &SearchTree) -> Result<ThinkingRecord, TreeError> {
    let termination = match &tree.terminated {
        None => return Err(TreeError::Unfinished),
        Some(Termination::Failure(reason)) => return Err(TreeError::FailedSearch(reason.clone())),
        Some(t) => t.clone(),
    };
    if tree.root_node().children.is_empty() {
        return Err(TreeError::EmptyTree);
    }
    let end_node = tree
        .terminal_nodes()
        .fold(None::<&SearchNode>, |best, n| match best {
            Some(b) if b.reward >= n.reward => Some(b),
            _ => Some(n),
        });
    let target = match end_node {
        Some(n) => n.id,
        None => {
            let mut cur = tree.root_node();
            while !cur.children.is_empty() {
                let mut best = tree.node(cur.children[0])?;
                for cid in &cur.children[1..] {
                    let c = tree.node(*cid)?;
                    if c.reward > best.reward || (c.reward == best.reward && c.visits > best.visits) {
                        best = c;
                    }
                }
                cur = best;
            }
            cur.id
        }
    };
    let path = tree.path_to(target)?;
    let mut steps = Vec::with_capacity(path.len() - 1);
    let mut rewards = Vec::with_capacity(path.len() - 1);
    for id in &path[1..] {
        let node = tree.node(*id)?;
        steps.push(node.action.clone().unwrap_or_default());
        rewards.push(node.reward);
    }
    Ok(ThinkingRecord {
        steps,
        node_path: path[1..].to_vec(),
        path_rewards: rewards,
        termination,
    })
}

/// Self-contained snapshot of one question's search, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeCheckpoint {
    pub schema: String,
    pub question_id: String,
    pub config: SearchConfig,
    pub tree: SearchTree,
}

impl TreeCheckpoint {
    pub const SCHEMA: &'static str = "reasoning-mcts/tree/v1";

    pub fn new(question_id: impl Into<String>, config: SearchConfig, tree: SearchTree) -> Self {
        Self {
            schema: Self::SCHEMA.to_string(),
            question_id: question_id.into(),
            config,
            tree,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("tree checkpoint serializes")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree_with_children(rewards_visits: &[(f64, u64)], root_visits: u64) -> SearchTree {
        let mut t = SearchTree::new("Q");
        t.nodes[0].visits = root_visits;
        for (i, (r, v)) in rewards_visits.iter().enumerate() {
            let id = t.add_child(NodeId::ROOT, &format!("step {i}")).unwrap();
            t.nodes[id.0].reward = *r;
            t.nodes[id.0].visits = *v;
        }
        t
    }

    #[test]
    fn ucb1_examples() {
        let v = ucb1(0.6, 0.5, 4, 1);
        assert!((v - 1.432_554_611_157_697_8).abs() < 1e-12);
        assert_eq!(ucb1(0.9, 0.0, 100, 3), 0.9);
        assert_eq!(ucb1(0.2, 0.5, 7, 0), f64::INFINITY);
    }

    #[test]
    fn select_single_node_returns_root() {
        let mut t = SearchTree::new("Q");
        let leaf = select_leaf(&mut t, &SearchConfig::default()).unwrap();
        assert_eq!(leaf, NodeId::ROOT);
        assert_eq!(t.root_node().visits, 1);
    }

    #[test]
    fn select_prefers_unvisited() {
        let mut t = tree_with_children(&[(0.8, 1), (0.3, 0)], 1);
        let leaf = select_leaf(&mut t, &SearchConfig::default()).unwrap();
        assert_eq!(leaf, NodeId(2));
        assert_eq!(t.node(NodeId(2)).unwrap().visits, 1);
        assert_eq!(t.root_node().visits, 2);
    }

    #[test]
    fn select_by_ucb() {
        let mut t = tree_with_children(&[(0.8, 2), (0.5, 1)], 3);
        assert_eq!(select_leaf(&mut t, &SearchConfig::default()).unwrap(), NodeId(1));
    }

    #[test]
    fn select_rejects_inconsistent_visits() {
        let mut t = tree_with_children(&[(0.8, 5)], 1);
        assert!(matches!(
            select_leaf(&mut t, &SearchConfig::default()),
            Err(TreeError::MalformedTree(_))
        ));
    }

    #[test]
    fn ties_break_by_insertion_order() {
        let mut t = tree_with_children(&[(0.5, 1), (0.5, 1), (0.5, 1)], 3);
        assert_eq!(select_leaf(&mut t, &SearchConfig::default()).unwrap(), NodeId(1));
    }

    #[test]
    fn backprop_example() {
        let mut t = tree_with_children(&[(0.8, 1), (0.4, 0)], 1);
        t.nodes[0].reward = 0.6;
        let ups = backpropagate(&mut t, NodeId::ROOT, 0.5).unwrap();
        assert_eq!(ups.len(), 1);
        assert!((ups[0].delta - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.root_node().reward - 0.633_333_333_333_333_3).abs() < 1e-12);
    }

    #[test]
    fn backprop_requires_children() {
        let mut t = SearchTree::new("Q");
        assert!(matches!(backpropagate(&mut t, NodeId::ROOT, 0.5), Err(TreeError::MalformedTree(_))));
    }

    #[test]
    fn backprop_reaches_root() {
        let mut t = tree_with_children(&[(0.2, 1)], 1);
        let a = NodeId(1);
        let b = t.add_child(a, "deeper").unwrap();
        t.nodes[b.0].reward = 1.0;
        let ups = backpropagate(&mut t, a, 0.5).unwrap();
        assert_eq!(ups.iter().map(|u| u.node).collect::<Vec<_>>(), vec![a, NodeId::ROOT]);
        assert!((t.node(a).unwrap().reward - 0.6).abs() < 1e-12);
        // root: children = [a] with reward 0.6
        assert!((t.root_node().reward - 0.3).abs() < 1e-12);
    }

    #[test]
    fn state_concatenation() {
        let mut t = SearchTree::new("Q");
        let a = t.add_child(NodeId::ROOT, "first").unwrap();
        let b = t.add_child(a, "second").unwrap();
        assert_eq!(t.node(a).unwrap().state, "Q");
        assert_eq!(t.node(b).unwrap().state, "Q\nfirst");
        assert_eq!(t.node(b).unwrap().depth, 2);
        t.validate().unwrap();
    }

    #[test]
    fn duplicate_siblings_rejected() {
        let mut t = SearchTree::new("Q");
        t.add_child(NodeId::ROOT, "Sort the   array.").unwrap();
        assert!(matches!(
            t.add_child(NodeId::ROOT, "sort the array"),
            Err(TreeError::DuplicateSibling(_))
        ));
    }

    #[test]
    fn terminal_nodes_cannot_grow() {
        let mut t = SearchTree::new("Q");
        let a = t.add_child(NodeId::ROOT, "done").unwrap();
        t.set_reflection(a, Reflection::End).unwrap();
        assert_eq!(t.add_child(a, "more"), Err(TreeError::TerminalNode(a)));
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_step("  Use Two\tPointers!!  "), "use two pointers");
        assert_eq!(normalize_step("a.b"), "a.b");
    }

    #[test]
    fn extract_follows_end_marker() {
        let mut t = SearchTree::new("Q");
        let a = t.add_child(NodeId::ROOT, "s1").unwrap();
        let b = t.add_child(a, "s2").unwrap();
        let c = t.add_child(b, "s3").unwrap();
        t.add_child(NodeId::ROOT, "other").unwrap();
        t.nodes[4].reward = 1.0;
        t.set_reflection(c, Reflection::End).unwrap();
        t.terminated = Some(Termination::EndTagReached);
        let rec = extract_thinking(&t).unwrap();
        assert_eq!(rec.steps, vec!["s1", "s2", "s3"]);
        assert_eq!(rec.termination, Termination::EndTagReached);
    }

    #[test]
    fn extract_greedy_without_end() {
        let mut t = tree_with_children(&[(0.7, 1), (0.9, 1)], 2);
        t.terminated = Some(Termination::IterationLimit);
        let rec = extract_thinking(&t).unwrap();
        assert_eq!(rec.steps, vec!["step 1"]);
        assert_eq!(rec.path_rewards, vec![0.9]);
    }

    #[test]
    fn extract_greedy_ties_prefer_visits() {
        let mut t = tree_with_children(&[(0.5, 0), (0.5, 2)], 2);
        t.terminated = Some(Termination::IterationLimit);
        assert_eq!(extract_thinking(&t).unwrap().steps, vec!["step 1"]);
    }

    #[test]
    fn extract_five_deep_chain() {
        let mut t = SearchTree::new("Q");
        let mut cur = NodeId::ROOT;
        for d in 0..5 {
            cur = t.add_child(cur, &format!("d{d}")).unwrap();
        }
        t.terminated = Some(Termination::IterationLimit);
        let rec = extract_thinking(&t).unwrap();
        assert_eq!(rec.len(), 5);
        assert_eq!(rec.termination, Termination::IterationLimit);
    }

    #[test]
    fn extract_errors() {
        let mut t = SearchTree::new("Q");
        assert_eq!(extract_thinking(&t), Err(TreeError::Unfinished));
        t.terminated = Some(Termination::IterationLimit);
        assert_eq!(extract_thinking(&t), Err(TreeError::EmptyTree));
        t.terminated = Some(Termination::Failure("down".into()));
        assert!(matches!(extract_thinking(&t), Err(TreeError::FailedSearch(_))));
    }

    #[test]
    fn checkpoint_line_round_trip() {
        let mut t = tree_with_children(&[(0.4, 1)], 1);
        t.set_reflection(NodeId(1), Reflection::Guidance("check bounds".into())).unwrap();
        t.iterations_run = 1;
        let cp = TreeCheckpoint::new("q1", SearchConfig::default(), t);
        let line = cp.to_line();
        assert!(!line.contains('\n'));
        assert_eq!(TreeCheckpoint::from_line(&line).unwrap(), cp);
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = SearchConfig::default();
        assert_eq!((c.exploration_c, c.alpha, c.branching, c.max_retries), (0.5, 0.5, 3, 5));
        assert_eq!((c.iteration_limit, c.temperature, c.top_p), (5, 0.9, 0.98));
        c.validate().unwrap();
        let bad = SearchConfig { top_p: 0.0, ..c };
        assert!(bad.validate().is_err());
    }
}
