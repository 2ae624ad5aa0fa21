//! PUCT tree search over single-agent decisions.
//!
//! Each tree edge is one agent's pick or no-op; an epoch's joint action is
//! the sequence of edges taken within that epoch. Edge values are raw
//! (negative) time units: the return backed up through an edge is the sum of
//! the rewards on the path from that edge down to the leaf plus the leaf
//! value. Leaves are evaluated by the network, terminal states are worth 0.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::{AgentAction, AgentId, Decision, DecisionPolicy, Game, GameError, GameState};
use crate::net::{Evaluator, NetError};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("action {0:?} is not an edge of the current root")]
    NotAnEdge(AgentAction),
    #[error("the root state has no agent to act")]
    NoDecision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub c_puct: f64,
    /// Look-ahead in epochs; `None` searches to the end of the job.
    pub max_depth: Option<u32>,
    pub simulations: usize,
    /// Prior mass given to `NoOp` before renormalization.
    pub noop_prior: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            c_puct: 100.0,
            max_depth: Some(3),
            simulations: 30,
            noop_prior: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EdgeStats {
    pub visits: u32,
    pub total_value: f64,
    pub prior: f64,
}

impl EdgeStats {
    /// Mean backed-up return, 0 for an unvisited edge.
    pub fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.total_value / f64::from(self.visits)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub action: AgentAction,
    /// Leftmost column of the picked stone; `None` for `NoOp`.
    pub column: Option<usize>,
    pub stats: EdgeStats,
    reward: i64,
    child: Option<usize>,
}

impl Edge {
    pub fn new(action: AgentAction, column: Option<usize>, prior: f64) -> Self {
        Edge {
            action,
            column,
            stats: EdgeStats {
                prior,
                ..EdgeStats::default()
            },
            reward: 0,
            child: None,
        }
    }

    pub fn with_stats(mut self, visits: u32, total_value: f64) -> Self {
        self.stats.visits = visits;
        self.stats.total_value = total_value;
        self
    }

    pub fn child(&self) -> Option<usize> {
        self.child
    }
}

// Tie-break key: higher prior first, then lower column, NoOp last.
fn tie_key(e: &Edge) -> (f64, std::cmp::Reverse<usize>) {
    (e.stats.prior, std::cmp::Reverse(e.column.unwrap_or(usize::MAX)))
}

fn better(a: (f64, &Edge), b: (f64, &Edge)) -> bool {
    match a.0.partial_cmp(&b.0) {
        Some(std::cmp::Ordering::Greater) => true,
        Some(std::cmp::Ordering::Less) => false,
        _ => tie_key(a.1).partial_cmp(&tie_key(b.1)) == Some(std::cmp::Ordering::Greater),
    }
}

fn argmax_by(edges: &[Edge], score: impl Fn(&Edge) -> f64) -> usize {
    let mut best = 0;
    for i in 1..edges.len() {
        if better((score(&edges[i]), &edges[i]), (score(&edges[best]), &edges[best])) {
            best = i;
        }
    }
    best
}

/// `argmax Q + c * P * sqrt(sum N) / (1 + N)`.
pub fn select_edge(edges: &[Edge], c_puct: f64) -> usize {
    let total: u32 = edges.iter().map(|e| e.stats.visits).sum();
    let sqrt_total = f64::from(total).sqrt();
    argmax_by(edges, |e| {
        e.stats.q() + c_puct * e.stats.prior * sqrt_total / (1.0 + f64::from(e.stats.visits))
    })
}

/// Return credited to each edge of a path: the rewards from that edge on,
/// plus the leaf value.
pub fn path_returns(rewards: &[f64], leaf_value: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = leaf_value;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc += r;
        out[i] = acc;
    }
    out
}

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub state: GameState,
    pub agent: Option<AgentId>,
    pub edges: Vec<Edge>,
    expanded: bool,
    leaf_value: Option<f64>,
}

impl SearchNode {
    fn new(game: &Game, state: GameState) -> Self {
        let agent = game.next_decider(&state);
        SearchNode {
            state,
            agent,
            edges: Vec::new(),
            expanded: false,
            leaf_value: None,
        }
    }

    pub fn visits(&self) -> u32 {
        self.edges.iter().map(|e| e.stats.visits).sum()
    }

    pub fn is_expanded(&self) -> bool {
        self.expanded
    }
}

/// Outcome of searching from the root.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Visit-count distribution over the root's legal actions.
    pub policy: Vec<(AgentAction, f64)>,
    pub action: AgentAction,
    pub visits: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
    root: usize,
}

impl SearchTree {
    pub fn new(game: &Game, state: GameState) -> Self {
        SearchTree {
            nodes: vec![SearchNode::new(game, state)],
            root: 0,
        }
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[self.root]
    }

    pub fn node(&self, idx: usize) -> &SearchNode {
        &self.nodes[idx]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn depth(&self, idx: usize) -> u32 {
        self.nodes[idx].state.epoch() - self.nodes[self.root].state.epoch()
    }

    /// Enumerates legal actions with network priors; returns the node value.
    pub fn expand_and_evaluate<E: Evaluator + ?Sized>(
        &mut self,
        idx: usize,
        game: &Game,
        evaluator: &E,
        config: &SearchConfig,
    ) -> Result<f64, SearchError> {
        let node = &mut self.nodes[idx];
        node.expanded = true;
        let Some(agent) = node.agent else {
            node.leaf_value = Some(0.0);
            return Ok(0.0);
        };
        let legal = game.legal_actions(&node.state, agent)?;
        let pv = evaluator.evaluate(game, &node.state)?;
        let board = node.state.board();
        let mut edges: Vec<Edge> = legal
            .iter()
            .map(|&a| match a {
                AgentAction::Pick(t) => {
                    let col = board.col_of(t);
                    Edge::new(a, Some(col), pv.p.get(col).copied().unwrap_or(0.0))
                }
                AgentAction::NoOp => Edge::new(a, None, config.noop_prior),
            })
            .collect();
        let mass: f64 = edges.iter().map(|e| e.stats.prior).sum();
        let n = edges.len() as f64;
        for e in edges.iter_mut() {
            e.stats.prior = if mass > 0.0 { e.stats.prior / mass } else { 1.0 / n };
        }
        node.edges = edges;
        node.leaf_value = Some(pv.v);
        Ok(pv.v)
    }

    fn leaf_value<E: Evaluator + ?Sized>(&mut self, idx: usize, game: &Game, evaluator: &E) -> Result<f64, SearchError> {
        if let Some(v) = self.nodes[idx].leaf_value {
            return Ok(v);
        }
        let node = &self.nodes[idx];
        let v = if node.agent.is_none() {
            0.0
        } else {
            evaluator.evaluate(game, &node.state)?.v
        };
        self.nodes[idx].leaf_value = Some(v);
        Ok(v)
    }

    fn child(&mut self, game: &Game, idx: usize, edge: usize) -> Result<usize, SearchError> {
        if let Some(c) = self.nodes[idx].edges[edge].child {
            return Ok(c);
        }
        let node = &self.nodes[idx];
        let agent = node.agent.ok_or(SearchError::NoDecision)?;
        let out = game.step(&node.state, agent, node.edges[edge].action)?;
        let child = self.nodes.len();
        self.nodes.push(SearchNode::new(game, out.next));
        let e = &mut self.nodes[idx].edges[edge];
        e.reward = out.reward;
        e.child = Some(child);
        Ok(child)
    }

    /// Adds one visit and the matching return to every edge of `path`.
    pub fn backup(&mut self, path: &[(usize, usize)], leaf_value: f64) {
        let rewards: Vec<f64> = path
            .iter()
            .map(|&(n, e)| self.nodes[n].edges[e].reward as f64)
            .collect();
        for (&(n, e), g) in path.iter().zip(path_returns(&rewards, leaf_value)) {
            let stats = &mut self.nodes[n].edges[e].stats;
            stats.visits += 1;
            stats.total_value += g;
        }
    }

    fn simulate<E: Evaluator + ?Sized>(&mut self, game: &Game, evaluator: &E, config: &SearchConfig) -> Result<(), SearchError> {
        let mut path = Vec::new();
        let mut idx = self.root;
        let leaf = loop {
            let node = &self.nodes[idx];
            if node.agent.is_none() {
                break 0.0;
            }
            if !node.expanded {
                let capped = matches!(config.max_depth, Some(d) if self.depth(idx) >= d);
                if capped && idx != self.root {
                    break self.leaf_value(idx, game, evaluator)?;
                }
                break self.expand_and_evaluate(idx, game, evaluator, config)?;
            }
            let edge = select_edge(&node.edges, config.c_puct);
            path.push((idx, edge));
            idx = self.child(game, idx, edge)?;
        };
        self.backup(&path, leaf);
        Ok(())
    }

    fn result(&self) -> SearchResult {
        let root = self.root();
        let visits: Vec<u32> = root.edges.iter().map(|e| e.stats.visits).collect();
        let total: u32 = visits.iter().sum();
        let policy = root
            .edges
            .iter()
            .map(|e| {
                let p = if total == 0 {
                    if root.edges.len() == 1 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    f64::from(e.stats.visits) / f64::from(total)
                };
                (e.action, p)
            })
            .collect();
        let best = argmax_by(&root.edges, |e| f64::from(e.stats.visits));
        SearchResult {
            policy,
            action: root.edges[best].action,
            visits,
        }
    }

    /// Runs `config.simulations` passes from the root and returns the visit
    /// distribution with the most-visited action.
    pub fn search<E: Evaluator + ?Sized>(&mut self, game: &Game, evaluator: &E, config: &SearchConfig) -> Result<SearchResult, SearchError> {
        let root = self.root;
        let agent = self.nodes[root].agent.ok_or(SearchError::NoDecision)?;
        if !self.nodes[root].expanded {
            let legal = game.legal_actions(&self.nodes[root].state, agent)?;
            if legal.len() == 1 {
                return Ok(SearchResult {
                    policy: vec![(legal[0], 1.0)],
                    action: legal[0],
                    visits: vec![0],
                });
            }
            self.expand_and_evaluate(root, game, evaluator, config)?;
        }
        if self.nodes[root].edges.len() > 1 {
            for _ in 0..config.simulations {
                self.simulate(game, evaluator, config)?;
            }
        }
        Ok(self.result())
    }

    /// Makes the child reached by `action` the new root, keeping its subtree
    /// and dropping everything else.
    pub fn advance_root(&mut self, game: &Game, action: AgentAction) -> Result<(), SearchError> {
        let root = self.root;
        if !self.nodes[root].expanded {
            let agent = self.nodes[root].agent.ok_or(SearchError::NoDecision)?;
            if !game.legal_actions(&self.nodes[root].state, agent)?.contains(&action) {
                return Err(SearchError::NotAnEdge(action));
            }
            let next = game.step(&self.nodes[root].state, agent, action)?.next;
            *self = SearchTree::new(game, next);
            return Ok(());
        }
        let edge = self.nodes[root]
            .edges
            .iter()
            .position(|e| e.action == action)
            .ok_or(SearchError::NotAnEdge(action))?;
        let child = self.child(game, root, edge)?;
        self.compact(child);
        Ok(())
    }

    fn compact(&mut self, new_root: usize) {
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut order = vec![new_root];
        remap[new_root] = 0;
        let mut i = 0;
        while i < order.len() {
            let idx = order[i];
            for e in &self.nodes[idx].edges {
                if let Some(c) = e.child {
                    remap[c] = order.len();
                    order.push(c);
                }
            }
            i += 1;
        }
        let mut old: Vec<Option<SearchNode>> = std::mem::take(&mut self.nodes).into_iter().map(Some).collect();
        self.nodes = order
            .iter()
            .map(|&idx| {
                let mut n = old[idx].take().expect("each node is reachable once");
                for e in n.edges.iter_mut() {
                    e.child = e.child.map(|c| remap[c]);
                }
                n
            })
            .collect();
        self.root = 0;
    }
}

/// One-shot search from a fresh tree.
pub fn search<E: Evaluator + ?Sized>(
    game: &Game,
    state: &GameState,
    evaluator: &E,
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    SearchTree::new(game, state.clone()).search(game, evaluator, config)
}

/// Plays every decision with tree search, reusing the subtree of the taken
/// action between decisions. The first `temperature_moves` decisions that
/// have a real choice sample in proportion to visit counts; later ones take
/// the most-visited action.
pub struct SearchPolicy<'a, E: Evaluator + ?Sized> {
    evaluator: &'a E,
    config: SearchConfig,
    temperature_moves: usize,
    sampled: usize,
    tree: Option<SearchTree>,
}

impl<'a, E: Evaluator + ?Sized> SearchPolicy<'a, E> {
    pub fn new(evaluator: &'a E, config: SearchConfig, temperature_moves: usize) -> Self {
        SearchPolicy {
            evaluator,
            config,
            temperature_moves,
            sampled: 0,
            tree: None,
        }
    }

    pub fn greedy(evaluator: &'a E, config: SearchConfig) -> Self {
        Self::new(evaluator, config, 0)
    }

    /// Searches from `state`, reusing the retained subtree when it matches.
    pub fn search(&mut self, game: &Game, state: &GameState) -> Result<SearchResult, SearchError> {
        let reuse = matches!(&self.tree, Some(t) if &t.root().state == state);
        if !reuse {
            self.tree = Some(SearchTree::new(game, state.clone()));
        }
        let tree = self.tree.as_mut().expect("tree was just set");
        tree.search(game, self.evaluator, &self.config)
    }

    /// Moves the retained tree along an action taken by anyone.
    pub fn observe(&mut self, game: &Game, state: &GameState, action: AgentAction) -> Result<(), SearchError> {
        match &mut self.tree {
            Some(t) if &t.root().state == state => t.advance_root(game, action),
            _ => {
                self.tree = None;
                Ok(())
            }
        }
    }
}

fn sample(policy: &[(AgentAction, f64)], rng: &mut ChaCha8Rng) -> AgentAction {
    let total: f64 = policy.iter().map(|(_, p)| p).sum();
    let mut draw = rng.gen_range(0.0..total);
    for (a, p) in policy {
        if draw < *p {
            return *a;
        }
        draw -= p;
    }
    policy.iter().rev().find(|(_, p)| *p > 0.0).map(|(a, _)| *a).unwrap_or(policy[0].0)
}

impl<E: Evaluator + ?Sized> DecisionPolicy for SearchPolicy<'_, E> {
    fn decide(
        &mut self,
        game: &Game,
        state: &GameState,
        _agent: AgentId,
        legal: &[AgentAction],
        rng: &mut ChaCha8Rng,
    ) -> Result<Decision, GameError> {
        let policy_err = |e: SearchError| GameError::Policy(e.to_string());
        let result = self.search(game, state).map_err(policy_err)?;
        let action = if legal.len() > 1 && self.sampled < self.temperature_moves {
            self.sampled += 1;
            sample(&result.policy, rng)
        } else {
            result.action
        };
        self.observe(game, state, action).map_err(policy_err)?;
        Ok(Decision {
            action,
            search_policy: Some(result.policy),
        })
    }
}
