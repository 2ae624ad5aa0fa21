//! Reference schedulers: budgeted exhaustive enumeration and uniform random
//! play.
//!
//! Exhaustive search walks every legal micro-decision sequence with humans
//! deciding first. Depth is measured in decision epochs. Enumeration is
//! iterative deepening: pass `d` walks all routes up to epoch `d` again, so
//! when the node budget runs out the counts of every finished depth are
//! exact. The walk itself is plain traversal with no pruning.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::game::{AgentAction, AgentId, Game, GameError, GameState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Complete,
    /// Ran out of nodes while enumerating this epoch depth.
    BudgetExceeded(u32),
}

/// Counts for one epoch depth, reported once that depth is fully enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepthCount {
    pub depth: u32,
    /// Distinct decision prefixes that close epoch `depth`.
    pub routes: u64,
    /// Those of them that finish the job.
    pub leaves: u64,
    /// Nodes expanded since the start of the search when this depth finished.
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    /// Best makespan among complete routes seen; optimal when `Complete`.
    pub optimum: Option<u64>,
    /// Decisions of the first route found with that makespan.
    pub route: Vec<(AgentId, AgentAction)>,
    pub depths: Vec<DepthCount>,
    pub nodes_expanded: u64,
    pub termination: Termination,
}

impl OracleResult {
    pub fn is_complete(&self) -> bool {
        self.termination == Termination::Complete
    }

    /// Number of complete routes; exact only when `Complete`.
    pub fn complete_routes(&self) -> u64 {
        self.depths.iter().map(|d| d.leaves).sum()
    }

    /// CSV with header `depth,routes,nodes`.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("depth,routes,nodes\n");
        for d in &self.depths {
            out.push_str(&format!("{},{},{}\n", d.depth, d.routes, d.nodes));
        }
        out
    }
}

struct Walk<'a> {
    game: &'a Game,
    budget: u64,
    nodes: u64,
    limit: u32,
    routes: u64,
    leaves: u64,
    cut: bool,
    best: Option<u64>,
    best_route: Vec<(AgentId, AgentAction)>,
    path: Vec<(AgentId, AgentAction)>,
}

struct OutOfBudget;

impl Walk<'_> {
    fn visit(&mut self, state: &GameState) -> Result<(), OutOfBudget> {
        let Some(agent) = self.game.next_decider(state) else {
            return Ok(());
        };
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(OutOfBudget);
        }
        let legal = self
            .game
            .legal_actions(state, agent)
            .expect("decider is idle and undecided");
        for action in legal {
            let out = self
                .game
                .step(state, agent, action)
                .expect("legal actions always step");
            self.path.push((agent, action));
            let terminal = self.game.is_terminal(&out.next);
            if terminal && self.best.is_none_or(|b| out.next.clock() < b) {
                self.best = Some(out.next.clock());
                self.best_route = self.path.clone();
            }
            let epoch = out.next.epoch();
            let res = if out.advanced && epoch == self.limit {
                self.routes += 1;
                if terminal {
                    self.leaves += 1;
                } else {
                    self.cut = true;
                }
                Ok(())
            } else if terminal {
                Ok(())
            } else {
                self.visit(&out.next)
            };
            self.path.pop();
            res?;
        }
        Ok(())
    }
}

/// Enumerates every route of `game` until all are complete or more than
/// `node_budget` decision nodes have been expanded.
pub fn exhaustive_search(game: &Game, node_budget: u64) -> OracleResult {
    let start = game.initial_state();
    let mut walk = Walk {
        game,
        budget: node_budget.max(1),
        nodes: 0,
        limit: 0,
        routes: 0,
        leaves: 0,
        cut: false,
        best: None,
        best_route: Vec::new(),
        path: Vec::new(),
    };
    let mut depths = Vec::new();
    let termination = loop {
        walk.limit += 1;
        walk.routes = 0;
        walk.leaves = 0;
        walk.cut = false;
        if walk.visit(&start).is_err() {
            break Termination::BudgetExceeded(walk.limit);
        }
        depths.push(DepthCount {
            depth: walk.limit,
            routes: walk.routes,
            leaves: walk.leaves,
            nodes: walk.nodes,
        });
        if !walk.cut {
            break Termination::Complete;
        }
    };
    OracleResult {
        optimum: walk.best,
        route: walk.best_route,
        depths,
        nodes_expanded: walk.nodes.min(walk.budget),
        termination,
    }
}

/// Makespans of a batch of random episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub makespans: Vec<u64>,
    pub mean: f64,
    pub min: u64,
    pub max: u64,
    /// `(makespan, count)` for every integer from `min` to `max`.
    pub histogram: Vec<(u64, usize)>,
}

impl SampleStats {
    pub fn from_makespans(makespans: Vec<u64>) -> Self {
        let min = makespans.iter().copied().min().unwrap_or(0);
        let max = makespans.iter().copied().max().unwrap_or(0);
        let mean = if makespans.is_empty() {
            0.0
        } else {
            makespans.iter().sum::<u64>() as f64 / makespans.len() as f64
        };
        let mut histogram: Vec<(u64, usize)> = if makespans.is_empty() {
            Vec::new()
        } else {
            (min..=max).map(|m| (m, 0)).collect()
        };
        for &m in &makespans {
            histogram[(m - min) as usize].1 += 1;
        }
        SampleStats {
            makespans,
            mean,
            min,
            max,
            histogram,
        }
    }

    pub fn trajectories(&self) -> usize {
        self.makespans.len()
    }

    /// Trajectories finishing within `makespan`.
    pub fn count_at_most(&self, makespan: u64) -> usize {
        self.makespans.iter().filter(|&&m| m <= makespan).count()
    }

    /// CSV with header `makespan,count`.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("makespan,count\n");
        for (m, c) in &self.histogram {
            out.push_str(&format!("{m},{c}\n"));
        }
        out
    }
}

/// Uniform over picks; `NoOp` only when nothing can be picked.
pub fn random_action(legal: &[AgentAction], rng: &mut ChaCha8Rng) -> AgentAction {
    let picks: Vec<AgentAction> = legal
        .iter()
        .copied()
        .filter(|a| matches!(a, AgentAction::Pick(_)))
        .collect();
    if picks.is_empty() {
        AgentAction::NoOp
    } else {
        picks[rng.gen_range(0..picks.len())]
    }
}

/// Seed of trajectory `index` in a batch started from `seed`.
pub fn trajectory_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.gen()
}

/// Plays `trajectories` uniformly random episodes.
pub fn random_rollouts(game: &Game, trajectories: usize, seed: u64) -> Result<SampleStats, GameError> {
    let makespans = (0..trajectories as u64)
        .into_par_iter()
        .map(|i| {
            let mut policy = |_: &Game, _: &GameState, _: AgentId, legal: &[AgentAction], rng: &mut ChaCha8Rng| {
                random_action(legal, rng)
            };
            game.run_episode(&mut policy, trajectory_seed(seed, i))
                .map(|r| r.makespan)
        })
        .collect::<Result<Vec<u64>, GameError>>()?;
    Ok(SampleStats::from_makespans(makespans))
}
