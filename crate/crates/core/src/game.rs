//! The multi-agent decision process over an assembly chessboard.
//!
//! Time advances in decision epochs. At the start of an epoch every idle
//! agent chooses, humans first and then robots, each class in index order. A
//! choice is either a pick of a bottom-row stone or an explicit no-op. Once
//! every idle agent has chosen, the clock jumps to the earliest completion
//! among busy agents and the reward is minus the time that passed.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::board::{Board, BoardError};
use crate::jobspec::{derive_precedence, JobSpec, PrecedenceMap, TaskId, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("agent {0} is not idle")]
    AgentNotIdle(AgentId),
    #[error("agent {0} has already acted this epoch")]
    AlreadyDecided(AgentId),
    #[error("agent {0} is not on the roster")]
    UnknownAgent(AgentId),
    #[error("illegal action {action:?} for agent {agent}")]
    IllegalAction { agent: AgentId, action: AgentAction },
    #[error("idle agents still have to act this epoch")]
    PendingDecisions,
    #[error("no agent is busy and no legal pick remains")]
    Deadlock,
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error("policy failure: {0}")]
    Policy(String),
}

/// Precedence semantics for stones that have descended onto row 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GravityMode {
    /// A stone is pickable only once all of its predecessors have completed.
    #[default]
    Strict,
    /// A stone is pickable as soon as it reaches row 0.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentClass {
    Human,
    Robot,
}

/// An agent; `index` is 1-based within its class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentId {
    pub class: AgentClass,
    pub index: usize,
}

impl AgentId {
    pub fn human(index: usize) -> Self {
        AgentId {
            class: AgentClass::Human,
            index,
        }
    }

    pub fn robot(index: usize) -> Self {
        AgentId {
            class: AgentClass::Robot,
            index,
        }
    }

    pub fn can_do(self, kind: TaskKind) -> bool {
        match self.class {
            AgentClass::Human => kind.human_capable(),
            AgentClass::Robot => kind.robot_capable(),
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.class {
            AgentClass::Human => 'H',
            AgentClass::Robot => 'R',
        };
        write!(f, "{prefix}{}", self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentStatus {
    Idle,
    Busy { task: TaskId, remaining: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentAction {
    Pick(TaskId),
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameState {
    board: Board,
    agents: Vec<AgentStatus>,
    decided: Vec<bool>,
    completed: Vec<bool>,
    completed_count: usize,
    clock: u64,
    epoch: u32,
}

impl GameState {
    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Number of time advances since the start of the episode.
    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn is_completed(&self, task: TaskId) -> bool {
        self.completed[task.index()]
    }

    pub fn completed_count(&self) -> usize {
        self.completed_count
    }

    pub fn busy_count(&self) -> usize {
        self.agents
            .iter()
            .filter(|a| matches!(a, AgentStatus::Busy { .. }))
            .count()
    }

    /// Tasks currently being worked on.
    pub fn busy_tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.agents.iter().filter_map(|a| match a {
            AgentStatus::Busy { task, .. } => Some(*task),
            AgentStatus::Idle => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionResult {
    pub next: GameState,
    pub reward: i64,
    pub elapsed: u64,
    pub freed: Vec<AgentId>,
}

/// Result of one micro-decision, including any time advance it triggered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub next: GameState,
    pub reward: i64,
    pub advanced: bool,
    pub freed: Vec<AgentId>,
}

/// One scheduled task execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub agent: AgentId,
    pub task: TaskId,
    pub start: u64,
    pub end: u64,
}

/// What a policy returns for one micro-decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: AgentAction,
    /// Search visit distribution over the legal actions, when the policy has one.
    pub search_policy: Option<Vec<(AgentAction, f64)>>,
}

impl Decision {
    pub fn plain(action: AgentAction) -> Self {
        Decision {
            action,
            search_policy: None,
        }
    }
}

pub trait DecisionPolicy {
    fn decide(
        &mut self,
        game: &Game,
        state: &GameState,
        agent: AgentId,
        legal: &[AgentAction],
        rng: &mut ChaCha8Rng,
    ) -> Result<Decision, GameError>;
}

impl<F> DecisionPolicy for F
where
    F: FnMut(&Game, &GameState, AgentId, &[AgentAction], &mut ChaCha8Rng) -> AgentAction,
{
    fn decide(
        &mut self,
        game: &Game,
        state: &GameState,
        agent: AgentId,
        legal: &[AgentAction],
        rng: &mut ChaCha8Rng,
    ) -> Result<Decision, GameError> {
        Ok(Decision::plain(self(game, state, agent, legal, rng)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    pub state: GameState,
    pub agent: AgentId,
    pub action: AgentAction,
    pub search_policy: Option<Vec<(AgentAction, f64)>>,
    /// Reward produced by the time advance this decision triggered (0 if none).
    pub reward: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<EpisodeStep>,
    pub makespan: u64,
    pub schedule: Vec<ScheduleEntry>,
}

impl EpisodeRecord {
    pub fn total_reward(&self) -> i64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Rules of one job: the spec, its precedence relation and the gravity mode.
#[derive(Debug, Clone)]
pub struct Game {
    spec: JobSpec,
    precedence: PrecedenceMap,
    mode: GravityMode,
    roster: Vec<AgentId>,
}

impl Game {
    pub fn new(spec: JobSpec) -> Self {
        Self::with_mode(spec, GravityMode::Strict)
    }

    pub fn with_mode(spec: JobSpec, mode: GravityMode) -> Self {
        let precedence = derive_precedence(&spec);
        let roster = (1..=spec.humans)
            .map(AgentId::human)
            .chain((1..=spec.robots).map(AgentId::robot))
            .collect();
        Game {
            spec,
            precedence,
            mode,
            roster,
        }
    }

    pub fn spec(&self) -> &JobSpec {
        &self.spec
    }

    pub fn precedence(&self) -> &PrecedenceMap {
        &self.precedence
    }

    pub fn mode(&self) -> GravityMode {
        self.mode
    }

    /// Agents in decision order: humans first, then robots.
    pub fn roster(&self) -> &[AgentId] {
        &self.roster
    }

    fn slot(&self, agent: AgentId) -> Result<usize, GameError> {
        let (base, count) = match agent.class {
            AgentClass::Human => (0, self.spec.humans),
            AgentClass::Robot => (self.spec.humans, self.spec.robots),
        };
        if agent.index == 0 || agent.index > count {
            return Err(GameError::UnknownAgent(agent));
        }
        Ok(base + agent.index - 1)
    }

    pub fn agent_status(&self, state: &GameState, agent: AgentId) -> Result<AgentStatus, GameError> {
        Ok(state.agents[self.slot(agent)?])
    }

    pub fn duration(&self, task: TaskId) -> u32 {
        self.spec.task(task).duration
    }

    pub fn initial_state(&self) -> GameState {
        let mut board = Board::from_spec(&self.spec);
        board.settle();
        let agents = self.roster.len();
        GameState {
            board,
            agents: vec![AgentStatus::Idle; agents],
            decided: vec![false; agents],
            completed: vec![false; self.spec.tasks.len()],
            completed_count: 0,
            clock: 0,
            epoch: 0,
        }
    }

    pub fn is_terminal(&self, state: &GameState) -> bool {
        state.completed_count == self.spec.tasks.len()
    }

    fn pickable(&self, state: &GameState, task: TaskId) -> bool {
        match self.mode {
            GravityMode::Literal => true,
            GravityMode::Strict => self
                .precedence
                .predecessors(task)
                .iter()
                .all(|&p| state.completed[p.index()]),
        }
    }

    fn legal_picks(&self, state: &GameState, agent: AgentId) -> Vec<AgentAction> {
        state
            .board
            .bottom_row_tasks()
            .into_iter()
            .filter(|&t| agent.can_do(state.board.kind_of(t)) && self.pickable(state, t))
            .map(AgentAction::Pick)
            .collect()
    }

    fn pending(&self, state: &GameState, slot: usize) -> bool {
        state.agents[slot] == AgentStatus::Idle && !state.decided[slot]
    }

    /// The next agent that has to act in the current epoch, if any.
    pub fn next_decider(&self, state: &GameState) -> Option<AgentId> {
        if self.is_terminal(state) {
            return None;
        }
        (0..self.roster.len())
            .find(|&s| self.pending(state, s))
            .map(|s| self.roster[s])
    }

    /// Legal choices for an idle agent, picks by column then `NoOp`.
    ///
    /// `NoOp` is withheld only when waiting would stall the job: nobody is
    /// busy and no other agent still to act this epoch has a pick.
    pub fn legal_actions(&self, state: &GameState, agent: AgentId) -> Result<Vec<AgentAction>, GameError> {
        let slot = self.slot(agent)?;
        if state.agents[slot] != AgentStatus::Idle {
            return Err(GameError::AgentNotIdle(agent));
        }
        if state.decided[slot] {
            return Err(GameError::AlreadyDecided(agent));
        }
        let mut actions = self.legal_picks(state, agent);
        let someone_busy = state.busy_count() > 0;
        let waiting_is_safe = someone_busy
            || (0..self.roster.len()).any(|s| {
                s != slot && self.pending(state, s) && !self.legal_picks(state, self.roster[s]).is_empty()
            });
        if waiting_is_safe {
            actions.push(AgentAction::NoOp);
        } else if actions.is_empty() {
            return Err(GameError::Deadlock);
        }
        Ok(actions)
    }

    /// Applies one agent's choice without advancing time.
    pub fn apply_pick(&self, state: &GameState, agent: AgentId, action: AgentAction) -> Result<GameState, GameError> {
        let legal = self.legal_actions(state, agent)?;
        if !legal.contains(&action) {
            return Err(GameError::IllegalAction { agent, action });
        }
        let slot = self.slot(agent)?;
        let mut next = state.clone();
        next.decided[slot] = true;
        if let AgentAction::Pick(task) = action {
            next.board.remove_and_cascade(task)?;
            next.agents[slot] = AgentStatus::Busy {
                task,
                remaining: self.duration(task),
            };
        }
        Ok(next)
    }

    /// Jumps the clock to the earliest completion among busy agents.
    pub fn advance_time(&self, state: &GameState) -> Result<TransitionResult, GameError> {
        if self.is_terminal(state) {
            return Ok(TransitionResult {
                next: state.clone(),
                reward: 0,
                elapsed: 0,
                freed: Vec::new(),
            });
        }
        if self.next_decider(state).is_some() {
            return Err(GameError::PendingDecisions);
        }
        let elapsed = state
            .agents
            .iter()
            .filter_map(|a| match a {
                AgentStatus::Busy { remaining, .. } => Some(*remaining),
                AgentStatus::Idle => None,
            })
            .min()
            .ok_or(GameError::Deadlock)?;
        let mut next = state.clone();
        let mut freed = Vec::new();
        for (slot, status) in next.agents.iter_mut().enumerate() {
            if let AgentStatus::Busy { task, remaining } = *status {
                if remaining == elapsed {
                    next.completed[task.index()] = true;
                    next.completed_count += 1;
                    *status = AgentStatus::Idle;
                    freed.push(self.roster[slot]);
                } else {
                    *status = AgentStatus::Busy {
                        task,
                        remaining: remaining - elapsed,
                    };
                }
            }
        }
        next.decided.iter_mut().for_each(|d| *d = false);
        next.clock += u64::from(elapsed);
        next.epoch += 1;
        Ok(TransitionResult {
            next,
            reward: -i64::from(elapsed),
            elapsed: u64::from(elapsed),
            freed,
        })
    }

    /// Applies a choice and, if it closed the epoch, advances time.
    pub fn step(&self, state: &GameState, agent: AgentId, action: AgentAction) -> Result<StepOutcome, GameError> {
        let next = self.apply_pick(state, agent, action)?;
        if self.next_decider(&next).is_some() || self.is_terminal(&next) {
            return Ok(StepOutcome {
                next,
                reward: 0,
                advanced: false,
                freed: Vec::new(),
            });
        }
        let t = self.advance_time(&next)?;
        Ok(StepOutcome {
            next: t.next,
            reward: t.reward,
            advanced: true,
            freed: t.freed,
        })
    }

    /// Plays one complete episode.
    pub fn run_episode<P: DecisionPolicy + ?Sized>(&self, policy: &mut P, seed: u64) -> Result<EpisodeRecord, GameError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = self.initial_state();
        let mut steps = Vec::new();
        let mut schedule = Vec::new();
        while let Some(agent) = self.next_decider(&state) {
            let legal = self.legal_actions(&state, agent)?;
            let decision = policy.decide(self, &state, agent, &legal, &mut rng)?;
            if !legal.contains(&decision.action) {
                return Err(GameError::IllegalAction {
                    agent,
                    action: decision.action,
                });
            }
            if let AgentAction::Pick(task) = decision.action {
                schedule.push(ScheduleEntry {
                    agent,
                    task,
                    start: state.clock,
                    end: state.clock + u64::from(self.duration(task)),
                });
            }
            let out = self.step(&state, agent, decision.action)?;
            steps.push(EpisodeStep {
                state,
                agent,
                action: decision.action,
                search_policy: decision.search_policy,
                reward: out.reward,
            });
            state = out.next;
        }
        if !self.is_terminal(&state) {
            return Err(GameError::Deadlock);
        }
        schedule.sort_by_key(|e| (e.start, e.agent, e.task));
        Ok(EpisodeRecord {
            steps,
            makespan: state.clock,
            schedule,
        })
    }

    pub fn action_label(&self, action: AgentAction) -> String {
        match action {
            AgentAction::Pick(t) => format!("pick:{}", self.spec.task(t).id),
            AgentAction::NoOp => "noop".to_string(),
        }
    }

    /// CSV with header `agent,task,start,end`.
    pub fn schedule_csv(&self, schedule: &[ScheduleEntry]) -> String {
        let mut out = String::from("agent,task,start,end\n");
        for e in schedule {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.agent,
                self.spec.task(e.task).id,
                e.start,
                e.end
            ));
        }
        out
    }

    /// CSV with header `epoch,clock,agent,action,reward`, one row per decision.
    pub fn episode_log_csv(&self, record: &EpisodeRecord) -> String {
        let mut out = String::from("epoch,clock,agent,action,reward\n");
        for s in &record.steps {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.state.epoch,
                s.state.clock,
                s.agent,
                self.action_label(s.action),
                s.reward
            ));
        }
        out
    }
}
