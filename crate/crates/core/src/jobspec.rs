//! Job definitions: the stones of an assembly chessboard, the agent roster,
//! and the precedence relation implied by stone geometry.
//!
//! The text format is line oriented:
//!
//! ```text
//! board <w> <h>
//! agents <humans> <robots>
//! task <id> <H|R|E> <duration> <col> <row> <span>
//! ```
//!
//! `#` starts a comment. Rows count from the bottom, columns from the left.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Which class of agent may perform a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    /// Black stone.
    HumanOnly,
    /// White stone.
    RobotOnly,
    /// Grey stone.
    Either,
}

impl TaskKind {
    pub fn code(self) -> char {
        match self {
            TaskKind::HumanOnly => 'H',
            TaskKind::RobotOnly => 'R',
            TaskKind::Either => 'E',
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "H" => Some(TaskKind::HumanOnly),
            "R" => Some(TaskKind::RobotOnly),
            "E" => Some(TaskKind::Either),
            _ => None,
        }
    }

    /// Channel index used by the network input encoding.
    pub fn channel(self) -> usize {
        match self {
            TaskKind::HumanOnly => 0,
            TaskKind::RobotOnly => 1,
            TaskKind::Either => 2,
        }
    }

    pub fn human_capable(self) -> bool {
        matches!(self, TaskKind::HumanOnly | TaskKind::Either)
    }

    pub fn robot_capable(self) -> bool {
        matches!(self, TaskKind::RobotOnly | TaskKind::Either)
    }
}

/// Dense index of a task within its [`JobSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId(pub u16);

impl TaskId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: String,
    pub kind: TaskKind,
    pub duration: u32,
    pub col: usize,
    pub row: usize,
    pub span: usize,
}

impl Task {
    pub fn columns(&self) -> std::ops::Range<usize> {
        self.col..self.col + self.span
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSpec {
    pub width: usize,
    pub height: usize,
    pub humans: usize,
    pub robots: usize,
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JobSpecError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate task id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("tasks `{first}` and `{second}` overlap at cell ({col},{row})")]
    Overlap {
        first: String,
        second: String,
        col: usize,
        row: usize,
    },
    #[error("task `{id}` has kind {kind:?} but no capable agent is available")]
    NoCapableAgent { id: String, kind: TaskKind },
    #[error("task `{id}` does not fit on a {width}x{height} board")]
    OutOfBounds {
        id: String,
        width: usize,
        height: usize,
    },
    #[error("task `{id}` must have a positive duration")]
    ZeroDuration { id: String },
    #[error("task `{id}` must span at least one column")]
    ZeroSpan { id: String },
    #[error("board must be at least 1x1")]
    EmptyBoard,
    #[error("at least one agent is required")]
    NoAgents,
    #[error("job has no tasks")]
    NoTasks,
    #[error("too many tasks ({0}); at most 65535 are supported")]
    TooManyTasks(usize),
}

fn syntax(line: usize, message: impl Into<String>) -> JobSpecError {
    JobSpecError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, field: &str, raw: &str) -> Result<T, JobSpecError> {
    raw.parse()
        .map_err(|_| syntax(line, format!("invalid {field} `{raw}`")))
}

/// Parses and validates a job definition.
pub fn parse_jobspec(text: &str) -> Result<JobSpec, JobSpecError> {
    let mut board: Option<(usize, usize)> = None;
    let mut agents: Option<(usize, usize)> = None;
    let mut tasks: Vec<Task> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = content.split_whitespace().collect();
        let Some(&keyword) = fields.first() else {
            continue;
        };
        match keyword {
            "board" => {
                if board.is_some() {
                    return Err(syntax(line, "duplicate `board` line"));
                }
                if agents.is_some() || !tasks.is_empty() {
                    return Err(syntax(line, "`board` must be the first directive"));
                }
                if fields.len() != 3 {
                    return Err(syntax(line, "expected `board <w> <h>`"));
                }
                let w = parse_num(line, "width", fields[1])?;
                let h = parse_num(line, "height", fields[2])?;
                board = Some((w, h));
            }
            "agents" => {
                if board.is_none() {
                    return Err(syntax(line, "`agents` must follow `board`"));
                }
                if agents.is_some() {
                    return Err(syntax(line, "duplicate `agents` line"));
                }
                if !tasks.is_empty() {
                    return Err(syntax(line, "`agents` must precede the tasks"));
                }
                if fields.len() != 3 {
                    return Err(syntax(line, "expected `agents <humans> <robots>`"));
                }
                let m = parse_num(line, "human count", fields[1])?;
                let n = parse_num(line, "robot count", fields[2])?;
                agents = Some((m, n));
            }
            "task" => {
                if agents.is_none() {
                    return Err(syntax(line, "`task` before `board` and `agents`"));
                }
                if fields.len() != 7 {
                    return Err(syntax(
                        line,
                        "expected `task <id> <H|R|E> <duration> <col> <row> <span>`",
                    ));
                }
                let id = fields[1].to_string();
                let kind = TaskKind::from_code(fields[2])
                    .ok_or_else(|| syntax(line, format!("unknown task kind `{}`", fields[2])))?;
                let duration = parse_num(line, "duration", fields[3])?;
                let col = parse_num(line, "column", fields[4])?;
                let row = parse_num(line, "row", fields[5])?;
                let span = parse_num(line, "span", fields[6])?;
                if seen.insert(id.clone(), line).is_some() {
                    return Err(JobSpecError::DuplicateId { line, id });
                }
                tasks.push(Task {
                    id,
                    kind,
                    duration,
                    col,
                    row,
                    span,
                });
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }

    let (width, height) = board.ok_or_else(|| syntax(1, "missing `board` line"))?;
    let (humans, robots) = agents.ok_or_else(|| syntax(1, "missing `agents` line"))?;
    let spec = JobSpec {
        width,
        height,
        humans,
        robots,
        tasks,
    };
    spec.validate()?;
    Ok(spec)
}

impl JobSpec {
    /// Checks every structural invariant of a job.
    pub fn validate(&self) -> Result<(), JobSpecError> {
        if self.width == 0 || self.height == 0 {
            return Err(JobSpecError::EmptyBoard);
        }
        if self.humans + self.robots == 0 {
            return Err(JobSpecError::NoAgents);
        }
        if self.tasks.is_empty() {
            return Err(JobSpecError::NoTasks);
        }
        if self.tasks.len() > u16::MAX as usize {
            return Err(JobSpecError::TooManyTasks(self.tasks.len()));
        }
        let mut ids: HashMap<&str, ()> = HashMap::new();
        let mut cells: Vec<Option<usize>> = vec![None; self.width * self.height];
        for (i, task) in self.tasks.iter().enumerate() {
            if ids.insert(task.id.as_str(), ()).is_some() {
                return Err(JobSpecError::DuplicateId {
                    line: 0,
                    id: task.id.clone(),
                });
            }
            if task.duration == 0 {
                return Err(JobSpecError::ZeroDuration {
                    id: task.id.clone(),
                });
            }
            if task.span == 0 {
                return Err(JobSpecError::ZeroSpan {
                    id: task.id.clone(),
                });
            }
            if task.col + task.span > self.width || task.row >= self.height {
                return Err(JobSpecError::OutOfBounds {
                    id: task.id.clone(),
                    width: self.width,
                    height: self.height,
                });
            }
            let capable = match task.kind {
                TaskKind::HumanOnly => self.humans > 0,
                TaskKind::RobotOnly => self.robots > 0,
                TaskKind::Either => true,
            };
            if !capable {
                return Err(JobSpecError::NoCapableAgent {
                    id: task.id.clone(),
                    kind: task.kind,
                });
            }
            for col in task.columns() {
                let cell = &mut cells[task.row * self.width + col];
                if let Some(other) = *cell {
                    return Err(JobSpecError::Overlap {
                        first: self.tasks[other].id.clone(),
                        second: task.id.clone(),
                        col,
                        row: task.row,
                    });
                }
                *cell = Some(i);
            }
        }
        Ok(())
    }

    pub fn task(&self, id: TaskId) -> &Task {
        &self.tasks[id.index()]
    }

    pub fn task_id(&self, name: &str) -> Option<TaskId> {
        self.tasks
            .iter()
            .position(|t| t.id == name)
            .map(|i| TaskId(i as u16))
    }

    pub fn task_ids(&self) -> impl Iterator<Item = TaskId> {
        (0..self.tasks.len()).map(|i| TaskId(i as u16))
    }

    pub fn total_duration(&self) -> u64 {
        self.tasks.iter().map(|t| u64::from(t.duration)).sum()
    }

    pub fn count_kind(&self, kind: TaskKind) -> usize {
        self.tasks.iter().filter(|t| t.kind == kind).count()
    }
}

impl fmt::Display for JobSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "board {} {}", self.width, self.height)?;
        writeln!(f, "agents {} {}", self.humans, self.robots)?;
        for t in &self.tasks {
            writeln!(
                f,
                "task {} {} {} {} {} {}",
                t.id,
                t.kind.code(),
                t.duration,
                t.col,
                t.row,
                t.span
            )?;
        }
        Ok(())
    }
}

/// Direct predecessors of every task, indexed by [`TaskId`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrecedenceMap {
    preds: Vec<Vec<TaskId>>,
}

impl PrecedenceMap {
    pub fn predecessors(&self, task: TaskId) -> &[TaskId] {
        &self.preds[task.index()]
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    /// Kahn's algorithm; `None` when the relation has a cycle.
    pub fn topological_order(&self) -> Option<Vec<TaskId>> {
        let n = self.preds.len();
        let mut indegree: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (y, ps) in self.preds.iter().enumerate() {
            for p in ps {
                succs[p.index()].push(y);
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            order.push(TaskId(i as u16));
            for &s in &succs[i] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push(s);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

/// For each column of a task's span, the nearest stone strictly below it in
/// that column is a direct predecessor.
pub fn derive_precedence(spec: &JobSpec) -> PrecedenceMap {
    let mut grid: Vec<Option<u16>> = vec![None; spec.width * spec.height];
    for (i, t) in spec.tasks.iter().enumerate() {
        for col in t.columns() {
            grid[t.row * spec.width + col] = Some(i as u16);
        }
    }
    let preds = spec
        .tasks
        .iter()
        .map(|t| {
            let mut ps: Vec<TaskId> = Vec::new();
            for col in t.columns() {
                let below = (0..t.row)
                    .rev()
                    .find_map(|row| grid[row * spec.width + col]);
                if let Some(p) = below {
                    let p = TaskId(p);
                    if !ps.contains(&p) {
                        ps.push(p);
                    }
                }
            }
            ps.sort();
            ps
        })
        .collect();
    PrecedenceMap { preds }
}

const DESK: &str = include_str!("../fixtures/desk.job");

/// The bundled height-adjustable desk job: 15x8 board, one human, one robot,
/// 19 human-only, 27 robot-only and 4 shared tasks.
pub fn desk_fixture() -> JobSpec {
    parse_jobspec(DESK).expect("bundled desk fixture is valid")
}

/// Text of the bundled desk fixture.
pub fn desk_fixture_text() -> &'static str {
    DESK
}

/// Bounds for [`random_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSpecParams {
    pub max_width: usize,
    pub max_height: usize,
    pub max_tasks: usize,
    pub max_span: usize,
    pub durations: (u32, u32),
    pub humans: usize,
    pub robots: usize,
}

impl Default for RandomSpecParams {
    fn default() -> Self {
        RandomSpecParams {
            max_width: 4,
            max_height: 4,
            max_tasks: 8,
            max_span: 2,
            durations: (1, 9),
            humans: 1,
            robots: 1,
        }
    }
}

/// A random settled job: stones are stacked column-wise so that none floats.
/// Kinds are drawn so that every task has a capable agent.
pub fn random_spec<R: rand::Rng + ?Sized>(rng: &mut R, params: &RandomSpecParams) -> JobSpec {
    let width = rng.gen_range(1..=params.max_width);
    let height = rng.gen_range(1..=params.max_height);
    let target = rng.gen_range(1..=params.max_tasks);
    let mut kinds = Vec::new();
    if params.humans > 0 {
        kinds.push(TaskKind::HumanOnly);
    }
    if params.robots > 0 {
        kinds.push(TaskKind::RobotOnly);
    }
    if params.humans > 0 || params.robots > 0 {
        kinds.push(TaskKind::Either);
    }
    let mut heights = vec![0usize; width];
    let mut tasks = Vec::new();
    let mut attempts = 0;
    while tasks.len() < target && attempts < 8 * params.max_tasks {
        attempts += 1;
        let span = rng.gen_range(1..=params.max_span.min(width));
        let col = rng.gen_range(0..=width - span);
        let row = heights[col..col + span].iter().copied().max().unwrap_or(0);
        if row >= height {
            continue;
        }
        heights[col..col + span].iter_mut().for_each(|h| *h = row + 1);
        tasks.push(Task {
            id: format!("T{}", tasks.len()),
            kind: kinds[rng.gen_range(0..kinds.len())],
            duration: rng.gen_range(params.durations.0..=params.durations.1),
            col,
            row,
            span,
        });
    }
    if tasks.is_empty() {
        tasks.push(Task {
            id: "T0".into(),
            kind: kinds[0],
            duration: params.durations.0,
            col: 0,
            row: 0,
            span: 1,
        });
    }
    JobSpec {
        width,
        height,
        humans: params.humans,
        robots: params.robots,
        tasks,
    }
}
