//! The `hrc` command line: schedule a job with tree search, train the
//! network by self-play, run the reference baselines, or advise a human
//! operator interactively.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use hrc_core::baselines::{exhaustive_search, random_rollouts, Termination};
use hrc_core::game::{AgentClass, ScheduleEntry};
use hrc_core::net::{load_checkpoint, save_checkpoint, NetShape, Parameters};
use hrc_core::search::{SearchConfig, SearchPolicy};
use hrc_core::selfplay::{reports_csv, training_loop, SelfPlayConfig, SelfPlayError};
use hrc_core::{desk_fixture, parse_jobspec, AgentAction, AgentId, Game, GameState, GravityMode, JobSpec};

/// Jobspec argument that selects the bundled desk job.
pub const BUILTIN_DESK: &str = "builtin:desk";

#[derive(Debug, Parser)]
#[command(name = "hrc", version, about = "Human-robot assembly scheduling by self-play tree search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Play one greedy search episode and write the schedule
    Solve,
    /// Train the network by self-play
    Train,
    /// Sample uniformly random schedules
    Baseline,
    /// Enumerate every schedule within a node budget
    Oracle,
    /// Interactive advice: you play the humans, search plays the robots
    Advise,
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Job file, or `builtin:desk` for the bundled desk job
    #[arg(long, global = true)]
    pub jobspec: Option<String>,
    #[arg(long, global = true, env = "HRC_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Search simulations per decision
    #[arg(long, global = true, default_value_t = 30)]
    pub simulations: usize,
    /// Search look-ahead in epochs; 0 searches to the end
    #[arg(long, global = true, default_value_t = 3)]
    pub max_depth: u32,
    #[arg(long, global = true, default_value_t = 100.0)]
    pub c_puct: f64,
    #[arg(long, global = true, default_value_t = 10)]
    pub iterations: usize,
    /// Self-play episodes per training iteration
    #[arg(long, global = true, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, global = true, default_value_t = 1000)]
    pub trajectories: usize,
    #[arg(long, global = true, default_value_t = 10_000_000)]
    pub node_budget: u64,
    /// Network weights to load (solve, advise) or the final weights to write (train)
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Directory for output files
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Let stones be picked as soon as they reach the bottom row
    #[arg(long, global = true)]
    pub literal_gravity: bool,
    /// Early self-play decisions that sample from the search distribution
    #[arg(long, global = true, default_value_t = 4)]
    pub temperature_moves: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("cannot read job {path}: {message}")]
    Jobspec { path: String, message: String },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("{0}")]
    Run(String),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Jobspec { .. } => 3,
            CliError::Checkpoint { .. } => 4,
            CliError::Run(_) | CliError::Output { .. } => 1,
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn console(e: io::Error) -> CliError {
    CliError::Output {
        path: "console".into(),
        source: e,
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        if self.simulations == 0 {
            return Err(CliError::Config("--simulations must be at least 1".into()));
        }
        if !(self.c_puct.is_finite() && self.c_puct >= 0.0) {
            return Err(CliError::Config("--c-puct must be a finite non-negative number".into()));
        }
        if self.trajectories == 0 {
            return Err(CliError::Config("--trajectories must be at least 1".into()));
        }
        if self.node_budget == 0 {
            return Err(CliError::Config("--node-budget must be at least 1".into()));
        }
        if self.out.as_os_str().is_empty() {
            return Err(CliError::Config("--out must not be empty".into()));
        }
        Ok(())
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            c_puct: self.c_puct,
            max_depth: (self.max_depth > 0).then_some(self.max_depth),
            simulations: self.simulations,
            ..SearchConfig::default()
        }
    }

    pub fn gravity(&self) -> GravityMode {
        if self.literal_gravity {
            GravityMode::Literal
        } else {
            GravityMode::Strict
        }
    }

    fn load_game(&self) -> Result<Game, CliError> {
        let path = self
            .jobspec
            .as_deref()
            .ok_or_else(|| CliError::Config("--jobspec is required".into()))?;
        let spec = load_spec(path)?;
        Ok(Game::with_mode(spec, self.gravity()))
    }

    fn params_for(&self, spec: &JobSpec) -> Result<Parameters, CliError> {
        let shape = NetShape::for_board(spec.width, spec.height);
        match &self.checkpoint {
            Some(path) => {
                let shown = path.display().to_string();
                let file = fs::File::open(path).map_err(|e| CliError::Checkpoint {
                    path: shown.clone(),
                    message: e.to_string(),
                })?;
                load_checkpoint(BufReader::new(file), shape).map_err(|e| CliError::Checkpoint {
                    path: shown,
                    message: e.to_string(),
                })
            }
            None => Parameters::init(shape, self.seed).map_err(run_err),
        }
    }

    fn out_path(&self, name: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::Output {
            path: self.out.display().to_string(),
            source: e,
        })?;
        Ok(self.out.join(name))
    }

    fn write_out(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.out_path(name)?;
        write_file(&path, contents)?;
        Ok(path)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Output {
        path: path.display().to_string(),
        source: e,
    })
}

/// Reads a job file, or the bundled desk job for `builtin:desk`.
pub fn load_spec(path: &str) -> Result<JobSpec, CliError> {
    if path == BUILTIN_DESK {
        return Ok(desk_fixture());
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::Jobspec {
        path: path.into(),
        message: e.to_string(),
    })?;
    parse_jobspec(&text).map_err(|e| CliError::Jobspec {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Runs one command; `input` feeds the advise prompt.
pub fn run<R: BufRead, W: Write>(cli: &Cli, input: &mut R, out: &mut W) -> Result<(), CliError> {
    cli.run.validate()?;
    match cli.command {
        Command::Solve => cmd_solve(&cli.run, out),
        Command::Train => cmd_train(&cli.run, out),
        Command::Baseline => cmd_baseline(&cli.run, out),
        Command::Oracle => cmd_oracle(&cli.run, out),
        Command::Advise => cmd_advise(&cli.run, input, out),
    }
}

pub fn cmd_solve<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<(), CliError> {
    let game = cfg.load_game()?;
    let params = cfg.params_for(game.spec())?;
    let search = cfg.search_config();
    let depth = search.max_depth.map_or("unlimited".to_string(), |d| d.to_string());
    writeln!(
        out,
        "search: simulations {}, max-depth {}, c-puct {}",
        search.simulations, depth, search.c_puct
    )
    .map_err(console)?;
    let mut policy = SearchPolicy::greedy(&params, search);
    let record = game.run_episode(&mut policy, cfg.seed).map_err(run_err)?;
    let schedule = cfg.write_out("schedule.csv", &game.schedule_csv(&record.schedule))?;
    cfg.write_out("episode.csv", &game.episode_log_csv(&record))?;
    writeln!(out, "schedule written to {}", schedule.display()).map_err(console)?;
    writeln!(out, "makespan {}", record.makespan).map_err(console)?;
    Ok(())
}

fn checkpoint_bytes(params: &Parameters) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    save_checkpoint(params, &mut buf).map_err(run_err)?;
    Ok(buf)
}

fn write_checkpoint(path: &Path, params: &Parameters) -> Result<(), CliError> {
    let bytes = checkpoint_bytes(params)?;
    fs::write(path, bytes).map_err(|e| CliError::Output {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn cmd_train<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<(), CliError> {
    let game = cfg.load_game()?;
    let config = SelfPlayConfig {
        search: cfg.search_config(),
        iterations: cfg.iterations,
        episodes: cfg.episodes,
        temperature_moves: cfg.temperature_moves,
        seed: cfg.seed,
        ..SelfPlayConfig::default()
    };
    let dir = cfg.out_path("")?;
    let run = training_loop(&game, &config, |report, params| {
        let path = dir.join(format!("checkpoint_iter{:03}.hrcnet", report.iteration));
        write_checkpoint(&path, params).map_err(|e| SelfPlayError::Hook(e.to_string()))?;
        writeln!(
            out,
            "iteration {}: mean makespan {:.2}, best {}, policy loss {:.4}, value loss {:.4}",
            report.iteration, report.mean_makespan, report.best_makespan, report.policy_loss, report.value_loss
        )
        .map_err(|e| SelfPlayError::Hook(e.to_string()))
    })
    .map_err(run_err)?;
    let log = cfg.write_out("training_log.csv", &reports_csv(&run.reports))?;
    let final_path = match &cfg.checkpoint {
        Some(p) => p.clone(),
        None => dir.join("checkpoint_final.hrcnet"),
    };
    write_checkpoint(&final_path, &run.params)?;
    if let Some(eval) = &run.last_evaluation {
        cfg.write_out("schedule.csv", &game.schedule_csv(&eval.schedule))?;
    }
    writeln!(out, "training log written to {}", log.display()).map_err(console)?;
    writeln!(out, "final checkpoint written to {}", final_path.display()).map_err(console)?;
    if let Some(best) = run.reports.last().map(|r| r.best_makespan) {
        writeln!(out, "best makespan {best}").map_err(console)?;
    }
    Ok(())
}

pub fn cmd_baseline<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<(), CliError> {
    let game = cfg.load_game()?;
    let stats = random_rollouts(&game, cfg.trajectories, cfg.seed).map_err(run_err)?;
    let path = cfg.write_out("histogram.csv", &stats.histogram_csv())?;
    writeln!(out, "trajectories {}", stats.trajectories()).map_err(console)?;
    writeln!(out, "mean {:.2}", stats.mean).map_err(console)?;
    writeln!(out, "min {}", stats.min).map_err(console)?;
    writeln!(out, "runs at min {}", stats.count_at_most(stats.min)).map_err(console)?;
    writeln!(out, "histogram written to {}", path.display()).map_err(console)?;
    Ok(())
}

pub fn cmd_oracle<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<(), CliError> {
    let game = cfg.load_game()?;
    let started = std::time::Instant::now();
    let result = exhaustive_search(&game, cfg.node_budget);
    let path = cfg.write_out("oracle_report.csv", &result.report_csv())?;
    match result.termination {
        Termination::Complete => {
            let routes = result.complete_routes();
            let noun = if routes == 1 { "route" } else { "routes" };
            let best = result.optimum.expect("a complete search reaches the end");
            writeln!(out, "optimum {best}, {routes} {noun}").map_err(console)?;
            let line: Vec<String> = result
                .route
                .iter()
                .map(|(agent, action)| format!("{agent}:{}", game.action_label(*action)))
                .collect();
            writeln!(out, "route {}", line.join(" ")).map_err(console)?;
        }
        Termination::BudgetExceeded(depth) => {
            writeln!(
                out,
                "budget exceeded at depth {depth} after {} nodes",
                result.nodes_expanded
            )
            .map_err(console)?;
            if let Some(best) = result.optimum {
                writeln!(out, "best complete route so far {best}").map_err(console)?;
            }
        }
    }
    writeln!(out, "nodes {}", result.nodes_expanded).map_err(console)?;
    writeln!(out, "elapsed {:.2}s", started.elapsed().as_secs_f64()).map_err(console)?;
    writeln!(out, "report written to {}", path.display()).map_err(console)?;
    Ok(())
}

fn describe(game: &Game, action: AgentAction) -> String {
    match action {
        AgentAction::Pick(t) => format!("pick {}", game.spec().task(t).id),
        AgentAction::NoOp => "wait".into(),
    }
}

/// Why `agent` may not pick the task called `name` right now.
fn refusal(game: &Game, state: &GameState, agent: AgentId, name: &str) -> String {
    let Some(task) = game.spec().task_id(name) else {
        return format!("there is no task {name}");
    };
    let board = state.board();
    let Some(row) = board.row_of(task) else {
        return format!("{name} has already been taken");
    };
    if row > 0 {
        return format!("{name} is on row {row}; only bottom-row stones can be picked");
    }
    let kind = game.spec().task(task).kind;
    if !agent.can_do(kind) {
        let who = match agent.class {
            AgentClass::Human => "humans",
            AgentClass::Robot => "robots",
        };
        return format!("{name} cannot be done by {who}");
    }
    let waiting: Vec<&str> = game
        .precedence()
        .predecessors(task)
        .iter()
        .filter(|p| !state.is_completed(**p))
        .map(|p| game.spec().task(*p).id.as_str())
        .collect();
    if !waiting.is_empty() {
        return format!("{name} must wait for {} to finish", waiting.join(", "));
    }
    format!("{name} cannot be picked now")
}

enum Reply {
    Act(AgentAction),
    Quit,
}

fn prompt_human<R: BufRead, W: Write>(
    game: &Game,
    state: &GameState,
    agent: AgentId,
    legal: &[AgentAction],
    input: &mut R,
    out: &mut W,
) -> Result<Reply, CliError> {
    loop {
        let options: Vec<String> = legal.iter().map(|a| describe(game, *a)).collect();
        write!(out, "{agent} [{}]> ", options.join(", ")).map_err(console)?;
        out.flush().map_err(console)?;
        let mut line = String::new();
        if input.read_line(&mut line).map_err(console)? == 0 {
            return Ok(Reply::Quit);
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["quit"] | ["exit"] => return Ok(Reply::Quit),
            ["wait"] | ["noop"] => {
                if legal.contains(&AgentAction::NoOp) {
                    return Ok(Reply::Act(AgentAction::NoOp));
                }
                writeln!(out, "nobody else can work, so waiting would stall the job").map_err(console)?;
            }
            ["pick", name] => {
                let action = game.spec().task_id(name).map(AgentAction::Pick);
                match action {
                    Some(a) if legal.contains(&a) => return Ok(Reply::Act(a)),
                    _ => writeln!(out, "{}", refusal(game, state, agent, name)).map_err(console)?,
                }
            }
            [] => {}
            _ => writeln!(out, "commands: pick <task>, wait, quit").map_err(console)?,
        }
    }
}

pub fn cmd_advise<R: BufRead, W: Write>(cfg: &RunConfig, input: &mut R, out: &mut W) -> Result<(), CliError> {
    let game = cfg.load_game()?;
    let params = cfg.params_for(game.spec())?;
    let mut policy = SearchPolicy::greedy(&params, cfg.search_config());
    let mut state = game.initial_state();
    let mut schedule: Vec<ScheduleEntry> = Vec::new();
    let single_robot = game.spec().robots == 1;
    write!(out, "clock 0\n{}", state.board().render()).map_err(console)?;
    while let Some(agent) = game.next_decider(&state) {
        let legal = game.legal_actions(&state, agent).map_err(run_err)?;
        let action = match agent.class {
            AgentClass::Human => match prompt_human(&game, &state, agent, &legal, input, out)? {
                Reply::Act(a) => a,
                Reply::Quit => {
                    let path = cfg.write_out("schedule.csv", &game.schedule_csv(&schedule))?;
                    writeln!(out, "stopped at clock {}; partial schedule written to {}", state.clock(), path.display())
                        .map_err(console)?;
                    return Ok(());
                }
            },
            AgentClass::Robot => {
                let result = policy.search(&game, &state).map_err(run_err)?;
                let who = if single_robot { "robot".to_string() } else { format!("robot {agent}") };
                writeln!(out, "{who}: {}", describe(&game, result.action)).map_err(console)?;
                result.action
            }
        };
        policy.observe(&game, &state, action).map_err(run_err)?;
        if let AgentAction::Pick(task) = action {
            schedule.push(ScheduleEntry {
                agent,
                task,
                start: state.clock(),
                end: state.clock() + u64::from(game.duration(task)),
            });
        }
        let step = game.step(&state, agent, action).map_err(run_err)?;
        state = step.next;
        if step.advanced && !game.is_terminal(&state) {
            write!(out, "clock {}\n{}", state.clock(), state.board().render()).map_err(console)?;
        }
    }
    schedule.sort_by_key(|e| (e.start, e.agent, e.task));
    let path = cfg.write_out("schedule.csv", &game.schedule_csv(&schedule))?;
    writeln!(out, "makespan {}", state.clock()).map_err(console)?;
    writeln!(out, "schedule written to {}", path.display()).map_err(console)?;
    Ok(())
}
