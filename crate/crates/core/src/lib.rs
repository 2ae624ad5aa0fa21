//! Human-robot collaborative assembly scheduling on an assembly chessboard.
//!
//! A job is a grid of stones. Stones in the same column must be done bottom
//! to top, stones can only be taken from the bottom row, and each stone is a
//! human-only, robot-only or shared task. Humans and robots repeatedly pick
//! stones; the goal is the shortest total completion time.
//!
//! * [`jobspec`] parses job files and derives precedence from geometry.
//! * [`board`] holds the grid and the gravity cascade.
//! * [`game`] is the multi-agent decision process with epoch-based time.
//! * [`search`] is PUCT tree search over single-agent decisions.
//! * [`net`] is the convolutional policy/value network.
//! * [`selfplay`] generates training data with search and trains the network.
//! * [`baselines`] holds exhaustive enumeration and random rollouts.

pub mod baselines;
pub mod board;
pub mod game;
pub mod jobspec;
pub mod net;
pub mod search;
pub mod selfplay;

pub use board::Board;
pub use game::{AgentAction, AgentId, Game, GameState, GravityMode};
pub use jobspec::{desk_fixture, parse_jobspec, JobSpec, TaskId, TaskKind};
