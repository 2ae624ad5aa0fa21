//! Self-play policy iteration: play episodes with tree search, turn every
//! decision into a training example, fit the network, repeat.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::game::{EpisodeRecord, Game, GameError};
use crate::net::{encode_state, fold_policy, gradients, loss, NetError, NetShape, Parameters, Sgd, TrainingExample};
use crate::search::{SearchConfig, SearchPolicy};

#[derive(Debug, Error)]
pub enum SelfPlayError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("the replay buffer is empty")]
    EmptyBuffer,
    #[error("{0}")]
    Hook(String),
}

/// Bounded first-in first-out store of training examples.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    examples: VecDeque<TrainingExample>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            examples: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Appends, evicting the oldest example when full.
    pub fn push(&mut self, example: TrainingExample) {
        if self.capacity == 0 {
            return;
        }
        if self.examples.len() == self.capacity {
            self.examples.pop_front();
        }
        self.examples.push_back(example);
    }

    pub fn extend<I: IntoIterator<Item = TrainingExample>>(&mut self, examples: I) {
        for e in examples {
            self.push(e);
        }
    }

    pub fn get(&self, index: usize) -> Option<&TrainingExample> {
        self.examples.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainingExample> {
        self.examples.iter()
    }
}

/// Default gradient norm cap. Value targets are raw time units, so early
/// value gradients are large enough to blow up momentum SGD without it.
pub const CLIP_NORM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub l2: f64,
    /// Rescales each minibatch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 32,
            lr: 0.01,
            momentum: 0.9,
            l2: 1e-4,
            clip_norm: Some(CLIP_NORM),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfPlayConfig {
    pub search: SearchConfig,
    pub train: TrainConfig,
    pub iterations: usize,
    pub episodes: usize,
    /// Decisions with a real choice that sample from the visit distribution.
    pub temperature_moves: usize,
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl Default for SelfPlayConfig {
    fn default() -> Self {
        SelfPlayConfig {
            search: SearchConfig::default(),
            train: TrainConfig::default(),
            iterations: 10,
            episodes: 10,
            temperature_moves: 4,
            buffer_capacity: 5000,
            seed: 0,
        }
    }
}

/// Seed of episode `episode` in iteration `iteration`.
pub fn episode_seed(master: u64, iteration: u64, episode: u64) -> u64 {
    master
        .wrapping_mul(1_000_003)
        .wrapping_add(iteration.wrapping_mul(1_009))
        .wrapping_add(episode)
}

/// Plays one episode with search at every decision. Each decision whose
/// visit distribution puts mass on a pick becomes an example whose value
/// target is minus the time still needed from that state.
pub fn generate_episode(
    game: &Game,
    params: &Parameters,
    search: &SearchConfig,
    seed: u64,
    temperature_moves: usize,
) -> Result<(EpisodeRecord, Vec<TrainingExample>), SelfPlayError> {
    let mut policy = SearchPolicy::new(params, *search, temperature_moves);
    let record = game.run_episode(&mut policy, seed)?;
    let examples = harvest(&record, params.shape())?;
    Ok((record, examples))
}

fn harvest(record: &EpisodeRecord, shape: &NetShape) -> Result<Vec<TrainingExample>, NetError> {
    let mut out = Vec::new();
    for step in &record.steps {
        let Some(pi) = &step.search_policy else {
            continue;
        };
        let Some(target_policy) = fold_policy(&step.state, pi, shape.width) else {
            continue;
        };
        out.push(TrainingExample {
            input: encode_state(&step.state, shape)?,
            target_policy,
            target_value: -((record.makespan - step.state.clock()) as f64),
        });
    }
    Ok(out)
}

/// Mean losses over the minibatches of one training call.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub batches: usize,
}

/// Runs `epochs` shuffled passes of minibatch SGD over the buffer.
pub fn train_iteration(
    buffer: &ReplayBuffer,
    params: &Parameters,
    config: &TrainConfig,
    seed: u64,
) -> Result<(Parameters, TrainStats), SelfPlayError> {
    if buffer.is_empty() {
        return Err(SelfPlayError::EmptyBuffer);
    }
    let mut params = params.clone();
    if config.epochs == 0 {
        let all: Vec<TrainingExample> = buffer.iter().cloned().collect();
        let l = loss(&params, &all, config.l2)?;
        return Ok((
            params,
            TrainStats {
                policy_loss: l.policy,
                value_loss: l.value,
                batches: 0,
            },
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sgd = Sgd::new(config.lr, config.momentum);
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut stats = TrainStats::default();
    let batch_size = config.batch_size.max(1);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<TrainingExample> = chunk
                .iter()
                .map(|&i| buffer.get(i).expect("index within buffer").clone())
                .collect();
            let (mut grad, l) = gradients(&params, &batch, config.l2)?;
            if let Some(cap) = config.clip_norm {
                clip(&mut grad, cap);
            }
            sgd.step(&mut params, &grad)?;
            stats.policy_loss += l.policy;
            stats.value_loss += l.value;
            stats.batches += 1;
        }
    }
    stats.policy_loss /= stats.batches as f64;
    stats.value_loss /= stats.batches as f64;
    Ok((params, stats))
}

fn clip(grad: &mut Parameters, cap: f64) {
    let norm = grad.sum_of_squares().sqrt();
    if norm > cap {
        let scale = cap / norm;
        for t in grad.tensors_mut() {
            t.data.iter_mut().for_each(|g| *g *= scale);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub episodes: usize,
    pub mean_makespan: f64,
    /// Best makespan of any episode played so far, including evaluations.
    pub best_makespan: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

pub const REPORT_HEADER: &str = "iteration,episodes,mean_makespan,best_makespan,policy_loss,value_loss";

impl IterationReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.3},{},{:.6},{:.6}",
            self.iteration, self.episodes, self.mean_makespan, self.best_makespan, self.policy_loss, self.value_loss
        )
    }
}

pub fn reports_csv(reports: &[IterationReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub reports: Vec<IterationReport>,
    pub params: Parameters,
    /// Greedy evaluation episode of the last iteration.
    pub last_evaluation: Option<EpisodeRecord>,
}

/// Iterates self-play, training and a greedy evaluation episode.
///
/// Iterations count from 1. Self-play episode `e` of iteration `k` uses
/// [`episode_seed`]`(seed, k, e)`; the evaluation episode uses `e = episodes`
/// and training uses `e = episodes + 1`. `on_iteration` sees every report
/// with the parameters it was produced with.
pub fn training_loop<F>(game: &Game, config: &SelfPlayConfig, mut on_iteration: F) -> Result<TrainingRun, SelfPlayError>
where
    F: FnMut(&IterationReport, &Parameters) -> Result<(), SelfPlayError>,
{
    let spec = game.spec();
    let shape = NetShape::for_board(spec.width, spec.height);
    let mut params = Parameters::init(shape, config.seed)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut reports = Vec::with_capacity(config.iterations);
    let mut best: Option<u64> = None;
    let mut last_evaluation = None;
    for k in 1..=config.iterations {
        let it = k as u64;
        let episodes: Vec<(EpisodeRecord, Vec<TrainingExample>)> = (0..config.episodes as u64)
            .into_par_iter()
            .map(|e| {
                generate_episode(
                    game,
                    &params,
                    &config.search,
                    episode_seed(config.seed, it, e),
                    config.temperature_moves,
                )
            })
            .collect::<Result<_, _>>()?;
        let mut total = 0u64;
        for (record, examples) in episodes {
            total += record.makespan;
            best = Some(best.map_or(record.makespan, |b| b.min(record.makespan)));
            buffer.extend(examples);
        }
        let stats = if buffer.is_empty() {
            TrainStats::default()
        } else {
            let seed = episode_seed(config.seed, it, config.episodes as u64 + 1);
            let (next, stats) = train_iteration(&buffer, &params, &config.train, seed)?;
            params = next;
            stats
        };
        let eval_seed = episode_seed(config.seed, it, config.episodes as u64);
        let (eval, _) = generate_episode(game, &params, &config.search, eval_seed, 0)?;
        best = Some(best.map_or(eval.makespan, |b| b.min(eval.makespan)));
        let report = IterationReport {
            iteration: k,
            episodes: config.episodes,
            mean_makespan: if config.episodes == 0 {
                eval.makespan as f64
            } else {
                total as f64 / config.episodes as f64
            },
            best_makespan: best.expect("at least one episode was played"),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
        };
        on_iteration(&report, &params)?;
        reports.push(report);
        last_evaluation = Some(eval);
    }
    Ok(TrainingRun {
        reports,
        params,
        last_evaluation,
    })
}
