use hrc_core::baselines::{exhaustive_search, random_rollouts};
use hrc_core::game::AgentClass;
use hrc_core::jobspec::{derive_precedence, random_spec, RandomSpecParams};
use hrc_core::net::UniformEvaluator;
use hrc_core::search::{search, SearchConfig, SearchPolicy};
use hrc_core::{parse_jobspec, AgentAction, AgentId, Board, Game, GameState, JobSpec, TaskId, TaskKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec_from(seed: u64, params: &RandomSpecParams) -> JobSpec {
    random_spec(&mut ChaCha8Rng::seed_from_u64(seed), params)
}

fn small(seed: u64) -> JobSpec {
    spec_from(seed, &RandomSpecParams::default())
}

fn wide(seed: u64) -> JobSpec {
    spec_from(
        seed,
        &RandomSpecParams {
            max_width: 5,
            max_height: 5,
            max_tasks: 14,
            max_span: 3,
            ..RandomSpecParams::default()
        },
    )
}

/// Gravity by brute force: drop any droppable stone, chosen at random, until
/// nothing can move.
fn random_order_fixpoint(board: &Board, mut cells: Vec<Option<TaskId>>, rng: &mut ChaCha8Rng) -> Vec<Option<TaskId>> {
    let (w, h) = (board.width(), board.height());
    loop {
        let mut movable = Vec::new();
        for r in 1..h {
            for c in 0..w {
                if let Some(t) = cells[r * w + c] {
                    let left = c == 0 || cells[r * w + c - 1] != Some(t);
                    let span = board.span_of(t);
                    if left && (c..c + span).all(|k| cells[(r - 1) * w + k].is_none()) {
                        movable.push((t, c, r, span));
                    }
                }
            }
        }
        if movable.is_empty() {
            return cells;
        }
        let (t, c, r, span) = movable[rng.gen_range(0..movable.len())];
        for k in c..c + span {
            cells[r * w + k] = None;
            cells[(r - 1) * w + k] = Some(t);
        }
    }
}

fn cells_of(board: &Board) -> Vec<Option<TaskId>> {
    (0..board.height())
        .flat_map(|r| (0..board.width()).map(move |c| (c, r)))
        .map(|(c, r)| board.cell(c, r))
        .collect()
}

/// Random legal play that also waits now and then.
fn wandering(_: &Game, _: &GameState, _: AgentId, legal: &[AgentAction], rng: &mut ChaCha8Rng) -> AgentAction {
    legal[rng.gen_range(0..legal.len())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cascade_matches_any_drop_order(seed in any::<u64>(), picks in prop::collection::vec(any::<u16>(), 1..10)) {
        let spec = wide(seed);
        let mut board = Board::from_spec(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for p in picks {
            let bottom = board.bottom_row_tasks();
            if bottom.is_empty() {
                break;
            }
            let task = bottom[p as usize % bottom.len()];
            let mut raw = cells_of(&board);
            let occupied = board.occupied_cells();
            let (col, span) = (board.col_of(task), board.span_of(task));
            raw[col..col + span].iter_mut().for_each(|c| *c = None);
            let out = board.remove_and_cascade(task).unwrap();
            prop_assert_eq!(board.occupied_cells(), occupied - span);
            for d in &out.descents {
                prop_assert_eq!(d.to_row + 1, d.from_row);
            }
            prop_assert!(board.is_gravity_fixpoint());
            prop_assert_eq!(random_order_fixpoint(&board, raw, &mut rng), cells_of(&board));
        }
    }

    #[test]
    fn jobspec_text_round_trips(seed in any::<u64>()) {
        let spec = wide(seed);
        prop_assert_eq!(parse_jobspec(&spec.to_string()).unwrap(), spec.clone());
        prop_assert!(derive_precedence(&spec).topological_order().is_some());
    }

    #[test]
    fn episodes_keep_the_books(seed in any::<u64>(), play in any::<u64>()) {
        let spec = wide(seed);
        let game = Game::new(spec.clone());
        let rec = game.run_episode(&mut wandering, play).unwrap();
        prop_assert_eq!(rec.total_reward(), -(rec.makespan as i64));
        for step in &rec.steps {
            let s = &step.state;
            prop_assert_eq!(s.board().stones_on_board() + s.busy_count() + s.completed_count(), spec.tasks.len());
        }
        // Humans decide before robots within every epoch.
        for pair in rec.steps.windows(2) {
            if pair[0].state.epoch() == pair[1].state.epoch() {
                prop_assert!(!(pair[0].agent.class == AgentClass::Robot && pair[1].agent.class == AgentClass::Human));
            }
        }
        let prec = derive_precedence(&spec);
        prop_assert_eq!(rec.schedule.len(), spec.tasks.len());
        let entry = |t: TaskId| rec.schedule.iter().find(|e| e.task == t).unwrap();
        for t in spec.task_ids() {
            for &p in prec.predecessors(t) {
                prop_assert!(entry(t).start >= entry(p).end);
            }
        }
        for a in &rec.schedule {
            for b in &rec.schedule {
                if a.agent == b.agent && a.task != b.task {
                    prop_assert!(a.end <= b.start || b.end <= a.start);
                }
            }
        }
    }
}

fn kind_sum(spec: &JobSpec, kind: TaskKind) -> u64 {
    spec.tasks.iter().filter(|t| t.kind == kind).map(|t| u64::from(t.duration)).sum()
}

fn column_chain(spec: &JobSpec) -> u64 {
    (0..spec.width)
        .map(|c| {
            spec.tasks
                .iter()
                .filter(|t| t.columns().contains(&c))
                .map(|t| u64::from(t.duration))
                .sum()
        })
        .max()
        .unwrap_or(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn oracle_respects_lower_bounds_and_dominates(seed in any::<u64>()) {
        let spec = small(seed);
        let game = Game::new(spec.clone());
        let oracle = exhaustive_search(&game, 10_000_000);
        prop_assert!(oracle.is_complete());
        let opt = oracle.optimum.unwrap();
        prop_assert!(opt >= kind_sum(&spec, TaskKind::HumanOnly).div_ceil(spec.humans as u64));
        prop_assert!(opt >= kind_sum(&spec, TaskKind::RobotOnly).div_ceil(spec.robots as u64));
        prop_assert!(opt >= column_chain(&spec));
        prop_assert!(opt <= spec.total_duration());
        let rollouts = random_rollouts(&game, 50, seed).unwrap();
        prop_assert!(rollouts.min >= opt);
        let cfg = SearchConfig { simulations: 60, max_depth: None, ..SearchConfig::default() };
        let mut policy = SearchPolicy::greedy(&UniformEvaluator, cfg);
        prop_assert!(game.run_episode(&mut policy, 0).unwrap().makespan >= opt);
        // Every level holds at least the routes still running from the level above.
        for w in oracle.depths.windows(2) {
            prop_assert!(w[1].routes >= w[0].routes - w[0].leaves);
        }
    }

    #[test]
    fn root_statistics_add_up(seed in any::<u64>(), sims in 2usize..80) {
        let game = Game::new(small(seed));
        let state = game.initial_state();
        let cfg = SearchConfig { simulations: sims, ..SearchConfig::default() };
        let agent = game.next_decider(&state).unwrap();
        let legal = game.legal_actions(&state, agent).unwrap();
        let r = search(&game, &state, &UniformEvaluator, &cfg).unwrap();
        prop_assert!((r.policy.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(legal.contains(&r.action));
        if legal.len() > 1 {
            prop_assert_eq!(r.visits.iter().sum::<u32>() as usize, sims);
        }
    }
}
