//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hrc_cli::{run, Cli};
use hrc_core::baselines::{exhaustive_search, random_rollouts, Termination};
use hrc_core::board::Descent;
use hrc_core::jobspec::{random_spec, RandomSpecParams};
use hrc_core::net::{gradients, loss, InputTensor, NetShape, Parameters, TrainingExample};
use hrc_core::{desk_fixture, parse_jobspec, AgentAction, AgentId, Board, Game, GameState};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn hrc(args: &[&str]) -> String {
    let cli = Cli::try_parse_from(std::iter::once("hrc").chain(args.iter().copied())).expect("valid arguments");
    let mut out = Vec::new();
    run(&cli, &mut Cursor::new(Vec::new()), &mut out).expect("command succeeds");
    String::from_utf8(out).expect("utf-8 output")
}

fn value_after(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key))
        .and_then(|v| v.split_whitespace().next())
        .and_then(|v| v.trim_end_matches(',').parse().ok())
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{out}"))
}

const ORACLE_INSTANCES: usize = 50;

/// Solves the seeded random instances; returns (optimal, below, schedules).
fn oracle_equivalence_run(dir: &Path) -> (usize, usize, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = RandomSpecParams::default();
    fs::create_dir_all(dir).unwrap();
    let (mut optimal, mut below) = (0, 0);
    let mut files = Vec::new();
    for i in 0..ORACLE_INSTANCES {
        let spec = random_spec(&mut rng, &params);
        let optimum = exhaustive_search(&Game::new(spec.clone()), 10_000_000)
            .optimum
            .expect("small instances complete");
        let job = dir.join(format!("instance{i:02}.job"));
        fs::write(&job, spec.to_string()).unwrap();
        let out_dir = dir.join(format!("instance{i:02}"));
        let out = hrc(&[
            "solve",
            "--jobspec",
            job.to_str().unwrap(),
            "--simulations",
            "500",
            "--max-depth",
            "0",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        let makespan = value_after(&out, "makespan ") as u64;
        if makespan == optimum {
            optimal += 1;
        } else if makespan < optimum {
            below += 1;
        }
        files.extend(fs::read(out_dir.join("schedule.csv")).unwrap());
        files.extend(fs::read(out_dir.join("episode.csv")).unwrap());
    }
    (optimal, below, files)
}

fn oracle_equivalence(dir: &Path) -> (Outcome, Vec<u8>) {
    let (optimal, below, files) = oracle_equivalence_run(dir);
    let pass = optimal * 100 >= 95 * ORACLE_INSTANCES && below == 0;
    (
        outcome(pass, format!("{optimal}/{ORACLE_INSTANCES} optimal, {below} below the oracle")),
        files,
    )
}

fn wandering(_: &Game, _: &GameState, _: AgentId, legal: &[AgentAction], rng: &mut ChaCha8Rng) -> AgentAction {
    legal[rng.gen_range(0..legal.len())]
}

fn return_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = RandomSpecParams {
        max_width: 6,
        max_height: 6,
        max_tasks: 20,
        max_span: 3,
        ..RandomSpecParams::default()
    };
    let mut bad = 0;
    for e in 0..1000u64 {
        let game = Game::new(random_spec(&mut rng, &params));
        let rec = game.run_episode(&mut wandering, e).expect("random play finishes");
        if rec.total_reward() != -(rec.makespan as i64) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of 1000 episodes violate sum(rewards) = -makespan"))
}

fn two_step_gravity() -> Outcome {
    let spec = parse_jobspec(
        "board 4 3\nagents 1 1\n\
         task A1 H 3 0 0 1\ntask A2 H 3 1 0 1\ntask A3 H 3 2 0 1\ntask A4 H 3 3 0 1\n\
         task B1 R 2 0 1 1\ntask B2 R 2 1 1 1\ntask B3 R 2 2 1 1\ntask B4 R 2 3 1 1\n\
         task C1 E 4 0 2 2\ntask C2 E 4 2 2 2\n",
    )
    .unwrap();
    let id = |n: &str| spec.task_id(n).unwrap();
    let d = |n: &str, from_row: usize| Descent {
        task: id(n),
        from_row,
        to_row: from_row - 1,
    };
    let mut board = Board::from_spec(&spec);
    let first = board.remove_and_cascade(id("A1")).unwrap().descents;
    let c1_blocked = board.row_of(id("C1")) == Some(2);
    let second = board.remove_and_cascade(id("A2")).unwrap().descents;
    let pass = first == [d("B1", 1)] && c1_blocked && second == [d("B2", 1), d("C1", 2)];
    outcome(pass, "A1 -> B1 descends, C1 blocked; A2 -> B2 then C1 descend")
}

fn gradient_check() -> Outcome {
    // 4x3 input with 3 channels; the second convolution and pool use 1x1
    // windows because two 2x2 stages do not fit a 4x3 board.
    let shape = NetShape {
        height: 4,
        width: 3,
        kernels: [2, 1],
        pools: [2, 1],
        ..NetShape::default()
    };
    let mut params = Parameters::init(shape, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in params.tensors_mut() {
        if t.name.ends_with(".bias") {
            t.data.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
        }
    }
    let batch: Vec<TrainingExample> = (0..4)
        .map(|_| {
            let mut input = InputTensor::zeros(4, 3);
            for cell in 0..12 {
                let c = rng.gen_range(0..4usize);
                if c < 3 {
                    input.data[c * 12 + cell] = 1.0;
                }
            }
            let mut pi: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= s);
            TrainingExample {
                input,
                target_policy: pi,
                target_value: -rng.gen_range(0.5..3.0),
            }
        })
        .collect();
    let l2 = 1e-3;
    let step = 1e-5;
    let (grad, _) = gradients(&params, &batch, l2).unwrap();
    let mut worst: f64 = 0.0;
    let mut tensors = 0;
    for (ti, t) in params.tensors().iter().enumerate() {
        tensors += 1;
        for i in 0..t.data.len() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].data[i] += step;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].data[i] -= step;
            let numeric = (loss(&plus, &batch, l2).unwrap().total() - loss(&minus, &batch, l2).unwrap().total()) / (2.0 * step);
            let analytic = grad.tensors()[ti].data[i];
            let scale = analytic.abs().max(numeric.abs());
            let err = if scale < 1e-7 { (analytic - numeric).abs() } else { (analytic - numeric).abs() / scale };
            worst = worst.max(err);
        }
    }
    outcome(worst < 1e-4, format!("max relative error {worst:.2e} over {tensors} tensors"))
}

fn shape_contract() -> Outcome {
    let shape = NetShape::default();
    let dims = shape.dims().unwrap();
    let params = Parameters::init(shape, 0).unwrap();
    let pv = params.forward(&InputTensor::zeros(15, 8)).unwrap();
    let pass = (shape.height, shape.width, shape.channels) == (15, 8, 3)
        && dims.flatten == 30
        && pv.p.len() == 8
        && pv.v.is_finite();
    outcome(pass, format!("15x8x3 -> flatten {}, policy {}, scalar value", dims.flatten, pv.p.len()))
}

struct Training {
    best: Vec<u64>,
    files: Vec<u8>,
}

fn train_desk(dir: &Path) -> Training {
    hrc(&["train", "--jobspec", "builtin:desk", "--out", dir.to_str().unwrap()]);
    let log = fs::read_to_string(dir.join("training_log.csv")).unwrap();
    let best = log
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    let mut files = log.into_bytes();
    files.extend(fs::read(dir.join("checkpoint_final.hrcnet")).unwrap());
    Training { best, files }
}

fn baseline_desk(dir: &Path) -> (f64, Vec<u64>, Vec<u8>) {
    let out = hrc(&["baseline", "--jobspec", "builtin:desk", "--trajectories", "1000", "--out", dir.to_str().unwrap()]);
    let mean = value_after(&out, "mean ");
    let hist = fs::read_to_string(dir.join("histogram.csv")).unwrap();
    let mut makespans = Vec::new();
    for line in hist.lines().skip(1) {
        let (m, c) = line.split_once(',').unwrap();
        let (m, c): (u64, usize) = (m.parse().unwrap(), c.parse().unwrap());
        makespans.extend(std::iter::repeat_n(m, c));
    }
    (mean, makespans, hist.into_bytes())
}

fn training_progress(training: &Training, random_mean: f64) -> Outcome {
    let monotone = training.best.windows(2).all(|w| w[1] <= w[0]);
    let Some(&best) = training.best.last() else {
        return outcome(false, "empty training log");
    };
    let gain = 1.0 - best as f64 / random_mean;
    outcome(
        monotone && training.best.len() == 10 && gain >= 0.03,
        format!(
            "best makespan {best} vs random mean {random_mean:.2} ({:.1}% better), non-increasing: {monotone}",
            100.0 * gain
        ),
    )
}

fn random_shape(makespans: &[u64], mean: f64, trained_best: u64) -> Outcome {
    let min = makespans.iter().copied().min().unwrap_or(0);
    let attained = makespans.iter().filter(|&&m| m <= trained_best).count();
    let share = attained as f64 / makespans.len() as f64;
    outcome(
        mean > min as f64 && share <= 0.05,
        format!("mean {mean:.2}, min {min}, {attained}/{} reach the trained best {trained_best}", makespans.len()),
    )
}

fn exhaustive_infeasibility() -> Outcome {
    let result = exhaustive_search(&Game::new(desk_fixture()), 10_000_000);
    let exceeded = matches!(result.termination, Termination::BudgetExceeded(_));
    let ratios: Vec<f64> = result
        .depths
        .windows(2)
        .take(5)
        .map(|w| w[1].routes as f64 / w[0].routes as f64)
        .collect();
    let growing = ratios.len() == 5 && ratios.iter().all(|&r| r >= 2.0);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.1}")).collect();
    outcome(
        exceeded && growing,
        format!(
            "{:?} after {} completed depths, route ratios [{}]",
            result.termination,
            result.depths.len(),
            shown.join(", ")
        ),
    )
}

fn report(n: usize, name: &str, started: Instant, o: &Outcome, all: &mut bool) {
    let elapsed: Duration = started.elapsed();
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {n} {name}: {verdict} ({}; {:.1}s)", o.detail, elapsed.as_secs_f64());
    *all &= o.pass;
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let root = scratch.path();
    let mut all = true;

    let t = Instant::now();
    let (c1, oracle_files) = oracle_equivalence(&root.join("c1a"));
    report(1, "oracle equivalence", t, &c1, &mut all);

    let t = Instant::now();
    report(2, "return identity", t, &return_identity(), &mut all);

    let t = Instant::now();
    report(3, "two-step gravity", t, &two_step_gravity(), &mut all);

    let t = Instant::now();
    report(4, "gradient correctness", t, &gradient_check(), &mut all);

    let t = Instant::now();
    report(5, "network shape", t, &shape_contract(), &mut all);

    let t = Instant::now();
    let random = random_rollouts(&Game::new(desk_fixture()), 1000, 0).expect("random play finishes");
    let training = train_desk(&root.join("c6a"));
    report(6, "training progress", t, &training_progress(&training, random.mean), &mut all);

    let t = Instant::now();
    let (mean, makespans, histogram) = baseline_desk(&root.join("c7a"));
    let trained_best = training.best.last().copied().unwrap_or(0);
    report(7, "random baseline shape", t, &random_shape(&makespans, mean, trained_best), &mut all);

    let t = Instant::now();
    report(8, "exhaustive infeasibility", t, &exhaustive_infeasibility(), &mut all);

    let t = Instant::now();
    let (_, _, oracle_again) = oracle_equivalence_run(&root.join("c1b"));
    let training_again = train_desk(&root.join("c6b"));
    let (_, _, histogram_again) = baseline_desk(&root.join("c7b"));
    let same = [
        oracle_files == oracle_again,
        training.files == training_again.files,
        histogram == histogram_again,
    ];
    let c9 = outcome(
        same.iter().all(|&s| s),
        format!("identical outputs: solve {}, train {}, baseline {}", same[0], same[1], same[2]),
    );
    report(9, "determinism", t, &c9, &mut all);

    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
