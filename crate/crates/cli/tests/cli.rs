use std::fs;
use std::io::{self, Cursor};
use std::path::Path;
use std::process::Command as Process;

use clap::Parser;
use hrc_cli::{run, Cli};

const TINY: &str = "board 2 2\nagents 1 1\ntask A H 2 0 0 1\ntask B R 3 0 1 1\ntask C E 4 1 0 1\n";

fn job(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn invoke(args: &[&str], stdin: &str) -> Result<String, hrc_cli::CliError> {
    let cli = Cli::try_parse_from(std::iter::once("hrc").chain(args.iter().copied())).unwrap();
    let mut out = Vec::new();
    run(&cli, &mut Cursor::new(stdin.as_bytes()), &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

#[test]
fn solve_tiny_job() {
    let dir = tempfile::tempdir().unwrap();
    let spec = job(dir.path(), "tiny.job", TINY);
    let out_dir = dir.path().join("out");
    let out = invoke(
        &["solve", "--jobspec", &spec, "--simulations", "500", "--max-depth", "0", "--out", out_dir.to_str().unwrap()],
        "",
    )
    .unwrap();
    assert!(out.contains("search: simulations 500, max-depth unlimited, c-puct 100"));
    // Greedy search misses the schedule where the robot waits (makespan 6).
    assert!(out.ends_with("makespan 7\n"), "{out}");
    let csv = fs::read_to_string(out_dir.join("schedule.csv")).unwrap();
    assert_eq!(csv, "agent,task,start,end\nH1,A,0,2\nR1,C,0,4\nR1,B,4,7\n");
    assert!(fs::read_to_string(out_dir.join("episode.csv"))
        .unwrap()
        .starts_with("epoch,clock,agent,action,reward\n"));
}

#[test]
fn solve_echoes_default_search_settings() {
    let dir = tempfile::tempdir().unwrap();
    let spec = job(dir.path(), "tiny.job", TINY);
    let out = invoke(
        &["solve", "--jobspec", &spec, "--c-puct", "100", "--simulations", "30", "--max-depth", "3", "--out", dir.path().to_str().unwrap()],
        "",
    )
    .unwrap();
    assert!(out.starts_with("search: simulations 30, max-depth 3, c-puct 100\n"));
}

#[test]
fn error_exit_codes() {
    let err = invoke(&["solve", "--jobspec", "/missing/tiny.job"], "").unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("/missing/tiny.job"));

    let dir = tempfile::tempdir().unwrap();
    let bad = job(dir.path(), "bad.job", "board 2 2\nagents 1 1\ntask A H 2 0 0 1\ntask B R 3 0 0 1\n");
    assert_eq!(invoke(&["solve", "--jobspec", &bad], "").unwrap_err().exit_code(), 3);

    let spec = job(dir.path(), "tiny.job", TINY);
    let junk = job(dir.path(), "junk.hrcnet", "not a checkpoint\n");
    let err = invoke(&["solve", "--jobspec", &spec, "--checkpoint", &junk], "").unwrap_err();
    assert_eq!(err.exit_code(), 4);

    assert_eq!(invoke(&["baseline", "--jobspec", &spec, "--trajectories", "0"], "").unwrap_err().exit_code(), 2);
}

#[test]
fn train_logs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = job(dir.path(), "tiny.job", TINY);
    let mut logs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        invoke(
            &["train", "--jobspec", &spec, "--seed", "7", "--iterations", "2", "--episodes", "3", "--out", out.to_str().unwrap()],
            "",
        )
        .unwrap();
        assert!(out.join("checkpoint_iter001.hrcnet").exists());
        assert!(out.join("checkpoint_iter002.hrcnet").exists());
        logs.push((
            fs::read(out.join("training_log.csv")).unwrap(),
            fs::read(out.join("checkpoint_final.hrcnet")).unwrap(),
        ));
    }
    assert_eq!(logs[0], logs[1]);
    let text = String::from_utf8(logs[0].0.clone()).unwrap();
    assert_eq!(text.lines().count(), 3);

    // The trained weights load back into solve.
    let ckpt = dir.path().join("a").join("checkpoint_final.hrcnet");
    let out = invoke(
        &["solve", "--jobspec", &spec, "--checkpoint", ckpt.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        "",
    )
    .unwrap();
    assert!(out.contains("makespan "));
}

#[test]
fn train_without_iterations_writes_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let spec = job(dir.path(), "tiny.job", TINY);
    let final_path = dir.path().join("w.hrcnet");
    invoke(
        &["train", "--jobspec", &spec, "--iterations", "0", "--out", dir.path().to_str().unwrap(), "--checkpoint", final_path.to_str().unwrap()],
        "",
    )
    .unwrap();
    assert_eq!(
        fs::read_to_string(dir.path().join("training_log.csv")).unwrap(),
        "iteration,episodes,mean_makespan,best_makespan,policy_loss,value_loss\n"
    );
    let shape = hrc_core::net::NetShape::for_board(2, 2);
    let loaded = hrc_core::net::load_checkpoint(io::BufReader::new(fs::File::open(&final_path).unwrap()), shape).unwrap();
    assert_eq!(loaded, hrc_core::net::Parameters::init(shape, 0).unwrap());
}

#[test]
fn baseline_on_tiny_job() {
    let dir = tempfile::tempdir().unwrap();
    let spec = job(dir.path(), "tiny.job", TINY);
    let out = invoke(
        &["baseline", "--jobspec", &spec, "--trajectories", "1000", "--seed", "1", "--out", dir.path().to_str().unwrap()],
        "",
    )
    .unwrap();
    assert!(out.contains("\nmin 7\n"), "{out}");
    let hist = fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
    assert!(hist.starts_with("makespan,count\n7,"));
    let total: usize = hist.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 1000);
}

#[test]
fn oracle_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = invoke(&["oracle", "--jobspec", "builtin:desk", "--node-budget", "100", "--out", d], "").unwrap();
    assert!(out.starts_with("budget exceeded at depth "), "{out}");
    let report = fs::read_to_string(dir.path().join("oracle_report.csv")).unwrap();
    assert!(report.starts_with("depth,routes,nodes\n1,8,"));

    let single = job(dir.path(), "one.job", "board 1 1\nagents 0 1\ntask X R 5 0 0 1\n");
    let out = invoke(&["oracle", "--jobspec", &single, "--out", d], "").unwrap();
    assert!(out.starts_with("optimum 5, 1 route\n"), "{out}");

    let spec = job(dir.path(), "tiny.job", TINY);
    let out = invoke(&["oracle", "--jobspec", &spec, "--out", d], "").unwrap();
    assert!(out.starts_with("optimum 6, "), "{out}");
}

#[test]
fn advise_session() {
    let dir = tempfile::tempdir().unwrap();
    let spec = job(dir.path(), "tiny.job", TINY);
    let d = dir.path().to_str().unwrap();
    let out = invoke(
        &["advise", "--jobspec", &spec, "--simulations", "500", "--max-depth", "0", "--out", d],
        "pick B\nhello\npick A\nwait\nwait\n",
    )
    .unwrap();
    assert!(out.contains("B is on row 1; only bottom-row stones can be picked"), "{out}");
    assert!(out.contains("commands: pick <task>, wait, quit"));
    assert!(out.contains("robot: pick C\n"), "{out}");
    assert!(out.contains("makespan 7\n"), "{out}");
    assert!(out.starts_with("clock 0\nR.\nHE\n"));
    assert_eq!(
        fs::read_to_string(dir.path().join("schedule.csv")).unwrap(),
        "agent,task,start,end\nH1,A,0,2\nR1,C,0,4\nR1,B,4,7\n"
    );
}

#[test]
fn advise_quit_flushes_partial_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let spec = job(dir.path(), "tiny.job", TINY);
    let d = dir.path().to_str().unwrap();
    let out = invoke(&["advise", "--jobspec", &spec, "--out", d], "pick A\nquit\n").unwrap();
    assert!(out.contains("stopped at clock 2"), "{out}");
    let csv = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    assert!(csv.starts_with("agent,task,start,end\nH1,A,0,2\n"));
}

#[test]
fn seed_comes_from_environment_unless_given() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let baseline = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Process::new(env!("CARGO_BIN_EXE_hrc"));
        cmd.args(["baseline", "--jobspec", "builtin:desk", "--trajectories", "50", "--out", d]);
        cmd.env_remove("HRC_SEED");
        if let Some(v) = env {
            cmd.env("HRC_SEED", v);
        }
        if let Some(v) = flag {
            cmd.args(["--seed", v]);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    assert_eq!(baseline(Some("3"), None), baseline(None, Some("3")));
    assert_eq!(baseline(Some("3"), Some("4")), baseline(None, Some("4")));
    assert_ne!(baseline(None, Some("3")), baseline(None, Some("4")));
}

#[test]
fn binary_exit_codes() {
    let status = |args: &[&str]| Process::new(env!("CARGO_BIN_EXE_hrc")).args(args).output().unwrap().status.code();
    assert_eq!(status(&["solve", "--jobspec", "/missing.job"]), Some(3));
    assert_eq!(status(&["solve", "--no-such-flag"]), Some(2));
    assert_eq!(status(&["frobnicate"]), Some(2));
}
