use std::path::Path;
use std::process::{Command, Output};

use vartodd_core::search::Trajectory;
use vartodd_core::ParityMatrix;

fn vartodd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vartodd"))
        .args(args)
        .current_dir(dir)
        .env_remove("VARTODD_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_matrix(path: &Path) -> ParityMatrix {
    std::fs::read_to_string(path).unwrap().parse().unwrap()
}

#[test]
fn gen_gf4_writes_six_qubit_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let o = vartodd(&["gen", "--gf2n", "2", "--modulus", "111", "-o", "g.pm"], dir.path());
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(dir.path().join("g.pm")).unwrap();
    assert!(text.contains("modulus=111"));
    assert!(text.contains("raw_columns=35"));
    let p: ParityMatrix = text.parse().unwrap();
    assert_eq!(p.qubits(), 6);

    let o = vartodd(&["gen", "--gf2n", "2", "--raw", "-o", "raw.pm"], dir.path());
    assert_eq!(code(&o), 0);
    let raw = read_matrix(&dir.path().join("raw.pm"));
    assert_eq!(raw.column_count(), 35);
    assert_eq!(raw.simplify(), p);
}

#[test]
fn gen_rejects_reducible_modulus() {
    let dir = tempfile::tempdir().unwrap();
    let o = vartodd(&["gen", "--gf2n", "2", "--modulus", "101"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn gen_random_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen", "--random", "--qubits", "5", "--columns", "9", "--seed", "4"];
    let a = vartodd(&args, dir.path());
    let b = vartodd(&args, dir.path());
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let p: ParityMatrix = stdout(&a).parse().unwrap();
    assert_eq!(p.qubits(), 5);
    assert!(p.column_count() <= 9);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    vartodd(&["gen", "--gf2n", "2", "-o", "a.pm"], dir.path());
    vartodd(&["gen", "--gf2n", "2", "--raw", "-o", "raw.pm"], dir.path());
    std::fs::write(dir.path().join("id.pm"), "6 6\n100000\n010000\n001000\n000100\n000010\n000001\n")
        .unwrap();

    let o = vartodd(&["verify", "a.pm", "a.pm"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("equivalent: yes"));
    assert_eq!(code(&vartodd(&["verify", "raw.pm", "a.pm"], dir.path())), 0);

    let o = vartodd(&["verify", "a.pm", "id.pm"], dir.path());
    assert_eq!(code(&o), 4);
    assert!(stdout(&o).contains("equivalent: no"));
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.pm"), "2 3\n101 \n011\n").unwrap();
    assert_eq!(code(&vartodd(&["verify", "bad.pm", "bad.pm"], dir.path())), 2);
    assert_eq!(code(&vartodd(&["verify", "missing.pm", "bad.pm"], dir.path())), 2);
    assert_eq!(code(&vartodd(&["stats", "bad.pm"], dir.path())), 2);
    std::fs::write(dir.path().join("ok.pm"), "1 1\n1\n").unwrap();
    std::fs::write(dir.path().join("pol.json"), "{\"temperature\": true}").unwrap();
    let o = vartodd(&["optimize", "ok.pm", "--policy", "pol.json", "--iterations", "3"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&vartodd(&[], dir.path())), 1);
    assert_eq!(code(&vartodd(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&vartodd(&["gen"], dir.path())), 1);
    std::fs::write(dir.path().join("ok.pm"), "1 1\n1\n").unwrap();
    // No budget at all.
    assert_eq!(code(&vartodd(&["optimize", "ok.pm"], dir.path())), 1);
    assert_eq!(code(&vartodd(&["--help"], dir.path())), 0);
    assert_eq!(code(&vartodd(&["--version"], dir.path())), 0);
}

#[test]
fn zero_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    vartodd(&["gen", "--gf2n", "2", "-o", "a.pm"], dir.path());
    for flag in [["--iterations", "0"], ["--max-evals", "0"], ["--time-limit", "0"]] {
        let mut args = vec!["optimize", "a.pm", "-o", "t.traj"];
        args.extend(flag);
        assert_eq!(code(&vartodd(&args, dir.path())), 3, "{flag:?}");
    }
    assert!(!dir.path().join("t.traj").exists());
}

#[test]
fn optimize_writes_verifiable_trajectory_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    vartodd(&["gen", "--gf2n", "3", "-o", "g.pm"], dir.path());
    let o = vartodd(
        &["optimize", "g.pm", "--seed", "2", "--iterations", "30", "-o", "t.traj", "--best-matrix", "best.pm"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("input: gf2n n=3 modulus=1011"));
    let t = Trajectory::read(&dir.path().join("t.traj")).unwrap();
    t.verify().unwrap();
    assert!(stdout(&o).contains(&format!("best_rho: {}", t.best_rho())));
    assert_eq!(&read_matrix(&dir.path().join("best.pm")), t.best());
    assert_eq!(code(&vartodd(&["verify", "g.pm", "best.pm"], dir.path())), 0);

    let o = vartodd(&["stats", "t.traj"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,matrix_evals,best_rho"));
    let rows: Vec<Vec<u64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), t.states.len());
    assert_eq!(rows[0][2] as usize, t.initial_rho());
    assert_eq!(rows.last().unwrap()[2] as usize, t.best_rho());
    assert!(rows.windows(2).all(|w| w[1][2] <= w[0][2] && w[1][1] >= w[0][1]));
}

#[test]
fn thread_env_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    vartodd(&["gen", "--gf2n", "2", "-o", "a.pm"], dir.path());
    let run = |threads: &str, env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_vartodd"));
        c.args(["--threads", threads, "optimize", "a.pm", "--iterations", "5", "-o", "t.traj"])
            .current_dir(dir.path());
        match env {
            Some(v) => c.env("VARTODD_THREADS", v),
            None => c.env_remove("VARTODD_THREADS"),
        };
        c.output().unwrap()
    };
    assert_eq!(code(&run("2", None)), 0);
    assert_eq!(code(&run("2", Some("1"))), 0);
    assert_eq!(code(&run("2", Some("many"))), 1);
}

#[test]
fn tune_writes_policy_store_and_leaderboard() {
    let dir = tempfile::tempdir().unwrap();
    vartodd(&["gen", "--gf2n", "2", "-o", "g.pm"], dir.path());
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"swarm": 3, "iterations": 2, "repetitions": 1, "per_eval": {"max_iterations": 20}}"#,
    )
    .unwrap();
    let o = vartodd(
        &[
            "tune", "g.pm", "--config", "cfg.json", "--store", "store", "--out-policy", "best.json",
            "--out-trajectory", "best.traj", "--leaderboard", "lb.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("rank,eval,rho,density,penalty,fitness,policy"));
    assert!(dir.path().join("store/index.json").exists());
    let lb: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lb.json")).unwrap()).unwrap();
    assert!(!lb.as_array().unwrap().is_empty());
    let o = vartodd(&["optimize", "g.pm", "--policy", "best.json", "--iterations", "10"], dir.path());
    assert_eq!(code(&o), 0);
    Trajectory::read(&dir.path().join("best.traj")).unwrap().verify().unwrap();
}
