use std::path::Path;
use std::process::{Command, Output};

use swarmline::eval::Csv;
use swarmline::nn::{load_checkpoint, Arch};

fn swarmline(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarmline"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = swarmline(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_zero_runs_writes_an_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["gen", "--runs", "0", "--out", "empty.jsonl"], dir.path());
    assert!(stdout.contains("runs: 0"));
    assert_eq!(std::fs::read_to_string(dir.path().join("empty.jsonl")).unwrap(), "");
    let meta = std::fs::read_to_string(dir.path().join("empty.meta.json")).unwrap();
    assert!(meta.contains("\"n_runs\": 0"));
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(swarmline(&["gen", "--controller", "bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(swarmline(&["probe", "--kind", "bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(swarmline(&["simulate", "--controller", "nope"], dir.path()).status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = swarmline(&["train", "--pipeline", "distributed", "--dataset", "absent.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_builds_the_three_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--runs", "10", "--n-agents", "5", "--seed", "3", "--out", "data.jsonl"], d);
    let cases = [
        ("distributed", "prox_values", Arch::Distributed, 7, 1),
        ("comm", "all_sensors", Arch::SingleComm, 16, 2),
        ("colour", "prox_values", Arch::Colour, 2, 2),
    ];
    for (pipeline, input, arch, width, outputs) in cases {
        let model = format!("{pipeline}.json");
        ok(
            &["train", "--pipeline", pipeline, "--input", input, "--dataset", "data.jsonl", "--epochs", "2", "--out", &model],
            d,
        );
        let p = load_checkpoint(&d.join(&model)).unwrap();
        assert_eq!(p.arch, arch);
        assert_eq!(p.input_width(), width);
        let dims: Vec<(usize, usize)> = p.layers.iter().map(|l| (l.weight.rows, l.weight.cols)).collect();
        assert_eq!(dims, vec![(10, width), (10, 10), (outputs, 10)]);
        let loss = Csv::parse(&std::fs::read_to_string(d.join(format!("{pipeline}.loss.csv"))).unwrap()).unwrap();
        assert_eq!(loss.header, ["epoch", "train_loss", "val_loss"]);
        assert_eq!(loss.rows.len(), 2);
    }

    let out = swarmline(&["simulate", "--controller", "net-colour", "--model", "distributed.json"], d);
    assert_eq!(out.status.code(), Some(2));
    ok(&["simulate", "--controller", "net-comm", "--model", "comm.json", "--trace-out", "t.csv"], d);
    ok(&["probe", "--kind", "position", "--model", "distributed.json", "--jitters", "4", "--points", "5"], d);
}

#[test]
fn config_file_takes_defaults_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--runs", "8", "--n-agents", "5", "--out", "data.jsonl"], d);
    std::fs::write(d.join("cfg.json"), r#"{"pipeline": "colour", "dataset": "data.jsonl", "epochs": 3}"#).unwrap();
    ok(&["train", "--config", "cfg.json", "--epochs", "1", "--out", "m.json"], d);
    let loss = std::fs::read_to_string(d.join("m.loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 2);
}

#[test]
fn expert_simulation_converges() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["simulate", "--controller", "expert", "--n-agents", "5", "--no-noise", "--trace-out", "t.csv"], dir.path());
    assert!(stdout.contains("solved at step"));
    assert!(stdout.contains("max mover error: 0.00000000e0"));
    let trace = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(trace.starts_with("step,agent,x,goal,speed,tx_message,colour\n"));
    assert_eq!(trace.lines().count(), 1 + 41 * 5);
}

#[test]
fn sensing_probe_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["probe", "--kind", "sensing", "--controller", "manual", "--out", "p.csv"], dir.path());
    let csv = Csv::parse(&std::fs::read_to_string(dir.path().join("p.csv")).unwrap()).unwrap();
    assert_eq!(csv.rows.len(), 451);
    assert_eq!(csv.rows[450].1[0], 4500.0);
    assert!(csv.rows.iter().all(|(_, v)| v[1] <= 0.0 && v[2] >= 0.0));
}

#[test]
fn eval_expert_distance_is_zero_after_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["eval", "--task", "distribute", "--baselines", "expert", "--runs", "20", "--n-agents", "5", "--no-noise", "--out-dir", "out"], d);
    let csv = Csv::parse(&std::fs::read_to_string(d.join("out/distance_expert.csv")).unwrap()).unwrap();
    assert_eq!(csv.header, ["step", "median", "q25", "q75", "d10", "d90"]);
    let first_zero = csv.rows.iter().position(|(_, v)| v[4] == 0.0).expect("converges");
    assert!(csv.rows[first_zero..].iter().all(|(_, v)| v[4] == 0.0));
}

#[test]
fn eval_manual_colouring_ends_all_correct() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["eval", "--task", "colour", "--runs", "100", "--n-agents", "5-10", "--out-dir", "out"], d);
    let csv = Csv::parse(&std::fs::read_to_string(d.join("out/wrong_colour_manual-colour.csv")).unwrap()).unwrap();
    assert_eq!(csv.rows.last().unwrap().1, vec![0.0, 0.0]);
    let step0 = csv.rows[0].1[1];
    assert!(step0 > 0.3 && step0 < 0.7, "{step0}");
}
