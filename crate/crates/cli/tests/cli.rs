use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str =
    "[agent]\nn_critics = 2\nbatch_size = 8\nhidden_units = 8\n\n[scene]\nepisode_cap = 10\n";

fn bdpi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdpi"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn run_summarize_plot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.toml"), TINY).unwrap();
    let common = [
        "--config",
        "tiny.toml",
        "--seeds",
        "1,2",
        "--episodes",
        "3",
        "--out",
        "runs",
        "-q",
    ];

    let mut args = vec![
        "run",
        "--setting",
        "sensors-no-transfer",
        "--save-advisor",
        "src.net",
    ];
    args.extend(common);
    ok(&bdpi(&args, d));
    assert!(fs::read(d.join("src.net"))
        .unwrap()
        .starts_with(b"BDPI-NET-1"));

    let mut args = vec![
        "run",
        "--setting",
        "camera-act",
        "--advisor",
        "src.net",
        "--save-agents",
        "agents",
    ];
    args.extend(common);
    ok(&bdpi(&args, d));
    assert!(d.join("agents/seed-1").is_dir() && d.join("agents/seed-2").is_dir());

    let csv = fs::read_to_string(d.join("runs/camera-act.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("setting,seed,episode,return,env_steps,seconds")
    );
    assert_eq!(csv.lines().count(), 7);

    let out = bdpi(&["summarize", "--in", "runs", "--out", "stats.csv"], d);
    ok(&out);
    let ranking = String::from_utf8(out.stdout).unwrap();
    assert!(ranking.contains("camera-act") && ranking.contains("sensors-no-transfer"));

    ok(&bdpi(
        &["plot", "--in", "stats.csv", "--out", "curves.svg"],
        d,
    ));
    assert!(fs::read_to_string(d.join("curves.svg"))
        .unwrap()
        .starts_with("<svg"));

    ok(&bdpi(
        &[
            "rollout",
            "--config",
            "tiny.toml",
            "--actor",
            "src.net",
            "--out",
            "trace.csv",
        ],
        d,
    ));
    let trace = fs::read_to_string(d.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("step,x,y,heading,action,reward"));
    assert_eq!(trace.lines().count(), 11);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "[agent]\nlearning_rate = 0.1\n").unwrap();
    let out = bdpi(
        &[
            "run",
            "--config",
            "bad.toml",
            "--setting",
            "sensors-no-transfer",
            "--seeds",
            "1",
            "--episodes",
            "1",
            "--out",
            "o",
        ],
        d,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    let out = bdpi(
        &[
            "run",
            "--setting",
            "camera-learn",
            "--seeds",
            "1",
            "--episodes",
            "1",
            "--out",
            "o",
        ],
        d,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("advisor"));

    let out = bdpi(
        &[
            "run",
            "--setting",
            "camera-sometimes",
            "--seeds",
            "1",
            "--episodes",
            "1",
            "--out",
            "o",
        ],
        d,
    );
    assert!(!out.status.success());
}
