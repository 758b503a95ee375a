//! Drives the `mudpqfed` binary the way a user would.

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use mudpqfed::harness::metrics::CSV_HEADER;
use mudpqfed::harness::sweep::{DETECTION_HEADER, TPR_HEADER};
use mudpqfed::harness::{read_metrics_csv, DetectionRow, Summary, TprCell};

const BIN: &str = env!("CARGO_BIN_EXE_mudpqfed");

const HONEST: &str = r#"
d = 2
n = 2
rounds = 5

[dataset.synthetic]
train = 400
test = 100

[tcp]
stage_timeout_ms = 20000
connect_timeout_ms = 20000
"#;

const ATTACKED: &str = r#"
d = 2
n = 2
rounds = 3

[dataset.synthetic]
train = 400
test = 100

[[attacks]]
strategy = "out-of-range-add"
clients = [2]
rounds = [2]
window = { offset = 0, count = 4 }
magnitude = [20, 30]
"#;

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    let out = Command::new(BIN).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn summary(dir: &Path) -> Summary {
    serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_owned()
}

#[test]
fn run_writes_metrics_summary_and_transcript() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "attacked.toml", ATTACKED);
    let out = tmp.path().join("out");
    let stdout = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&stdout.stdout).contains("rounds=3"));

    assert_eq!(header(&out.join("metrics.csv")), CSV_HEADER.join(","));
    let rows = read_metrics_csv(fs::File::open(out.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.round).collect::<Vec<_>>(), [1, 2, 3]);
    assert!(rows[0].identified.is_empty());
    assert_eq!(rows[1].identified, [2].into());
    assert_eq!(rows[1].surviving_groups, 2);
    assert!(rows[1]
        .flagged
        .iter()
        .all(|(_, reason)| reason == "out-of-range"));
    assert_eq!(rows[2].cumulative_tpr, 1.0);

    let s = summary(&out);
    assert_eq!((s.clients, s.rounds, s.tpr, s.fpr), (4, 3, 1.0, 0.0));
    let transcript = fs::read_to_string(out.join("transcript.log")).unwrap();
    assert!(!transcript.is_empty());
}

#[test]
fn summary_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "attacked.toml", ATTACKED);
    let read = |name: &str| {
        let out = tmp.path().join(name);
        run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        (
            fs::read(out.join("summary.json")).unwrap(),
            fs::read(out.join("metrics.csv")).unwrap(),
            fs::read(out.join("transcript.log")).unwrap(),
        )
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn default_output_is_relative_to_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    // `output` must precede the first table to stay a top-level key.
    let body = format!(
        "output = \"results\"\n{}",
        HONEST.replace("rounds = 5", "rounds = 1")
    );
    let config = write_config(tmp.path(), "c.toml", &body);
    run(&["run", "--config", config.to_str().unwrap()]);
    assert!(tmp.path().join("results/summary.json").exists());
}

#[test]
fn bad_config_fails_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "bad.toml",
        "d = 2\nn = 2\nrounds = 1\nlearning_rate = 3\n",
    );
    let out = Command::new(BIN)
        .args(["run", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "{stderr}");
    assert!(stderr.contains("learning_rate"), "{stderr}");
}

#[test]
fn sweeps_write_csv_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let detection = write_config(
        tmp.path(),
        "detection.toml",
        r#"
d = 2
n = 2
rounds = 1

[dataset.synthetic]
train = 400
test = 100

[[sweep.placements]]
d = 3
n = 2
attackers = 2
same_group = false

[[sweep.placements]]
d = 2
n = 3
attackers = 3
same_group = false
"#,
    );
    let out = tmp.path().join("det");
    run(&[
        "sweep-detection",
        "--config",
        detection.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        header(&out.join("detection.csv")),
        DETECTION_HEADER.join(",")
    );
    let lines: Vec<String> = fs::read_to_string(out.join("detection.csv"))
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",100.00,28.57"), "{}", lines[1]);
    assert!(lines[2].ends_with(",100.00,20.00"), "{}", lines[2]);
    let rows: Vec<DetectionRow> =
        serde_json::from_slice(&fs::read(out.join("detection.json")).unwrap()).unwrap();
    assert_eq!(rows[0].fpr, 2.0 / 7.0);
    assert_eq!(rows[1].placement, [0, 3, 5]);

    let tpr = write_config(
        tmp.path(),
        "tpr.toml",
        r#"
d = 2
n = 2
rounds = 1

[dataset.synthetic]
train = 400
test = 100

[sweep]
change_sizes = [0, 6]
counts = [1, 4]
seeds = [1, 2]
window_offset = 48
"#,
    );
    let out = tmp.path().join("tpr");
    run(&[
        "sweep-tpr",
        "--config",
        tpr.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(header(&out.join("tpr_surface.csv")), TPR_HEADER.join(","));
    let cells: Vec<TprCell> =
        serde_json::from_slice(&fs::read(out.join("tpr_surface.json")).unwrap()).unwrap();
    let grid: Vec<(i64, usize, f64)> = cells
        .iter()
        .map(|c| (c.change_size, c.count, c.tpr))
        .collect();
    assert_eq!(grid, [(0, 1, 0.0), (0, 4, 0.0), (6, 1, 1.0), (6, 4, 1.0)]);
    assert!(cells.iter().all(|c| c.runs == 2));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn wait_all(mut children: Vec<Child>, limit: Duration) -> Vec<Output> {
    let start = Instant::now();
    loop {
        let done = children.iter_mut().all(|c| c.try_wait().unwrap().is_some());
        if done {
            return children
                .into_iter()
                .map(|c| c.wait_with_output().unwrap())
                .collect();
        }
        if start.elapsed() > limit {
            for c in &mut children {
                let _ = c.kill();
            }
            panic!("processes still running after {limit:?}");
        }
        std::thread::sleep(Duration::from_millis(50));
    }
}

#[test]
fn server_and_four_client_processes_match_the_simulator() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "honest.toml", HONEST);
    let config = config.to_str().unwrap();
    let sim_out = tmp.path().join("sim");
    run(&[
        "run",
        "--config",
        config,
        "--out",
        sim_out.to_str().unwrap(),
    ]);

    let addr = format!("127.0.0.1:{}", free_port());
    let tcp_out = tmp.path().join("tcp");
    let spawn = |args: &[&str]| {
        Command::new(BIN)
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap()
    };
    let mut procs = vec![spawn(&[
        "serve",
        "--listen",
        &addr,
        "--config",
        config,
        "--out",
        tcp_out.to_str().unwrap(),
    ])];
    // Clients connect in reverse id order; the server must not care.
    for id in (0..4).rev() {
        procs.push(spawn(&[
            "client",
            "--connect",
            &addr,
            "--id",
            &id.to_string(),
            "--config",
            config,
        ]));
    }
    for (i, out) in wait_all(procs, Duration::from_secs(120))
        .into_iter()
        .enumerate()
    {
        assert!(
            out.status.success(),
            "process {i}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    let (sim, tcp) = (summary(&sim_out), summary(&tcp_out));
    assert_eq!(tcp.rounds, 5);
    assert!(tcp.identified.is_empty());
    assert_eq!(sim.final_model_sha256, tcp.final_model_sha256);
    assert_eq!(sim.updates_sha256, tcp.updates_sha256);
    assert_eq!(sim.final_accuracy, tcp.final_accuracy);
    assert_eq!(sim.bytes_by_kind, tcp.bytes_by_kind);
    assert!(!tcp_out.join("transcript.log").exists());
}
