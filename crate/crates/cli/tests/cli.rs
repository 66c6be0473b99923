//! End-to-end behaviour of the `ipi` binary: pipelines, output formats,
//! and the exit-code contract (0 ok, 2 config/usage, 3 malformed trace,
//! 4 verification failure).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ipi"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn path_str(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workdir {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workdir {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_owned();
        Workdir { _dir: dir, root }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> PathBuf {
        let path = self.file(name);
        std::fs::write(&path, contents).unwrap();
        path
    }
}

#[test]
fn gen_identify_verify_pipeline() {
    let work = Workdir::new();
    let config = work.write(
        "config.json",
        r#"{"irqs": [1, 2], "arrival_prob": 0.1, "post_prob": 0.4, "horizon": 2000, "seed": 3}"#,
    );
    let trace = work.file("t.trace");
    let labeled = work.file("t.labeled");

    let out = run(&["gen", "--config", path_str(&config), "-o", path_str(&trace)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("events"));

    let out = run(&["identify", path_str(&trace), "-o", path_str(&labeled)]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("instances"));
    assert!(stdout.contains("\"history_len_max\":0"));

    let out = run(&["verify", path_str(&labeled)]);
    assert_eq!(out.status.code(), Some(0));

    let oracled = work.file("t.oracled");
    let out = run(&["oracle", path_str(&trace), "-o", path_str(&oracled)]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["verify", path_str(&oracled)]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn identify_accepts_empty_and_truncated_traces() {
    let work = Workdir::new();
    let empty = work.write("empty.trace", "");
    let out_file = work.file("empty.labeled");
    let out = run(&["identify", path_str(&empty), "-o", path_str(&out_file)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 instances"));
    assert_eq!(std::fs::read(&out_file).unwrap(), b"");

    // A structurally valid prefix labels fine even though it is undrained.
    let prefix = work.write(
        "prefix.trace",
        "IHEntry irq=1\nPostTaskEntry task=T1\nIHEntry irq=2\n",
    );
    let out_file = work.file("prefix.labeled");
    let out = run(&["identify", path_str(&prefix), "-o", path_str(&out_file)]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn structural_errors_exit_3_naming_the_seq() {
    let work = Workdir::new();
    let orphan = work.write(
        "orphan.trace",
        "IHEntry irq=1\nIHExit irq=1\nRunTaskEntry task=T1\n",
    );
    let out_file = work.file("x.labeled");
    let out = run(&["identify", path_str(&orphan), "-o", path_str(&out_file)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("event 2"));

    let unbalanced = work.write("unbalanced.trace", "IHExit irq=1\n");
    let out = run(&["identify", path_str(&unbalanced), "-o", path_str(&out_file)]);
    assert_eq!(out.status.code(), Some(3));

    let malformed = work.write("malformed.trace", "IHEntry task=T1\n");
    let out = run(&["identify", path_str(&malformed), "-o", path_str(&out_file)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn verify_requires_truth_and_detects_corruption() {
    let work = Workdir::new();
    let no_truth = work.write("plain.trace", "IHEntry irq=1\nIHExit irq=1\n");
    let out = run(&["verify", path_str(&no_truth)]);
    assert_eq!(out.status.code(), Some(3));

    // Corrupt one truth label: verification must fail.
    let corrupt = work.write(
        "corrupt.trace",
        "IHEntry irq=1 inst=1:1 pos=START truth=1:1:START\n\
         IHExit irq=1 inst=1:1 pos=END truth=1:1:INTERM\n",
    );
    let out = run(&["verify", path_str(&corrupt)]);
    assert_eq!(out.status.code(), Some(4));

    // Corrupt a stored label while truth stays right: still a failure.
    let corrupt = work.write(
        "corrupt2.trace",
        "IHEntry irq=1 inst=1:1 pos=START truth=1:1:START\n\
         IHExit irq=1 inst=1:1 pos=INTERM truth=1:1:END\n",
    );
    let out = run(&["verify", path_str(&corrupt)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stored"));
}

#[test]
fn verify_rejects_undrained_traces() {
    let work = Workdir::new();
    let undrained = work.write(
        "undrained.trace",
        "IHEntry irq=1 inst=1:1 pos=START truth=1:1:START\n\
         PostTaskEntry task=T1 inst=1:1 pos=INTERM truth=1:1:INTERM\n\
         PostOk task=T1 inst=1:1 pos=INTERM truth=1:1:INTERM\n\
         IHExit irq=1 inst=1:1 pos=INTERM truth=1:1:INTERM\n",
    );
    let out = run(&["verify", path_str(&undrained)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("undrained"));
}

#[test]
fn gen_accepts_script_files_and_validates_them() {
    let work = Workdir::new();
    let script = work.write(
        "boot.json",
        r#"[
            {"action": "post", "task": "Boot"},
            {"action": "post_ok", "task": "Boot"},
            {"action": "run_task", "task": "Boot"},
            {"action": "other", "n": 2},
            {"action": "task_exit"}
        ]"#,
    );
    let trace = work.file("boot.trace");
    let out = run(&["gen", "--script", path_str(&script), "-o", path_str(&trace)]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().all(|l| l.contains("inst=0:0")));
    let out = run(&["verify", path_str(&trace)]);
    assert_eq!(out.status.code(), Some(0));

    let bad = work.write("bad.json", r#"[{"action": "ih_exit"}]"#);
    let out = run(&["gen", "--script", path_str(&bad), "-o", path_str(&trace)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("action 0"));
}

#[test]
fn gen_rejects_bad_configs_with_exit_2() {
    let work = Workdir::new();
    let trace = work.file("t.trace");
    let bad = work.write("bad.json", r#"{"irqs": [], "horizon": 100}"#);
    let out = run(&["gen", "--config", path_str(&bad), "-o", path_str(&trace)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("irqs"));

    let unknown = work.write("unknown.json", r#"{"bogus": 3}"#);
    let out = run(&[
        "gen",
        "--config",
        path_str(&unknown),
        "-o",
        path_str(&trace),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["gen", "-o", path_str(&trace)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn profile_reports_csv_and_json() {
    let work = Workdir::new();
    let trace = work.file("fig1a.trace");
    let out = run(&["gen", "--script", "fig1a", "-o", path_str(&trace)]);
    assert_eq!(out.status.code(), Some(0));

    let csv_out = work.file("p.csv");
    let out = run(&["profile", path_str(&trace), "-o", path_str(&csv_out)]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&csv_out).unwrap();
    assert_eq!(csv.lines().count(), 3, "header plus two instance rows");
    assert!(csv.lines().nth(1).unwrap().starts_with("1,1,0,9,8,1,1,1,1"));

    let json_out = work.file("p.json");
    let out = run(&["profile", path_str(&trace), "-o", path_str(&json_out)]);
    assert_eq!(out.status.code(), Some(0));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 2);

    // Unlabeled input cannot be profiled.
    let plain = work.write("plain.trace", "IHEntry irq=1\nIHExit irq=1\n");
    let out = run(&["profile", path_str(&plain), "-o", path_str(&csv_out)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bench_writes_reports_and_validates_lengths() {
    let work = Workdir::new();
    let config = work.write(
        "config.json",
        r#"{"irqs": [1, 2], "arrival_prob": 0.1, "post_prob": 0.4, "seed": 5}"#,
    );
    let csv_out = work.file("b.csv");
    let out = run(&[
        "bench",
        "-c",
        path_str(&config),
        "--lengths",
        "1000,2000",
        "--reps",
        "3",
        "-o",
        path_str(&csv_out),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&csv_out).unwrap();
    assert_eq!(
        csv.lines().count(),
        5,
        "header plus 2 lengths x 2 algorithms"
    );

    let out = run(&[
        "bench",
        "-c",
        path_str(&config),
        "--lengths",
        "2000,1000",
        "-o",
        path_str(&csv_out),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
