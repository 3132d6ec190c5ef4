use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const L3_K8S: [&str; 4] = ["CP+AE", "CPR+AE", "RI+AE", "AI+AE"];

fn netbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netbench"))
        .args(args)
        .env_remove("NETBENCH_AGENT")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn config(dir: &Path, app: &str, extra: &str) -> PathBuf {
    let path = dir.join(format!("{app}.toml"));
    fs::write(
        &path,
        format!("num_queries = 12\nseed = 5\nparallelism = 2\n{extra}\n[app]\nname = \"{app}\"\n"),
    )
    .unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, app: &str, extra: &str) -> PathBuf {
    let cfg = config(dir, app, extra);
    let out = dir.join(format!("{app}.jsonl"));
    let o = netbench(&["generate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn lines(p: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&netbench(&["--help"])), 0);
    assert_eq!(code(&netbench(&["generate", "--help"])), 0);
    assert_eq!(code(&netbench(&[])), 1);
    assert_eq!(code(&netbench(&["frobnicate"])), 1);
    assert_eq!(
        code(&netbench(&["report", "--records", "x", "--group-by", "colour"])),
        1
    );
}

#[test]
fn bad_configs_exit_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("q.jsonl");
    assert_eq!(
        code(&netbench(&[
            "generate",
            "--config",
            "/nonexistent.toml",
            "--out",
            s(&out)
        ])),
        1
    );
    let bogus = config(dir.path(), "mininet", "");
    assert_eq!(
        code(&netbench(&["generate", "--config", s(&bogus), "--out", s(&out)])),
        1
    );
    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "num_queries = [").unwrap();
    assert_eq!(
        code(&netbench(&["generate", "--config", s(&broken), "--out", s(&out)])),
        1
    );
    let zero_levels = config(dir.path(), "k8s", "levels = [7]");
    assert_eq!(
        code(&netbench(&["generate", "--config", s(&zero_levels), "--out", s(&out)])),
        1
    );
}

#[test]
fn generation_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for app in ["cp", "routing", "k8s"] {
        let x = fs::read(generate(a.path(), app, "")).unwrap();
        let cfg = config(b.path(), app, "");
        let out = b.path().join("other.jsonl");
        assert_eq!(
            code(&netbench(&[
                "generate",
                "--config",
                s(&cfg),
                "--out",
                s(&out),
                "--parallelism",
                "4"
            ])),
            0
        );
        assert_eq!(x, fs::read(&out).unwrap(), "{app}");
        assert!(a.path().join(format!("{app}.jsonl.manifest.json")).exists());
    }
}

#[test]
fn pipeline_groups_by_label() {
    let dir = TempDir::new().unwrap();
    let queries = generate(dir.path(), "k8s", "levels = [3]");
    let run = dir.path().join("run");
    let o = netbench(&["run", "--queries", s(&queries), "--agent", "oracle", "--out", s(&run)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let records = run.join("records.jsonl");
    assert_eq!(lines(&records).len(), 12);
    assert_eq!(lines(&run.join("transcripts.jsonl")).len(), 12);

    let csv = dir.path().join("report.csv");
    let o = netbench(&[
        "report",
        "--records",
        s(&records),
        "--group-by",
        "action_label",
        "--out",
        s(&csv),
    ]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), text.trim());
    let mut rows = text.lines();
    assert_eq!(
        rows.next().unwrap(),
        "group,n,correct_rate,correct_lo,correct_hi,safe_rate,safe_lo,safe_hi,mean_turns"
    );
    let mut total = 0;
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert!(L3_K8S.contains(&cols[0]), "{row}");
        assert_eq!(cols[2], "1.000000");
        assert_eq!(cols[5], "1.000000");
        total += cols[1].parse::<usize>().unwrap();
    }
    assert_eq!(total, 12);

    let o = netbench(&["report", "--records", s(&records), "--group-by", "level"]);
    let out = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(out.lines().nth(1).unwrap().starts_with("level3,12,"));
}

#[test]
fn agent_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let queries = generate(dir.path(), "routing", "");
    let run = dir.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_netbench"))
        .args(["run", "--queries", s(&queries), "--out", s(&run)])
        .env("NETBENCH_AGENT", "noop")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let records = lines(&run.join("records.jsonl"));
    assert!(records.iter().all(|r| r["correct"] == false && r["safe"] == true));
}

#[test]
fn resume_skips_finished_queries_without_duplicates() {
    let dir = TempDir::new().unwrap();
    let queries = generate(dir.path(), "routing", "");
    let run = dir.path().join("run");
    let args = ["run", "--queries", s(&queries), "--agent", "random:3", "--out", s(&run)];
    assert_eq!(code(&netbench(&args)), 0);
    let full = fs::read_to_string(run.join("records.jsonl")).unwrap();

    let manifest_path = run.join("manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    let ids: Vec<String> = manifest["queries"].as_object().unwrap().keys().cloned().collect();
    for id in ids.iter().step_by(2) {
        manifest["queries"][id] = "pending".into();
    }
    fs::write(&manifest_path, manifest.to_string()).unwrap();
    assert_eq!(code(&netbench(&args)), 0);

    let resumed = fs::read_to_string(run.join("records.jsonl")).unwrap();
    let ids: Vec<String> = resumed
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["query_id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(ids.len(), 12);
    assert_eq!(ids.iter().collect::<BTreeSet<_>>().len(), 12);
    assert_eq!(resumed, full);

    assert_eq!(code(&netbench(&args)), 0);
    assert_eq!(fs::read_to_string(run.join("records.jsonl")).unwrap(), full);
}

#[test]
fn failure_exit_codes() {
    let dir = TempDir::new().unwrap();
    let queries = generate(dir.path(), "k8s", "");
    let run = dir.path().join("run");
    let o = netbench(&[
        "run",
        "--queries",
        s(&queries),
        "--agent",
        "exec:/nonexistent/agent",
        "--out",
        s(&run),
    ]);
    assert_eq!(code(&o), 3);
    assert_eq!(lines(&run.join("records.jsonl")).len(), 12);

    let o = netbench(&[
        "run",
        "--queries",
        s(&queries),
        "--agent",
        "telepathy",
        "--out",
        s(&run),
    ]);
    assert_eq!(code(&o), 1);

    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&netbench(&["report", "--records", s(&empty)])), 1);
    assert_eq!(
        code(&netbench(&[
            "run",
            "--queries",
            s(&empty),
            "--agent",
            "noop",
            "--out",
            s(&run)
        ])),
        1
    );

    let garbage = dir.path().join("garbage.jsonl");
    fs::write(&garbage, "{\"query\": 1}\n").unwrap();
    assert_eq!(
        code(&netbench(&[
            "run",
            "--queries",
            s(&garbage),
            "--agent",
            "noop",
            "--out",
            s(&run)
        ])),
        1
    );
    assert_eq!(code(&netbench(&["report", "--records", s(&garbage)])), 1);

    let ranges = dir.path().join("ranges.toml");
    fs::write(
        &ranges,
        "num_queries = 3\n[app]\nname = \"routing\"\nmin_switches = 4\nmax_switches = 2\n",
    )
    .unwrap();
    let out = dir.path().join("x.jsonl");
    assert_eq!(
        code(&netbench(&["generate", "--config", s(&ranges), "--out", s(&out)])),
        1
    );

    let topo = dir.path().join("bad.topo");
    fs::write(&topo, "garbage line\n").unwrap();
    let fixture = dir.path().join("fixture.toml");
    fs::write(
        &fixture,
        format!(
            "num_queries = 3\n[app]\nname = \"cp\"\ntopology_path = {:?}\n",
            s(&topo)
        ),
    )
    .unwrap();
    assert_eq!(
        code(&netbench(&["generate", "--config", s(&fixture), "--out", s(&out)])),
        2
    );
}
