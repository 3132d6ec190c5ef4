use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use netbench::agents::{agent_from_spec, Agent, Endpoint, ExternalAgent};
use netbench::generate::{build_environment, generate_batch};
use netbench::{run_episode, App, BenchmarkConfig, BenchmarkItem, EnvOptions, EpisodeOptions, EpisodeResult, StepKind};

fn item(app: App) -> BenchmarkItem {
    generate_batch(&BenchmarkConfig::new(app).with_queries(1).with_seed(4))
        .unwrap()
        .remove(0)
}

fn play(item: &BenchmarkItem, agent: &dyn Agent) -> EpisodeResult {
    let mut env = build_environment(item, EnvOptions::default()).unwrap();
    run_episode(env.as_mut(), agent, item, EpisodeOptions::default())
}

fn script(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("agent.sh");
    fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    path
}

#[test]
fn exec_agent_speaks_line_json() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("requests.log");
    let path = script(
        dir.path(),
        &format!(
            r#"n=0
while IFS= read -r line; do
  n=$((n+1))
  printf '%s\n' "$line" >> {log}
  case $n in
    1) echo 'Let me look first. {{"command": "ip addr show"}}' ;;
    2) echo 'not json at all' ;;
    *) echo '{{"final_answer": "looked around"}}' ;;
  esac
done"#,
            log = log.display()
        ),
    );
    let item = item(App::Routing);
    let r = play(&item, &ExternalAgent::new(Endpoint::Exec(path)));
    let kinds: Vec<StepKind> = r.turns.iter().map(|t| t.kind).collect();
    assert_eq!(kinds, [StepKind::Read, StepKind::Invalid, StepKind::Answer]);
    assert!(r.error.is_none() && !r.transport_failure);
    assert!(r.safe && !r.correct);

    let requests: Vec<serde_json::Value> = fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(requests.len(), 3);
    for req in &requests {
        assert_eq!(req["query_id"], item.query.id.as_str());
        let prompt = req["prompt"].as_str().unwrap();
        assert!(!prompt.contains(&item.truth.target_digest.0));
        assert!(!prompt.contains(&item.truth.hidden_injection[0].name));
    }
    assert!(requests[1]["prompt"].as_str().unwrap().contains("ip addr show"));
}

#[test]
fn silent_agent_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let path = script(dir.path(), "sleep 30");
    let agent = ExternalAgent::new(Endpoint::Exec(path)).with_timeout(Duration::from_millis(300));
    let r = play(&item(App::K8s), &agent);
    assert!(r.transport_failure);
    assert!(r.error.is_some() && !r.correct);
}

#[test]
fn exiting_agent_is_a_transport_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = script(dir.path(), "exit 0");
    let r = play(&item(App::Routing), &ExternalAgent::new(Endpoint::Exec(path)));
    assert!(r.transport_failure);
    let missing = play(
        &item(App::Routing),
        &ExternalAgent::new(Endpoint::Exec("/nonexistent/agent".into())),
    );
    assert!(missing.transport_failure && missing.turns.is_empty());
}

fn serve(replies: Vec<&'static str>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for (stream, body) in listener.incoming().zip(replies) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut request = vec![0; length];
            reader.read_exact(&mut request).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&request).unwrap();
            assert!(req["prompt"].is_string());
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    format!("http://{addr}/agent")
}

#[test]
fn http_agent_posts_each_turn() {
    let url = serve(vec![
        r#"{"command": "kubectl get networkpolicies"}"#,
        r#"{"final_answer": "done"}"#,
    ]);
    let agent = agent_from_spec(&url, 0).unwrap();
    let r = play(&item(App::K8s), agent.as_ref());
    let kinds: Vec<StepKind> = r.turns.iter().map(|t| t.kind).collect();
    assert_eq!(kinds, [StepKind::Read, StepKind::Answer]);
    assert!(r.turns[0].observation.contains("NAME"));
}

#[test]
fn http_errors_are_transport_failures() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    let r = play(&item(App::Cp), agent_from_spec(&url, 0).unwrap().as_ref());
    assert!(r.transport_failure);
}

#[test]
fn agent_specs() {
    for spec in [
        "oracle",
        "noop",
        "random",
        "random:7",
        "adversarial",
        "exec:/bin/true",
        "http://localhost:1/x",
    ] {
        assert!(agent_from_spec(spec, 1).is_ok(), "{spec}");
    }
    for spec in ["", "gpt", "random:x", "exec:"] {
        assert!(agent_from_spec(spec, 1).is_err(), "{spec}");
    }
}
