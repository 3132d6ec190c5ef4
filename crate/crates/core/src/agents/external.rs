//! Bindings for agents that live outside the process.
//!
//! Each turn sends one request `{"query_id", "prompt"}` and expects a reply
//! containing `{"machine", "command"}` or `{"final_answer"}`. A child process
//! receives requests as JSON lines on stdin and answers one line per request
//! on stdout; an HTTP endpoint receives the request as a POST body.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::Serialize;

use super::extract::extract_reply;
use super::message::{Agent, AgentContext, AgentError, AgentMessage, AgentSession, Observation};
use super::prompt::render_prompt;
use crate::model::QuerySpec;

pub const DEFAULT_TURN_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Serialize)]
pub struct AgentRequest<'a> {
    pub query_id: &'a str,
    pub prompt: String,
}

/// Where replies come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Exec(PathBuf),
    Http(String),
}

#[derive(Debug, Clone)]
pub struct ExternalAgent {
    pub endpoint: Endpoint,
    pub timeout: Duration,
}

impl ExternalAgent {
    pub fn new(endpoint: Endpoint) -> Self {
        Self {
            endpoint,
            timeout: DEFAULT_TURN_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

trait Transport: Send {
    fn exchange(&mut self, request: &str) -> Result<String, AgentError>;
}

struct ChildTransport {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl ChildTransport {
    fn spawn(path: &PathBuf, timeout: Duration) -> Result<Self, AgentError> {
        let mut child = Command::new(path)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AgentError::Transport(format!("cannot start {}: {e}", path.display())))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout,
        })
    }
}

impl Transport for ChildTransport {
    fn exchange(&mut self, request: &str) -> Result<String, AgentError> {
        writeln!(self.stdin, "{request}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| AgentError::Transport(format!("write to agent failed: {e}")))?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(AgentError::Transport(format!("read from agent failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(AgentError::Timeout(self.timeout.as_secs())),
            Err(RecvTimeoutError::Disconnected) => Err(AgentError::Transport("agent closed its output".into())),
        }
    }
}

impl Drop for ChildTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    timeout: Duration,
}

impl Transport for HttpTransport {
    fn exchange(&mut self, request: &str) -> Result<String, AgentError> {
        let reply = self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(request);
        match reply {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| AgentError::Transport(format!("reading reply failed: {e}"))),
            Err(ureq::Error::Status(code, _)) => Err(AgentError::Transport(format!("endpoint returned HTTP {code}"))),
            Err(ureq::Error::Transport(t)) => {
                let text = t.to_string();
                if text.contains("timed out") || text.contains("Timeout") {
                    Err(AgentError::Timeout(self.timeout.as_secs()))
                } else {
                    Err(AgentError::Transport(text))
                }
            }
        }
    }
}

struct ExternalSession {
    transport: Box<dyn Transport>,
    query: QuerySpec,
    pending_warning: Option<String>,
}

impl AgentSession for ExternalSession {
    fn next(&mut self, observation: &Observation) -> Result<AgentMessage, AgentError> {
        let mut prompt = render_prompt(self.query.app, &self.query, observation);
        if let Some(w) = self.pending_warning.take() {
            prompt.push_str(&format!("\nNote: {w}\n"));
        }
        let request = serde_json::to_string(&AgentRequest {
            query_id: &self.query.id,
            prompt,
        })
        .expect("request serializes");
        let reply = self.transport.exchange(&request)?;
        let extracted = extract_reply(&reply)?;
        self.pending_warning = extracted.warning;
        Ok(extracted.message)
    }
}

impl Agent for ExternalAgent {
    fn name(&self) -> String {
        match &self.endpoint {
            Endpoint::Exec(p) => format!("exec:{}", p.display()),
            Endpoint::Http(u) => format!("http:{u}"),
        }
    }

    fn start(&self, ctx: AgentContext<'_>) -> Result<Box<dyn AgentSession>, AgentError> {
        let transport: Box<dyn Transport> = match &self.endpoint {
            Endpoint::Exec(path) => Box::new(ChildTransport::spawn(path, self.timeout)?),
            Endpoint::Http(url) => Box::new(HttpTransport {
                agent: ureq::AgentBuilder::new().timeout(self.timeout).build(),
                url: url.clone(),
                timeout: self.timeout,
            }),
        };
        Ok(Box::new(ExternalSession {
            transport,
            query: ctx.query.clone(),
            pending_warning: None,
        }))
    }
}
