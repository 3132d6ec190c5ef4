//! Pulls one agent message out of free-form model output.

use serde_json::{Map, Value};

use super::message::{AgentError, AgentMessage};

/// A parsed reply plus a note for the agent when parts of it were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub message: AgentMessage,
    pub warning: Option<String>,
}

fn from_object(obj: &Map<String, Value>) -> Option<AgentMessage> {
    if let Some(answer) = obj.get("final_answer") {
        return Some(AgentMessage::final_answer(answer.clone()));
    }
    let command = obj.get("command")?.as_str()?.trim();
    if command.is_empty() {
        return None;
    }
    let machine = obj
        .get("machine")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(str::to_string);
    Some(AgentMessage::Command {
        machine,
        command: command.to_string(),
    })
}

/// JSON objects found anywhere in `text`, in order of their opening brace.
fn objects(text: &str) -> Vec<Map<String, Value>> {
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(off) = text[i..].find('{') {
        let start = i + off;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                out.push(map);
                i = start + stream.byte_offset();
            }
            _ => i = start + 1,
        }
    }
    out
}

/// Body of the first fenced block tagged `final_answer`.
fn fenced_answer(text: &str) -> Option<Value> {
    let start = text.find("```final_answer")?;
    let body = &text[start + "```final_answer".len()..];
    let end = body.find("```")?;
    let body = body[..end].trim();
    Some(serde_json::from_str(body).unwrap_or_else(|_| Value::String(body.to_string())))
}

/// Keeps the first command of a multi-command string. Heredoc bodies belong
/// to their command and are kept.
fn first_command(command: &str) -> (String, bool) {
    if command.contains("<<") {
        return (command.to_string(), false);
    }
    let lines: Vec<&str> = command.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.len() > 1 {
        return (lines[0].to_string(), true);
    }
    (command.to_string(), false)
}

/// Finds the first JSON object carrying `command` or `final_answer`, or a
/// fenced final answer. Never panics.
pub fn extract_reply(text: &str) -> Result<Extracted, AgentError> {
    let text = match serde_json::from_str::<Value>(text.trim()) {
        Ok(Value::String(inner)) => inner,
        _ => text.to_string(),
    };
    let found: Vec<AgentMessage> = objects(&text).iter().filter_map(from_object).collect();
    let mut warning = None;
    let message = match found.first() {
        Some(m) => {
            if found.len() > 1 {
                warning = Some(format!(
                    "only the first command was run; {} more ignored",
                    found.len() - 1
                ));
            }
            m.clone()
        }
        None => match fenced_answer(&text) {
            Some(v) => AgentMessage::final_answer(v),
            None => {
                let mut shown: String = text.chars().take(200).collect();
                if shown.len() < text.len() {
                    shown.push_str("...");
                }
                return Err(AgentError::Protocol(shown));
            }
        },
    };
    let message = match message {
        AgentMessage::Command { machine, command } => {
            let (command, cut) = first_command(&command);
            if cut {
                warning = Some("only the first line of the command was run".into());
            }
            AgentMessage::Command { machine, command }
        }
        other => other,
    };
    Ok(Extracted { message, warning })
}
