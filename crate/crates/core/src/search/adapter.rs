//! Strategy backed by an external optimizer that speaks newline-delimited
//! JSON, either as a child process (stdin/stdout) or over HTTP.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::strategy::Strategy;
use super::{Context, Proposal};
use crate::binder::BLOCKS;

pub const PROTOCOL: &str = "mapforge-adapter/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainInfo {
    pub id: String,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub vector: Option<Vec<usize>>,
    pub program: String,
    pub feedback: String,
    pub kind: String,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEntry {
    pub iteration: usize,
    pub vector: Option<Vec<usize>>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub protocol: String,
    pub app: String,
    /// Number of the iteration being proposed, starting at 1.
    pub iteration: usize,
    pub domains: Vec<DomainInfo>,
    pub blocks: Vec<String>,
    pub history: Vec<HistoryEntry>,
    pub best_so_far: Option<BestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Response {
    #[serde(default)]
    pub vector: Option<Vec<usize>>,
    #[serde(default)]
    pub blocks: Option<BTreeMap<String, String>>,
}

pub fn request(ctx: &Context) -> Request {
    Request {
        protocol: PROTOCOL.to_string(),
        app: ctx.app.to_string(),
        iteration: ctx.history.len() + 1,
        domains: ctx
            .space
            .dims
            .iter()
            .map(|d| DomainInfo {
                id: d.id.clone(),
                options: d.domain.clone(),
            })
            .collect(),
        blocks: BLOCKS.iter().map(|b| b.to_string()).collect(),
        history: ctx
            .history
            .iter()
            .map(|r| HistoryEntry {
                iteration: r.iteration,
                vector: r.candidate.vector.clone(),
                program: r.candidate.program(),
                feedback: r.rendered.clone(),
                kind: r.feedback.kind.as_str().to_string(),
                score: r.score,
            })
            .collect(),
        best_so_far: ctx.best().and_then(|r| {
            r.score.map(|score| BestEntry {
                iteration: r.iteration,
                vector: r.candidate.vector.clone(),
                score,
            })
        }),
    }
}

/// Parses one response line into a proposal.
pub fn parse_response(line: &str) -> Result<Proposal, String> {
    let r: Response = serde_json::from_str(line.trim()).map_err(|e| format!("malformed adapter response: {e}"))?;
    match (r.vector, r.blocks) {
        (Some(v), None) => Ok(Proposal::Vector(v)),
        (None, Some(b)) => Ok(Proposal::Blocks(b)),
        _ => Err("malformed adapter response: expected exactly one of vector or blocks".to_string()),
    }
}

enum Endpoint {
    Http(String),
    Command(String),
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct Adapter {
    endpoint: Endpoint,
    process: Option<Process>,
}

impl Adapter {
    /// `http://` and `https://` endpoints are posted to; anything else is a
    /// shell command, optionally prefixed with `exec:`.
    pub fn new(endpoint: &str) -> Self {
        let endpoint = if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            Endpoint::Http(endpoint.to_string())
        } else {
            Endpoint::Command(endpoint.strip_prefix("exec:").unwrap_or(endpoint).to_string())
        };
        Adapter {
            endpoint,
            process: None,
        }
    }

    fn exchange(&mut self, line: &str) -> Result<String, String> {
        match &self.endpoint {
            Endpoint::Http(url) => {
                let agent: ureq::Agent = ureq::Agent::config_builder()
                    .timeout_global(Some(Duration::from_secs(300)))
                    .build()
                    .into();
                let mut resp = agent
                    .post(url)
                    .header("Content-Type", "application/json")
                    .send(line)
                    .map_err(|e| format!("adapter request to {url} failed: {e}"))?;
                let body = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| format!("adapter response from {url} unreadable: {e}"))?;
                body.lines()
                    .find(|l| !l.trim().is_empty())
                    .map(str::to_string)
                    .ok_or_else(|| format!("adapter at {url} sent an empty response"))
            }
            Endpoint::Command(cmd) => {
                if self.process.is_none() {
                    let mut child = Command::new("sh")
                        .arg("-c")
                        .arg(cmd)
                        .stdin(Stdio::piped())
                        .stdout(Stdio::piped())
                        .spawn()
                        .map_err(|e| format!("cannot start adapter {cmd}: {e}"))?;
                    let stdin = child.stdin.take().expect("piped stdin");
                    let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
                    self.process = Some(Process { child, stdin, stdout });
                }
                let p = self.process.as_mut().expect("started above");
                let sent = writeln!(p.stdin, "{line}").and_then(|_| p.stdin.flush());
                if let Err(e) = sent {
                    self.process = None;
                    return Err(format!("adapter {cmd} closed its input: {e}"));
                }
                let mut reply = String::new();
                match p.stdout.read_line(&mut reply) {
                    Ok(0) => {
                        self.process = None;
                        Err(format!("adapter {cmd} exited without answering"))
                    }
                    Ok(_) => Ok(reply),
                    Err(e) => {
                        self.process = None;
                        Err(format!("adapter {cmd} unreadable: {e}"))
                    }
                }
            }
        }
    }
}

impl Strategy for Adapter {
    fn name(&self) -> &str {
        "external"
    }

    fn propose(&mut self, ctx: &Context) -> Proposal {
        let line = serde_json::to_string(&request(ctx)).expect("request serializes");
        match self.exchange(&line).and_then(|reply| parse_response(&reply)) {
            Ok(p) => p,
            Err(e) => Proposal::Failed(e),
        }
    }
}
