//! Schema-checking stand-in for an OpenAI-compatible chat server.

#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone)]
pub struct Recorded {
    pub body: Value,
    pub authorization: Option<String>,
    /// Schema violations; empty when the request conformed.
    pub problems: Vec<String>,
}

pub struct StubServer {
    pub url: String,
    port: u16,
    stop: Arc<AtomicBool>,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
    acceptor: Option<JoinHandle<()>>,
}

type Script = Mutex<VecDeque<(u16, String)>>;

struct RawRequest {
    method: String,
    path: String,
    headers: HashMap<String, String>,
    body: String,
}

fn read_request(stream: &TcpStream) -> std::io::Result<RawRequest> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = HashMap::new();
    loop {
        line.clear();
        reader.read_line(&mut line)?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some((k, v)) = trimmed.split_once(':') {
            headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    let len: usize = headers
        .get("content-length")
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    Ok(RawRequest {
        method,
        path,
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

fn answer(mut stream: TcpStream, script: &Script, requests: &Mutex<Vec<Recorded>>) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(10)));
    let Ok(req) = read_request(&stream) else {
        return;
    };
    let (value, problems) = validate(
        &req.method,
        &req.path,
        req.headers.get("content-type").map(String::as_str),
        &req.body,
    );
    requests.lock().unwrap().push(Recorded {
        body: value,
        authorization: req.headers.get("authorization").cloned(),
        problems,
    });
    let (status, text) = script
        .lock()
        .unwrap()
        .pop_front()
        .unwrap_or((503, "script exhausted".into()));
    let head = format!(
        "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        text.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(text.as_bytes());
    let _ = stream.flush();
}

pub fn completion(content: &str) -> String {
    serde_json::json!({
        "id": "chatcmpl-1",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

/// Every problem with one request, checked against the wire schema.
pub fn validate(
    method: &str,
    path: &str,
    content_type: Option<&str>,
    body: &str,
) -> (Value, Vec<String>) {
    let mut problems = Vec::new();
    if method != "POST" {
        problems.push(format!("method {method}"));
    }
    if path != "/v1/chat/completions" {
        problems.push(format!("path {path}"));
    }
    if !content_type.is_some_and(|c| c.starts_with("application/json")) {
        problems.push(format!("content-type {content_type:?}"));
    }
    let value: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(e) => {
            problems.push(format!("body is not JSON: {e}"));
            return (Value::Null, problems);
        }
    };
    let Some(obj) = value.as_object() else {
        problems.push("body is not an object".into());
        return (value, problems);
    };
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort_unstable();
    if keys != ["max_tokens", "messages", "model", "temperature"] {
        problems.push(format!("keys {keys:?}"));
    }
    if !obj
        .get("model")
        .and_then(Value::as_str)
        .is_some_and(|m| !m.is_empty())
    {
        problems.push("model must be a non-empty string".into());
    }
    if !obj
        .get("temperature")
        .and_then(Value::as_f64)
        .is_some_and(|t| t >= 0.0)
    {
        problems.push("temperature must be a number >= 0".into());
    }
    if obj.get("max_tokens").and_then(Value::as_u64).is_none() {
        problems.push("max_tokens must be a non-negative integer".into());
    }
    match obj.get("messages").and_then(Value::as_array) {
        Some(msgs) if !msgs.is_empty() => {
            for (i, m) in msgs.iter().enumerate() {
                let ok = m.as_object().is_some_and(|m| {
                    m.len() == 2
                        && m.get("role")
                            .and_then(Value::as_str)
                            .is_some_and(|r| ["system", "user", "assistant"].contains(&r))
                        && m.get("content").is_some_and(Value::is_string)
                });
                if !ok {
                    problems.push(format!("message {i} is malformed: {m}"));
                }
            }
        }
        _ => problems.push("messages must be a non-empty array".into()),
    }
    (value, problems)
}

impl StubServer {
    /// Answers requests with the scripted `(status, body)` pairs in arrival
    /// order, then with 503 once the script runs out. One thread per
    /// connection; every response closes its connection.
    pub fn start(script: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let port = listener.local_addr().unwrap().port();
        let script = Arc::new(Mutex::new(VecDeque::from(script)));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let requests = Arc::clone(&requests);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let script = Arc::clone(&script);
                    let requests = Arc::clone(&requests);
                    std::thread::spawn(move || answer(stream, &script, &requests));
                }
            })
        };
        Self {
            url: format!("http://127.0.0.1:{port}"),
            port,
            stop,
            requests,
            acceptor: Some(acceptor),
        }
    }

    pub fn recorded(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }

    pub fn all_valid(&self) -> Result<(), String> {
        let bad: Vec<String> = self
            .recorded()
            .iter()
            .flat_map(|r| r.problems.clone())
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad.join("; "))
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(("127.0.0.1", self.port));
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}
