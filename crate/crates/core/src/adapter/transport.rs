use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::{AdapterError, ModelRequest, ModelResponse};
use crate::toy::ToyServer;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const TIMEOUT_ENV: &str = "DIACRITIC_ADAPTER_TIMEOUT_MS";
/// Default number of requests allowed in flight at once.
pub const DEFAULT_WINDOW: usize = 16;

/// `DIACRITIC_ADAPTER_TIMEOUT_MS` when set and valid, else `fallback`.
pub fn timeout_from_env(fallback: Duration) -> Duration {
    std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map_or(fallback, Duration::from_millis)
}

/// Carries one request to a model and brings back its response. Must be
/// callable from several threads at once.
pub trait Transport: Send + Sync {
    fn call(&self, req: ModelRequest) -> Result<ModelResponse, AdapterError>;
}

fn parse_response(line: &str) -> Result<ModelResponse, AdapterError> {
    serde_json::from_str(line).map_err(|e| {
        log::error!("malformed model response {line:?}: {e}");
        AdapterError::Protocol {
            message: e.to_string(),
            raw: line.to_owned(),
        }
    })
}

/// Runs a toy server in the calling process. Requests still go through
/// JSON serialization, so the model sees exactly the wire bytes.
pub struct InProcessTransport {
    server: ToyServer,
}

impl InProcessTransport {
    pub fn new(server: ToyServer) -> Self {
        Self { server }
    }
}

impl Transport for InProcessTransport {
    fn call(&self, req: ModelRequest) -> Result<ModelResponse, AdapterError> {
        let line = serde_json::to_string(&req).expect("requests always serialize");
        parse_response(&self.server.handle_line(&line))
    }
}

type Reply = Result<ModelResponse, AdapterError>;

#[derive(Default)]
struct Pending {
    waiters: HashMap<u64, Sender<Reply>>,
    closed: bool,
}

struct Session {
    child: Mutex<Child>,
    stdin: Mutex<ChildStdin>,
    pending: Arc<Mutex<Pending>>,
}

impl Session {
    fn spawn(command: &[String]) -> Result<Arc<Self>, AdapterError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| AdapterError::Spawn(std::io::Error::other("empty command")))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(AdapterError::Spawn)?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let pending = Arc::new(Mutex::new(Pending::default()));
        let reader_pending = Arc::clone(&pending);
        std::thread::spawn(move || read_responses(BufReader::new(stdout), &reader_pending));
        Ok(Arc::new(Self {
            child: Mutex::new(child),
            stdin: Mutex::new(stdin),
            pending,
        }))
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if let Ok(child) = self.child.get_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn read_responses(reader: impl BufRead, pending: &Mutex<Pending>) {
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        match parse_response(&line) {
            Ok(resp) => {
                let waiter = pending.lock().unwrap().waiters.remove(&resp.id);
                match waiter {
                    Some(tx) => {
                        let _ = tx.send(Ok(resp));
                    }
                    None => log::warn!("dropping response for unknown id {}", resp.id),
                }
            }
            Err(_) => {
                // The stream can no longer be trusted to pair ids.
                let mut p = pending.lock().unwrap();
                p.closed = true;
                for (_, tx) in p.waiters.drain() {
                    let _ = tx.send(Err(AdapterError::Protocol {
                        message: "malformed response line".into(),
                        raw: line.clone(),
                    }));
                }
                return;
            }
        }
    }
    let mut p = pending.lock().unwrap();
    p.closed = true;
    for (_, tx) in p.waiters.drain() {
        let _ = tx.send(Err(AdapterError::ProcessExited));
    }
}

/// A model process speaking JSON lines on stdin/stdout.
///
/// Several requests may be in flight (up to `window`); a reader thread pairs
/// responses with requests by id, so out-of-order replies are fine. When the
/// process exits it is restarted once for the lifetime of the transport.
pub struct SubprocessTransport {
    command: Vec<String>,
    timeout: Duration,
    window: usize,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
    session: Mutex<Option<Arc<Session>>>,
    restarted: AtomicBool,
}

impl SubprocessTransport {
    pub fn spawn(command: Vec<String>, timeout: Duration, window: usize) -> Result<Self, AdapterError> {
        let session = Session::spawn(&command)?;
        Ok(Self {
            command,
            timeout,
            window: window.max(1),
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
            session: Mutex::new(Some(session)),
            restarted: AtomicBool::new(false),
        })
    }

    fn current(&self) -> Result<Arc<Session>, AdapterError> {
        let mut guard = self.session.lock().unwrap();
        match guard.as_ref() {
            Some(s) => Ok(Arc::clone(s)),
            None => {
                let s = Session::spawn(&self.command)?;
                *guard = Some(Arc::clone(&s));
                Ok(s)
            }
        }
    }

    /// Replaces a dead session, at most once per transport.
    fn restart(&self, dead: &Arc<Session>) -> bool {
        let mut guard = self.session.lock().unwrap();
        if let Some(s) = guard.as_ref() {
            if !Arc::ptr_eq(s, dead) {
                // another caller already replaced it
                return true;
            }
        }
        if self.restarted.swap(true, Ordering::SeqCst) {
            return false;
        }
        log::warn!("model process exited; restarting {:?}", self.command);
        *guard = None;
        true
    }

    fn send_once(&self, session: &Session, req: &ModelRequest) -> Reply {
        let (tx, rx) = mpsc::channel();
        {
            let mut p = session.pending.lock().unwrap();
            if p.closed {
                return Err(AdapterError::ProcessExited);
            }
            p.waiters.insert(req.id, tx);
        }
        let mut line = serde_json::to_string(req).expect("requests always serialize");
        line.push('\n');
        let written = {
            let mut stdin = session.stdin.lock().unwrap();
            stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush())
        };
        if written.is_err() {
            session.pending.lock().unwrap().waiters.remove(&req.id);
            return Err(AdapterError::ProcessExited);
        }
        match rx.recv_timeout(self.timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => {
                session.pending.lock().unwrap().waiters.remove(&req.id);
                Err(AdapterError::Timeout {
                    id: req.id,
                    after: self.timeout,
                })
            }
            Err(RecvTimeoutError::Disconnected) => Err(AdapterError::ProcessExited),
        }
    }
}

struct Slot<'a>(&'a SubprocessTransport);

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.slot_freed.notify_one();
    }
}

impl Transport for SubprocessTransport {
    fn call(&self, req: ModelRequest) -> Result<ModelResponse, AdapterError> {
        let _slot = {
            let mut n = self.in_flight.lock().unwrap();
            while *n >= self.window {
                n = self.slot_freed.wait(n).unwrap();
            }
            *n += 1;
            Slot(self)
        };
        let session = self.current()?;
        match self.send_once(&session, &req) {
            Err(AdapterError::ProcessExited) if self.restart(&session) => {
                let session = self.current()?;
                self.send_once(&session, &req)
            }
            other => other,
        }
    }
}

/// The same JSON bodies sent as HTTP POSTs, one request per call.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            agent,
        }
    }
}

impl Transport for HttpTransport {
    fn call(&self, req: ModelRequest) -> Result<ModelResponse, AdapterError> {
        let body = serde_json::to_string(&req).expect("requests always serialize");
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body.as_str())
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => AdapterError::Timeout {
                    id: req.id,
                    after: Duration::ZERO,
                },
                other => AdapterError::Http(other.to_string()),
            })?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| AdapterError::Http(e.to_string()))?;
        parse_response(text.trim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{Payload, Task};

    fn req(id: u64) -> ModelRequest {
        ModelRequest {
            id,
            task: Task::Generate,
            payload: Payload::Text(format!("t{id}")),
            render: false,
        }
    }

    fn python(script: &str) -> Vec<String> {
        vec!["python3".into(), "-u".into(), "-c".into(), script.into()]
    }

    #[test]
    fn env_timeout_override() {
        // Only checks the fallback path; mutating the environment would race
        // with other tests.
        if std::env::var(TIMEOUT_ENV).is_err() {
            assert_eq!(timeout_from_env(Duration::from_millis(5)), Duration::from_millis(5));
        }
    }

    #[test]
    fn out_of_order_responses_are_matched_by_id() {
        // Reads two requests, answers them in reverse order.
        let script = r#"
import sys, json
a = json.loads(sys.stdin.readline()); b = json.loads(sys.stdin.readline())
for r in (b, a):
    print(json.dumps({"id": r["id"], "output": r["text"]}))
"#;
        let t = Arc::new(SubprocessTransport::spawn(python(script), Duration::from_secs(10), 4).unwrap());
        let t2 = Arc::clone(&t);
        let h = std::thread::spawn(move || t2.call(req(7)));
        std::thread::sleep(Duration::from_millis(100));
        let r8 = t.call(req(8)).unwrap();
        let r7 = h.join().unwrap().unwrap();
        assert_eq!((r7.id, r7.output.as_deref()), (7, Some("t7")));
        assert_eq!((r8.id, r8.output.as_deref()), (8, Some("t8")));
    }

    #[test]
    fn timeout_is_reported() {
        let script = "import sys, time\nfor _ in sys.stdin: time.sleep(5)";
        let t = SubprocessTransport::spawn(python(script), Duration::from_millis(200), 1).unwrap();
        assert!(matches!(t.call(req(1)), Err(AdapterError::Timeout { id: 1, .. })));
    }

    #[test]
    fn malformed_response_is_protocol_error() {
        let script = "import sys\nfor _ in sys.stdin: print('not json')";
        let t = SubprocessTransport::spawn(python(script), Duration::from_secs(10), 1).unwrap();
        match t.call(req(1)) {
            Err(AdapterError::Protocol { raw, .. }) => assert_eq!(raw, "not json"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exited_process_restarts_once() {
        // Answers one request then exits.
        let script = r#"
import sys, json
r = json.loads(sys.stdin.readline())
print(json.dumps({"id": r["id"], "output": "ok"}))
"#;
        let t = SubprocessTransport::spawn(python(script), Duration::from_secs(10), 1).unwrap();
        assert_eq!(t.call(req(1)).unwrap().output.as_deref(), Some("ok"));
        // First process is gone; the restart serves this one.
        assert_eq!(t.call(req(2)).unwrap().output.as_deref(), Some("ok"));
        // Second death is fatal.
        assert!(matches!(t.call(req(3)), Err(AdapterError::ProcessExited)));
    }

    #[test]
    fn missing_program_fails_to_spawn() {
        let r = SubprocessTransport::spawn(vec!["/nonexistent/model".into()], DEFAULT_TIMEOUT, 1);
        assert!(matches!(r, Err(AdapterError::Spawn(_))));
    }
}
