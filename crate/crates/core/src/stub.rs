//! Minimal in-process chat-completions server for tests and dry runs.
//!
//! Speaks just enough HTTP/1.1 for one request per connection.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use crate::client::{ChatChoice, ChatReplyMessage, ChatRequest, ChatResponse};

/// What the stub answers for one request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubReply {
    Text(String),
    /// Raw HTTP status and body, for exercising error paths.
    Status(u16, String),
}

type Responder = dyn Fn(&ChatRequest) -> StubReply + Send + Sync;

struct Shared {
    responder: Box<Responder>,
    count: AtomicUsize,
    recorded: Mutex<Vec<ChatRequest>>,
    shutdown: AtomicBool,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds an ephemeral localhost port and serves until dropped.
    pub fn start(responder: impl Fn(&ChatRequest) -> StubReply + Send + Sync + 'static) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            responder: Box::new(responder),
            count: AtomicUsize::new(0),
            recorded: Mutex::new(Vec::new()),
            shutdown: AtomicBool::new(false),
        });
        let s = Arc::clone(&shared);
        let handle = thread::spawn(move || {
            for conn in listener.incoming() {
                if s.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let s = Arc::clone(&s);
                thread::spawn(move || {
                    if let Err(e) = serve(stream, &s) {
                        log::debug!("stub connection error: {e}");
                    }
                });
            }
        });
        Ok(StubServer { addr, shared, handle: Some(handle) })
    }

    /// Replies to every request with the user message's text, unchanged.
    pub fn echo() -> io::Result<Self> {
        StubServer::start(|req| {
            StubReply::Text(
                req.messages.iter().rev().find(|m| m.role == "user").map(|m| m.content.clone()).unwrap_or_default(),
            )
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    /// Requests answered so far (including error replies).
    pub fn requests(&self) -> usize {
        self.shared.count.load(Ordering::SeqCst)
    }

    pub fn recorded(&self) -> Vec<ChatRequest> {
        self.shared.recorded.lock().expect("not poisoned").clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        // Wake the accept loop so it sees the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.is_empty() {
        return Ok(());
    }
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let reply = match serde_json::from_slice::<ChatRequest>(&body) {
        Ok(req) => {
            let reply = (shared.responder)(&req);
            shared.recorded.lock().expect("not poisoned").push(req);
            reply
        }
        Err(e) => StubReply::Status(400, format!("bad request: {e}")),
    };
    shared.count.fetch_add(1, Ordering::SeqCst);

    let (status, payload) = match reply {
        StubReply::Text(text) => {
            let resp = ChatResponse {
                choices: vec![ChatChoice {
                    message: ChatReplyMessage { role: Some("assistant".into()), content: Some(text) },
                }],
            };
            (200, serde_json::to_vec(&resp).map_err(io::Error::other)?)
        }
        StubReply::Status(code, text) => (code, text.into_bytes()),
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        payload.len()
    )?;
    stream.write_all(&payload)?;
    stream.flush()
}
