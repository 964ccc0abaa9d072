#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use scriptmend::engine::apply;
use scriptmend::{EditCommand, Script};
use serde_json::Value;

const VERBS: &[&str] = &[
    "open", "close", "wash", "find", "carry", "cut", "boil", "pack", "check", "fold", "pour", "lift", "clean", "buy",
];
const OBJECTS: &[&str] = &[
    "the door", "a cup", "the box", "the pan", "a towel", "the map", "some rice", "the bag", "a key", "the lid",
    "the shirt", "a bowl",
];

pub fn labels(rng: &mut impl Rng, n: usize) -> Vec<String> {
    let mut all: Vec<String> = VERBS
        .iter()
        .flat_map(|v| OBJECTS.iter().map(move |o| format!("{v} {o}")))
        .collect();
    all.shuffle(rng);
    all.truncate(n);
    all
}

/// Labels with characters DOT must escape.
pub fn awkward_label(rng: &mut impl Rng) -> String {
    const PIECES: &[&str] = &[
        "say \"hi\"", "back\\slash", "a -> b", "x; y", "{braces}", "[box]", "café", "it's", "50%", "a=b", "tab",
        "node", "edge", "digraph", "--", "#tag", "//x", "<html>", "ünïcödé",
    ];
    let n = rng.random_range(1..=3);
    (0..n).map(|_| *PIECES.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// A DAG on `1..=max_nodes` distinct labels. Nodes are declared in a random
/// order and each forward pair gets an edge with probability `density`.
pub fn random_dag_with(rng: &mut impl Rng, labels: Vec<String>, density: f64) -> Script {
    let n = labels.len();
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                edges.push((rank[i], rank[j]));
            }
        }
    }
    Script::new("a random goal", &labels, edges).expect("forward edges are acyclic")
}

pub fn random_dag(rng: &mut impl Rng, max_nodes: usize) -> Script {
    let n = rng.random_range(1..=max_nodes);
    let density = rng.random_range(0.1..0.6);
    let l = labels(rng, n);
    random_dag_with(rng, l, density)
}

fn unused_label(rng: &mut impl Rng, script: &Script) -> String {
    loop {
        let candidate = labels(rng, 1).pop().unwrap();
        if !script.contains_label(&candidate) {
            return candidate;
        }
    }
}

/// A random edit built by picking a kind and locations at random, retried
/// until it applies. Independent of `enumerate_edits`.
pub fn random_applicable_edit(rng: &mut impl Rng, script: &Script) -> EditCommand {
    let labels: Vec<String> = script.labels().map(str::to_owned).collect();
    for _ in 0..1000 {
        let a = labels.choose(rng).unwrap().clone();
        let b = labels.choose(rng).unwrap().clone();
        let edit = match rng.random_range(0..6) {
            0 => EditCommand::insert_before(unused_label(rng, script), &a),
            1 => EditCommand::insert_after(unused_label(rng, script), &a),
            2 => EditCommand::remove(&a),
            3 => EditCommand::reorder(&a, &b),
            4 => EditCommand::add_partial_order(&a, &b),
            _ => EditCommand::remove_partial_order(&a, &b),
        };
        if apply(script, &edit).is_ok() {
            return edit;
        }
    }
    unreachable!("inserts always apply")
}

#[derive(Debug, Clone)]
pub struct MockRequest {
    pub method: String,
    pub path: String,
    pub body: String,
}

#[derive(Debug, Clone)]
pub struct MockResponse {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl MockResponse {
    pub fn json(body: Value) -> Self {
        MockResponse {
            status: 200,
            body: body.to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Self {
        MockResponse {
            status,
            body: "{}".into(),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(self, delay: Duration) -> Self {
        MockResponse { delay, ..self }
    }
}

type Handler = dyn Fn(&MockRequest) -> MockResponse + Send + Sync;

/// One-thread-per-connection HTTP/1.1 server answering through a closure.
pub struct MockServer {
    addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    hits: Arc<AtomicUsize>,
    in_flight: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&MockRequest) -> MockResponse + Send + Sync + 'static) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = MockServer {
            addr,
            stop: Arc::new(AtomicBool::new(false)),
            hits: Arc::new(AtomicUsize::new(0)),
            in_flight: Arc::new(AtomicUsize::new(0)),
            peak: Arc::new(AtomicUsize::new(0)),
        };
        let handler: Arc<Handler> = Arc::new(handler);
        let (stop, hits, in_flight, peak) = (
            server.stop.clone(),
            server.hits.clone(),
            server.in_flight.clone(),
            server.peak.clone(),
        );
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let (handler, hits, in_flight, peak) = (handler.clone(), hits.clone(), in_flight.clone(), peak.clone());
                std::thread::spawn(move || {
                    hits.fetch_add(1, Ordering::SeqCst);
                    let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    let _ = serve_one(stream, handler.as_ref());
                    in_flight.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        server
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
    }
}

fn serve_one(stream: TcpStream, handler: &Handler) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_owned();
    let path = parts.next().unwrap_or_default().to_owned();
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        if line.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    let request = MockRequest {
        method,
        path,
        body: String::from_utf8_lossy(&body).into_owned(),
    };
    let response = handler(&request);
    std::thread::sleep(response.delay);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        response.status,
        response.body.len(),
        response.body
    )?;
    stream.flush()
}

pub fn client() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

/// Sends `body` (or nothing) and returns the status and parsed JSON reply.
pub fn call(agent: &ureq::Agent, method: &str, url: &str, body: Option<Value>) -> (u16, Value) {
    let mut response = match (method, body) {
        ("GET", _) => agent.get(url).call().unwrap(),
        (_, Some(b)) => agent.post(url).send_json(&b).unwrap(),
        (_, None) => agent.post(url).send_empty().unwrap(),
    };
    let status = response.status().as_u16();
    let text = response.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

pub fn post_raw(agent: &ureq::Agent, url: &str, body: &str) -> (u16, Value) {
    let mut response = agent
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    let status = response.status().as_u16();
    let text = response.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}
