#![allow(dead_code)]

pub mod oracle;

use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use optimake_forge_core::config::{PropertyDefinition, PropertyType};
use optimake_forge_core::convert::{
    build_entries, build_info_document, JsonLinesArchive, StructureEntry,
};
use optimake_forge_core::server::{self, ServerState};
use optimake_forge_core::synthetic::mixed_sources;
use rand::{Rng, SeedableRng};
use serde_json::{json, Map, Value};

/// A tokio runtime hosting servers on ephemeral ports.
pub struct Harness {
    pub rt: tokio::runtime::Runtime,
}

impl Harness {
    pub fn new() -> Self {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()
            .unwrap();
        Harness { rt }
    }

    /// Starts serving `state`; returns the base URL.
    pub fn serve(&self, state: Arc<ServerState>) -> String {
        let listener = self
            .rt
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .unwrap();
        let addr = listener.local_addr().unwrap();
        self.rt
            .spawn(server::serve(listener, state, std::future::pending()));
        format!("http://{addr}")
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

pub fn get(url: &str) -> (u16, Value) {
    let mut resp = agent()
        .get(url)
        .call()
        .unwrap_or_else(|e| panic!("GET {url}: {e}"));
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (
        status,
        serde_json::from_str(&text).unwrap_or(Value::String(text)),
    )
}

pub fn encode(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

pub fn wait_until(deadline: Duration, mut f: impl FnMut() -> bool) -> Option<Duration> {
    let start = Instant::now();
    loop {
        if f() {
            return Some(start.elapsed());
        }
        if start.elapsed() > deadline {
            return None;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
}

/// Follows `links.next` from `first` and returns every id seen, in order.
pub fn crawl(first: &str) -> Result<Vec<String>, String> {
    let mut ids = Vec::new();
    let mut url = first.to_string();
    for _ in 0..10_000 {
        let (status, body) = get(&url);
        if status != 200 {
            return Err(format!("{url}: HTTP {status}: {body}"));
        }
        let data = body["data"].as_array().ok_or("data is not a list")?;
        if body["meta"]["data_returned"] != json!(data.len()) {
            return Err(format!(
                "{url}: data_returned {} but {} items",
                body["meta"]["data_returned"],
                data.len()
            ));
        }
        ids.extend(
            data.iter()
                .map(|d| d["id"].as_str().unwrap_or_default().to_string()),
        );
        match body["links"]["next"].as_str() {
            Some(next) => {
                if body["meta"]["more_data_available"] != json!(true) {
                    return Err("next link without more_data_available".into());
                }
                url = next.to_string();
            }
            None => return Ok(ids),
        }
    }
    Err("crawl did not terminate".into())
}

pub fn custom_definitions() -> Vec<PropertyDefinition> {
    let def = |name: &str, kind| PropertyDefinition {
        name: name.into(),
        title: name.into(),
        description: format!("synthetic {name}"),
        unit: None,
        kind,
    };
    vec![
        def("energy", PropertyType::Float),
        def("label", PropertyType::String),
        def("count", PropertyType::Integer),
    ]
}

pub const LABELS: &[&str] = &[
    "alpha",
    "beta",
    "gamma delta",
    "quote\"d",
    "back\\slash",
    "Alpha",
];

/// `n` mixed entries (CIF, extended XYZ, molecules) with partially present custom
/// properties `_local_energy`, `_local_label` and `_local_count`.
pub fn mixed_archive(n: usize, seed: u64) -> JsonLinesArchive {
    let (mut entries, _) = build_entries(&mixed_sources(n, seed)).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed ^ 0x5eed);
    for e in &mut entries {
        let custom = &mut e.attributes.custom;
        if rng.random_bool(0.8) {
            custom.insert(
                "_local_energy".into(),
                json!(-(rng.random_range(0..500) as f64) / 100.0),
            );
        }
        if rng.random_bool(0.7) {
            custom.insert(
                "_local_label".into(),
                json!(LABELS[rng.random_range(0..LABELS.len())]),
            );
        }
        if rng.random_bool(0.9) {
            custom.insert("_local_count".into(), json!(rng.random_range(-3..10)));
        }
    }
    JsonLinesArchive {
        description: "mixed".into(),
        info: vec![build_info_document(&custom_definitions(), "local", "mixed")],
        entries,
    }
}

/// Flat document built from the serialized entry resource (`id`, `type`, attributes).
pub fn flat_document(entry: &StructureEntry) -> Map<String, Value> {
    let value = serde_json::to_value(entry).unwrap();
    let mut doc = value["attributes"].as_object().cloned().unwrap();
    doc.insert("id".into(), value["id"].clone());
    doc.insert("type".into(), value["type"].clone());
    doc
}

pub const BIN: &str = env!("CARGO_BIN_EXE_optimake-forge");

/// A running `optimake-forge serve` process; stderr lines are collected in `log`.
pub struct CliServer {
    child: Child,
    pub base: String,
    pub log: Arc<Mutex<Vec<String>>>,
}

impl Drop for CliServer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl CliServer {
    pub fn spawn(args: &[&str]) -> Result<CliServer, String> {
        let mut child = Command::new(BIN)
            .arg("serve")
            .args(args)
            .args(["--port", "0"])
            .env("OPTIMAKE_LOG", "warn")
            .env("NO_COLOR", "1")
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| e.to_string())?;
        let log = Arc::new(Mutex::new(Vec::new()));
        let sink = log.clone();
        let stderr = child.stderr.take().unwrap();
        std::thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(Result::ok) {
                sink.lock().unwrap().push(line);
            }
        });
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .map_err(|e| e.to_string())?;
        let base = match line.trim().strip_prefix("listening on ") {
            Some(b) => b.to_string(),
            None => {
                let _ = child.kill();
                return Err(format!(
                    "serve did not start: {:?} {:?}",
                    line,
                    log.lock().unwrap()
                ));
            }
        };
        Ok(CliServer { child, base, log })
    }

    pub fn log_contains(&self, needles: &[&str]) -> bool {
        self.log
            .lock()
            .unwrap()
            .iter()
            .any(|l| needles.iter().all(|n| l.contains(n)))
    }
}

/// Runs a non-serving CLI command; Err carries stderr on failure.
pub fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN)
        .args(args)
        .env("OPTIMAKE_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}
