//! A small trends endpoint that serves fixture CSV files, for tests and offline runs.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use crate::error::{Error, Result};
use crate::ingest::raw::parse_raw_series;
use crate::ingest::vocabulary::slug;
use crate::series::Month;

#[derive(Default)]
struct Behaviour {
    /// term -> fixed status code
    status: HashMap<String, u16>,
    /// term -> remaining 503 responses before serving
    flaky: HashMap<String, usize>,
}

/// Serves `GET /trends?term=&geo=&start=&end=` from `<dir>/<slug(term)>.csv`.
pub struct MockTrendsServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    behaviour: Arc<Mutex<Behaviour>>,
    requests: Arc<AtomicUsize>,
    worker: Option<JoinHandle<()>>,
}

impl MockTrendsServer {
    /// Binds to an ephemeral localhost port.
    pub fn start(fixture_dir: impl Into<PathBuf>) -> Result<Self> {
        Self::bind(fixture_dir, "127.0.0.1:0")
    }

    pub fn bind(fixture_dir: impl Into<PathBuf>, addr: &str) -> Result<Self> {
        let dir = fixture_dir.into();
        let listener = TcpListener::bind(addr).map_err(|e| Error::io(addr, e))?;
        let addr = listener.local_addr().map_err(|e| Error::io("listener", e))?;
        let stop = Arc::new(AtomicBool::new(false));
        let behaviour = Arc::new(Mutex::new(Behaviour::default()));
        let requests = Arc::new(AtomicUsize::new(0));
        let worker = {
            let stop = stop.clone();
            let behaviour = behaviour.clone();
            let requests = requests.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(stream) = stream {
                        requests.fetch_add(1, Ordering::SeqCst);
                        let _ = handle(stream, &dir, &behaviour);
                    }
                }
            })
        };
        Ok(MockTrendsServer {
            addr,
            stop,
            behaviour,
            requests,
            worker: Some(worker),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Every request for `term` answers with `status` (e.g. 429).
    pub fn respond_with_status(&self, term: &str, status: u16) {
        self.behaviour.lock().unwrap().status.insert(term.to_string(), status);
    }

    /// The next `failures` requests for `term` answer 503.
    pub fn fail_transiently(&self, term: &str, failures: usize) {
        self.behaviour.lock().unwrap().flaky.insert(term.to_string(), failures);
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Blocks serving requests until the process exits.
    pub fn serve_forever(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockTrendsServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'+' => out.push(b' '),
            b'%' if i + 2 < bytes.len() => {
                let hex = std::str::from_utf8(&bytes[i + 1..i + 3]).ok();
                match hex.and_then(|h| u8::from_str_radix(h, 16).ok()).ok_or(()) {
                    Ok(b) => {
                        out.push(b);
                        i += 2;
                    }
                    Err(_) => out.push(b'%'),
                }
            }
            b => out.push(b),
        }
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn respond(stream: &mut TcpStream, status: u16, reason: &str, body: &str) -> std::io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: text/csv\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

fn handle(mut stream: TcpStream, dir: &std::path::Path, behaviour: &Mutex<Behaviour>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
    }
    let target = request_line.split_whitespace().nth(1).unwrap_or("");
    let (path, query) = target.split_once('?').unwrap_or((target, ""));
    if path != "/trends" {
        return respond(&mut stream, 404, "Not Found", "");
    }
    let params: HashMap<String, String> = query
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (percent_decode(k), percent_decode(v)))
        .collect();
    let Some(term) = params.get("term") else {
        return respond(&mut stream, 400, "Bad Request", "missing term");
    };
    {
        let mut b = behaviour.lock().unwrap();
        if let Some(&code) = b.status.get(term) {
            return respond(&mut stream, code, "Mock", "");
        }
        if let Some(left) = b.flaky.get_mut(term) {
            if *left > 0 {
                *left -= 1;
                return respond(&mut stream, 503, "Service Unavailable", "");
            }
        }
    }
    let bounds = (
        params.get("start").and_then(|s| s.parse::<Month>().ok()),
        params.get("end").and_then(|s| s.parse::<Month>().ok()),
    );
    let (Some(start), Some(end)) = bounds else {
        return respond(&mut stream, 400, "Bad Request", "bad span");
    };
    let file = dir.join(format!("{}.csv", slug(term)));
    let Ok(bytes) = std::fs::read(&file) else {
        return respond(&mut stream, 404, "Not Found", "");
    };
    let Ok(mut series) = parse_raw_series(&bytes) else {
        return respond(&mut stream, 500, "Internal Server Error", "bad fixture");
    };
    series.observations.retain(|(m, _)| *m >= start && *m <= end);
    respond(&mut stream, 200, "OK", &series.to_csv())
}

#[cfg(test)]
mod tests {
    use super::percent_decode;

    #[test]
    fn decodes_query_components() {
        assert_eq!(percent_decode("Jorge+Ch%C3%A1vez"), "Jorge Chávez");
        assert_eq!(percent_decode("car%20rentals"), "car rentals");
        assert_eq!(percent_decode("100%"), "100%");
    }
}
