//! TCP broker speaking newline-delimited JSON envelopes.
//!
//! Every line is one envelope:
//!
//! ```text
//! {"v":1,"type":"req","id":"7","op":"path","payload":{"from":"A","to":"B"}}
//! {"v":1,"type":"res","id":"7","payload":{...}}
//! {"v":1,"type":"sub","topic":"/birs/topo_map"}
//! {"v":1,"type":"ack","topic":"/birs/topo_map"}
//! {"v":1,"type":"event","topic":"/birs/topo_map","seq":1,"payload":{...}}
//! ```
//!
//! Topics are latched: a new subscriber first receives the latest payload,
//! then every later publish. Errors come back as `err` envelopes with a
//! `{code, message}` payload and never close the connection.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::parse_date;
use crate::geometry::Point2;
use crate::model::BoundaryKind;
use crate::ontology::parse_patterns;
use crate::pipeline::{Artifacts, PipelineError};
use crate::progress::Finding;
use crate::topo::{room_of_point, TopoError};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_LINE: usize = 16 * 1024 * 1024;
pub const TOPIC_TOPO_MAP: &str = "/birs/topo_map";
pub const TOPIC_GRID_META: &str = "/birs/grid_meta";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot listen on {addr}: {source}")]
    BindFailure { addr: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad envelope: {0}")]
    BadEnvelope(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Req,
    Res,
    Err,
    Sub,
    Pub,
    Event,
    Ack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub payload: Value,
}

impl Envelope {
    fn bare(kind: Kind) -> Envelope {
        Envelope {
            v: PROTOCOL_VERSION,
            kind,
            id: None,
            topic: None,
            op: None,
            seq: None,
            payload: Value::Null,
        }
    }

    pub fn request(id: &str, op: &str, payload: Value) -> Envelope {
        Envelope {
            id: Some(id.into()),
            op: Some(op.into()),
            payload,
            ..Envelope::bare(Kind::Req)
        }
    }

    pub fn subscribe(topic: &str) -> Envelope {
        Envelope {
            topic: Some(topic.into()),
            ..Envelope::bare(Kind::Sub)
        }
    }

    pub fn publish(topic: &str, payload: Value) -> Envelope {
        Envelope {
            topic: Some(topic.into()),
            payload,
            ..Envelope::bare(Kind::Pub)
        }
    }

    fn error(id: Option<String>, code: &str, message: impl Into<String>) -> Envelope {
        Envelope {
            id,
            payload: json!({"code": code, "message": message.into()}),
            ..Envelope::bare(Kind::Err)
        }
    }

    /// One protocol line, LF-terminated.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("envelopes always serialize");
        s.push('\n');
        s
    }

    pub fn parse(line: &str) -> Result<Envelope, ServiceError> {
        let value: Value = serde_json::from_str(line).map_err(|e| ServiceError::BadEnvelope(e.to_string()))?;
        if value.get("v").is_none() {
            return Err(ServiceError::BadEnvelope("missing protocol version `v`".into()));
        }
        serde_json::from_value(value).map_err(|e| ServiceError::BadEnvelope(e.to_string()))
    }

    /// Error code and message when this is an `err` envelope.
    pub fn error_code(&self) -> Option<&str> {
        (self.kind == Kind::Err).then(|| self.payload.get("code").and_then(Value::as_str))?
    }
}

/// A request failure: wire code plus human-readable message.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestError {
    pub code: &'static str,
    pub message: String,
}

fn req_err(code: &'static str, message: impl Into<String>) -> RequestError {
    RequestError {
        code,
        message: message.into(),
    }
}

fn str_field<'a>(payload: &'a Value, key: &str) -> Result<&'a str, RequestError> {
    payload
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| req_err("bad_request", format!("payload needs string field `{key}`")))
}

fn num_field(payload: &Value, key: &str) -> Result<f64, RequestError> {
    payload
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| req_err("bad_request", format!("payload needs number field `{key}`")))
}

fn point(p: Point2) -> Value {
    json!([p.x, p.y])
}

fn topo_err(e: TopoError) -> RequestError {
    let code = match e {
        TopoError::UnknownSpace(_) => "unknown_room",
        TopoError::AmbiguousName { .. } => "ambiguous_room",
        TopoError::NoRoute(..) => "no_route",
        TopoError::Syntax { .. } => "internal",
    };
    req_err(code, e.to_string())
}

/// Request handlers over immutable artifacts.
pub struct Handler {
    artifacts: Arc<Artifacts>,
}

impl Handler {
    pub fn new(artifacts: Arc<Artifacts>) -> Handler {
        Handler { artifacts }
    }

    pub fn artifacts(&self) -> &Artifacts {
        &self.artifacts
    }

    pub fn handle(&self, op: &str, payload: &Value) -> Result<Value, RequestError> {
        match op {
            "room_info" => self.room_info(str_field(payload, "name")?),
            "path" => self.path(str_field(payload, "from")?, str_field(payload, "to")?),
            "locate" => Ok(self.locate(Point2::new(num_field(payload, "x")?, num_field(payload, "y")?))),
            "material" => self.material(str_field(payload, "element_global_id")?),
            "grid_meta" => self
                .grid_meta()
                .ok_or_else(|| req_err("no_grid", "no grid map is loaded")),
            "progress_report" => self.progress_report(str_field(payload, "as_of")?),
            "query" => self.query(str_field(payload, "pattern")?),
            other => Err(req_err("unknown_op", format!("unknown op `{other}`"))),
        }
    }

    pub fn room_info(&self, name: &str) -> Result<Value, RequestError> {
        let a = &self.artifacts;
        let node = a.topo.resolve(name).map_err(topo_err)?;
        let model = a.model();
        let mut boundaries: Vec<Value> = model
            .boundaries_of(&node.id)
            .map(|b| {
                let landmark = b.element.as_deref().and_then(|e| model.landmark(e));
                json!({
                    "element": b.element,
                    "kind": match b.kind { BoundaryKind::Physical => "physical", BoundaryKind::Virtual => "virtual" },
                    "ifc_class": landmark.map(|l| l.ifc_class.name()),
                    "material": landmark.map(|l| l.material.name()),
                    "sensor_visible": landmark.map(|l| l.material.sensor_visible()),
                })
            })
            .collect();
        boundaries.sort_by_key(|v| v.to_string());
        Ok(json!({
            "global_id": node.id,
            "name": node.long_name,
            "centroid": point(node.centroid),
            "storey": node.storey,
            "function_tags": node.function_tags,
            "grid_trust": node.grid_trust,
            "boundaries": boundaries,
        }))
    }

    pub fn path(&self, from: &str, to: &str) -> Result<Value, RequestError> {
        let topo = &self.artifacts.topo;
        let a = topo.resolve(from).map_err(topo_err)?.id.clone();
        let b = topo.resolve(to).map_err(topo_err)?.id.clone();
        let route = topo.plan_path(&a, &b).map_err(topo_err)?;
        let nodes: Vec<Value> = route
            .nodes
            .iter()
            .map(|id| json!({"global_id": id, "name": topo.node(id).map(|n| n.long_name.as_str())}))
            .collect();
        Ok(json!({
            "nodes": nodes,
            "waypoints": serde_json::to_value(topo.waypoints(&route)).expect("waypoints serialize"),
            "total_cost": route.total_cost,
        }))
    }

    pub fn locate(&self, p: Point2) -> Value {
        let model = self.artifacts.model();
        let space = room_of_point(model, p);
        json!({
            "space": space,
            "name": space.and_then(|s| model.space(s)).map(|s| s.long_name.as_str()),
        })
    }

    pub fn material(&self, element: &str) -> Result<Value, RequestError> {
        let l = self
            .artifacts
            .model()
            .landmark(element)
            .ok_or_else(|| req_err("unknown_element", format!("no landmark `{element}`")))?;
        Ok(json!({"name": l.material.name(), "sensor_visible": l.material.sensor_visible()}))
    }

    pub fn grid_meta(&self) -> Option<Value> {
        let g = self.artifacts.grid.as_ref()?;
        let o = g.grid.origin();
        Some(json!({
            "resolution": g.grid.resolution(),
            "origin": [o.x, o.y, o.theta],
            "width": g.grid.width(),
            "height": g.grid.height(),
            "image": g.image_path.display().to_string(),
            "meta": g.meta_path.display().to_string(),
        }))
    }

    pub fn topo_map(&self) -> Value {
        serde_json::to_value(&self.artifacts.topo).expect("topo map serializes")
    }

    pub fn progress_report(&self, as_of: &str) -> Result<Value, RequestError> {
        let date = parse_date(as_of).map_err(|m| req_err("bad_request", m))?;
        if self.artifacts.built.is_none() {
            return Err(req_err("no_asbuilt_loaded", "no as-built map is loaded"));
        }
        let outcome = self.artifacts.progress(date).map_err(|e| match e {
            PipelineError::Grid(g) => req_err("registration", g.to_string()),
            other => req_err("internal", other.to_string()),
        })?;
        Ok(json!({
            "as_of": as_of,
            "findings": outcome.findings.iter().map(finding_json).collect::<Vec<_>>(),
        }))
    }

    pub fn query(&self, pattern: &str) -> Result<Value, RequestError> {
        let patterns = parse_patterns(pattern).map_err(|e| req_err("bad_query", e.to_string()))?;
        let rows = self
            .artifacts
            .store
            .query(&patterns)
            .map_err(|e| req_err("bad_query", e.to_string()))?;
        let rows: Vec<BTreeMap<String, String>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|(k, v)| (k, v.to_string())).collect())
            .collect();
        Ok(json!({ "bindings": rows }))
    }
}

pub fn finding_json(f: &Finding) -> Value {
    let c = &f.cluster;
    json!({
        "cluster": {
            "id": c.id,
            "kind": c.kind.name(),
            "area": c.area,
            "centroid": point(c.centroid),
            "bbox": [c.bbox.min_x, c.bbox.min_y, c.bbox.max_x, c.bbox.max_y],
            "cells": c.cells.len(),
        },
        "verdict": f.verdict.name(),
        "element": f.verdict.element(),
        "matched_overlap": f.matched_overlap,
        "storey": f.storey,
        "nearest_office": f.nearest_office.as_ref().map(|o| json!({
            "space": o.space,
            "name": o.name,
            "nodes": o.route.nodes,
            "total_cost": o.route.total_cost,
        })),
    })
}

// ---------------------------------------------------------------------------
// Broker
// ---------------------------------------------------------------------------

struct Latched {
    seq: u64,
    payload: Value,
}

#[derive(Default)]
struct Topics {
    latched: BTreeMap<String, Latched>,
    subscribers: BTreeMap<String, Vec<(u64, Sender<String>)>>,
}

impl Topics {
    fn publish(&mut self, topic: &str, payload: Value) -> u64 {
        let seq = self.latched.get(topic).map_or(1, |l| l.seq + 1);
        let line = Envelope {
            topic: Some(topic.into()),
            seq: Some(seq),
            payload: payload.clone(),
            ..Envelope::bare(Kind::Event)
        }
        .to_line();
        self.latched.insert(topic.to_string(), Latched { seq, payload });
        if let Some(subs) = self.subscribers.get_mut(topic) {
            // drop subscribers whose connection has gone
            subs.retain(|(_, tx)| tx.send(line.clone()).is_ok());
        }
        seq
    }

    fn subscribe(&mut self, topic: &str, conn: u64, tx: &Sender<String>, ack: String) {
        let subs = self.subscribers.entry(topic.to_string()).or_default();
        if !subs.iter().any(|(c, _)| *c == conn) {
            subs.push((conn, tx.clone()));
        }
        let _ = tx.send(ack);
        if let Some(l) = self.latched.get(topic) {
            let event = Envelope {
                topic: Some(topic.into()),
                seq: Some(l.seq),
                payload: l.payload.clone(),
                ..Envelope::bare(Kind::Event)
            };
            let _ = tx.send(event.to_line());
        }
    }

    fn drop_connection(&mut self, conn: u64) {
        for subs in self.subscribers.values_mut() {
            subs.retain(|(c, _)| *c != conn);
        }
    }
}

struct Shared {
    handler: Handler,
    topics: Mutex<Topics>,
    next_conn: AtomicU64,
    stopping: AtomicBool,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

/// A server running on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Publish from inside the process, as a client `pub` would.
    pub fn publish(&self, topic: &str, payload: Value) -> u64 {
        self.shared.topics.lock().unwrap().publish(topic, payload)
    }

    pub fn stop(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        self.shared.stopping.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_inner();
    }
}

impl Server {
    /// Bind and publish the latched artifact topics.
    pub fn bind(addr: &str, artifacts: Arc<Artifacts>) -> Result<Server, ServiceError> {
        let listener = TcpListener::bind(addr).map_err(|source| ServiceError::BindFailure {
            addr: addr.to_string(),
            source,
        })?;
        let handler = Handler::new(artifacts);
        let mut topics = Topics::default();
        topics.publish(TOPIC_TOPO_MAP, handler.topo_map());
        if let Some(meta) = handler.grid_meta() {
            topics.publish(TOPIC_GRID_META, meta);
        }
        Ok(Server {
            listener,
            shared: Arc::new(Shared {
                handler,
                topics: Mutex::new(topics),
                next_conn: AtomicU64::new(1),
                stopping: AtomicBool::new(false),
            }),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accept connections until stopped.
    pub fn run(self) {
        for stream in self.listener.incoming() {
            if self.shared.stopping.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let shared = Arc::clone(&self.shared);
            thread::spawn(move || {
                let _ = serve_connection(stream, shared);
            });
        }
    }

    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let shared = Arc::clone(&self.shared);
        let thread = thread::spawn(move || self.run());
        Ok(ServerHandle {
            addr,
            shared,
            thread: Some(thread),
        })
    }
}

/// Read one LF-terminated line of at most `MAX_LINE` bytes. Returns
/// `Ok(None)` at end of stream and `Err(len)` for an oversized line, which is
/// skipped up to its terminator.
fn read_frame(reader: &mut impl BufRead, buf: &mut Vec<u8>) -> io::Result<Option<Result<(), usize>>> {
    buf.clear();
    let n = reader.by_ref().take(MAX_LINE as u64 + 1).read_until(b'\n', buf)?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() == Some(&b'\n') {
        buf.pop();
        if buf.last() == Some(&b'\r') {
            buf.pop();
        }
        return Ok(Some(Ok(())));
    }
    if buf.len() <= MAX_LINE {
        // final line without terminator
        return Ok(Some(Ok(())));
    }
    let mut skipped = buf.len();
    loop {
        let chunk = reader.fill_buf()?;
        if chunk.is_empty() {
            break;
        }
        match chunk.iter().position(|&b| b == b'\n') {
            Some(i) => {
                reader.consume(i + 1);
                skipped += i;
                break;
            }
            None => {
                let len = chunk.len();
                reader.consume(len);
                skipped += len;
            }
        }
    }
    Ok(Some(Err(skipped)))
}

fn serve_connection(stream: TcpStream, shared: Arc<Shared>) -> io::Result<()> {
    let conn = shared.next_conn.fetch_add(1, Ordering::SeqCst);
    let (tx, rx) = mpsc::channel::<String>();
    let mut out = stream.try_clone()?;
    let writer = thread::spawn(move || {
        for line in rx {
            if out.write_all(line.as_bytes()).and_then(|_| out.flush()).is_err() {
                break;
            }
        }
        let _ = out.shutdown(Shutdown::Write);
    });

    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    while let Some(frame) = read_frame(&mut reader, &mut buf)? {
        if shared.stopping.load(Ordering::SeqCst) {
            break;
        }
        if let Err(len) = frame {
            let _ = tx
                .send(Envelope::error(None, "line_too_long", format!("{len} byte line exceeds {MAX_LINE}")).to_line());
            continue;
        }
        if buf.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match std::str::from_utf8(&buf) {
            Ok(line) => handle_line(line, conn, &tx, &shared),
            Err(_) => {
                let _ = tx.send(Envelope::error(None, "bad_envelope", "line is not UTF-8").to_line());
            }
        }
    }
    shared.topics.lock().unwrap().drop_connection(conn);
    drop(tx);
    let _ = writer.join();
    Ok(())
}

fn handle_line(line: &str, conn: u64, tx: &Sender<String>, shared: &Shared) {
    let send = |e: Envelope| {
        let _ = tx.send(e.to_line());
    };
    let env = match Envelope::parse(line) {
        Ok(e) => e,
        Err(e) => {
            // echo the id when it can be recovered
            let id = serde_json::from_str::<Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(Value::as_str).map(str::to_string));
            return send(Envelope::error(id, "bad_envelope", e.to_string()));
        }
    };
    if env.v != PROTOCOL_VERSION {
        return send(Envelope::error(
            env.id,
            "unsupported_version",
            format!("protocol version {} is not supported", env.v),
        ));
    }
    match env.kind {
        Kind::Req => {
            let (Some(id), Some(op)) = (env.id.clone(), env.op.as_deref()) else {
                return send(Envelope::error(env.id, "bad_envelope", "req needs `id` and `op`"));
            };
            match shared.handler.handle(op, &env.payload) {
                Ok(payload) => send(Envelope {
                    id: Some(id),
                    payload,
                    ..Envelope::bare(Kind::Res)
                }),
                Err(e) => send(Envelope::error(Some(id), e.code, e.message)),
            }
        }
        Kind::Sub => {
            let Some(topic) = env.topic.as_deref() else {
                return send(Envelope::error(env.id, "bad_envelope", "sub needs `topic`"));
            };
            let ack = Envelope {
                id: env.id.clone(),
                topic: Some(topic.into()),
                ..Envelope::bare(Kind::Ack)
            };
            shared.topics.lock().unwrap().subscribe(topic, conn, tx, ack.to_line());
        }
        Kind::Pub => {
            let Some(topic) = env.topic.as_deref() else {
                return send(Envelope::error(env.id, "bad_envelope", "pub needs `topic`"));
            };
            let seq = shared.topics.lock().unwrap().publish(topic, env.payload);
            send(Envelope {
                id: env.id,
                topic: Some(topic.into()),
                seq: Some(seq),
                ..Envelope::bare(Kind::Ack)
            });
        }
        other => send(Envelope::error(
            env.id,
            "bad_envelope",
            format!(
                "clients may not send `{}` envelopes",
                serde_json::to_value(other).unwrap().as_str().unwrap()
            ),
        )),
    }
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

/// Minimal blocking client.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Client> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client {
            writer: stream.try_clone()?,
            reader: BufReader::new(stream),
            next_id: 1,
        })
    }

    pub fn set_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        self.writer.set_read_timeout(t)
    }

    pub fn send_raw(&mut self, line: &str) -> io::Result<()> {
        self.writer.write_all(line.as_bytes())?;
        if !line.ends_with('\n') {
            self.writer.write_all(b"\n")?;
        }
        self.writer.flush()
    }

    pub fn send(&mut self, env: &Envelope) -> io::Result<()> {
        self.send_raw(&env.to_line())
    }

    /// Next raw line from the server, without its terminator.
    pub fn recv_line(&mut self) -> io::Result<String> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "server closed"));
        }
        if line.ends_with('\n') {
            line.pop();
        }
        Ok(line)
    }

    pub fn recv(&mut self) -> io::Result<Envelope> {
        let line = self.recv_line()?;
        Envelope::parse(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
    }

    /// Send a request and wait for its response, returning it with any
    /// envelopes (events) that arrived first.
    pub fn request(&mut self, op: &str, payload: Value) -> io::Result<(Envelope, Vec<Envelope>)> {
        let id = self.next_id.to_string();
        self.next_id += 1;
        self.send(&Envelope::request(&id, op, payload))?;
        let mut other = Vec::new();
        loop {
            let env = self.recv()?;
            if matches!(env.kind, Kind::Res | Kind::Err) && env.id.as_deref() == Some(&id) {
                return Ok((env, other));
            }
            other.push(env);
        }
    }

    pub fn subscribe(&mut self, topic: &str) -> io::Result<()> {
        self.send(&Envelope::subscribe(topic))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip_and_order() {
        let e = Envelope::request("a1", "locate", json!({"y": 2.0, "x": 1.0}));
        let line = e.to_line();
        assert_eq!(
            line,
            "{\"v\":1,\"type\":\"req\",\"id\":\"a1\",\"op\":\"locate\",\"payload\":{\"x\":1.0,\"y\":2.0}}\n"
        );
        assert_eq!(Envelope::parse(line.trim_end()).unwrap(), e);
        // unknown fields are ignored
        let e2 = Envelope::parse("{\"v\":1,\"type\":\"sub\",\"topic\":\"/t\",\"extra\":[1]}").unwrap();
        assert_eq!(e2, Envelope::subscribe("/t"));
        assert!(Envelope::parse("{\"type\":\"sub\",\"topic\":\"/t\"}").is_err());
        assert!(Envelope::parse("{\"v\":1,\"type\":\"shout\"}").is_err());
        assert!(Envelope::parse("not json").is_err());
    }

    #[test]
    fn frames() {
        let data = b"one\r\ntwo\n\nlast";
        let mut r = BufReader::new(&data[..]);
        let mut buf = Vec::new();
        let mut lines = Vec::new();
        while let Some(f) = read_frame(&mut r, &mut buf).unwrap() {
            f.unwrap();
            lines.push(String::from_utf8(buf.clone()).unwrap());
        }
        assert_eq!(lines, vec!["one", "two", "", "last"]);
    }

    #[test]
    fn latched_topics() {
        let mut t = Topics::default();
        assert_eq!(t.publish("/x", json!(1)), 1);
        assert_eq!(t.publish("/x", json!(2)), 2);
        let (tx, rx) = mpsc::channel();
        t.subscribe("/x", 9, &tx, "ack\n".into());
        let got: Vec<String> = rx.try_iter().collect();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0], "ack\n");
        let ev = Envelope::parse(got[1].trim_end()).unwrap();
        assert_eq!((ev.seq, ev.payload), (Some(2), json!(2)));
        t.publish("/x", json!(3));
        assert_eq!(rx.try_iter().count(), 1);
        t.subscribe("/never", 9, &tx, "ack\n".into());
        assert_eq!(rx.try_iter().collect::<Vec<_>>(), vec!["ack\n"]);
    }
}
