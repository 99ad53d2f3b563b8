//! Emulated O1/A1/E2 messages and their wire format.
//!
//! Each message is one line of JSON with sorted keys:
//! `{"body":{...},"schema_version":1,"type":"a1_policy"}`. Decoding is
//! strict: unknown fields, a missing or different `schema_version` and
//! E2 controls that violate their own conflict edges are all errors.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assignment::{Assignment, AssignmentEntry};
use crate::error::{Error, Result};
use crate::ids::{RuId, UeId};
use crate::policy::PolicyProfile;
use crate::radio::RadioSnapshot;
use crate::traffic::{TimeKey, TrafficSeries};
use crate::xapp::Xapp;

pub const SCHEMA_VERSION: u32 = 1;

/// Session parameters sent once before the first policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E2Setup {
    pub ewma_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct A1Policy {
    pub episode_id: u32,
    pub policy: PolicyProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E2Report {
    pub episode_id: u32,
    pub slot_id: u32,
    /// Slot counter over the whole run.
    pub global_slot: i64,
    /// Seed for the slot's coloring draws.
    pub coloring_seed: u64,
    pub snapshot: RadioSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E2Control {
    pub episode_id: u32,
    pub slot_id: u32,
    pub assignment: Vec<AssignmentEntry>,
    pub conflict_edges: Vec<(UeId, UeId)>,
    pub preempted: Vec<UeId>,
    pub colored: usize,
    pub uncolored: usize,
}

impl E2Control {
    /// Per-RU uniqueness plus properness against the carried edges.
    pub fn validate(&self) -> Result<Assignment> {
        let a = Assignment::from_entries(&self.assignment)?;
        for &(u, v) in &self.conflict_edges {
            if let (Some(pu), Some(pv)) = (a.prb_of(u), a.prb_of(v)) {
                if pu == pv {
                    return Err(Error::ImproperColoring(format!(
                        "UEs {u} and {v} conflict but share PRB {pu}"
                    )));
                }
            }
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct O1Sample {
    pub timestamp: String,
    pub ru_id: RuId,
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct O1Report {
    pub samples: Vec<O1Sample>,
}

impl O1Report {
    pub fn from_series(series: &BTreeMap<RuId, TrafficSeries>, end: usize) -> Self {
        let mut samples = Vec::new();
        for s in series.values() {
            for (i, &load) in s.loads()[..end.min(s.len())].iter().enumerate() {
                samples.push(O1Sample {
                    timestamp: s.timestamp(i).to_string(),
                    ru_id: s.ru_id(),
                    load,
                });
            }
        }
        Self { samples }
    }

    /// Regroups the window into per-RU series, applying the usual
    /// timestamp and load checks.
    pub fn to_series(&self) -> Result<BTreeMap<RuId, TrafficSeries>> {
        let mut grouped: BTreeMap<RuId, Vec<(TimeKey, f64)>> = BTreeMap::new();
        for s in &self.samples {
            let ts = TimeKey::parse(&s.timestamp)
                .ok_or_else(|| Error::Codec(format!("bad timestamp `{}`", s.timestamp)))?;
            grouped.entry(s.ru_id).or_default().push((ts, s.load));
        }
        grouped
            .into_iter()
            .map(|(ru, samples)| Ok((ru, TrafficSeries::from_samples(ru, &samples)?)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    E2Setup(E2Setup),
    A1Policy(A1Policy),
    E2Report(E2Report),
    E2Control(E2Control),
    O1Report(O1Report),
    /// Sent by a peer that hit an error before it closes the connection.
    Error { message: String },
    Shutdown,
}

impl Message {
    fn check(&self) -> Result<()> {
        match self {
            Message::A1Policy(a1) => {
                if a1.episode_id != a1.policy.episode_id {
                    return Err(Error::Codec(format!(
                        "episode_id {} disagrees with policy.episode_id {}",
                        a1.episode_id, a1.policy.episode_id
                    )));
                }
                a1.policy.validate()
            }
            Message::E2Control(c) => c.validate().map(|_| ()),
            Message::O1Report(o1) => o1.to_series().map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// Canonical single-line encoding, newline included.
pub fn encode(msg: &Message) -> Result<String> {
    msg.check()?;
    let mut v = serde_json::to_value(msg).map_err(|e| Error::Codec(e.to_string()))?;
    let obj = v
        .as_object_mut()
        .expect("messages serialize to JSON objects");
    obj.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    let mut line = serde_json::to_string(&v).map_err(|e| Error::Codec(e.to_string()))?;
    line.push('\n');
    Ok(line)
}

pub fn decode(line: &str) -> Result<Message> {
    let mut v: Value =
        serde_json::from_str(line.trim_end_matches(['\n', '\r'])).map_err(|e| Error::Codec(e.to_string()))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Error::Codec("message is not a JSON object".into()))?;
    match obj.remove("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(u64::from(SCHEMA_VERSION)) => {}
        Some(other) => {
            return Err(Error::Codec(format!(
                "schema_version {other} not supported (expected {SCHEMA_VERSION})"
            )))
        }
        None => return Err(Error::Codec("missing field `schema_version`".into())),
    }
    let msg: Message = serde_json::from_value(v).map_err(|e| Error::Codec(e.to_string()))?;
    msg.check()?;
    Ok(msg)
}

/// Ordered, reliable message pipe between two peers.
pub trait Transport: Send {
    fn send(&mut self, msg: &Message) -> Result<()>;
    fn recv(&mut self) -> Result<Message>;
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }

    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| Error::Transport(format!("connect failed: {e}")))?;
        Self::new(stream)
    }

    /// Blocks until one peer connects to `listener`.
    pub fn accept(listener: &TcpListener) -> Result<Self> {
        let (stream, peer) = listener.accept()?;
        log::info!("peer connected from {peer}");
        Self::new(stream)
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &Message) -> Result<()> {
        let line = encode(msg)?;
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::Transport(format!("send failed: {e}")))
    }

    fn recv(&mut self) -> Result<Message> {
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .map_err(|e| Error::Transport(format!("receive failed: {e}")))?;
        if n == 0 {
            return Err(Error::Transport("connection closed by peer".into()));
        }
        decode(&line)
    }
}

/// In-process transport carrying the same encoded lines over channels.
pub struct Loopback {
    tx: Sender<String>,
    rx: Receiver<String>,
}

pub fn loopback_pair() -> (Loopback, Loopback) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (Loopback { tx: a_tx, rx: a_rx }, Loopback { tx: b_tx, rx: b_rx })
}

impl Loopback {
    /// Pushes a raw line, bypassing the encoder.
    pub fn send_raw(&mut self, line: String) -> Result<()> {
        self.tx
            .send(line)
            .map_err(|_| Error::Transport("peer dropped".into()))
    }
}

impl Transport for Loopback {
    fn send(&mut self, msg: &Message) -> Result<()> {
        self.send_raw(encode(msg)?)
    }

    fn recv(&mut self) -> Result<Message> {
        let line = self
            .rx
            .recv()
            .map_err(|_| Error::Transport("connection closed by peer".into()))?;
        decode(&line)
    }
}

/// xApp side of a session: answers every E2 report with an E2 control
/// until the peer sends `Shutdown`. Errors are reported to the peer before
/// being returned.
pub fn serve_xapp(transport: &mut dyn Transport) -> Result<()> {
    let mut xapp: Option<Xapp> = None;
    loop {
        let msg = match transport.recv() {
            Ok(msg) => msg,
            Err(e @ Error::Codec(_)) => {
                let _ = transport.send(&Message::Error {
                    message: e.to_string(),
                });
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let outcome = match msg {
            Message::E2Setup(setup) => Xapp::new(&setup).map(|x| {
                xapp = Some(x);
                None
            }),
            Message::A1Policy(a1) => match xapp.as_mut() {
                Some(x) => x.apply_policy(&a1).map(|_| None),
                None => Err(Error::Codec("A1 policy before E2 setup".into())),
            },
            Message::E2Report(report) => match xapp.as_mut() {
                Some(x) => x.handle_report(&report).map(|c| Some(Message::E2Control(c))),
                None => Err(Error::Codec("E2 report before E2 setup".into())),
            },
            Message::Shutdown => return Ok(()),
            other => Err(Error::Codec(format!(
                "unexpected message for the xApp: {}",
                message_type(&other)
            ))),
        };
        match outcome {
            Ok(Some(reply)) => transport.send(&reply)?,
            Ok(None) => {}
            Err(e) => {
                let _ = transport.send(&Message::Error {
                    message: e.to_string(),
                });
                return Err(e);
            }
        }
    }
}

pub fn message_type(msg: &Message) -> &'static str {
    match msg {
        Message::E2Setup(_) => "e2_setup",
        Message::A1Policy(_) => "a1_policy",
        Message::E2Report(_) => "e2_report",
        Message::E2Control(_) => "e2_control",
        Message::O1Report(_) => "o1_report",
        Message::Error { .. } => "error",
        Message::Shutdown => "shutdown",
    }
}
