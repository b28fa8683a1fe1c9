//! Shared communication substrate.
//!
//! A single [`Broker`] serializes every publish through one ordering point,
//! keeps the append-only transcript and fans envelopes out to subscribers of
//! the performative's topic. Agents talk to it through the [`Transport`]
//! trait; [`inproc`] and [`tcp`] provide interchangeable implementations.

mod broker;
pub mod inproc;
pub mod tcp;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use broker::{Ack, Broker};

use crate::acl::{topic_for, AclError, AgentId, Envelope, Performative};

/// Observer topic receiving a copy of every delivered envelope.
pub const GATEWAY_TOPIC: &str = "/gateway/events";

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Filter {
    /// Envelopes addressed to the subscriber or broadcast.
    Own,
    /// Every envelope on the topic (monitors).
    All,
}

impl Filter {
    pub fn matches(self, client: &str, recipient: &str) -> bool {
        match self {
            Filter::All => true,
            Filter::Own => recipient == client || recipient == crate::acl::BROADCAST,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subscription {
    pub client_id: AgentId,
    pub topic: String,
    pub filter: Filter,
}

/// One line of the transcript: an accepted envelope and who received it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeliveryRecord {
    pub deliver_to: Vec<AgentId>,
    pub envelope: Envelope,
    pub order: u64,
}

impl DeliveryRecord {
    pub fn to_line(&self) -> String {
        let value = serde_json::to_value(self).expect("delivery record serializes");
        let mut line = value.to_string();
        line.push('\n');
        line
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BusError {
    #[error("stale message from {sender}: seq {seq} <= last accepted {last}")]
    StaleMessage { sender: AgentId, seq: u64, last: u64 },
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("already subscribed to {0}")]
    AlreadySubscribed(String),
    #[error("unknown topic {0}")]
    UnknownTopic(String),
    #[error("client {0} is not connected")]
    NotConnected(AgentId),
    #[error("invalid envelope: {0}")]
    Invalid(#[from] AclError),
    #[error("broker startup failed: {0}")]
    Startup(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl BusError {
    pub fn code(&self) -> &'static str {
        match self {
            BusError::StaleMessage { .. } => "stale-message",
            BusError::Forbidden(_) => "forbidden",
            BusError::AlreadySubscribed(_) => "already-subscribed",
            BusError::UnknownTopic(_) => "unknown-topic",
            BusError::NotConnected(_) => "not-connected",
            BusError::Invalid(_) => "invalid",
            BusError::Startup(_) => "startup",
            BusError::Io(_) => "io",
            BusError::Protocol(_) => "protocol",
        }
    }
}

impl From<std::io::Error> for BusError {
    fn from(e: std::io::Error) -> Self {
        BusError::Io(e.to_string())
    }
}

/// True for the eleven ACL topics and the gateway firehose.
pub fn is_known_topic(topic: &str) -> bool {
    topic == GATEWAY_TOPIC || Performative::ALL.iter().any(|p| topic_for(*p) == topic)
}

/// Client side of a bus connection.
///
/// `poll` returns everything delivered to this client up to the moment of the
/// call, in delivery order.
pub trait Transport: Send {
    fn client_id(&self) -> &str;
    fn publish(&mut self, envelope: &Envelope) -> Result<Ack, BusError>;
    fn subscribe(&mut self, topic: &str, filter: Filter) -> Result<Subscription, BusError>;
    fn poll(&mut self) -> Result<Vec<Envelope>, BusError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Inproc,
    Tcp,
}

impl fmt::Display for TransportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportKind::Inproc => "inproc",
            TransportKind::Tcp => "tcp",
        })
    }
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(TransportKind::Inproc),
            "tcp" => Ok(TransportKind::Tcp),
            other => Err(format!("unknown transport `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrokerConfig {
    pub transport: TransportKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listen_addr: Option<String>,
    #[serde(default = "default_capacity")]
    pub queue_capacity: usize,
    /// Where the transcript is written on shutdown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<PathBuf>,
}

fn default_capacity() -> usize {
    DEFAULT_QUEUE_CAPACITY
}

impl BrokerConfig {
    pub fn inproc() -> Self {
        BrokerConfig {
            transport: TransportKind::Inproc,
            listen_addr: None,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            transcript_path: None,
        }
    }

    pub fn tcp(listen_addr: impl Into<String>) -> Self {
        BrokerConfig {
            transport: TransportKind::Tcp,
            listen_addr: Some(listen_addr.into()),
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            transcript_path: None,
        }
    }
}

/// A running broker. In-process clients can always connect; TCP clients can
/// connect when the config named a TCP transport.
pub struct BrokerHandle {
    broker: Arc<Mutex<Broker>>,
    server: Option<tcp::TcpServer>,
    transcript_path: Option<PathBuf>,
}

pub fn run_broker(config: &BrokerConfig) -> Result<BrokerHandle, BusError> {
    let broker = Arc::new(Mutex::new(Broker::new(config.queue_capacity)));
    let server = match config.transport {
        TransportKind::Inproc => None,
        TransportKind::Tcp => {
            let addr = config.listen_addr.as_deref().unwrap_or("127.0.0.1:0");
            Some(tcp::TcpServer::start(addr, broker.clone(), config.queue_capacity)?)
        }
    };
    Ok(BrokerHandle { broker, server, transcript_path: config.transcript_path.clone() })
}

impl BrokerHandle {
    pub fn broker(&self) -> Arc<Mutex<Broker>> {
        self.broker.clone()
    }

    pub fn connect_inproc(&self, client_id: &str) -> Result<inproc::InprocClient, BusError> {
        inproc::InprocClient::connect(self.broker.clone(), client_id)
    }

    pub fn local_addr(&self) -> Option<std::net::SocketAddr> {
        self.server.as_ref().map(|s| s.local_addr())
    }

    pub fn transcript(&self) -> Vec<DeliveryRecord> {
        self.broker.lock().expect("broker lock").transcript().to_vec()
    }

    /// Stops accepting sessions and writes the transcript if a path was configured.
    pub fn shutdown(mut self) -> Result<Vec<DeliveryRecord>, BusError> {
        if let Some(server) = self.server.take() {
            server.stop();
        }
        let transcript = self.transcript();
        if let Some(path) = &self.transcript_path {
            write_transcript(path, &transcript)?;
        }
        Ok(transcript)
    }
}

pub fn write_transcript(path: &Path, records: &[DeliveryRecord]) -> Result<(), BusError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in records {
        file.write_all(record.to_line().as_bytes())?;
    }
    file.flush()?;
    Ok(())
}

pub fn read_transcript(path: &Path) -> Result<Vec<DeliveryRecord>, BusError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| BusError::Protocol(format!("line {}: {e}", i + 1)))
        })
        .collect()
}
