//! WebSocket gateway for the operator console.
//!
//! Every frame is a JSON text message `{"dir":"in"|"out","frame":...}`.
//! Outbound frames are transcript records (the bus JSON unchanged), snapshot
//! frames, and ack or error frames answering commands. Inbound frames carry
//! operator commands plus a client-chosen `id` echoed in the answer.
//!
//! The gateway only observes the bus through a transcript tap. Commands are
//! queued and handed to the kernel between ticks by the runner thread, so a
//! console never races the scheduler. See docs/gateway.md for the schema.

use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, info, warn};
use serde::Serialize;
use serde_json::{json, Value};
use tungstenite::{Message, WebSocket};

use officemesh::acl::{AgentKind, Mode, Tick};
use officemesh::agent::Status;
use officemesh::bus::DeliveryRecord;
use officemesh::reasoning::{PlanRequester, DEFAULT_REQUESTER};
use officemesh::simworld::{Command, Kernel, WorldSnapshot};

use crate::runner::TickHook;
use crate::HarnessError;

/// How long a client thread blocks on a read before flushing its outbox.
const POLL_INTERVAL: Duration = Duration::from_millis(10);

/// Wraps a frame for the wire.
pub fn wrap(dir: &str, frame: Value) -> String {
    json!({ "dir": dir, "frame": frame }).to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LivenessRow {
    pub agent: String,
    pub status: Status,
    pub last_seen: Tick,
    pub kind: AgentKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    pub schemas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OpenQueryRow {
    pub conversation_id: String,
    pub asker: String,
    pub question: String,
    pub about: String,
    pub asked_at: Tick,
}

/// Everything a freshly connected console needs to draw its panels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnapshotFrame {
    pub tick: Tick,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub world: WorldSnapshot,
    pub liveness: Vec<LivenessRow>,
    pub open_queries: Vec<OpenQueryRow>,
}

impl SnapshotFrame {
    pub fn of(kernel: &Kernel) -> Self {
        let liveness = kernel
            .liveness()
            .map(|t| {
                t.entries()
                    .map(|(id, e)| LivenessRow {
                        agent: id.clone(),
                        status: e.status,
                        last_seen: e.last_seen,
                        kind: e.advert.kind,
                        location: e.advert.location.clone(),
                        schemas: e.advert.schemas().len(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        let open_queries = kernel
            .keyboard()
            .map(|k| {
                k.open_queries()
                    .iter()
                    .map(|(conv, q)| OpenQueryRow {
                        conversation_id: conv.clone(),
                        asker: q.asker.clone(),
                        question: q.question.clone(),
                        about: q.about.clone(),
                        asked_at: q.asked_at,
                    })
                    .collect()
            })
            .unwrap_or_default();
        SnapshotFrame {
            tick: kernel.now(),
            mode: kernel.behavior::<PlanRequester>(DEFAULT_REQUESTER).map(|r| r.mode()),
            world: kernel.snapshot(),
            liveness,
            open_queries,
        }
    }

    pub fn to_frame(&self) -> String {
        wrap("out", json!({ "snapshot": self }))
    }
}

pub fn record_frame(record: &DeliveryRecord) -> String {
    wrap("out", serde_json::to_value(record).expect("records serialize"))
}

fn ack_frame(id: &Value, command: &str) -> String {
    wrap("out", json!({ "ack": { "id": id, "command": command } }))
}

fn error_frame(id: &Value, message: &str) -> String {
    wrap("out", json!({ "error": { "id": id, "message": message } }))
}

/// Splits an inbound text frame into its id and command.
pub fn parse_inbound(text: &str) -> Result<(Value, Command), (Value, String)> {
    let value: Value = serde_json::from_str(text).map_err(|e| (Value::Null, format!("not JSON: {e}")))?;
    let Some(obj) = value.as_object() else { return Err((Value::Null, "frame must be an object".into())) };
    if obj.get("dir").and_then(Value::as_str) != Some("in") {
        return Err((Value::Null, "inbound frames need \"dir\":\"in\"".into()));
    }
    let Some(mut frame) = obj.get("frame").and_then(Value::as_object).cloned() else {
        return Err((Value::Null, "missing frame object".into()));
    };
    let id = frame.remove("id").unwrap_or(Value::Null);
    match serde_json::from_value::<Command>(Value::Object(frame)) {
        Ok(cmd) => Ok((id, cmd)),
        Err(e) => Err((id, format!("malformed command: {e}"))),
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::SubmitGoal { .. } => "submit_goal",
        Command::RespondQuery { .. } => "respond_query",
        Command::InjectFailure { .. } => "inject_failure",
        Command::SetMode { .. } => "set_mode",
    }
}

#[derive(Default)]
struct Hub {
    clients: BTreeMap<u64, Sender<String>>,
    latest_snapshot: Option<String>,
}

impl Hub {
    fn broadcast(&mut self, frame: &str) {
        self.clients.retain(|_, tx| tx.send(frame.to_string()).is_ok());
    }
}

#[derive(Clone, Debug)]
pub struct GatewayConfig {
    /// Ticks between periodic snapshot frames.
    pub snapshot_every: Tick,
    /// Wall-clock pause after each tick, for watching a run live.
    pub tick_delay: Duration,
    /// Keep the clock running after the scenario ends until stopped.
    pub hold: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig { snapshot_every: 10, tick_delay: Duration::ZERO, hold: false }
    }
}

/// A listening gateway; pass it to [`crate::run_scenario_with`] as the tick hook.
pub struct Gateway {
    addr: SocketAddr,
    hub: Arc<Mutex<Hub>>,
    inbound: Receiver<(u64, String)>,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    config: GatewayConfig,
    tap: Option<Receiver<DeliveryRecord>>,
    connected: Arc<AtomicU64>,
}

impl Gateway {
    pub fn bind(addr: &str, config: GatewayConfig) -> Result<Gateway, HarnessError> {
        let listener = TcpListener::bind(addr).map_err(|e| HarnessError::Gateway(format!("bind {addr}: {e}")))?;
        listener.set_nonblocking(true).map_err(|e| HarnessError::Gateway(e.to_string()))?;
        let addr = listener.local_addr().map_err(|e| HarnessError::Gateway(e.to_string()))?;
        let hub = Arc::new(Mutex::new(Hub::default()));
        let (in_tx, inbound) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let connected = Arc::new(AtomicU64::new(0));
        let acceptor = {
            let (hub, stop, connected) = (hub.clone(), stop.clone(), connected.clone());
            std::thread::spawn(move || accept_loop(listener, hub, in_tx, stop, connected))
        };
        info!("gateway listening on ws://{addr}");
        Ok(Gateway { addr, hub, inbound, stop, acceptor: Some(acceptor), config, tap: None, connected })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Number of consoles that connected so far.
    pub fn connections(&self) -> u64 {
        self.connected.load(Ordering::SeqCst)
    }

    fn publish_snapshot(&mut self, kernel: &Kernel) {
        let frame = SnapshotFrame::of(kernel).to_frame();
        let mut hub = self.hub.lock().expect("hub lock");
        hub.broadcast(&frame);
        hub.latest_snapshot = Some(frame);
    }

    fn forward_records(&mut self) {
        let Some(tap) = &self.tap else { return };
        let frames: Vec<String> = tap.try_iter().map(|r| record_frame(&r)).collect();
        if frames.is_empty() {
            return;
        }
        let mut hub = self.hub.lock().expect("hub lock");
        for f in &frames {
            hub.broadcast(f);
        }
    }

    fn reply(&self, client: u64, frame: String) {
        if let Some(tx) = self.hub.lock().expect("hub lock").clients.get(&client) {
            let _ = tx.send(frame);
        }
    }

    /// Forwards new transcript records and applies queued commands without
    /// advancing the clock. Returns how many commands were handled.
    pub fn pump(&mut self, kernel: &mut Kernel) -> usize {
        self.forward_records();
        let pending: Vec<(u64, String)> = self.inbound.try_iter().collect();
        let handled = pending.len();
        for (client, text) in pending {
            let frame = match parse_inbound(&text) {
                Ok((id, cmd)) => {
                    let name = command_name(&cmd);
                    debug!("gateway command from client {client}: {cmd:?}");
                    match kernel.submit(cmd) {
                        Ok(()) => ack_frame(&id, name),
                        Err(e) => error_frame(&id, &e.to_string()),
                    }
                }
                Err((id, message)) => {
                    warn!("gateway client {client}: {message}");
                    error_frame(&id, &message)
                }
            };
            self.reply(client, frame);
        }
        handled
    }

    /// Stops accepting clients and closes existing connections.
    pub fn close(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.hub.lock().expect("hub lock").clients.clear();
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl TickHook for Gateway {
    fn on_boot(&mut self, kernel: &mut Kernel) -> Result<(), HarnessError> {
        let broker = kernel.broker();
        let mut broker = broker.lock().expect("broker lock");
        let backlog = broker.transcript().to_vec();
        self.tap = Some(broker.tap());
        drop(broker);
        {
            let mut hub = self.hub.lock().expect("hub lock");
            for r in &backlog {
                hub.broadcast(&record_frame(r));
            }
        }
        self.publish_snapshot(kernel);
        Ok(())
    }

    fn after_tick(&mut self, kernel: &mut Kernel) -> Result<(), HarnessError> {
        self.pump(kernel);
        if self.config.snapshot_every > 0 && kernel.now().is_multiple_of(self.config.snapshot_every) {
            self.publish_snapshot(kernel);
        }
        if !self.config.tick_delay.is_zero() {
            std::thread::sleep(self.config.tick_delay);
        }
        Ok(())
    }

    fn keep_running(&mut self, _kernel: &Kernel) -> bool {
        self.config.hold && !self.stop.load(Ordering::SeqCst)
    }
}

fn accept_loop(
    listener: TcpListener,
    hub: Arc<Mutex<Hub>>,
    inbound: Sender<(u64, String)>,
    stop: Arc<AtomicBool>,
    connected: Arc<AtomicU64>,
) {
    let mut workers = Vec::new();
    let mut next_id = 0u64;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                next_id += 1;
                let id = next_id;
                let (tx, rx) = mpsc::channel();
                {
                    let mut hub = hub.lock().expect("hub lock");
                    if let Some(snapshot) = &hub.latest_snapshot {
                        let _ = tx.send(snapshot.clone());
                    }
                    hub.clients.insert(id, tx);
                }
                connected.fetch_add(1, Ordering::SeqCst);
                info!("console {id} connected from {peer}");
                let (inbound, stop) = (inbound.clone(), stop.clone());
                workers.push(std::thread::spawn(move || {
                    if let Err(e) = serve_client(id, stream, rx, inbound, stop) {
                        debug!("console {id} closed: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(POLL_INTERVAL),
            Err(e) => {
                warn!("gateway accept failed: {e}");
                std::thread::sleep(POLL_INTERVAL);
            }
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io)
        if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut))
}

fn serve_client(
    id: u64,
    stream: TcpStream,
    outbox: Receiver<String>,
    inbound: Sender<(u64, String)>,
    stop: Arc<AtomicBool>,
) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_ref().set_read_timeout(Some(POLL_INTERVAL))?;
    loop {
        if stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        loop {
            match outbox.try_recv() {
                Ok(frame) => ws.write(Message::text(frame))?,
                Err(mpsc::TryRecvError::Empty) => break,
                // Dropped by the hub: the gateway is shutting down.
                Err(mpsc::TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return Ok(());
                }
            }
        }
        match ws.flush() {
            Ok(()) => {}
            Err(e) if is_timeout(&e) => {}
            Err(e) => return Err(e),
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                if inbound.send((id, text.to_string())).is_err() {
                    return Ok(());
                }
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(e) => return Err(e),
        }
    }
}

/// Blocking console-side client, used by the CLI and the tests.
pub struct GatewayClient {
    ws: WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>,
}

impl GatewayClient {
    pub fn connect(url: &str) -> Result<GatewayClient, HarnessError> {
        let (ws, _) = tungstenite::connect(url).map_err(|e| HarnessError::Gateway(format!("connect {url}: {e}")))?;
        Ok(GatewayClient { ws })
    }

    /// Sends raw text, well-formed or not.
    pub fn send_text(&mut self, text: &str) -> Result<(), HarnessError> {
        self.ws.send(Message::text(text.to_string())).map_err(|e| HarnessError::Gateway(e.to_string()))
    }

    pub fn send_command(&mut self, id: &str, command: &Command) -> Result<(), HarnessError> {
        let mut frame = serde_json::to_value(command).expect("commands serialize");
        frame["id"] = Value::from(id);
        self.send_text(&wrap("in", frame))
    }

    /// Next outbound frame's `frame` object.
    pub fn next_frame(&mut self) -> Result<Value, HarnessError> {
        loop {
            match self.ws.read().map_err(|e| HarnessError::Gateway(e.to_string()))? {
                Message::Text(text) => {
                    let v: Value = serde_json::from_str(&text).map_err(|e| HarnessError::Gateway(e.to_string()))?;
                    if v["dir"] != "out" {
                        return Err(HarnessError::Gateway(format!("unexpected frame {v}")));
                    }
                    return Ok(v["frame"].clone());
                }
                Message::Close(_) => return Err(HarnessError::Gateway("gateway closed the connection".into())),
                _ => {}
            }
        }
    }

    /// Reads frames until one satisfies `pred`.
    pub fn wait_for(&mut self, mut pred: impl FnMut(&Value) -> bool) -> Result<Value, HarnessError> {
        loop {
            let f = self.next_frame()?;
            if pred(&f) {
                return Ok(f);
            }
        }
    }

    /// Waits for the ack or error answering command `id`.
    pub fn answer(&mut self, id: &str) -> Result<Result<(), String>, HarnessError> {
        let f = self.wait_for(|f| f["ack"]["id"] == id || f["error"]["id"] == id)?;
        Ok(match f.get("error") {
            Some(e) => Err(e["message"].as_str().unwrap_or_default().to_string()),
            None => Ok(()),
        })
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use officemesh::simworld::Health;

    #[test]
    fn inbound_frames_parse() {
        let (id, cmd) =
            parse_inbound(r#"{"dir":"in","frame":{"id":"c1","command":"inject_failure","agent":"tb1","health":"down"}}"#)
                .unwrap();
        assert_eq!(id, "c1");
        assert_eq!(cmd, Command::InjectFailure { agent: "tb1".into(), health: Health::Down });
    }

    #[test]
    fn malformed_frames_keep_their_id() {
        let (id, msg) = parse_inbound(r#"{"dir":"in","frame":{"id":7,"command":"launch"}}"#).unwrap_err();
        assert_eq!(id, 7);
        assert!(msg.contains("malformed"), "{msg}");
        assert!(parse_inbound("nope").is_err());
        assert!(parse_inbound(r#"{"dir":"out","frame":{}}"#).is_err());
    }
}
