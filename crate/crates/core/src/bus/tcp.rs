//! TCP transport.
//!
//! Framing is newline-delimited JSON. A session opens with `{"hello":id}`;
//! after that the client sends envelope lines and control lines
//! (`{"subscribe":topic,"filter":..}`, `{"sync":n}`), and the server answers
//! with envelope deliveries and control lines (`{"ack":msg_id,..}`,
//! `{"subscribed":topic}`, `{"synced":n}`, `{"error":{..}}`). All server
//! output for one session goes through a single bounded queue, so a
//! `synced` reply is always preceded by every delivery made before it.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::sync_channel;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, warn};
use serde_json::{json, Value};

use super::broker::{Outbound, Outlet};
use super::{Ack, Broker, BusError, DeliveryRecord, Filter, Subscription, Transport};
use crate::acl::{decode_value, encode_envelope, Envelope};

fn error_frame(err: &BusError, reference: Option<&str>) -> String {
    let mut detail = json!({"code": err.code(), "message": err.to_string()});
    if let BusError::StaleMessage { sender, seq, last } = err {
        detail["sender"] = json!(sender);
        detail["seq"] = json!(seq);
        detail["last"] = json!(last);
    }
    json!({"error": detail, "ref": reference}).to_string()
}

fn error_from_frame(frame: &Value) -> BusError {
    let detail = &frame["error"];
    let message = detail["message"].as_str().unwrap_or_default().to_string();
    match detail["code"].as_str().unwrap_or_default() {
        "stale-message" => BusError::StaleMessage {
            sender: detail["sender"].as_str().unwrap_or_default().to_string(),
            seq: detail["seq"].as_u64().unwrap_or_default(),
            last: detail["last"].as_u64().unwrap_or_default(),
        },
        "forbidden" => BusError::Forbidden(message),
        "already-subscribed" => BusError::AlreadySubscribed(frame["ref"].as_str().unwrap_or_default().to_string()),
        "unknown-topic" => BusError::UnknownTopic(frame["ref"].as_str().unwrap_or_default().to_string()),
        "not-connected" => BusError::NotConnected(message),
        _ => BusError::Protocol(message),
    }
}

pub struct TcpServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
}

impl TcpServer {
    pub(crate) fn start(addr: &str, broker: Arc<Mutex<Broker>>, capacity: usize) -> Result<Self, BusError> {
        let listener = TcpListener::bind(addr).map_err(|e| BusError::Startup(format!("{addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| BusError::Startup(e.to_string()))?;
        listener.set_nonblocking(true).map_err(|e| BusError::Startup(e.to_string()))?;
        let stop = Arc::new(AtomicBool::new(false));
        let streams: Arc<Mutex<Vec<TcpStream>>> = Arc::default();
        let accept = {
            let stop = stop.clone();
            let streams = streams.clone();
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            debug!("accepted connection from {peer}");
                            if stream.set_nonblocking(false).is_err() {
                                continue;
                            }
                            if let Ok(clone) = stream.try_clone() {
                                streams.lock().expect("stream list").push(clone);
                            }
                            let broker = broker.clone();
                            std::thread::spawn(move || serve_session(stream, broker, capacity));
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(2));
                        }
                        Err(e) => {
                            warn!("accept failed: {e}");
                            std::thread::sleep(Duration::from_millis(10));
                        }
                    }
                }
            })
        };
        Ok(TcpServer { addr: local, stop, accept: Some(accept), streams })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub(crate) fn stop(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.accept.take() {
            let _ = handle.join();
        }
        for stream in self.streams.lock().expect("stream list").drain(..) {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
    }
}

fn serve_session(stream: TcpStream, broker: Arc<Mutex<Broker>>, capacity: usize) {
    let Ok(read_half) = stream.try_clone() else { return };
    let mut reader = BufReader::new(read_half);
    let mut writer = stream;

    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let client_id = match serde_json::from_str::<Value>(&line).ok().and_then(|v| v["hello"].as_str().map(String::from)) {
        Some(id) => id,
        None => {
            let err = BusError::Protocol("expected hello line".into());
            let _ = writeln!(writer, "{}", error_frame(&err, None));
            return;
        }
    };

    let (tx, rx) = sync_channel::<Outbound>(capacity);
    if let Err(err) = broker.lock().expect("broker lock").connect(&client_id, Outlet::Channel(tx)) {
        let _ = writeln!(writer, "{}", error_frame(&err, Some(&client_id)));
        return;
    }

    let writer_thread = std::thread::spawn(move || {
        let mut out = std::io::BufWriter::new(writer);
        for frame in rx {
            let text = match frame {
                Outbound::Deliver(envelope) => match encode_envelope(&envelope) {
                    Ok(line) => line,
                    Err(_) => continue,
                },
                Outbound::Observe(record) => format!("{}\n", json!({"observed": serde_json::to_value(&record).unwrap_or(Value::Null)})),
                Outbound::Control(text) => format!("{text}\n"),
            };
            if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
                break;
            }
        }
    });

    let control = |frame: String| {
        let _ = broker.lock().expect("broker lock").send_control(&client_id, frame);
    };
    control(json!({"welcome": client_id}).to_string());

    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        let value: Value = match serde_json::from_str(line.trim_end()) {
            Ok(v) => v,
            Err(e) => {
                control(error_frame(&BusError::Protocol(e.to_string()), None));
                continue;
            }
        };
        if value.get("performative").is_some() {
            let msg_id = value["msg_id"].as_str().map(String::from);
            let result = decode_value(value)
                .map_err(BusError::from)
                .and_then(|envelope| broker.lock().expect("broker lock").publish(&client_id, envelope));
            match result {
                Ok(ack) => control(json!({"ack": ack.msg_id, "order": ack.order, "delivered": ack.delivered}).to_string()),
                Err(err) => control(error_frame(&err, msg_id.as_deref())),
            }
        } else if let Some(topic) = value["subscribe"].as_str() {
            let filter = match value.get("filter") {
                Some(f) => serde_json::from_value(f.clone()).unwrap_or(Filter::Own),
                None => Filter::Own,
            };
            let result = broker.lock().expect("broker lock").subscribe(&client_id, topic, filter);
            match result {
                Ok(_) => control(json!({"subscribed": topic}).to_string()),
                Err(err) => control(error_frame(&err, Some(topic))),
            }
        } else if let Some(n) = value["sync"].as_u64() {
            control(json!({"synced": n}).to_string());
        } else {
            control(error_frame(&BusError::Protocol("unrecognized frame".into()), None));
        }
    }
    broker.lock().expect("broker lock").disconnect(&client_id);
    let _ = writer_thread.join();
}

/// Client end of a TCP session.
pub struct TcpTransport {
    id: String,
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    pending: VecDeque<Envelope>,
    observed: VecDeque<DeliveryRecord>,
    sync_counter: u64,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs, client_id: &str) -> Result<Self, BusError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        let mut transport = TcpTransport {
            id: client_id.to_string(),
            reader,
            writer: stream,
            pending: VecDeque::new(),
            observed: VecDeque::new(),
            sync_counter: 0,
        };
        transport.send_line(&json!({"hello": client_id}).to_string())?;
        transport.await_control(|frame| frame.get("welcome").is_some())?;
        Ok(transport)
    }

    fn send_line(&mut self, line: &str) -> Result<(), BusError> {
        self.writer.write_all(line.as_bytes())?;
        if !line.ends_with('\n') {
            self.writer.write_all(b"\n")?;
        }
        self.writer.flush()?;
        Ok(())
    }

    /// Reads frames, buffering deliveries, until `is_reply` accepts one.
    /// An error frame ends the wait and is returned as an error.
    fn await_control(&mut self, is_reply: impl Fn(&Value) -> bool) -> Result<Value, BusError> {
        let mut line = String::new();
        loop {
            line.clear();
            if self.reader.read_line(&mut line)? == 0 {
                return Err(BusError::Io("connection closed by broker".into()));
            }
            let frame: Value = serde_json::from_str(line.trim_end()).map_err(|e| BusError::Protocol(e.to_string()))?;
            if frame.get("performative").is_some() {
                self.pending.push_back(decode_value(frame)?);
            } else if let Some(record) = frame.get("observed") {
                let record = serde_json::from_value(record.clone()).map_err(|e| BusError::Protocol(e.to_string()))?;
                self.observed.push_back(record);
            } else if frame.get("error").is_some() {
                return Err(error_from_frame(&frame));
            } else if is_reply(&frame) {
                return Ok(frame);
            }
        }
    }

    pub fn poll_observed(&mut self) -> Result<Vec<DeliveryRecord>, BusError> {
        self.sync()?;
        Ok(self.observed.drain(..).collect())
    }

    fn sync(&mut self) -> Result<(), BusError> {
        self.sync_counter += 1;
        let n = self.sync_counter;
        self.send_line(&json!({"sync": n}).to_string())?;
        self.await_control(|frame| frame["synced"].as_u64() == Some(n))?;
        Ok(())
    }
}

impl Transport for TcpTransport {
    fn client_id(&self) -> &str {
        &self.id
    }

    fn publish(&mut self, envelope: &Envelope) -> Result<Ack, BusError> {
        let line = encode_envelope(envelope)?;
        self.send_line(&line)?;
        let msg_id = envelope.msg_id.clone();
        let frame = self.await_control(|frame| frame["ack"].as_str() == Some(msg_id.as_str()))?;
        Ok(Ack {
            msg_id,
            order: frame["order"].as_u64().unwrap_or_default(),
            delivered: serde_json::from_value(frame["delivered"].clone()).unwrap_or_default(),
        })
    }

    fn subscribe(&mut self, topic: &str, filter: Filter) -> Result<Subscription, BusError> {
        self.send_line(&json!({"subscribe": topic, "filter": filter}).to_string())?;
        self.await_control(|frame| frame["subscribed"].as_str() == Some(topic))?;
        Ok(Subscription { client_id: self.id.clone(), topic: topic.to_string(), filter })
    }

    fn poll(&mut self) -> Result<Vec<Envelope>, BusError> {
        self.sync()?;
        Ok(self.pending.drain(..).collect())
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        let _ = self.writer.shutdown(std::net::Shutdown::Both);
    }
}
