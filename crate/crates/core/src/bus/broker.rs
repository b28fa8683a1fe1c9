use std::collections::{BTreeMap, VecDeque};
use std::sync::mpsc::{Receiver, Sender, SyncSender, TrySendError};

use log::{debug, warn};

use super::{is_known_topic, BusError, DeliveryRecord, Filter, Subscription, GATEWAY_TOPIC};
use crate::acl::{AgentId, Envelope};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ack {
    pub msg_id: String,
    pub order: u64,
    pub delivered: Vec<AgentId>,
}

/// Frames queued for a remote session's writer.
#[derive(Debug)]
pub(crate) enum Outbound {
    Deliver(Envelope),
    Observe(DeliveryRecord),
    Control(String),
}

pub(crate) enum Outlet {
    Queue(VecDeque<Envelope>, VecDeque<DeliveryRecord>),
    Channel(SyncSender<Outbound>),
}

struct Session {
    subscriptions: BTreeMap<String, Filter>,
    outlet: Outlet,
}

/// The single ordering point of the bus.
pub struct Broker {
    sessions: BTreeMap<AgentId, Session>,
    last_seq: BTreeMap<AgentId, u64>,
    transcript: Vec<DeliveryRecord>,
    next_order: u64,
    capacity: usize,
    taps: Vec<Sender<DeliveryRecord>>,
}

impl Broker {
    pub fn new(capacity: usize) -> Self {
        Broker {
            sessions: BTreeMap::new(),
            last_seq: BTreeMap::new(),
            transcript: Vec::new(),
            next_order: 0,
            capacity: capacity.max(1),
            taps: Vec::new(),
        }
    }

    pub fn connect_queue(&mut self, client_id: &str) -> Result<(), BusError> {
        self.connect(client_id, Outlet::Queue(VecDeque::new(), VecDeque::new()))
    }

    pub(crate) fn connect(&mut self, client_id: &str, outlet: Outlet) -> Result<(), BusError> {
        if client_id.is_empty() || client_id == crate::acl::BROADCAST {
            return Err(BusError::Forbidden(format!("invalid client id `{client_id}`")));
        }
        if self.sessions.contains_key(client_id) {
            return Err(BusError::Forbidden(format!("client id `{client_id}` already connected")));
        }
        self.sessions
            .insert(client_id.to_string(), Session { subscriptions: BTreeMap::new(), outlet });
        debug!("session {client_id} connected");
        Ok(())
    }

    pub fn disconnect(&mut self, client_id: &str) {
        if self.sessions.remove(client_id).is_some() {
            debug!("session {client_id} disconnected");
        }
    }

    pub fn is_connected(&self, client_id: &str) -> bool {
        self.sessions.contains_key(client_id)
    }

    pub fn subscribe(&mut self, client_id: &str, topic: &str, filter: Filter) -> Result<Subscription, BusError> {
        if !is_known_topic(topic) {
            return Err(BusError::UnknownTopic(topic.to_string()));
        }
        let session = self
            .sessions
            .get_mut(client_id)
            .ok_or_else(|| BusError::NotConnected(client_id.to_string()))?;
        if session.subscriptions.contains_key(topic) {
            return Err(BusError::AlreadySubscribed(topic.to_string()));
        }
        session.subscriptions.insert(topic.to_string(), filter);
        Ok(Subscription { client_id: client_id.to_string(), topic: topic.to_string(), filter })
    }

    pub fn subscriptions(&self, client_id: &str) -> Vec<Subscription> {
        self.sessions
            .get(client_id)
            .map(|s| {
                s.subscriptions
                    .iter()
                    .map(|(topic, filter)| Subscription {
                        client_id: client_id.to_string(),
                        topic: topic.clone(),
                        filter: *filter,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Accepts an envelope from the session `session_id` and fans it out.
    pub fn publish(&mut self, session_id: &str, envelope: Envelope) -> Result<Ack, BusError> {
        if !self.sessions.contains_key(session_id) {
            return Err(BusError::NotConnected(session_id.to_string()));
        }
        if envelope.sender != session_id {
            return Err(BusError::Forbidden(format!(
                "session `{session_id}` cannot publish as `{}`",
                envelope.sender
            )));
        }
        envelope.check_compatible()?;
        if let Some(&last) = self.last_seq.get(session_id) {
            if envelope.seq <= last {
                return Err(BusError::StaleMessage { sender: session_id.to_string(), seq: envelope.seq, last });
            }
        }
        self.last_seq.insert(session_id.to_string(), envelope.seq);

        let topic = envelope.topic();
        let mut delivered = Vec::new();
        let mut overflowed = Vec::new();
        for (id, session) in self.sessions.iter_mut() {
            if id == session_id {
                continue;
            }
            let Some(filter) = session.subscriptions.get(&topic) else { continue };
            if !filter.matches(id, &envelope.recipient) {
                continue;
            }
            let ok = match &mut session.outlet {
                Outlet::Queue(queue, _) => {
                    if queue.len() >= self.capacity {
                        false
                    } else {
                        queue.push_back(envelope.clone());
                        true
                    }
                }
                Outlet::Channel(tx) => match tx.try_send(Outbound::Deliver(envelope.clone())) {
                    Ok(()) => true,
                    Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => false,
                },
            };
            if ok {
                delivered.push(id.clone());
            } else {
                overflowed.push(id.clone());
            }
        }
        for id in overflowed {
            warn!("subscriber {id} overflowed its queue; disconnecting");
            self.disconnect(&id);
        }

        let record = DeliveryRecord { deliver_to: delivered.clone(), envelope, order: self.next_order };
        self.next_order += 1;

        let mut dead_observers = Vec::new();
        for (id, session) in self.sessions.iter_mut() {
            if !session.subscriptions.contains_key(GATEWAY_TOPIC) {
                continue;
            }
            let ok = match &mut session.outlet {
                Outlet::Queue(_, observed) => {
                    if observed.len() >= self.capacity {
                        false
                    } else {
                        observed.push_back(record.clone());
                        true
                    }
                }
                Outlet::Channel(tx) => tx.try_send(Outbound::Observe(record.clone())).is_ok(),
            };
            if !ok {
                dead_observers.push(id.clone());
            }
        }
        for id in dead_observers {
            self.disconnect(&id);
        }
        self.taps.retain(|tap| tap.send(record.clone()).is_ok());

        let ack = Ack { msg_id: record.envelope.msg_id.clone(), order: record.order, delivered };
        self.transcript.push(record);
        Ok(ack)
    }

    /// Takes everything queued for an in-process session.
    pub fn drain(&mut self, client_id: &str) -> Result<Vec<Envelope>, BusError> {
        match self.sessions.get_mut(client_id).map(|s| &mut s.outlet) {
            Some(Outlet::Queue(queue, _)) => Ok(queue.drain(..).collect()),
            Some(Outlet::Channel(_)) => Err(BusError::Protocol("remote sessions cannot be drained".into())),
            None => Err(BusError::NotConnected(client_id.to_string())),
        }
    }

    /// Takes the firehose records observed by an in-process session.
    pub fn drain_observed(&mut self, client_id: &str) -> Result<Vec<DeliveryRecord>, BusError> {
        match self.sessions.get_mut(client_id).map(|s| &mut s.outlet) {
            Some(Outlet::Queue(_, observed)) => Ok(observed.drain(..).collect()),
            Some(Outlet::Channel(_)) => Err(BusError::Protocol("remote sessions cannot be drained".into())),
            None => Err(BusError::NotConnected(client_id.to_string())),
        }
    }

    /// Queues a control frame for a remote session behind its pending deliveries.
    pub(crate) fn send_control(&mut self, client_id: &str, frame: String) -> Result<(), BusError> {
        match self.sessions.get_mut(client_id).map(|s| &mut s.outlet) {
            Some(Outlet::Channel(tx)) => {
                if tx.try_send(Outbound::Control(frame)).is_err() {
                    warn!("session {client_id} cannot take control frames; disconnecting");
                    self.disconnect(client_id);
                    return Err(BusError::NotConnected(client_id.to_string()));
                }
                Ok(())
            }
            Some(Outlet::Queue(..)) => Ok(()),
            None => Err(BusError::NotConnected(client_id.to_string())),
        }
    }

    /// Registers an observer receiving every transcript record from now on.
    pub fn tap(&mut self) -> Receiver<DeliveryRecord> {
        let (tx, rx) = std::sync::mpsc::channel();
        self.taps.push(tx);
        rx
    }

    pub fn transcript(&self) -> &[DeliveryRecord] {
        &self.transcript
    }

    pub fn last_seq(&self, client_id: &str) -> Option<u64> {
        self.last_seq.get(client_id).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acl::{topic_for, Payload, Performative, QueryAnswer};

    fn inform(sender: &str, recipient: &str, seq: u64) -> Envelope {
        Envelope {
            msg_id: format!("{sender}/{seq}"),
            conversation_id: format!("{sender}:1"),
            performative: Performative::Inform,
            sender: sender.into(),
            recipient: recipient.into(),
            payload: Payload::QueryAnswer(QueryAnswer { answer: "ok".into() }),
            sim_time: 0,
            seq,
        }
    }

    fn broker_with(clients: &[&str]) -> Broker {
        let mut b = Broker::new(16);
        for c in clients {
            b.connect_queue(c).unwrap();
        }
        b
    }

    #[test]
    fn publish_without_subscribers_is_still_recorded() {
        let mut b = broker_with(&["a"]);
        let ack = b.publish("a", inform("a", "*", 1)).unwrap();
        assert!(ack.delivered.is_empty());
        assert_eq!(b.transcript().len(), 1);
    }

    #[test]
    fn addressed_publish_reaches_recipient_and_monitor_only() {
        let mut b = broker_with(&["turtlebot-1", "camera-1", "monitor", "pr"]);
        let topic = topic_for(Performative::Inform);
        b.subscribe("turtlebot-1", &topic, Filter::Own).unwrap();
        b.subscribe("camera-1", &topic, Filter::Own).unwrap();
        b.subscribe("monitor", &topic, Filter::All).unwrap();
        let ack = b.publish("pr", inform("pr", "turtlebot-1", 1)).unwrap();
        assert_eq!(ack.delivered, vec!["monitor".to_string(), "turtlebot-1".to_string()]);
        assert_eq!(b.drain("camera-1").unwrap().len(), 0);
    }

    #[test]
    fn subscribe_has_no_replay() {
        let mut b = broker_with(&["a", "b"]);
        let topic = topic_for(Performative::Inform);
        b.publish("a", inform("a", "*", 1)).unwrap();
        b.subscribe("b", &topic, Filter::Own).unwrap();
        assert!(b.drain("b").unwrap().is_empty());
        b.publish("a", inform("a", "*", 2)).unwrap();
        assert_eq!(b.drain("b").unwrap().len(), 1);
    }

    #[test]
    fn duplicate_and_unknown_subscriptions_fail() {
        let mut b = broker_with(&["a"]);
        let topic = topic_for(Performative::Inform);
        b.subscribe("a", &topic, Filter::Own).unwrap();
        assert_eq!(b.subscribe("a", &topic, Filter::All), Err(BusError::AlreadySubscribed(topic)));
        assert!(matches!(b.subscribe("a", "/acl/ponder", Filter::Own), Err(BusError::UnknownTopic(_))));
        assert!(b.subscribe("a", GATEWAY_TOPIC, Filter::All).is_ok());
    }

    #[test]
    fn seq_regression_is_stale() {
        let mut b = broker_with(&["a"]);
        b.publish("a", inform("a", "*", 5)).unwrap();
        assert!(matches!(b.publish("a", inform("a", "*", 5)), Err(BusError::StaleMessage { .. })));
        assert!(matches!(b.publish("a", inform("a", "*", 3)), Err(BusError::StaleMessage { .. })));
        assert_eq!(b.transcript().len(), 1);
    }

    #[test]
    fn sender_mismatch_is_forbidden() {
        let mut b = broker_with(&["a", "b"]);
        assert!(matches!(b.publish("a", inform("b", "*", 1)), Err(BusError::Forbidden(_))));
    }

    #[test]
    fn duplicate_connect_is_forbidden() {
        let mut b = broker_with(&["a"]);
        assert!(matches!(b.connect_queue("a"), Err(BusError::Forbidden(_))));
    }

    #[test]
    fn per_sender_fifo() {
        let mut b = broker_with(&["a", "b"]);
        b.subscribe("b", &topic_for(Performative::Inform), Filter::Own).unwrap();
        for seq in 1..=5 {
            b.publish("a", inform("a", "*", seq)).unwrap();
        }
        let seqs: Vec<_> = b.drain("b").unwrap().into_iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn overflow_disconnects_the_slow_subscriber() {
        let mut b = Broker::new(2);
        b.connect_queue("a").unwrap();
        b.connect_queue("slow").unwrap();
        b.subscribe("slow", &topic_for(Performative::Inform), Filter::Own).unwrap();
        for seq in 1..=3 {
            b.publish("a", inform("a", "*", seq)).unwrap();
        }
        assert!(!b.is_connected("slow"));
        assert_eq!(b.transcript()[2].deliver_to.len(), 0);
        assert!(b.publish("a", inform("a", "*", 4)).is_ok());
    }

    #[test]
    fn disconnect_removes_subscriptions() {
        let mut b = broker_with(&["a", "b"]);
        b.subscribe("b", &topic_for(Performative::Inform), Filter::Own).unwrap();
        b.disconnect("b");
        assert!(b.subscriptions("b").is_empty());
        let ack = b.publish("a", inform("a", "*", 1)).unwrap();
        assert!(ack.delivered.is_empty());
    }

    #[test]
    fn firehose_observers_are_not_listed_as_recipients() {
        let mut b = broker_with(&["a", "gateway"]);
        b.subscribe("gateway", GATEWAY_TOPIC, Filter::All).unwrap();
        let ack = b.publish("a", inform("a", "*", 1)).unwrap();
        assert!(ack.delivered.is_empty());
        assert_eq!(b.drain_observed("gateway").unwrap().len(), 1);
    }
}
