//! In-process transport: clients share the broker behind a mutex.

use std::sync::{Arc, Mutex, MutexGuard};

use super::{Ack, Broker, BusError, DeliveryRecord, Filter, Subscription, Transport};
use crate::acl::Envelope;

pub struct InprocClient {
    broker: Arc<Mutex<Broker>>,
    id: String,
}

impl InprocClient {
    pub fn connect(broker: Arc<Mutex<Broker>>, client_id: &str) -> Result<Self, BusError> {
        broker.lock().expect("broker lock").connect_queue(client_id)?;
        Ok(InprocClient { broker, id: client_id.to_string() })
    }

    fn lock(&self) -> MutexGuard<'_, Broker> {
        self.broker.lock().expect("broker lock")
    }

    /// Firehose records observed since the last call (requires a
    /// subscription to the gateway topic).
    pub fn poll_observed(&mut self) -> Result<Vec<DeliveryRecord>, BusError> {
        let id = self.id.clone();
        self.lock().drain_observed(&id)
    }
}

impl Transport for InprocClient {
    fn client_id(&self) -> &str {
        &self.id
    }

    fn publish(&mut self, envelope: &Envelope) -> Result<Ack, BusError> {
        let id = self.id.clone();
        self.lock().publish(&id, envelope.clone())
    }

    fn subscribe(&mut self, topic: &str, filter: Filter) -> Result<Subscription, BusError> {
        let id = self.id.clone();
        self.lock().subscribe(&id, topic, filter)
    }

    fn poll(&mut self) -> Result<Vec<Envelope>, BusError> {
        let id = self.id.clone();
        self.lock().drain(&id)
    }
}

impl Drop for InprocClient {
    fn drop(&mut self) {
        if let Ok(mut broker) = self.broker.lock() {
            broker.disconnect(&self.id);
        }
    }
}
