use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};

use crossbeam_channel::{unbounded, Sender};

use super::{
    ConnectOptions, LastWill, Link, Message, Subscription, Topic, TopicFilter, Transport,
    TransportError,
};

/// In-process broker. Cloning yields another handle to the same bus.
///
/// Delivery happens under one lock, so every subscriber sees messages in a
/// single global order, which implies per-publisher FIFO.
#[derive(Clone, Default)]
pub struct InMemoryBus {
    state: Arc<Mutex<BusState>>,
}

#[derive(Default)]
struct BusState {
    next_session: u64,
    /// client id -> live session number
    sessions: HashMap<String, u64>,
    subscriptions: Vec<SubscriptionEntry>,
}

struct SubscriptionEntry {
    session: u64,
    filter: TopicFilter,
    tx: Sender<Message>,
}

impl BusState {
    fn deliver(&mut self, message: &Message) {
        // receivers that were dropped are pruned lazily
        self.subscriptions.retain(|sub| {
            !sub.filter.matches(&message.topic) || sub.tx.send(message.clone()).is_ok()
        });
    }

    fn end_session(&mut self, client_id: &str, session: u64) -> bool {
        if self.sessions.get(client_id) != Some(&session) {
            return false;
        }
        self.sessions.remove(client_id);
        self.subscriptions.retain(|s| s.session != session);
        true
    }
}

impl InMemoryBus {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, BusState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn is_connected(&self, client_id: &str) -> bool {
        self.lock().sessions.contains_key(client_id)
    }

    pub fn subscription_count(&self) -> usize {
        self.lock().subscriptions.len()
    }
}

impl Transport for InMemoryBus {
    fn connect(&self, options: ConnectOptions) -> Result<Box<dyn Link>, TransportError> {
        let mut state = self.lock();
        state.next_session += 1;
        let session = state.next_session;
        if let Some(old) = state.sessions.insert(options.client_id.clone(), session) {
            // takeover: the old session's subscriptions go with it
            state.subscriptions.retain(|s| s.session != old);
        }
        Ok(Box::new(Connection {
            bus: self.clone(),
            client_id: options.client_id,
            session,
            will: options.last_will,
            finished: false,
        }))
    }
}

struct Connection {
    bus: InMemoryBus,
    client_id: String,
    session: u64,
    will: Option<LastWill>,
    finished: bool,
}

impl Connection {
    fn fire_will(&mut self) {
        if self.finished {
            return;
        }
        self.finished = true;
        let mut state = self.bus.lock();
        if state.end_session(&self.client_id, self.session) {
            if let Some(will) = self.will.take() {
                state.deliver(&Message {
                    topic: will.topic,
                    payload: will.payload,
                    publisher: self.client_id.clone(),
                });
            }
        }
    }
}

impl Link for Connection {
    fn client_id(&self) -> &str {
        &self.client_id
    }

    fn publish(&mut self, topic: &Topic, payload: &[u8]) -> Result<(), TransportError> {
        let mut state = self.bus.lock();
        if self.finished || state.sessions.get(&self.client_id) != Some(&self.session) {
            return Err(TransportError::Closed(self.client_id.clone()));
        }
        state.deliver(&Message {
            topic: topic.clone(),
            payload: payload.to_vec(),
            publisher: self.client_id.clone(),
        });
        Ok(())
    }

    fn subscribe(&mut self, filter: &TopicFilter) -> Result<Subscription, TransportError> {
        let mut state = self.bus.lock();
        if self.finished || state.sessions.get(&self.client_id) != Some(&self.session) {
            return Err(TransportError::Closed(self.client_id.clone()));
        }
        let (tx, rx) = unbounded();
        state.subscriptions.push(SubscriptionEntry {
            session: self.session,
            filter: filter.clone(),
            tx,
        });
        Ok(Subscription::new(filter.clone(), rx))
    }

    fn close(mut self: Box<Self>) {
        self.finished = true;
        self.bus.lock().end_session(&self.client_id, self.session);
    }

    fn drop_unclean(mut self: Box<Self>) {
        self.fire_will();
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.fire_will();
    }
}
