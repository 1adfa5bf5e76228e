//! Publish/subscribe messaging with MQTT 3.1.1 semantics.
//!
//! [`Transport`] is the broker-facing contract (connect with an optional last
//! will, publish, subscribe with `+`/`#` filters). [`InMemoryBus`] implements it
//! in-process for simulation and tests; [`FaultyTransport`] wraps any transport
//! to inject publish and connect failures.

mod bus;
mod fault;
mod topic;

pub use bus::InMemoryBus;
pub use fault::{FaultPlan, FaultyTransport};
pub use topic::{
    data_topic, is_valid_scanner_id, log_topic, scanner_of, Topic, TopicFilter, TOPIC_ROOT,
};

use std::time::Duration;

use crossbeam_channel::Receiver;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("invalid topic {0:?}")]
    InvalidTopic(String),
    #[error("invalid topic filter {0:?}")]
    InvalidFilter(String),
    #[error("connection {0:?} is closed")]
    Closed(String),
    #[error("broker unreachable: {0}")]
    Unreachable(String),
    #[error("publish failed: {0}")]
    PublishFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub topic: Topic,
    pub payload: Vec<u8>,
    /// Client id of the publisher, or of the dead client for a last will.
    pub publisher: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LastWill {
    pub topic: Topic,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectOptions {
    pub client_id: String,
    pub last_will: Option<LastWill>,
}

impl ConnectOptions {
    pub fn new(client_id: impl Into<String>) -> Self {
        Self {
            client_id: client_id.into(),
            last_will: None,
        }
    }

    pub fn with_will(mut self, topic: Topic, payload: impl Into<Vec<u8>>) -> Self {
        self.last_will = Some(LastWill {
            topic,
            payload: payload.into(),
        });
        self
    }
}

pub trait Transport: Send + Sync {
    fn connect(&self, options: ConnectOptions) -> Result<Box<dyn Link>, TransportError>;
}

/// One client session.
///
/// Dropping a link without [`Link::close`] counts as an unclean disconnect and
/// releases the last will, like a socket dying under a real broker.
pub trait Link: Send {
    fn client_id(&self) -> &str;

    fn publish(&mut self, topic: &Topic, payload: &[u8]) -> Result<(), TransportError>;

    fn subscribe(&mut self, filter: &TopicFilter) -> Result<Subscription, TransportError>;

    /// Clean DISCONNECT: the last will is discarded.
    fn close(self: Box<Self>);

    /// Connection lost: the broker publishes the last will, if any.
    fn drop_unclean(self: Box<Self>);
}

/// Receiving end of one subscription; messages arrive in delivery order.
#[derive(Debug)]
pub struct Subscription {
    filter: TopicFilter,
    rx: Receiver<Message>,
}

impl Subscription {
    pub(crate) fn new(filter: TopicFilter, rx: Receiver<Message>) -> Self {
        Self { filter, rx }
    }

    pub fn filter(&self) -> &TopicFilter {
        &self.filter
    }

    pub fn try_recv(&self) -> Option<Message> {
        self.rx.try_recv().ok()
    }

    /// `None` on timeout or once the bus side has gone away.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<Message> {
        self.rx.recv_timeout(timeout).ok()
    }

    /// Everything queued right now.
    pub fn drain(&self) -> Vec<Message> {
        self.rx.try_iter().collect()
    }

    pub fn receiver(&self) -> &Receiver<Message> {
        &self.rx
    }
}
