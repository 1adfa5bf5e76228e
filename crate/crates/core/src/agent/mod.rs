//! Scanner-side pipeline: filter captures by vendor, collapse each posting
//! interval into one entry per address carrying an IE fingerprint instead of
//! raw elements, and publish the batch with birth/last-will bookkeeping.

mod actor;

pub use actor::AgentHandle;

use std::net::Ipv4Addr;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::probe::{OuiDatabase, ProbeObservation};
use crate::time::Timestamp;
use crate::transport::{
    data_topic, is_valid_scanner_id, log_topic, ConnectOptions, Link, Transport, TransportError,
};

pub const DEFAULT_POSTING_INTERVAL_S: u32 = 30;
pub const BACKOFF_BASE_S: i64 = 1;
pub const BACKOFF_CAP_S: i64 = 60;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("not connected to the broker")]
    NotConnected,
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub scanner_id: String,
    #[serde(default = "default_posting_interval")]
    pub posting_interval_s: u32,
    pub sw_version: String,
    pub local_ip: String,
    #[serde(default)]
    pub rssi_floor_dbm: Option<i32>,
}

fn default_posting_interval() -> u32 {
    DEFAULT_POSTING_INTERVAL_S
}

impl AgentConfig {
    pub fn new(scanner_id: impl Into<String>) -> Self {
        Self {
            scanner_id: scanner_id.into(),
            posting_interval_s: DEFAULT_POSTING_INTERVAL_S,
            sw_version: env!("CARGO_PKG_VERSION").to_string(),
            local_ip: "127.0.0.1".to_string(),
            rssi_floor_dbm: None,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.posting_interval_s == 0 {
            return Err(AgentError::Config("posting_interval_s must be > 0".into()));
        }
        if !is_valid_scanner_id(&self.scanner_id) {
            return Err(AgentError::Config(format!(
                "scanner_id {:?} is not a valid topic level",
                self.scanner_id
            )));
        }
        self.local_ip.parse::<Ipv4Addr>().map_err(|_| {
            AgentError::Config(format!("local_ip {:?} is not a dotted quad", self.local_ip))
        })?;
        Ok(())
    }

    pub fn posting_interval_ms(&self) -> i64 {
        i64::from(self.posting_interval_s) * 1000
    }
}

/// Consolidated sightings of one address within a batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub mac: String,
    pub randomized: bool,
    pub vendor: String,
    pub first_seen: Timestamp,
    pub last_seen: Timestamp,
    pub packet_count: u32,
    pub rssi_min: i32,
    pub rssi_max: i32,
    pub ssids: Vec<String>,
    pub ie_fingerprint: String,
    /// The fingerprint changed within the batch; `ie_fingerprint` is the latest.
    #[serde(default)]
    pub ie_changed: bool,
}

impl BatchEntry {
    /// Folds `later` into `self`; `later`'s fingerprint wins when they differ.
    fn absorb(&mut self, later: BatchEntry) {
        self.first_seen = self.first_seen.min(later.first_seen);
        self.last_seen = self.last_seen.max(later.last_seen);
        self.packet_count += later.packet_count;
        self.rssi_min = self.rssi_min.min(later.rssi_min);
        self.rssi_max = self.rssi_max.max(later.rssi_max);
        for s in later.ssids {
            if !self.ssids.contains(&s) {
                self.ssids.push(s);
            }
        }
        if self.ie_fingerprint != later.ie_fingerprint {
            self.ie_fingerprint = later.ie_fingerprint;
            self.ie_changed = true;
        }
        self.ie_changed |= later.ie_changed;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationBatch {
    pub scanner_id: String,
    pub batch_start: Timestamp,
    pub batch_end: Timestamp,
    pub entries: Vec<BatchEntry>,
}

impl ObservationBatch {
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("batch serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LifecycleMessage {
    Birth {
        scanner_id: String,
        sw_version: String,
        local_ip: String,
        ts: Timestamp,
    },
    Offline {
        scanner_id: String,
        ts: Timestamp,
    },
}

impl LifecycleMessage {
    pub fn scanner_id(&self) -> &str {
        match self {
            LifecycleMessage::Birth { scanner_id, .. }
            | LifecycleMessage::Offline { scanner_id, .. } => scanner_id,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("lifecycle message serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Accepted,
    DroppedVendor,
    DroppedRssi,
    DroppedMalformed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentMetrics {
    pub accepted: u64,
    pub dropped_vendor: u64,
    pub dropped_rssi: u64,
    pub dropped_malformed: u64,
    pub batches_published: u64,
    pub publish_failures: u64,
    pub connect_attempts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentStatus {
    Idle,
    Connected,
    /// Broker unreachable; next attempt at `retry_at`.
    Backoff {
        attempt: u32,
        retry_at: Timestamp,
    },
    Stopped,
}

/// Delay before retry number `attempt` (1-based): 1 s, 2 s, 4 s, ... capped at 60 s.
pub fn backoff_delay_s(attempt: u32) -> i64 {
    let exp = attempt.saturating_sub(1).min(16);
    (BACKOFF_BASE_S << exp).min(BACKOFF_CAP_S)
}

/// Single-threaded agent core. [`AgentHandle`] runs it as an actor on a thread.
pub struct EdgeAgent {
    config: AgentConfig,
    oui: Arc<OuiDatabase>,
    link: Option<Box<dyn Link>>,
    status: AgentStatus,
    failed_connects: u32,
    current: IndexMap<String, BatchEntry>,
    /// Entries of a batch whose publish failed, resent with the next flush.
    retained: Option<IndexMap<String, BatchEntry>>,
    batch_start: Timestamp,
    metrics: AgentMetrics,
}

impl EdgeAgent {
    pub fn new(config: AgentConfig, oui: Arc<OuiDatabase>) -> Result<Self, AgentError> {
        config.validate()?;
        Ok(Self {
            config,
            oui,
            link: None,
            status: AgentStatus::Idle,
            failed_connects: 0,
            current: IndexMap::new(),
            retained: None,
            batch_start: Timestamp::default(),
            metrics: AgentMetrics::default(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn status(&self) -> AgentStatus {
        self.status
    }

    pub fn metrics(&self) -> AgentMetrics {
        self.metrics
    }

    pub fn pending_entries(&self) -> usize {
        self.current.len() + self.retained.as_ref().map_or(0, IndexMap::len)
    }

    /// Connects with the offline message as last will, then announces itself.
    /// Failure is reported through [`AgentStatus::Backoff`], never a panic.
    pub fn start(&mut self, transport: &dyn Transport, now: Timestamp) -> AgentStatus {
        if self.batch_start == Timestamp::default() {
            self.batch_start = now;
        }
        self.metrics.connect_attempts += 1;
        match self.connect(transport, now) {
            Ok(link) => {
                self.link = Some(link);
                self.failed_connects = 0;
                self.status = AgentStatus::Connected;
            }
            Err(e) => {
                self.failed_connects += 1;
                let retry_at = now.plus_secs(backoff_delay_s(self.failed_connects));
                warn!(scanner = %self.config.scanner_id, error = %e, %retry_at, "broker connect failed");
                self.status = AgentStatus::Backoff {
                    attempt: self.failed_connects,
                    retry_at,
                };
            }
        }
        self.status
    }

    fn connect(
        &self,
        transport: &dyn Transport,
        now: Timestamp,
    ) -> Result<Box<dyn Link>, AgentError> {
        let log = log_topic(&self.config.scanner_id)?;
        let offline = LifecycleMessage::Offline {
            scanner_id: self.config.scanner_id.clone(),
            ts: now,
        };
        let mut link = transport.connect(
            ConnectOptions::new(self.config.scanner_id.clone())
                .with_will(log.clone(), offline.to_json()),
        )?;
        let birth = LifecycleMessage::Birth {
            scanner_id: self.config.scanner_id.clone(),
            sw_version: self.config.sw_version.clone(),
            local_ip: self.config.local_ip.clone(),
            ts: now,
        };
        if let Err(e) = link.publish(&log, &birth.to_json()) {
            link.close();
            return Err(e.into());
        }
        Ok(link)
    }

    /// Retries the connection once the backoff delay has elapsed.
    pub fn poll(&mut self, transport: &dyn Transport, now: Timestamp) -> AgentStatus {
        match self.status {
            AgentStatus::Idle => self.start(transport, now),
            AgentStatus::Backoff { retry_at, .. } if now >= retry_at => self.start(transport, now),
            s => s,
        }
    }

    pub fn ingest(&mut self, obs: &ProbeObservation) -> IngestOutcome {
        let outcome = self.classify(obs);
        match outcome {
            IngestOutcome::Accepted => {
                self.metrics.accepted += 1;
                self.merge(obs);
            }
            IngestOutcome::DroppedVendor => self.metrics.dropped_vendor += 1,
            IngestOutcome::DroppedRssi => self.metrics.dropped_rssi += 1,
            IngestOutcome::DroppedMalformed => self.metrics.dropped_malformed += 1,
        }
        outcome
    }

    fn classify(&self, obs: &ProbeObservation) -> IngestOutcome {
        if !obs.is_well_formed() || obs.scanner_id != self.config.scanner_id {
            return IngestOutcome::DroppedMalformed;
        }
        if !self.oui.is_mobile_vendor(&obs.mac) {
            return IngestOutcome::DroppedVendor;
        }
        if self
            .config
            .rssi_floor_dbm
            .is_some_and(|floor| obs.rssi_dbm < floor)
        {
            return IngestOutcome::DroppedRssi;
        }
        IngestOutcome::Accepted
    }

    fn merge(&mut self, obs: &ProbeObservation) {
        let entry = BatchEntry {
            mac: obs.mac.canonical(),
            randomized: obs.mac.is_randomized(),
            vendor: self.oui.vendor(&obs.mac).to_string(),
            first_seen: obs.captured_at,
            last_seen: obs.captured_at,
            packet_count: 1,
            rssi_min: obs.rssi_dbm,
            rssi_max: obs.rssi_dbm,
            ssids: obs.ssids.clone(),
            ie_fingerprint: obs.fingerprint().to_string(),
            ie_changed: false,
        };
        match self.current.get_mut(&entry.mac) {
            Some(existing) => {
                if existing.ie_fingerprint != entry.ie_fingerprint {
                    debug!(mac = %entry.mac, "information elements changed");
                }
                existing.absorb(entry);
            }
            None => {
                self.current.insert(entry.mac.clone(), entry);
            }
        }
    }

    /// Publishes everything accumulated since the last successful flush.
    ///
    /// On failure the batch is kept and merged into the next flush, so an
    /// entry is delivered once the broker accepts a later publish.
    pub fn flush(&mut self, now: Timestamp) -> Result<ObservationBatch, AgentError> {
        let mut entries = self.retained.take().unwrap_or_default();
        for (mac, entry) in self.current.drain(..) {
            match entries.get_mut(&mac) {
                Some(existing) => existing.absorb(entry),
                None => {
                    entries.insert(mac, entry);
                }
            }
        }
        let latest = entries.values().map(|e| e.last_seen).max().unwrap_or(now);
        let batch = ObservationBatch {
            scanner_id: self.config.scanner_id.clone(),
            batch_start: self.batch_start,
            batch_end: now.max(latest),
            entries: entries.values().cloned().collect(),
        };

        let result = match self.link.as_mut() {
            None => Err(AgentError::NotConnected),
            Some(link) => data_topic(&self.config.scanner_id)
                .map_err(AgentError::from)
                .and_then(|topic| {
                    link.publish(&topic, &batch.to_json())
                        .map_err(AgentError::from)
                }),
        };
        match result {
            Ok(()) => {
                self.metrics.batches_published += 1;
                self.batch_start = batch.batch_end;
                Ok(batch)
            }
            Err(e) => {
                self.metrics.publish_failures += 1;
                if let AgentError::Transport(TransportError::Closed(_)) = e {
                    // session taken over or torn down; reconnect on the next poll
                    self.link = None;
                    self.status = AgentStatus::Backoff {
                        attempt: 1,
                        retry_at: now.plus_secs(backoff_delay_s(1)),
                    };
                }
                warn!(scanner = %self.config.scanner_id, error = %e, retained = entries.len(), "batch publish failed");
                self.retained = Some(entries);
                Err(e)
            }
        }
    }

    /// Clean disconnect; subscribers get no offline message.
    pub fn shutdown(mut self) {
        if let Some(link) = self.link.take() {
            link.close();
        }
        self.status = AgentStatus::Stopped;
    }

    /// Simulates the process dying: the broker releases the last will.
    pub fn kill(mut self) {
        if let Some(link) = self.link.take() {
            link.drop_unclean();
        }
        self.status = AgentStatus::Stopped;
    }
}
