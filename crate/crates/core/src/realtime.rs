//! Live fan-out of density samples and scanner status.
//!
//! Backed by a bounded broadcast ring: publishing never blocks, and a
//! subscriber that falls behind loses the oldest frames and is told how many.

use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::density::DensitySample;
use crate::time::Timestamp;

pub const DEFAULT_CAPACITY: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScannerState {
    Online,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RealtimeFrame {
    Density(DensitySample),
    Status {
        scanner_id: String,
        state: ScannerState,
        ts: Timestamp,
    },
}

impl RealtimeFrame {
    pub fn scanner_id(&self) -> &str {
        match self {
            RealtimeFrame::Density(s) => &s.scanner_id,
            RealtimeFrame::Status { scanner_id, .. } => scanner_id,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RealtimeHub {
    tx: broadcast::Sender<RealtimeFrame>,
}

impl Default for RealtimeHub {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl RealtimeHub {
    pub fn new(capacity: usize) -> Self {
        let (tx, _) = broadcast::channel(capacity.max(1));
        Self { tx }
    }

    /// Returns the number of subscribers the frame reached.
    pub fn publish(&self, frame: RealtimeFrame) -> usize {
        self.tx.send(frame).unwrap_or(0)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<RealtimeFrame> {
        self.tx.subscribe()
    }

    /// Blocking-friendly subscriber for non-async consumers.
    pub fn subscriber(&self) -> RealtimeSubscriber {
        RealtimeSubscriber {
            rx: self.tx.subscribe(),
            lagged: 0,
        }
    }

    pub fn subscriber_count(&self) -> usize {
        self.tx.receiver_count()
    }
}

#[derive(Debug)]
pub struct RealtimeSubscriber {
    rx: broadcast::Receiver<RealtimeFrame>,
    lagged: u64,
}

impl RealtimeSubscriber {
    /// Next queued frame, skipping over any that were overwritten.
    pub fn try_next(&mut self) -> Option<RealtimeFrame> {
        loop {
            match self.rx.try_recv() {
                Ok(f) => return Some(f),
                Err(broadcast::error::TryRecvError::Lagged(n)) => self.lagged += n,
                Err(_) => return None,
            }
        }
    }

    pub fn drain(&mut self) -> Vec<RealtimeFrame> {
        std::iter::from_fn(|| self.try_next()).collect()
    }

    /// Frames this subscriber lost to overflow.
    pub fn lagged(&self) -> u64 {
        self.lagged
    }
}
