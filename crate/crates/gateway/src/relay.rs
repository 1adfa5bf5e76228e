//! Per-floor view of the realtime hub.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use probesense_core::realtime::{RealtimeFrame, ScannerState};
use probesense_core::Timestamp;

/// Frame sent to a floor subscriber.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FloorFrame {
    Density {
        floor_id: u64,
        scanner_id: String,
        ts: Timestamp,
        count: u64,
        /// Sum of the latest count of every scanner on the floor.
        floor_total: u64,
        max_density: u32,
        breach: bool,
    },
    Status {
        floor_id: u64,
        scanner_id: String,
        state: ScannerState,
        ts: Timestamp,
    },
}

#[derive(Debug, Clone)]
pub struct FloorRelay {
    floor_id: u64,
    latest: BTreeMap<String, u64>,
}

impl FloorRelay {
    pub fn new(floor_id: u64) -> Self {
        Self {
            floor_id,
            latest: BTreeMap::new(),
        }
    }

    /// Translates a hub frame given the floor's current scanners and limit;
    /// frames of other scanners yield nothing.
    pub fn relay(
        &mut self,
        frame: RealtimeFrame,
        scanners: &BTreeSet<String>,
        max_density: u32,
    ) -> Option<FloorFrame> {
        self.latest.retain(|s, _| scanners.contains(s));
        if !scanners.contains(frame.scanner_id()) {
            return None;
        }
        Some(match frame {
            RealtimeFrame::Density(s) => {
                self.latest.insert(s.scanner_id.clone(), s.count);
                let floor_total = self.latest.values().sum();
                FloorFrame::Density {
                    floor_id: self.floor_id,
                    scanner_id: s.scanner_id,
                    ts: s.ts,
                    count: s.count,
                    floor_total,
                    max_density,
                    breach: floor_total > u64::from(max_density),
                }
            }
            RealtimeFrame::Status {
                scanner_id,
                state,
                ts,
            } => FloorFrame::Status {
                floor_id: self.floor_id,
                scanner_id,
                state,
                ts,
            },
        })
    }
}
