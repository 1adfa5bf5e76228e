//! Probe-request domain types: addresses, vendor registry, IE fingerprints and
//! the capture record every downstream stage consumes.

mod fingerprint;
mod mac;
mod oui;

pub use fingerprint::{fingerprint, IeFingerprint};
pub use mac::{classify_mac, MacAddress, MacKind, ParseMacError};
pub use oui::{is_mobile_vendor, vendor_lookup, OuiDatabase, OuiError, UNKNOWN_VENDOR};

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

/// Parses a three-octet registry prefix such as `64:09:80`.
pub fn parse_oui(s: &str) -> Option<[u8; 3]> {
    mac::parse_octets::<3>(s).ok()
}

/// One captured probe request as delivered by a scanner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeObservation {
    pub mac: MacAddress,
    pub rssi_dbm: i32,
    /// Previously joined networks, deduplicated, first-seen order.
    pub ssids: Vec<String>,
    #[serde(with = "hex_bytes")]
    pub ie_bytes: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub vendor_ie_bytes: Vec<u8>,
    pub captured_at: Timestamp,
    pub scanner_id: String,
}

impl ProbeObservation {
    pub fn fingerprint(&self) -> IeFingerprint {
        fingerprint(&self.ie_bytes, &self.vendor_ie_bytes)
    }

    /// Removes repeated SSIDs while keeping the first occurrence of each.
    pub fn dedup_ssids(ssids: impl IntoIterator<Item = String>) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in ssids {
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }

    pub fn is_well_formed(&self) -> bool {
        self.captured_at.millis() > 0 && !self.scanner_id.is_empty()
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
