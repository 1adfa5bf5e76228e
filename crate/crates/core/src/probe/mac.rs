use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// 48-bit IEEE 802 MAC address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddress([u8; 6]);

/// Whether an address was assigned by the manufacturer or generated by the host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MacKind {
    Randomized,
    BurnedIn,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid MAC address {input:?}: {reason}")]
pub struct ParseMacError {
    input: String,
    reason: &'static str,
}

const LOCALLY_ADMINISTERED: u8 = 0b10;
const GROUP: u8 = 0b01;

impl MacAddress {
    pub const fn new(octets: [u8; 6]) -> Self {
        Self(octets)
    }

    pub const fn octets(&self) -> [u8; 6] {
        self.0
    }

    /// First three octets, the organizationally unique identifier.
    pub fn oui(&self) -> [u8; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    /// Locally administered unicast: bit 1 of the first octet set, bit 0 clear.
    pub const fn is_randomized(&self) -> bool {
        self.0[0] & LOCALLY_ADMINISTERED != 0 && self.0[0] & GROUP == 0
    }

    pub const fn kind(&self) -> MacKind {
        if self.is_randomized() {
            MacKind::Randomized
        } else {
            MacKind::BurnedIn
        }
    }

    /// Forces the locally-administered unicast bits onto arbitrary octets.
    pub fn randomized_from(mut octets: [u8; 6]) -> Self {
        octets[0] = (octets[0] & !GROUP) | LOCALLY_ADMINISTERED;
        Self(octets)
    }

    /// Canonical 17-character uppercase colon form.
    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

pub fn classify_mac(mac: MacAddress) -> MacKind {
    mac.kind()
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02X}:{:02X}:{:02X}:{:02X}:{:02X}:{:02X}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacAddress({self})")
    }
}

/// Parses `n` colon- or dash-separated hex octets.
pub(crate) fn parse_octets<const N: usize>(s: &str) -> Result<[u8; N], &'static str> {
    let mut out = [0u8; N];
    let mut parts = s.trim().split([':', '-']);
    for slot in out.iter_mut() {
        let part = parts.next().ok_or("too few octets")?;
        if part.len() != 2 {
            return Err("each octet must be two hex digits");
        }
        *slot = u8::from_str_radix(part, 16).map_err(|_| "non-hex digit")?;
    }
    if parts.next().is_some() {
        return Err("too many octets");
    }
    Ok(out)
}

impl FromStr for MacAddress {
    type Err = ParseMacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_octets::<6>(s)
            .map(Self)
            .map_err(|reason| ParseMacError {
                input: s.to_string(),
                reason,
            })
    }
}

impl Serialize for MacAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
