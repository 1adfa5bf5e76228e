//! Scenario documents: scanners, devices, itineraries and power cycles.
//!
//! A scenario file is TOML. Times are seconds relative to `start_ms`.
//!
//! ```toml
//! seed = 7
//! duration_s = 3600
//! start_ms = 1700000000000      # optional
//!
//! [[scanners]]
//! id = "scanner-a"
//! zone = "lobby"
//!
//! [[devices]]
//! id = "alice"
//! profile = "XiaomiMiNote3"     # a built-in model or a name from [[profiles]]
//! screen = [{ at_s = 0, state = "off" }, { at_s = 900, state = "on" }]
//! power_cycles_s = [1800]
//! ssids = ["home-net"]
//! itinerary = [
//!   { zone = "lobby", enter_s = 0, exit_s = 600 },
//!   { zone = "lab", enter_s = 600, exit_s = 3600 },
//! ]
//! ```
//!
//! Optional per-device keys: `mac` (burned-in address), `session_ie` (hex IE
//! bytes of the first WiFi session). Unset values are derived from the seed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::profile::{profile_from_table3, DeviceProfile, ScreenState, BUILTIN_MODELS};
use super::SimError;
use crate::probe::{parse_oui, MacAddress};
use crate::time::Timestamp;

pub const DEFAULT_START_MS: i64 = 1_700_000_000_000;

const SESSION_IE_LEN: usize = 24;

fn default_start() -> i64 {
    DEFAULT_START_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScannerSpec {
    pub id: String,
    pub zone: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenChange {
    pub at_s: f64,
    pub state: ScreenState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItineraryStop {
    pub zone: String,
    pub enter_s: f64,
    pub exit_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: String,
    pub profile: String,
    #[serde(default)]
    pub screen: Vec<ScreenChange>,
    #[serde(default)]
    pub itinerary: Vec<ItineraryStop>,
    #[serde(default)]
    pub power_cycles_s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac: Option<MacAddress>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_ie: Option<String>,
    #[serde(default)]
    pub ssids: Vec<String>,
}

impl DeviceSpec {
    pub fn new(id: impl Into<String>, profile: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            profile: profile.into(),
            screen: Vec::new(),
            itinerary: Vec::new(),
            power_cycles_s: Vec::new(),
            mac: None,
            session_ie: None,
            ssids: Vec::new(),
        }
    }

    pub fn stay(mut self, zone: impl Into<String>, enter_s: f64, exit_s: f64) -> Self {
        self.itinerary.push(ItineraryStop {
            zone: zone.into(),
            enter_s,
            exit_s,
        });
        self
    }

    pub fn screen(mut self, at_s: f64, state: ScreenState) -> Self {
        self.screen.push(ScreenChange { at_s, state });
        self
    }

    pub fn power_cycle(mut self, at_s: f64) -> Self {
        self.power_cycles_s.push(at_s);
        self
    }

    pub fn session_ie(mut self, hex: impl Into<String>) -> Self {
        self.session_ie = Some(hex.into());
        self
    }
}

/// Serialized form of a scenario, as written by hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default = "default_start")]
    pub start_ms: i64,
    pub scanners: Vec<ScannerSpec>,
    #[serde(default)]
    pub profiles: Vec<DeviceProfile>,
    #[serde(default)]
    pub devices: Vec<DeviceSpec>,
}

impl ScenarioFile {
    pub fn new(seed: u64, duration_s: f64) -> Self {
        Self {
            seed,
            duration_s,
            start_ms: DEFAULT_START_MS,
            scanners: Vec::new(),
            profiles: Vec::new(),
            devices: Vec::new(),
        }
    }

    pub fn scanner(mut self, id: impl Into<String>, zone: impl Into<String>) -> Self {
        self.scanners.push(ScannerSpec {
            id: id.into(),
            zone: zone.into(),
        });
        self
    }

    pub fn device(mut self, device: DeviceSpec) -> Self {
        self.devices.push(device);
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, SimError> {
        toml::to_string_pretty(self).map_err(|e| SimError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

/// Half-open presence interval `[enter, exit)` in one zone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stay {
    pub zone: String,
    pub enter: Timestamp,
    pub exit: Timestamp,
}

impl Stay {
    pub fn contains(&self, t: Timestamp) -> bool {
        self.enter <= t && t < self.exit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDevice {
    /// Ground-truth identity; never reaches the estimators.
    pub device_id: String,
    pub profile: DeviceProfile,
    pub burned_in_mac: MacAddress,
    /// IE bytes of the first WiFi session; replaced at every power cycle.
    pub session_ie: Vec<u8>,
    pub vendor_ie: Vec<u8>,
    pub ssids: Vec<String>,
    pub screen_schedule: Vec<(Timestamp, ScreenState)>,
    pub itinerary: Vec<Stay>,
    pub power_cycles: Vec<Timestamp>,
}

impl SimulatedDevice {
    pub fn screen_at(&self, t: Timestamp) -> ScreenState {
        self.screen_schedule
            .iter()
            .take_while(|(at, _)| *at <= t)
            .last()
            .map(|(_, s)| *s)
            .unwrap_or(ScreenState::DisplayOff)
    }

    pub fn zone_at(&self, t: Timestamp) -> Option<&str> {
        self.itinerary
            .iter()
            .find(|s| s.contains(t))
            .map(|s| s.zone.as_str())
    }
}

/// A validated, fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub start: Timestamp,
    pub duration_ms: i64,
    pub scanners: Vec<ScannerSpec>,
    pub devices: Vec<SimulatedDevice>,
}

fn secs_to_ms(s: f64) -> i64 {
    (s * 1000.0).round() as i64
}

/// Vendor-specific element shared by every unit of one model.
fn model_vendor_ie(oui: [u8; 3]) -> Vec<u8> {
    vec![0xDD, 0x04, oui[0], oui[1], oui[2], 0x01]
}

pub(crate) fn random_session_ie<R: Rng + ?Sized>(rng: &mut R) -> Vec<u8> {
    // element id 0x01 (supported rates) framing over opaque content
    let mut ie = vec![0x01, (SESSION_IE_LEN - 2) as u8];
    ie.extend((0..SESSION_IE_LEN - 2).map(|_| rng.random::<u8>()));
    ie
}

impl Scenario {
    pub fn end(&self) -> Timestamp {
        self.start.plus_millis(self.duration_ms)
    }

    /// Zone id to scanner id.
    pub fn zone_scanners(&self) -> BTreeMap<String, String> {
        self.scanners
            .iter()
            .map(|s| (s.zone.clone(), s.id.clone()))
            .collect()
    }

    pub fn scanner_ids(&self) -> Vec<String> {
        self.scanners.iter().map(|s| s.id.clone()).collect()
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::resolve(&ScenarioFile::load(path)?)
    }

    pub fn resolve(file: &ScenarioFile) -> Result<Self, SimError> {
        if !(file.duration_s >= 0.0 && file.duration_s.is_finite()) {
            return Err(SimError::invalid(
                "duration_s",
                "must be a non-negative number",
            ));
        }
        if file.start_ms <= 0 {
            return Err(SimError::invalid(
                "start_ms",
                "must be a positive epoch time",
            ));
        }
        let start = Timestamp::from_millis(file.start_ms);
        let duration_ms = secs_to_ms(file.duration_s);

        let mut scanner_ids = BTreeSet::new();
        let mut zones = BTreeSet::new();
        for (i, s) in file.scanners.iter().enumerate() {
            if s.id.trim().is_empty() || s.id.contains('/') || s.id.contains(['+', '#']) {
                return Err(SimError::invalid(
                    format!("scanners[{i}].id"),
                    "must be non-empty and free of '/', '+', '#'",
                ));
            }
            if !scanner_ids.insert(s.id.as_str()) {
                return Err(SimError::invalid(
                    format!("scanners[{i}].id"),
                    "duplicate scanner id",
                ));
            }
            if !zones.insert(s.zone.as_str()) {
                return Err(SimError::invalid(
                    format!("scanners[{i}].zone"),
                    "each zone is covered by exactly one scanner",
                ));
            }
        }

        let mut custom = BTreeMap::new();
        for p in &file.profiles {
            p.validate()?;
            if custom.insert(p.name.clone(), p.clone()).is_some() {
                return Err(SimError::invalid(
                    format!("profiles[{}]", p.name),
                    "duplicate profile name",
                ));
            }
        }

        let mut device_ids = BTreeSet::new();
        let mut devices = Vec::with_capacity(file.devices.len());
        for (i, d) in file.devices.iter().enumerate() {
            let field = |name: &str| format!("devices[{i}].{name}");
            if d.id.trim().is_empty() || !device_ids.insert(d.id.as_str()) {
                return Err(SimError::invalid(
                    field("id"),
                    "must be non-empty and unique",
                ));
            }
            let profile = match custom.get(&d.profile) {
                Some(p) => p.clone(),
                None if BUILTIN_MODELS.contains(&d.profile.as_str()) => {
                    profile_from_table3(&d.profile)?
                }
                None => {
                    return Err(SimError::invalid(
                        field("profile"),
                        format!("unknown profile {:?}", d.profile),
                    ))
                }
            };

            let mut screen_schedule = Vec::with_capacity(d.screen.len());
            let mut prev = f64::NEG_INFINITY;
            for (j, change) in d.screen.iter().enumerate() {
                if change.at_s < 0.0 || change.at_s < prev {
                    return Err(SimError::invalid(
                        field(&format!("screen[{j}].at_s")),
                        "screen changes must be non-negative and time-ordered",
                    ));
                }
                prev = change.at_s;
                screen_schedule.push((start.plus_millis(secs_to_ms(change.at_s)), change.state));
            }
            let mut used_states: BTreeSet<ScreenState> =
                screen_schedule.iter().map(|(_, s)| *s).collect();
            if screen_schedule.first().is_none_or(|(t, _)| *t > start) {
                used_states.insert(ScreenState::DisplayOff);
            }
            for state in used_states {
                if profile.state(state).is_none() {
                    return Err(SimError::invalid(
                        field("screen"),
                        format!(
                            "profile {:?} has no behaviour for display {state}",
                            profile.name
                        ),
                    ));
                }
            }

            let mut itinerary = Vec::with_capacity(d.itinerary.len());
            let mut last_exit = f64::NEG_INFINITY;
            for (j, stop) in d.itinerary.iter().enumerate() {
                let f = field(&format!("itinerary[{j}]"));
                if !(stop.enter_s >= 0.0 && stop.enter_s < stop.exit_s) {
                    return Err(SimError::invalid(
                        f,
                        "enter_s must be non-negative and before exit_s",
                    ));
                }
                if stop.enter_s < last_exit {
                    return Err(SimError::invalid(
                        f,
                        "overlaps or precedes the previous stop",
                    ));
                }
                if stop.zone.trim().is_empty() {
                    return Err(SimError::invalid(format!("{f}.zone"), "must not be empty"));
                }
                last_exit = stop.exit_s;
                itinerary.push(Stay {
                    zone: stop.zone.clone(),
                    enter: start.plus_millis(secs_to_ms(stop.enter_s)),
                    exit: start.plus_millis(secs_to_ms(stop.exit_s)),
                });
            }

            let mut power_cycles = Vec::with_capacity(d.power_cycles_s.len());
            let mut prev = f64::NEG_INFINITY;
            for (j, &at) in d.power_cycles_s.iter().enumerate() {
                if at < 0.0 || at < prev {
                    return Err(SimError::invalid(
                        field(&format!("power_cycles_s[{j}]")),
                        "power cycles must be non-negative and time-ordered",
                    ));
                }
                prev = at;
                power_cycles.push(start.plus_millis(secs_to_ms(at)));
            }

            let oui = parse_oui(&profile.oui).expect("validated profile");
            // identity material comes from its own stream so it never shifts probe timing
            let mut rng = ChaCha8Rng::seed_from_u64(file.seed);
            rng.set_stream((1 << 32) | i as u64);
            let burned_in_mac = match d.mac {
                Some(mac) if mac.is_randomized() => {
                    return Err(SimError::invalid(
                        field("mac"),
                        "burned-in address must not be locally administered",
                    ))
                }
                Some(mac) => mac,
                None => {
                    let tail: [u8; 3] = rng.random();
                    MacAddress::new([oui[0], oui[1], oui[2], tail[0], tail[1], tail[2]])
                }
            };
            let session_ie = match &d.session_ie {
                Some(h) => hex::decode(h)
                    .map_err(|e| SimError::invalid(field("session_ie"), e.to_string()))?,
                None => random_session_ie(&mut rng),
            };

            devices.push(SimulatedDevice {
                device_id: d.id.clone(),
                vendor_ie: model_vendor_ie(oui),
                profile,
                burned_in_mac,
                session_ie,
                ssids: crate::probe::ProbeObservation::dedup_ssids(d.ssids.iter().cloned()),
                screen_schedule,
                itinerary,
                power_cycles,
            });
        }

        Ok(Self {
            seed: file.seed,
            start,
            duration_ms,
            scanners: file.scanners.clone(),
            devices,
        })
    }
}
