use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::profile::{GapModel, Randomization, ScreenState, BURST_WINDOW_MS};
use super::scenario::{random_session_ie, Scenario, SimulatedDevice, Stay};
use crate::probe::{fingerprint, IeFingerprint, MacAddress, ProbeObservation};
use crate::time::Timestamp;

const RSSI_BASE_DBM: i32 = -60;
const RSSI_NOISE_DBM: i32 = 5;

/// One probing burst as emitted by a device, whether or not a scanner heard it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeEvent {
    pub device_id: String,
    pub at: Timestamp,
    pub mac: MacAddress,
    pub fingerprint: IeFingerprint,
    pub screen: ScreenState,
    pub packets: u32,
    /// Packets that landed inside a covered zone.
    pub observed_packets: u32,
    pub scanner_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub device_id: String,
    pub from_zone: String,
    pub to_zone: String,
    pub at: Timestamp,
}

/// Everything the simulator knows and the estimators must infer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub start: Timestamp,
    pub end: Timestamp,
    pub zone_scanners: BTreeMap<String, String>,
    pub itineraries: BTreeMap<String, Vec<Stay>>,
    pub transitions: Vec<Transition>,
    pub events: Vec<ProbeEvent>,
}

impl GroundTruth {
    pub fn occupancy(&self, zone: &str, t: Timestamp) -> BTreeSet<String> {
        self.itineraries
            .iter()
            .filter(|(_, stays)| stays.iter().any(|s| s.zone == zone && s.contains(t)))
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn occupancy_count(&self, zone: &str, t: Timestamp) -> usize {
        self.itineraries
            .values()
            .flatten()
            .filter(|s| s.zone == zone && s.contains(t))
            .count()
    }

    pub fn scanner_occupancy(&self, scanner_id: &str, t: Timestamp) -> usize {
        self.zone_scanners
            .iter()
            .filter(|(_, s)| s.as_str() == scanner_id)
            .map(|(zone, _)| self.occupancy_count(zone, t))
            .sum()
    }

    /// Devices' itineraries projected onto covered zones: uncovered stops are
    /// skipped and repeated scanners collapsed, leaving scanner-to-scanner moves.
    pub fn scanner_flow_matrix(&self) -> BTreeMap<(String, String), u64> {
        let mut out = BTreeMap::new();
        for stays in self.itineraries.values() {
            let mut path: Vec<&str> = Vec::new();
            for s in stays {
                if let Some(scanner) = self.zone_scanners.get(&s.zone) {
                    if path.last() != Some(&scanner.as_str()) {
                        path.push(scanner);
                    }
                }
            }
            for pair in path.windows(2) {
                *out.entry((pair[0].to_string(), pair[1].to_string()))
                    .or_insert(0) += 1;
            }
        }
        out
    }

    /// Every address a device used, for attributing estimator output back to devices.
    pub fn mac_owners(&self) -> BTreeMap<MacAddress, BTreeSet<String>> {
        let mut out: BTreeMap<MacAddress, BTreeSet<String>> = BTreeMap::new();
        for e in &self.events {
            out.entry(e.mac).or_default().insert(e.device_id.clone());
        }
        out
    }

    pub fn events_of<'a>(
        &'a self,
        device_id: &'a str,
    ) -> impl Iterator<Item = &'a ProbeEvent> + 'a {
        self.events.iter().filter(move |e| e.device_id == device_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// Captures ordered by `captured_at` (ties keep device order).
    pub observations: Vec<ProbeObservation>,
    pub ground_truth: GroundTruth,
}

pub fn run_scenario(scenario: &Scenario) -> SimOutput {
    let zone_scanners = scenario.zone_scanners();
    let end = scenario.end();
    let mut observations = Vec::new();
    let mut events = Vec::new();
    let mut transitions = Vec::new();
    let mut itineraries = BTreeMap::new();

    for (idx, device) in scenario.devices.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(idx as u64);
        simulate_device(
            device,
            scenario.start,
            end,
            &zone_scanners,
            &mut rng,
            &mut observations,
            &mut events,
        );
        for pair in device.itinerary.windows(2) {
            transitions.push(Transition {
                device_id: device.device_id.clone(),
                from_zone: pair[0].zone.clone(),
                to_zone: pair[1].zone.clone(),
                at: pair[1].enter,
            });
        }
        itineraries.insert(device.device_id.clone(), device.itinerary.clone());
    }

    observations.sort_by_key(|o| o.captured_at);
    events.sort_by_key(|e| e.at);
    transitions.sort_by_key(|t| t.at);

    SimOutput {
        observations,
        ground_truth: GroundTruth {
            start: scenario.start,
            end,
            zone_scanners,
            itineraries,
            transitions,
            events,
        },
    }
}

fn simulate_device(
    device: &SimulatedDevice,
    start: Timestamp,
    end: Timestamp,
    zone_scanners: &BTreeMap<String, String>,
    rng: &mut ChaCha8Rng,
    observations: &mut Vec<ProbeObservation>,
    events: &mut Vec<ProbeEvent>,
) {
    let models: BTreeMap<ScreenState, GapModel> = device
        .profile
        .screen_states
        .iter()
        .map(|(s, b)| (*s, GapModel::fit(b)))
        .collect();
    let gap_ms = |state: ScreenState, rng: &mut ChaCha8Rng| -> i64 {
        let model = models
            .get(&state)
            .or_else(|| models.values().next())
            .expect("validated profile has a state");
        (model.sample(rng) * 1000.0).round() as i64
    };

    // first burst lands at a random phase of a typical gap
    let phase: f64 = rng.random();
    let first = gap_ms(device.screen_at(start), rng);
    let mut t = start.plus_millis((phase * first as f64) as i64);

    let mut session_ie = device.session_ie.clone();
    let mut cycles = device.power_cycles.iter().peekable();

    while t < end {
        while cycles.next_if(|c| **c <= t).is_some() {
            session_ie = random_session_ie(rng);
        }
        let screen = device.screen_at(t);
        let behavior = device
            .profile
            .state(screen)
            .or_else(|| device.profile.screen_states.values().next())
            .expect("validated profile has a state");
        let mac = match device.profile.randomization {
            Randomization::None => device.burned_in_mac,
            Randomization::PerEvent => MacAddress::randomized_from(rng.random()),
        };

        let mut offsets: Vec<i64> = std::iter::once(0)
            .chain((1..behavior.packets_per_event).map(|_| rng.random_range(0..BURST_WINDOW_MS)))
            .collect();
        offsets.sort_unstable();

        let mut observed = 0;
        let mut heard_by = None;
        for off in offsets {
            let at = t.plus_millis(off);
            let rssi = RSSI_BASE_DBM + rng.random_range(-RSSI_NOISE_DBM..=RSSI_NOISE_DBM);
            if at >= end {
                continue;
            }
            let Some(scanner) = device.zone_at(at).and_then(|z| zone_scanners.get(z)) else {
                continue;
            };
            observed += 1;
            heard_by.get_or_insert_with(|| scanner.clone());
            observations.push(ProbeObservation {
                mac,
                rssi_dbm: rssi,
                ssids: device.ssids.clone(),
                ie_bytes: session_ie.clone(),
                vendor_ie_bytes: device.vendor_ie.clone(),
                captured_at: at,
                scanner_id: scanner.clone(),
            });
        }
        events.push(ProbeEvent {
            device_id: device.device_id.clone(),
            at: t,
            mac,
            fingerprint: fingerprint(&session_ie, &device.vendor_ie),
            screen,
            packets: behavior.packets_per_event,
            observed_packets: observed,
            scanner_id: heard_by,
        });

        t = t.plus_millis(gap_ms(screen, rng));
    }
}
