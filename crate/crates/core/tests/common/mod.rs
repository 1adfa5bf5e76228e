//! Scenario builders and oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use probesense_core::density::DensitySample;
use probesense_core::sim::{DeviceSpec, GroundTruth, Scenario, ScenarioFile, ScreenState};
use probesense_core::Timestamp;

pub const ZONES: [&str; 3] = ["a", "b", "c"];
pub const SCANNERS: [&str; 3] = ["s-a", "s-b", "s-c"];
pub const ROTATION_DURATION_S: f64 = 7_200.0;

/// Twenty devices rotating through three covered zones in two-hour runs.
///
/// Moves cluster around 30, 60 and 90 minutes (±2 min jitter); every fifth
/// device arrives from an uncovered hallway at 10 min and every seventh
/// leaves for it at 100 min. Every stop lasts well over four minutes.
pub fn rotation_scenario(seed: u64, profile: &str, screen: ScreenState) -> Scenario {
    let mut file = ScenarioFile::new(seed, ROTATION_DURATION_S);
    for (s, z) in SCANNERS.iter().zip(ZONES) {
        file = file.scanner(*s, z);
    }
    for i in 0..20usize {
        let jitter = |k: usize| ((i * k) % 241) as f64 - 120.0;
        let order: Vec<&str> = (0..3).map(|j| ZONES[(i + j) % 3]).collect();
        let b1 = 1_800.0 + jitter(53);
        let b2 = 3_600.0 + jitter(71);
        let b3 = 5_400.0 + jitter(29);
        let arrive = if i % 5 == 0 { 600.0 } else { 0.0 };
        let leave = if i % 7 == 3 {
            6_000.0
        } else {
            ROTATION_DURATION_S
        };
        let mut d = DeviceSpec::new(format!("d{i:02}"), profile).screen(0.0, screen);
        if arrive > 0.0 {
            d = d.stay("hall", 0.0, arrive);
        }
        d = d
            .stay(order[0], arrive, b1)
            .stay(order[1], b1, b2)
            .stay(order[2], b2, b3)
            .stay(order[0], b3, leave);
        if leave < ROTATION_DURATION_S {
            d = d.stay("hall", leave, ROTATION_DURATION_S);
        }
        file = file.device(d);
    }
    Scenario::resolve(&file).expect("rotation scenario is valid")
}

/// Samples taken at least `settle_s` after the last change of occupancy in
/// the scanner's zone (and after the run start).
pub fn steady_samples<'a>(
    gt: &GroundTruth,
    samples: &'a [DensitySample],
    settle_s: i64,
) -> Vec<&'a DensitySample> {
    let scanner_zone: BTreeMap<&str, &str> = gt
        .zone_scanners
        .iter()
        .map(|(z, s)| (s.as_str(), z.as_str()))
        .collect();
    let settle = settle_s * 1000;
    samples
        .iter()
        .filter(|s| {
            let zone = scanner_zone[s.scanner_id.as_str()];
            s.ts.millis_since(gt.start) >= settle
                && !gt.itineraries.values().flatten().any(|stay| {
                    stay.zone == zone
                        && [stay.enter, stay.exit]
                            .iter()
                            .any(|b| *b > gt.start && *b <= s.ts && s.ts.millis_since(*b) < settle)
                })
        })
        .collect()
}

pub fn at(gt: &GroundTruth, s: i64) -> Timestamp {
    gt.start.plus_secs(s)
}
