//! Phone probing behaviour: per-screen-state event rates, burst sizes and the
//! inter-event gap distribution fitted to them.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Events closer than this cannot be told apart from packets of one burst.
pub const BURST_WINDOW_MS: i64 = 2_000;

/// Smallest gap the generator emits; keeps consecutive bursts disjoint.
pub const MIN_EVENT_GAP_S: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScreenState {
    #[serde(rename = "off", alias = "DisplayOff")]
    DisplayOff,
    #[serde(rename = "on", alias = "DisplayOn")]
    DisplayOn,
}

impl fmt::Display for ScreenState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScreenState::DisplayOff => "off",
            ScreenState::DisplayOn => "on",
        })
    }
}

impl std::str::FromStr for ScreenState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "off" | "displayoff" => Ok(ScreenState::DisplayOff),
            "on" | "displayon" => Ok(ScreenState::DisplayOn),
            other => Err(format!("unknown screen state {other:?} (expected on|off)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Randomization {
    None,
    PerEvent,
}

/// Observed probing statistics for one screen state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBehavior {
    pub events_per_hour: f64,
    pub packets_per_event: u32,
    pub interval_min_s: f64,
    pub interval_max_s: f64,
    #[serde(default)]
    pub interval_mode_s: Option<f64>,
}

impl StateBehavior {
    fn validate(&self, field: &str) -> Result<(), SimError> {
        let bad = |reason: &str| SimError::invalid(field, reason);
        if !(self.events_per_hour > 0.0 && self.events_per_hour.is_finite()) {
            return Err(bad("events_per_hour must be positive"));
        }
        if self.packets_per_event == 0 {
            return Err(bad("packets_per_event must be at least 1"));
        }
        if !(self.interval_min_s > 0.0 && self.interval_min_s <= self.interval_max_s) {
            return Err(bad(
                "interval_min_s must be positive and not above interval_max_s",
            ));
        }
        if let Some(mode) = self.interval_mode_s {
            if !(self.interval_min_s..=self.interval_max_s).contains(&mode) {
                return Err(bad(
                    "interval_mode_s must lie within [interval_min_s, interval_max_s]",
                ));
            }
        }
        Ok(())
    }

    pub fn mean_gap_s(&self) -> f64 {
        3600.0 / self.events_per_hour
    }
}

/// Generative model of one phone model's probing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub randomization: Randomization,
    /// Registry prefix used to mint the burned-in address.
    #[serde(default = "default_oui")]
    pub oui: String,
    pub screen_states: BTreeMap<ScreenState, StateBehavior>,
}

fn default_oui() -> String {
    "00:12:FB".into()
}

impl DeviceProfile {
    pub fn randomizes(&self) -> bool {
        self.randomization == Randomization::PerEvent
    }

    pub fn state(&self, state: ScreenState) -> Option<&StateBehavior> {
        self.screen_states.get(&state)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.name.trim().is_empty() {
            return Err(SimError::invalid("profile.name", "must not be empty"));
        }
        crate::probe::parse_oui(&self.oui).ok_or_else(|| {
            SimError::invalid(format!("profiles[{}].oui", self.name), "expected XX:YY:ZZ")
        })?;
        if self.screen_states.is_empty() {
            return Err(SimError::invalid(
                format!("profiles[{}].screen_states", self.name),
                "at least one screen state is required",
            ));
        }
        for (state, behavior) in &self.screen_states {
            behavior.validate(&format!("profiles[{}].screen_states.{state}", self.name))?;
        }
        Ok(())
    }
}

/// Names accepted by [`profile_from_table3`].
pub const BUILTIN_MODELS: [&str; 4] = ["iPhone6S", "SamsungS7", "SamsungJ5", "XiaomiMiNote3"];

fn behavior(eph: f64, packets: u32, min: f64, max: f64, mode: Option<f64>) -> StateBehavior {
    StateBehavior {
        events_per_hour: eph,
        packets_per_event: packets,
        interval_min_s: min,
        interval_max_s: max,
        interval_mode_s: mode,
    }
}

/// Built-in profiles measured on four handsets in an RF-isolated enclosure.
pub fn profile_from_table3(model_name: &str) -> Result<DeviceProfile, SimError> {
    use ScreenState::*;
    let (randomization, oui, off, on) = match model_name {
        "iPhone6S" => (
            Randomization::PerEvent,
            "F0:18:98",
            behavior(10.0, 1, 33.0, 675.0, Some(540.0)),
            behavior(54.0, 2, 3.0, 180.0, Some(45.0)),
        ),
        "SamsungS7" => (
            Randomization::PerEvent,
            "5C:0A:5B",
            behavior(13.0, 6, 129.0, 466.0, Some(130.0)),
            behavior(18.0, 9, 6.0, 365.0, Some(180.0)),
        ),
        "SamsungJ5" => (
            Randomization::None,
            "8C:77:12",
            behavior(4.0, 10, 552.0, 922.0, None),
            behavior(19.0, 10, 128.0, 516.0, Some(128.0)),
        ),
        "XiaomiMiNote3" => (
            Randomization::None,
            "64:09:80",
            behavior(89.0, 5, 1.0, 569.0, Some(60.0)),
            behavior(24.0, 5, 60.0, 542.0, Some(60.0)),
        ),
        other => {
            return Err(SimError::UnknownProfile {
                name: other.to_string(),
                available: BUILTIN_MODELS.join(", "),
            })
        }
    };
    Ok(DeviceProfile {
        name: model_name.to_string(),
        randomization,
        oui: oui.to_string(),
        screen_states: BTreeMap::from([(DisplayOff, off), (DisplayOn, on)]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Component {
    Triangular { lo: f64, mode: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Component {
    fn mean(&self) -> f64 {
        match *self {
            Component::Triangular { lo, mode, hi } => (lo + mode + hi) / 3.0,
            Component::Uniform { lo, hi } => (lo + hi) / 2.0,
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        match *self {
            Component::Uniform { lo, hi } => lo + u * (hi - lo),
            Component::Triangular { lo, mode, hi } => {
                let width = hi - lo;
                if width <= 0.0 {
                    return lo;
                }
                let split = (mode - lo) / width;
                if u < split {
                    lo + (u * width * (mode - lo)).sqrt()
                } else {
                    hi - ((1.0 - u) * width * (hi - mode)).sqrt()
                }
            }
        }
    }
}

/// Inter-event gap distribution for one screen state.
///
/// A triangular body on `[min, max]` peaked at the reported mode cannot match
/// the reported event rate in general, so the body is blended with either a
/// narrow peak around the mode or a flat shoulder on one side of it. The blend
/// weight is solved in closed form so the mean gap equals `3600 / events_per_hour`
/// whenever that mean is reachable on the support; otherwise the nearest
/// reachable mean is used. Every component peaks at (or is flat up to) the mode,
/// so the mixture keeps its mode there.
#[derive(Debug, Clone, PartialEq)]
pub struct GapModel {
    parts: Vec<(f64, Component)>,
    mode_s: f64,
}

impl GapModel {
    pub fn fit(b: &StateBehavior) -> Self {
        let lo = b.interval_min_s.max(MIN_EVENT_GAP_S);
        let hi = b.interval_max_s.max(lo);
        let target = b.mean_gap_s().clamp(lo, hi);
        // Without a reported mode, use the triangular whose mean is closest to the target.
        let mode = b
            .interval_mode_s
            .unwrap_or(3.0 * target - lo - hi)
            .clamp(lo, hi);

        let body = Component::Triangular { lo, mode, hi };
        let half_width = (0.1 * mode).max(2.0);
        let peak = Component::Triangular {
            lo: (mode - half_width).max(lo),
            mode,
            hi: (mode + half_width).min(hi),
        };
        let (body_mean, peak_mean) = (body.mean(), peak.mean());

        let blend = |a: Component, b: Component| -> Vec<(f64, Component)> {
            let (ma, mb) = (a.mean(), b.mean());
            if (ma - mb).abs() < f64::EPSILON {
                return vec![(1.0, a)];
            }
            let w = ((target - mb) / (ma - mb)).clamp(0.0, 1.0);
            vec![(w, a), (1.0 - w, b)]
        };
        let shoulder = |toward_high: bool| -> Option<Component> {
            let c = if toward_high {
                Component::Uniform { lo: mode, hi }
            } else {
                Component::Uniform { lo, hi: mode }
            };
            match c {
                Component::Uniform { lo, hi } if hi - lo > f64::EPSILON => Some(c),
                _ => None,
            }
        };

        let between = |x: f64, a: f64, b: f64| (a.min(b)..=a.max(b)).contains(&x);
        let parts = if between(target, body_mean, peak_mean) {
            blend(peak, body)
        } else if (target - body_mean) * (body_mean - peak_mean) > 0.0 {
            // past the body, away from the mode
            match shoulder(target > body_mean) {
                Some(s) => blend(s, body),
                None => vec![(1.0, body)],
            }
        } else {
            // past the peak, on the far side from the body
            match shoulder(target > peak_mean) {
                Some(s) => blend(s, peak),
                None => vec![(1.0, peak)],
            }
        };
        let parts = parts.into_iter().filter(|(w, _)| *w > 0.0).collect();
        Self {
            parts,
            mode_s: mode,
        }
    }

    pub fn mean_s(&self) -> f64 {
        self.parts.iter().map(|(w, c)| w * c.mean()).sum()
    }

    pub fn mode_s(&self) -> f64 {
        self.mode_s
    }

    pub fn support_s(&self) -> (f64, f64) {
        self.parts.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), (_, c)| match *c {
                Component::Triangular { lo: a, hi: b, .. }
                | Component::Uniform { lo: a, hi: b } => (lo.min(a), hi.max(b)),
            },
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let pick: f64 = rng.random();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, c) in &self.parts {
            acc += w;
            if pick < acc {
                return c.quantile(u);
            }
        }
        self.parts
            .last()
            .map(|(_, c)| c.quantile(u))
            .unwrap_or(MIN_EVENT_GAP_S)
    }
}
