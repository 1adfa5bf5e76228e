//! Movement between scanners reconstructed from archived records.
//!
//! Burned-in addresses are followed directly. Randomized addresses change too
//! often to follow, so those records are grouped by IE fingerprint instead. A
//! fingerprint shared by several phones of the same model shows up at two
//! scanners at once; such groups are flagged ambiguous and kept out of the
//! flow counts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collector::{read_range, ArchiveRecord, CollectorError};
use crate::time::Timestamp;

pub const DEFAULT_GAP_THRESHOLD_S: u32 = 300;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum DeviceKey {
    Mac(String),
    Fingerprint(String),
}

impl DeviceKey {
    pub fn of(record: &ArchiveRecord) -> Self {
        if record.entry.randomized {
            DeviceKey::Fingerprint(record.entry.ie_fingerprint.clone())
        } else {
            DeviceKey::Mac(record.entry.mac.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub scanner_id: String,
    pub first_seen: Timestamp,
    pub last_seen: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub device_key: DeviceKey,
    pub visits: Vec<Visit>,
    pub ambiguous: bool,
}

/// Groups records by device key and folds each group into visits.
///
/// Same-scanner records at most `gap_threshold_s` apart form one visit; a
/// longer silence at the same scanner starts a new trajectory. Output is
/// ordered by device key, then time.
pub fn build_trajectories(records: &[ArchiveRecord], gap_threshold_s: u32) -> Vec<Trajectory> {
    let gap = i64::from(gap_threshold_s) * 1000;
    let mut groups: BTreeMap<DeviceKey, Vec<&ArchiveRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(DeviceKey::of(r)).or_default().push(r);
    }

    let mut out = Vec::new();
    for (key, mut group) in groups {
        group.sort_by(|a, b| {
            (a.entry.first_seen, a.entry.last_seen, &a.scanner_id).cmp(&(
                b.entry.first_seen,
                b.entry.last_seen,
                &b.scanner_id,
            ))
        });
        let ambiguous =
            matches!(key, DeviceKey::Fingerprint(_)) && overlaps_across_scanners(&group, gap);

        let mut visits: Vec<Visit> = Vec::new();
        for r in group {
            match visits.last_mut() {
                Some(v)
                    if v.scanner_id == r.scanner_id
                        && r.entry.first_seen.millis_since(v.last_seen) <= gap =>
                {
                    v.last_seen = v.last_seen.max(r.entry.last_seen);
                }
                Some(v) if v.scanner_id == r.scanner_id => {
                    out.push(Trajectory {
                        device_key: key.clone(),
                        visits: std::mem::take(&mut visits),
                        ambiguous,
                    });
                    visits.push(visit_of(r));
                }
                _ => visits.push(visit_of(r)),
            }
        }
        if !visits.is_empty() {
            out.push(Trajectory {
                device_key: key,
                visits,
                ambiguous,
            });
        }
    }
    out
}

fn visit_of(r: &ArchiveRecord) -> Visit {
    Visit {
        scanner_id: r.scanner_id.clone(),
        first_seen: r.entry.first_seen,
        last_seen: r.entry.last_seen,
    }
}

/// True when the group is heard at two scanners during overlapping sessions,
/// which one device cannot do.
fn overlaps_across_scanners(group: &[&ArchiveRecord], gap: i64) -> bool {
    let mut sessions: Vec<(&str, Timestamp, Timestamp)> = Vec::new();
    let mut by_scanner: BTreeMap<&str, Vec<&ArchiveRecord>> = BTreeMap::new();
    for r in group {
        by_scanner.entry(&r.scanner_id).or_default().push(r);
    }
    for (scanner, rs) in by_scanner {
        let mut cur: Option<(Timestamp, Timestamp)> = None;
        for r in rs {
            cur = match cur {
                Some((a, b)) if r.entry.first_seen.millis_since(b) <= gap => {
                    Some((a, b.max(r.entry.last_seen)))
                }
                Some(s) => {
                    sessions.push((scanner, s.0, s.1));
                    Some((r.entry.first_seen, r.entry.last_seen))
                }
                None => Some((r.entry.first_seen, r.entry.last_seen)),
            };
        }
        if let Some(s) = cur {
            sessions.push((scanner, s.0, s.1));
        }
    }
    sessions.iter().enumerate().any(|(i, a)| {
        sessions[i + 1..]
            .iter()
            .any(|b| a.0 != b.0 && a.1 <= b.2 && b.1 <= a.2)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlowMatrix {
    pub from: Timestamp,
    pub to: Timestamp,
    #[serde(with = "flow_list")]
    pub flows: BTreeMap<(String, String), u64>,
    pub ambiguous_devices: u64,
}

impl FlowMatrix {
    pub fn total(&self) -> u64 {
        self.flows.values().sum()
    }
}

mod flow_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Row {
        from: String,
        to: String,
        count: u64,
    }

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<(String, String), u64>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|((from, to), count)| Row {
                from: from.clone(),
                to: to.clone(),
                count: *count,
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(String, String), u64>, D::Error> {
        Ok(Vec::<Row>::deserialize(d)?
            .into_iter()
            .map(|r| ((r.from, r.to), r.count))
            .collect())
    }
}

/// Counts each move between consecutive visits whose arrival falls in `[from, to)`.
pub fn flows(trajectories: &[Trajectory], from: Timestamp, to: Timestamp) -> FlowMatrix {
    let mut m = FlowMatrix {
        from,
        to,
        ..Default::default()
    };
    let mut ambiguous: BTreeSet<&DeviceKey> = BTreeSet::new();
    for t in trajectories {
        if t.ambiguous {
            if t.visits
                .iter()
                .any(|v| v.last_seen >= from && v.first_seen < to)
            {
                ambiguous.insert(&t.device_key);
            }
            continue;
        }
        for pair in t.visits.windows(2) {
            let arrival = pair[1].first_seen;
            if arrival >= from && arrival < to && pair[0].scanner_id != pair[1].scanner_id {
                *m.flows
                    .entry((pair[0].scanner_id.clone(), pair[1].scanner_id.clone()))
                    .or_insert(0) += 1;
            }
        }
    }
    m.ambiguous_devices = ambiguous.len() as u64;
    m
}

/// Flow matrix over the archive of `scanners` for `[from, to)`.
pub fn journeys_from_archive(
    root: &Path,
    scanners: &[String],
    from: Timestamp,
    to: Timestamp,
    gap_threshold_s: u32,
) -> Result<FlowMatrix, CollectorError> {
    let mut records = Vec::new();
    for s in scanners {
        records.extend(read_range(root, s, from, to)?);
    }
    Ok(flows(
        &build_trajectories(&records, gap_threshold_s),
        from,
        to,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyNode {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyLink {
    pub source: String,
    pub target: String,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SankeyDocument {
    pub nodes: Vec<SankeyNode>,
    pub links: Vec<SankeyLink>,
}

impl SankeyDocument {
    pub fn to_flows(&self) -> BTreeMap<(String, String), u64> {
        self.links
            .iter()
            .map(|l| ((l.source.clone(), l.target.clone()), l.value))
            .collect()
    }
}

/// Nodes ordered by throughput (in + out), busiest first, ties by id.
pub fn sankey_export(matrix: &FlowMatrix) -> SankeyDocument {
    let mut throughput: BTreeMap<&str, u64> = BTreeMap::new();
    let mut links = Vec::new();
    for ((a, b), &v) in &matrix.flows {
        if v == 0 {
            continue;
        }
        *throughput.entry(a).or_default() += v;
        *throughput.entry(b).or_default() += v;
        links.push(SankeyLink {
            source: a.clone(),
            target: b.clone(),
            value: v,
        });
    }
    let mut nodes: Vec<(&str, u64)> = throughput.into_iter().collect();
    nodes.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(y.0)));
    SankeyDocument {
        nodes: nodes
            .into_iter()
            .map(|(id, _)| SankeyNode { id: id.to_string() })
            .collect(),
        links,
    }
}
