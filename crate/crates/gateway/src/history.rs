//! Historical density series, bucketed by peak count.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use probesense_core::density::{CountStore, DensityError, DensitySample};
use probesense_core::Timestamp;

pub const DEFAULT_BUCKET_S: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Point {
    pub ts: Timestamp,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityHistory {
    pub floor_id: u64,
    pub from: Timestamp,
    pub to: Timestamp,
    pub bucket_s: u32,
    pub series: BTreeMap<String, Vec<Point>>,
}

/// One point per epoch-aligned bucket holding the largest count in it,
/// stamped with the bucket start.
pub fn bucket_max(samples: &[DensitySample], bucket_s: u32) -> Vec<Point> {
    let width = i64::from(bucket_s.max(1)) * 1000;
    let mut buckets: BTreeMap<i64, u64> = BTreeMap::new();
    for s in samples {
        let start = s.ts.millis() - s.ts.millis().rem_euclid(width);
        let slot = buckets.entry(start).or_default();
        *slot = (*slot).max(s.count);
    }
    buckets
        .into_iter()
        .map(|(ts, count)| Point {
            ts: Timestamp::from_millis(ts),
            count,
        })
        .collect()
}

/// Series for each scanner over `[from, to)`; scanners without samples get
/// an empty series.
pub fn read_series(
    store_root: &Path,
    scanners: &[String],
    from: Timestamp,
    to: Timestamp,
    bucket_s: u32,
) -> Result<BTreeMap<String, Vec<Point>>, DensityError> {
    scanners
        .iter()
        .map(|s| {
            let samples = CountStore::read_range(store_root, s, from, to)?;
            Ok((s.clone(), bucket_max(&samples, bucket_s)))
        })
        .collect()
}
