//! Sliding-window presence counting per scanner.
//!
//! Each scanner keeps the last time every address was heard. On every sweep
//! tick addresses silent for longer than the expiry window are dropped and the
//! remainder is counted. Keys are MAC strings, so a phone that draws a fresh
//! random address per probing event is counted once per address it used
//! within the window: the estimate over-counts such devices.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{after, select};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::agent::{BatchEntry, LifecycleMessage, ObservationBatch};
use crate::collector::ArchiveRecord;
use crate::realtime::{RealtimeFrame, RealtimeHub, ScannerState};
use crate::time::Timestamp;
use crate::transport::{
    scanner_of, ConnectOptions, Message, TopicFilter, Transport, TransportError, TOPIC_ROOT,
};

pub const DEFAULT_SWEEP_INTERVAL_S: u32 = 60;
pub const DEFAULT_EXPIRY_WINDOW_S: u32 = 240;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("invalid density config: {0}")]
    Config(String),
    #[error("batch from scanner {got:?} applied to table of {expected:?}")]
    ScannerMismatch { expected: String, got: String },
    #[error("count store {path}: {source}")]
    Store { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub sweep_interval_s: u32,
    pub expiry_window_s: u32,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            sweep_interval_s: DEFAULT_SWEEP_INTERVAL_S,
            expiry_window_s: DEFAULT_EXPIRY_WINDOW_S,
        }
    }
}

impl DensityConfig {
    pub fn new(sweep_interval_s: u32, expiry_window_s: u32) -> Result<Self, DensityError> {
        let c = Self {
            sweep_interval_s,
            expiry_window_s,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), DensityError> {
        if self.sweep_interval_s == 0 {
            return Err(DensityError::Config("sweep_interval_s must be > 0".into()));
        }
        if self.expiry_window_s <= self.sweep_interval_s {
            return Err(DensityError::Config(format!(
                "expiry_window_s ({}) must exceed sweep_interval_s ({})",
                self.expiry_window_s, self.sweep_interval_s
            )));
        }
        Ok(())
    }

    pub fn sweep_ms(&self) -> i64 {
        i64::from(self.sweep_interval_s) * 1000
    }

    pub fn expiry_ms(&self) -> i64 {
        i64::from(self.expiry_window_s) * 1000
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensitySample {
    pub scanner_id: String,
    pub ts: Timestamp,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresenceTable {
    scanner_id: String,
    last_seen: BTreeMap<String, Timestamp>,
}

impl PresenceTable {
    pub fn new(scanner_id: impl Into<String>) -> Self {
        Self {
            scanner_id: scanner_id.into(),
            last_seen: BTreeMap::new(),
        }
    }

    pub fn scanner_id(&self) -> &str {
        &self.scanner_id
    }

    pub fn len(&self) -> usize {
        self.last_seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.last_seen.is_empty()
    }

    pub fn last_seen(&self, mac: &str) -> Option<Timestamp> {
        self.last_seen.get(mac).copied()
    }

    pub fn apply_batch(&mut self, batch: &ObservationBatch) -> Result<(), DensityError> {
        if batch.scanner_id != self.scanner_id {
            return Err(DensityError::ScannerMismatch {
                expected: self.scanner_id.clone(),
                got: batch.scanner_id.clone(),
            });
        }
        batch.entries.iter().for_each(|e| self.apply_entry(e));
        Ok(())
    }

    /// Keeps the later of the stored and the entry's `last_seen`.
    pub fn apply_entry(&mut self, entry: &BatchEntry) {
        let slot = self
            .last_seen
            .entry(entry.mac.clone())
            .or_insert(entry.last_seen);
        *slot = (*slot).max(entry.last_seen);
    }

    /// Drops every address with `now - ts > expiry` and counts the rest.
    pub fn sweep(&mut self, now: Timestamp, config: &DensityConfig) -> DensitySample {
        let expiry = config.expiry_ms();
        self.last_seen
            .retain(|_, ts| now.millis_since(*ts) <= expiry);
        DensitySample {
            scanner_id: self.scanner_id.clone(),
            ts: now,
            count: self.last_seen.len() as u64,
        }
    }
}

/// Persisted sample series, `{root}/density/{scanner_id}.ndjson`.
#[derive(Debug)]
pub struct CountStore {
    dir: PathBuf,
    files: HashMap<String, File>,
}

impl CountStore {
    pub fn open(store_root: &Path) -> Result<Self, DensityError> {
        let dir = store_root.join("density");
        fs::create_dir_all(&dir).map_err(|source| DensityError::Store {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            dir,
            files: HashMap::new(),
        })
    }

    pub fn append(&mut self, sample: &DensitySample) -> Result<(), DensityError> {
        let path = self.dir.join(format!("{}.ndjson", sample.scanner_id));
        let store_err = |source| DensityError::Store {
            path: path.clone(),
            source,
        };
        if !self.files.contains_key(&sample.scanner_id) {
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(store_err)?;
            self.files.insert(sample.scanner_id.clone(), f);
        }
        let mut line = serde_json::to_string(sample).expect("sample serializes");
        line.push('\n');
        self.files
            .get_mut(&sample.scanner_id)
            .expect("opened above")
            .write_all(line.as_bytes())
            .map_err(store_err)
    }

    /// Samples of one scanner in write order; a missing file is an empty series.
    pub fn read(store_root: &Path, scanner_id: &str) -> Result<Vec<DensitySample>, DensityError> {
        let path = store_root
            .join("density")
            .join(format!("{scanner_id}.ndjson"));
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(DensityError::Store { path, source }),
        };
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|source| DensityError::Store {
                path: path.clone(),
                source,
            })?;
            if let Ok(s) = serde_json::from_str(&line) {
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Samples with `ts` in `[from, to)`.
    pub fn read_range(
        store_root: &Path,
        scanner_id: &str,
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<DensitySample>, DensityError> {
        let mut v = Self::read(store_root, scanner_id)?;
        v.retain(|s| s.ts >= from && s.ts < to);
        Ok(v)
    }

    pub fn scanners(store_root: &Path) -> Result<Vec<String>, DensityError> {
        let dir = store_root.join("density");
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(DensityError::Store { path: dir, source }),
        };
        let mut out: Vec<String> = entries
            .filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".ndjson").map(str::to_string)
            })
            .collect();
        out.sort();
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensityMetrics {
    pub batches: u64,
    pub malformed: u64,
    pub status_frames: u64,
    pub samples: u64,
}

/// All presence tables plus the sweep clock.
///
/// Time only moves forward through [`advance_before`](Self::advance_before)
/// and [`advance_through`](Self::advance_through); a message stamped `t` is
/// applied after every tick strictly before `t` and before the tick at `t`.
/// Replaying archived records through the same calls therefore yields the
/// same series.
pub struct DensityEngine {
    config: DensityConfig,
    tables: BTreeMap<String, PresenceTable>,
    next_sweep: Timestamp,
    store: Option<CountStore>,
    realtime: Option<RealtimeHub>,
    samples: Vec<DensitySample>,
    keep_samples: bool,
    metrics: DensityMetrics,
}

impl DensityEngine {
    /// Ticks fall at `start + k * sweep_interval`, k ≥ 1.
    pub fn new(config: DensityConfig, start: Timestamp) -> Result<Self, DensityError> {
        config.validate()?;
        Ok(Self {
            config,
            tables: BTreeMap::new(),
            next_sweep: start.plus_millis(config.sweep_ms()),
            store: None,
            realtime: None,
            samples: Vec::new(),
            keep_samples: true,
            metrics: DensityMetrics::default(),
        })
    }

    pub fn with_store(mut self, store: CountStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn with_realtime(mut self, hub: RealtimeHub) -> Self {
        self.realtime = Some(hub);
        self
    }

    /// Long-running services persist samples instead of holding them.
    pub fn discard_samples(mut self) -> Self {
        self.keep_samples = false;
        self
    }

    /// Pre-registers a scanner so it is sampled before its first batch arrives.
    pub fn register(&mut self, scanner_id: &str) {
        if !self.tables.contains_key(scanner_id) {
            self.tables
                .insert(scanner_id.to_string(), PresenceTable::new(scanner_id));
        }
    }

    pub fn config(&self) -> &DensityConfig {
        &self.config
    }

    pub fn metrics(&self) -> DensityMetrics {
        self.metrics
    }

    pub fn table(&self, scanner_id: &str) -> Option<&PresenceTable> {
        self.tables.get(scanner_id)
    }

    pub fn scanners(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    pub fn samples(&self) -> &[DensitySample] {
        &self.samples
    }

    pub fn take_samples(&mut self) -> Vec<DensitySample> {
        std::mem::take(&mut self.samples)
    }

    pub fn next_sweep(&self) -> Timestamp {
        self.next_sweep
    }

    /// Sweeps every tick strictly before `t`.
    pub fn advance_before(&mut self, t: Timestamp) -> Result<(), DensityError> {
        while self.next_sweep < t {
            self.sweep_tick()?;
        }
        Ok(())
    }

    /// Sweeps every tick up to and including `t`.
    pub fn advance_through(&mut self, t: Timestamp) -> Result<(), DensityError> {
        while self.next_sweep <= t {
            self.sweep_tick()?;
        }
        Ok(())
    }

    fn sweep_tick(&mut self) -> Result<(), DensityError> {
        let now = self.next_sweep;
        for table in self.tables.values_mut() {
            let sample = table.sweep(now, &self.config);
            if let Some(store) = self.store.as_mut() {
                store.append(&sample)?;
            }
            if let Some(hub) = &self.realtime {
                hub.publish(RealtimeFrame::Density(sample.clone()));
            }
            self.metrics.samples += 1;
            if self.keep_samples {
                self.samples.push(sample);
            }
        }
        self.next_sweep = now.plus_millis(self.config.sweep_ms());
        Ok(())
    }

    pub fn apply_batch(
        &mut self,
        batch: &ObservationBatch,
        received_at: Timestamp,
    ) -> Result<(), DensityError> {
        self.advance_before(received_at)?;
        self.register(&batch.scanner_id);
        self.tables
            .get_mut(&batch.scanner_id)
            .expect("registered")
            .apply_batch(batch)?;
        self.metrics.batches += 1;
        Ok(())
    }

    pub fn apply_record(&mut self, record: &ArchiveRecord) -> Result<(), DensityError> {
        self.advance_before(record.received_at)?;
        self.register(&record.scanner_id);
        self.tables
            .get_mut(&record.scanner_id)
            .expect("registered")
            .apply_entry(&record.entry);
        Ok(())
    }

    /// Data batches update tables; lifecycle messages become status frames.
    /// Anything unparseable is counted and skipped.
    pub fn handle(&mut self, msg: &Message, received_at: Timestamp) -> Result<(), DensityError> {
        match scanner_of(&msg.topic) {
            Some((scanner, "data")) => match ObservationBatch::from_json(&msg.payload) {
                Ok(batch) if batch.scanner_id == scanner => self.apply_batch(&batch, received_at),
                Ok(_) | Err(_) => {
                    debug!(topic = %msg.topic, "skipping malformed batch");
                    self.metrics.malformed += 1;
                    Ok(())
                }
            },
            Some((scanner, "log")) => {
                let Ok(life) = LifecycleMessage::from_json(&msg.payload) else {
                    self.metrics.malformed += 1;
                    return Ok(());
                };
                let state = match life {
                    LifecycleMessage::Birth { .. } => ScannerState::Online,
                    LifecycleMessage::Offline { .. } => ScannerState::Offline,
                };
                if let Some(hub) = &self.realtime {
                    hub.publish(RealtimeFrame::Status {
                        scanner_id: scanner.to_string(),
                        state,
                        ts: received_at,
                    });
                }
                self.metrics.status_frames += 1;
                Ok(())
            }
            _ => {
                self.metrics.malformed += 1;
                Ok(())
            }
        }
    }
}

/// Window and scanner set a replay must reproduce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayPlan {
    pub start: Timestamp,
    pub end: Timestamp,
    pub scanners: Vec<String>,
}

/// Recomputes the sample series from archived records (arrival order).
pub fn replay(
    records: &[ArchiveRecord],
    config: DensityConfig,
    plan: &ReplayPlan,
) -> Result<Vec<DensitySample>, DensityError> {
    let mut engine = DensityEngine::new(config, plan.start)?;
    for s in &plan.scanners {
        engine.register(s);
    }
    for r in records {
        engine.apply_record(r)?;
    }
    engine.advance_through(plan.end)?;
    Ok(engine.take_samples())
}

pub struct DensityHandle {
    stop: Arc<AtomicBool>,
    metrics: Arc<Mutex<DensityMetrics>>,
    thread: Option<JoinHandle<Result<(), DensityError>>>,
}

impl DensityHandle {
    pub fn metrics(&self) -> DensityMetrics {
        *self.metrics.lock().unwrap()
    }

    pub fn stop(mut self) -> Result<(), DensityError> {
        self.stop.store(true, Ordering::SeqCst);
        self.thread
            .take()
            .map_or(Ok(()), |t| t.join().expect("density thread panicked"))
    }
}

impl Drop for DensityHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Wall-clock density service: subscribes to every scanner's data and log
/// topics, sweeps on schedule, persists to `store_root` and pushes frames.
pub fn run_density(
    transport: &dyn Transport,
    config: DensityConfig,
    store_root: &Path,
    realtime: RealtimeHub,
    scanners: &[String],
) -> Result<DensityHandle, DensityError> {
    let mut engine = DensityEngine::new(config, Timestamp::now())?
        .with_store(CountStore::open(store_root)?)
        .with_realtime(realtime)
        .discard_samples();
    for s in scanners {
        engine.register(s);
    }
    let mut link = transport.connect(ConnectOptions::new("density-svc"))?;
    let data = link.subscribe(&TopicFilter::new(format!("{TOPIC_ROOT}/+/data"))?)?;
    let log = link.subscribe(&TopicFilter::new(format!("{TOPIC_ROOT}/+/log"))?)?;
    let stop = Arc::new(AtomicBool::new(false));
    let metrics = Arc::new(Mutex::new(DensityMetrics::default()));
    let (stop_flag, shared) = (Arc::clone(&stop), Arc::clone(&metrics));
    let thread = thread::Builder::new()
        .name("density-svc".into())
        .spawn(move || {
            let result = (|| {
                while !stop_flag.load(Ordering::SeqCst) {
                    let until_tick = engine
                        .next_sweep()
                        .millis_since(Timestamp::now())
                        .clamp(0, 100);
                    let msg = select! {
                        recv(data.receiver()) -> m => m.ok(),
                        recv(log.receiver()) -> m => m.ok(),
                        recv(after(Duration::from_millis(until_tick as u64))) -> _ => None,
                    };
                    let now = Timestamp::now();
                    if let Some(m) = msg {
                        engine.handle(&m, now)?;
                    }
                    engine.advance_through(now)?;
                    *shared.lock().unwrap() = engine.metrics();
                }
                Ok(())
            })();
            if let Err(e) = &result {
                warn!(error = %e, "density service halted");
            }
            link.close();
            result
        })
        .expect("spawn density thread");
    Ok(DensityHandle {
        stop,
        metrics,
        thread: Some(thread),
    })
}
