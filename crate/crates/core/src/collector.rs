//! Archival of every received batch entry as append-only NDJSON.
//!
//! Layout under the store root:
//!
//! ```text
//! {root}/{scanner_id}/{YYYY-MM-DD}.ndjson   one ArchiveRecord per line, day of entry.last_seen (UTC)
//! {root}/deadletter.ndjson                  {received_at, topic, reason, payload_base64}
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use base64::Engine as _;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{error, warn};

use crate::agent::{BatchEntry, ObservationBatch};
use crate::time::Timestamp;
use crate::transport::{
    scanner_of, ConnectOptions, Message, TopicFilter, Transport, TransportError, TOPIC_ROOT,
};

pub const DEFAULT_SKEW_ALLOWANCE_MS: i64 = 5_000;
pub const DEADLETTER_FILE: &str = "deadletter.ndjson";
const WRITE_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum CollectorError {
    #[error("archive write to {path} failed after {attempts} attempts: {source}")]
    Storage {
        path: PathBuf,
        attempts: u32,
        source: io::Error,
    },
    #[error("archive read of {path} failed: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub received_at: Timestamp,
    pub scanner_id: String,
    #[serde(flatten)]
    pub entry: BatchEntry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub received_at: Timestamp,
    pub topic: String,
    pub reason: String,
    pub payload_base64: String,
}

#[derive(Debug, Clone)]
pub struct CollectorConfig {
    pub root: PathBuf,
    pub skew_allowance_ms: i64,
    /// When set, MACs are replaced by `hex(sha256(salt || mac))` before writing.
    pub pseudonymize_salt: Option<String>,
}

impl CollectorConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            skew_allowance_ms: DEFAULT_SKEW_ALLOWANCE_MS,
            pseudonymize_salt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CollectorMetrics {
    pub messages: u64,
    pub records: u64,
    pub dead_letters: u64,
}

pub fn pseudonymize(salt: &str, mac: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(mac.as_bytes());
    hex::encode(h.finalize())
}

/// Turns received messages into archive lines. Single writer; readers may
/// run concurrently because every record is written as one whole line.
pub struct Collector {
    config: CollectorConfig,
    metrics: CollectorMetrics,
}

impl Collector {
    pub fn new(config: CollectorConfig) -> Result<Self, CollectorError> {
        fs::create_dir_all(&config.root).map_err(|source| CollectorError::Storage {
            path: config.root.clone(),
            attempts: 1,
            source,
        })?;
        Ok(Self {
            config,
            metrics: CollectorMetrics::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.config.root
    }

    pub fn metrics(&self) -> CollectorMetrics {
        self.metrics
    }

    /// Archives one message; returns the number of records written.
    /// Anything unusable goes to the dead-letter file instead.
    pub fn handle(
        &mut self,
        msg: &Message,
        received_at: Timestamp,
    ) -> Result<usize, CollectorError> {
        self.metrics.messages += 1;
        match self.records_of(msg, received_at) {
            Ok(records) => {
                self.append(&records)?;
                self.metrics.records += records.len() as u64;
                Ok(records.len())
            }
            Err(reason) => {
                warn!(topic = %msg.topic, %reason, "quarantining message");
                let letter = DeadLetter {
                    received_at,
                    topic: msg.topic.to_string(),
                    reason,
                    payload_base64: base64::engine::general_purpose::STANDARD.encode(&msg.payload),
                };
                let path = self.config.root.join(DEADLETTER_FILE);
                write_lines(
                    &path,
                    &[serde_json::to_string(&letter).expect("dead letter serializes")],
                )?;
                self.metrics.dead_letters += 1;
                Ok(0)
            }
        }
    }

    fn records_of(
        &self,
        msg: &Message,
        received_at: Timestamp,
    ) -> Result<Vec<ArchiveRecord>, String> {
        let scanner = match scanner_of(&msg.topic) {
            Some((scanner, "data")) => scanner,
            _ => return Err("not a scanner data topic".into()),
        };
        let batch = ObservationBatch::from_json(&msg.payload)
            .map_err(|e| format!("malformed batch: {e}"))?;
        if batch.scanner_id != scanner {
            return Err(format!(
                "batch scanner {:?} published on topic of {scanner:?}",
                batch.scanner_id
            ));
        }
        let horizon = received_at.plus_millis(self.config.skew_allowance_ms);
        if let Some(e) = batch.entries.iter().find(|e| e.last_seen > horizon) {
            return Err(format!(
                "entry {} last_seen {} is {} ms ahead of receive time",
                e.mac,
                e.last_seen,
                e.last_seen.millis_since(received_at)
            ));
        }
        Ok(batch
            .entries
            .into_iter()
            .map(|mut entry| {
                if let Some(salt) = &self.config.pseudonymize_salt {
                    entry.mac = pseudonymize(salt, &entry.mac);
                }
                ArchiveRecord {
                    received_at,
                    scanner_id: batch.scanner_id.clone(),
                    entry,
                }
            })
            .collect())
    }

    fn append(&self, records: &[ArchiveRecord]) -> Result<(), CollectorError> {
        let mut partitions: BTreeMap<PathBuf, Vec<String>> = BTreeMap::new();
        for r in records {
            partitions
                .entry(partition_path(
                    &self.config.root,
                    &r.scanner_id,
                    r.entry.last_seen,
                ))
                .or_default()
                .push(serde_json::to_string(r).expect("record serializes"));
        }
        for (path, lines) in partitions {
            write_lines(&path, &lines)?;
        }
        Ok(())
    }
}

pub fn partition_path(root: &Path, scanner_id: &str, at: Timestamp) -> PathBuf {
    root.join(scanner_id)
        .join(format!("{}.ndjson", at.utc_date().format("%Y-%m-%d")))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<(), CollectorError> {
    let mut buf = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for l in lines {
        buf.push_str(l);
        buf.push('\n');
    }
    let mut last = None;
    for attempt in 1..=WRITE_ATTEMPTS {
        let res = (|| {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(buf.as_bytes())?;
            f.flush()
        })();
        match res {
            Ok(()) => return Ok(()),
            Err(e) => {
                warn!(path = %path.display(), attempt, error = %e, "archive write failed");
                last = Some(e);
                if attempt < WRITE_ATTEMPTS {
                    thread::sleep(Duration::from_millis(10 << attempt));
                }
            }
        }
    }
    Err(CollectorError::Storage {
        path: path.to_path_buf(),
        attempts: WRITE_ATTEMPTS,
        source: last.expect("at least one attempt"),
    })
}

/// Complete lines of an archive file. A trailing line without a newline is a
/// write in progress and is skipped.
fn read_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CollectorError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(CollectorError::Read {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|source| CollectorError::Read {
                path: path.to_path_buf(),
                source,
            })?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        match serde_json::from_str(line.trim_end()) {
            Ok(r) => out.push(r),
            Err(e) => error!(path = %path.display(), error = %e, "unreadable archive line"),
        }
    }
    Ok(out)
}

/// Records of one scanner with `entry.last_seen` in `[from, to)`, ordered by
/// `last_seen` (ties keep write order).
pub fn read_range(
    root: &Path,
    scanner_id: &str,
    from: Timestamp,
    to: Timestamp,
) -> Result<Vec<ArchiveRecord>, CollectorError> {
    if to <= from {
        return Ok(Vec::new());
    }
    let (first_day, last_day) = (from.utc_date(), to.plus_millis(-1).utc_date());
    let dir = root.join(scanner_id);
    let entries = match fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(CollectorError::Read { path: dir, source }),
    };
    let mut days: Vec<NaiveDate> = entries
        .filter_map(Result::ok)
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            NaiveDate::parse_from_str(name.strip_suffix(".ndjson")?, "%Y-%m-%d").ok()
        })
        .filter(|d| (first_day..=last_day).contains(d))
        .collect();
    days.sort();
    let mut out = Vec::new();
    for day in days {
        let path = partition_path(root, scanner_id, Timestamp::start_of_day(day));
        out.extend(
            read_file::<ArchiveRecord>(&path)?
                .into_iter()
                .filter(|r| r.entry.last_seen >= from && r.entry.last_seen < to),
        );
    }
    out.sort_by_key(|r| r.entry.last_seen);
    Ok(out)
}

/// Scanner partitions present in the archive, sorted.
pub fn archived_scanners(root: &Path) -> Result<Vec<String>, CollectorError> {
    let entries = match fs::read_dir(root) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(CollectorError::Read {
                path: root.to_path_buf(),
                source,
            })
        }
    };
    let mut out: Vec<String> = entries
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_ok_and(|t| t.is_dir()))
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|name| name != "density")
        .collect();
    out.sort();
    Ok(out)
}

/// Every archived record in arrival order: by `received_at`, then scanner,
/// then line order. This is the order a replay must apply them in.
pub fn read_all(root: &Path) -> Result<Vec<ArchiveRecord>, CollectorError> {
    let mut out = Vec::new();
    for scanner in archived_scanners(root)? {
        let dir = root.join(&scanner);
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|source| CollectorError::Read {
                path: dir.clone(),
                source,
            })?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        files.sort();
        for f in files {
            out.extend(read_file::<ArchiveRecord>(&f)?);
        }
    }
    out.sort_by(|a, b| (a.received_at, &a.scanner_id).cmp(&(b.received_at, &b.scanner_id)));
    Ok(out)
}

pub fn read_dead_letters(root: &Path) -> Result<Vec<DeadLetter>, CollectorError> {
    read_file(&root.join(DEADLETTER_FILE))
}

/// A running collector subscribed to every scanner's data topic.
pub struct CollectorHandle {
    stop: Arc<AtomicBool>,
    metrics: Arc<Mutex<CollectorMetrics>>,
    thread: Option<JoinHandle<Result<(), CollectorError>>>,
}

impl CollectorHandle {
    pub fn metrics(&self) -> CollectorMetrics {
        *self.metrics.lock().unwrap()
    }

    pub fn is_running(&self) -> bool {
        self.thread.as_ref().is_some_and(|t| !t.is_finished())
    }

    /// Stops the service; returns the storage error it halted on, if any.
    pub fn stop(mut self) -> Result<(), CollectorError> {
        self.stop.store(true, Ordering::SeqCst);
        self.thread
            .take()
            .map_or(Ok(()), |t| t.join().expect("collector thread panicked"))
    }
}

impl Drop for CollectorHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts the archival service, stamping messages with the wall clock.
/// Halts with a diagnostic on a storage failure rather than dropping data.
pub fn run_collector(
    transport: &dyn Transport,
    config: CollectorConfig,
) -> Result<CollectorHandle, CollectorError> {
    let mut collector = Collector::new(config)?;
    let mut link = transport.connect(ConnectOptions::new("collector"))?;
    let sub = link.subscribe(&TopicFilter::new(format!("{TOPIC_ROOT}/+/data"))?)?;
    let stop = Arc::new(AtomicBool::new(false));
    let metrics = Arc::new(Mutex::new(CollectorMetrics::default()));
    let (stop_flag, shared) = (Arc::clone(&stop), Arc::clone(&metrics));
    let thread = thread::Builder::new()
        .name("collector".into())
        .spawn(move || {
            let result = loop {
                if stop_flag.load(Ordering::SeqCst) {
                    break Ok(());
                }
                let Some(msg) = sub.recv_timeout(Duration::from_millis(50)) else {
                    continue;
                };
                let r = collector.handle(&msg, Timestamp::now());
                *shared.lock().unwrap() = collector.metrics();
                if let Err(e) = r {
                    error!(error = %e, "collector halted");
                    break Err(e);
                }
            };
            link.close();
            result
        })
        .expect("spawn collector thread");
    Ok(CollectorHandle {
        stop,
        metrics,
        thread: Some(thread),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{data_topic, log_topic, InMemoryBus, Topic};

    const T0: i64 = 1_700_000_000_000;

    fn ts(s: i64) -> Timestamp {
        Timestamp::from_millis(T0 + s * 1000)
    }

    fn entry(mac: &str, last: Timestamp) -> BatchEntry {
        BatchEntry {
            mac: mac.into(),
            randomized: false,
            vendor: "AcmePhones".into(),
            first_seen: last.plus_secs(-5),
            last_seen: last,
            packet_count: 3,
            rssi_min: -70,
            rssi_max: -60,
            ssids: vec![],
            ie_fingerprint: "d41d8cd98f00b204e9800998ecf8427e".into(),
            ie_changed: false,
        }
    }

    fn message(scanner: &str, entries: Vec<BatchEntry>) -> Message {
        let batch = ObservationBatch {
            scanner_id: scanner.into(),
            batch_start: ts(0),
            batch_end: ts(30),
            entries,
        };
        Message {
            topic: data_topic(scanner).unwrap(),
            payload: batch.to_json(),
            publisher: scanner.into(),
        }
    }

    #[test]
    fn three_entries_three_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Collector::new(CollectorConfig::new(dir.path())).unwrap();
        let msg = message(
            "s1",
            vec![entry("A", ts(1)), entry("B", ts(2)), entry("C", ts(3))],
        );
        assert_eq!(c.handle(&msg, ts(30)).unwrap(), 3);
        let got = read_range(dir.path(), "s1", ts(0), ts(60)).unwrap();
        assert_eq!(
            got.iter().map(|r| r.entry.mac.as_str()).collect::<Vec<_>>(),
            ["A", "B", "C"]
        );
        assert!(got
            .iter()
            .all(|r| r.received_at == ts(30) && r.scanner_id == "s1"));
    }

    #[test]
    fn archive_line_is_flat() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Collector::new(CollectorConfig::new(dir.path())).unwrap();
        c.handle(&message("s1", vec![entry("A", ts(1))]), ts(30))
            .unwrap();
        let path = partition_path(dir.path(), "s1", ts(1));
        assert_eq!(path.file_name().unwrap(), "2023-11-14.ndjson");
        let line = fs::read_to_string(path).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(v["mac"], "A");
        assert_eq!(v["scanner_id"], "s1");
        assert_eq!(v["received_at"], T0 + 30_000);
        assert!(v.get("entry").is_none());
    }

    #[test]
    fn truncated_payload_is_dead_lettered() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Collector::new(CollectorConfig::new(dir.path())).unwrap();
        let mut msg = message("s1", vec![entry("A", ts(1))]);
        msg.payload.truncate(msg.payload.len() / 2);
        assert_eq!(c.handle(&msg, ts(30)).unwrap(), 0);
        assert!(read_range(dir.path(), "s1", ts(0), ts(60))
            .unwrap()
            .is_empty());
        let dead = read_dead_letters(dir.path()).unwrap();
        assert_eq!(dead.len(), 1);
        assert!(dead[0].reason.starts_with("malformed batch"));
        assert_eq!(dead[0].topic, "probesense/v1/s1/data");
        let raw = base64::engine::general_purpose::STANDARD
            .decode(&dead[0].payload_base64)
            .unwrap();
        assert_eq!(raw, msg.payload);
    }

    #[test]
    fn topic_mismatch_and_skew_are_dead_lettered() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Collector::new(CollectorConfig::new(dir.path())).unwrap();
        let mut wrong = message("s1", vec![entry("A", ts(1))]);
        wrong.topic = data_topic("s2").unwrap();
        c.handle(&wrong, ts(30)).unwrap();
        let mut log = message("s1", vec![]);
        log.topic = log_topic("s1").unwrap();
        c.handle(&log, ts(30)).unwrap();
        // 5 s allowance: ahead by exactly 5 s passes, by 6 s is quarantined
        assert_eq!(
            c.handle(&message("s1", vec![entry("A", ts(35))]), ts(30))
                .unwrap(),
            1
        );
        assert_eq!(
            c.handle(&message("s1", vec![entry("B", ts(36))]), ts(30))
                .unwrap(),
            0
        );
        assert_eq!(
            c.metrics(),
            CollectorMetrics {
                messages: 4,
                records: 1,
                dead_letters: 3
            }
        );
    }

    #[test]
    fn read_range_half_open_across_days() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_range(dir.path(), "s1", ts(0), ts(100))
            .unwrap()
            .is_empty());
        let mut c = Collector::new(CollectorConfig::new(dir.path())).unwrap();
        let midnight = Timestamp::start_of_day(ts(0).utc_date().succ_opt().unwrap());
        let late = midnight.plus_secs(-10);
        c.handle(
            &message("s1", vec![entry("B", midnight), entry("A", late)]),
            midnight.plus_secs(1),
        )
        .unwrap();
        let got = read_range(dir.path(), "s1", late, midnight.plus_secs(1)).unwrap();
        assert_eq!(
            got.iter().map(|r| r.entry.mac.as_str()).collect::<Vec<_>>(),
            ["A", "B"]
        );
        assert_eq!(
            read_range(dir.path(), "s1", late, midnight).unwrap().len(),
            1
        );
        assert_eq!(
            read_range(dir.path(), "s2", late, midnight).unwrap().len(),
            0
        );
    }

    #[test]
    fn partial_trailing_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Collector::new(CollectorConfig::new(dir.path())).unwrap();
        c.handle(&message("s1", vec![entry("A", ts(1))]), ts(30))
            .unwrap();
        let path = partition_path(dir.path(), "s1", ts(1));
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"received_at\":17").unwrap();
        assert_eq!(
            read_range(dir.path(), "s1", ts(0), ts(60)).unwrap().len(),
            1
        );
    }

    #[test]
    fn pseudonymization_is_salted_sha256() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = CollectorConfig::new(dir.path());
        cfg.pseudonymize_salt = Some("pepper".into());
        let mut c = Collector::new(cfg).unwrap();
        c.handle(
            &message("s1", vec![entry("A8:BB:CC:00:00:01", ts(1))]),
            ts(30),
        )
        .unwrap();
        let r = &read_range(dir.path(), "s1", ts(0), ts(60)).unwrap()[0];
        // sha256("pepperA8:BB:CC:00:00:01"), computed with Python hashlib
        assert_eq!(
            r.entry.mac,
            "e3dc609341551890584479833716c2ad24cfe8905a3c214622a0aa2fbab35893"
        );
    }

    #[test]
    fn append_only_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let msg = message("s1", vec![entry("A", ts(1))]);
        Collector::new(CollectorConfig::new(dir.path()))
            .unwrap()
            .handle(&msg, ts(30))
            .unwrap();
        let path = partition_path(dir.path(), "s1", ts(1));
        let before = fs::read_to_string(&path).unwrap();
        Collector::new(CollectorConfig::new(dir.path()))
            .unwrap()
            .handle(&msg, ts(60))
            .unwrap();
        let after = fs::read_to_string(&path).unwrap();
        assert!(after.starts_with(&before));
        assert_eq!(after.lines().count(), 2);
    }

    #[test]
    fn read_all_orders_by_arrival() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Collector::new(CollectorConfig::new(dir.path())).unwrap();
        c.handle(&message("s2", vec![entry("B", ts(1))]), ts(30))
            .unwrap();
        c.handle(&message("s1", vec![entry("A", ts(40))]), ts(60))
            .unwrap();
        c.handle(&message("s1", vec![entry("C", ts(2))]), ts(30))
            .unwrap();
        let all = read_all(dir.path()).unwrap();
        assert_eq!(
            all.iter().map(|r| r.entry.mac.as_str()).collect::<Vec<_>>(),
            ["C", "B", "A"]
        );
        assert_eq!(archived_scanners(dir.path()).unwrap(), ["s1", "s2"]);
    }

    #[test]
    fn storage_failure_halts_with_diagnostic() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Collector::new(CollectorConfig::new(dir.path())).unwrap();
        // a regular file where the scanner directory should be
        fs::write(dir.path().join("s1"), b"").unwrap();
        let err = c
            .handle(&message("s1", vec![entry("A", ts(1))]), ts(30))
            .unwrap_err();
        assert!(
            matches!(err, CollectorError::Storage { attempts: 3, .. }),
            "{err}"
        );
    }

    #[test]
    fn service_archives_from_bus() {
        let dir = tempfile::tempdir().unwrap();
        let bus = InMemoryBus::new();
        let handle = run_collector(&bus, CollectorConfig::new(dir.path())).unwrap();
        let mut pubr = bus.connect(ConnectOptions::new("s1")).unwrap();
        let now = Timestamp::now();
        let batch = ObservationBatch {
            scanner_id: "s1".into(),
            batch_start: now,
            batch_end: now,
            entries: vec![entry("A", now), entry("B", now)],
        };
        pubr.publish(&data_topic("s1").unwrap(), &batch.to_json())
            .unwrap();
        pubr.publish(&Topic::new("probesense/v1/s1/data").unwrap(), b"{")
            .unwrap();
        let deadline = std::time::Instant::now() + Duration::from_secs(5);
        while handle.metrics().messages < 2 && std::time::Instant::now() < deadline {
            thread::sleep(Duration::from_millis(10));
        }
        assert_eq!(
            handle.metrics(),
            CollectorMetrics {
                messages: 2,
                records: 2,
                dead_letters: 1
            }
        );
        handle.stop().unwrap();
    }
}
