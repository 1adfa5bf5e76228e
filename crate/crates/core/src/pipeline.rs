//! End-to-end run on simulated time: simulator, one edge agent per scanner,
//! in-memory bus, collector and density service.
//!
//! The driver advances in posting-interval steps. At each step every capture
//! up to that instant is ingested, each agent flushes, the bus is drained into
//! the collector and the density engine (stamped with the step time), and due
//! sweeps run. Batches a faulty broker rejected keep being retried after the
//! scenario ends until every agent has drained.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentConfig, AgentError, AgentMetrics, EdgeAgent};
use crate::collector::{
    read_all, ArchiveRecord, Collector, CollectorConfig, CollectorError, CollectorMetrics,
};
use crate::density::{
    replay, CountStore, DensityConfig, DensityEngine, DensityError, DensitySample, ReplayPlan,
};
use crate::journey::{build_trajectories, flows, FlowMatrix, DEFAULT_GAP_THRESHOLD_S};
use crate::probe::OuiDatabase;
use crate::sim::{run_scenario, GroundTruth, Scenario, SimError};
use crate::time::Timestamp;
use crate::transport::{
    ConnectOptions, FaultPlan, FaultyTransport, InMemoryBus, TopicFilter, Transport, TOPIC_ROOT,
};

/// Give up on draining retained batches after this many extra intervals.
const MAX_DRAIN_STEPS: u32 = 1_000;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Collector(#[from] CollectorError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl PipelineError {
    /// Configuration problems as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::Sim(
                    SimError::Invalid { .. } | SimError::UnknownProfile { .. } | SimError::Parse(_)
                )
                | PipelineError::Agent(AgentError::Config(_))
                | PipelineError::Density(DensityError::Config(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub posting_interval_s: u32,
    pub density: DensityConfig,
    pub gap_threshold_s: u32,
    pub sw_version: String,
    #[serde(skip)]
    pub faults: Option<FaultPlan>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            posting_interval_s: crate::agent::DEFAULT_POSTING_INTERVAL_S,
            density: DensityConfig::default(),
            gap_threshold_s: DEFAULT_GAP_THRESHOLD_S,
            sw_version: env!("CARGO_PKG_VERSION").to_string(),
            faults: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.posting_interval_s == 0 {
            return Err(PipelineError::Config(
                "posting_interval_s must be > 0".into(),
            ));
        }
        if self.gap_threshold_s == 0 {
            return Err(PipelineError::Config("gap_threshold_s must be > 0".into()));
        }
        self.density.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlushOutcome {
    pub scanner_id: String,
    pub at: Timestamp,
    pub published: bool,
    pub entries: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub ground_truth: GroundTruth,
    pub scanners: Vec<String>,
    /// Time of the last step, including any drain steps past the scenario end.
    pub run_end: Timestamp,
    pub samples: Vec<DensitySample>,
    pub records: Vec<ArchiveRecord>,
    pub flushes: Vec<FlushOutcome>,
    pub flow: FlowMatrix,
    pub agent_metrics: BTreeMap<String, AgentMetrics>,
    pub collector_metrics: CollectorMetrics,
    pub injected_failures: u64,
    pub undelivered_entries: usize,
}

impl PipelineRun {
    pub fn replay_plan(&self) -> ReplayPlan {
        ReplayPlan {
            start: self.ground_truth.start,
            end: self.run_end,
            scanners: self.scanners.clone(),
        }
    }

    /// Estimated vs. true occupancy at every sweep.
    pub fn accuracy(&self) -> Vec<AccuracyRow> {
        self.samples
            .iter()
            .map(|s| AccuracyRow {
                ts: s.ts,
                scanner_id: s.scanner_id.clone(),
                estimated: s.count,
                truth: self.ground_truth.scanner_occupancy(&s.scanner_id, s.ts) as u64,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub ts: Timestamp,
    pub scanner_id: String,
    pub estimated: u64,
    pub truth: u64,
}

enum Bus {
    Plain(InMemoryBus),
    Faulty(FaultyTransport<InMemoryBus>),
}

impl Bus {
    fn transport(&self) -> &dyn Transport {
        match self {
            Bus::Plain(b) => b,
            Bus::Faulty(f) => f,
        }
    }
}

/// Runs `scenario` through the whole pipeline, archiving under `store_root`
/// (archive partitions plus `density/`). The store must not already exist
/// or must be empty, so archives are never mixed across runs.
pub fn run_pipeline(
    scenario: &Scenario,
    config: &PipelineConfig,
    store_root: &Path,
) -> Result<PipelineRun, PipelineError> {
    config.validate()?;
    if scenario.scanners.iter().any(|s| s.id == "density") {
        return Err(PipelineError::Config(
            "scanner id \"density\" is reserved for the count store".into(),
        ));
    }
    if fs::read_dir(store_root).is_ok_and(|mut d| d.next().is_some()) {
        return Err(PipelineError::Config(format!(
            "store {} is not empty",
            store_root.display()
        )));
    }

    let sim = run_scenario(scenario);
    let scanners = scenario.scanner_ids();
    let start = scenario.start;
    let end = scenario.end();
    let step = i64::from(config.posting_interval_s) * 1000;

    let raw = InMemoryBus::new();
    let bus = match &config.faults {
        Some(plan) => Bus::Faulty(FaultyTransport::new(raw.clone(), plan.clone())),
        None => Bus::Plain(raw.clone()),
    };

    let mut collector = Collector::new(CollectorConfig::new(store_root))?;
    let mut collector_link = raw
        .connect(ConnectOptions::new("collector"))
        .map_err(CollectorError::from)?;
    let collector_sub = collector_link
        .subscribe(&TopicFilter::new(format!("{TOPIC_ROOT}/+/data")).map_err(CollectorError::from)?)
        .map_err(CollectorError::from)?;

    let mut density =
        DensityEngine::new(config.density, start)?.with_store(CountStore::open(store_root)?);
    for s in &scanners {
        density.register(s);
    }
    let mut density_link = raw
        .connect(ConnectOptions::new("density-svc"))
        .map_err(DensityError::from)?;
    let density_sub = density_link
        .subscribe(&TopicFilter::new(format!("{TOPIC_ROOT}/#")).map_err(DensityError::from)?)
        .map_err(DensityError::from)?;

    let oui = Arc::new(OuiDatabase::bundled());
    let mut agents: BTreeMap<String, EdgeAgent> = BTreeMap::new();
    for (i, s) in scanners.iter().enumerate() {
        let mut cfg = AgentConfig::new(s.clone());
        cfg.posting_interval_s = config.posting_interval_s;
        cfg.sw_version = config.sw_version.clone();
        cfg.local_ip = format!("10.0.{}.{}", i / 250, i % 250 + 2);
        let mut agent = EdgeAgent::new(cfg, Arc::clone(&oui))?;
        agent.start(bus.transport(), start);
        agents.insert(s.clone(), agent);
    }

    let mut flushes = Vec::new();
    let mut obs = sim.observations.iter().peekable();
    let mut now = start;
    let mut drain_steps = 0;
    loop {
        now = now.plus_millis(step);
        let past_end = now > end.plus_millis(step - 1);
        if past_end {
            let pending: usize = agents.values().map(EdgeAgent::pending_entries).sum();
            if pending == 0 || drain_steps >= MAX_DRAIN_STEPS {
                now = now.plus_millis(-step);
                break;
            }
            drain_steps += 1;
        }

        while let Some(o) = obs.next_if(|o| o.captured_at <= now) {
            if let Some(agent) = agents.get_mut(&o.scanner_id) {
                agent.ingest(o);
            }
        }
        for (id, agent) in agents.iter_mut() {
            agent.poll(bus.transport(), now);
            let outcome = match agent.flush(now) {
                Ok(batch) => FlushOutcome {
                    scanner_id: id.clone(),
                    at: now,
                    published: true,
                    entries: batch.entries.len(),
                },
                Err(_) => FlushOutcome {
                    scanner_id: id.clone(),
                    at: now,
                    published: false,
                    entries: agent.pending_entries(),
                },
            };
            flushes.push(outcome);
        }
        for msg in collector_sub.drain() {
            collector.handle(&msg, now)?;
        }
        for msg in density_sub.drain() {
            density.handle(&msg, now)?;
        }
        density.advance_through(now)?;
    }
    let run_end = now;

    let undelivered_entries = agents.values().map(EdgeAgent::pending_entries).sum();
    let agent_metrics = agents
        .iter()
        .map(|(id, a)| (id.clone(), a.metrics()))
        .collect();
    for agent in agents.into_values() {
        agent.shutdown();
    }
    collector_link.close();
    density_link.close();

    let records = read_all(store_root)?;
    let flow = run_flows(&records, config.gap_threshold_s, start, run_end);
    let injected_failures = match &bus {
        Bus::Faulty(f) => f.injected_failures(),
        Bus::Plain(_) => 0,
    };

    Ok(PipelineRun {
        ground_truth: sim.ground_truth,
        scanners,
        run_end,
        samples: density.take_samples(),
        records,
        flushes,
        flow,
        agent_metrics,
        collector_metrics: collector.metrics(),
        injected_failures,
        undelivered_entries,
    })
}

/// Flows over a run's whole archive; `end` is the last step and inclusive.
fn run_flows(
    records: &[ArchiveRecord],
    gap_threshold_s: u32,
    start: Timestamp,
    end: Timestamp,
) -> FlowMatrix {
    flows(
        &build_trajectories(records, gap_threshold_s),
        start,
        end.plus_millis(1),
    )
}

/// Recomputes the flow matrix of a finished run from its archive.
pub fn replay_flows(
    store_root: &Path,
    gap_threshold_s: u32,
    plan: &ReplayPlan,
) -> Result<FlowMatrix, PipelineError> {
    Ok(run_flows(
        &read_all(store_root)?,
        gap_threshold_s,
        plan.start,
        plan.end,
    ))
}

/// Recomputes the density series of a finished run from its archive.
pub fn replay_archive(
    store_root: &Path,
    config: DensityConfig,
    plan: &ReplayPlan,
) -> Result<Vec<DensitySample>, PipelineError> {
    let records = read_all(store_root)?;
    Ok(replay(&records, config, plan)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub config: PipelineConfig,
    pub replay: ReplayPlan,
    pub devices: usize,
    pub observations_archived: usize,
    pub samples: usize,
    pub mean_abs_error: f64,
    pub exact_samples: usize,
    /// Sum of estimates over sum of truth, across all sweeps.
    pub over_count_factor: Option<f64>,
    pub flow_total: u64,
    pub truth_flow_total: u64,
    pub ambiguous_devices: u64,
    pub undelivered_entries: usize,
}

impl RunSummary {
    pub fn of(run: &PipelineRun, seed: u64, config: &PipelineConfig) -> Self {
        let acc = run.accuracy();
        let abs: u64 = acc.iter().map(|r| r.estimated.abs_diff(r.truth)).sum();
        let est: u64 = acc.iter().map(|r| r.estimated).sum();
        let truth: u64 = acc.iter().map(|r| r.truth).sum();
        Self {
            seed,
            config: config.clone(),
            replay: run.replay_plan(),
            devices: run.ground_truth.itineraries.len(),
            observations_archived: run.records.len(),
            samples: acc.len(),
            mean_abs_error: if acc.is_empty() {
                0.0
            } else {
                abs as f64 / acc.len() as f64
            },
            exact_samples: acc.iter().filter(|r| r.estimated == r.truth).count(),
            over_count_factor: (truth > 0).then(|| est as f64 / truth as f64),
            flow_total: run.flow.total(),
            truth_flow_total: run.ground_truth.scanner_flow_matrix().values().sum(),
            ambiguous_devices: run.flow.ambiguous_devices,
            undelivered_entries: run.undelivered_entries,
        }
    }
}

pub const ACCURACY_HEADER: &str = "ts_ms,scanner_id,estimated,truth";
pub const FLOWS_HEADER: &str = "from,to,estimated,truth";

/// Writes ground truth, accuracy report, flow comparison and summary next to
/// the store: `ground_truth.json`, `accuracy.csv`, `flows.csv`, `summary.json`.
pub fn write_reports(
    out_dir: &Path,
    run: &PipelineRun,
    summary: &RunSummary,
) -> Result<(), PipelineError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let p = out_dir.join("ground_truth.json");
    fs::write(
        &p,
        serde_json::to_vec_pretty(&run.ground_truth).expect("ground truth serializes"),
    )
    .map_err(io_err(&p))?;

    let mut acc = String::from(ACCURACY_HEADER);
    acc.push('\n');
    for r in run.accuracy() {
        acc.push_str(&format!(
            "{},{},{},{}\n",
            r.ts.millis(),
            r.scanner_id,
            r.estimated,
            r.truth
        ));
    }
    let p = out_dir.join("accuracy.csv");
    fs::write(&p, acc).map_err(io_err(&p))?;

    let truth = run.ground_truth.scanner_flow_matrix();
    let mut keys: Vec<&(String, String)> = run.flow.flows.keys().chain(truth.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut f =
        fs::File::create(out_dir.join("flows.csv")).map_err(io_err(&out_dir.join("flows.csv")))?;
    let mut text = String::from(FLOWS_HEADER);
    text.push('\n');
    for k in keys {
        text.push_str(&format!(
            "{},{},{},{}\n",
            k.0,
            k.1,
            run.flow.flows.get(k).copied().unwrap_or(0),
            truth.get(k).copied().unwrap_or(0)
        ));
    }
    f.write_all(text.as_bytes())
        .map_err(io_err(&out_dir.join("flows.csv")))?;

    let p = out_dir.join("summary.json");
    fs::write(
        &p,
        serde_json::to_vec_pretty(summary).expect("summary serializes"),
    )
    .map_err(io_err(&p))?;
    Ok(())
}
