use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use clap::Args;
use tracing::{info, warn};

use probesense_core::agent::{AgentConfig, AgentHandle, EdgeAgent};
use probesense_core::collector::{run_collector, CollectorConfig};
use probesense_core::density::run_density;
use probesense_core::pipeline::PipelineConfig;
use probesense_core::probe::{OuiDatabase, ProbeObservation};
use probesense_core::realtime::RealtimeHub;
use probesense_core::sim::{run_scenario, Scenario, ScenarioFile};
use probesense_core::transport::{InMemoryBus, Transport};
use probesense_core::Timestamp;
use probesense_gateway::{AppState, ConfigService, TokenTable};

use crate::error::CliError;
use crate::manifest::Overrides;
use crate::simulate::DEMO_SCENARIO;

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: String,
    /// Archive and count-store root
    #[arg(long, default_value = "probesense-store")]
    pub store: PathBuf,
    /// Gateway configuration document [default: STORE/gateway.json]
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON token table: {"tokens": [{"token", "user_id", "role"}]}
    #[arg(long)]
    pub tokens: PathBuf,
    /// Feed live captures from a scenario ("demo" for the bundled one),
    /// re-timed to start now
    #[arg(long)]
    pub simulate: Option<String>,
    /// Stop after this many seconds instead of waiting for Ctrl-C
    #[arg(long)]
    pub duration_s: Option<u64>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Pseudonymize archived MACs with this salt
    #[arg(long)]
    pub pseudonymize_salt: Option<String>,
}

struct LiveFeed {
    stop: Arc<AtomicBool>,
    thread: thread::JoinHandle<()>,
}

impl LiveFeed {
    fn start(
        scenario: &Scenario,
        config: &PipelineConfig,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, CliError> {
        let oui = Arc::new(OuiDatabase::bundled());
        let mut agents = BTreeMap::new();
        for id in scenario.scanner_ids() {
            let mut cfg = AgentConfig::new(id.as_str());
            cfg.posting_interval_s = config.posting_interval_s;
            cfg.sw_version = config.sw_version.clone();
            let agent = EdgeAgent::new(cfg, Arc::clone(&oui)).map_err(CliError::validation)?;
            agents.insert(id, AgentHandle::spawn(agent, Arc::clone(&transport)));
        }
        let observations = run_scenario(scenario).observations;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = thread::Builder::new()
            .name("live-feed".into())
            .spawn(move || feed(observations, agents, flag))
            .map_err(CliError::runtime)?;
        Ok(Self { stop, thread })
    }

    fn stop(self) {
        self.stop.store(true, Ordering::SeqCst);
        if self.thread.join().is_err() {
            warn!("live feed thread panicked");
        }
    }
}

fn feed(
    observations: Vec<ProbeObservation>,
    agents: BTreeMap<String, AgentHandle>,
    stop: Arc<AtomicBool>,
) {
    'outer: for obs in observations {
        loop {
            if stop.load(Ordering::SeqCst) {
                break 'outer;
            }
            let wait = obs.captured_at.millis_since(Timestamp::now());
            if wait <= 0 {
                break;
            }
            thread::sleep(Duration::from_millis(wait.min(100) as u64));
        }
        if let Some(a) = agents.get(&obs.scanner_id) {
            a.observe(obs);
        }
    }
    while !stop.load(Ordering::SeqCst) {
        thread::sleep(Duration::from_millis(100));
    }
    for a in agents.into_values() {
        a.shutdown();
    }
}

fn live_scenario(which: &str) -> Result<Scenario, CliError> {
    let mut file = if which == "demo" {
        ScenarioFile::from_toml(DEMO_SCENARIO)?
    } else {
        ScenarioFile::load(std::path::Path::new(which))?
    };
    file.start_ms = Timestamp::now().millis();
    Ok(Scenario::resolve(&file)?)
}

pub fn serve(args: &ServeArgs, w: &mut dyn Write) -> Result<(), CliError> {
    let config = args.overrides.apply(&PipelineConfig::default())?;
    let tokens = TokenTable::load(&args.tokens).map_err(CliError::validation)?;
    let config_path = args
        .config
        .clone()
        .unwrap_or_else(|| args.store.join("gateway.json"));
    let gateway_config = ConfigService::open(&config_path).map_err(CliError::validation)?;
    let scenario = args.simulate.as_deref().map(live_scenario).transpose()?;

    let mut scanners: BTreeSet<String> = gateway_config
        .snapshot()
        .placements
        .keys()
        .cloned()
        .collect();
    if let Some(s) = &scenario {
        scanners.extend(s.scanner_ids());
    }
    let scanners: Vec<String> = scanners.into_iter().collect();

    std::fs::create_dir_all(&args.store)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.store.display())))?;
    let bus = InMemoryBus::new();
    let hub = RealtimeHub::default();
    let mut collector_cfg = CollectorConfig::new(&args.store);
    collector_cfg.pseudonymize_salt = args.pseudonymize_salt.clone();
    let collector = run_collector(&bus, collector_cfg).map_err(CliError::runtime)?;
    let density = run_density(&bus, config.density, &args.store, hub.clone(), &scanners)
        .map_err(CliError::runtime)?;
    let live = match &scenario {
        Some(s) => Some(LiveFeed::start(s, &config, Arc::new(bus.clone()))?),
        None => None,
    };

    let mut state = AppState::new(gateway_config, tokens, args.store.clone(), hub);
    state.gap_threshold_s = config.gap_threshold_s;

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::runtime)?;
    let duration = args.duration_s;
    let served = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.listen)
            .await
            .map_err(|e| CliError::Runtime(format!("bind {}: {e}", args.listen)))?;
        let addr = listener.local_addr().map_err(CliError::runtime)?;
        writeln!(w, "listening on {addr}")
            .and_then(|_| w.flush())
            .map_err(CliError::runtime)?;
        info!(%addr, scanners = scanners.len(), "gateway up");
        let shutdown = async move {
            match duration {
                Some(s) => tokio::time::sleep(Duration::from_secs(s)).await,
                None => {
                    let _ = tokio::signal::ctrl_c().await;
                }
            }
        };
        probesense_gateway::serve(listener, state, shutdown)
            .await
            .map_err(CliError::runtime)
    });

    if let Some(l) = live {
        l.stop();
    }
    let d = density.stop().map_err(CliError::runtime);
    let c = collector.stop().map_err(CliError::runtime);
    served.and(d).and(c)
}
