use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, RecvTimeoutError, Sender};

use super::{AgentMetrics, AgentStatus, EdgeAgent, ObservationBatch};
use crate::probe::ProbeObservation;
use crate::time::Timestamp;
use crate::transport::Transport;

/// How often a disconnected actor wakes to check its backoff deadline.
const POLL_TICK: Duration = Duration::from_millis(100);

enum Command {
    Observe(ProbeObservation),
    Flush(Sender<Option<ObservationBatch>>),
    Shutdown,
    Kill,
}

/// Runs an [`EdgeAgent`] on its own thread against the wall clock, flushing
/// every posting interval. Dropping the handle kills the agent uncleanly.
pub struct AgentHandle {
    tx: Sender<Command>,
    state: Arc<Mutex<(AgentStatus, AgentMetrics)>>,
    thread: Option<JoinHandle<()>>,
}

impl AgentHandle {
    pub fn spawn(agent: EdgeAgent, transport: Arc<dyn Transport>) -> Self {
        let (tx, rx) = unbounded();
        let state = Arc::new(Mutex::new((agent.status(), agent.metrics())));
        let shared = Arc::clone(&state);
        let name = format!("agent-{}", agent.config().scanner_id);
        let thread = thread::Builder::new()
            .name(name)
            .spawn(move || {
                let mut agent = agent;
                let interval = Duration::from_millis(agent.config().posting_interval_ms() as u64);
                agent.start(&*transport, Timestamp::now());
                let mut next_flush = Instant::now() + interval;
                loop {
                    *shared.lock().unwrap() = (agent.status(), agent.metrics());
                    let wait = next_flush
                        .saturating_duration_since(Instant::now())
                        .min(POLL_TICK);
                    match rx.recv_timeout(wait) {
                        Ok(Command::Observe(obs)) => {
                            agent.ingest(&obs);
                        }
                        Ok(Command::Flush(reply)) => {
                            let _ = reply.send(agent.flush(Timestamp::now()).ok());
                        }
                        Ok(Command::Shutdown) | Err(RecvTimeoutError::Disconnected) => {
                            agent.shutdown();
                            break;
                        }
                        Ok(Command::Kill) => {
                            agent.kill();
                            break;
                        }
                        Err(RecvTimeoutError::Timeout) => {}
                    }
                    agent.poll(&*transport, Timestamp::now());
                    if Instant::now() >= next_flush {
                        let _ = agent.flush(Timestamp::now());
                        next_flush += interval;
                    }
                }
                shared.lock().unwrap().0 = AgentStatus::Stopped;
            })
            .expect("spawn agent thread");
        Self {
            tx,
            state,
            thread: Some(thread),
        }
    }

    pub fn observe(&self, obs: ProbeObservation) {
        let _ = self.tx.send(Command::Observe(obs));
    }

    /// Flushes immediately; `None` if the publish failed or the agent is gone.
    pub fn flush_now(&self) -> Option<ObservationBatch> {
        let (reply, rx) = unbounded();
        self.tx.send(Command::Flush(reply)).ok()?;
        rx.recv().ok().flatten()
    }

    pub fn status(&self) -> AgentStatus {
        self.state.lock().unwrap().0
    }

    pub fn metrics(&self) -> AgentMetrics {
        self.state.lock().unwrap().1
    }

    pub fn shutdown(mut self) {
        self.stop(Command::Shutdown);
    }

    pub fn kill(mut self) {
        self.stop(Command::Kill);
    }

    fn stop(&mut self, cmd: Command) {
        if let Some(t) = self.thread.take() {
            let _ = self.tx.send(cmd);
            let _ = t.join();
        }
    }
}

impl Drop for AgentHandle {
    fn drop(&mut self) {
        self.stop(Command::Kill);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{AgentConfig, LifecycleMessage};
    use crate::probe::{MacAddress, OuiDatabase};
    use crate::transport::{ConnectOptions, FaultPlan, FaultyTransport, InMemoryBus, TopicFilter};

    fn obs(at: Timestamp) -> ProbeObservation {
        ProbeObservation {
            mac: "DA:00:00:00:00:01".parse::<MacAddress>().unwrap(),
            rssi_dbm: -50,
            ssids: vec![],
            ie_bytes: vec![1, 2, 3],
            vendor_ie_bytes: vec![],
            captured_at: at,
            scanner_id: "s1".into(),
        }
    }

    #[test]
    fn actor_flushes_on_demand_and_dies_with_will() {
        let bus = InMemoryBus::new();
        let mut watcher = bus.connect(ConnectOptions::new("watch")).unwrap();
        let log = watcher
            .subscribe(&TopicFilter::new("probesense/v1/+/log").unwrap())
            .unwrap();
        let agent =
            EdgeAgent::new(AgentConfig::new("s1"), Arc::new(OuiDatabase::bundled())).unwrap();
        let handle = AgentHandle::spawn(agent, Arc::new(bus.clone()));
        handle.observe(obs(Timestamp::now()));
        handle.observe(obs(Timestamp::now()));
        let batch = handle.flush_now().unwrap();
        assert_eq!(batch.entries.len(), 1);
        assert_eq!(batch.entries[0].packet_count, 2);
        assert_eq!(handle.status(), AgentStatus::Connected);

        let killed_at = Instant::now();
        drop(handle);
        let kinds: Vec<_> = std::iter::from_fn(|| log.recv_timeout(Duration::from_secs(1)))
            .map(|m| LifecycleMessage::from_json(&m.payload).unwrap())
            .collect();
        assert!(matches!(kinds[0], LifecycleMessage::Birth { .. }));
        assert!(matches!(kinds[1], LifecycleMessage::Offline { .. }));
        assert!(killed_at.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn actor_recovers_after_backoff() {
        let bus = InMemoryBus::new();
        let faulty = FaultyTransport::new(
            bus.clone(),
            FaultPlan {
                failed_connects: 1,
                ..Default::default()
            },
        );
        let agent =
            EdgeAgent::new(AgentConfig::new("s1"), Arc::new(OuiDatabase::bundled())).unwrap();
        let handle = AgentHandle::spawn(agent, Arc::new(faulty));
        let deadline = Instant::now() + Duration::from_secs(5);
        while handle.status() != AgentStatus::Connected && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(50));
        }
        assert_eq!(handle.status(), AgentStatus::Connected);
        assert!(bus.is_connected("s1"));
        handle.shutdown();
        assert!(!bus.is_connected("s1"));
    }
}
