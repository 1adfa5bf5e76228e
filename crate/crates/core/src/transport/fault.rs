use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConnectOptions, Link, Subscription, Topic, TopicFilter, Transport, TransportError};

/// What to break and how often.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultPlan {
    /// Probability that a matching publish is rejected before delivery.
    pub publish_failure_rate: f64,
    /// Restrict publish faults to these topics; `None` means every topic.
    pub publish_filter: Option<TopicFilter>,
    /// Number of initial connect attempts that report the broker unreachable.
    pub failed_connects: u32,
    pub seed: u64,
}

impl Default for FaultPlan {
    fn default() -> Self {
        Self {
            publish_failure_rate: 0.0,
            publish_filter: None,
            failed_connects: 0,
            seed: 0,
        }
    }
}

/// Wraps a transport and injects failures per a seeded [`FaultPlan`].
pub struct FaultyTransport<T> {
    inner: T,
    plan: FaultPlan,
    rng: Arc<Mutex<ChaCha8Rng>>,
    connects_left_to_fail: AtomicU32,
    injected: Arc<AtomicU64>,
}

impl<T: Transport> FaultyTransport<T> {
    pub fn new(inner: T, plan: FaultPlan) -> Self {
        Self {
            rng: Arc::new(Mutex::new(ChaCha8Rng::seed_from_u64(plan.seed))),
            connects_left_to_fail: AtomicU32::new(plan.failed_connects),
            injected: Arc::new(AtomicU64::new(0)),
            inner,
            plan,
        }
    }

    /// Publishes rejected so far.
    pub fn injected_failures(&self) -> u64 {
        self.injected.load(Ordering::Relaxed)
    }
}

impl<T: Transport> Transport for FaultyTransport<T> {
    fn connect(&self, options: ConnectOptions) -> Result<Box<dyn Link>, TransportError> {
        let fail = self
            .connects_left_to_fail
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if fail {
            return Err(TransportError::Unreachable(
                "injected connect failure".into(),
            ));
        }
        Ok(Box::new(FaultyLink {
            inner: self.inner.connect(options)?,
            plan: self.plan.clone(),
            rng: Arc::clone(&self.rng),
            injected: Arc::clone(&self.injected),
        }))
    }
}

struct FaultyLink {
    inner: Box<dyn Link>,
    plan: FaultPlan,
    rng: Arc<Mutex<ChaCha8Rng>>,
    injected: Arc<AtomicU64>,
}

impl Link for FaultyLink {
    fn client_id(&self) -> &str {
        self.inner.client_id()
    }

    fn publish(&mut self, topic: &Topic, payload: &[u8]) -> Result<(), TransportError> {
        let eligible = self
            .plan
            .publish_filter
            .as_ref()
            .is_none_or(|f| f.matches(topic));
        if eligible && self.plan.publish_failure_rate > 0.0 {
            let roll: f64 = self.rng.lock().unwrap_or_else(|e| e.into_inner()).random();
            if roll < self.plan.publish_failure_rate {
                self.injected.fetch_add(1, Ordering::Relaxed);
                return Err(TransportError::PublishFailed(format!(
                    "injected fault on {topic}"
                )));
            }
        }
        self.inner.publish(topic, payload)
    }

    fn subscribe(&mut self, filter: &TopicFilter) -> Result<Subscription, TransportError> {
        self.inner.subscribe(filter)
    }

    fn close(self: Box<Self>) {
        self.inner.close()
    }

    fn drop_unclean(self: Box<Self>) {
        self.inner.drop_unclean()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::InMemoryBus;

    #[test]
    fn connect_failures_then_success() {
        let t = FaultyTransport::new(
            InMemoryBus::new(),
            FaultPlan {
                failed_connects: 2,
                ..Default::default()
            },
        );
        assert!(t.connect(ConnectOptions::new("a")).is_err());
        assert!(t.connect(ConnectOptions::new("a")).is_err());
        assert!(t.connect(ConnectOptions::new("a")).is_ok());
    }

    #[test]
    fn failure_rate_is_roughly_honoured_and_filtered() {
        let bus = InMemoryBus::new();
        let t = FaultyTransport::new(
            bus.clone(),
            FaultPlan {
                publish_failure_rate: 0.1,
                publish_filter: Some(TopicFilter::new("x/data").unwrap()),
                seed: 3,
                ..Default::default()
            },
        );
        let mut link = t.connect(ConnectOptions::new("p")).unwrap();
        let data = Topic::new("x/data").unwrap();
        let log = Topic::new("x/log").unwrap();
        let fails = (0..5_000)
            .filter(|_| link.publish(&data, b"d").is_err())
            .count();
        assert!((350..650).contains(&fails), "{fails}");
        assert!((0..1_000).all(|_| link.publish(&log, b"l").is_ok()));
        assert_eq!(t.injected_failures(), fails as u64);
    }
}
