use std::fmt;

use super::TransportError;

pub const TOPIC_ROOT: &str = "probesense/v1";

/// Concrete publish topic: non-empty, `/`-separated, no wildcards.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Topic(String);

impl Topic {
    pub fn new(path: impl Into<String>) -> Result<Self, TransportError> {
        let path = path.into();
        if path.is_empty() || path.contains(['+', '#', '\0']) {
            return Err(TransportError::InvalidTopic(path));
        }
        Ok(Self(path))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('/')
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Subscription pattern: `+` matches one level, a trailing `#` matches the
/// remaining levels including none.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopicFilter(String);

impl TopicFilter {
    pub fn new(pattern: impl Into<String>) -> Result<Self, TransportError> {
        let pattern = pattern.into();
        let levels: Vec<&str> = pattern.split('/').collect();
        let valid = !pattern.is_empty()
            && levels.iter().enumerate().all(|(i, level)| match *level {
                "#" => i == levels.len() - 1,
                "+" => true,
                l => !l.contains(['+', '#']),
            });
        if !valid {
            return Err(TransportError::InvalidFilter(pattern));
        }
        Ok(Self(pattern))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn matches(&self, topic: &Topic) -> bool {
        let mut pattern = self.0.split('/');
        let mut levels = topic.segments();
        loop {
            match (pattern.next(), levels.next()) {
                (Some("#"), _) => return true,
                (Some("+"), Some(_)) => {}
                (Some(p), Some(l)) if p == l => {}
                (None, None) => return true,
                _ => return false,
            }
        }
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A scanner id must fill exactly one topic level.
pub fn is_valid_scanner_id(id: &str) -> bool {
    !id.is_empty() && !id.contains(['/', '+', '#'])
}

pub fn data_topic(scanner_id: &str) -> Result<Topic, TransportError> {
    Topic::new(format!("{TOPIC_ROOT}/{scanner_id}/data"))
}

pub fn log_topic(scanner_id: &str) -> Result<Topic, TransportError> {
    Topic::new(format!("{TOPIC_ROOT}/{scanner_id}/log"))
}

/// Scanner id and channel (`data` or `log`) from a `probesense/v1/{id}/{kind}` topic.
pub fn scanner_of(topic: &Topic) -> Option<(&str, &str)> {
    let rest = topic.as_str().strip_prefix(TOPIC_ROOT)?.strip_prefix('/')?;
    let (scanner, kind) = rest.split_once('/')?;
    (!scanner.is_empty() && !kind.contains('/')).then_some((scanner, kind))
}
