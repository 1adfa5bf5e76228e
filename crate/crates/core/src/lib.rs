//! Passive WiFi probe-request crowd analytics.
//!
//! Captures flow from scanners (here, the [`sim`] simulator) through an
//! [`agent`] that filters, fingerprints and batches them, over a pub/sub
//! [`transport`], into the [`collector`] archive and the [`density`]
//! estimator. [`journey`] rebuilds movement between scanners from the archive.

pub mod agent;
pub mod collector;
pub mod density;
pub mod journey;
pub mod pipeline;
pub mod probe;
pub mod realtime;
pub mod sim;
pub mod time;
pub mod transport;

pub use time::Timestamp;
