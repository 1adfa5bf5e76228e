//! Per-event table for single-phone runs: burst time, packet count, spacing.

use std::io::{self, Write};

use serde::Serialize;

use super::engine::SimOutput;
use super::profile::BURST_WINDOW_MS;
use crate::probe::ProbeObservation;
use crate::time::Timestamp;

pub const REPORT_HEADER: &str = "event_time_ms,packets,gap_s";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub event_time: Timestamp,
    pub packets: u32,
    /// Seconds since the previous event's first packet; absent on the first row.
    pub gap_s: Option<f64>,
}

/// Clusters captures into probe events: a packet opens a new event once it is
/// at least one burst window past the current event's first packet.
pub fn emit_experiment_report(observations: &[ProbeObservation]) -> Vec<ReportRow> {
    let mut times: Vec<Timestamp> = observations.iter().map(|o| o.captured_at).collect();
    times.sort_unstable();
    let mut rows: Vec<ReportRow> = Vec::new();
    for t in times {
        match rows.last_mut() {
            Some(row) if t.millis_since(row.event_time) < BURST_WINDOW_MS => row.packets += 1,
            last => {
                let gap_s = last.map(|r| t.millis_since(r.event_time) as f64 / 1000.0);
                rows.push(ReportRow {
                    event_time: t,
                    packets: 1,
                    gap_s,
                });
            }
        }
    }
    rows
}

/// Report restricted to the addresses one simulated device used.
pub fn experiment_report_for(output: &SimOutput, device_id: &str) -> Vec<ReportRow> {
    let macs: std::collections::BTreeSet<_> = output
        .ground_truth
        .events_of(device_id)
        .map(|e| e.mac)
        .collect();
    let mine: Vec<ProbeObservation> = output
        .observations
        .iter()
        .filter(|o| macs.contains(&o.mac))
        .cloned()
        .collect();
    emit_experiment_report(&mine)
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in rows {
        match r.gap_s {
            Some(g) => writeln!(out, "{},{},{:.3}", r.event_time, r.packets, g)?,
            None => writeln!(out, "{},{},", r.event_time, r.packets)?,
        }
    }
    Ok(())
}
