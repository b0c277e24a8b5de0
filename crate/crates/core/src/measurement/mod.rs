//! Probe records to per-device, per-window representative RSS sets.
//!
//! Raw probe requests are bucketed into half-open sampling windows
//! `[t0 + kT, t0 + (k+1)T)`, reduced to one median RSS per (device, sniffer,
//! window), and then carried forward by sample-and-hold for up to `L` empty
//! windows. Devices that look static (printers) or passing-by are filtered
//! out before tracking.

mod classify;
mod hold;
mod window;

pub use classify::{classify_device, ClassifierThresholds, DeviceClass, DeviceEvidence, Classification};
pub use hold::{apply_sample_and_hold, hold_sequence, HeldValue};
pub use window::{assign_windows, representative_rss, window_index, RawWindows, WindowAssembler};

use serde::{Deserialize, Serialize};

use crate::deployment::{DeviceId, NodeId};

/// One sniffed probe request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    /// Unix epoch seconds.
    pub timestamp: f64,
    pub sniffer_id: NodeId,
    pub device_id: DeviceId,
    /// dBm.
    pub rss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingWindowConfig {
    /// Window length `T` in seconds.
    pub window_length: f64,
    /// Hold length `L` in windows.
    pub hold_length: usize,
}

impl Default for SamplingWindowConfig {
    fn default() -> Self {
        SamplingWindowConfig { window_length: 3.0, hold_length: 2 }
    }
}

/// One available representative RSS value in a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEntry {
    /// Index of the sniffer in the deployment table.
    pub node: usize,
    pub rss: f64,
    /// Windows since the last fresh sample; 0 when fresh.
    pub hold_age: u32,
}

/// The set of available measurements for one device in one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedMeasurement {
    pub device_id: DeviceId,
    pub window: i64,
    /// Sorted by node index, at most one entry per node.
    pub entries: Vec<MeasurementEntry>,
}

impl WindowedMeasurement {
    /// Number of available reference nodes.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fresh_count(&self) -> usize {
        self.entries.iter().filter(|e| e.hold_age == 0).count()
    }

    /// Entries ordered by decreasing RSS (ties by node index).
    pub fn strongest_first(&self) -> Vec<MeasurementEntry> {
        let mut v = self.entries.clone();
        v.sort_by(|a, b| b.rss.total_cmp(&a.rss).then(a.node.cmp(&b.node)));
        v
    }
}

/// Counters reported by the ingest and measurement stages.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub records_in: u64,
    pub rejected_non_finite: u64,
    pub rejected_unknown_sniffer: u64,
    pub rejected_below_threshold: u64,
    pub dropped_late: u64,
    pub unparseable_lines: u64,
    pub devices_tracked: u64,
    pub devices_static: u64,
    pub devices_passing_by: u64,
    pub skipped_updates: u64,
    pub zone_fallbacks: u64,
}

impl Diagnostics {
    pub fn merge(&mut self, o: &Diagnostics) {
        self.records_in += o.records_in;
        self.rejected_non_finite += o.rejected_non_finite;
        self.rejected_unknown_sniffer += o.rejected_unknown_sniffer;
        self.rejected_below_threshold += o.rejected_below_threshold;
        self.dropped_late += o.dropped_late;
        self.unparseable_lines += o.unparseable_lines;
        self.devices_tracked += o.devices_tracked;
        self.devices_static += o.devices_static;
        self.devices_passing_by += o.devices_passing_by;
        self.skipped_updates += o.skipped_updates;
        self.zone_fallbacks += o.zone_fallbacks;
    }

    /// `key=value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let rows: [(&str, u64); 11] = [
            ("records_in", self.records_in),
            ("rejected_non_finite", self.rejected_non_finite),
            ("rejected_unknown_sniffer", self.rejected_unknown_sniffer),
            ("rejected_below_threshold", self.rejected_below_threshold),
            ("dropped_late", self.dropped_late),
            ("unparseable_lines", self.unparseable_lines),
            ("devices_tracked", self.devices_tracked),
            ("devices_static", self.devices_static),
            ("devices_passing_by", self.devices_passing_by),
            ("skipped_updates", self.skipped_updates),
            ("zone_fallbacks", self.zone_fallbacks),
        ];
        rows.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
