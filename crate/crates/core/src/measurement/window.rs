use std::collections::BTreeMap;

use crate::deployment::{DeviceId, NodeId};
use crate::geometry::median;

use super::{Diagnostics, ProbeRecord, SamplingWindowConfig};

/// window index → (device, sniffer) → raw RSS samples in arrival order.
pub type RawWindows = BTreeMap<i64, BTreeMap<(DeviceId, NodeId), Vec<f64>>>;

/// Index of the half-open window `[t0 + kT, t0 + (k+1)T)` containing `t`.
pub fn window_index(t: f64, t0: f64, window_length: f64) -> i64 {
    ((t - t0) / window_length).floor() as i64
}

/// Median of the samples, or `None` when there is nothing to summarize.
pub fn representative_rss(samples: &[f64]) -> Option<f64> {
    if samples.iter().any(|s| !s.is_finite()) {
        return None;
    }
    median(samples)
}

/// Buckets records into sampling windows. Records with a non-finite
/// timestamp or RSS are rejected and counted.
pub fn assign_windows<'a, I>(records: I, cfg: &SamplingWindowConfig, t0: f64) -> (RawWindows, Diagnostics)
where
    I: IntoIterator<Item = &'a ProbeRecord>,
{
    let mut out = RawWindows::new();
    let mut diag = Diagnostics::default();
    for r in records {
        diag.records_in += 1;
        if !r.timestamp.is_finite() || !r.rss.is_finite() {
            diag.rejected_non_finite += 1;
            continue;
        }
        let k = window_index(r.timestamp, t0, cfg.window_length);
        out.entry(k)
            .or_default()
            .entry((r.device_id.clone(), r.sniffer_id.clone()))
            .or_default()
            .push(r.rss);
    }
    (out, diag)
}

/// Streaming window builder with bounded memory.
///
/// A window is closed once a record from a later window arrives. Records are
/// accepted in any order within the open window; records for an already
/// closed window are dropped and counted.
#[derive(Debug)]
pub struct WindowAssembler {
    cfg: SamplingWindowConfig,
    t0: f64,
    open: Option<i64>,
    buffer: BTreeMap<(DeviceId, NodeId), Vec<f64>>,
    diag: Diagnostics,
}

/// A window that will receive no further records.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedWindow {
    pub window: i64,
    pub samples: BTreeMap<(DeviceId, NodeId), Vec<f64>>,
}

impl WindowAssembler {
    pub fn new(cfg: SamplingWindowConfig, t0: f64) -> Self {
        WindowAssembler { cfg, t0, open: None, buffer: BTreeMap::new(), diag: Diagnostics::default() }
    }

    pub fn push(&mut self, r: &ProbeRecord) -> Option<ClosedWindow> {
        self.diag.records_in += 1;
        if !r.timestamp.is_finite() || !r.rss.is_finite() {
            self.diag.rejected_non_finite += 1;
            return None;
        }
        let k = window_index(r.timestamp, self.t0, self.cfg.window_length);
        let mut closed = None;
        match self.open {
            Some(open) if k < open => {
                self.diag.dropped_late += 1;
                return None;
            }
            Some(open) if k > open => {
                closed = Some(ClosedWindow { window: open, samples: std::mem::take(&mut self.buffer) });
                self.open = Some(k);
            }
            None => self.open = Some(k),
            _ => {}
        }
        self.buffer.entry((r.device_id.clone(), r.sniffer_id.clone())).or_default().push(r.rss);
        closed
    }

    /// Closes the open window, if any.
    pub fn finish(&mut self) -> Option<ClosedWindow> {
        let open = self.open.take()?;
        Some(ClosedWindow { window: open, samples: std::mem::take(&mut self.buffer) })
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diag
    }
}
