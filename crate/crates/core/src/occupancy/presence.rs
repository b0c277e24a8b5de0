use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::deployment::DeviceId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceStatus {
    Active,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceState {
    pub device_id: DeviceId,
    pub current_zone: usize,
    /// Time of the last measurement, seconds.
    pub last_seen: f64,
    /// Time of the last zone change (measured or coasted), seconds.
    pub last_update: f64,
    pub status: PresenceStatus,
}

/// Per-zone counts at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancySnapshot {
    pub timestamp: f64,
    /// Indexed like the zone map.
    pub counts: Vec<u32>,
    pub total: u32,
}

/// Last known zone of every device, with grace-period expiry.
#[derive(Debug, Clone, PartialEq)]
pub struct PresenceTable {
    grace: f64,
    num_zones: usize,
    entries: BTreeMap<DeviceId, PresenceState>,
}

impl PresenceTable {
    pub fn new(num_zones: usize, grace: f64) -> Self {
        PresenceTable { grace, num_zones, entries: BTreeMap::new() }
    }

    pub fn grace(&self) -> f64 {
        self.grace
    }

    /// A measured position placed the device in `zone` at `t`.
    pub fn update_presence(&mut self, device: &DeviceId, zone: usize, t: f64) -> Result<&PresenceState> {
        self.check_order(device, t)?;
        let e = self.entries.entry(device.clone()).or_insert_with(|| PresenceState {
            device_id: device.clone(),
            current_zone: zone,
            last_seen: t,
            last_update: t,
            status: PresenceStatus::Active,
        });
        e.current_zone = zone;
        e.last_seen = t;
        e.last_update = t;
        e.status = PresenceStatus::Active;
        Ok(e)
    }

    /// A coasted position moved the device to `zone` at `t` without a new
    /// measurement. Ignored for devices not in the table or already expired.
    pub fn coast_to(&mut self, device: &DeviceId, zone: usize, t: f64) -> Result<()> {
        self.check_order(device, t)?;
        let grace = self.grace;
        if let Some(e) = self.entries.get_mut(device) {
            if t - e.last_seen <= grace {
                e.current_zone = zone;
                e.last_update = t;
            }
        }
        Ok(())
    }

    fn check_order(&self, device: &DeviceId, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::NonFinite("presence time"));
        }
        match self.entries.get(device) {
            Some(e) if t < e.last_update => {
                Err(Error::TimeRegression { device: device.to_string(), t, last_seen: e.last_update })
            }
            _ => Ok(()),
        }
    }

    /// `active iff now − last_seen ≤ grace`.
    pub fn status_at(&self, device: &DeviceId, now: f64) -> Option<PresenceStatus> {
        self.entries.get(device).map(|e| self.status_of(e, now))
    }

    fn status_of(&self, e: &PresenceState, now: f64) -> PresenceStatus {
        if now - e.last_seen <= self.grace {
            PresenceStatus::Active
        } else {
            PresenceStatus::Expired
        }
    }

    pub fn get(&self, device: &DeviceId) -> Option<&PresenceState> {
        self.entries.get(device)
    }

    pub fn snapshot(&self, t: f64) -> OccupancySnapshot {
        let mut counts = vec![0u32; self.num_zones];
        for e in self.entries.values() {
            if self.status_of(e, t) == PresenceStatus::Active && e.last_update <= t {
                counts[e.current_zone] += 1;
            }
        }
        let total = counts.iter().sum();
        OccupancySnapshot { timestamp: t, counts, total }
    }

    /// Marks expired devices and drops them from the table.
    pub fn expire(&mut self, now: f64) -> usize {
        let before = self.entries.len();
        let grace = self.grace;
        self.entries.retain(|_, e| now - e.last_seen <= grace);
        before - self.entries.len()
    }
}
