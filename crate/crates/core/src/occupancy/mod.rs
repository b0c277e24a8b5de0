//! Zone mapping and per-zone occupancy counts with a per-device grace
//! period.

mod presence;
mod series;
mod zones;

pub use presence::{OccupancySnapshot, PresenceState, PresenceStatus, PresenceTable};
pub use series::{
    dwell_durations, dwell_histogram, occupancy_series, presence_episodes, DwellBin, Episode, ZoneObservation,
};
pub use zones::{point_in_polygon, polygon_area, zone_of, Zone, ZoneLookup, ZoneMap};

/// Default grace period, seconds.
pub const DEFAULT_GRACE_S: f64 = 300.0;
