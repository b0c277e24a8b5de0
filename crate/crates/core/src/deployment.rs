//! Reference nodes (sniffers) and the floor they are deployed on.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

/// Identifier of a reference node (sniffer).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

/// Opaque device key. MAC addresses are salted and hashed before they get here.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub String);

impl DeviceId {
    /// Keys a raw field from a log. Anything that looks like a MAC address is
    /// replaced by a salted SHA-256 digest; other strings are taken as
    /// already-opaque keys.
    pub fn from_log_field(field: &str, salt: &str) -> Self {
        if looks_like_mac(field) {
            DeviceId::from_mac(field, salt)
        } else {
            DeviceId(field.to_string())
        }
    }

    pub fn from_mac(mac: &str, salt: &str) -> Self {
        let normalized: String = mac
            .chars()
            .filter(|c| c.is_ascii_hexdigit())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let mut h = Sha256::new();
        h.update(salt.as_bytes());
        h.update(b":");
        h.update(normalized.as_bytes());
        let digest = h.finalize();
        DeviceId(format!("h{}", &hex::encode(digest)[..16]))
    }
}

fn looks_like_mac(s: &str) -> bool {
    let parts: Vec<&str> = s.split([':', '-']).collect();
    parts.len() == 6 && parts.iter().all(|p| p.len() == 2 && p.chars().all(|c| c.is_ascii_hexdigit()))
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DeviceId {
    fn from(s: &str) -> Self {
        DeviceId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceNode {
    pub id: NodeId,
    pub position: Point,
    /// Radius of the circular coverage area, in meters.
    pub coverage_radius: f64,
    /// Weakest RSS the node reports, in dBm.
    pub detection_threshold: f64,
}

impl ReferenceNode {
    pub fn new(id: &str, x: f64, y: f64, coverage_radius: f64, detection_threshold: f64) -> Self {
        ReferenceNode {
            id: NodeId::from(id),
            position: Point::new(x, y),
            coverage_radius,
            detection_threshold,
        }
    }

    pub fn covers(&self, p: &Point) -> bool {
        (p - self.position).norm() <= self.coverage_radius
    }
}

/// An immutable table of reference nodes on a floor.
#[derive(Debug, Clone)]
pub struct Deployment {
    nodes: Vec<ReferenceNode>,
    floor: Rect,
    index: HashMap<NodeId, usize>,
}

impl Deployment {
    pub fn new(nodes: Vec<ReferenceNode>, floor: Rect) -> Result<Self> {
        if !floor.is_valid() {
            return Err(Error::Config(format!("invalid floor bounds {floor:?}")));
        }
        if nodes.is_empty() {
            return Err(Error::Config("deployment has no reference nodes".into()));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !(n.coverage_radius > 0.0) {
                return Err(Error::Config(format!("node {}: coverage radius must be > 0", n.id)));
            }
            if !floor.contains(&n.position) {
                return Err(Error::Config(format!("node {} lies outside the floor", n.id)));
            }
            if !n.detection_threshold.is_finite() {
                return Err(Error::Config(format!("node {}: non-finite detection threshold", n.id)));
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate node id {}", n.id)));
            }
        }
        Ok(Deployment { nodes, floor, index })
    }

    pub fn nodes(&self) -> &[ReferenceNode] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &ReferenceNode {
        &self.nodes[idx]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn floor(&self) -> &Rect {
        &self.floor
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }
}
