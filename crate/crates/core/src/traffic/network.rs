use std::collections::BTreeMap;

use crate::geometry::{heading_deg, Vec2};
use crate::scenario::ScenarioError;

#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub id: String,
    pub position: Vec2,
}

/// Single-lane directed road segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Driving length in metres.
    pub length: f64,
    pub speed_limit: f64,
    /// Centre line; at least two points. Positions are scaled so that
    /// `lane_pos = length` maps to the last point.
    pub shape: Vec<Vec2>,
    /// Whether the shape came from the file (vs. derived from junctions).
    pub explicit_shape: bool,
}

impl Edge {
    fn shape_length(&self) -> f64 {
        self.shape.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Point and heading at `lane_pos` metres from the edge start.
    pub fn locate(&self, lane_pos: f64) -> (Vec2, f64) {
        let shape_len = self.shape_length();
        let mut remaining = (lane_pos.clamp(0.0, self.length) / self.length) * shape_len;
        let segments = self.shape.len() - 1;
        for (i, w) in self.shape.windows(2).enumerate() {
            let seg = w[0].distance(w[1]);
            if remaining <= seg || i + 1 == segments {
                let t = if seg > 0.0 {
                    (remaining / seg).min(1.0)
                } else {
                    0.0
                };
                return (w[0].lerp(w[1], t), heading_deg(w[1] - w[0]));
            }
            remaining -= seg;
        }
        (self.shape[0], 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub from: String,
    pub to: String,
    /// Controlling signal program and index into its state string.
    pub signal: Option<(String, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadNetwork {
    edges: BTreeMap<String, Edge>,
    junctions: BTreeMap<String, Junction>,
    connections: Vec<Connection>,
}

impl RoadNetwork {
    /// Validates referential integrity and fills in derived edge shapes.
    pub fn new(
        junctions: Vec<Junction>,
        edges: Vec<Edge>,
        connections: Vec<Connection>,
    ) -> Result<Self, ScenarioError> {
        let mut net = RoadNetwork::default();
        for j in junctions {
            if net.junctions.contains_key(&j.id) {
                return Err(ScenarioError::schema(format!(
                    "duplicate junction '{}'",
                    j.id
                )));
            }
            net.junctions.insert(j.id.clone(), j);
        }
        for mut e in edges {
            let from = net.junctions.get(&e.from).ok_or_else(|| {
                ScenarioError::dangling(format!("edge '{}' references junction '{}'", e.id, e.from))
            })?;
            let to = net.junctions.get(&e.to).ok_or_else(|| {
                ScenarioError::dangling(format!("edge '{}' references junction '{}'", e.id, e.to))
            })?;
            if e.shape.len() < 2 {
                e.shape = vec![from.position, to.position];
                e.explicit_shape = false;
            }
            if e.length.is_nan() || e.length <= 0.0 {
                let derived = e.shape_length();
                if derived <= 0.0 {
                    return Err(ScenarioError::schema(format!(
                        "edge '{}' has non-positive length",
                        e.id
                    )));
                }
                e.length = derived;
            }
            if !(e.speed_limit > 0.0 && e.speed_limit.is_finite()) {
                return Err(ScenarioError::schema(format!(
                    "edge '{}' has non-positive speed limit",
                    e.id
                )));
            }
            if net.edges.contains_key(&e.id) {
                return Err(ScenarioError::schema(format!("duplicate edge '{}'", e.id)));
            }
            net.edges.insert(e.id.clone(), e);
        }
        for c in &connections {
            for end in [&c.from, &c.to] {
                if !net.edges.contains_key(end) {
                    return Err(ScenarioError::dangling(format!(
                        "connection {} -> {} references edge '{}'",
                        c.from, c.to, end
                    )));
                }
            }
        }
        net.connections = connections;
        Ok(net)
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.get(id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn junctions(&self) -> impl Iterator<Item = &Junction> {
        self.junctions.values()
    }

    pub fn junction(&self, id: &str) -> Option<&Junction> {
        self.junctions.get(id)
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn junction_count(&self) -> usize {
        self.junctions.len()
    }

    pub fn connection(&self, from: &str, to: &str) -> Option<&Connection> {
        self.connections
            .iter()
            .find(|c| c.from == from && c.to == to)
    }

    /// Consecutive edges are drivable either through an explicit connection
    /// or because they meet at a junction.
    pub fn is_connected(&self, from: &str, to: &str) -> bool {
        if self.connection(from, to).is_some() {
            return true;
        }
        match (self.edges.get(from), self.edges.get(to)) {
            (Some(a), Some(b)) => a.to == b.from,
            _ => false,
        }
    }

    /// Signal-controlled connections per program id.
    pub fn controlled_links(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut links: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for c in &self.connections {
            if let Some((tls, idx)) = &c.signal {
                links.entry(tls.as_str()).or_default().push(*idx);
            }
        }
        links
    }

    /// World position and heading of a point on a route.
    pub fn locate(&self, edge: &str, lane_pos: f64) -> Option<(Vec2, f64)> {
        self.edges.get(edge).map(|e| e.locate(lane_pos))
    }
}
