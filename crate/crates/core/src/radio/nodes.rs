use std::collections::BTreeMap;

use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeKind {
    Vehicle,
    Rsu,
    Phantom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioNode {
    pub id: String,
    pub kind: NodeKind,
    pub position: Vec2,
    pub speed: f64,
    pub heading: f64,
    pub tx_power_dbm: f64,
}

/// True kinematic state of a vehicle as read from the traffic side.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: String,
    pub position: Vec2,
    pub speed: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeDiff {
    pub created: Vec<String>,
    pub moved: Vec<String>,
    pub retired: Vec<String>,
}

impl NodeDiff {
    pub fn is_empty(&self) -> bool {
        self.created.is_empty() && self.moved.is_empty() && self.retired.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct NodeTable {
    nodes: BTreeMap<String, RadioNode>,
}

impl NodeTable {
    pub fn get(&self, id: &str) -> Option<&RadioNode> {
        self.nodes.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RadioNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn insert_static(&mut self, node: RadioNode) {
        self.nodes.insert(node.id.clone(), node);
    }

    pub fn remove(&mut self, id: &str) -> Option<RadioNode> {
        self.nodes.remove(id)
    }

    /// Mirrors the vehicle set: vehicle nodes exist exactly for the given
    /// vehicles. RSU and phantom nodes are left alone.
    pub fn sync_nodes(&mut self, vehicles: &[VehicleState], tx_power_dbm: f64) -> NodeDiff {
        let mut diff = NodeDiff::default();
        let present: std::collections::BTreeSet<&str> =
            vehicles.iter().map(|v| v.id.as_str()).collect();
        let stale: Vec<String> = self
            .nodes
            .values()
            .filter(|n| n.kind == NodeKind::Vehicle && !present.contains(n.id.as_str()))
            .map(|n| n.id.clone())
            .collect();
        for id in stale {
            self.nodes.remove(&id);
            diff.retired.push(id);
        }
        for v in vehicles {
            match self.nodes.get_mut(&v.id) {
                Some(n) if n.kind == NodeKind::Vehicle => {
                    if n.position != v.position || n.speed != v.speed || n.heading != v.heading {
                        n.position = v.position;
                        n.speed = v.speed;
                        n.heading = v.heading;
                        diff.moved.push(v.id.clone());
                    }
                }
                // id collides with a static node; the static node wins
                Some(_) => {}
                None => {
                    self.nodes.insert(
                        v.id.clone(),
                        RadioNode {
                            id: v.id.clone(),
                            kind: NodeKind::Vehicle,
                            position: v.position,
                            speed: v.speed,
                            heading: v.heading,
                            tx_power_dbm,
                        },
                    );
                    diff.created.push(v.id.clone());
                }
            }
        }
        diff.moved.sort();
        diff.created.sort();
        diff
    }
}
