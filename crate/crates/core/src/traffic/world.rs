use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use super::models::{idm_acceleration, krauss_safe_speed, EMERGENCY_DECEL};
use super::tls::{Signal, TlsError, TlsSlot, TrafficLightProgram};
use super::{CarFollowModel, Owner, RoadNetwork, VehicleDemand, VehicleType};
use crate::geometry::Vec2;
use crate::time::{seconds_to_us, us_to_seconds, SimClock};

/// How far ahead along its route a vehicle looks for leaders and stop lines.
const LOOKAHEAD_M: f64 = 500.0;
/// Minimum free length at the start of an edge before insertion.
const MIN_INSERT_CLEARANCE_M: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: String,
    pub route: Vec<String>,
    pub route_index: usize,
    /// Front bumper, metres from the start of the current edge.
    pub lane_pos: f64,
    pub speed: f64,
    pub owner: Owner,
    pub vtype: VehicleType,
}

impl Vehicle {
    pub fn edge(&self) -> &str {
        &self.route[self.route_index]
    }
}

/// Read-only view of a vehicle, positioned in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSnapshot {
    pub id: String,
    pub edge: String,
    pub route_index: usize,
    pub lane_pos: f64,
    pub speed: f64,
    pub position: Vec2,
    pub heading: f64,
    pub length: f64,
    pub owner: Owner,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelEvent {
    Inserted {
        id: String,
    },
    Arrived {
        id: String,
    },
    Collision {
        follower: String,
        leader: String,
        gap: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("unknown vehicle '{0}'")]
    UnknownVehicle(String),
    #[error("vehicle '{0}' is not controlled by the ego client")]
    NotOwner(String),
    #[error("route of '{vehicle}' references unknown edge '{edge}'")]
    UnknownEdge { vehicle: String, edge: String },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("step length mismatch: clock step {expected} us, requested {got} us")]
    StepMismatch { expected: u64, got: u64 },
    #[error(transparent)]
    Tls(#[from] TlsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderInfo<'a> {
    pub id: &'a str,
    /// Bumper-to-bumper gap in metres.
    pub gap: f64,
    pub speed: f64,
}

struct Obstacles<'a> {
    leader: Option<LeaderInfo<'a>>,
    /// Distance to a stop line the vehicle must halt at.
    stop_line: Option<f64>,
}

/// Vehicles whose ownership changed (or will, once inserted).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClaimReceipt {
    pub claimed: Vec<String>,
    pub pending: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct World {
    network: Arc<RoadNetwork>,
    clock: SimClock,
    vehicles: BTreeMap<String, Vehicle>,
    pending: Vec<(u64, VehicleDemand)>,
    pending_claims: BTreeSet<String>,
    signals: BTreeMap<String, TlsSlot>,
    colliding: BTreeSet<(String, String)>,
    min_gaps: BTreeMap<String, f64>,
    inserted: u64,
    arrived: u64,
    collisions: u64,
}

impl World {
    pub fn new(
        network: Arc<RoadNetwork>,
        mut demand: Vec<VehicleDemand>,
        programs: Vec<TrafficLightProgram>,
        step_us: u32,
    ) -> Result<Self, KernelError> {
        if step_us == 0 {
            return Err(KernelError::InvalidValue(
                "step length must be positive".into(),
            ));
        }
        for d in &demand {
            if d.route.is_empty() {
                return Err(KernelError::InvalidValue(format!(
                    "vehicle '{}' has an empty route",
                    d.id
                )));
            }
            for e in &d.route {
                if network.edge(e).is_none() {
                    return Err(KernelError::UnknownEdge {
                        vehicle: d.id.clone(),
                        edge: e.clone(),
                    });
                }
            }
        }
        demand.sort_by(|a, b| a.depart.total_cmp(&b.depart));
        Ok(Self {
            network,
            clock: SimClock::new(step_us),
            vehicles: BTreeMap::new(),
            pending: demand
                .into_iter()
                .map(|d| (seconds_to_us(d.depart), d))
                .collect(),
            pending_claims: BTreeSet::new(),
            signals: programs
                .into_iter()
                .map(|p| (p.id.clone(), TlsSlot::new(p)))
                .collect(),
            colliding: BTreeSet::new(),
            min_gaps: BTreeMap::new(),
            inserted: 0,
            arrived: 0,
            collisions: 0,
        })
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.network
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn now_us(&self) -> u64 {
        self.clock.now_us()
    }

    pub fn vehicle(&self, id: &str) -> Option<&Vehicle> {
        self.vehicles.get(id)
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.vehicles.values()
    }

    pub fn vehicle_ids(&self) -> Vec<String> {
        self.vehicles.keys().cloned().collect()
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn arrived(&self) -> u64 {
        self.arrived
    }

    pub fn collisions(&self) -> u64 {
        self.collisions
    }

    /// Smallest bumper gap each vehicle has had to its leader after any step.
    pub fn min_gaps(&self) -> &BTreeMap<String, f64> {
        &self.min_gaps
    }

    /// Present in the world or still waiting to depart.
    pub fn is_known_vehicle(&self, id: &str) -> bool {
        self.vehicles.contains_key(id) || self.pending.iter().any(|(_, d)| d.id == id)
    }

    pub fn snapshot(&self, id: &str) -> Option<VehicleSnapshot> {
        let v = self.vehicles.get(id)?;
        let (position, heading) = self
            .network
            .locate(v.edge(), v.lane_pos)
            .expect("routes are validated against the network");
        Some(VehicleSnapshot {
            id: v.id.clone(),
            edge: v.edge().to_string(),
            route_index: v.route_index,
            lane_pos: v.lane_pos,
            speed: v.speed,
            position,
            heading,
            length: v.vtype.length,
            owner: v.owner,
        })
    }

    pub fn snapshots(&self) -> Vec<VehicleSnapshot> {
        self.vehicles
            .keys()
            .filter_map(|id| self.snapshot(id))
            .collect()
    }

    pub fn tls_ids(&self) -> Vec<String> {
        self.signals.keys().cloned().collect()
    }

    pub fn tls_state(&self, id: &str) -> Option<&str> {
        self.signals.get(id).map(|s| s.current(self.clock.now_us()))
    }

    pub fn tls_owner(&self, id: &str) -> Option<Owner> {
        self.signals.get(id).map(|s| s.program.owner)
    }

    pub fn set_tls_owner(&mut self, owner: Owner) {
        for slot in self.signals.values_mut() {
            slot.program.owner = owner;
        }
    }

    pub fn set_tls_state(&mut self, id: &str, state: &str) -> Result<(), KernelError> {
        let slot = self
            .signals
            .get_mut(id)
            .ok_or_else(|| TlsError::UnknownProgram(id.to_string()))?;
        slot.set_state(state)?;
        Ok(())
    }

    /// Signal facing a vehicle leaving `from` towards `to`.
    fn signal_between(&self, from: &str, to: &str) -> Option<Signal> {
        let conn = self.network.connection(from, to)?;
        let (tls, idx) = conn.signal.as_ref()?;
        let state = self.tls_state(tls)?;
        state.chars().nth(*idx).and_then(Signal::from_char)
    }

    /// Transfers control of `ids` to the ego client. Vehicles not yet
    /// inserted are claimed on insertion.
    pub fn claim_vehicles(&mut self, ids: &[String]) -> Result<ClaimReceipt, KernelError> {
        for id in ids {
            if !self.is_known_vehicle(id) {
                return Err(KernelError::UnknownVehicle(id.clone()));
            }
        }
        let mut receipt = ClaimReceipt::default();
        for id in ids {
            if let Some(v) = self.vehicles.get_mut(id) {
                v.owner = Owner::Ego;
                receipt.claimed.push(id.clone());
            } else {
                self.pending_claims.insert(id.clone());
                receipt.pending.push(id.clone());
            }
        }
        Ok(receipt)
    }

    pub fn set_speed(&mut self, id: &str, speed: f64) -> Result<(), KernelError> {
        if !(speed >= 0.0 && speed.is_finite()) {
            return Err(KernelError::InvalidValue(format!("speed {speed}")));
        }
        let v = self
            .vehicles
            .get_mut(id)
            .ok_or_else(|| KernelError::UnknownVehicle(id.to_string()))?;
        v.speed = speed;
        Ok(())
    }

    /// Moves an ego-owned vehicle to `lane_pos` on its current edge; values past
    /// the edge end carry over onto the following route edges.
    pub fn set_lane_position(
        &mut self,
        id: &str,
        lane_pos: f64,
    ) -> Result<Option<KernelEvent>, KernelError> {
        if !(lane_pos >= 0.0 && lane_pos.is_finite()) {
            return Err(KernelError::InvalidValue(format!(
                "lane position {lane_pos}"
            )));
        }
        let network = Arc::clone(&self.network);
        let v = self
            .vehicles
            .get_mut(id)
            .ok_or_else(|| KernelError::UnknownVehicle(id.to_string()))?;
        if v.owner != Owner::Ego {
            return Err(KernelError::NotOwner(id.to_string()));
        }
        v.lane_pos = lane_pos;
        if advance_along_route(v, &network) {
            self.vehicles.remove(id);
            self.arrived += 1;
            return Ok(Some(KernelEvent::Arrived { id: id.to_string() }));
        }
        Ok(None)
    }

    /// Places a vehicle directly, bypassing demand and the insertion rule.
    pub fn spawn(
        &mut self,
        demand: VehicleDemand,
        route_index: usize,
        lane_pos: f64,
        speed: f64,
        owner: Owner,
    ) -> Result<(), KernelError> {
        if route_index >= demand.route.len() {
            return Err(KernelError::InvalidValue(format!(
                "route index {route_index}"
            )));
        }
        for e in &demand.route {
            if self.network.edge(e).is_none() {
                return Err(KernelError::UnknownEdge {
                    vehicle: demand.id.clone(),
                    edge: e.clone(),
                });
            }
        }
        self.vehicles.insert(
            demand.id.clone(),
            Vehicle {
                id: demand.id,
                route: demand.route,
                route_index,
                lane_pos,
                speed,
                owner,
                vtype: demand.vtype,
            },
        );
        self.inserted += 1;
        Ok(())
    }

    /// Inserts every due vehicle whose first edge has free space at its start.
    pub fn insert_vehicles(&mut self) -> Vec<KernelEvent> {
        let now = self.clock.now_us();
        let mut events = Vec::new();
        let mut still_pending = Vec::with_capacity(self.pending.len());
        for (depart_us, d) in std::mem::take(&mut self.pending) {
            if depart_us > now {
                still_pending.push((depart_us, d));
                continue;
            }
            let first = &d.route[0];
            let clearance = (d.vtype.length + d.vtype.min_gap).max(MIN_INSERT_CLEARANCE_M);
            let blocked = self
                .vehicles
                .values()
                .any(|v| v.edge() == first && v.lane_pos - v.vtype.length < clearance);
            if blocked {
                still_pending.push((depart_us, d));
                continue;
            }
            let owner = if self.pending_claims.remove(&d.id) {
                Owner::Ego
            } else {
                Owner::Traffic
            };
            events.push(KernelEvent::Inserted { id: d.id.clone() });
            self.vehicles.insert(
                d.id.clone(),
                Vehicle {
                    id: d.id,
                    route: d.route,
                    route_index: 0,
                    lane_pos: 0.0,
                    speed: 0.0,
                    owner,
                    vtype: d.vtype,
                },
            );
            self.inserted += 1;
        }
        self.pending = still_pending;
        events
    }

    /// Closest vehicle ahead along the route of `id`.
    pub fn leader(&self, id: &str) -> Option<LeaderInfo<'_>> {
        self.obstacles(id, false).leader
    }

    fn obstacles(&self, id: &str, with_signals: bool) -> Obstacles<'_> {
        let me = &self.vehicles[id];
        let edge = me.edge();
        let mut leader: Option<LeaderInfo<'_>> = None;
        for other in self.vehicles.values() {
            if other.id == me.id || other.edge() != edge {
                continue;
            }
            let ahead =
                other.lane_pos > me.lane_pos || (other.lane_pos == me.lane_pos && other.id > me.id);
            if !ahead {
                continue;
            }
            let gap = other.lane_pos - other.vtype.length - me.lane_pos;
            if leader.is_none_or(|l| gap < l.gap) {
                leader = Some(LeaderInfo {
                    id: &other.id,
                    gap,
                    speed: other.speed,
                });
            }
        }

        let mut stop_line = None;
        let mut dist = self.network.edge(edge).map_or(0.0, |e| e.length) - me.lane_pos;
        let mut idx = me.route_index;
        while idx + 1 < me.route.len() && dist < LOOKAHEAD_M {
            if leader.is_some() && (stop_line.is_some() || !with_signals) {
                break;
            }
            let (cur, next) = (&me.route[idx], &me.route[idx + 1]);
            if with_signals && stop_line.is_none() {
                match self.signal_between(cur, next) {
                    Some(Signal::Red) => stop_line = Some(dist),
                    Some(Signal::Yellow) => {
                        let needed = if dist > 0.0 {
                            me.speed * me.speed / (2.0 * dist)
                        } else if me.speed == 0.0 {
                            0.0
                        } else {
                            f64::INFINITY
                        };
                        if needed <= me.vtype.decel {
                            stop_line = Some(dist);
                        }
                    }
                    _ => {}
                }
            }
            if leader.is_none() {
                let mut best: Option<LeaderInfo<'_>> = None;
                for other in self.vehicles.values() {
                    if other.id != me.id && other.edge() == next.as_str() {
                        let gap = dist + other.lane_pos - other.vtype.length;
                        if best.is_none_or(|b| gap < b.gap) {
                            best = Some(LeaderInfo {
                                id: &other.id,
                                gap,
                                speed: other.speed,
                            });
                        }
                    }
                }
                leader = best;
            }
            dist += self.network.edge(next).map_or(0.0, |e| e.length);
            idx += 1;
        }
        Obstacles { leader, stop_line }
    }

    fn next_speed(&self, id: &str, dt: f64) -> f64 {
        let v = &self.vehicles[id];
        let t = &v.vtype;
        let edge_limit = self
            .network
            .edge(v.edge())
            .map_or(t.max_speed, |e| e.speed_limit);
        let limit = edge_limit.min(t.max_speed);
        let obstacles = self.obstacles(id, true);
        match t.model {
            CarFollowModel::Krauss => {
                let mut speed = (v.speed + t.accel * dt).min(limit);
                if let Some(l) = obstacles.leader {
                    let gap = (l.gap - t.min_gap).max(0.0);
                    speed = speed.min(krauss_safe_speed(v.speed, l.speed, gap, t.tau, t.decel));
                }
                if let Some(d) = obstacles.stop_line {
                    speed = speed.min(krauss_safe_speed(v.speed, 0.0, d.max(0.0), t.tau, t.decel));
                }
                speed.max(0.0)
            }
            CarFollowModel::Idm => {
                let p = t.idm_params(edge_limit);
                let idm = |approach: f64, gap: f64| {
                    idm_acceleration(v.speed, approach, gap, &p).unwrap_or(-EMERGENCY_DECEL)
                };
                let mut acc = match obstacles.leader {
                    Some(l) => idm(v.speed - l.speed, l.gap),
                    None => idm(0.0, f64::INFINITY),
                };
                if let Some(d) = obstacles.stop_line {
                    acc = acc.min(idm(v.speed, d));
                }
                (v.speed + acc * dt).clamp(0.0, limit.max(v.speed))
            }
        }
    }

    /// Advances the world by one step of `dt_us`, which must equal the clock step.
    pub fn step_world(&mut self, dt_us: u64) -> Result<Vec<KernelEvent>, KernelError> {
        let expected = u64::from(self.clock.step_us());
        if dt_us != expected {
            return Err(KernelError::StepMismatch {
                expected,
                got: dt_us,
            });
        }
        let dt = us_to_seconds(dt_us);
        let mut events = Vec::new();
        let network = Arc::clone(&self.network);

        let ids: Vec<String> = self.vehicles.keys().cloned().collect();
        for id in &ids {
            if self.vehicles[id].owner == Owner::Ego {
                continue;
            }
            let speed = self.next_speed(id, dt);
            let v = self.vehicles.get_mut(id).unwrap();
            v.speed = speed;
            v.lane_pos += speed * dt;
            if advance_along_route(v, &network) {
                self.vehicles.remove(id);
                self.arrived += 1;
                events.push(KernelEvent::Arrived { id: id.clone() });
            }
        }

        self.check_gaps(&mut events);
        self.clock.advance();
        events.extend(self.insert_vehicles());
        Ok(events)
    }

    fn check_gaps(&mut self, events: &mut Vec<KernelEvent>) {
        let mut now_colliding = BTreeSet::new();
        let mut gaps = Vec::new();
        for id in self.vehicles.keys() {
            if let Some(l) = self.obstacles(id, false).leader {
                gaps.push((id.clone(), l.id.to_string(), l.gap));
            }
        }
        for (follower, leader, gap) in gaps {
            let entry = self.min_gaps.entry(follower.clone()).or_insert(gap);
            *entry = entry.min(gap);
            if gap < 0.0 {
                let pair = (follower, leader);
                if !self.colliding.contains(&pair) {
                    self.collisions += 1;
                    events.push(KernelEvent::Collision {
                        follower: pair.0.clone(),
                        leader: pair.1.clone(),
                        gap,
                    });
                }
                now_colliding.insert(pair);
            }
        }
        self.colliding = now_colliding;
    }
}

/// Rolls `lane_pos` overflow onto subsequent route edges. Returns true once
/// the front passes the end of the final edge.
fn advance_along_route(v: &mut Vehicle, network: &RoadNetwork) -> bool {
    loop {
        let len = network.edge(v.edge()).map_or(0.0, |e| e.length);
        let last = v.route_index + 1 == v.route.len();
        if last {
            return v.lane_pos >= len;
        }
        if v.lane_pos <= len {
            return false;
        }
        v.lane_pos -= len;
        v.route_index += 1;
    }
}
