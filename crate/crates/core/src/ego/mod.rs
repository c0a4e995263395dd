//! Ego vehicle control: claims vehicles from the traffic kernel, senses
//! nearby traffic with polygon occlusion, reads received BSMs and drives a
//! forward collision warning controller with speed commands.

mod client;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{heading_vector, traverse_all, Polygon, Vec2};
use crate::radio::BsmPayload;
use crate::traffic::{Owner, RoadNetwork};

pub use client::{run_ego_client, EgoClientError, EgoRun};

/// Bumper gap below which the controller never accelerates, regardless of speed.
pub const STANDSTILL_GAP_M: f64 = 2.0;
/// BSM senders are assumed to have this length; the payload carries none.
pub const NOMINAL_LENGTH_M: f64 = 5.0;
/// A claimed position further than this from the route centre line is not
/// on the ego's path.
pub const LANE_TOLERANCE_M: f64 = 3.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EgoConfigError {
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoConfig {
    pub ids: Vec<String>,
    pub sensor_range: f64,
    pub ttc_threshold: f64,
    pub comfort_decel: f64,
    pub emergency_decel: f64,
    /// Free-flow acceleration scale.
    pub max_accel: f64,
    pub tls_manager: Owner,
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self {
            ids: Vec::new(),
            sensor_range: 30.0,
            ttc_threshold: 2.5,
            comfort_decel: 3.0,
            emergency_decel: 8.0,
            max_accel: 2.6,
            tls_manager: Owner::Traffic,
        }
    }
}

impl EgoConfig {
    pub fn validate(&self) -> Result<(), EgoConfigError> {
        for (name, value) in [
            ("sensor range", self.sensor_range),
            ("ttc threshold", self.ttc_threshold),
            ("comfort decel", self.comfort_decel),
            ("emergency decel", self.emergency_decel),
            ("max accel", self.max_accel),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(EgoConfigError::NotPositive { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Sensor,
    V2x,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Sensor => "sensor",
            Source::V2x => "v2x",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub target: String,
    /// Bumper-to-bumper distance along the ego's route.
    pub distance: f64,
    /// Positive when the gap is shrinking.
    pub closing_speed: f64,
    pub source: Source,
}

/// A vehicle as observed over the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct Observed {
    pub id: String,
    pub edge: String,
    /// Front bumper position along `edge`.
    pub lane_pos: f64,
    pub position: Vec2,
    pub speed: f64,
    pub heading: f64,
    pub length: f64,
}

impl Observed {
    pub fn centre(&self) -> Vec2 {
        self.position - heading_vector(self.heading).scale(self.length / 2.0)
    }
}

/// The ego's own state plus the part of its route still ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoView {
    pub vehicle: Observed,
    pub route: Vec<String>,
    pub route_index: usize,
}

impl EgoView {
    /// Distance along the route from the ego's front bumper to `lane_pos` on
    /// `edge`, if that edge lies ahead on the route.
    pub fn route_offset(&self, network: &RoadNetwork, edge: &str, lane_pos: f64) -> Option<f64> {
        let mut base = 0.0;
        for e in self.route.iter().skip(self.route_index) {
            if e == edge {
                return Some(base + lane_pos - self.vehicle.lane_pos);
            }
            base += network.edge(e)?.length;
        }
        None
    }

    /// Route offset of the point on the remaining route closest to `p`,
    /// provided it lies within [`LANE_TOLERANCE_M`] of the centre line.
    pub fn project(&self, network: &RoadNetwork, p: Vec2) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        let mut base = 0.0;
        for id in self.route.iter().skip(self.route_index) {
            let edge = network.edge(id)?;
            let shape_len: f64 = edge.shape.windows(2).map(|w| w[0].distance(w[1])).sum();
            let scale = if shape_len > 0.0 {
                edge.length / shape_len
            } else {
                0.0
            };
            let mut along = 0.0;
            for w in edge.shape.windows(2) {
                let seg = w[1] - w[0];
                let len2 = seg.dot(seg);
                let t = if len2 > 0.0 {
                    ((p - w[0]).dot(seg) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let lateral = p.distance(w[0].lerp(w[1], t));
                let offset = base + (along + t * len2.sqrt()) * scale;
                if lateral <= LANE_TOLERANCE_M && best.is_none_or(|(l, _)| lateral < l) {
                    best = Some((lateral, offset));
                }
                along += len2.sqrt();
            }
            base += edge.length;
        }
        best.map(|(_, offset)| offset - self.vehicle.lane_pos)
    }
}

/// Range sensor: vehicles ahead on the route whose centre lies within
/// `range` of the ego's centre with no building boundary in between.
pub fn sense(
    ego: &EgoView,
    others: &[Observed],
    network: &RoadNetwork,
    range: f64,
    polygons: &[Polygon],
) -> Vec<Detection> {
    if range <= 0.0 {
        return Vec::new();
    }
    let me = &ego.vehicle;
    let from = me.centre();
    let mut out = Vec::new();
    for o in others {
        if o.id == me.id {
            continue;
        }
        let to = o.centre();
        if from.distance(to) > range {
            continue;
        }
        let Some(offset) = ego.route_offset(network, &o.edge, o.lane_pos) else {
            continue;
        };
        if offset <= 0.0 || traverse_all(polygons, from, to).crossings > 0 {
            continue;
        }
        out.push(Detection {
            target: o.id.clone(),
            distance: offset - o.length,
            closing_speed: me.speed - o.speed,
            source: Source::Sensor,
        });
    }
    out
}

/// Turns received BSMs into detections using the claimed positions as-is.
pub fn v2x_detections(ego: &EgoView, inbox: &[String], network: &RoadNetwork) -> Vec<Detection> {
    let mut out = Vec::new();
    for raw in inbox {
        let Some(bsm) = BsmPayload::decode(raw) else {
            continue;
        };
        if bsm.sender == ego.vehicle.id {
            continue;
        }
        let Some(offset) = ego.project(network, bsm.position) else {
            continue;
        };
        if offset <= 0.0 {
            continue;
        }
        out.push(Detection {
            target: bsm.sender,
            distance: offset - NOMINAL_LENGTH_M,
            closing_speed: ego.vehicle.speed - bsm.speed,
            source: Source::V2x,
        });
    }
    out
}

/// Keeps the closest detection per target; sensor wins ties.
pub fn fuse(detections: impl IntoIterator<Item = Detection>) -> Vec<Detection> {
    let mut best: BTreeMap<String, Detection> = BTreeMap::new();
    for d in detections {
        match best.get(&d.target) {
            Some(b) if (b.distance, b.source) <= (d.distance, d.source) => {}
            _ => {
                best.insert(d.target.clone(), d);
            }
        }
    }
    best.into_values().collect()
}

pub fn time_to_collision(d: &Detection) -> Option<f64> {
    (d.closing_speed > 0.0).then(|| d.distance.max(0.0) / d.closing_speed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub speed: f64,
    pub ttc: Option<f64>,
    pub trigger: Option<Source>,
}

/// One FCW decision. `desired_speed` is the free-flow target.
pub fn control_step(
    speed: f64,
    detections: &[Detection],
    desired_speed: f64,
    dt: f64,
    cfg: &EgoConfig,
) -> ControlOutput {
    let mut ttc: Option<(f64, Source)> = None;
    for d in detections {
        if let Some(t) = time_to_collision(d) {
            if ttc.is_none_or(|(best, s)| (t, d.source) < (best, s)) {
                ttc = Some((t, d.source));
            }
        }
    }
    if let Some((t, source)) = ttc.filter(|(t, _)| *t < cfg.ttc_threshold) {
        return ControlOutput {
            speed: (speed - cfg.emergency_decel * dt).max(0.0),
            ttc: Some(t),
            trigger: Some(source),
        };
    }
    let zone = (2.0 * cfg.ttc_threshold * speed).max(STANDSTILL_GAP_M);
    let near = detections
        .iter()
        .filter(|d| d.distance < zone)
        .min_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.source.cmp(&b.source))
        });
    if let Some(d) = near {
        return ControlOutput {
            speed: (speed - cfg.comfort_decel * dt).max(0.0),
            ttc: ttc.map(|(t, _)| t),
            trigger: Some(d.source),
        };
    }
    let v0 = desired_speed.max(0.0);
    let accel = if v0 > 0.0 {
        cfg.max_accel * (1.0 - (speed / v0).powi(4))
    } else {
        -cfg.comfort_decel
    };
    let next = (speed + accel * dt).max(0.0);
    ControlOutput {
        speed: if speed <= v0 {
            next.min(v0)
        } else {
            next.max(v0)
        },
        ttc: ttc.map(|(t, _)| t),
        trigger: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoRow {
    pub step: u64,
    pub id: String,
    pub position: Vec2,
    pub speed: f64,
    pub commanded_speed: f64,
    pub ttc: Option<f64>,
    pub trigger: Option<Source>,
}

pub const EGO_HEADER: &str = "step,id,x,y,speed,commanded_speed,ttc,trigger_source";

pub fn render_ego(rows: &[EgoRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(EGO_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},",
            r.step, r.id, r.position.x, r.position.y, r.speed, r.commanded_speed
        );
        if let Some(t) = r.ttc {
            let _ = write!(out, "{t:.6}");
        }
        out.push(',');
        out.push_str(r.trigger.map_or("none", Source::as_str));
        out.push('\n');
    }
    out
}
