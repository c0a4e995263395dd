use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use super::attack::AttackSpec;
use super::frame::{BsmPayload, FrameKind, RadioFrame};
use super::nodes::{NodeKind, NodeTable, RadioNode, VehicleState};
use super::propagation::{link_budget, LinkBudget, RadioParams};
use crate::geometry::{Polygon, Vec2};
use crate::scenario::{ResultStore, Rsu};
use crate::seed::{stable_hash, SeedTree};
use crate::time::{seconds_to_us, us_to_seconds, Seconds};

/// Nominal BSM interval.
pub const BEACON_INTERVAL_US: u64 = 100_000;
/// Beacon phase offsets are drawn from this many slots.
const PHASE_SLOTS: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("replay victim '{victim}' is not present at capture start {}", Seconds(*at_us))]
    UnknownVictim { victim: String, at_us: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketEvent {
    Sent,
    Received,
    Lost,
}

impl PacketEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            PacketEvent::Sent => "sent",
            PacketEvent::Received => "received",
            PacketEvent::Lost => "lost",
        }
    }
}

/// One row of the packet log.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub step: u64,
    pub time_us: u64,
    pub frame_id: u64,
    pub kind: FrameKind,
    /// Claimed sender (payload identity).
    pub sender: String,
    pub receiver: Option<String>,
    pub event: PacketEvent,
    pub budget: Option<LinkBudget>,
    pub tx_power_dbm: f64,
}

pub const PACKET_HEADER: &str = "step,time_s,frame_id,kind,sender,receiver,event,distance_m,path_loss_db,obstacle_db,rx_dbm,attack_flag";

pub fn render_packets(records: &[PacketRecord]) -> String {
    let mut out = String::with_capacity(96 * (records.len() + 1));
    out.push_str(PACKET_HEADER);
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},",
            r.step,
            Seconds(r.time_us),
            r.frame_id,
            r.kind.as_str(),
            r.sender,
            r.receiver.as_deref().unwrap_or(""),
            r.event.as_str()
        );
        match &r.budget {
            Some(b) => {
                let _ = write!(
                    out,
                    "{:.6},{:.6},{:.6},{:.6},",
                    b.distance, b.path_loss_db, b.obstacle_loss_db, b.rx_power_dbm
                );
            }
            None => out.push_str(",,,,"),
        }
        out.push_str(if r.kind.is_attack() { "1\n" } else { "0\n" });
    }
    out
}

/// Steps between beacons and the phase offset of `id` for a given step length.
pub fn beacon_schedule(id: &str, step_us: u64) -> (u64, u64) {
    let period = ((BEACON_INTERVAL_US as f64 / step_us as f64).round() as u64).max(1);
    let offset = (stable_hash(id) % PHASE_SLOTS) % period;
    (period, offset)
}

pub fn beacon_due(id: &str, step: u64, step_us: u64) -> bool {
    let (period, offset) = beacon_schedule(id, step_us);
    (step + offset).is_multiple_of(period)
}

#[derive(Debug, Clone)]
pub struct RadioConfig {
    pub params: RadioParams,
    /// When false the kernel mirrors nodes but emits nothing.
    pub enabled: bool,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            params: RadioParams::default(),
            enabled: true,
        }
    }
}

#[derive(Debug)]
enum AttackState {
    Sybil {
        start_us: u64,
        end_us: u64,
        count: u32,
        area: [f64; 4],
        label: String,
        phantoms: Vec<String>,
    },
    Replay {
        victim: String,
        capture_start_us: u64,
        capture_end_us: u64,
        delay_us: u64,
        position: Option<Vec2>,
        label: String,
        checked: bool,
        /// (due time, original frame)
        queue: Vec<(u64, RadioFrame)>,
    },
}

/// Network-side stand-in: mirrors vehicles as radio nodes, beacons, attacks
/// and computes receptions with a deterministic link budget.
#[derive(Debug)]
pub struct RadioKernel {
    config: RadioConfig,
    step_us: u64,
    nodes: NodeTable,
    polygons: Vec<Polygon>,
    attacks: Vec<AttackState>,
    seeds: SeedTree,
    next_frame_id: u64,
    packets: Vec<PacketRecord>,
    results: ResultStore,
}

impl RadioKernel {
    pub fn new(
        config: RadioConfig,
        polygons: Vec<Polygon>,
        rsus: &[Rsu],
        attacks: &[AttackSpec],
        seed: u64,
        step_us: u64,
    ) -> Self {
        let mut nodes = NodeTable::default();
        for r in rsus {
            nodes.insert_static(RadioNode {
                id: r.id.clone(),
                kind: NodeKind::Rsu,
                position: r.position,
                speed: 0.0,
                heading: 0.0,
                tx_power_dbm: config.params.tx_power_dbm,
            });
        }
        let attacks = attacks
            .iter()
            .enumerate()
            .map(|(i, a)| match a {
                AttackSpec::Sybil {
                    start,
                    end,
                    phantoms,
                    area,
                } => AttackState::Sybil {
                    start_us: seconds_to_us(*start),
                    end_us: seconds_to_us(*end),
                    count: *phantoms,
                    area: *area,
                    label: format!("attack.{i}.sybil"),
                    phantoms: Vec::new(),
                },
                AttackSpec::Replay {
                    victim,
                    capture_start,
                    capture_end,
                    delay,
                    position,
                } => AttackState::Replay {
                    victim: victim.clone(),
                    capture_start_us: seconds_to_us(*capture_start),
                    capture_end_us: seconds_to_us(*capture_end),
                    delay_us: seconds_to_us(*delay),
                    position: position.map(|p| Vec2::new(p[0], p[1])),
                    label: format!("attack.{i}.replay"),
                    checked: false,
                    queue: Vec::new(),
                },
            })
            .collect();
        let mut results = ResultStore::new();
        for name in [
            "frames_sent",
            "frames_received",
            "frames_lost",
            "attack_frames_sent",
            "sybil_frames_sent",
            "replayed_frames_sent",
        ] {
            results.set_scalar("radio", name, 0.0);
        }
        Self {
            config,
            step_us,
            nodes,
            polygons,
            attacks,
            seeds: SeedTree::new(seed),
            next_frame_id: 0,
            packets: Vec::new(),
            results,
        }
    }

    pub fn nodes(&self) -> &NodeTable {
        &self.nodes
    }

    pub fn packets(&self) -> &[PacketRecord] {
        &self.packets
    }

    pub fn results(&self) -> &ResultStore {
        &self.results
    }

    pub fn into_parts(self) -> (Vec<PacketRecord>, ResultStore) {
        (self.packets, self.results)
    }

    /// Runs one step: mirror `vehicles`, emit due frames and deliver them.
    /// Returns, per receiving vehicle, the encoded payloads it should see
    /// from the next step on.
    pub fn step(
        &mut self,
        step: u64,
        vehicles: &[VehicleState],
    ) -> Result<BTreeMap<String, Vec<String>>, RadioError> {
        let now_us = step * self.step_us;
        let tx_power = self.config.params.tx_power_dbm;
        self.nodes.sync_nodes(vehicles, tx_power);
        if !self.config.enabled {
            return Ok(BTreeMap::new());
        }
        self.update_attacks(now_us)?;
        let frames = self.schedule(step, now_us);
        let inbox = self.deliver(step, now_us, &frames);
        self.capture(&frames);
        Ok(inbox)
    }

    fn update_attacks(&mut self, now_us: u64) -> Result<(), RadioError> {
        for attack in &mut self.attacks {
            match attack {
                AttackState::Sybil {
                    start_us,
                    end_us,
                    count,
                    area,
                    label,
                    phantoms,
                } => {
                    let active = now_us >= *start_us && now_us < *end_us;
                    if active && phantoms.is_empty() {
                        let mut rng = self.seeds.stream(label);
                        for _ in 0..*count {
                            let id = loop {
                                let candidate =
                                    format!("veh{:05}", rng.random_range(0..100_000u32));
                                if self.nodes.get(&candidate).is_none() {
                                    break candidate;
                                }
                            };
                            let node = RadioNode {
                                id: id.clone(),
                                kind: NodeKind::Phantom,
                                position: Vec2::new(
                                    rng.random_range(area[0]..area[2]),
                                    rng.random_range(area[1]..area[3]),
                                ),
                                speed: rng.random_range(0.0..15.0),
                                heading: rng.random_range(0.0..360.0),
                                tx_power_dbm: self.config.params.tx_power_dbm,
                            };
                            self.nodes.insert_static(node);
                            phantoms.push(id);
                        }
                        phantoms.sort();
                    } else if !active && now_us >= *end_us && !phantoms.is_empty() {
                        for id in phantoms.drain(..) {
                            self.nodes.remove(&id);
                        }
                    }
                }
                AttackState::Replay {
                    victim,
                    capture_start_us,
                    checked,
                    ..
                } => {
                    if !*checked && now_us >= *capture_start_us {
                        *checked = true;
                        let present = self
                            .nodes
                            .get(victim)
                            .is_some_and(|n| n.kind != NodeKind::Phantom);
                        if !present {
                            return Err(RadioError::UnknownVictim {
                                victim: victim.clone(),
                                at_us: now_us,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn new_frame(&mut self, node: &RadioNode, kind: FrameKind, now_us: u64) -> RadioFrame {
        let id = self.next_frame_id;
        self.next_frame_id += 1;
        RadioFrame {
            id,
            transmitter: node.id.clone(),
            tx_position: node.position,
            kind,
            emitted_at_us: now_us,
            tx_power_dbm: node.tx_power_dbm,
            payload: BsmPayload {
                sender: node.id.clone(),
                timestamp_us: now_us,
                position: node.position,
                speed: node.speed,
                heading: node.heading,
            },
        }
    }

    fn schedule(&mut self, step: u64, now_us: u64) -> Vec<RadioFrame> {
        let step_us = self.step_us;
        let due: Vec<RadioNode> = self
            .nodes
            .iter()
            .filter(|n| beacon_due(&n.id, step, step_us))
            .cloned()
            .collect();
        let mut frames = Vec::new();
        // honest beacons first, then phantoms, in node id order
        for node in due.iter().filter(|n| n.kind != NodeKind::Phantom) {
            frames.push(self.new_frame(node, FrameKind::Bsm, now_us));
        }
        for node in due.iter().filter(|n| n.kind == NodeKind::Phantom) {
            frames.push(self.new_frame(node, FrameKind::Sybil, now_us));
        }
        let mut replays = Vec::new();
        for attack in &mut self.attacks {
            if let AttackState::Replay {
                queue,
                position,
                label,
                ..
            } = attack
            {
                let (ready, later): (Vec<_>, Vec<_>) = std::mem::take(queue)
                    .into_iter()
                    .partition(|(due, _)| *due <= now_us);
                *queue = later;
                for (_, original) in ready {
                    replays.push((label.clone(), *position, original));
                }
            }
        }
        for (label, position, original) in replays {
            let id = self.next_frame_id;
            self.next_frame_id += 1;
            frames.push(RadioFrame {
                id,
                transmitter: label,
                tx_position: position.unwrap_or(original.tx_position),
                kind: FrameKind::Replayed,
                emitted_at_us: now_us,
                tx_power_dbm: original.tx_power_dbm,
                payload: original.payload,
            });
        }
        frames
    }

    fn deliver(
        &mut self,
        step: u64,
        now_us: u64,
        frames: &[RadioFrame],
    ) -> BTreeMap<String, Vec<String>> {
        let params = self.config.params;
        let mut inbox: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut received = 0u64;
        let mut lost = 0u64;
        for f in frames {
            self.packets.push(PacketRecord {
                step,
                time_us: now_us,
                frame_id: f.id,
                kind: f.kind,
                sender: f.payload.sender.clone(),
                receiver: None,
                event: PacketEvent::Sent,
                budget: None,
                tx_power_dbm: f.tx_power_dbm,
            });
            let encoded = f.payload.encode();
            for node in self.nodes.iter() {
                if node.kind == NodeKind::Phantom
                    || node.id == f.transmitter
                    || node.id == f.payload.sender
                {
                    continue;
                }
                let budget = link_budget(
                    f.tx_position,
                    node.position,
                    f.tx_power_dbm,
                    &self.polygons,
                    &params,
                );
                let ok = budget.received(&params);
                if ok {
                    received += 1;
                    if node.kind == NodeKind::Vehicle {
                        inbox
                            .entry(node.id.clone())
                            .or_default()
                            .push(encoded.clone());
                    }
                } else {
                    lost += 1;
                }
                self.packets.push(PacketRecord {
                    step,
                    time_us: now_us,
                    frame_id: f.id,
                    kind: f.kind,
                    sender: f.payload.sender.clone(),
                    receiver: Some(node.id.clone()),
                    event: if ok {
                        PacketEvent::Received
                    } else {
                        PacketEvent::Lost
                    },
                    budget: Some(budget),
                    tx_power_dbm: f.tx_power_dbm,
                });
            }
        }
        let attack = frames.iter().filter(|f| f.kind.is_attack()).count() as f64;
        let sybil = frames.iter().filter(|f| f.kind == FrameKind::Sybil).count() as f64;
        let replayed = frames
            .iter()
            .filter(|f| f.kind == FrameKind::Replayed)
            .count() as f64;
        let r = &mut self.results;
        r.add_scalar("radio", "frames_sent", frames.len() as f64);
        r.add_scalar("radio", "frames_received", received as f64);
        r.add_scalar("radio", "frames_lost", lost as f64);
        r.add_scalar("radio", "attack_frames_sent", attack);
        r.add_scalar("radio", "sybil_frames_sent", sybil);
        r.add_scalar("radio", "replayed_frames_sent", replayed);
        let _ = r.record(
            "radio",
            "receptions",
            us_to_seconds(now_us),
            received as f64,
        );
        inbox
    }

    fn capture(&mut self, frames: &[RadioFrame]) {
        for attack in &mut self.attacks {
            if let AttackState::Replay {
                victim,
                capture_start_us,
                capture_end_us,
                delay_us,
                queue,
                ..
            } = attack
            {
                for f in frames {
                    if f.kind == FrameKind::Bsm
                        && f.transmitter == *victim
                        && f.emitted_at_us >= *capture_start_us
                        && f.emitted_at_us <= *capture_end_us
                    {
                        // replays go out on the first step boundary at or after the delay
                        let due = f.emitted_at_us + *delay_us;
                        let due = due.div_ceil(self.step_us) * self.step_us;
                        queue.push((due, f.clone()));
                    }
                }
            }
        }
    }
}
