use std::fmt::Write as _;

use crate::time::Seconds;
use crate::traffic::VehicleSnapshot;

/// Who a log line is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actor {
    Client(u32),
    Server,
    Kernel,
}

impl std::fmt::Display for Actor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Actor::Client(order) => write!(f, "{order}"),
            Actor::Server => f.write_str("server"),
            Actor::Kernel => f.write_str("kernel"),
        }
    }
}

/// Formats one event line: `<time> <actor> <text>`.
pub fn event_line(now_us: u64, actor: Actor, text: &str) -> String {
    format!("{} {actor} {text}", Seconds(now_us))
}

/// One vehicle at one step of the committed world.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: u64,
    pub time_us: u64,
    pub vehicle: VehicleSnapshot,
}

pub const TRAJECTORY_HEADER: &str = "step,time_s,id,x,y,speed,edge,lane_pos,owner";

pub fn render_trajectory(rows: &[TrajectoryRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        let v = &r.vehicle;
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{},{:.6},{}",
            r.step,
            Seconds(r.time_us),
            v.id,
            v.position.x,
            v.position.y,
            v.speed,
            v.edge,
            v.lane_pos,
            v.owner.as_str()
        );
    }
    out
}
