use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::sync::Arc;

use thiserror::Error;

use super::{control_step, fuse, sense, v2x_detections, EgoConfig, EgoRow, EgoView, Observed};
use crate::geometry::{Polygon, Vec2};
use crate::traffic::RoadNetwork;
use crate::wire::{var, ClientSession, Command, SessionError, TypedValue, VariableValue};

#[derive(Debug, Error)]
pub enum EgoClientError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("unexpected reply for vehicle '{id}': {detail}")]
    BadReply { id: String, detail: String },
}

#[derive(Debug, Default)]
pub struct EgoRun {
    pub rows: Vec<EgoRow>,
    pub steps: u64,
}

const PER_VEHICLE: [u8; 6] = [
    var::POSITION,
    var::SPEED,
    var::ANGLE,
    var::LENGTH,
    var::ROAD_ID,
    var::LANE_POSITION,
];
const PER_EGO: [u8; 3] = [var::EDGES, var::ROUTE_INDEX, var::V2X_INBOX];

fn bad(id: &str, detail: impl Into<String>) -> EgoClientError {
    EgoClientError::BadReply {
        id: id.to_string(),
        detail: detail.into(),
    }
}

fn observed(id: &str, v: &[VariableValue]) -> Result<Observed, EgoClientError> {
    let TypedValue::Position2D(x, y) = v[0].value else {
        return Err(bad(id, "position is not a 2D position"));
    };
    let num = |i: usize, what: &str| {
        v[i].value
            .as_f64()
            .ok_or_else(|| bad(id, format!("{what} is not a number")))
    };
    Ok(Observed {
        id: id.to_string(),
        position: Vec2::new(x, y),
        speed: num(1, "speed")?,
        heading: num(2, "angle")?,
        length: num(3, "length")?,
        edge: v[4]
            .value
            .as_str()
            .ok_or_else(|| bad(id, "road id is not a string"))?
            .to_string(),
        lane_pos: num(5, "lane position")?,
    })
}

fn string_list(id: &str, v: &VariableValue) -> Result<Vec<String>, EgoClientError> {
    match &v.value {
        TypedValue::StringList(items) => Ok(items.clone()),
        other => Err(bad(id, format!("expected a string list, got {other:?}"))),
    }
}

/// Runs the ego controller as a coordinator client until the server ends the
/// run. Claimed vehicles are moved exclusively by this client.
pub fn run_ego_client<S: Read + Write>(
    mut session: ClientSession<S>,
    cfg: &EgoConfig,
    network: Arc<RoadNetwork>,
    polygons: &[Polygon],
    step_s: f64,
) -> Result<EgoRun, EgoClientError> {
    let mut run = EgoRun::default();
    let claimed: BTreeSet<&str> = cfg.ids.iter().map(String::as_str).collect();
    let mut claim: Vec<Command> = claimed
        .iter()
        .map(|id| Command::set_vehicle(var::CLAIM, *id, TypedValue::UByte(1)))
        .collect();
    loop {
        let result = (|| {
            let ids = session.vehicle_ids()?;
            let egos: Vec<&String> = ids
                .iter()
                .filter(|id| claimed.contains(id.as_str()))
                .collect();
            let mut batch = Vec::new();
            for id in &ids {
                batch.extend(
                    PER_VEHICLE
                        .iter()
                        .map(|&v| Command::get_vehicle(v, id.as_str())),
                );
            }
            for id in &egos {
                batch.extend(
                    PER_EGO
                        .iter()
                        .map(|&v| Command::get_vehicle(v, id.as_str())),
                );
            }
            let values = if batch.is_empty() {
                Vec::new()
            } else {
                session.exchange_checked(&batch)?
            };
            if values.len() != batch.len() {
                return Err(bad(
                    "",
                    format!("expected {} values, got {}", batch.len(), values.len()),
                ));
            }
            let (vehicle_values, ego_values) = values.split_at(ids.len() * PER_VEHICLE.len());
            let others = ids
                .iter()
                .zip(vehicle_values.chunks_exact(PER_VEHICLE.len()))
                .map(|(id, v)| observed(id, v))
                .collect::<Result<Vec<_>, _>>()?;

            let mut writes = std::mem::take(&mut claim);
            for (id, v) in egos.iter().zip(ego_values.chunks_exact(PER_EGO.len())) {
                let me = others
                    .iter()
                    .find(|o| &o.id == *id)
                    .expect("ego is in the id list");
                let route = string_list(id, &v[0])?;
                let route_index = match v[1].value {
                    TypedValue::Int(i) if i >= 0 => i as usize,
                    ref other => return Err(bad(id, format!("route index {other:?}"))),
                };
                let inbox = string_list(id, &v[2])?;
                let view = EgoView {
                    vehicle: me.clone(),
                    route,
                    route_index,
                };
                let mut detections = sense(&view, &others, &network, cfg.sensor_range, polygons);
                detections.extend(v2x_detections(&view, &inbox, &network));
                let detections = fuse(detections);
                let desired = network.edge(&me.edge).map_or(0.0, |e| e.speed_limit);
                let out = control_step(me.speed, &detections, desired, step_s, cfg);
                run.rows.push(EgoRow {
                    step: run.steps,
                    id: me.id.clone(),
                    position: me.position,
                    speed: me.speed,
                    commanded_speed: out.speed,
                    ttc: out.ttc,
                    trigger: out.trigger,
                });
                writes.push(Command::set_vehicle(
                    var::SPEED,
                    id.as_str(),
                    TypedValue::Double(out.speed),
                ));
                writes.push(Command::set_vehicle(
                    var::LANE_POSITION,
                    id.as_str(),
                    TypedValue::Double(me.lane_pos + out.speed * step_s),
                ));
            }
            writes.push(Command::SimStep(0.0));
            session.exchange_checked(&writes)?;
            Ok(())
        })();
        match result {
            Ok(()) => run.steps += 1,
            Err(EgoClientError::Session(SessionError::Closed)) => return Ok(run),
            Err(e) => return Err(e),
        }
    }
}
