use std::io::{Read, Write};

use thiserror::Error;

use super::kernel::{RadioError, RadioKernel};
use super::nodes::VehicleState;
use crate::geometry::Vec2;
use crate::wire::{var, ClientSession, Command, SessionError, TypedValue};

#[derive(Debug, Error)]
pub enum RadioClientError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error("unexpected reply for vehicle '{id}': {detail}")]
    BadReply { id: String, detail: String },
}

/// Reads the kinematic state of every vehicle in one batch.
pub fn read_vehicle_states<S: Read + Write>(
    session: &mut ClientSession<S>,
) -> Result<Vec<VehicleState>, RadioClientError> {
    let ids = session.vehicle_ids()?;
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let mut batch = Vec::with_capacity(ids.len() * 3);
    for id in &ids {
        batch.push(Command::get_vehicle(var::POSITION, id.as_str()));
        batch.push(Command::get_vehicle(var::SPEED, id.as_str()));
        batch.push(Command::get_vehicle(var::ANGLE, id.as_str()));
    }
    let values = session.exchange_checked(&batch)?;
    if values.len() != batch.len() {
        return Err(RadioClientError::BadReply {
            id: String::new(),
            detail: format!("expected {} values, got {}", batch.len(), values.len()),
        });
    }
    ids.into_iter()
        .zip(values.chunks_exact(3))
        .map(|(id, v)| {
            let bad = |detail: &str| RadioClientError::BadReply {
                id: id.clone(),
                detail: detail.to_string(),
            };
            let TypedValue::Position2D(x, y) = v[0].value else {
                return Err(bad("position is not a 2D position"));
            };
            let speed = v[1]
                .value
                .as_f64()
                .ok_or_else(|| bad("speed is not a double"))?;
            let heading = v[2]
                .value
                .as_f64()
                .ok_or_else(|| bad("angle is not a double"))?;
            Ok(VehicleState {
                id,
                position: Vec2::new(x, y),
                speed,
                heading,
            })
        })
        .collect()
}

/// Drives the radio kernel as a coordinator client until the server ends the
/// run. Deliveries computed in step k are pushed to the inboxes together with
/// the step vote, so receivers read them in step k+1.
pub fn run_radio_client<S: Read + Write>(
    mut session: ClientSession<S>,
    mut kernel: RadioKernel,
) -> Result<RadioKernel, RadioClientError> {
    let mut step = 0u64;
    loop {
        let result = (|| {
            let states = read_vehicle_states(&mut session)?;
            let inbox = kernel.step(step, &states)?;
            let mut batch: Vec<Command> = inbox
                .into_iter()
                .map(|(id, items)| {
                    Command::set_vehicle(var::V2X_INBOX, id, TypedValue::StringList(items))
                })
                .collect();
            batch.push(Command::SimStep(0.0));
            session.exchange_checked(&batch)?;
            Ok::<(), RadioClientError>(())
        })();
        match result {
            Ok(()) => step += 1,
            Err(RadioClientError::Session(SessionError::Closed)) => return Ok(kernel),
            Err(e) => return Err(e),
        }
    }
}
