use std::io::{self, Read, Write};

use thiserror::Error;

use super::*;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("execution order must be >= 1")]
    InvalidOrder,
    #[error("server rejected execution order: {0}")]
    OrderRejected(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("command 0x{id:02x} failed: {description}")]
    CommandFailed { id: u8, description: String },
    #[error("connection closed by server")]
    Closed,
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Ready,
    Closed,
}

/// Client end of a coordinator connection. One request batch is in flight at
/// a time: [`ClientSession::exchange`] writes a frame and blocks for its reply.
#[derive(Debug)]
pub struct ClientSession<S> {
    stream: S,
    order: u32,
    state: SessionState,
}

/// Announces `order` to the server and waits for its acknowledgement.
pub fn client_handshake<S: Read + Write>(
    stream: S,
    order: u32,
) -> Result<ClientSession<S>, SessionError> {
    if order == 0 {
        return Err(SessionError::InvalidOrder);
    }
    let order_i32 = i32::try_from(order).map_err(|_| SessionError::InvalidOrder)?;
    let mut session = ClientSession {
        stream,
        order,
        state: SessionState::Ready,
    };
    let reply = session.exchange_raw(&[Command::SetOrder(order_i32)])?;
    match reply.as_slice() {
        [Command::Status(s)] if s.request_id == CMD_SETORDER && s.is_ok() => Ok(session),
        [Command::Status(s)] if s.request_id == CMD_SETORDER => {
            session.state = SessionState::Closed;
            Err(SessionError::OrderRejected(s.description.clone()))
        }
        other => Err(SessionError::ProtocolError(format!(
            "unexpected handshake reply {other:?}"
        ))),
    }
}

impl<S: Read + Write> ClientSession<S> {
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn get_ref(&self) -> &S {
        &self.stream
    }

    fn exchange_raw(&mut self, commands: &[Command]) -> Result<Vec<Command>, SessionError> {
        if self.state == SessionState::Closed {
            return Err(SessionError::Closed);
        }
        let bytes = encode_message(commands)?;
        if let Err(e) = self
            .stream
            .write_all(&bytes)
            .and_then(|_| self.stream.flush())
        {
            self.state = SessionState::Closed;
            return Err(match e.kind() {
                io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => SessionError::Closed,
                _ => SessionError::Io(e),
            });
        }
        let frame = match read_frame(&mut self.stream) {
            Ok(Some(frame)) => frame,
            Ok(None) => {
                self.state = SessionState::Closed;
                return Err(SessionError::Closed);
            }
            Err(e) => {
                self.state = SessionState::Closed;
                return Err(match e.kind() {
                    io::ErrorKind::ConnectionReset | io::ErrorKind::ConnectionAborted => {
                        SessionError::Closed
                    }
                    _ => SessionError::Io(e),
                });
            }
        };
        Ok(decode_responses(&frame)?.commands)
    }

    /// Sends a batch and returns every reply command, status records included.
    pub fn exchange(&mut self, commands: &[Command]) -> Result<Vec<Command>, SessionError> {
        self.exchange_raw(commands)
    }

    /// Sends a batch and fails on the first error status. Returns the value
    /// replies in request order.
    pub fn exchange_checked(
        &mut self,
        commands: &[Command],
    ) -> Result<Vec<VariableValue>, SessionError> {
        let replies = self.exchange_raw(commands)?;
        let mut values = Vec::new();
        for reply in replies {
            match reply {
                Command::Status(s) if !s.is_ok() => {
                    return Err(SessionError::CommandFailed {
                        id: s.request_id,
                        description: s.description,
                    })
                }
                Command::Status(_) => {}
                Command::VehicleValue(v) | Command::TlsValue(v) => values.push(v),
                other => {
                    return Err(SessionError::ProtocolError(format!(
                        "unexpected reply {other:?}"
                    )))
                }
            }
        }
        Ok(values)
    }

    pub fn get_vehicle(&mut self, variable: u8, id: &str) -> Result<TypedValue, SessionError> {
        let mut values = self.exchange_checked(&[Command::get_vehicle(variable, id)])?;
        values
            .pop()
            .map(|v| v.value)
            .ok_or_else(|| SessionError::ProtocolError("missing value reply".into()))
    }

    pub fn vehicle_ids(&mut self) -> Result<Vec<String>, SessionError> {
        match self.get_vehicle(var::ID_LIST, "")? {
            TypedValue::StringList(ids) => Ok(ids),
            other => Err(SessionError::ProtocolError(format!(
                "id list has unexpected type {other:?}"
            ))),
        }
    }

    /// Votes to advance and blocks until the barrier releases.
    pub fn simulation_step(&mut self) -> Result<(), SessionError> {
        self.exchange_checked(&[Command::SimStep(0.0)]).map(|_| ())
    }

    pub fn close(mut self) -> Result<(), SessionError> {
        let result = self.exchange_checked(&[Command::Close]).map(|_| ());
        self.state = SessionState::Closed;
        match result {
            Err(SessionError::Closed) => Ok(()),
            other => other,
        }
    }
}
