//! TraCI-subset binary protocol.
//!
//! A message is a 4-byte big-endian total length (counting itself) followed by
//! commands. Each command is `len id payload`, where `len` is one byte when the
//! whole command fits in 255 bytes, and otherwise a zero byte followed by a
//! 4-byte length. Command ids and value tags follow the public TraCI registry
//! so that ordinary TraCI clients can talk to the coordinator for the commands
//! implemented here.
//!
//! `SETORDER` and `SIMSTEP` carry raw payloads (an untagged int and an untagged
//! double); variable get/set commands carry a variable id, an object id string
//! and, for writes and replies, a tagged [`TypedValue`].

mod codec;
mod session;

pub use codec::{
    decode_message, decode_requests, decode_responses, encode_message, read_frame, Decoded,
    Direction,
};
pub use session::{client_handshake, ClientSession, SessionError, SessionState};

use thiserror::Error;

/// Frames above this size are refused by both encoder and decoder.
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

pub const CMD_SIMSTEP: u8 = 0x02;
pub const CMD_SETORDER: u8 = 0x03;
pub const CMD_CLOSE: u8 = 0x7f;
pub const CMD_GET_TLS: u8 = 0xa2;
pub const CMD_GET_VEHICLE: u8 = 0xa4;
pub const CMD_SET_TLS: u8 = 0xc2;
pub const CMD_SET_VEHICLE: u8 = 0xc4;
pub const RESPONSE_GET_TLS: u8 = 0xb2;
pub const RESPONSE_GET_VEHICLE: u8 = 0xb4;

pub const TYPE_POSITION_2D: u8 = 0x01;
pub const TYPE_UBYTE: u8 = 0x07;
pub const TYPE_INTEGER: u8 = 0x09;
pub const TYPE_DOUBLE: u8 = 0x0B;
pub const TYPE_STRING: u8 = 0x0C;
pub const TYPE_STRING_LIST: u8 = 0x0E;
pub const TYPE_COMPOUND: u8 = 0x0F;

pub const STATUS_OK: u8 = 0x00;
pub const STATUS_ERR: u8 = 0xFF;

/// Variable ids understood by the coordinator.
pub mod var {
    pub const ID_LIST: u8 = 0x00;
    pub const TLS_STATE: u8 = 0x20;
    pub const SPEED: u8 = 0x40;
    pub const POSITION: u8 = 0x42;
    pub const ANGLE: u8 = 0x43;
    pub const LENGTH: u8 = 0x44;
    pub const ROAD_ID: u8 = 0x50;
    pub const EDGES: u8 = 0x54;
    pub const LANE_POSITION: u8 = 0x56;
    pub const ROUTE_INDEX: u8 = 0x69;
    /// Private range: V2X messages delivered to a vehicle during the previous step.
    pub const V2X_INBOX: u8 = 0xF0;
    /// Private range: transfer control of a vehicle to the writing client.
    pub const CLAIM: u8 = 0xF1;
}

pub fn is_registered(id: u8) -> bool {
    matches!(
        id,
        CMD_SIMSTEP
            | CMD_SETORDER
            | CMD_CLOSE
            | CMD_GET_TLS
            | CMD_GET_VEHICLE
            | CMD_SET_TLS
            | CMD_SET_VEHICLE
            | RESPONSE_GET_TLS
            | RESPONSE_GET_VEHICLE
    )
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("unregistered command id 0x{0:02x}")]
    UnregisteredCommand(u8),
    #[error("message of {0} bytes exceeds the frame limit")]
    OversizeMessage(usize),
    #[error("truncated frame: need {needed} bytes, have {available}")]
    TruncatedFrame { needed: usize, available: usize },
    #[error("malformed command{}: {reason}", id.map(|i| format!(" 0x{i:02x}")).unwrap_or_default())]
    MalformedCommand { id: Option<u8>, reason: String },
}

impl WireError {
    pub(crate) fn malformed(id: Option<u8>, reason: impl Into<String>) -> Self {
        WireError::MalformedCommand {
            id,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypedValue {
    UByte(u8),
    Int(i32),
    Double(f64),
    String(String),
    StringList(Vec<String>),
    Position2D(f64, f64),
    Compound(Vec<TypedValue>),
}

impl TypedValue {
    pub fn tag(&self) -> u8 {
        match self {
            TypedValue::UByte(_) => TYPE_UBYTE,
            TypedValue::Int(_) => TYPE_INTEGER,
            TypedValue::Double(_) => TYPE_DOUBLE,
            TypedValue::String(_) => TYPE_STRING,
            TypedValue::StringList(_) => TYPE_STRING_LIST,
            TypedValue::Position2D(..) => TYPE_POSITION_2D,
            TypedValue::Compound(_) => TYPE_COMPOUND,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            TypedValue::Double(v) => Some(*v),
            TypedValue::Int(v) => Some(f64::from(*v)),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            TypedValue::String(s) => Some(s),
            _ => None,
        }
    }
}

/// `(variable, object)` addressed by a get command.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableQuery {
    pub variable: u8,
    pub object: String,
}

/// A variable value: payload of set commands and of get replies.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableValue {
    pub variable: u8,
    pub object: String,
    pub value: TypedValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusResponse {
    pub request_id: u8,
    pub code: u8,
    pub description: String,
}

impl StatusResponse {
    pub fn ok(request_id: u8) -> Self {
        Self {
            request_id,
            code: STATUS_OK,
            description: String::new(),
        }
    }

    pub fn error(request_id: u8, description: impl Into<String>) -> Self {
        let mut description = description.into();
        if description.is_empty() {
            description.push_str("error");
        }
        Self {
            request_id,
            code: STATUS_ERR,
            description,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.code == STATUS_OK
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    SetOrder(i32),
    /// Target time in seconds; 0.0 means "one step".
    SimStep(f64),
    GetVehicle(VariableQuery),
    SetVehicle(VariableValue),
    GetTls(VariableQuery),
    SetTls(VariableValue),
    Close,
    Status(StatusResponse),
    VehicleValue(VariableValue),
    TlsValue(VariableValue),
}

impl Command {
    pub fn id(&self) -> u8 {
        match self {
            Command::SetOrder(_) => CMD_SETORDER,
            Command::SimStep(_) => CMD_SIMSTEP,
            Command::GetVehicle(_) => CMD_GET_VEHICLE,
            Command::SetVehicle(_) => CMD_SET_VEHICLE,
            Command::GetTls(_) => CMD_GET_TLS,
            Command::SetTls(_) => CMD_SET_TLS,
            Command::Close => CMD_CLOSE,
            Command::Status(s) => s.request_id,
            Command::VehicleValue(_) => RESPONSE_GET_VEHICLE,
            Command::TlsValue(_) => RESPONSE_GET_TLS,
        }
    }

    pub fn get_vehicle(variable: u8, object: impl Into<String>) -> Self {
        Command::GetVehicle(VariableQuery {
            variable,
            object: object.into(),
        })
    }

    pub fn set_vehicle(variable: u8, object: impl Into<String>, value: TypedValue) -> Self {
        Command::SetVehicle(VariableValue {
            variable,
            object: object.into(),
            value,
        })
    }

    pub fn get_tls(variable: u8, object: impl Into<String>) -> Self {
        Command::GetTls(VariableQuery {
            variable,
            object: object.into(),
        })
    }

    pub fn set_tls(variable: u8, object: impl Into<String>, value: TypedValue) -> Self {
        Command::SetTls(VariableValue {
            variable,
            object: object.into(),
            value,
        })
    }
}
