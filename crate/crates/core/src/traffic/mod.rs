//! Microscopic traffic kernel: single-lane route-following vehicles under
//! Krauss or IDM longitudinal control, fixed-cycle signals and demand-driven
//! insertion.

mod models;
mod network;
mod tls;
mod world;

pub use models::{idm_acceleration, krauss_safe_speed, GapDegenerate, IdmParams, EMERGENCY_DECEL};
pub use network::{Connection, Edge, Junction, RoadNetwork};
pub use tls::{tls_state, valid_state, Signal, TlsError, TlsPhase, TlsSlot, TrafficLightProgram};
pub use world::{
    ClaimReceipt, KernelError, KernelEvent, LeaderInfo, Vehicle, VehicleSnapshot, World,
};

use serde::{Deserialize, Serialize};

/// Which side integrates a vehicle or drives a signal program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Owner {
    Traffic,
    Ego,
}

impl Owner {
    pub fn as_str(self) -> &'static str {
        match self {
            Owner::Traffic => "traffic",
            Owner::Ego => "ego",
        }
    }
}

impl std::str::FromStr for Owner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traffic" | "sumo" => Ok(Owner::Traffic),
            "ego" | "carla" => Ok(Owner::Ego),
            other => Err(format!("unknown owner '{other}' (expected traffic or ego)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CarFollowModel {
    Krauss,
    Idm,
}

impl CarFollowModel {
    pub fn as_str(self) -> &'static str {
        match self {
            CarFollowModel::Krauss => "Krauss",
            CarFollowModel::Idm => "IDM",
        }
    }
}

/// Vehicle type parameters. `tau` doubles as the IDM time headway T and
/// `min_gap` as the IDM jam distance s0.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleType {
    pub id: String,
    pub model: CarFollowModel,
    pub accel: f64,
    pub decel: f64,
    pub tau: f64,
    pub length: f64,
    pub min_gap: f64,
    pub max_speed: f64,
    pub delta: f64,
    /// IDM desired speed; defaults to the current edge's limit.
    pub desired_speed: Option<f64>,
}

impl VehicleType {
    pub fn defaults(id: impl Into<String>, model: CarFollowModel) -> Self {
        let (accel, decel, tau) = match model {
            CarFollowModel::Krauss => (2.6, 4.5, 1.0),
            CarFollowModel::Idm => (1.0, 1.5, 1.5),
        };
        Self {
            id: id.into(),
            model,
            accel,
            decel,
            tau,
            length: 5.0,
            min_gap: 2.0,
            max_speed: 55.55,
            delta: 4.0,
            desired_speed: None,
        }
    }

    pub fn idm_params(&self, edge_limit: f64) -> IdmParams {
        IdmParams {
            desired_speed: self
                .desired_speed
                .unwrap_or(edge_limit)
                .min(self.max_speed)
                .min(edge_limit),
            time_headway: self.tau,
            min_gap: self.min_gap,
            delta: self.delta,
            accel: self.accel,
            decel: self.decel,
        }
    }
}

/// One vehicle in the demand file.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleDemand {
    pub id: String,
    pub vtype: VehicleType,
    /// Departure time in seconds.
    pub depart: f64,
    pub route: Vec<String>,
}
