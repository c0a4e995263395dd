//! V2X side of the co-simulation: radio nodes mirrored from vehicles, BSM
//! beacons, attack injection and a deterministic link budget.

mod attack;
mod client;
mod frame;
mod kernel;
mod nodes;
mod propagation;

pub use attack::{load_attacks, parse_attacks, AttackConfigError, AttackSpec};
pub use client::{read_vehicle_states, run_radio_client, RadioClientError};
pub use frame::{BsmPayload, FrameKind, RadioFrame};
pub use kernel::{
    beacon_due, beacon_schedule, render_packets, PacketEvent, PacketRecord, RadioConfig,
    RadioError, RadioKernel, BEACON_INTERVAL_US, PACKET_HEADER,
};
pub use nodes::{NodeDiff, NodeKind, NodeTable, RadioNode, VehicleState};
pub use propagation::{
    free_space_path_loss, link_budget, obstacle_loss, LinkBudget, ObstacleLoss, RadioParams,
    MIN_DISTANCE_M,
};
