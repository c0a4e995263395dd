use serde::Deserialize;

use crate::geometry::{traverse_all, Polygon, Vec2};

/// Distances below this are clamped before computing path loss.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Physical-layer constants. Defaults: 5.9 GHz, 23 dBm, -89 dBm sensitivity,
/// 9 dB per wall and 0.4 dB per metre inside buildings.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub frequency_hz: f64,
    pub tx_power_dbm: f64,
    pub sensitivity_dbm: f64,
    /// β, loss per boundary crossing.
    pub wall_loss_db: f64,
    /// γ, loss per metre of building interior.
    pub interior_loss_db_per_m: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            frequency_hz: 5.9e9,
            tx_power_dbm: 23.0,
            sensitivity_dbm: -89.0,
            wall_loss_db: 9.0,
            interior_loss_db_per_m: 0.4,
        }
    }
}

/// Free-space path loss in dB for distance `d` metres and frequency `f` Hz.
pub fn free_space_path_loss(d: f64, f: f64) -> f64 {
    let d = d.max(MIN_DISTANCE_M);
    20.0 * d.log10() + 20.0 * f.log10() - 147.55
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleLoss {
    pub loss_db: f64,
    pub walls: u32,
    pub interior_m: f64,
}

/// Shadowing along the straight segment `a`–`b`: β per wall crossing plus γ
/// per metre inside polygons. Grazing contacts count as no crossing.
pub fn obstacle_loss(a: Vec2, b: Vec2, polygons: &[Polygon], params: &RadioParams) -> ObstacleLoss {
    let t = traverse_all(polygons, a, b);
    ObstacleLoss {
        loss_db: params.wall_loss_db * f64::from(t.crossings)
            + params.interior_loss_db_per_m * t.inside_length,
        walls: t.crossings,
        interior_m: t.inside_length,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub distance: f64,
    pub path_loss_db: f64,
    pub walls: u32,
    pub interior_m: f64,
    pub obstacle_loss_db: f64,
    pub rx_power_dbm: f64,
}

impl LinkBudget {
    pub fn received(&self, params: &RadioParams) -> bool {
        self.rx_power_dbm >= params.sensitivity_dbm
    }
}

pub fn link_budget(
    tx: Vec2,
    rx: Vec2,
    tx_power_dbm: f64,
    polygons: &[Polygon],
    params: &RadioParams,
) -> LinkBudget {
    let distance = tx.distance(rx);
    let path_loss_db = free_space_path_loss(distance, params.frequency_hz);
    let obstacle = obstacle_loss(tx, rx, polygons, params);
    LinkBudget {
        distance,
        path_loss_db,
        walls: obstacle.walls,
        interior_m: obstacle.interior_m,
        obstacle_loss_db: obstacle.loss_db,
        rx_power_dbm: tx_power_dbm - path_loss_db - obstacle.loss_db,
    }
}
