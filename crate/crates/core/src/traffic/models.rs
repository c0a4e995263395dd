//! Longitudinal car-following models.

use thiserror::Error;

/// Hard floor on IDM deceleration (m/s^2).
pub const EMERGENCY_DECEL: f64 = 9.0;

/// Krauss safe speed: the highest speed from which the follower can still stop
/// behind a leader that brakes with `decel`, given reaction time `tau`.
///
/// `v_safe = v_l + (g - v_l*tau) / ((v + v_l)/(2*decel) + tau)`, floored at 0.
pub fn krauss_safe_speed(speed: f64, leader_speed: f64, gap: f64, tau: f64, decel: f64) -> f64 {
    let mean_speed = 0.5 * (speed + leader_speed);
    let v_safe = leader_speed + (gap - leader_speed * tau) / (mean_speed / decel + tau);
    v_safe.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    /// Desired speed v0 (m/s).
    pub desired_speed: f64,
    /// Safe time headway T (s).
    pub time_headway: f64,
    /// Jam distance s0 (m).
    pub min_gap: f64,
    /// Acceleration exponent delta.
    pub delta: f64,
    /// Maximum acceleration a (m/s^2).
    pub accel: f64,
    /// Comfortable deceleration b (m/s^2).
    pub decel: f64,
}

impl IdmParams {
    pub fn with_desired_speed(desired_speed: f64) -> Self {
        Self {
            desired_speed,
            time_headway: 1.5,
            min_gap: 2.0,
            delta: 4.0,
            accel: 1.0,
            decel: 1.5,
        }
    }

    /// Steady-state bumper gap behind a leader driving at `speed`.
    pub fn equilibrium_gap(&self, speed: f64) -> f64 {
        (self.min_gap + speed * self.time_headway)
            / (1.0 - (speed / self.desired_speed).powf(self.delta)).sqrt()
    }

    /// Free-road term `a * (1 - (v/v0)^delta)`.
    pub fn free_acceleration(&self, speed: f64) -> f64 {
        self.accel * (1.0 - (speed / self.desired_speed).powf(self.delta))
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("non-positive gap {0} m")]
pub struct GapDegenerate(pub f64);

/// IDM acceleration for a follower at `speed`, approach rate `approach`
/// (own speed minus leader speed) and bumper gap `gap`. An infinite gap gives
/// the free-road acceleration. Clamped to `[-EMERGENCY_DECEL, a]`.
pub fn idm_acceleration(
    speed: f64,
    approach: f64,
    gap: f64,
    p: &IdmParams,
) -> Result<f64, GapDegenerate> {
    if gap <= 0.0 {
        return Err(GapDegenerate(gap));
    }
    let desired_gap =
        p.min_gap + speed * p.time_headway + speed * approach / (2.0 * (p.accel * p.decel).sqrt());
    let interaction = if gap.is_finite() {
        (desired_gap / gap).powi(2)
    } else {
        0.0
    };
    let a = p.accel * (1.0 - (speed / p.desired_speed).powf(p.delta) - interaction);
    Ok(a.clamp(-EMERGENCY_DECEL, p.accel))
}
