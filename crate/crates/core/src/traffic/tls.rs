use thiserror::Error;

use super::Owner;
use crate::time::seconds_to_us;

#[derive(Debug, Clone, PartialEq)]
pub struct TlsPhase {
    /// Seconds.
    pub duration: f64,
    pub state: String,
}

/// Fixed-cycle signal program.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficLightProgram {
    pub id: String,
    pub phases: Vec<TlsPhase>,
    /// Seconds added to simulation time before the cycle lookup.
    pub offset: f64,
    pub owner: Owner,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TlsError {
    #[error("signal program '{0}' is not owned by the ego client")]
    NotOwner(String),
    #[error("unknown signal program '{0}'")]
    UnknownProgram(String),
    #[error("invalid signal state '{state}' for program '{id}'")]
    InvalidState { id: String, state: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Green,
    Yellow,
    Red,
}

impl Signal {
    pub fn from_char(c: char) -> Option<Signal> {
        match c {
            'G' | 'g' => Some(Signal::Green),
            'y' | 'Y' => Some(Signal::Yellow),
            'r' | 'R' => Some(Signal::Red),
            _ => None,
        }
    }
}

pub fn valid_state(state: &str) -> bool {
    !state.is_empty() && state.chars().all(|c| Signal::from_char(c).is_some())
}

impl TrafficLightProgram {
    pub fn cycle_us(&self) -> u64 {
        self.phases.iter().map(|p| seconds_to_us(p.duration)).sum()
    }

    pub fn link_count(&self) -> usize {
        self.phases
            .first()
            .map(|p| p.state.chars().count())
            .unwrap_or(0)
    }

    /// Scheduled signal string at simulation time `t_us`.
    pub fn state_at(&self, t_us: u64) -> &str {
        let cycle = self.cycle_us();
        if cycle == 0 {
            return &self.phases[0].state;
        }
        let offset = seconds_to_us(self.offset.abs()) % cycle;
        let shifted = if self.offset >= 0.0 {
            (t_us % cycle + offset) % cycle
        } else {
            (t_us % cycle + cycle - offset) % cycle
        };
        let mut acc = 0;
        for phase in &self.phases {
            acc += seconds_to_us(phase.duration);
            if shifted < acc {
                return &phase.state;
            }
        }
        &self.phases[self.phases.len() - 1].state
    }
}

/// Program lookup in seconds, for callers outside the kernel.
pub fn tls_state(program: &TrafficLightProgram, t: f64) -> &str {
    program.state_at(seconds_to_us(t))
}

/// A program plus its externally latched state, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct TlsSlot {
    pub program: TrafficLightProgram,
    pub latched: Option<String>,
}

impl TlsSlot {
    pub fn new(program: TrafficLightProgram) -> Self {
        Self {
            program,
            latched: None,
        }
    }

    pub fn current(&self, t_us: u64) -> &str {
        match (&self.program.owner, &self.latched) {
            (Owner::Ego, Some(s)) => s,
            _ => self.program.state_at(t_us),
        }
    }

    /// Latches `state` until the next override. Only ego-owned programs accept it.
    pub fn set_state(&mut self, state: &str) -> Result<(), TlsError> {
        if self.program.owner != Owner::Ego {
            return Err(TlsError::NotOwner(self.program.id.clone()));
        }
        if !valid_state(state) || state.chars().count() != self.program.link_count() {
            return Err(TlsError::InvalidState {
                id: self.program.id.clone(),
                state: state.to_string(),
            });
        }
        self.latched = Some(state.to_string());
        Ok(())
    }
}
