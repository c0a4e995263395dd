use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FrameKind {
    Bsm,
    Replayed,
    Sybil,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Bsm => "bsm",
            FrameKind::Replayed => "replayed",
            FrameKind::Sybil => "sybil",
        }
    }

    pub fn is_attack(self) -> bool {
        self != FrameKind::Bsm
    }
}

/// Basic safety message body as seen by receivers. Attack frames use the same
/// format; the ground truth lives only in the packet log.
#[derive(Debug, Clone, PartialEq)]
pub struct BsmPayload {
    /// Claimed sender identity.
    pub sender: String,
    /// Generation time claimed by the sender.
    pub timestamp_us: u64,
    pub position: Vec2,
    pub speed: f64,
    pub heading: f64,
}

const TAG: &str = "BSM";

impl BsmPayload {
    /// `BSM|sender|t_us|x|y|speed|heading`; floats round-trip exactly.
    pub fn encode(&self) -> String {
        format!(
            "{TAG}|{}|{}|{}|{}|{}|{}",
            self.sender,
            self.timestamp_us,
            self.position.x,
            self.position.y,
            self.speed,
            self.heading
        )
    }

    pub fn decode(s: &str) -> Option<Self> {
        let rest = s.strip_prefix(TAG)?.strip_prefix('|')?;
        // the sender id may itself contain '|', so split from the right
        let mut parts = rest.rsplitn(6, '|');
        let heading = parts.next()?.parse().ok()?;
        let speed = parts.next()?.parse().ok()?;
        let y = parts.next()?.parse().ok()?;
        let x = parts.next()?.parse().ok()?;
        let timestamp_us = parts.next()?.parse().ok()?;
        let sender = parts.next()?.to_string();
        Some(Self {
            sender,
            timestamp_us,
            position: Vec2::new(x, y),
            speed,
            heading,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioFrame {
    pub id: u64,
    /// Node that physically transmits the frame.
    pub transmitter: String,
    pub tx_position: Vec2,
    pub kind: FrameKind,
    pub emitted_at_us: u64,
    pub tx_power_dbm: f64,
    pub payload: BsmPayload,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_round_trip() {
        let p = BsmPayload {
            sender: "a|b".into(),
            timestamp_us: 3_000_000,
            position: Vec2::new(0.1 + 0.2, -7.25),
            speed: 13.9,
            heading: 89.99999999999999,
        };
        assert_eq!(BsmPayload::decode(&p.encode()), Some(p));
        assert_eq!(BsmPayload::decode("hello"), None);
        assert_eq!(BsmPayload::decode("BSM|x|1|2|3|4"), None);
    }
}
