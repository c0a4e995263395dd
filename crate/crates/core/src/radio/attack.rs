use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

/// One attack from the attack file (TOML, `[[attack]]` tables).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AttackSpec {
    /// Phantom identities beaconing from fabricated positions in `area`
    /// (`[x_min, y_min, x_max, y_max]`) during `[start, end)` seconds.
    Sybil {
        start: f64,
        end: f64,
        phantoms: u32,
        #[serde(rename = "box")]
        area: [f64; 4],
    },
    /// Re-emits the victim's BSMs generated in `[capture_start, capture_end]`
    /// `delay` seconds later, unchanged. The attacker transmits from
    /// `position` if given, otherwise from where the victim originally was.
    Replay {
        victim: String,
        capture_start: f64,
        capture_end: f64,
        delay: f64,
        position: Option<[f64; 2]>,
    },
}

#[derive(Debug, Error)]
pub enum AttackConfigError {
    #[error("cannot read attack file {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("attack file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("attack {index}: {message}")]
    Invalid { index: usize, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackFile {
    #[serde(default)]
    attack: Vec<AttackSpec>,
}

impl AttackSpec {
    fn validate(&self) -> Result<(), String> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            AttackSpec::Sybil {
                start,
                end,
                phantoms,
                area,
            } => {
                if !finite(&[*start, *end]) || *start < 0.0 || end <= start {
                    return Err(format!(
                        "sybil window [{start}, {end}) is empty or negative"
                    ));
                }
                if *phantoms == 0 {
                    return Err("sybil needs at least one phantom".into());
                }
                if !finite(area) || area[0] >= area[2] || area[1] >= area[3] {
                    return Err(format!(
                        "sybil box {area:?} must be [x_min, y_min, x_max, y_max]"
                    ));
                }
            }
            AttackSpec::Replay {
                victim,
                capture_start,
                capture_end,
                delay,
                position,
            } => {
                if victim.is_empty() {
                    return Err("replay victim is empty".into());
                }
                if !finite(&[*capture_start, *capture_end, *delay])
                    || *capture_start < 0.0
                    || capture_end < capture_start
                {
                    return Err(format!(
                        "replay capture window [{capture_start}, {capture_end}] is invalid"
                    ));
                }
                if *delay <= 0.0 {
                    return Err(format!("replay delay {delay} must be positive"));
                }
                if position.is_some_and(|p| !finite(&p)) {
                    return Err("replay position must be finite".into());
                }
            }
        }
        Ok(())
    }
}

pub fn parse_attacks(text: &str) -> Result<Vec<AttackSpec>, AttackConfigError> {
    let file: AttackFile = toml::from_str(text)?;
    for (index, a) in file.attack.iter().enumerate() {
        a.validate()
            .map_err(|message| AttackConfigError::Invalid { index, message })?;
    }
    Ok(file.attack)
}

pub fn load_attacks(path: &Path) -> Result<Vec<AttackSpec>, AttackConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| AttackConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_attacks(&text)
}
