//! JSON config loading, hashing and the seed override.

use std::path::Path;

use leaklab_core::games::GameConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{ConfigError, Error, Result};

/// Environment variable that replaces the base seed of every command.
pub const SEED_ENV: &str = "LEAKLAB_SEED";

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    // serde reports the failing field as the last segment only when it
    // got that far; a trailing '?' carries no information
    out.strip_suffix("/?").map(str::to_string).unwrap_or(out)
}

/// Deserializes `text`, reporting failures with a JSON pointer.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
        pointer: pointer_of(e.path()),
        message: e.into_inner().to_string(),
    })
}

/// Parses and validates a game config.
pub fn parse_game_config(text: &str) -> Result<GameConfig, ConfigError> {
    let cfg: GameConfig = parse_json(text)?;
    cfg.validate().map_err(|e| ConfigError {
        pointer: String::new(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}

pub fn load_game_config(path: &Path) -> Result<GameConfig> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    Ok(parse_game_config(&text)?)
}

/// Seed from [`SEED_ENV`], if set.
pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            Error::Config(ConfigError {
                pointer: String::new(),
                message: format!("{SEED_ENV}={v} is not a u64"),
            })
        }),
        Err(_) => Ok(None),
    }
}

/// Hex SHA-256 of the value's compact JSON encoding.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    sha256_hex(&bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
