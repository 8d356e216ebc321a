//! Versioned binary checkpoints: `MHQG` magic, format version, payload
//! kind, then a bincode payload.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MHQG";
pub const VERSION: u32 = 1;
const HEADER: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Reward = 1,
    Generator = 2,
}

impl Kind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Kind::Reward),
            2 => Some(Kind::Generator),
            _ => None,
        }
    }
}

pub fn to_bytes<T: Serialize>(kind: Kind, payload: &T) -> Result<Vec<u8>> {
    let body = bincode::serialize(payload).map_err(|e| Error::Checkpoint(format!("encode: {e}")))?;
    let mut out = Vec::with_capacity(HEADER + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind as u8);
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn from_bytes<T: DeserializeOwned>(kind: Kind, bytes: &[u8]) -> Result<T> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("four bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("format version {version}, this build reads {VERSION}")));
    }
    match Kind::from_byte(bytes[8]) {
        Some(k) if k == kind => {}
        Some(k) => return Err(Error::Checkpoint(format!("expected a {kind:?} checkpoint, found {k:?}"))),
        None => return Err(Error::Checkpoint(format!("unknown checkpoint kind {}", bytes[8]))),
    }
    bincode::deserialize(&bytes[HEADER..]).map_err(|e| Error::Checkpoint(format!("decode: {e}")))
}

/// Writes through a temporary sibling so a crash never leaves a torn file.
pub fn save<T: Serialize>(path: &Path, kind: Kind, payload: &T) -> Result<()> {
    let bytes = to_bytes(kind, payload)?;
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: Kind) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(kind, &bytes)
}

/// Hex sha256 of any serialisable value, via its JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serialises");
    hex::encode(Sha256::digest(json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rejections() {
        let payload = (vec![1.5f64, -2.0], "x".to_string());
        let bytes = to_bytes(Kind::Reward, &payload).unwrap();
        let back: (Vec<f64>, String) = from_bytes(Kind::Reward, &bytes).unwrap();
        assert_eq!(back, payload);
        assert!(from_bytes::<(Vec<f64>, String)>(Kind::Generator, &bytes).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 99;
        let err = from_bytes::<(Vec<f64>, String)>(Kind::Reward, &wrong_version).unwrap_err();
        assert!(err.to_string().contains("version"));
        assert!(from_bytes::<(Vec<f64>, String)>(Kind::Reward, b"nope").is_err());
    }

    #[test]
    fn save_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        save(&path, Kind::Generator, &42u64).unwrap();
        assert_eq!(load::<u64>(&path, Kind::Generator).unwrap(), 42);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash(&(1, 2)), config_hash(&(1, 2)));
        assert_ne!(config_hash(&(1, 2)), config_hash(&(2, 1)));
    }
}
