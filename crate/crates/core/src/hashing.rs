//! Content hashing shared by manifests, templates and seed derivation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(sha256(bytes))
}

/// First eight digest bytes read little-endian.
pub fn hash64(bytes: &[u8]) -> u64 {
    let d = sha256(bytes);
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Hash of length-prefixed parts, so `("ab","c")` and `("a","bc")` differ.
pub fn hash_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// A 64-bit stable hash rendered as 16 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VersionHash(pub u64);

impl VersionHash {
    pub fn of(bytes: &[u8]) -> Self {
        VersionHash(hash64(bytes))
    }
}

impl fmt::Display for VersionHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for VersionHash {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s.trim().trim_start_matches("0x"), 16).map(VersionHash)
    }
}

impl Serialize for VersionHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for VersionHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parts_are_length_prefixed() {
        assert_ne!(hash_parts(&[b"ab", b"c"]), hash_parts(&[b"a", b"bc"]));
    }

    #[test]
    fn version_hash_text_round_trip() {
        let v = VersionHash::of(b"template body");
        assert_eq!(v.to_string().parse::<VersionHash>().unwrap(), v);
        assert_eq!(v.to_string().len(), 16);
    }
}
