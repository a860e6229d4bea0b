use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the JSON encoding of `value`.
///
/// Struct fields serialize in declaration order, so equal configurations hash
/// equally and any field change changes the hash.
pub fn config_hash<S: Serialize + ?Sized>(value: &S) -> String {
    let json = serde_json::to_vec(value).expect("configuration serializes to JSON");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}
