//! Canonical JSON encoding shared by every document type.
//!
//! Canonical form is `serde_json`'s pretty printer (2-space indent, keys in
//! insertion order) followed by a single trailing LF.

use serde::Serialize;

/// Serializes `value` into its canonical text form.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    // Every document type in this crate serializes infallibly (string keys,
    // finite numbers are validated on the way in).
    let mut out = serde_json::to_string_pretty(value).expect("canonical serialization failed");
    out.push('\n');
    out
}
