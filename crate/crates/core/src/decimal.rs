//! Serde adapters writing `f64` as shortest round-trip decimal strings.
//!
//! Rust's `Display` for `f64` emits the shortest string that parses back to
//! the same bits, and `str::parse` is correctly rounded, so the pair is
//! lossless. Non-finite values parse here and are rejected by the
//! owning type's validation, which knows the field name.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serializer};

pub(crate) fn parse(field: &str, text: &str) -> Result<f64, String> {
    let v: f64 = text
        .parse()
        .map_err(|_| format!("field `{field}`: invalid decimal {text:?}"))?;
    Ok(v)
}

pub(crate) mod scalar {
    use super::*;

    pub(crate) fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub(crate) fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let text = String::deserialize(d)?;
        parse("number", &text).map_err(D::Error::custom)
    }
}

pub(crate) mod vector {
    use super::*;
    use serde::ser::SerializeSeq;

    pub(crate) fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&x.to_string())?;
        }
        seq.end()
    }

    pub(crate) fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let texts = Vec::<String>::deserialize(d)?;
        texts
            .iter()
            .map(|t| parse("number", t).map_err(D::Error::custom))
            .collect()
    }
}
