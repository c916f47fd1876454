//! Strict field extraction over parsed JSON objects.
//!
//! Wire documents are decoded by hand rather than through `serde` derive so
//! that every failure maps to a precise, typed [`ProtocolError`].

use serde_json::{Map, Value};

use super::ProtocolError;

pub(crate) fn parse(bytes: &[u8]) -> Result<Value, ProtocolError> {
    serde_json::from_slice(bytes).map_err(|e| ProtocolError::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })
}

// serde_json reports 1-based line and byte column.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for _ in 1..line {
        match bytes[offset..].iter().position(|b| *b == b'\n') {
            Some(nl) => offset += nl + 1,
            None => return bytes.len(),
        }
    }
    (offset + column.saturating_sub(1)).min(bytes.len())
}

pub(crate) struct Fields<'a> {
    map: &'a Map<String, Value>,
    prefix: String,
}

impl<'a> Fields<'a> {
    pub(crate) fn new(value: &'a Value, prefix: &str) -> Result<Self, ProtocolError> {
        match value {
            Value::Object(map) => Ok(Fields {
                map,
                prefix: prefix.to_string(),
            }),
            _ => Err(ProtocolError::InvalidField {
                field: if prefix.is_empty() {
                    "<root>".into()
                } else {
                    prefix.to_string()
                },
                reason: "expected a JSON object".into(),
            }),
        }
    }

    fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    /// Reject any key outside `allowed`.
    pub(crate) fn only(&self, allowed: &[&str]) -> Result<(), ProtocolError> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(ProtocolError::UnknownField(self.path(k))),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Result<&'a Value, ProtocolError> {
        self.map
            .get(key)
            .ok_or_else(|| ProtocolError::MissingField(self.path(key)))
    }

    pub(crate) fn invalid(&self, key: &str, reason: impl Into<String>) -> ProtocolError {
        ProtocolError::InvalidField {
            field: self.path(key),
            reason: reason.into(),
        }
    }

    pub(crate) fn version(&self) -> Result<(), ProtocolError> {
        let v = self.get("version")?;
        match v.as_i64() {
            Some(1) => Ok(()),
            Some(other) => Err(ProtocolError::UnsupportedVersion(other)),
            None => Err(self.invalid("version", "expected an integer")),
        }
    }

    pub(crate) fn u64(&self, key: &str) -> Result<u64, ProtocolError> {
        self.get(key)?
            .as_u64()
            .ok_or_else(|| self.invalid(key, "expected a non-negative integer"))
    }

    pub(crate) fn str(&self, key: &str) -> Result<&'a str, ProtocolError> {
        self.get(key)?
            .as_str()
            .ok_or_else(|| self.invalid(key, "expected a string"))
    }

    pub(crate) fn opt_str(&self, key: &str) -> Result<Option<&'a str>, ProtocolError> {
        match self.get(key)? {
            Value::Null => Ok(None),
            Value::String(s) => Ok(Some(s)),
            _ => Err(self.invalid(key, "expected a string or null")),
        }
    }

    pub(crate) fn bool(&self, key: &str) -> Result<bool, ProtocolError> {
        self.get(key)?
            .as_bool()
            .ok_or_else(|| self.invalid(key, "expected a boolean"))
    }

    pub(crate) fn array(&self, key: &str) -> Result<&'a Vec<Value>, ProtocolError> {
        self.get(key)?
            .as_array()
            .ok_or_else(|| self.invalid(key, "expected an array"))
    }
}
