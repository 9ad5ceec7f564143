//! Canonical serialization and hashing primitives.
//!
//! Every signed or hashed protocol object goes through [`to_canonical`]:
//! JSON with lexicographically sorted object keys, no insignificant
//! whitespace, exact integers and shortest round-trip decimals for reals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonError {
    #[error("value is not serializable: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("non-finite number cannot be canonicalized")]
    NonFinite,
}

/// Serializes `value` into its canonical octet form.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonError> {
    // serde_json maps NaN/inf to null, which would make two distinct values
    // collide.
    reject_non_finite(value)?;
    let tree = serde_json::to_value(value)?;
    // `serde_json::Map` is ordered by key unless `preserve_order` is enabled,
    // so re-serializing the tree yields sorted keys at every depth.
    Ok(serde_json::to_vec(&tree)?)
}

/// Canonical form as a UTF-8 string.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonError> {
    // to_canonical only ever emits UTF-8.
    Ok(String::from_utf8(to_canonical(value)?).expect("canonical JSON is UTF-8"))
}

/// Digest of the canonical form.
pub fn canonical_digest<T: Serialize + ?Sized>(value: &T) -> Result<Digest, CanonError> {
    Ok(sha256(&to_canonical(value)?))
}

fn reject_non_finite<T: Serialize + ?Sized>(value: &T) -> Result<(), CanonError> {
    let mut seen = false;
    value
        .serialize(FiniteCheck { bad: &mut seen })
        .map_err(|_| CanonError::NonFinite)?;
    if seen {
        Err(CanonError::NonFinite)
    } else {
        Ok(())
    }
}

/// SHA-256 of `bytes`.
pub fn sha256(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

/// SHA-256 over the plain concatenation of `parts`.
pub fn sha256_concat(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}

/// A 32-octet SHA-256 digest, hex encoded on the wire.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s.trim(), &mut out)?;
        Ok(Digest(out))
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hex serde for byte vectors and fixed arrays.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<T: AsRef<[u8]>, S: Serializer>(bytes: &T, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes.as_ref()))
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: TryFrom<Vec<u8>>,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        let raw = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let len = raw.len();
        T::try_from(raw).map_err(|_| serde::de::Error::custom(format!("unexpected length {len}")))
    }
}

// Minimal serializer that only inspects floats. Everything else is walked
// structurally and discarded.
struct FiniteCheck<'a> {
    bad: &'a mut bool,
}

#[derive(Debug)]
struct Never;

impl fmt::Display for Never {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unreachable")
    }
}

impl std::error::Error for Never {}

impl serde::ser::Error for Never {
    fn custom<T: fmt::Display>(_msg: T) -> Self {
        Never
    }
}

macro_rules! ignore_scalar {
    ($($name:ident: $ty:ty),* $(,)?) => {
        $(fn $name(self, _v: $ty) -> Result<(), Never> { Ok(()) })*
    };
}

impl<'a> Serializer for FiniteCheck<'a> {
    type Ok = ();
    type Error = Never;
    type SerializeSeq = Self;
    type SerializeTuple = Self;
    type SerializeTupleStruct = Self;
    type SerializeTupleVariant = Self;
    type SerializeMap = Self;
    type SerializeStruct = Self;
    type SerializeStructVariant = Self;

    ignore_scalar!(
        serialize_bool: bool, serialize_i8: i8, serialize_i16: i16, serialize_i32: i32,
        serialize_i64: i64, serialize_u8: u8, serialize_u16: u16, serialize_u32: u32,
        serialize_u64: u64, serialize_char: char, serialize_str: &str, serialize_bytes: &[u8],
        serialize_unit_struct: &'static str,
    );

    fn serialize_f32(self, v: f32) -> Result<(), Never> {
        if !v.is_finite() {
            *self.bad = true;
        }
        Ok(())
    }
    fn serialize_f64(self, v: f64) -> Result<(), Never> {
        if !v.is_finite() {
            *self.bad = true;
        }
        Ok(())
    }
    fn serialize_none(self) -> Result<(), Never> {
        Ok(())
    }
    fn serialize_some<T: Serialize + ?Sized>(self, value: &T) -> Result<(), Never> {
        value.serialize(self)
    }
    fn serialize_unit(self) -> Result<(), Never> {
        Ok(())
    }
    fn serialize_unit_variant(self, _: &'static str, _: u32, _: &'static str) -> Result<(), Never> {
        Ok(())
    }
    fn serialize_newtype_struct<T: Serialize + ?Sized>(
        self,
        _: &'static str,
        value: &T,
    ) -> Result<(), Never> {
        value.serialize(self)
    }
    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        value: &T,
    ) -> Result<(), Never> {
        value.serialize(self)
    }
    fn serialize_seq(self, _: Option<usize>) -> Result<Self, Never> {
        Ok(self)
    }
    fn serialize_tuple(self, _: usize) -> Result<Self, Never> {
        Ok(self)
    }
    fn serialize_tuple_struct(self, _: &'static str, _: usize) -> Result<Self, Never> {
        Ok(self)
    }
    fn serialize_tuple_variant(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: usize,
    ) -> Result<Self, Never> {
        Ok(self)
    }
    fn serialize_map(self, _: Option<usize>) -> Result<Self, Never> {
        Ok(self)
    }
    fn serialize_struct(self, _: &'static str, _: usize) -> Result<Self, Never> {
        Ok(self)
    }
    fn serialize_struct_variant(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: usize,
    ) -> Result<Self, Never> {
        Ok(self)
    }
}

impl<'a> FiniteCheck<'a> {
    fn child(&mut self) -> FiniteCheck<'_> {
        FiniteCheck { bad: self.bad }
    }
}

macro_rules! compound {
    ($trait:path, $method:ident $(, $key:ty)?) => {
        impl<'a> $trait for FiniteCheck<'a> {
            type Ok = ();
            type Error = Never;
            fn $method<T: Serialize + ?Sized>(&mut self, $(_k: $key,)? value: &T) -> Result<(), Never> {
                value.serialize(self.child())
            }
            fn end(self) -> Result<(), Never> {
                Ok(())
            }
        }
    };
}

compound!(serde::ser::SerializeSeq, serialize_element);
compound!(serde::ser::SerializeTuple, serialize_element);
compound!(serde::ser::SerializeTupleStruct, serialize_field);
compound!(serde::ser::SerializeTupleVariant, serialize_field);
compound!(serde::ser::SerializeStruct, serialize_field, &'static str);
compound!(serde::ser::SerializeStructVariant, serialize_field, &'static str);

impl<'a> serde::ser::SerializeMap for FiniteCheck<'a> {
    type Ok = ();
    type Error = Never;
    fn serialize_key<T: Serialize + ?Sized>(&mut self, key: &T) -> Result<(), Never> {
        key.serialize(self.child())
    }
    fn serialize_value<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), Never> {
        value.serialize(self.child())
    }
    fn end(self) -> Result<(), Never> {
        Ok(())
    }
}
