//! Key pairs, decentralized identifiers and the document registry.
//!
//! Keys are Ed25519. A DID's identifier is the base58btc encoding of the
//! SHA-256 digest of the controller's public key, so `gen_did` is a pure
//! function of its inputs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::RwLock;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::rngs::OsRng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::canon::{self, hex_bytes, CanonError};

pub const ALGORITHM_ID: &str = "Ed25519";
pub const DEFAULT_METHOD: &str = "ler";

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("invalid public key")]
    InvalidKey,
    #[error("invalid private key")]
    InvalidPrivateKey,
    #[error("unsupported algorithm {0:?}")]
    UnsupportedAlgorithm(String),
    #[error("malformed DID {0:?}")]
    MalformedDid(String),
    #[error("DID not found: {0}")]
    NotFound(Did),
    #[error("document for {0} already registered with different content")]
    AlreadyRegistered(Did),
    #[error("update for {did} has version {got}, registry holds {current}")]
    StaleVersion { did: Did, current: u64, got: u64 },
    #[error("invalid DID document: {0}")]
    InvalidDocument(&'static str),
    #[error("challenge must not be empty")]
    EmptyChallenge,
    #[error("signing failed")]
    SigningError,
    #[error("registry io: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry encoding: {0}")]
    Encoding(String),
}

impl From<CanonError> for IdentityError {
    fn from(e: CanonError) -> Self {
        IdentityError::Encoding(e.to_string())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey(#[serde(with = "hex_bytes")] pub [u8; 32]);

impl PublicKey {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, IdentityError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| IdentityError::InvalidKey)?;
        VerifyingKey::from_bytes(&arr).map_err(|_| IdentityError::InvalidKey)?;
        Ok(PublicKey(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Accepts iff `sig` is a valid signature on `msg` under this key.
    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        let Ok(vk) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        vk.verify(msg, &sig).is_ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(self.0))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature(#[serde(with = "hex_bytes")] pub [u8; 64]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

/// An Ed25519 signing key together with its verification key.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn generate() -> Self {
        Self {
            signing: SigningKey::generate(&mut OsRng),
        }
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn from_private_bytes(bytes: &[u8]) -> Result<Self, IdentityError> {
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| IdentityError::InvalidPrivateKey)?;
        Ok(Self::from_seed(seed))
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn private_key_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn algorithm_id(&self) -> &'static str {
        ALGORITHM_ID
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.signing.sign(msg).to_bytes())
    }

    /// The DID this key controls under `method`.
    pub fn did(&self, method: &str) -> Did {
        Did::from_public_key(&self.public_key(), method)
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_key", &self.public_key())
            .field("algorithm_id", &ALGORITHM_ID)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
struct KeyFile {
    algorithm_id: String,
    #[serde(with = "hex_bytes")]
    public_key: Vec<u8>,
    #[serde(with = "hex_bytes")]
    private_key: Vec<u8>,
}

impl Serialize for KeyPair {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        KeyFile {
            algorithm_id: ALGORITHM_ID.to_string(),
            public_key: self.public_key().0.to_vec(),
            private_key: self.private_key_bytes().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for KeyPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let file = KeyFile::deserialize(d)?;
        if file.algorithm_id != ALGORITHM_ID {
            return Err(D::Error::custom(IdentityError::UnsupportedAlgorithm(
                file.algorithm_id,
            )));
        }
        let pair = KeyPair::from_private_bytes(&file.private_key).map_err(D::Error::custom)?;
        if pair.public_key().0[..] != file.public_key[..] {
            return Err(D::Error::custom("public key does not match private key"));
        }
        Ok(pair)
    }
}

/// `did:<method>:<base58btc(sha256(public key))>`
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Did {
    method: String,
    identifier: String,
}

impl Did {
    pub fn from_public_key(pk: &PublicKey, method: &str) -> Self {
        Did {
            method: method.to_string(),
            identifier: bs58::encode(canon::sha256(pk.as_bytes()).as_bytes()).into_string(),
        }
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn identifier(&self) -> &str {
        &self.identifier
    }

    /// True when `pk` is the key this DID was derived from.
    pub fn is_derived_from(&self, pk: &PublicKey) -> bool {
        *self == Did::from_public_key(pk, &self.method)
    }
}

fn valid_method(m: &str) -> bool {
    !m.is_empty() && m.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "did:{}:{}", self.method, self.identifier)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Did({self})")
    }
}

impl FromStr for Did {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IdentityError::MalformedDid(s.to_string());
        let rest = s.strip_prefix("did:").ok_or_else(bad)?;
        let (method, identifier) = rest.split_once(':').ok_or_else(bad)?;
        if !valid_method(method) {
            return Err(bad());
        }
        let raw = bs58::decode(identifier).into_vec().map_err(|_| bad())?;
        if raw.len() != 32 {
            return Err(bad());
        }
        Ok(Did {
            method: method.to_string(),
            identifier: identifier.to_string(),
        })
    }
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationMethod {
    pub id: String,
    pub public_key: PublicKey,
    pub algorithm: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceEndpoint {
    pub name: String,
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidDocument {
    pub did: Did,
    pub version: u64,
    pub verification_methods: Vec<VerificationMethod>,
    #[serde(default)]
    pub service_endpoints: Vec<ServiceEndpoint>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl DidDocument {
    pub fn validate(&self) -> Result<(), IdentityError> {
        if self.verification_methods.is_empty() {
            return Err(IdentityError::InvalidDocument("no verification method"));
        }
        let mut ids: Vec<&str> = self.verification_methods.iter().map(|m| m.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(IdentityError::InvalidDocument("duplicate key id"));
        }
        if self
            .verification_methods
            .iter()
            .any(|m| m.algorithm != ALGORITHM_ID)
        {
            return Err(IdentityError::InvalidDocument("unsupported key algorithm"));
        }
        Ok(())
    }

    /// Accepts iff any verification method in the document verifies `sig`.
    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        self.verification_methods
            .iter()
            .any(|m| m.public_key.verify(msg, sig))
    }

    pub fn has_key(&self, pk: &PublicKey) -> bool {
        self.verification_methods.iter().any(|m| m.public_key == *pk)
    }

    /// Next document version with `new_key` replacing all current keys.
    pub fn rotated(&self, new_key: PublicKey) -> DidDocument {
        let version = self.version + 1;
        DidDocument {
            version,
            verification_methods: vec![VerificationMethod {
                id: format!("{}#key-{version}", self.did),
                public_key: new_key,
                algorithm: ALGORITHM_ID.to_string(),
            }],
            ..self.clone()
        }
    }

    pub fn service(&self, name: &str) -> Option<&str> {
        self.service_endpoints
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.locator.as_str())
    }
}

/// Creates a DID and its initial document for `public_key`.
pub fn gen_did(
    public_key: &[u8],
    method: &str,
    metadata: BTreeMap<String, String>,
) -> Result<(Did, DidDocument), IdentityError> {
    let pk = PublicKey::from_slice(public_key)?;
    if !valid_method(method) {
        return Err(IdentityError::MalformedDid(format!("did:{method}:")));
    }
    let did = Did::from_public_key(&pk, method);
    let doc = DidDocument {
        did: did.clone(),
        version: 1,
        verification_methods: vec![VerificationMethod {
            id: format!("{did}#key-1"),
            public_key: pk,
            algorithm: ALGORITHM_ID.to_string(),
        }],
        service_endpoints: Vec::new(),
        metadata,
    };
    Ok((did, doc))
}

/// Signs a verifier challenge to demonstrate control of the DID's key.
pub fn prove_control(keys: &KeyPair, challenge: &[u8]) -> Result<Signature, IdentityError> {
    if challenge.is_empty() {
        return Err(IdentityError::EmptyChallenge);
    }
    Ok(keys.sign(&control_message(challenge)))
}

pub fn verify_control(doc: &DidDocument, challenge: &[u8], sig: &Signature) -> bool {
    !challenge.is_empty() && doc.verify(&control_message(challenge), sig)
}

fn control_message(challenge: &[u8]) -> Vec<u8> {
    let mut msg = b"ctrl".to_vec();
    msg.extend_from_slice(challenge);
    msg
}

/// Document store standing in for a resolver network. Optionally persisted
/// as one canonical JSON file per DID.
#[derive(Debug, Default)]
pub struct DidRegistry {
    docs: RwLock<BTreeMap<Did, DidDocument>>,
    dir: Option<PathBuf>,
}

impl DidRegistry {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a registry directory and loads every document in it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, IdentityError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut docs = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let doc: DidDocument = serde_json::from_slice(&fs::read(&path)?)
                .map_err(|e| IdentityError::Encoding(format!("{}: {e}", path.display())))?;
            doc.validate()?;
            docs.insert(doc.did.clone(), doc);
        }
        Ok(Self {
            docs: RwLock::new(docs),
            dir: Some(dir),
        })
    }

    /// Registers a new document. Re-registering identical content is a no-op.
    pub fn register(&self, doc: DidDocument) -> Result<(), IdentityError> {
        doc.validate()?;
        let mut docs = self.docs.write().expect("registry lock poisoned");
        if let Some(existing) = docs.get(&doc.did) {
            if *existing == doc {
                return Ok(());
            }
            return Err(IdentityError::AlreadyRegistered(doc.did));
        }
        self.persist(&doc)?;
        docs.insert(doc.did.clone(), doc);
        Ok(())
    }

    /// Replaces a registered document with a strictly newer version.
    pub fn update(&self, doc: DidDocument) -> Result<(), IdentityError> {
        doc.validate()?;
        let mut docs = self.docs.write().expect("registry lock poisoned");
        let current = docs
            .get(&doc.did)
            .ok_or_else(|| IdentityError::NotFound(doc.did.clone()))?;
        if doc.version <= current.version {
            return Err(IdentityError::StaleVersion {
                did: doc.did.clone(),
                current: current.version,
                got: doc.version,
            });
        }
        self.persist(&doc)?;
        docs.insert(doc.did.clone(), doc);
        Ok(())
    }

    pub fn resolve(&self, did: &Did) -> Result<DidDocument, IdentityError> {
        self.docs
            .read()
            .expect("registry lock poisoned")
            .get(did)
            .cloned()
            .ok_or_else(|| IdentityError::NotFound(did.clone()))
    }

    pub fn dids(&self) -> Vec<Did> {
        self.docs
            .read()
            .expect("registry lock poisoned")
            .keys()
            .cloned()
            .collect()
    }

    fn persist(&self, doc: &DidDocument) -> Result<(), IdentityError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let name = format!("{}.json", doc.did.to_string().replace(':', "_"));
        crate::fsutil::write_atomic(&dir.join(name), &canon::to_canonical(doc)?)?;
        Ok(())
    }
}
