//! Verifiable credentials with salted per-claim digest commitments.
//!
//! The issuer signs the credential body, in which each claim is replaced by
//! `H(salt ∥ len(key) ∥ key ∥ canon(value))`. Holders later reveal any
//! subset of claims together with their salts.

mod dispute;
mod presentation;
mod status;

use std::collections::BTreeSet;
use std::fmt;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::{self, hex_bytes, CanonError, Digest};
use crate::clock::Timestamp;
use crate::enclave::{EnclaveError, Provenance};
use crate::identity::{Did, DidDocument, KeyPair, Signature};

pub use dispute::{reissue_on_dispute, DisputeContext};
pub use presentation::{
    present, verify, Comparator, DisclosurePolicy, PredicateResult,
    PresentationRequest, Predicate, StapledStatus, VerifiablePresentation, VerifiedPresentation,
};
pub use status::{CredentialStatus, ListKind, StatusEntry, StatusList, StatusSnippet};

pub const SALT_LEN: usize = 16;

/// Claim value. Integers and reals are kept apart so that `3` and `3.0`
/// commit to different digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClaimValue {
    Integer(i64),
    Real(f64),
    Text(String),
}

impl ClaimValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ClaimValue::Integer(i) => Some(*i as f64),
            ClaimValue::Real(r) => Some(*r),
            ClaimValue::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ClaimValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ClaimValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaimValue::Integer(i) => write!(f, "{i}"),
            ClaimValue::Real(r) => write!(f, "{r}"),
            ClaimValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<&str> for ClaimValue {
    fn from(s: &str) -> Self {
        ClaimValue::Text(s.to_string())
    }
}

impl From<String> for ClaimValue {
    fn from(s: String) -> Self {
        ClaimValue::Text(s)
    }
}

impl From<i64> for ClaimValue {
    fn from(i: i64) -> Self {
        ClaimValue::Integer(i)
    }
}

impl From<f64> for ClaimValue {
    fn from(r: f64) -> Self {
        ClaimValue::Real(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub key: String,
    pub value: ClaimValue,
    #[serde(with = "hex_bytes")]
    pub salt: [u8; SALT_LEN],
}

impl Claim {
    pub fn digest(&self) -> Result<Digest, CanonError> {
        claim_digest(&self.salt, &self.key, &self.value)
    }
}

/// `H(salt ∥ u32be(|key|) ∥ key ∥ canon(value))`. The length prefix keeps
/// the key/value boundary unambiguous.
pub fn claim_digest(salt: &[u8; SALT_LEN], key: &str, value: &ClaimValue) -> Result<Digest, CanonError> {
    let value = canon::to_canonical(value)?;
    let key_len = (key.len() as u32).to_be_bytes();
    Ok(canon::sha256_concat(&[salt, &key_len, key.as_bytes(), &value]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CredentialClass {
    Institutional,
    SelfIssued,
    Derivative,
}

impl fmt::Display for CredentialClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CredentialClass::Institutional => "institutional",
            CredentialClass::SelfIssued => "self_issued",
            CredentialClass::Derivative => "derivative",
        })
    }
}

/// Where the credential's revocation entry lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusRef {
    pub locator: String,
    pub index: u64,
}

/// Everything the issuer signs. Claims appear only as digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredentialBody {
    pub id: String,
    pub credential_class: CredentialClass,
    pub issuer_did: Did,
    pub subject_did: Did,
    pub claim_digests: Vec<Digest>,
    pub issued_at: Timestamp,
    pub expires_at: Option<Timestamp>,
    pub status_ref: StatusRef,
    pub provenance: Option<Provenance>,
}

impl CredentialBody {
    pub fn signing_message(&self) -> Result<Vec<u8>, CanonError> {
        let mut msg = b"vc".to_vec();
        msg.extend(canon::to_canonical(self)?);
        Ok(msg)
    }

    pub fn verify_signature(&self, issuer_doc: &DidDocument, sig: &Signature) -> bool {
        issuer_doc.did == self.issuer_did
            && self
                .signing_message()
                .is_ok_and(|msg| issuer_doc.verify(&msg, sig))
    }

    pub fn is_expired(&self, now: Timestamp) -> bool {
        self.expires_at.is_some_and(|e| now > e)
    }

    /// Class/provenance pairing: derivative iff provenance is present.
    pub fn class_consistent(&self) -> bool {
        match self.credential_class {
            CredentialClass::Derivative => self.provenance.is_some(),
            CredentialClass::Institutional => self.provenance.is_none(),
            CredentialClass::SelfIssued => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiableCredential {
    #[serde(flatten)]
    pub body: CredentialBody,
    pub claims: Vec<Claim>,
    pub signature: Signature,
}

impl VerifiableCredential {
    pub fn id(&self) -> &str {
        &self.body.id
    }

    pub fn class(&self) -> CredentialClass {
        self.body.credential_class
    }

    pub fn claim(&self, key: &str) -> Option<&Claim> {
        self.claims.iter().find(|c| c.key == key)
    }

    /// Signature, digest binding and class invariants; expiry and status are
    /// left to the caller.
    pub fn verify(&self, issuer_doc: &DidDocument) -> Result<(), RejectReason> {
        if !self.body.verify_signature(issuer_doc, &self.signature) {
            return Err(RejectReason::BadIssuerSig);
        }
        if !self.body.class_consistent() {
            return Err(RejectReason::ProvenanceMismatch);
        }
        if self.claims.len() != self.body.claim_digests.len() {
            return Err(RejectReason::DigestMismatch);
        }
        for (claim, digest) in self.claims.iter().zip(&self.body.claim_digests) {
            if claim.digest().ok().as_ref() != Some(digest) {
                return Err(RejectReason::DigestMismatch);
            }
        }
        Ok(())
    }
}

/// Inputs to [`issue`] other than the issuer's own keys.
#[derive(Debug, Clone)]
pub struct IssueRequest {
    pub subject_did: Did,
    pub claims: Vec<(String, ClaimValue)>,
    pub class: CredentialClass,
    pub provenance: Option<Provenance>,
    /// Seconds until expiry; `None` never expires.
    pub lifetime: Option<u64>,
    pub status_ref: StatusRef,
}

#[derive(Debug, Error)]
pub enum CredentialError {
    #[error("derivative credential requires provenance")]
    MissingProvenance,
    #[error("provenance is only allowed on derivative credentials")]
    UnexpectedProvenance,
    #[error("credential has no claims")]
    EmptyClaims,
    #[error("duplicate claim key {0:?}")]
    DuplicateClaimKey(String),
    #[error("issuer keys do not match issuer DID")]
    IssuerKeyMismatch,
    #[error("credential expired")]
    Expired,
    #[error("nothing permitted to reveal")]
    EmptyDisclosure,
    #[error("status list signature does not verify")]
    BadListSig,
    #[error("keys do not control the status list")]
    Unauthorized,
    #[error("credential {0} is revoked and cannot return to valid")]
    AlreadyRevoked(String),
    #[error("credential is not derivative")]
    NotDerivative,
    #[error("status entry for {0} is not in this list")]
    WrongList(String),
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error(transparent)]
    Enclave(#[from] Box<EnclaveError>),
}

impl From<EnclaveError> for CredentialError {
    fn from(e: EnclaveError) -> Self {
        CredentialError::Enclave(Box::new(e))
    }
}

/// Why a verifier rejected a presentation. Each acceptance check has its own
/// reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Error)]
pub enum RejectReason {
    #[error("issuer signature invalid")]
    BadIssuerSig,
    #[error("holder signature invalid")]
    BadHolderSig,
    #[error("revealed claim digest not in signed list")]
    DigestMismatch,
    #[error("stapled status older than the freshness window")]
    StaleStatus,
    #[error("stapled status signature invalid")]
    BadStatusSig,
    #[error("credential revoked")]
    Revoked,
    #[error("nonce does not match an outstanding challenge")]
    BadNonce,
    #[error("attestation signature invalid")]
    BadAttestation,
    #[error("enclave measurement not allowlisted")]
    MeasurementNotAllowlisted,
    #[error("policy digest mismatch")]
    PolicyMismatch,
    #[error("attestation too old")]
    StaleAttestation,
    #[error("derivative credential presented without attestation")]
    MissingAttestation,
    #[error("provenance does not match attestation")]
    ProvenanceMismatch,
    #[error("credential expired")]
    Expired,
}

/// Issues a credential with fresh salts and id from the OS generator.
pub fn issue(
    issuer_keys: &KeyPair,
    issuer_did: &Did,
    request: IssueRequest,
    now: Timestamp,
) -> Result<VerifiableCredential, CredentialError> {
    issue_with_rng(issuer_keys, issuer_did, request, now, &mut rand::rngs::OsRng)
}

pub fn issue_with_rng<R: RngCore + CryptoRng>(
    issuer_keys: &KeyPair,
    issuer_did: &Did,
    request: IssueRequest,
    now: Timestamp,
    rng: &mut R,
) -> Result<VerifiableCredential, CredentialError> {
    match (request.class, &request.provenance) {
        (CredentialClass::Derivative, None) => return Err(CredentialError::MissingProvenance),
        (CredentialClass::Institutional, Some(_)) => {
            return Err(CredentialError::UnexpectedProvenance)
        }
        _ => {}
    }
    if request.claims.is_empty() {
        return Err(CredentialError::EmptyClaims);
    }
    if !issuer_did.is_derived_from(&issuer_keys.public_key()) {
        return Err(CredentialError::IssuerKeyMismatch);
    }
    let mut seen = BTreeSet::new();
    for (k, _) in &request.claims {
        if !seen.insert(k.as_str()) {
            return Err(CredentialError::DuplicateClaimKey(k.clone()));
        }
    }

    let claims: Vec<Claim> = request
        .claims
        .into_iter()
        .map(|(key, value)| {
            let mut salt = [0u8; SALT_LEN];
            rng.fill_bytes(&mut salt);
            Claim { key, value, salt }
        })
        .collect();
    let claim_digests = claims
        .iter()
        .map(Claim::digest)
        .collect::<Result<Vec<_>, _>>()?;

    let body = CredentialBody {
        id: random_id(rng),
        credential_class: request.class,
        issuer_did: issuer_did.clone(),
        subject_did: request.subject_did,
        claim_digests,
        issued_at: now,
        expires_at: request.lifetime.map(|l| now.saturating_add(l)),
        status_ref: request.status_ref,
        provenance: request.provenance,
    };
    let signature = issuer_keys.sign(&body.signing_message()?);
    Ok(VerifiableCredential {
        body,
        claims,
        signature,
    })
}

/// A `urn:uuid:` identifier drawn from `rng`.
pub fn random_id<R: RngCore>(rng: &mut R) -> String {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    format!("urn:uuid:{}", uuid::Builder::from_random_bytes(bytes).into_uuid())
}
