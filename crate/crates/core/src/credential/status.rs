//! Signed revocation status lists.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CredentialError, StatusRef, VerifiableCredential};
use crate::canon::{self, CanonError};
use crate::clock::Timestamp;
use crate::identity::{Did, DidDocument, KeyPair, PublicKey, Signature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListKind {
    Institutional,
    Derivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CredentialStatus {
    Valid,
    Revoked,
    /// Not listed on a derivative list. Short-lived credentials must be
    /// affirmatively listed to count as valid.
    RevokedUnknown,
}

impl CredentialStatus {
    pub fn is_valid(self) -> bool {
        self == CredentialStatus::Valid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusEntry {
    pub index: u64,
    pub revoked: bool,
}

#[derive(Serialize)]
struct ListBody<'a> {
    owner_did: &'a Did,
    owner_key: &'a PublicKey,
    list_kind: ListKind,
    locator: &'a str,
    entries: &'a BTreeMap<String, StatusEntry>,
    issued_at: Timestamp,
}

/// Owner-signed map from credential id to status. Entries only ever move
/// from valid to revoked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusList {
    pub owner_did: Did,
    pub owner_key: PublicKey,
    pub list_kind: ListKind,
    pub locator: String,
    pub entries: BTreeMap<String, StatusEntry>,
    pub issued_at: Timestamp,
    pub signature: Signature,
}

impl StatusList {
    pub fn new(
        owner_keys: &KeyPair,
        owner_did: &Did,
        list_kind: ListKind,
        locator: impl Into<String>,
        now: Timestamp,
    ) -> Result<Self, CredentialError> {
        if !owner_did.is_derived_from(&owner_keys.public_key()) {
            return Err(CredentialError::Unauthorized);
        }
        let mut list = StatusList {
            owner_did: owner_did.clone(),
            owner_key: owner_keys.public_key(),
            list_kind,
            locator: locator.into(),
            entries: BTreeMap::new(),
            issued_at: now,
            signature: Signature([0; 64]),
        };
        list.resign(owner_keys, now)?;
        Ok(list)
    }

    fn signing_message(&self) -> Result<Vec<u8>, CanonError> {
        let body = ListBody {
            owner_did: &self.owner_did,
            owner_key: &self.owner_key,
            list_kind: self.list_kind,
            locator: &self.locator,
            entries: &self.entries,
            issued_at: self.issued_at,
        };
        let mut msg = b"status-list".to_vec();
        msg.extend(canon::to_canonical(&body)?);
        Ok(msg)
    }

    fn resign(&mut self, keys: &KeyPair, now: Timestamp) -> Result<(), CredentialError> {
        self.issued_at = now;
        self.signature = keys.sign(&self.signing_message()?);
        Ok(())
    }

    fn authorize(&self, keys: &KeyPair) -> Result<(), CredentialError> {
        if keys.public_key() == self.owner_key && self.owner_did.is_derived_from(&self.owner_key) {
            Ok(())
        } else {
            Err(CredentialError::Unauthorized)
        }
    }

    /// Signature valid and the embedded key controls `owner_did`.
    pub fn verify_signature(&self) -> bool {
        self.owner_did.is_derived_from(&self.owner_key)
            && self
                .signing_message()
                .is_ok_and(|m| self.owner_key.verify(&m, &self.signature))
    }

    /// Reference for the next credential to be listed here.
    pub fn next_ref(&self) -> StatusRef {
        StatusRef {
            locator: self.locator.clone(),
            index: self.entries.values().map(|e| e.index + 1).max().unwrap_or(0),
        }
    }

    /// Lists `credential` as valid under its own status reference.
    pub fn register(
        &mut self,
        credential: &VerifiableCredential,
        owner_keys: &KeyPair,
        now: Timestamp,
    ) -> Result<(), CredentialError> {
        self.authorize(owner_keys)?;
        let id = credential.id();
        if credential.body.status_ref.locator != self.locator {
            return Err(CredentialError::WrongList(id.to_string()));
        }
        match self.entries.get(id) {
            Some(e) if e.revoked => return Err(CredentialError::AlreadyRevoked(id.to_string())),
            Some(_) => return Ok(()),
            None => {}
        }
        self.entries.insert(
            id.to_string(),
            StatusEntry {
                index: credential.body.status_ref.index,
                revoked: false,
            },
        );
        self.resign(owner_keys, now)
    }

    /// Recorded status of `credential_id`.
    pub fn status(&self, credential_id: &str) -> Result<CredentialStatus, CredentialError> {
        if !self.verify_signature() {
            return Err(CredentialError::BadListSig);
        }
        Ok(self.lookup(credential_id))
    }

    fn lookup(&self, credential_id: &str) -> CredentialStatus {
        match (self.entries.get(credential_id), self.list_kind) {
            (Some(e), _) if e.revoked => CredentialStatus::Revoked,
            (Some(_), _) => CredentialStatus::Valid,
            (None, ListKind::Institutional) => CredentialStatus::Valid,
            (None, ListKind::Derivative) => CredentialStatus::RevokedUnknown,
        }
    }

    /// Marks `credential_id` revoked and re-signs. Idempotent.
    pub fn revoke(
        &mut self,
        credential_id: &str,
        owner_keys: &KeyPair,
        now: Timestamp,
    ) -> Result<(), CredentialError> {
        self.authorize(owner_keys)?;
        let next = self.next_ref().index;
        self.entries
            .entry(credential_id.to_string())
            .and_modify(|e| e.revoked = true)
            .or_insert(StatusEntry {
                index: next,
                revoked: true,
            });
        self.resign(owner_keys, now)
    }

    /// A signed single-entry snippet for stapling to a presentation.
    pub fn staple(
        &self,
        credential_id: &str,
        owner_keys: &KeyPair,
        now: Timestamp,
    ) -> Result<super::StapledStatus, CredentialError> {
        self.authorize(owner_keys)?;
        let snippet = StatusSnippet {
            owner_did: self.owner_did.clone(),
            list_kind: self.list_kind,
            locator: self.locator.clone(),
            credential_id: credential_id.to_string(),
            status: self.lookup(credential_id),
            issued_at: now,
        };
        let signature = owner_keys.sign(&snippet.signing_message()?);
        Ok(super::StapledStatus { snippet, signature })
    }
}

/// One list entry as of `issued_at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSnippet {
    pub owner_did: Did,
    pub list_kind: ListKind,
    pub locator: String,
    pub credential_id: String,
    pub status: CredentialStatus,
    pub issued_at: Timestamp,
}

impl StatusSnippet {
    pub fn signing_message(&self) -> Result<Vec<u8>, CanonError> {
        let mut msg = b"status".to_vec();
        msg.extend(canon::to_canonical(self)?);
        Ok(msg)
    }

    pub fn verify(&self, owner_doc: &DidDocument, sig: &Signature) -> bool {
        owner_doc.did == self.owner_did
            && self
                .signing_message()
                .is_ok_and(|m| owner_doc.verify(&m, sig))
    }
}
