//! Holder wallet persistence: credentials, disclosure policies, pending
//! verifier requests and the presentations built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use ler_core::canon;
use ler_core::clock::Timestamp;
use ler_core::credential::{StapledStatus, VerifiablePresentation};
use ler_core::fsutil::write_atomic;
use ler_core::protocol::{Challenge, Wallet};
use serde::{Deserialize, Serialize};

use crate::GatewayError;

/// A verifier challenge waiting for the holder's decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub request_id: String,
    pub challenge: Challenge,
    pub received_at: Timestamp,
    /// Credential the request will be answered from.
    pub credential_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WalletState {
    pub wallet: Wallet,
    /// Latest issuer-stapled status per institutional credential.
    #[serde(default)]
    pub staples: BTreeMap<String, StapledStatus>,
    #[serde(default)]
    pub pending: BTreeMap<String, PendingRequest>,
    /// Approved presentations by request id.
    #[serde(default)]
    pub presentations: BTreeMap<String, VerifiablePresentation>,
    #[serde(default)]
    pub denied: BTreeSet<String>,
}

/// File-backed wallet. Every mutation rewrites the file atomically.
#[derive(Debug)]
pub struct WalletStore {
    path: PathBuf,
    state: Mutex<WalletState>,
}

impl WalletStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let state = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| GatewayError::Store(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => WalletState::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            path,
            state: Mutex::new(state),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn snapshot(&self) -> WalletState {
        self.state.lock().expect("wallet lock").clone()
    }

    /// Applies `f` and persists the result. On error nothing is written and
    /// the in-memory state is left as it was.
    pub fn update<T>(
        &self,
        f: impl FnOnce(&mut WalletState) -> Result<T, GatewayError>,
    ) -> Result<T, GatewayError> {
        let mut guard = self.state.lock().expect("wallet lock");
        let mut next = guard.clone();
        let out = f(&mut next)?;
        write_atomic(&self.path, &canon::to_canonical(&next)?)?;
        *guard = next;
        Ok(out)
    }

    pub fn to_canonical(&self) -> Result<Vec<u8>, GatewayError> {
        Ok(canon::to_canonical(&*self.state.lock().expect("wallet lock"))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ler_core::credential::DisclosurePolicy;

    #[test]
    fn reload_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = WalletStore::open(dir.path().join("wallet.json")).unwrap();
        store
            .update(|s| {
                s.wallet
                    .policies
                    .insert("institutional".into(), DisclosurePolicy::deny_by_default("p", ["grade"], vec![]));
                s.denied.insert("r1".into());
                Ok(())
            })
            .unwrap();
        let again = WalletStore::open(store.path()).unwrap();
        assert_eq!(again.to_canonical().unwrap(), store.to_canonical().unwrap());
        assert_eq!(fs::read(store.path()).unwrap(), store.to_canonical().unwrap());
    }

    #[test]
    fn failed_update_changes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let store = WalletStore::open(dir.path().join("wallet.json")).unwrap();
        let r: Result<(), _> = store.update(|s| {
            s.denied.insert("x".into());
            Err(GatewayError::NotFound("x".into()))
        });
        assert!(r.is_err());
        assert!(store.snapshot().denied.is_empty());
        assert!(!store.path().exists());
    }
}
