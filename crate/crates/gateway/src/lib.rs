//! Deployable surface for ler-core: file-backed issuer, holder and verifier
//! nodes, their HTTP endpoints, and the `ler` command-line tool.

pub mod cli;
pub mod config;
pub mod node;
pub mod service;
pub mod store;

use ler_core::canon::CanonError;
use ler_core::credential::{CredentialError, RejectReason};
use ler_core::enclave::EnclaveError;
use ler_core::identity::IdentityError;
use ler_core::matching::MatchError;
use ler_core::protocol::ProtocolError;
use ler_core::skills::SkillsError;
use thiserror::Error;

pub use config::Config;
pub use node::{HolderNode, IssuerNode, Layout, VerifierNode};
pub use store::{PendingRequest, WalletState, WalletStore};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("config: {0}")]
    Config(String),
    #[error("wallet store: {0}")]
    Store(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("not permitted: {0}")]
    NotPermitted(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("presentation rejected: {0:?}")]
    Rejected(RejectReason),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Protocol(ProtocolError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error(transparent)]
    Enclave(#[from] EnclaveError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Skills(#[from] SkillsError),
    #[error(transparent)]
    Canon(#[from] CanonError),
}

impl From<ProtocolError> for GatewayError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Rejected(r) => GatewayError::Rejected(r),
            other => GatewayError::Protocol(other),
        }
    }
}

impl From<RejectReason> for GatewayError {
    fn from(r: RejectReason) -> Self {
        GatewayError::Rejected(r)
    }
}

impl GatewayError {
    /// True when the caller, not the node, is at fault.
    pub fn is_client_error(&self) -> bool {
        matches!(
            self,
            GatewayError::Malformed(_)
                | GatewayError::NotFound(_)
                | GatewayError::NotPermitted(_)
                | GatewayError::Conflict(_)
                | GatewayError::Rejected(_)
        )
    }
}
